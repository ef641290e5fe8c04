use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::hilbert::spectral::AxisFft;
use crate::hilbert::{DensityMatrix, GridSpec, Hamiltonian, StateVector, C64};

/// Largest dimension propagated through a dense eigendecomposition.
pub const EIGEN_MAX_DIM: usize = 4096;
/// Largest split-step substep.
pub const SPLIT_STEP_DT: f64 = 0.005;

/// `exp(-i H t)` in the cheapest exact form available for `H`.
#[derive(Debug, Clone)]
pub enum Propagator {
    /// `H = 0`.
    Identity,
    /// Potential only: pointwise phases.
    Diagonal { potential: Vec<f64> },
    /// Kinetic only: phases on Fourier modes.
    Free { fft: AxisFft, spectrum: Vec<f64> },
    /// Dense real symmetric eigendecomposition `H = V E V^T`.
    Eigen { vectors: DMatrix<f64>, values: Vec<f64> },
    /// Strang splitting for grids too large to diagonalize.
    SplitStep { fft: AxisFft, spectrum: Vec<f64>, potential: Vec<f64>, max_dt: f64 },
}

fn phase(e: f64, t: f64) -> C64 {
    C64::from_polar(1.0, -e * t)
}

impl Propagator {
    pub fn new(h: &Hamiltonian) -> Self {
        if h.is_zero() {
            Propagator::Identity
        } else if !h.has_kinetic() {
            Propagator::Diagonal { potential: h.potential().to_vec() }
        } else if !h.has_potential() {
            Propagator::Free { fft: h.fft().clone(), spectrum: h.kinetic_spectrum().to_vec() }
        } else if h.dim() <= EIGEN_MAX_DIM {
            let eig = SymmetricEigen::new(h.dense_real());
            Propagator::Eigen { vectors: eig.eigenvectors, values: eig.eigenvalues.iter().copied().collect() }
        } else {
            Propagator::SplitStep {
                fft: h.fft().clone(),
                spectrum: h.kinetic_spectrum().to_vec(),
                potential: h.potential().to_vec(),
                max_dt: SPLIT_STEP_DT,
            }
        }
    }

    /// Forces a split-step propagator, for comparison against the exact forms.
    pub fn split_step(h: &Hamiltonian, max_dt: f64) -> Self {
        let spectrum = if h.has_kinetic() { h.kinetic_spectrum().to_vec() } else { vec![0.0; h.dim()] };
        Propagator::SplitStep { fft: h.fft().clone(), spectrum, potential: h.potential().to_vec(), max_dt }
    }

    pub fn is_identity(&self) -> bool {
        matches!(self, Propagator::Identity)
    }

    /// Applies `exp(-i H t)` in place.
    pub fn apply(&self, amps: &mut [C64], t: f64) {
        if t == 0.0 {
            return;
        }
        match self {
            Propagator::Identity => {}
            Propagator::Diagonal { potential } => {
                amps.iter_mut().zip(potential).for_each(|(c, v)| *c *= phase(*v, t));
            }
            Propagator::Free { fft, spectrum } => {
                fft.forward(amps);
                amps.iter_mut().zip(spectrum).for_each(|(c, e)| *c *= phase(*e, t));
                fft.inverse(amps);
            }
            Propagator::Eigen { vectors, values } => {
                let d = amps.len();
                let re = DVector::from_iterator(d, amps.iter().map(|c| c.re));
                let im = DVector::from_iterator(d, amps.iter().map(|c| c.im));
                let cr = vectors.tr_mul(&re);
                let ci = vectors.tr_mul(&im);
                let mut pr = DVector::zeros(d);
                let mut pi = DVector::zeros(d);
                for k in 0..d {
                    let c = C64::new(cr[k], ci[k]) * phase(values[k], t);
                    pr[k] = c.re;
                    pi[k] = c.im;
                }
                let out_r = vectors * pr;
                let out_i = vectors * pi;
                for (k, c) in amps.iter_mut().enumerate() {
                    *c = C64::new(out_r[k], out_i[k]);
                }
            }
            Propagator::SplitStep { fft, spectrum, potential, max_dt } => {
                let n = (t.abs() / max_dt).ceil().max(1.0) as usize;
                let h = t / n as f64;
                let half: Vec<C64> = potential.iter().map(|v| phase(*v, 0.5 * h)).collect();
                let kin: Vec<C64> = spectrum.iter().map(|e| phase(*e, h)).collect();
                for _ in 0..n {
                    amps.iter_mut().zip(&half).for_each(|(c, p)| *c *= p);
                    fft.forward(amps);
                    amps.iter_mut().zip(&kin).for_each(|(c, p)| *c *= p);
                    fft.inverse(amps);
                    amps.iter_mut().zip(&half).for_each(|(c, p)| *c *= p);
                }
            }
        }
    }

    pub fn evolve(&self, psi: &StateVector, t: f64) -> StateVector {
        let mut amps = psi.amplitudes().to_vec();
        self.apply(&mut amps, t);
        let mut out = StateVector::from_unit(psi.grid_arc(), amps);
        out.renormalize();
        out
    }

    /// `U rho U^dagger` for a Hermitian `rho`, via `U (U rho)^dagger`.
    pub fn conjugate(&self, rho: &DMatrix<C64>, t: f64) -> DMatrix<C64> {
        if t == 0.0 || self.is_identity() {
            return rho.clone();
        }
        let mut a = rho.clone();
        self.apply_columns(&mut a, t);
        let mut b = a.adjoint();
        self.apply_columns(&mut b, t);
        b
    }

    pub fn apply_columns(&self, m: &mut DMatrix<C64>, t: f64) {
        let d = m.nrows();
        for mut col in m.column_iter_mut() {
            let mut buf: Vec<C64> = col.iter().copied().collect();
            self.apply(&mut buf, t);
            for k in 0..d {
                col[k] = buf[k];
            }
        }
    }

    pub fn evolve_density(&self, rho: &DensityMatrix, t: f64) -> DensityMatrix {
        let mut m = self.conjugate(rho.matrix(), t);
        let m2 = (&m + m.adjoint()) * C64::new(0.5, 0.0);
        m = m2;
        let mut out = DensityMatrix::from_raw(rho.grid_arc(), m);
        out.renormalize_trace();
        out
    }

    /// Dense `exp(-i H t)`.
    pub fn unitary(&self, dim: usize, t: f64) -> DMatrix<C64> {
        let mut u = DMatrix::<C64>::identity(dim, dim);
        self.apply_columns(&mut u, t);
        u
    }
}

/// Either representation of a quantum state.
#[derive(Debug, Clone, PartialEq)]
pub enum QuantumState {
    Pure(StateVector),
    Mixed(DensityMatrix),
}

impl QuantumState {
    pub fn grid(&self) -> &GridSpec {
        match self {
            QuantumState::Pure(p) => p.grid(),
            QuantumState::Mixed(r) => r.grid(),
        }
    }

    pub fn grid_arc(&self) -> Arc<GridSpec> {
        match self {
            QuantumState::Pure(p) => p.grid_arc(),
            QuantumState::Mixed(r) => r.grid_arc(),
        }
    }

    pub fn density_matrix(&self) -> DensityMatrix {
        match self {
            QuantumState::Pure(p) => DensityMatrix::pure(p),
            QuantumState::Mixed(r) => r.clone(),
        }
    }

    /// `<q|state|q>` for every configuration.
    pub fn diagonal(&self) -> Vec<f64> {
        match self {
            QuantumState::Pure(p) => p.probabilities(),
            QuantumState::Mixed(r) => r.diagonal(),
        }
    }
}

/// `exp(-i H dt)` applied to a pure or mixed state.
pub fn schrodinger_propagate(state: &QuantumState, h: &Hamiltonian, dt: f64) -> Result<QuantumState> {
    if !(dt.is_finite() && dt >= 0.0) {
        return Err(Error::bad(format!("dt must be non-negative, got {dt}")));
    }
    if state.grid() != h.grid() {
        return Err(Error::bad("state and Hamiltonian live on different grids"));
    }
    let p = Propagator::new(h);
    Ok(match state {
        QuantumState::Pure(psi) => QuantumState::Pure(p.evolve(psi, dt)),
        QuantumState::Mixed(rho) => QuantumState::Mixed(p.evolve_density(rho, dt)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    fn ring(l: usize, a: f64) -> Arc<GridSpec> {
        Arc::new(GridSpec::build(1, 1, l, a, vec![1.0]).unwrap())
    }

    #[test]
    fn zero_time_is_identity() {
        let g = Arc::new(GridSpec::build(2, 1, 4, 1.0, vec![1.0, 1.0]).unwrap());
        let h = Hamiltonian::new(g.clone(), |x| x[0] * x[1]).unwrap();
        let psi = StateVector::random(g, &mut stream(1, 0));
        let out = schrodinger_propagate(&QuantumState::Pure(psi.clone()), &h, 0.0).unwrap();
        assert_eq!(out, QuantumState::Pure(psi));
    }

    #[test]
    fn eigenstates_pick_up_a_phase() {
        let g = ring(16, 0.5);
        let h = Hamiltonian::new(g.clone(), |x| (x[0]).cos()).unwrap();
        let eig = SymmetricEigen::new(h.dense_real());
        let v: Vec<f64> = eig.eigenvectors.column(3).iter().copied().collect();
        let psi = StateVector::from_real(g, &v).unwrap();
        let out = Propagator::new(&h).evolve(&psi, 1.7);
        assert!((psi.inner(&out).norm() - 1.0).abs() < 1e-10);
        let expect = C64::from_polar(1.0, -eig.eigenvalues[3] * 1.7);
        assert!((psi.inner(&out) - expect).norm() < 1e-10);
    }

    #[test]
    fn all_forms_agree() {
        let g = Arc::new(GridSpec::build(2, 1, 8, 0.5, vec![1.0, 2.0]).unwrap());
        let h = Hamiltonian::new(g.clone(), |x| 0.3 * (x[0] - x[1]).cos()).unwrap();
        let psi = StateVector::random(g.clone(), &mut stream(2, 0));
        let exact = Propagator::new(&h).evolve(&psi, 0.8);
        assert!(matches!(Propagator::new(&h), Propagator::Eigen { .. }));
        let split = Propagator::split_step(&h, 0.0005).evolve(&psi, 0.8);
        assert!((exact.inner(&split).norm() - 1.0).abs() < 1e-6);

        let free = Hamiltonian::free(g.clone());
        let fast = Propagator::new(&free).evolve(&psi, 0.8);
        let eig = SymmetricEigen::new(free.dense_real());
        let dense = Propagator::Eigen { vectors: eig.eigenvectors, values: eig.eigenvalues.iter().copied().collect() };
        let slow = dense.evolve(&psi, 0.8);
        for (a, b) in fast.amplitudes().iter().zip(slow.amplitudes()) {
            assert!((a - b).norm() < 1e-10);
        }

        let pot = Hamiltonian::from_values(g.clone(), (0..64).map(|q| q as f64 * 0.1).collect(), false).unwrap();
        let out = Propagator::new(&pot).evolve(&psi, 2.0);
        for (q, (a, b)) in out.amplitudes().iter().zip(psi.amplitudes()).enumerate() {
            assert!((a - b * phase(q as f64 * 0.1, 2.0)).norm() < 1e-12);
        }
    }

    #[test]
    fn free_packet_spreads_like_the_continuum() {
        let g = ring(128, 0.25);
        let w0 = 0.8;
        let center = 16.0;
        let psi = StateVector::gaussian_packet(g.clone(), &[center], &[w0], &[0.0]).unwrap();
        let p = Propagator::new(&Hamiltonian::free(g.clone()));
        for &t in &[1.0, 2.0, 4.0] {
            let out = p.evolve(&psi, t);
            let probs = out.probabilities();
            let var: f64 = probs
                .iter()
                .enumerate()
                .map(|(n, pr)| {
                    let dx = g.min_image(n as f64 * 0.25, center);
                    pr * dx * dx
                })
                .sum();
            let expect = w0 * w0 + (t / (2.0 * w0)).powi(2);
            assert!(((var - expect) / expect).abs() < 1e-3, "t={t}: {var} vs {expect}");
        }
    }

    #[test]
    fn density_conjugation_matches_pure_evolution() {
        let g = Arc::new(GridSpec::build(2, 1, 4, 1.0, vec![1.0, 1.0]).unwrap());
        let h = Hamiltonian::new(g.clone(), |x| x[0] - 0.5 * x[1]).unwrap();
        let psi = StateVector::random(g.clone(), &mut stream(3, 0));
        let rho = DensityMatrix::pure(&psi);
        let a = schrodinger_propagate(&QuantumState::Mixed(rho), &h, 1.3).unwrap();
        let b = schrodinger_propagate(&QuantumState::Pure(psi), &h, 1.3).unwrap();
        let (QuantumState::Mixed(a), QuantumState::Pure(b)) = (a, b) else { panic!() };
        assert!((a.matrix() - DensityMatrix::pure(&b).matrix()).camax() < 1e-10);
    }

    #[test]
    fn negative_time_step_is_rejected() {
        let g = ring(4, 1.0);
        let psi = StateVector::random(g.clone(), &mut stream(0, 0));
        assert!(schrodinger_propagate(&QuantumState::Pure(psi), &Hamiltonian::free(g), -1.0).is_err());
    }
}
