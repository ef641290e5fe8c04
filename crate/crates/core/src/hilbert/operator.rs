use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::grid::GridSpec;
use super::spectral::{kinetic_spectrum, wave_numbers, AxisFft};
use super::state::{StateVector, C64};
use crate::error::{Error, Result};

/// `H = sum_k -(1/2 m_k) Laplacian_k + V` with a spectral Laplacian (hbar = 1).
///
/// `kinetic = false` drops the Laplacian entirely, leaving a pure potential
/// (or zero) Hamiltonian.
#[derive(Debug, Clone)]
pub struct Hamiltonian {
    grid: Arc<GridSpec>,
    potential: Vec<f64>,
    kinetic: bool,
    spectrum: Vec<f64>,
    fft: AxisFft,
}

impl Hamiltonian {
    fn assemble(grid: Arc<GridSpec>, potential: Vec<f64>, kinetic: bool) -> Result<Self> {
        if potential.len() != grid.dim() {
            return Err(Error::bad("potential length does not match the grid"));
        }
        if let Some(q) = potential.iter().position(|v| !v.is_finite()) {
            return Err(Error::bad(format!("potential is not finite at configuration {q}")));
        }
        let spectrum = if kinetic { kinetic_spectrum(&grid) } else { Vec::new() };
        let fft = AxisFft::new(&grid);
        Ok(Hamiltonian { grid, potential, kinetic, spectrum, fft })
    }

    /// Kinetic term plus `V` evaluated at every lattice configuration.
    pub fn new(grid: Arc<GridSpec>, potential: impl Fn(&[f64]) -> f64) -> Result<Self> {
        let v = (0..grid.dim()).map(|q| potential(&grid.config_position(q))).collect();
        Self::assemble(grid, v, true)
    }

    pub fn from_values(grid: Arc<GridSpec>, potential: Vec<f64>, kinetic: bool) -> Result<Self> {
        Self::assemble(grid, potential, kinetic)
    }

    pub fn free(grid: Arc<GridSpec>) -> Self {
        let d = grid.dim();
        Self::assemble(grid, vec![0.0; d], true).expect("zero potential is valid")
    }

    /// `H = 0`.
    pub fn zero(grid: Arc<GridSpec>) -> Self {
        let d = grid.dim();
        Self::assemble(grid, vec![0.0; d], false).expect("zero potential is valid")
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn grid_arc(&self) -> Arc<GridSpec> {
        self.grid.clone()
    }

    pub fn dim(&self) -> usize {
        self.potential.len()
    }

    pub fn potential(&self) -> &[f64] {
        &self.potential
    }

    pub fn has_kinetic(&self) -> bool {
        self.kinetic
    }

    /// Kinetic energy of every Fourier mode; empty without a kinetic term.
    pub fn kinetic_spectrum(&self) -> &[f64] {
        &self.spectrum
    }

    pub fn fft(&self) -> &AxisFft {
        &self.fft
    }

    pub fn is_zero(&self) -> bool {
        !self.kinetic && self.potential.iter().all(|&v| v == 0.0)
    }

    pub fn has_potential(&self) -> bool {
        self.potential.iter().any(|&v| v != 0.0)
    }

    /// `H + c`.
    pub fn shifted(&self, c: f64) -> Self {
        let mut h = self.clone();
        h.potential.iter_mut().for_each(|v| *v += c);
        h
    }

    pub fn apply(&self, psi: &[C64]) -> Vec<C64> {
        let mut out: Vec<C64> = psi.iter().zip(&self.potential).map(|(c, v)| c * v).collect();
        if self.kinetic {
            let mut hat = psi.to_vec();
            self.fft.forward(&mut hat);
            hat.iter_mut().zip(&self.spectrum).for_each(|(c, e)| *c *= e);
            self.fft.inverse(&mut hat);
            out.iter_mut().zip(hat).for_each(|(o, t)| *o += t);
        }
        out
    }

    /// Dense real symmetric matrix of `H`.
    pub fn dense_real(&self) -> DMatrix<f64> {
        let g = &self.grid;
        let d = g.dim();
        let l = g.points_per_dim();
        let mut h = DMatrix::<f64>::zeros(d, d);
        for q in 0..d {
            h[(q, q)] = self.potential[q];
        }
        if !self.kinetic {
            return h;
        }
        let k = wave_numbers(l, g.spacing());
        // 1-D kinetic kernel for unit mass, indexed by offset.
        let t1: Vec<f64> = (0..l)
            .map(|n| {
                k.iter().map(|kj| 0.5 * kj * kj * (kj * n as f64 * g.spacing()).cos()).sum::<f64>() / l as f64
            })
            .collect();
        let m_axes = g.n_axes();
        for q in 0..d {
            for ax in 0..m_axes {
                let stride = l.pow((m_axes - 1 - ax) as u32);
                let n = (q / stride) % l;
                let inv_m = 1.0 / g.masses()[g.particle_of_axis(ax)];
                for n2 in 0..l {
                    let q2 = q - n * stride + n2 * stride;
                    h[(q, q2)] += inv_m * t1[(n + l - n2) % l];
                }
            }
        }
        h
    }
}

/// Linear operator on the grid Hilbert space.
#[derive(Debug, Clone)]
pub enum LinOp {
    Dense(DMatrix<C64>),
    /// Multiplication by a real function of the configuration.
    Diagonal(Vec<f64>),
    Hamiltonian(Hamiltonian),
}

impl LinOp {
    pub fn dim(&self) -> usize {
        match self {
            LinOp::Dense(m) => m.nrows(),
            LinOp::Diagonal(d) => d.len(),
            LinOp::Hamiltonian(h) => h.dim(),
        }
    }

    pub fn apply(&self, psi: &[C64]) -> Vec<C64> {
        match self {
            LinOp::Dense(m) => {
                let v = nalgebra::DVector::from_column_slice(psi);
                (m * v).iter().copied().collect()
            }
            LinOp::Diagonal(d) => psi.iter().zip(d).map(|(c, x)| c * x).collect(),
            LinOp::Hamiltonian(h) => h.apply(psi),
        }
    }

    pub fn to_dense(&self) -> DMatrix<C64> {
        match self {
            LinOp::Dense(m) => m.clone(),
            LinOp::Diagonal(d) => DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
                d.len(),
                d.iter().map(|&x| C64::new(x, 0.0)),
            )),
            LinOp::Hamiltonian(h) => h.dense_real().map(|x| C64::new(x, 0.0)),
        }
    }

    /// `<psi|A|psi>`.
    pub fn expectation(&self, psi: &StateVector) -> C64 {
        let a = self.apply(psi.amplitudes());
        psi.amplitudes().iter().zip(&a).map(|(c, x)| c.conj() * x).sum()
    }
}

/// Builds `H` from a potential evaluated at lattice positions (`N d` coordinates).
pub fn build_hamiltonian(grid: Arc<GridSpec>, potential: impl Fn(&[f64]) -> f64) -> Result<LinOp> {
    Ok(LinOp::Hamiltonian(Hamiltonian::new(grid, potential)?))
}

/// Per-particle weights for a density operator: masses or charges.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DensityWeight {
    #[default]
    Mass,
    Charge,
}

pub(crate) fn density_weights(grid: &GridSpec, kind: DensityWeight) -> Result<Vec<f64>> {
    match kind {
        DensityWeight::Mass => Ok(grid.masses().to_vec()),
        DensityWeight::Charge => grid
            .charges()
            .map(<[f64]>::to_vec)
            .ok_or_else(|| Error::bad("charge density requested on a grid without charges")),
    }
}

/// `M(x) = sum_i m_i 1[q_i = x] / a^d`, diagonal in position.
pub fn mass_density_operator(grid: &GridSpec, x: usize) -> Result<LinOp> {
    density_operator(grid, x, DensityWeight::Mass)
}

pub fn density_operator(grid: &GridSpec, x: usize, kind: DensityWeight) -> Result<LinOp> {
    if x >= grid.sites() {
        return Err(Error::bad(format!("site {x} out of range")));
    }
    let w = density_weights(grid, kind)?;
    let inv_cell = 1.0 / grid.cell_volume();
    let diag = (0..grid.dim())
        .map(|q| {
            (0..grid.n_particles()).filter(|&i| grid.site_of(q, i) == x).map(|i| w[i]).sum::<f64>() * inv_cell
        })
        .collect();
    Ok(LinOp::Diagonal(diag))
}

/// Largest entrywise modulus of `a - b`.
pub fn max_abs_diff(a: &DMatrix<C64>, b: &DMatrix<C64>) -> f64 {
    (a - b).iter().map(|c| c.norm()).fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::SymmetricEigen;

    fn ring(l: usize, a: f64, m: f64) -> Arc<GridSpec> {
        Arc::new(GridSpec::build(1, 1, l, a, vec![m]).unwrap())
    }

    #[test]
    fn plane_waves_are_eigenvectors() {
        let g = ring(16, 0.5, 1.5);
        let h = Hamiltonian::free(g.clone());
        let k = wave_numbers(16, 0.5);
        for j in [0usize, 3, 8, 13] {
            let psi: Vec<C64> = (0..16).map(|n| C64::from_polar(0.25, k[j] * n as f64 * 0.5)).collect();
            let hp = h.apply(&psi);
            let e = k[j] * k[j] / 3.0;
            for (a, b) in hp.iter().zip(&psi) {
                assert!((a - b * e).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn constant_potential_shifts_spectrum() {
        let g = ring(8, 1.0, 1.0);
        let h0 = Hamiltonian::free(g.clone()).dense_real();
        let h1 = Hamiltonian::new(g, |_| 2.5).unwrap().dense_real();
        let mut e0: Vec<f64> = SymmetricEigen::new(h0).eigenvalues.iter().copied().collect();
        let mut e1: Vec<f64> = SymmetricEigen::new(h1).eigenvalues.iter().copied().collect();
        e0.sort_by(f64::total_cmp);
        e1.sort_by(f64::total_cmp);
        for (a, b) in e0.iter().zip(&e1) {
            assert!((b - a - 2.5).abs() < 1e-12);
        }
    }

    #[test]
    fn harmonic_ground_state_energy() {
        let g = ring(64, 0.25, 1.0);
        let omega = 1.0;
        let center = 8.0;
        let gg = g.clone();
        let h = Hamiltonian::new(g, move |x| {
            let d = gg.min_image(x[0], center);
            0.5 * omega * omega * d * d
        })
        .unwrap();
        let e = SymmetricEigen::new(h.dense_real()).eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
        assert!((e - 0.5 * omega).abs() < 0.005 * omega);
    }

    #[test]
    fn structured_apply_matches_dense() {
        let g = Arc::new(GridSpec::build(2, 1, 8, 0.7, vec![1.0, 3.0]).unwrap());
        let h = Hamiltonian::new(g.clone(), |x| (x[0] - x[1]).cos() + 0.1 * x[0]).unwrap();
        let dense = h.dense_real();
        let herm = (&dense - dense.transpose()).amax();
        assert!(herm < 1e-12);
        let psi = StateVector::random(g.clone(), &mut crate::rng::stream(8, 0));
        let a = h.apply(psi.amplitudes());
        let v = nalgebra::DVector::from_column_slice(psi.amplitudes());
        let b = dense.map(|x| C64::new(x, 0.0)) * v;
        for (x, y) in a.iter().zip(b.iter()) {
            assert!((x - y).norm() < 1e-12);
        }
        let g2 = Arc::new(GridSpec::build(1, 2, 4, 1.0, vec![2.0]).unwrap());
        let h2 = Hamiltonian::free(g2.clone());
        let psi = StateVector::random(g2, &mut crate::rng::stream(8, 1));
        let a = h2.apply(psi.amplitudes());
        let b = h2.dense_real().map(|x| C64::new(x, 0.0)) * nalgebra::DVector::from_column_slice(psi.amplitudes());
        for (x, y) in a.iter().zip(b.iter()) {
            assert!((x - y).norm() < 1e-12);
        }
    }

    #[test]
    fn mass_density_completeness() {
        let g = GridSpec::build(2, 1, 4, 0.5, vec![1.0, 2.0]).unwrap();
        let mut sum = vec![0.0; g.dim()];
        for x in 0..g.sites() {
            if let LinOp::Diagonal(d) = mass_density_operator(&g, x).unwrap() {
                sum.iter_mut().zip(d).for_each(|(s, v)| *s += v * g.cell_volume());
            }
        }
        for s in sum {
            assert!((s - 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn mass_density_of_a_product_state() {
        let g = Arc::new(GridSpec::build(2, 1, 4, 1.0, vec![1.0, 2.0]).unwrap());
        let p1: [f64; 4] = [0.1, 0.2, 0.3, 0.4];
        let p2: [f64; 4] = [0.4, 0.4, 0.1, 0.1];
        let amps: Vec<C64> = (0..16).map(|q| C64::new((p1[q / 4] * p2[q % 4]).sqrt(), 0.0)).collect();
        let psi = StateVector::from_amplitudes(g.clone(), amps).unwrap();
        for x in 0..4 {
            let m = mass_density_operator(&g, x).unwrap().expectation(&psi).re;
            assert!((m - (p1[x] + 2.0 * p2[x])).abs() < 1e-12);
        }
        let single = Arc::new(GridSpec::ring(4).unwrap());
        let phi = StateVector::from_real(single.clone(), &[0.1f64.sqrt(), 0.2f64.sqrt(), 0.3f64.sqrt(), 0.4f64.sqrt()]).unwrap();
        assert!((mass_density_operator(&single, 2).unwrap().expectation(&phi).re - 0.3).abs() < 1e-12);
    }

    #[test]
    fn charge_density_needs_charges() {
        let g = GridSpec::ring(4).unwrap();
        assert!(density_operator(&g, 0, DensityWeight::Charge).is_err());
        let g = g.with_charges(vec![-1.0]).unwrap();
        let LinOp::Diagonal(d) = density_operator(&g, 1, DensityWeight::Charge).unwrap() else { panic!() };
        assert_eq!(d[1], -1.0);
    }
}
