use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::propagator::Propagator;
use crate::error::{Error, Result};
use crate::hilbert::{CollapseKernel, DensityMatrix, GrwParams, Hamiltonian, C64};

/// Largest dimension for which the exact superoperator exponential is used.
pub const EXACT_SUPEROP_MAX_DIM: usize = 16;
/// Largest dimension for which `H` is kept as a dense real matrix.
const DENSE_H_MAX_DIM: usize = 256;
const TRACE_GUARD: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MasterMethod {
    /// Elementwise exact when `H = 0`, otherwise adaptive RK4.
    #[default]
    Auto,
    Rk4,
    /// Exponential of the full superoperator.
    Exact,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct MasterStats {
    pub accepted: usize,
    pub rejected: usize,
    pub renormalizations: usize,
}

/// `d rho/dt = -i[H, rho] + lambda sum_k sum_x a^d g_{k,x}^(1/2) rho g_{k,x}^(1/2) - N lambda rho`.
///
/// The collapse part is diagonal in the configuration basis: entry
/// `(q, q')` is multiplied by `lambda sum_k (gamma(q_k, q'_k) - 1)`.
#[derive(Debug, Clone)]
pub struct MasterEquation {
    h: Hamiltonian,
    dense_h: Option<DMatrix<f64>>,
    decay: DMatrix<f64>,
    tol: f64,
    method: MasterMethod,
}

impl MasterEquation {
    pub fn new(h: &Hamiltonian, params: &GrwParams) -> Result<Self> {
        let params = params.validated()?;
        let grid = h.grid();
        grid.require_mixed()?;
        let kernel = CollapseKernel::new(grid, params.sigma)?;
        let table = kernel.overlap_table(grid);
        let d = grid.dim();
        let n = grid.n_particles();
        let sites: Vec<Vec<usize>> = (0..d).map(|q| (0..n).map(|k| grid.site_of(q, k)).collect()).collect();
        let decay = DMatrix::from_fn(d, d, |q, q2| {
            params.lambda * (0..n).map(|k| table[sites[q][k]][sites[q2][k]] - 1.0).sum::<f64>()
        });
        let dense_h = (h.dim() <= DENSE_H_MAX_DIM && !h.is_zero()).then(|| h.dense_real());
        Ok(MasterEquation { h: h.clone(), dense_h, decay, tol: 1e-10, method: MasterMethod::Auto })
    }

    pub fn with_tolerance(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn with_method(mut self, method: MasterMethod) -> Self {
        self.method = method;
        self
    }

    /// Per-entry collapse rates `lambda sum_k (gamma - 1)`.
    pub fn decay(&self) -> &DMatrix<f64> {
        &self.decay
    }

    fn commutator(&self, rho: &DMatrix<C64>) -> DMatrix<C64> {
        let d = rho.nrows();
        let hr: DMatrix<C64> = match &self.dense_h {
            Some(h) => {
                let re = rho.map(|c| c.re);
                let im = rho.map(|c| c.im);
                let a = h * re;
                let b = h * im;
                DMatrix::from_fn(d, d, |r, c| C64::new(a[(r, c)], b[(r, c)]))
            }
            None => {
                let mut out = rho.clone();
                for mut col in out.column_iter_mut() {
                    let v: Vec<C64> = col.iter().copied().collect();
                    let hv = self.h.apply(&v);
                    for k in 0..d {
                        col[k] = hv[k];
                    }
                }
                out
            }
        };
        // -i(H rho - rho H) with rho H = (H rho)^dagger.
        let adj = hr.adjoint();
        (hr - adj) * C64::new(0.0, -1.0)
    }

    /// Right-hand side of the master equation.
    pub fn rhs(&self, rho: &DMatrix<C64>) -> DMatrix<C64> {
        let mut out = if self.h.is_zero() { DMatrix::zeros(rho.nrows(), rho.ncols()) } else { self.commutator(rho) };
        out.iter_mut().zip(rho.iter().zip(self.decay.iter())).for_each(|(o, (r, g))| *o += r * *g);
        out
    }

    /// Right-hand side without assuming `rho` is Hermitian.
    fn rhs_general(&self, rho: &DMatrix<C64>) -> DMatrix<C64> {
        let h = self.h.dense_real().map(|x| C64::new(x, 0.0));
        let mut out = (&h * rho - rho * &h) * C64::new(0.0, -1.0);
        out.iter_mut().zip(rho.iter().zip(self.decay.iter())).for_each(|(o, (r, g))| *o += r * *g);
        out
    }

    fn rk4_step(&self, rho: &DMatrix<C64>, h: f64) -> DMatrix<C64> {
        let c = |x: f64| C64::new(x, 0.0);
        let k1 = self.rhs(rho);
        let k2 = self.rhs(&(rho + &k1 * c(0.5 * h)));
        let k3 = self.rhs(&(rho + &k2 * c(0.5 * h)));
        let k4 = self.rhs(&(rho + &k3 * c(h)));
        rho + (k1 + k2 * c(2.0) + k3 * c(2.0) + k4) * c(h / 6.0)
    }

    fn initial_step(&self) -> f64 {
        let hmax = match &self.dense_h {
            Some(h) => h.iter().map(|x| x.abs()).fold(0.0, f64::max) * (h.nrows() as f64).sqrt(),
            None => self.h.kinetic_spectrum().iter().fold(0.0, |m: f64, x| m.max(*x))
                + self.h.potential().iter().fold(0.0, |m: f64, x| m.max(x.abs())),
        };
        let dmax = self.decay.iter().fold(0.0, |m: f64, x| m.max(x.abs()));
        0.5 / (2.0 * hmax + dmax).max(1e-3)
    }

    fn integrate(&self, rho: &DMatrix<C64>, dt: f64, stats: &mut MasterStats) -> Result<DMatrix<C64>> {
        let mut cur = rho.clone();
        let mut t = 0.0;
        let mut h = self.initial_step().min(dt);
        while t < dt {
            let step = h.min(dt - t);
            if step < 1e-14 * dt.max(1.0) && dt - t > step {
                return Err(Error::StepSizeUnderflow { t });
            }
            let full = self.rk4_step(&cur, step);
            let half = self.rk4_step(&self.rk4_step(&cur, 0.5 * step), 0.5 * step);
            let err = (&full - &half).iter().map(|c| c.norm()).fold(0.0, f64::max) / 15.0;
            if err <= self.tol || step < 1e-12 {
                if err > self.tol {
                    return Err(Error::StepSizeUnderflow { t });
                }
                // Richardson extrapolation of the two estimates.
                cur = &half + (&half - &full) * C64::new(1.0 / 15.0, 0.0);
                t += step;
                stats.accepted += 1;
                let tr = cur.trace().re;
                if (tr - 1.0).abs() > TRACE_GUARD {
                    log::warn!("master equation trace drifted to {tr} at t = {t}; renormalizing");
                    cur /= C64::new(tr, 0.0);
                    stats.renormalizations += 1;
                }
                let grow = if err == 0.0 { 2.0 } else { (0.9 * (self.tol / err).powf(0.2)).clamp(0.2, 2.0) };
                h = step * grow;
            } else {
                stats.rejected += 1;
                h = step * (0.9 * (self.tol / err).powf(0.2)).clamp(0.1, 0.5);
            }
        }
        Ok(cur)
    }

    fn exact(&self, rho: &DMatrix<C64>, dt: f64) -> Result<DMatrix<C64>> {
        let d = rho.nrows();
        if d > EXACT_SUPEROP_MAX_DIM {
            return Err(Error::bad(format!("exact superoperator limited to dimension {EXACT_SUPEROP_MAX_DIM}")));
        }
        let n = d * d;
        // Column-major vectorization: vec(rho)[r + c d] = rho[(r, c)].
        let mut sup = DMatrix::<C64>::zeros(n, n);
        for k in 0..n {
            let mut e = DMatrix::<C64>::zeros(d, d);
            e[(k % d, k / d)] = C64::new(1.0, 0.0);
            let col = self.rhs_general(&e);
            for (j, v) in col.iter().enumerate() {
                sup[(j, k)] = *v;
            }
        }
        let prop = (sup * C64::new(dt, 0.0)).exp();
        let v = nalgebra::DVector::from_iterator(n, rho.iter().copied());
        let out = prop * v;
        Ok(DMatrix::from_iterator(d, d, out.iter().copied()))
    }

    /// Propagates `rho` by `dt`.
    pub fn propagate(&self, rho: &DensityMatrix, dt: f64) -> Result<DensityMatrix> {
        self.propagate_with_stats(rho, dt).map(|(r, _)| r)
    }

    pub fn propagate_with_stats(&self, rho: &DensityMatrix, dt: f64) -> Result<(DensityMatrix, MasterStats)> {
        if !(dt.is_finite() && dt >= 0.0) {
            return Err(Error::bad(format!("dt must be non-negative, got {dt}")));
        }
        if rho.grid() != self.h.grid() {
            return Err(Error::bad("state and Hamiltonian live on different grids"));
        }
        let mut stats = MasterStats::default();
        if dt == 0.0 {
            return Ok((rho.clone(), stats));
        }
        let m = rho.matrix();
        let out = match self.method {
            MasterMethod::Exact => self.exact(m, dt)?,
            MasterMethod::Auto if self.h.is_zero() => {
                let mut out = m.clone();
                out.iter_mut().zip(self.decay.iter()).for_each(|(r, g)| *r *= (g * dt).exp());
                out
            }
            MasterMethod::Auto if self.decay.iter().all(|&g| g == 0.0) => Propagator::new(&self.h).conjugate(m, dt),
            _ => self.integrate(m, dt, &mut stats)?,
        };
        let herm = (&out + out.adjoint()) * C64::new(0.5, 0.0);
        Ok((DensityMatrix::from_raw(rho.grid_arc(), herm), stats))
    }

    /// `rho_t` at each of the increasing `times`, starting from `rho0` at 0.
    pub fn trajectory(&self, rho0: &DensityMatrix, times: &[f64]) -> Result<Vec<DensityMatrix>> {
        let mut out = Vec::with_capacity(times.len());
        let mut now = 0.0;
        let mut cur = rho0.clone();
        for &t in times {
            if t < now {
                return Err(Error::bad("trajectory times must be increasing"));
            }
            cur = self.propagate(&cur, t - now)?;
            now = t;
            out.push(cur.clone());
        }
        Ok(out)
    }
}

/// Integrates the master equation over `dt`.
pub fn master_propagate(rho: &DensityMatrix, h: &Hamiltonian, params: &GrwParams, dt: f64) -> Result<DensityMatrix> {
    MasterEquation::new(h, params)?.propagate(rho, dt)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::{GridSpec, StateVector};
    use crate::rng::stream;
    use std::sync::Arc;

    fn grid2() -> Arc<GridSpec> {
        Arc::new(GridSpec::build(2, 1, 4, 1.0, vec![1.0, 1.0]).unwrap())
    }

    #[test]
    fn zero_rate_is_unitary_conjugation() {
        let g = grid2();
        let h = Hamiltonian::new(g.clone(), |x| 0.2 * x[0] * x[1]).unwrap();
        let psi = StateVector::random(g.clone(), &mut stream(1, 0));
        let rho = DensityMatrix::pure(&psi);
        let p = GrwParams::new(0.0, 1.0).unwrap();
        let eq = MasterEquation::new(&h, &p).unwrap().with_method(MasterMethod::Rk4);
        let a = eq.propagate(&rho, 2.0).unwrap();
        let b = DensityMatrix::pure(&Propagator::new(&h).evolve(&psi, 2.0));
        assert!((a.matrix() - b.matrix()).camax() < 1e-9);
    }

    #[test]
    fn diagonal_is_frozen_without_hamiltonian() {
        let g = grid2();
        let h = Hamiltonian::zero(g.clone());
        let psi = StateVector::random(g.clone(), &mut stream(2, 0));
        let rho = DensityMatrix::pure(&psi);
        let p = GrwParams::new(0.5, 0.8).unwrap();
        for method in [MasterMethod::Auto, MasterMethod::Rk4] {
            let eq = MasterEquation::new(&h, &p).unwrap().with_method(method);
            let out = eq.trajectory(&rho, &[0.5, 1.0, 4.0]).unwrap();
            for r in out {
                let dev = r.diagonal().iter().zip(rho.diagonal()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                assert!(dev < 1e-12);
            }
        }
    }

    #[test]
    fn two_site_coherence_decay() {
        let g = Arc::new(GridSpec::ring(2).unwrap());
        let h = Hamiltonian::zero(g.clone());
        let psi = StateVector::from_real(g.clone(), &[0.6, 0.8]).unwrap();
        let rho = DensityMatrix::pure(&psi);
        let p = GrwParams::new(0.3, 1.0).unwrap();
        let kernel = CollapseKernel::new(&g, 1.0).unwrap();
        let gamma = kernel.site_overlap(0, 1);
        let brute: f64 = (0..2).map(|x| (kernel.site_value(0, x) * kernel.site_value(1, x)).sqrt()).sum();
        assert!((gamma - brute).abs() < 1e-15);
        let t = 2.5;
        let expect = 0.48 * (-0.3 * (1.0 - gamma) * t).exp();
        for method in [MasterMethod::Auto, MasterMethod::Rk4, MasterMethod::Exact] {
            let eq = MasterEquation::new(&h, &p).unwrap().with_method(method);
            let out = eq.propagate(&rho, t).unwrap();
            assert!((out.matrix()[(0, 1)].re - expect).abs() < 1e-8, "{method:?}");
        }
    }

    #[test]
    fn rk4_matches_exact_superoperator() {
        let g = grid2();
        let h = Hamiltonian::new(g.clone(), |x| 0.3 * (x[0] - x[1]).abs()).unwrap();
        let psi = StateVector::random(g.clone(), &mut stream(5, 0));
        let rho = DensityMatrix::pure(&psi);
        let p = GrwParams::new(0.4, 0.7).unwrap();
        let a = MasterEquation::new(&h, &p).unwrap().propagate(&rho, 1.5).unwrap();
        let b = MasterEquation::new(&h, &p).unwrap().with_method(MasterMethod::Exact).propagate(&rho, 1.5).unwrap();
        assert!((a.matrix() - b.matrix()).camax() < 1e-8);
        assert!((a.trace() - 1.0).abs() < 1e-8);
        assert!(a.max_hermiticity_error() < 1e-12);
        assert!(a.min_eigenvalue() > -1e-7);
    }
}
