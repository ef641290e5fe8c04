use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use super::grid::GridSpec;
use crate::error::{Error, Result};

pub type C64 = Complex64;

pub const NORM_TOL: f64 = 1e-10;

fn zero() -> C64 {
    C64::new(0.0, 0.0)
}

/// Normalized pure state on the grid.
///
/// Amplitudes `c_q` carry the discrete normalization `sum_q |c_q|^2 = 1`;
/// the continuum wave function is `psi(q) = c_q / a^(N d / 2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    grid: Arc<GridSpec>,
    amps: Vec<C64>,
}

impl StateVector {
    /// Normalizes `amps`; zero or non-finite input is rejected.
    pub fn from_amplitudes(grid: Arc<GridSpec>, mut amps: Vec<C64>) -> Result<Self> {
        if amps.len() != grid.dim() {
            return Err(Error::bad(format!("expected {} amplitudes, got {}", grid.dim(), amps.len())));
        }
        let n2: f64 = amps.iter().map(|c| c.norm_sqr()).sum();
        if !n2.is_finite() {
            return Err(Error::bad("amplitudes must be finite"));
        }
        if n2 <= 0.0 {
            return Err(Error::DegenerateInput("zero-norm state".into()));
        }
        let s = 1.0 / n2.sqrt();
        amps.iter_mut().for_each(|c| *c *= s);
        Ok(StateVector { grid, amps })
    }

    pub fn from_real(grid: Arc<GridSpec>, amps: &[f64]) -> Result<Self> {
        Self::from_amplitudes(grid, amps.iter().map(|&x| C64::new(x, 0.0)).collect())
    }

    /// Amplitude from a function of the per-axis lattice indices.
    pub fn from_fn(grid: Arc<GridSpec>, f: impl Fn(&[usize]) -> C64) -> Result<Self> {
        let amps = (0..grid.dim()).map(|q| f(&grid.axis_indices(q))).collect();
        Self::from_amplitudes(grid, amps)
    }

    pub fn position_eigenstate(grid: Arc<GridSpec>, q: usize) -> Result<Self> {
        if q >= grid.dim() {
            return Err(Error::bad(format!("configuration {q} out of range")));
        }
        let mut amps = vec![zero(); grid.dim()];
        amps[q] = C64::new(1.0, 0.0);
        Ok(StateVector { grid, amps })
    }

    /// Product of per-particle Gaussian packets. `centers` and `momenta`
    /// hold `N d` entries; `widths` holds one position spread per particle.
    pub fn gaussian_packet(grid: Arc<GridSpec>, centers: &[f64], widths: &[f64], momenta: &[f64]) -> Result<Self> {
        let m = grid.n_axes();
        if centers.len() != m || momenta.len() != m || widths.len() != grid.n_particles() {
            return Err(Error::bad("packet parameters do not match the grid"));
        }
        if widths.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(Error::bad("packet widths must be positive"));
        }
        let a = grid.spacing();
        let d = grid.dims();
        let g = grid.clone();
        Self::from_fn(grid, move |idx| {
            let mut phase = 0.0;
            let mut expo = 0.0;
            for (k, &n) in idx.iter().enumerate() {
                let dx = g.min_image(n as f64 * a, centers[k]);
                let w = widths[k / d];
                expo -= dx * dx / (4.0 * w * w);
                phase += momenta[k] * dx;
            }
            C64::from_polar(expo.exp(), phase)
        })
    }

    /// Normalized linear combination of states on the same grid.
    pub fn superpose(terms: &[(C64, &StateVector)]) -> Result<Self> {
        let first = terms.first().ok_or_else(|| Error::bad("empty superposition"))?.1;
        let mut amps = vec![zero(); first.dim()];
        for (c, s) in terms {
            if s.grid != first.grid {
                return Err(Error::bad("superposed states live on different grids"));
            }
            for (o, a) in amps.iter_mut().zip(&s.amps) {
                *o += c * a;
            }
        }
        Self::from_amplitudes(first.grid.clone(), amps)
    }

    /// Haar-like random state from complex normal amplitudes.
    pub fn random(grid: Arc<GridSpec>, rng: &mut impl Rng) -> Self {
        let amps = (0..grid.dim())
            .map(|_| C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
            .collect();
        Self::from_amplitudes(grid, amps).expect("gaussian amplitudes are nonzero")
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn grid_arc(&self) -> Arc<GridSpec> {
        self.grid.clone()
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amps
    }

    pub fn into_amplitudes(self) -> Vec<C64> {
        self.amps
    }

    pub fn norm(&self) -> f64 {
        self.amps.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
    }

    /// `|c_q|^2` for every configuration.
    pub fn probabilities(&self) -> Vec<f64> {
        self.amps.iter().map(|c| c.norm_sqr()).collect()
    }

    /// `<self|other>`.
    pub fn inner(&self, other: &StateVector) -> C64 {
        self.amps.iter().zip(&other.amps).map(|(a, b)| a.conj() * b).sum()
    }

    /// Distribution of particle `i` over sites.
    pub fn site_marginal(&self, i: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.grid.sites()];
        for (q, c) in self.amps.iter().enumerate() {
            out[self.grid.site_of(q, i)] += c.norm_sqr();
        }
        out
    }

    /// Same state with amplitudes replaced, renormalized.
    pub fn with_amplitudes(&self, amps: Vec<C64>) -> Result<Self> {
        Self::from_amplitudes(self.grid.clone(), amps)
    }

    /// Replaces amplitudes without renormalizing; callers guarantee unit norm.
    pub(crate) fn from_unit(grid: Arc<GridSpec>, amps: Vec<C64>) -> Self {
        debug_assert_eq!(amps.len(), grid.dim());
        StateVector { grid, amps }
    }

    /// Restores unit norm after accumulated rounding.
    pub(crate) fn renormalize(&mut self) {
        let n = self.norm();
        if n > 0.0 {
            self.amps.iter_mut().for_each(|c| *c /= n);
        }
    }

    pub fn to_density_matrix(&self) -> DensityMatrix {
        DensityMatrix::pure(self)
    }
}

/// Dense density matrix on the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    grid: Arc<GridSpec>,
    m: DMatrix<C64>,
}

impl DensityMatrix {
    /// Validates Hermiticity and normalizes the trace.
    pub fn from_matrix(grid: Arc<GridSpec>, m: DMatrix<C64>) -> Result<Self> {
        grid.require_mixed()?;
        let d = grid.dim();
        if m.nrows() != d || m.ncols() != d {
            return Err(Error::bad(format!("expected a {d} x {d} matrix")));
        }
        if m.iter().any(|c| !(c.re.is_finite() && c.im.is_finite())) {
            return Err(Error::bad("density matrix entries must be finite"));
        }
        let scale = m.iter().map(|c| c.norm()).fold(0.0, f64::max).max(1.0);
        let herm = (&m - m.adjoint()).iter().map(|c| c.norm()).fold(0.0, f64::max);
        if herm > NORM_TOL * scale {
            return Err(Error::bad(format!("matrix is not Hermitian (deviation {herm:e})")));
        }
        let tr = m.trace().re;
        if tr <= 0.0 {
            return Err(Error::DegenerateInput("density matrix has non-positive trace".into()));
        }
        let mut m = (&m + m.adjoint()) * C64::new(0.5 / tr, 0.0);
        for k in 0..d {
            m[(k, k)].im = 0.0;
        }
        Ok(DensityMatrix { grid, m })
    }

    pub fn pure(psi: &StateVector) -> Self {
        let v = DVector::from_column_slice(psi.amplitudes());
        DensityMatrix { grid: psi.grid_arc(), m: &v * v.adjoint() }
    }

    /// `sum_k w_k |psi_k><psi_k|`, with weights normalized.
    pub fn mixture(terms: &[(f64, &StateVector)]) -> Result<Self> {
        let first = terms.first().ok_or_else(|| Error::bad("empty mixture"))?.1;
        first.grid().require_mixed()?;
        if terms.iter().any(|(w, _)| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::bad("mixture weights must be non-negative"));
        }
        let total: f64 = terms.iter().map(|(w, _)| w).sum();
        if total <= 0.0 {
            return Err(Error::DegenerateInput("mixture weights sum to zero".into()));
        }
        let d = first.dim();
        let mut m = DMatrix::<C64>::zeros(d, d);
        for (w, psi) in terms {
            let v = DVector::from_column_slice(psi.amplitudes());
            m += (&v * v.adjoint()) * C64::new(w / total, 0.0);
        }
        Ok(DensityMatrix { grid: first.grid_arc(), m })
    }

    /// Wraps a matrix the caller has already normalized.
    pub(crate) fn from_raw(grid: Arc<GridSpec>, m: DMatrix<C64>) -> Self {
        DensityMatrix { grid, m }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn grid_arc(&self) -> Arc<GridSpec> {
        self.grid.clone()
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.m
    }

    pub fn into_matrix(self) -> DMatrix<C64> {
        self.m
    }

    pub fn trace(&self) -> f64 {
        self.m.trace().re
    }

    /// `<q|rho|q>` for every configuration.
    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.dim()).map(|k| self.m[(k, k)].re).collect()
    }

    pub fn site_marginal(&self, i: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.grid.sites()];
        for (q, p) in self.diagonal().into_iter().enumerate() {
            out[self.grid.site_of(q, i)] += p;
        }
        out
    }

    pub fn purity(&self) -> f64 {
        self.m.iter().map(|c| c.norm_sqr()).sum()
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut ev: Vec<f64> = SymmetricEigen::new(self.m.clone()).eigenvalues.iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        ev
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues().first().copied().unwrap_or(0.0)
    }

    /// `|self - other|_1`, the sum of absolute eigenvalues of the difference.
    pub fn trace_norm_distance(&self, other: &DensityMatrix) -> f64 {
        trace_norm(&(&self.m - &other.m))
    }

    pub fn max_hermiticity_error(&self) -> f64 {
        (&self.m - self.m.adjoint()).iter().map(|c| c.norm()).fold(0.0, f64::max)
    }

    /// Rescales to unit trace; returns the trace before rescaling.
    pub(crate) fn renormalize_trace(&mut self) -> f64 {
        let tr = self.trace();
        if tr > 0.0 {
            self.m /= C64::new(tr, 0.0);
        }
        tr
    }

}

/// Sum of absolute eigenvalues of a Hermitian matrix.
pub fn trace_norm(h: &DMatrix<C64>) -> f64 {
    let sym = (h + h.adjoint()) * C64::new(0.5, 0.0);
    SymmetricEigen::new(sym).eigenvalues.iter().map(|e| e.abs()).sum()
}
