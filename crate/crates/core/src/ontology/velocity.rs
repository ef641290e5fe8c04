//! Velocity fields from trigonometric interpolants of grid states.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evolution::{MasterEquation, Propagator};
use crate::hilbert::spectral::{AxisFft, StateInterpolant, TrigBasis};
use crate::hilbert::{DensityMatrix, GridSpec, StateVector, C64};

/// Relative density below which a velocity evaluation counts as a node.
pub const NODE_EPSILON: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct Velocity {
    pub v: Vec<f64>,
    /// Regularization was applied.
    pub flagged: bool,
}

pub trait VelocityField {
    fn velocity(&self, q: &[f64]) -> Velocity;
}

/// `pi / (a m_min)`, the largest speed representable on the grid.
pub fn max_speed(grid: &GridSpec) -> f64 {
    let m_min = grid.masses().iter().copied().fold(f64::INFINITY, f64::min);
    PI / (grid.spacing() * m_min)
}

fn inverse_masses(grid: &GridSpec) -> Vec<f64> {
    (0..grid.n_axes()).map(|ax| 1.0 / grid.masses()[grid.particle_of_axis(ax)]).collect()
}

#[derive(Debug, Clone)]
struct Regularizer {
    inv_mass: Vec<f64>,
    floor: f64,
    v_max: f64,
}

impl Regularizer {
    fn new(grid: &GridSpec, max_density: f64) -> Self {
        Regularizer { inv_mass: inverse_masses(grid), floor: NODE_EPSILON * max_density, v_max: max_speed(grid) }
    }

    /// `v_k = Im(j_k) / (m_k p)` with clamp-and-flag at nodes.
    fn finish(&self, density: f64, current: &[f64]) -> Velocity {
        let v: Vec<f64> = current.iter().zip(&self.inv_mass).map(|(j, im)| j * im / density).collect();
        if density >= self.floor && v.iter().all(|x| x.is_finite()) {
            return Velocity { v, flagged: false };
        }
        let dir: Vec<f64> = current.iter().zip(&self.inv_mass).map(|(j, im)| j * im).collect();
        let len = dir.iter().map(|x| x * x).sum::<f64>().sqrt();
        let v = if len > 0.0 && len.is_finite() {
            dir.iter().map(|x| x / len * self.v_max).collect()
        } else {
            vec![0.0; dir.len()]
        };
        Velocity { v, flagged: true }
    }
}

/// `v_k = (1/m_k) Im(d_k psi / psi)` for a pure state.
#[derive(Debug, Clone)]
pub struct BohmField {
    interp: StateInterpolant,
    reg: Regularizer,
}

impl BohmField {
    pub fn new(psi: &StateVector) -> Self {
        Self::with_fft(psi, &AxisFft::new(psi.grid()))
    }

    pub fn with_fft(psi: &StateVector, fft: &AxisFft) -> Self {
        let max = psi.probabilities().into_iter().fold(0.0, f64::max);
        BohmField { interp: StateInterpolant::new(psi.grid(), psi.amplitudes(), fft), reg: Regularizer::new(psi.grid(), max) }
    }

    /// `|psi~(Q)|^2` in the discrete normalization.
    pub fn density(&self, q: &[f64]) -> f64 {
        self.interp.value(q).norm_sqr()
    }
}

impl VelocityField for BohmField {
    fn velocity(&self, q: &[f64]) -> Velocity {
        let (psi, grad) = self.interp.value_and_gradient(q);
        let current: Vec<f64> = grad.iter().map(|g| (psi.conj() * g).im).collect();
        self.reg.finish(psi.norm_sqr(), &current)
    }
}

/// `v_k = (1/m_k) Im(d_{q_k} <q|rho|q'> / <q|rho|q'>)` at `q = q' = Q`.
#[derive(Debug, Clone)]
pub struct MbmField {
    basis: TrigBasis,
    rho_hat: DMatrix<C64>,
    reg: Regularizer,
}

impl MbmField {
    pub fn new(rho: &DensityMatrix) -> Self {
        Self::with_fft(rho, &AxisFft::new(rho.grid()))
    }

    /// Builds `rho_hat = F rho F^dagger` so that
    /// `rho~(Q, Q') = sum rho_hat_{jj'} Phi_j(Q) conj(Phi_j'(Q'))`.
    pub fn with_fft(rho: &DensityMatrix, fft: &AxisFft) -> Self {
        let mut a = rho.matrix().clone();
        transform_columns(&mut a, fft);
        let mut b = a.adjoint();
        transform_columns(&mut b, fft);
        let max = rho.diagonal().into_iter().fold(0.0, f64::max);
        MbmField { basis: TrigBasis::new(rho.grid()), rho_hat: b.adjoint(), reg: Regularizer::new(rho.grid(), max) }
    }

    fn contract(&self, phi: &[C64]) -> DVector<C64> {
        let conj = DVector::from_iterator(phi.len(), phi.iter().map(|c| c.conj()));
        &self.rho_hat * conj
    }

    /// `rho~(Q, Q)` in the discrete normalization.
    pub fn density(&self, q: &[f64]) -> f64 {
        let phi = self.basis.eval_value(q);
        dot(&phi, &self.contract(&phi)).re
    }

    /// `sum_k d_k (p v_k)` at `Q`, by exact differentiation of the interpolant.
    pub fn current_divergence(&self, q: &[f64]) -> f64 {
        let (phi, grads) = self.basis.eval(q);
        let second = self.basis.eval_second(q);
        let u = self.contract(&phi);
        let mut div = 0.0;
        for (k, (g, g2)) in grads.iter().zip(&second).enumerate() {
            let w = self.contract(g);
            div += self.reg.inv_mass[k] * (dot(g2, &u) + dot(g, &w)).im;
        }
        div
    }
}

impl VelocityField for MbmField {
    fn velocity(&self, q: &[f64]) -> Velocity {
        let (phi, grads) = self.basis.eval(q);
        let u = self.contract(&phi);
        let density = dot(&phi, &u).re;
        let current: Vec<f64> = grads.iter().map(|g| dot(g, &u).im).collect();
        self.reg.finish(density, &current)
    }
}

fn transform_columns(m: &mut DMatrix<C64>, fft: &AxisFft) {
    for mut col in m.column_iter_mut() {
        fft.forward(col.as_mut_slice());
    }
}

fn dot(a: &[C64], b: &DVector<C64>) -> C64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

pub fn bohm_velocity(psi: &StateVector, q: &[f64]) -> Velocity {
    BohmField::new(psi).velocity(q)
}

pub fn mbm_velocity(rho: &DensityMatrix, q: &[f64]) -> Velocity {
    MbmField::new(rho).velocity(q)
}

/// Supplies the velocity field at requested times.
pub trait FieldSource {
    type Field: VelocityField;
    fn at(&mut self, t: f64) -> Result<&Self::Field>;
}

/// Bohmian field of `exp(-iHt) psi0`, evolved on demand.
pub struct PureSource<'a> {
    prop: &'a Propagator,
    fft: AxisFft,
    psi: StateVector,
    t: f64,
    field: BohmField,
}

impl<'a> PureSource<'a> {
    pub fn new(prop: &'a Propagator, psi: StateVector, t0: f64) -> Self {
        let fft = AxisFft::new(psi.grid());
        let field = BohmField::with_fft(&psi, &fft);
        PureSource { prop, fft, psi, t: t0, field }
    }

    pub fn state(&self) -> &StateVector {
        &self.psi
    }

    /// Replaces the state at the current time, e.g. after a collapse.
    pub fn reset(&mut self, psi: StateVector) {
        self.field = BohmField::with_fft(&psi, &self.fft);
        self.psi = psi;
    }
}

impl FieldSource for PureSource<'_> {
    type Field = BohmField;

    fn at(&mut self, t: f64) -> Result<&BohmField> {
        if t != self.t {
            self.psi = self.prop.evolve(&self.psi, t - self.t);
            self.t = t;
            self.field = BohmField::with_fft(&self.psi, &self.fft);
        }
        Ok(&self.field)
    }
}

/// MBM field of the master-equation solution, advanced forward on demand.
pub struct MixedSource<'a> {
    master: &'a MasterEquation,
    fft: AxisFft,
    rho: DensityMatrix,
    t: f64,
    field: MbmField,
}

impl<'a> MixedSource<'a> {
    pub fn new(master: &'a MasterEquation, rho: DensityMatrix, t0: f64) -> Self {
        let fft = AxisFft::new(rho.grid());
        let field = MbmField::with_fft(&rho, &fft);
        MixedSource { master, fft, rho, t: t0, field }
    }
}

impl FieldSource for MixedSource<'_> {
    type Field = MbmField;

    fn at(&mut self, t: f64) -> Result<&MbmField> {
        if t < self.t {
            return Err(Error::bad("the master equation only runs forward in time"));
        }
        if t > self.t {
            self.rho = self.master.propagate(&self.rho, t - self.t)?;
            self.t = t;
            self.field = MbmField::with_fft(&self.rho, &self.fft);
        }
        Ok(&self.field)
    }
}

/// Fields precomputed at `t0 + k h / 2`, shared by many paths.
#[derive(Debug, Clone)]
pub struct FieldLattice<F> {
    pub t0: f64,
    pub step: f64,
    pub fields: Vec<F>,
}

impl<F: VelocityField + Clone> FieldLattice<F> {
    /// Samples `source` on the half-step lattice covering `[t0, t_final]`.
    pub fn build<S: FieldSource<Field = F>>(source: &mut S, t0: f64, t_final: f64, step: f64) -> Result<Self> {
        if !(step > 0.0) || t_final < t0 {
            return Err(Error::bad("field lattice needs a positive step and t_final >= t0"));
        }
        let n = ((t_final - t0) / step).round() as usize;
        if ((t0 + n as f64 * step) - t_final).abs() > 1e-9 * step.max(1.0) {
            return Err(Error::bad("t_final - t0 must be a multiple of the step"));
        }
        let fields = (0..=2 * n).map(|k| source.at(t0 + k as f64 * step / 2.0).cloned()).collect::<Result<_>>()?;
        Ok(FieldLattice { t0, step, fields })
    }

    pub fn source(&self) -> LatticeSource<'_, F> {
        LatticeSource { lattice: self }
    }
}

pub struct LatticeSource<'a, F> {
    lattice: &'a FieldLattice<F>,
}

impl<F: VelocityField> FieldSource for LatticeSource<'_, F> {
    type Field = F;

    fn at(&mut self, t: f64) -> Result<&F> {
        let half = self.lattice.step / 2.0;
        let x = (t - self.lattice.t0) / half;
        let k = x.round();
        if (x - k).abs() > 1e-6 || k < 0.0 || k as usize >= self.lattice.fields.len() {
            return Err(Error::bad(format!("time {t} is not on the field lattice")));
        }
        Ok(&self.lattice.fields[k as usize])
    }
}

/// A world line sampled at requested times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticlePath {
    pub times: Vec<f64>,
    pub configs: Vec<Vec<f64>>,
    /// Whether any step ending at or before this sample (and after the
    /// previous one) was regularized.
    pub node_flags: Vec<bool>,
    pub steps: usize,
    pub flagged_steps: usize,
}

impl ParticlePath {
    pub fn final_config(&self) -> &[f64] {
        self.configs.last().expect("paths hold at least one sample")
    }

    /// `t,q_0,...,q_{Nd-1},flag` rows with a header line.
    pub fn to_csv(&self) -> String {
        let n = self.configs.first().map_or(0, Vec::len);
        let mut out = String::from("t");
        for k in 0..n {
            out.push_str(&format!(",q{k}"));
        }
        out.push_str(",node_flag\n");
        for ((t, q), f) in self.times.iter().zip(&self.configs).zip(&self.node_flags) {
            out.push_str(&t.to_string());
            for x in q {
                out.push_str(&format!(",{x}"));
            }
            out.push_str(&format!(",{}\n", u8::from(*f)));
        }
        out
    }
}

fn add_scaled(grid: &GridSpec, q: &[f64], v: &[f64], s: f64) -> Vec<f64> {
    q.iter().zip(v).map(|(x, d)| grid.wrap(x + s * d)).collect()
}

/// One classical RK4 step of `dQ/dt = v(t, Q)`.
pub fn rk4_step<S: FieldSource>(grid: &GridSpec, source: &mut S, t: f64, q: &[f64], h: f64) -> Result<(Vec<f64>, bool)> {
    let k1 = source.at(t)?.velocity(q);
    let k2 = source.at(t + h / 2.0)?.velocity(&add_scaled(grid, q, &k1.v, h / 2.0));
    let k3 = source.at(t + h / 2.0)?.velocity(&add_scaled(grid, q, &k2.v, h / 2.0));
    let k4 = source.at(t + h)?.velocity(&add_scaled(grid, q, &k3.v, h));
    let flagged = k1.flagged || k2.flagged || k3.flagged || k4.flagged;
    let out = (0..q.len())
        .map(|k| grid.wrap(q[k] + h / 6.0 * (k1.v[k] + 2.0 * k2.v[k] + 2.0 * k3.v[k] + k4.v[k])))
        .collect();
    Ok((out, flagged))
}

/// Integrates a path from `(t0, q0)` through every time in `times` with RK4
/// steps no longer than `h_max`.
pub fn integrate_path<S: FieldSource>(
    grid: &GridSpec,
    source: &mut S,
    q0: &[f64],
    t0: f64,
    times: &[f64],
    h_max: f64,
) -> Result<ParticlePath> {
    if q0.len() != grid.n_axes() {
        return Err(Error::bad("initial configuration has the wrong length"));
    }
    if !(h_max > 0.0) {
        return Err(Error::bad("step size must be positive"));
    }
    let mut q: Vec<f64> = q0.iter().map(|&x| grid.wrap(x)).collect();
    let mut now = t0;
    let mut path = ParticlePath { times: vec![], configs: vec![], node_flags: vec![], steps: 0, flagged_steps: 0 };
    for &target in times {
        if !(target >= now) {
            return Err(Error::bad("sample times must be non-decreasing and not before t0"));
        }
        let span = target - now;
        let n = (span / h_max - 1e-9).ceil().max(0.0) as usize;
        let mut flagged_here = false;
        if n > 0 {
            let h = span / n as f64;
            if h <= 1e-12 * now.abs().max(1.0) {
                return Err(Error::StepSizeUnderflow { t: now });
            }
            for s in 0..n {
                let t = now + s as f64 * h;
                let (next, flagged) = rk4_step(grid, source, t, &q, h)?;
                q = next;
                path.steps += 1;
                if flagged {
                    path.flagged_steps += 1;
                    flagged_here = true;
                }
            }
        }
        now = target;
        path.times.push(target);
        path.configs.push(q.clone());
        path.node_flags.push(flagged_here);
    }
    if path.flagged_steps > 0 {
        log::debug!("path regularized at {} of {} steps", path.flagged_steps, path.steps);
    }
    Ok(path)
}

/// Max over `points` of `|d_t p + div(p v)|` in continuum units, with the
/// time derivative from central differences of master-equation solutions.
pub fn mbm_continuity_residual(
    master: &MasterEquation,
    rho0: &DensityMatrix,
    t: f64,
    dt: f64,
    points: &[Vec<f64>],
) -> Result<f64> {
    if !(dt > 0.0) || t < dt {
        return Err(Error::bad("need 0 < dt <= t"));
    }
    let states = master.trajectory(rho0, &[t - dt, t, t + dt])?;
    let fft = AxisFft::new(rho0.grid());
    let before = MbmField::with_fft(&states[0], &fft);
    let mid = MbmField::with_fft(&states[1], &fft);
    let after = MbmField::with_fft(&states[2], &fft);
    let scale = 1.0 / rho0.grid().config_cell_volume();
    Ok(points
        .iter()
        .map(|q| {
            let dp = (after.density(q) - before.density(q)) / (2.0 * dt);
            ((dp + mid.current_divergence(q)) * scale).abs()
        })
        .fold(0.0, f64::max))
}
