//! Fourier machinery on the periodic grid: wave numbers, unitary transforms
//! over every coordinate axis, and trigonometric interpolation.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::{Fft, FftPlanner};

use super::grid::GridSpec;
use super::state::C64;

/// Wave numbers `k_j = 2 pi j / (L a)` in FFT order. The Nyquist entry
/// (even `L`) is `+pi / a`.
pub fn wave_numbers(l: usize, a: f64) -> Vec<f64> {
    let len = l as f64 * a;
    (0..l)
        .map(|j| {
            let s = if j <= l / 2 { j as i64 } else { j as i64 - l as i64 };
            2.0 * PI * s as f64 / len
        })
        .collect()
}

fn is_nyquist(l: usize, j: usize) -> bool {
    l % 2 == 0 && j == l / 2
}

/// Unitary transforms along every coordinate axis of a flattened state.
#[derive(Clone)]
pub struct AxisFft {
    l: usize,
    n_axes: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for AxisFft {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("AxisFft").field("l", &self.l).field("n_axes", &self.n_axes).finish()
    }
}

impl AxisFft {
    pub fn new(grid: &GridSpec) -> Self {
        let l = grid.points_per_dim();
        let mut planner = FftPlanner::new();
        AxisFft { l, n_axes: grid.n_axes(), fwd: planner.plan_fft_forward(l), inv: planner.plan_fft_inverse(l) }
    }

    fn run(&self, data: &mut [C64], inverse: bool) {
        let l = self.l;
        let total = data.len();
        let plan = if inverse { &self.inv } else { &self.fwd };
        let scale = 1.0 / (l as f64).sqrt();
        let mut lines = vec![C64::new(0.0, 0.0); total];
        for axis in 0..self.n_axes {
            let stride = l.pow((self.n_axes - 1 - axis) as u32);
            let block = stride * l;
            let mut line = 0;
            for outer in (0..total).step_by(block) {
                for inner in 0..stride {
                    let base = outer + inner;
                    for n in 0..l {
                        lines[line * l + n] = data[base + n * stride];
                    }
                    line += 1;
                }
            }
            plan.process(&mut lines);
            let mut line = 0;
            for outer in (0..total).step_by(block) {
                for inner in 0..stride {
                    let base = outer + inner;
                    for n in 0..l {
                        data[base + n * stride] = lines[line * l + n] * scale;
                    }
                    line += 1;
                }
            }
        }
    }

    /// `c -> c_hat` with `c_hat_j = D^(-1/2) sum_q c_q exp(-i k_j . x_q)`.
    pub fn forward(&self, data: &mut [C64]) {
        self.run(data, false);
    }

    pub fn inverse(&self, data: &mut [C64]) {
        self.run(data, true);
    }
}

/// `sum_axes k^2 / (2 m)` for every Fourier mode, in the same flattened
/// order as configurations.
pub fn kinetic_spectrum(grid: &GridSpec) -> Vec<f64> {
    let l = grid.points_per_dim();
    let k = wave_numbers(l, grid.spacing());
    let per_axis: Vec<f64> = (0..grid.n_axes())
        .map(|ax| 1.0 / (2.0 * grid.masses()[grid.particle_of_axis(ax)]))
        .collect();
    let mut out = vec![0.0; grid.dim()];
    for (q, o) in out.iter_mut().enumerate() {
        let mut r = q;
        let mut e = 0.0;
        for ax in (0..grid.n_axes()).rev() {
            let j = r % l;
            r /= l;
            e += k[j] * k[j] * per_axis[ax];
        }
        *o = e;
    }
    out
}

/// Single-axis basis `phi_j(x)` with its first and second derivatives. The
/// Nyquist mode uses `cos(pi x / a)` so that interpolants of real data stay real.
fn axis_basis(l: usize, a: f64, k: &[f64], x: f64) -> [Vec<C64>; 3] {
    let norm = 1.0 / (l as f64).sqrt();
    let mut val = Vec::with_capacity(l);
    let mut der = Vec::with_capacity(l);
    let mut der2 = Vec::with_capacity(l);
    for j in 0..l {
        if is_nyquist(l, j) {
            let w = PI / a;
            let c = (w * x).cos() * norm;
            val.push(C64::new(c, 0.0));
            der.push(C64::new(-w * (w * x).sin() * norm, 0.0));
            der2.push(C64::new(-w * w * c, 0.0));
        } else {
            let e = C64::from_polar(norm, k[j] * x);
            val.push(e);
            der.push(e * C64::new(0.0, k[j]));
            der2.push(e * -(k[j] * k[j]));
        }
    }
    [val, der, der2]
}

/// Band-limited interpolation through grid values.
///
/// With `c_hat` from [`AxisFft::forward`], the interpolant
/// `f(Q) = sum_j c_hat_j prod_axes phi_{j_ax}(Q_ax)` reproduces the data
/// on every grid configuration.
#[derive(Debug, Clone)]
pub struct TrigBasis {
    l: usize,
    a: f64,
    n_axes: usize,
    k: Vec<f64>,
}

impl TrigBasis {
    pub fn new(grid: &GridSpec) -> Self {
        let l = grid.points_per_dim();
        TrigBasis { l, a: grid.spacing(), n_axes: grid.n_axes(), k: wave_numbers(l, grid.spacing()) }
    }

    /// Full product basis `Phi_j(Q)` and its partial derivatives along
    /// every axis, each of length `L^(N d)`.
    pub fn eval(&self, q: &[f64]) -> (Vec<C64>, Vec<Vec<C64>>) {
        let per_axis = self.per_axis(q);
        let value = kron(per_axis.iter().map(|b| b[0].as_slice()));
        let grads = (0..self.n_axes).map(|d| self.kron_with(&per_axis, d, 1)).collect();
        (value, grads)
    }

    /// Second partial derivatives `d^2 Phi_j / dQ_k^2` along every axis.
    pub fn eval_second(&self, q: &[f64]) -> Vec<Vec<C64>> {
        let per_axis = self.per_axis(q);
        (0..self.n_axes).map(|d| self.kron_with(&per_axis, d, 2)).collect()
    }

    /// `Phi_j(Q)` only.
    pub fn eval_value(&self, q: &[f64]) -> Vec<C64> {
        let per_axis = self.per_axis(q);
        kron(per_axis.iter().map(|b| b[0].as_slice()))
    }

    fn per_axis(&self, q: &[f64]) -> Vec<[Vec<C64>; 3]> {
        assert_eq!(q.len(), self.n_axes);
        q.iter().map(|&x| axis_basis(self.l, self.a, &self.k, x)).collect()
    }

    fn kron_with(&self, per_axis: &[[Vec<C64>; 3]], axis: usize, order: usize) -> Vec<C64> {
        kron(per_axis.iter().enumerate().map(|(ax, b)| if ax == axis { b[order].as_slice() } else { b[0].as_slice() }))
    }
}

fn kron<'a>(factors: impl Iterator<Item = &'a [C64]>) -> Vec<C64> {
    let mut out = vec![C64::new(1.0, 0.0)];
    for f in factors {
        let mut next = Vec::with_capacity(out.len() * f.len());
        for o in &out {
            for x in f {
                next.push(o * x);
            }
        }
        out = next;
    }
    out
}

/// Interpolant of a pure state: value and gradient of `psi~` at `Q`.
///
/// Values are in the discrete normalization; `|psi~(Q)|^2 / a^(N d)` is the
/// continuum density.
#[derive(Debug, Clone)]
pub struct StateInterpolant {
    basis: TrigBasis,
    coeffs: Vec<C64>,
}

impl StateInterpolant {
    pub fn new(grid: &GridSpec, amps: &[C64], fft: &AxisFft) -> Self {
        let mut coeffs = amps.to_vec();
        fft.forward(&mut coeffs);
        StateInterpolant { basis: TrigBasis::new(grid), coeffs }
    }

    pub fn value(&self, q: &[f64]) -> C64 {
        dot(&self.basis.eval_value(q), &self.coeffs)
    }

    pub fn value_and_gradient(&self, q: &[f64]) -> (C64, Vec<C64>) {
        let (v, g) = self.basis.eval(q);
        (dot(&v, &self.coeffs), g.iter().map(|gk| dot(gk, &self.coeffs)).collect())
    }

    /// Fourier coefficients `c_hat` (unit norm for a normalized state).
    pub fn coefficients(&self) -> &[C64] {
        &self.coeffs
    }
}

fn dot(basis: &[C64], coeffs: &[C64]) -> C64 {
    basis.iter().zip(coeffs).map(|(b, c)| b * c).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wave_numbers_in_fft_order() {
        let k = wave_numbers(8, 0.5);
        let unit = 2.0 * PI / 4.0;
        let expect = [0.0, 1.0, 2.0, 3.0, 4.0, -3.0, -2.0, -1.0];
        for (a, b) in k.iter().zip(expect) {
            assert!((a - b * unit).abs() < 1e-14);
        }
        assert!((k[4] - PI / 0.5).abs() < 1e-14);
    }

    #[test]
    fn transform_matches_direct_sum() {
        let g = GridSpec::build(2, 1, 4, 0.7, vec![1.0, 1.0]).unwrap();
        let fft = AxisFft::new(&g);
        let mut rng = crate::rng::stream(1, 0);
        let data: Vec<C64> = (0..16).map(|_| C64::new(crate::rng::unit(&mut rng) - 0.5, crate::rng::unit(&mut rng))).collect();
        let mut hat = data.clone();
        fft.forward(&mut hat);
        let k = wave_numbers(4, 0.7);
        for j in 0..16 {
            let (j0, j1) = (j / 4, j % 4);
            let direct: C64 = (0..16)
                .map(|q| {
                    let (n0, n1) = (q / 4, q % 4);
                    let ph = -(k[j0] * n0 as f64 + k[j1] * n1 as f64) * 0.7;
                    data[q] * C64::from_polar(0.25, ph)
                })
                .sum();
            assert!((direct - hat[j]).norm() < 1e-13);
        }
        fft.inverse(&mut hat);
        for (a, b) in hat.iter().zip(&data) {
            assert!((a - b).norm() < 1e-13);
        }
    }

    #[test]
    fn interpolant_reproduces_grid_values() {
        let g = GridSpec::build(2, 1, 6, 0.5, vec![1.0, 1.0]).unwrap();
        let fft = AxisFft::new(&g);
        let mut rng = crate::rng::stream(2, 0);
        let data: Vec<C64> = (0..36).map(|_| C64::new(crate::rng::unit(&mut rng), crate::rng::unit(&mut rng))).collect();
        let interp = StateInterpolant::new(&g, &data, &fft);
        for q in 0..36 {
            let x = g.config_position(q);
            assert!((interp.value(&x) - data[q]).norm() < 1e-12);
        }
    }

    #[test]
    fn gradient_matches_finite_difference() {
        let g = GridSpec::build(1, 2, 8, 0.6, vec![1.0]).unwrap();
        let fft = AxisFft::new(&g);
        let mut rng = crate::rng::stream(3, 0);
        let data: Vec<C64> = (0..64).map(|_| C64::new(crate::rng::unit(&mut rng), crate::rng::unit(&mut rng))).collect();
        let interp = StateInterpolant::new(&g, &data, &fft);
        let q = [1.234, 3.21];
        let (_, grad) = interp.value_and_gradient(&q);
        let h = 1e-6;
        for ax in 0..2 {
            let mut p = q;
            let mut m = q;
            p[ax] += h;
            m[ax] -= h;
            let fd = (interp.value(&p) - interp.value(&m)) / (2.0 * h);
            assert!((fd - grad[ax]).norm() < 1e-6);
        }
    }

    #[test]
    fn kinetic_spectrum_of_a_plane_wave() {
        let g = GridSpec::build(1, 1, 16, 0.5, vec![2.0]).unwrap();
        let t = kinetic_spectrum(&g);
        let k = wave_numbers(16, 0.5);
        assert!((t[3] - k[3] * k[3] / 4.0).abs() < 1e-14);
        assert!((t[8] - (PI / 0.5).powi(2) / 4.0).abs() < 1e-12);
    }
}
