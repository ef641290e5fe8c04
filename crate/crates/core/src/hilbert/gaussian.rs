use std::f64::consts::PI;

use num_complex::Complex64;

use super::grid::GridSpec;
use super::state::{DensityMatrix, StateVector};
use crate::error::{Error, Result};

/// Smallest collapse weight `Z(x)` that may be renormalized.
pub const MIN_COLLAPSE_WEIGHT: f64 = 1e-15;

const TAIL: f64 = 1e-14;

fn image_count(sigma: f64, box_len: f64) -> i64 {
    let reach = sigma * (2.0 * (1.0 / TAIL).ln()).sqrt();
    (reach / box_len).ceil() as i64 + 1
}

/// Periodized 1-D normal density of width `sigma` on a ring of length `box_len`.
pub fn wrapped_normal(x: f64, sigma: f64, box_len: f64) -> f64 {
    let w = image_count(sigma, box_len);
    let norm = 1.0 / ((2.0 * PI).sqrt() * sigma);
    (-w..=w)
        .map(|k| {
            let y = x + k as f64 * box_len;
            (-(y * y) / (2.0 * sigma * sigma)).exp()
        })
        .sum::<f64>()
        * norm
}

/// Renormalization constant making the wrapped normal sum to one over the lattice.
fn lattice_scale(sigma: f64, l: usize, a: f64) -> f64 {
    let box_len = l as f64 * a;
    let mass: f64 = (0..l).map(|n| wrapped_normal(n as f64 * a, sigma, box_len)).sum::<f64>() * a;
    1.0 / mass
}

/// The collapse profile `g` at a continuum displacement (one particle's `d`
/// coordinates), periodized and scaled so that `sum_x g(x) a^d = 1` over the grid.
pub fn gaussian_profile(x: &[f64], sigma: f64, grid: &GridSpec) -> Result<f64> {
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(Error::bad(format!("sigma must be positive, got {sigma}")));
    }
    if x.len() != grid.dims() {
        return Err(Error::bad(format!("displacement needs {} coordinates", grid.dims())));
    }
    let scale = lattice_scale(sigma, grid.points_per_dim(), grid.spacing());
    Ok(x.iter().map(|&xi| wrapped_normal(xi, sigma, grid.box_len()) * scale).product())
}

/// Tabulated lattice collapse kernel for one grid and width.
///
/// `g1[n]` is the renormalized 1-D profile at offset `n a` (mod `L a`);
/// the `d`-dimensional kernel is the product over axes. `gamma1[n]` is the
/// overlap `sum_m a sqrt(g1[m]) sqrt(g1[m + n])` entering the master equation.
#[derive(Debug, Clone)]
pub struct CollapseKernel {
    sigma: f64,
    l: usize,
    dims: usize,
    cell: f64,
    g1: Vec<f64>,
    sqrt_g1: Vec<f64>,
    gamma1: Vec<f64>,
}

impl CollapseKernel {
    pub fn new(grid: &GridSpec, sigma: f64) -> Result<Self> {
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(Error::bad(format!("sigma must be positive, got {sigma}")));
        }
        let l = grid.points_per_dim();
        let a = grid.spacing();
        let box_len = grid.box_len();
        let raw: Vec<f64> = (0..l).map(|n| wrapped_normal(n as f64 * a, sigma, box_len)).collect();
        let mass: f64 = raw.iter().sum::<f64>() * a;
        let g1: Vec<f64> = raw.iter().map(|g| g / mass).collect();
        let sqrt_g1: Vec<f64> = g1.iter().map(|g| g.sqrt()).collect();
        let gamma1 = (0..l)
            .map(|n| (0..l).map(|m| sqrt_g1[m] * sqrt_g1[(m + n) % l]).sum::<f64>() * a)
            .collect();
        Ok(CollapseKernel { sigma, l, dims: grid.dims(), cell: grid.cell_volume(), g1, sqrt_g1, gamma1 })
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn profile_1d(&self) -> &[f64] {
        &self.g1
    }

    pub fn overlap_1d(&self) -> &[f64] {
        &self.gamma1
    }

    fn offset_coords(&self, from: usize, to: usize) -> impl Iterator<Item = usize> + '_ {
        let l = self.l;
        let mut f = from;
        let mut t = to;
        let mut out = Vec::with_capacity(self.dims);
        for _ in 0..self.dims {
            out.push((t % l + l - f % l) % l);
            f /= l;
            t /= l;
        }
        out.into_iter()
    }

    /// `g(s - x)` for sites `s` and `x`.
    pub fn site_value(&self, s: usize, x: usize) -> f64 {
        self.offset_coords(x, s).map(|n| self.g1[n]).product()
    }

    /// `sqrt(g(s - x))`.
    pub fn site_sqrt(&self, s: usize, x: usize) -> f64 {
        self.offset_coords(x, s).map(|n| self.sqrt_g1[n]).product()
    }

    /// Overlap `sum_x a^d sqrt(g(s - x) g(s' - x))`, equal to one when `s = s'`
    /// up to rounding.
    pub fn site_overlap(&self, s: usize, s2: usize) -> f64 {
        self.offset_coords(s2, s).map(|n| self.gamma1[n]).product()
    }

    /// `g(s - x)` for every site `s`.
    pub fn weights_about(&self, grid: &GridSpec, x: usize) -> Vec<f64> {
        (0..grid.sites()).map(|s| self.site_value(s, x)).collect()
    }

    /// Probability of each lattice offset, `g(z) a^d`; sums to one.
    pub fn offset_probabilities(&self, grid: &GridSpec) -> Vec<f64> {
        (0..grid.sites()).map(|z| self.site_value(z, 0) * self.cell).collect()
    }

    /// Full matrix of site overlaps.
    pub fn overlap_table(&self, grid: &GridSpec) -> Vec<Vec<f64>> {
        let s = grid.sites();
        (0..s).map(|i| (0..s).map(|j| self.site_overlap(i, j)).collect()).collect()
    }
}

/// Which configuration-space operator a collapse applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CollapseTarget {
    /// `g(q_i - x)` for one particle label.
    Particle(usize),
    /// The label-symmetric average `(1/N) sum_i g(q_i - x)`.
    Symmetric,
}

/// Diagonal collapse multiplier over configurations for a center site `x`.
pub fn collapse_multiplier(grid: &GridSpec, kernel: &CollapseKernel, target: CollapseTarget, x: usize) -> Vec<f64> {
    let site_w = kernel.weights_about(grid, x);
    match target {
        CollapseTarget::Particle(i) => (0..grid.dim()).map(|q| site_w[grid.site_of(q, i)]).collect(),
        CollapseTarget::Symmetric => {
            let n = grid.n_particles();
            (0..grid.dim())
                .map(|q| (0..n).map(|i| site_w[grid.site_of(q, i)]).sum::<f64>() / n as f64)
                .collect()
        }
    }
}

/// `Z(x)^2` for a collapse of particle `i` centered on site `x`.
pub fn collapse_weight(psi: &StateVector, kernel: &CollapseKernel, i: usize, x: usize) -> f64 {
    let grid = psi.grid();
    let site_w = kernel.weights_about(grid, x);
    psi.amplitudes()
        .iter()
        .enumerate()
        .map(|(q, c)| site_w[grid.site_of(q, i)] * c.norm_sqr())
        .sum()
}

/// `Z(x)^2` for every center site. Multiplying by `a^d` gives the center
/// distribution of a collapse of particle `i`.
pub fn collapse_weights(psi: &StateVector, kernel: &CollapseKernel, i: usize) -> Vec<f64> {
    let grid = psi.grid();
    let marginal = psi.site_marginal(i);
    (0..grid.sites())
        .map(|x| marginal.iter().enumerate().map(|(s, p)| kernel.site_value(s, x) * p).sum())
        .collect()
}

/// Center weights `<psi|Lambda_x|psi>` for the label-symmetric collapse.
pub fn symmetric_collapse_weights(psi: &StateVector, kernel: &CollapseKernel) -> Vec<f64> {
    let n = psi.grid().n_particles();
    let mut out = vec![0.0; psi.grid().sites()];
    for i in 0..n {
        for (o, w) in out.iter_mut().zip(collapse_weights(psi, kernel, i)) {
            *o += w / n as f64;
        }
    }
    out
}

/// Applies a diagonal collapse multiplier `m` as `m^(1/2) psi / |m^(1/2) psi|`.
pub fn apply_multiplier(psi: &StateVector, mult: &[f64], site: usize) -> Result<StateVector> {
    let weight: f64 = psi.amplitudes().iter().zip(mult).map(|(c, m)| m * c.norm_sqr()).sum();
    let z = weight.sqrt();
    if !(z > MIN_COLLAPSE_WEIGHT) {
        return Err(Error::ZeroWeight { site, weight: z });
    }
    let amps: Vec<Complex64> =
        psi.amplitudes().iter().zip(mult).map(|(c, m)| c * (m.sqrt() / z)).collect();
    StateVector::from_amplitudes(psi.grid_arc(), amps)
}

/// Collapse of particle `i` centered on site `x`.
pub fn collapse_state(psi: &StateVector, kernel: &CollapseKernel, i: usize, x: usize) -> Result<StateVector> {
    let mult = collapse_multiplier(psi.grid(), kernel, CollapseTarget::Particle(i), x);
    apply_multiplier(psi, &mult, x)
}

/// Label-symmetric collapse centered on site `x`.
pub fn collapse_state_symmetric(psi: &StateVector, kernel: &CollapseKernel, x: usize) -> Result<StateVector> {
    let mult = collapse_multiplier(psi.grid(), kernel, CollapseTarget::Symmetric, x);
    apply_multiplier(psi, &mult, x)
}

/// `tr(g_{i,x} rho)` for every center site.
pub fn collapse_weights_dm(rho: &DensityMatrix, kernel: &CollapseKernel, i: usize) -> Vec<f64> {
    let grid = rho.grid();
    let marginal = rho.site_marginal(i);
    (0..grid.sites())
        .map(|x| marginal.iter().enumerate().map(|(s, p)| kernel.site_value(s, x) * p).sum())
        .collect()
}

/// `g^(1/2) rho g^(1/2) / tr(g rho)` for particle `i` at site `x`.
pub fn collapse_density(rho: &DensityMatrix, kernel: &CollapseKernel, i: usize, x: usize) -> Result<DensityMatrix> {
    let mult = collapse_multiplier(rho.grid(), kernel, CollapseTarget::Particle(i), x);
    let diag = rho.diagonal();
    let weight: f64 = diag.iter().zip(&mult).map(|(p, m)| p * m).sum();
    if !(weight.sqrt() > MIN_COLLAPSE_WEIGHT) {
        return Err(Error::ZeroWeight { site: x, weight: weight.sqrt() });
    }
    let roots: Vec<f64> = mult.iter().map(|m| m.sqrt()).collect();
    let mut m = rho.matrix().clone();
    let dim = m.nrows();
    for c in 0..dim {
        for r in 0..dim {
            m[(r, c)] *= roots[r] * roots[c] / weight;
        }
    }
    DensityMatrix::from_matrix(rho.grid_arc(), m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Arc;

    fn ring(l: usize, a: f64) -> Arc<GridSpec> {
        Arc::new(GridSpec::build(1, 1, l, a, vec![1.0]).unwrap())
    }

    #[test]
    fn profile_at_origin_in_a_wide_box() {
        let g = ring(64, 1.0);
        let v = gaussian_profile(&[0.0], 1.0, &g).unwrap();
        assert!((v - 0.398_942_280_401_432_7).abs() < 1e-8);
    }

    #[test]
    fn profile_matches_brute_force_image_sum() {
        let g = ring(8, 1.0);
        let sigma: f64 = 2.0;
        let brute: f64 = (-10..=10)
            .map(|w| {
                let y = 3.0 + 8.0 * w as f64;
                (-(y * y) / (2.0 * sigma * sigma)).exp() / ((2.0 * PI).sqrt() * sigma)
            })
            .sum();
        let lattice_mass: f64 = (0..8)
            .map(|n| {
                (-10..=10)
                    .map(|w| {
                        let y = n as f64 + 8.0 * w as f64;
                        (-(y * y) / (2.0 * sigma * sigma)).exp() / ((2.0 * PI).sqrt() * sigma)
                    })
                    .sum::<f64>()
            })
            .sum();
        let v = gaussian_profile(&[3.0], sigma, &g).unwrap();
        assert!((v - brute / lattice_mass).abs() < 1e-14);
        assert!((v - brute).abs() < 1e-8);
    }

    #[test]
    fn profile_is_even_and_unit_mass() {
        for &(l, a, sigma) in &[(8, 1.0, 2.0), (16, 0.5, 0.3), (5, 1.3, 4.0)] {
            let g = ring(l, a);
            let k = CollapseKernel::new(&g, sigma).unwrap();
            let total: f64 = k.profile_1d().iter().sum::<f64>() * a;
            assert!((total - 1.0).abs() < 1e-12);
            for n in 0..l {
                let x = n as f64 * a;
                let p = gaussian_profile(&[x], sigma, &g).unwrap();
                let m = gaussian_profile(&[-x], sigma, &g).unwrap();
                assert!((p - m).abs() < 1e-15);
                assert!((p - k.profile_1d()[n]).abs() < 1e-14);
            }
        }
        let g = GridSpec::build(1, 2, 6, 0.7, vec![1.0]).unwrap();
        let k = CollapseKernel::new(&g, 1.1).unwrap();
        let total: f64 = k.offset_probabilities(&g).iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_nonpositive_sigma() {
        let g = ring(8, 1.0);
        assert!(gaussian_profile(&[0.0], 0.0, &g).is_err());
        assert!(CollapseKernel::new(&g, -1.0).is_err());
    }

    #[test]
    fn two_site_weights_by_hand() {
        let g = ring(2, 1.0);
        let k = CollapseKernel::new(&g, 1.0).unwrap();
        let psi = StateVector::from_real(g.clone(), &[0.8f64.sqrt(), 0.2f64.sqrt()]).unwrap();
        let norm = 1.0 / (2.0 * PI).sqrt();
        let w = |x: f64| -> f64 { (-50..=50).map(|m| (-(x + 2.0 * m as f64).powi(2) / 2.0).exp() * norm).sum() };
        let (g0, g1) = (w(0.0), w(1.0));
        let (g0, g1) = (g0 / (g0 + g1), g1 / (g0 + g1));
        let z0 = collapse_weight(&psi, &k, 0, 0);
        let z1 = collapse_weight(&psi, &k, 0, 1);
        assert!((z0 - (0.8 * g0 + 0.2 * g1)).abs() < 1e-14);
        assert!((z1 - (0.8 * g1 + 0.2 * g0)).abs() < 1e-14);
        assert!((z0 + z1 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn point_mass_weight_is_the_profile() {
        let g = ring(16, 0.5);
        let k = CollapseKernel::new(&g, 1.0).unwrap();
        let psi = StateVector::position_eigenstate(g.clone(), 5).unwrap();
        for x in 0..16 {
            assert!((collapse_weight(&psi, &k, 0, x) - k.site_value(5, x)).abs() < 1e-15);
        }
        let after = collapse_state(&psi, &k, 0, 9).unwrap();
        assert!((after.amplitudes()[5].norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn weights_sum_to_one() {
        let g = Arc::new(GridSpec::build(2, 1, 8, 0.5, vec![1.0, 2.0]).unwrap());
        let k = CollapseKernel::new(&g, 0.7).unwrap();
        let psi = StateVector::random(g.clone(), &mut crate::rng::stream(3, 0));
        for i in 0..2 {
            let z: f64 = collapse_weights(&psi, &k, i).iter().sum::<f64>() * g.cell_volume();
            assert!((z - 1.0).abs() < 1e-10);
        }
        let z: f64 = symmetric_collapse_weights(&psi, &k).iter().sum::<f64>() * g.cell_volume();
        assert!((z - 1.0).abs() < 1e-10);
    }

    #[test]
    fn uniform_state_weights_are_flat() {
        let g = ring(4, 1.0);
        let k = CollapseKernel::new(&g, 50.0).unwrap();
        let psi = StateVector::from_real(g.clone(), &[0.5; 4]).unwrap();
        for x in 0..4 {
            assert!((collapse_weight(&psi, &k, 0, x) - 0.25).abs() < 1e-12);
        }
    }

    #[test]
    fn repeated_collapse_matches_narrower_product() {
        let g = ring(32, 0.5);
        let k = CollapseKernel::new(&g, 1.0).unwrap();
        let psi = StateVector::random(g.clone(), &mut crate::rng::stream(11, 0));
        let twice = collapse_state(&collapse_state(&psi, &k, 0, 7).unwrap(), &k, 0, 7).unwrap();
        let w = k.weights_about(&g, 7);
        let amps: Vec<Complex64> = psi.amplitudes().iter().zip(&w).map(|(c, w)| c * *w).collect();
        let once = StateVector::from_amplitudes(g.clone(), amps).unwrap();
        assert!((twice.inner(&once).norm() - 1.0).abs() < 1e-12);
        for (a, b) in twice.amplitudes().iter().zip(once.amplitudes()) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn cat_collapse_kills_far_branch() {
        let g = Arc::new(GridSpec::build(2, 1, 32, 1.0, vec![1.0, 1.0]).unwrap());
        let k = CollapseKernel::new(&g, 1.0).unwrap();
        let here = g.config_index(&[8, 8]);
        let there = g.config_index(&[24, 24]);
        let mut amps = vec![Complex64::new(0.0, 0.0); g.dim()];
        amps[here] = Complex64::new(1.0, 0.0);
        amps[there] = Complex64::new(1.0, 0.0);
        let cat = StateVector::from_amplitudes(g.clone(), amps).unwrap();
        let after = collapse_state(&cat, &k, 0, 9).unwrap();
        assert!(after.amplitudes()[there].norm_sqr() < 1e-6);
        assert!((after.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_weight_is_an_error() {
        let g = ring(64, 1.0);
        let k = CollapseKernel::new(&g, 0.2).unwrap();
        let psi = StateVector::position_eigenstate(g.clone(), 0).unwrap();
        assert!(matches!(collapse_state(&psi, &k, 0, 32), Err(Error::ZeroWeight { .. })));
    }

    #[test]
    fn overlap_is_one_on_the_diagonal() {
        let g = GridSpec::build(1, 2, 5, 0.8, vec![1.0]).unwrap();
        let k = CollapseKernel::new(&g, 0.9).unwrap();
        for s in 0..g.sites() {
            assert!((k.site_overlap(s, s) - 1.0).abs() < 1e-14);
        }
        let brute = |s: usize, t: usize| -> f64 {
            (0..g.sites()).map(|x| (k.site_value(s, x) * k.site_value(t, x)).sqrt()).sum::<f64>() * g.cell_volume()
        };
        assert!((k.site_overlap(3, 17) - brute(3, 17)).abs() < 1e-14);
    }

    #[test]
    fn density_collapse_matches_pure_collapse() {
        let g = Arc::new(GridSpec::build(2, 1, 4, 1.0, vec![1.0, 1.0]).unwrap());
        let k = CollapseKernel::new(&g, 0.8).unwrap();
        let psi = StateVector::random(g.clone(), &mut crate::rng::stream(5, 1));
        let rho = DensityMatrix::pure(&psi);
        let a = collapse_density(&rho, &k, 1, 2).unwrap();
        let b = DensityMatrix::pure(&collapse_state(&psi, &k, 1, 2).unwrap());
        assert!((a.matrix() - b.matrix()).camax() < 1e-13);
        let w = collapse_weights_dm(&rho, &k, 1);
        let v = collapse_weights(&psi, &k, 1);
        for (x, y) in w.iter().zip(&v) {
            assert!((x - y).abs() < 1e-14);
        }
    }
}
