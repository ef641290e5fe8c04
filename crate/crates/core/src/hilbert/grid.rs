use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default cap on the configuration count of a pure state.
pub const PURE_DIM_CAP: usize = 1 << 20;
/// Default cap on the configuration count backing a dense density matrix.
pub const MIXED_DIM_CAP: usize = 1 << 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StateKind {
    Pure,
    Mixed,
}

/// Periodic lattice for `n_particles` particles in `dims` spatial dimensions.
///
/// Configurations are flattened row-major over the `n_particles * dims`
/// axes, particle 0 most significant. Within one particle, axis 0 is most
/// significant. A single-particle grid point is called a *site*.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    n_particles: usize,
    dims: usize,
    points_per_dim: usize,
    spacing: f64,
    masses: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    charges: Option<Vec<f64>>,
}

impl GridSpec {
    /// Validated grid, checked against the pure-state cap.
    pub fn build(
        n_particles: usize,
        dims: usize,
        points_per_dim: usize,
        spacing: f64,
        masses: Vec<f64>,
    ) -> Result<Self> {
        if n_particles == 0 {
            return Err(Error::bad("n_particles must be positive"));
        }
        if !(1..=3).contains(&dims) {
            return Err(Error::bad(format!("dims must be 1, 2 or 3, got {dims}")));
        }
        if points_per_dim < 2 {
            return Err(Error::bad("points_per_dim must be at least 2"));
        }
        if !(spacing.is_finite() && spacing > 0.0) {
            return Err(Error::bad(format!("spacing must be positive, got {spacing}")));
        }
        if masses.len() != n_particles {
            return Err(Error::bad(format!(
                "expected {n_particles} masses, got {}",
                masses.len()
            )));
        }
        if masses.iter().any(|m| !(m.is_finite() && *m > 0.0)) {
            return Err(Error::bad("masses must be strictly positive"));
        }
        let grid = GridSpec { n_particles, dims, points_per_dim, spacing, masses, charges: None };
        grid.check_cap(StateKind::Pure, PURE_DIM_CAP)?;
        Ok(grid)
    }

    /// One particle on a 1-D ring of `l` points with unit spacing and mass.
    pub fn ring(l: usize) -> Result<Self> {
        Self::build(1, 1, l, 1.0, vec![1.0])
    }

    pub fn with_charges(mut self, charges: Vec<f64>) -> Result<Self> {
        if charges.len() != self.n_particles {
            return Err(Error::bad(format!(
                "expected {} charges, got {}",
                self.n_particles,
                charges.len()
            )));
        }
        if charges.iter().any(|c| !c.is_finite()) {
            return Err(Error::bad("charges must be finite"));
        }
        self.charges = Some(charges);
        Ok(self)
    }

    /// Re-validates after deserialization.
    pub fn validated(self) -> Result<Self> {
        let charges = self.charges.clone();
        let g = Self::build(self.n_particles, self.dims, self.points_per_dim, self.spacing, self.masses)?;
        match charges {
            Some(c) => g.with_charges(c),
            None => Ok(g),
        }
    }

    /// Fails with `CapExceeded` when the configuration count is over `cap`.
    ///
    /// For mixed states the cap bounds the pure dimension, so a 4096-point
    /// configuration space (a 4096 x 4096 matrix) passes a 2^12 cap exactly.
    pub fn check_cap(&self, _kind: StateKind, cap: usize) -> Result<()> {
        let dim = (self.points_per_dim as u128).pow((self.n_particles * self.dims) as u32);
        if dim > cap as u128 {
            return Err(Error::CapExceeded { dim, cap: cap as u128 });
        }
        Ok(())
    }

    pub fn require_mixed(&self) -> Result<()> {
        self.check_cap(StateKind::Mixed, MIXED_DIM_CAP)
    }

    pub fn n_particles(&self) -> usize {
        self.n_particles
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn points_per_dim(&self) -> usize {
        self.points_per_dim
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn charges(&self) -> Option<&[f64]> {
        self.charges.as_deref()
    }

    pub fn total_mass(&self) -> f64 {
        self.masses.iter().sum()
    }

    /// Number of configurations, `L^(N d)`.
    pub fn dim(&self) -> usize {
        self.points_per_dim.pow((self.n_particles * self.dims) as u32)
    }

    /// Number of single-particle sites, `L^d`.
    pub fn sites(&self) -> usize {
        self.points_per_dim.pow(self.dims as u32)
    }

    /// Total number of coordinate axes, `N d`.
    pub fn n_axes(&self) -> usize {
        self.n_particles * self.dims
    }

    pub fn box_len(&self) -> f64 {
        self.points_per_dim as f64 * self.spacing
    }

    /// Volume of one single-particle cell, `a^d`.
    pub fn cell_volume(&self) -> f64 {
        self.spacing.powi(self.dims as i32)
    }

    /// Volume of one configuration cell, `a^(N d)`.
    pub fn config_cell_volume(&self) -> f64 {
        self.spacing.powi(self.n_axes() as i32)
    }

    /// Particle owning coordinate axis `axis`.
    pub fn particle_of_axis(&self, axis: usize) -> usize {
        axis / self.dims
    }

    /// Site of `particle` in configuration `q`.
    pub fn site_of(&self, q: usize, particle: usize) -> usize {
        let stride = self.sites().pow((self.n_particles - 1 - particle) as u32);
        (q / stride) % self.sites()
    }

    /// Lattice index along coordinate axis `axis` of configuration `q`.
    pub fn axis_index(&self, q: usize, axis: usize) -> usize {
        let stride = self.points_per_dim.pow((self.n_axes() - 1 - axis) as u32);
        (q / stride) % self.points_per_dim
    }

    /// Configuration index from one site per particle.
    pub fn config_index(&self, sites: &[usize]) -> usize {
        debug_assert_eq!(sites.len(), self.n_particles);
        sites.iter().fold(0, |acc, &s| acc * self.sites() + s)
    }

    /// Configuration `q` with `particle` moved to `site`.
    pub fn with_site(&self, q: usize, particle: usize, site: usize) -> usize {
        let stride = self.sites().pow((self.n_particles - 1 - particle) as u32);
        let old = (q / stride) % self.sites();
        q - old * stride + site * stride
    }

    /// Per-axis lattice indices of a site.
    pub fn site_coords(&self, site: usize) -> Vec<usize> {
        let l = self.points_per_dim;
        let mut out = vec![0; self.dims];
        let mut s = site;
        for k in (0..self.dims).rev() {
            out[k] = s % l;
            s /= l;
        }
        out
    }

    pub fn site_from_coords(&self, coords: &[usize]) -> usize {
        coords.iter().fold(0, |acc, &c| acc * self.points_per_dim + c % self.points_per_dim)
    }

    /// Position of a site in the box.
    pub fn site_position(&self, site: usize) -> Vec<f64> {
        self.site_coords(site).into_iter().map(|c| c as f64 * self.spacing).collect()
    }

    /// Nearest site to a continuum point (one particle's `d` coordinates).
    pub fn snap(&self, x: &[f64]) -> usize {
        let l = self.points_per_dim as i64;
        let coords: Vec<usize> = x
            .iter()
            .map(|&xi| ((xi / self.spacing).round() as i64).rem_euclid(l) as usize)
            .collect();
        self.site_from_coords(&coords)
    }

    /// Lattice indices of all `N d` axes of configuration `q`.
    pub fn axis_indices(&self, q: usize) -> Vec<usize> {
        let l = self.points_per_dim;
        let m = self.n_axes();
        let mut out = vec![0; m];
        let mut r = q;
        for k in (0..m).rev() {
            out[k] = r % l;
            r /= l;
        }
        out
    }

    /// Positions of all axes of configuration `q`.
    pub fn config_position(&self, q: usize) -> Vec<f64> {
        self.axis_indices(q).into_iter().map(|i| i as f64 * self.spacing).collect()
    }

    /// Reduces a coordinate into `[0, L a)`.
    pub fn wrap(&self, x: f64) -> f64 {
        let len = self.box_len();
        let r = x.rem_euclid(len);
        // rem_euclid can return `len` for tiny negative inputs.
        if r >= len { 0.0 } else { r }
    }

    /// Shortest signed periodic displacement `x - y`.
    pub fn min_image(&self, x: f64, y: f64) -> f64 {
        let len = self.box_len();
        let d = (x - y).rem_euclid(len);
        if d > 0.5 * len { d - len } else { d }
    }
}

/// Continuum configuration `(Q_1, ..., Q_N)`, each coordinate reduced into
/// the periodic box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Configuration(Vec<f64>);

impl Configuration {
    pub fn new(grid: &GridSpec, coords: Vec<f64>) -> Result<Self> {
        if coords.len() != grid.n_axes() {
            return Err(Error::bad(format!(
                "configuration needs {} coordinates, got {}",
                grid.n_axes(),
                coords.len()
            )));
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::bad("configuration coordinates must be finite"));
        }
        Ok(Configuration(coords.into_iter().map(|c| grid.wrap(c)).collect()))
    }

    /// The lattice point of configuration index `q`.
    pub fn at_config(grid: &GridSpec, q: usize) -> Self {
        Configuration(grid.config_position(q))
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn particle<'a>(&'a self, grid: &GridSpec, i: usize) -> &'a [f64] {
        &self.0[i * grid.dims()..(i + 1) * grid.dims()]
    }

    pub fn set_particle(&mut self, grid: &GridSpec, i: usize, x: &[f64]) {
        let d = grid.dims();
        for (k, &xk) in x.iter().enumerate() {
            self.0[i * d + k] = grid.wrap(xk);
        }
    }

    /// Moves every coordinate by `dq`, wrapping into the box.
    pub fn displaced(&self, grid: &GridSpec, dq: &[f64]) -> Self {
        Configuration(self.0.iter().zip(dq).map(|(x, d)| grid.wrap(x + d)).collect())
    }

    /// Nearest lattice configuration.
    pub fn snap(&self, grid: &GridSpec) -> usize {
        let sites: Vec<usize> =
            (0..grid.n_particles()).map(|i| grid.snap(self.particle(grid, i))).collect();
        grid.config_index(&sites)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn configuration_counts() {
        assert_eq!(GridSpec::build(1, 1, 8, 1.0, vec![1.0]).unwrap().dim(), 8);
        assert_eq!(GridSpec::build(2, 1, 4, 0.5, vec![1.0, 2.0]).unwrap().dim(), 16);
    }

    #[test]
    fn mixed_cap_boundary_is_inclusive() {
        let g = GridSpec::build(2, 1, 64, 1.0, vec![1.0, 1.0]).unwrap();
        assert_eq!(g.dim(), 4096);
        g.require_mixed().unwrap();
        let g = GridSpec::build(3, 1, 32, 1.0, vec![1.0; 3]).unwrap();
        assert!(matches!(g.require_mixed(), Err(Error::CapExceeded { .. })));
    }

    #[test]
    fn pure_cap_rejects_huge_grids() {
        let err = GridSpec::build(3, 3, 16, 1.0, vec![1.0; 3]).unwrap_err();
        assert!(matches!(err, Error::CapExceeded { .. }));
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(GridSpec::build(0, 1, 8, 1.0, vec![]).is_err());
        assert!(GridSpec::build(1, 1, 8, 0.0, vec![1.0]).is_err());
        assert!(GridSpec::build(1, 1, 8, 1.0, vec![-1.0]).is_err());
        assert!(GridSpec::build(1, 4, 8, 1.0, vec![1.0]).is_err());
        assert!(GridSpec::build(2, 1, 8, 1.0, vec![1.0]).is_err());
    }

    #[test]
    fn index_round_trip() {
        let g = GridSpec::build(2, 2, 3, 1.0, vec![1.0, 1.0]).unwrap();
        for q in 0..g.dim() {
            let sites: Vec<usize> = (0..2).map(|i| g.site_of(q, i)).collect();
            assert_eq!(g.config_index(&sites), q);
            let axes = g.axis_indices(q);
            for (k, &ax) in axes.iter().enumerate() {
                assert_eq!(g.axis_index(q, k), ax);
            }
            let moved = g.with_site(q, 1, 4);
            assert_eq!(g.site_of(moved, 1), 4);
            assert_eq!(g.site_of(moved, 0), sites[0]);
        }
    }

    #[test]
    fn configuration_wraps_into_box() {
        let g = GridSpec::build(1, 1, 8, 0.5, vec![1.0]).unwrap();
        let q = Configuration::new(&g, vec![-0.25]).unwrap();
        assert!((q.coords()[0] - 3.75).abs() < 1e-12);
        assert_eq!(g.snap(&[3.9]), 0);
        assert!((g.min_image(0.25, 3.75) - 0.5).abs() < 1e-12);
    }
}
