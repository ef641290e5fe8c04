use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::GridSpec;
use crate::ontology::{FlashSet, MatterField};

pub const DEFAULT_WINDOW: f64 = 1.0;

/// Closed axis-aligned box in single-particle space, inside the periodic
/// cell without wrapping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Region {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl Region {
    pub fn new(grid: &GridSpec, lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        Region { lo, hi }.validated(grid)
    }

    /// `[c - w, c + w]` along the first axis, full extent along the others.
    pub fn slab(grid: &GridSpec, center: f64, half_width: f64) -> Result<Self> {
        let top = grid.box_len() - grid.spacing();
        let mut lo = vec![0.0; grid.dims()];
        let mut hi = vec![top; grid.dims()];
        lo[0] = center - half_width;
        hi[0] = center + half_width;
        Region::new(grid, lo, hi)
    }

    pub fn validated(self, grid: &GridSpec) -> Result<Self> {
        if self.lo.len() != grid.dims() || self.hi.len() != grid.dims() {
            return Err(Error::bad("region bounds need one entry per spatial dimension"));
        }
        let len = grid.box_len();
        for (a, b) in self.lo.iter().zip(&self.hi) {
            if !(a.is_finite() && b.is_finite() && *a <= *b && *a >= 0.0 && *b < len) {
                return Err(Error::bad(format!("region [{a}, {b}] must satisfy 0 <= lo <= hi < {len}")));
            }
        }
        if self.sites(grid).is_empty() {
            return Err(Error::bad("region contains no grid points"));
        }
        Ok(self)
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        const EPS: f64 = 1e-9;
        x.iter().zip(self.lo.iter().zip(&self.hi)).all(|(v, (a, b))| *v >= a - EPS && *v <= b + EPS)
    }

    pub fn sites(&self, grid: &GridSpec) -> Vec<usize> {
        (0..grid.sites()).filter(|&s| self.contains(&grid.site_position(s))).collect()
    }
}

/// `sum_{x in R} x_1 m(x) / sum_{x in R} m(x)`.
pub fn mean_x1_matter(field: &MatterField, grid: &GridSpec, region: &Region) -> Result<f64> {
    let (mut mass, mut moment) = (0.0, 0.0);
    for s in region.sites(grid) {
        let m = field.values[s];
        mass += m;
        moment += grid.site_position(s)[0] * m;
    }
    if mass * grid.cell_volume() <= 1e-12 {
        return Err(Error::EmptyRegionMass);
    }
    Ok(moment / mass)
}

/// Mean first coordinate of the flashes in `R` during `[t, t + window]`.
pub fn mean_x1_flashes(flashes: &FlashSet, region: &Region, t: f64, window: f64) -> Result<f64> {
    let xs: Vec<f64> = flashes.in_window(t, t + window).filter(|f| region.contains(&f.x)).map(|f| f.x[0]).collect();
    if xs.is_empty() {
        return Err(Error::NoFlashes);
    }
    Ok(xs.iter().sum::<f64>() / xs.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Calibration {
    pub z0: f64,
    pub alpha: f64,
    #[serde(default)]
    pub discrete: bool,
    pub region: Region,
    #[serde(default = "default_window")]
    pub window: f64,
}

fn default_window() -> f64 {
    DEFAULT_WINDOW
}

impl Calibration {
    pub fn validated(self, grid: &GridSpec) -> Result<Self> {
        if !(self.alpha != 0.0 && self.alpha.is_finite() && self.z0.is_finite()) {
            return Err(Error::bad("calibration needs finite z0 and nonzero finite alpha"));
        }
        if !(self.window > 0.0 && self.window.is_finite()) {
            return Err(Error::bad("readout window must be positive"));
        }
        let region = self.region.validated(grid)?;
        Ok(Calibration { region, ..self })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Outcome {
    Integer(i64),
    Real(f64),
}

/// `z0 + alpha <x_1>`, rounded half away from zero when discrete.
pub fn calibrate(mean_x1: f64, cal: &Calibration) -> Outcome {
    let z = cal.z0 + cal.alpha * mean_x1;
    if cal.discrete {
        Outcome::Integer(z.round() as i64)
    } else {
        Outcome::Real(z)
    }
}
