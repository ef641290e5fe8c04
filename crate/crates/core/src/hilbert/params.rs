use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_LAMBDA: f64 = 0.1;
pub const DEFAULT_SIGMA: f64 = 1.0;

/// Physical-scale values of the collapse constants, kept for display only.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalDefaults {
    /// Collapse rate per particle in 1/s.
    pub lambda_per_second: f64,
    /// Collapse width in metres.
    pub sigma_metres: f64,
}

pub const PHYSICAL_DEFAULTS: PhysicalDefaults = PhysicalDefaults { lambda_per_second: 1e-16, sigma_metres: 1e-7 };

/// Collapse rate per particle `lambda` and width `sigma`, in grid units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrwParams {
    pub lambda: f64,
    pub sigma: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub physical_defaults: Option<PhysicalDefaults>,
}

impl Default for GrwParams {
    fn default() -> Self {
        GrwParams { lambda: DEFAULT_LAMBDA, sigma: DEFAULT_SIGMA, physical_defaults: None }
    }
}

impl GrwParams {
    pub fn new(lambda: f64, sigma: f64) -> Result<Self> {
        GrwParams { lambda, sigma, physical_defaults: None }.validated()
    }

    pub fn validated(self) -> Result<Self> {
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(Error::bad(format!("lambda must be non-negative, got {}", self.lambda)));
        }
        if !(self.sigma.is_finite() && self.sigma > 0.0) {
            return Err(Error::bad(format!("sigma must be positive, got {}", self.sigma)));
        }
        Ok(self)
    }

    /// Total collapse rate `N lambda`.
    pub fn total_rate(&self, n_particles: usize) -> f64 {
        n_particles as f64 * self.lambda
    }
}

/// Expected number of flashes per unit time for `n` particles at rate `lambda`.
pub fn expected_flash_rate(n: f64, lambda: f64) -> f64 {
    n * lambda
}
