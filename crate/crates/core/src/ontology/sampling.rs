use rand::Rng;
use serde::{Deserialize, Serialize};

use super::velocity::{BohmField, MbmField};
use crate::evolution::QuantumState;
use crate::hilbert::GridSpec;
use crate::rng::{categorical, unit};

/// How continuum initial configurations are drawn from `|psi|^2` or `<q|rho|q>`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EquilibriumSampling {
    /// Categorical lattice configuration plus uniform jitter within its cell.
    #[default]
    Lattice,
    /// Rejection sampling from the interpolated density, which is exactly
    /// the density transported by the interpolated velocity field.
    Interpolant,
}

enum Density {
    Table(Vec<f64>),
    Pure(BohmField),
    Mixed(MbmField),
}

/// Draws configurations from the quantum-equilibrium density of a state.
pub struct EquilibriumSampler {
    grid: GridSpec,
    density: Density,
}

impl EquilibriumSampler {
    pub fn new(state: &QuantumState, how: EquilibriumSampling) -> Self {
        let grid = state.grid().clone();
        let density = match (how, state) {
            (EquilibriumSampling::Lattice, _) => Density::Table(state.diagonal()),
            (EquilibriumSampling::Interpolant, QuantumState::Pure(psi)) => Density::Pure(BohmField::new(psi)),
            (EquilibriumSampling::Interpolant, QuantumState::Mixed(rho)) => Density::Mixed(MbmField::new(rho)),
        };
        EquilibriumSampler { grid, density }
    }

    pub fn sample(&self, rng: &mut impl Rng) -> Vec<f64> {
        let g = &self.grid;
        match &self.density {
            Density::Table(p) => {
                let q = categorical(rng, p);
                g.config_position(q).into_iter().map(|x| g.wrap(x + g.spacing() * (unit(rng) - 0.5))).collect()
            }
            // Both interpolated densities are bounded by 1 in the discrete
            // normalization, so a uniform proposal with that bound is exact.
            Density::Pure(f) => self.reject(rng, |q| f.density(q)),
            Density::Mixed(f) => self.reject(rng, |q| f.density(q)),
        }
    }

    fn reject(&self, rng: &mut impl Rng, density: impl Fn(&[f64]) -> f64) -> Vec<f64> {
        let len = self.grid.box_len();
        loop {
            let q: Vec<f64> = (0..self.grid.n_axes()).map(|_| unit(rng) * len).collect();
            if unit(rng) < density(&q) {
                return q;
            }
        }
    }
}

pub fn sample_quantum_equilibrium(state: &QuantumState, how: EquilibriumSampling, rng: &mut impl Rng) -> Vec<f64> {
    EquilibriumSampler::new(state, how).sample(rng)
}
