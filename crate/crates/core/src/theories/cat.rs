use std::sync::Arc;

use super::id::TheoryId;
use super::run::{InitialConfig, InitialData};
use crate::error::{Error, Result};
use crate::hilbert::{DensityMatrix, GridSpec, Hamiltonian, StateVector, C64};

/// Two-branch superposition `(|here>^N + |there>^N) / sqrt 2` of Gaussian
/// packets along the first axis.
#[derive(Debug, Clone)]
pub struct CatScenario {
    pub grid: Arc<GridSpec>,
    pub h: Hamiltonian,
    pub psi: StateVector,
    /// `[here, there]`, also called `[alive, dead]`.
    pub branches: [StateVector; 2],
    pub centers: [f64; 2],
    pub labels: [&'static str; 2],
    pub width: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CatSpec {
    pub n_particles: usize,
    pub dims: usize,
    pub points_per_dim: usize,
    pub spacing: f64,
    pub separation: f64,
    pub width: f64,
}

impl Default for CatSpec {
    fn default() -> Self {
        CatSpec { n_particles: 2, dims: 1, points_per_dim: 32, spacing: 1.0, separation: 16.0, width: 0.6 }
    }
}

/// Largest allowed `sum_q min(|here_q|^2, |there_q|^2)`.
pub const MAX_BRANCH_OVERLAP: f64 = 1e-6;

impl CatScenario {
    pub fn new(spec: &CatSpec) -> Result<Self> {
        let grid = Arc::new(GridSpec::build(
            spec.n_particles,
            spec.dims,
            spec.points_per_dim,
            spec.spacing,
            vec![1.0; spec.n_particles],
        )?);
        let len = grid.box_len();
        if !(spec.separation > 0.0 && spec.separation <= len / 2.0) {
            return Err(Error::bad(format!("separation must lie in (0, {}]", len / 2.0)));
        }
        let here = len / 4.0;
        let centers = [here, grid.wrap(here + spec.separation)];
        let branch = |c: f64| {
            let mut pos = Vec::with_capacity(grid.n_axes());
            for _ in 0..spec.n_particles {
                pos.push(c);
                pos.extend(std::iter::repeat_n(len / 2.0, spec.dims - 1));
            }
            StateVector::gaussian_packet(
                grid.clone(),
                &pos,
                &vec![spec.width; spec.n_particles],
                &vec![0.0; grid.n_axes()],
            )
        };
        let alive = branch(centers[0])?;
        let dead = branch(centers[1])?;
        let overlap: f64 =
            alive.probabilities().iter().zip(dead.probabilities()).map(|(a, b)| a.min(b)).sum();
        if overlap > MAX_BRANCH_OVERLAP {
            return Err(Error::bad(format!("branches overlap by {overlap:e}")));
        }
        let r = C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        let psi = StateVector::superpose(&[(r, &alive), (r, &dead)])?;
        Ok(CatScenario {
            h: Hamiltonian::zero(grid.clone()),
            grid,
            psi,
            branches: [alive, dead],
            centers,
            labels: ["alive", "dead"],
            width: spec.width,
        })
    }

    /// Replaces the default `H = 0` by the free Hamiltonian.
    pub fn with_free_hamiltonian(mut self) -> Self {
        self.h = Hamiltonian::free(self.grid.clone());
        self
    }

    /// Initial data of the kind `id` expects: the cat wave function, or its
    /// projector for density-matrix theories.
    pub fn initial_data(&self, id: TheoryId, seed: u64) -> InitialData {
        let init = if id.is_mixed() {
            InitialData::mixed(DensityMatrix::pure(&self.psi), seed)
        } else {
            InitialData::pure(self.psi.clone(), seed)
        };
        if id.needs_configuration() {
            init.with_config(InitialConfig::Equilibrium)
        } else {
            init
        }
    }

    /// Equal-weight mixture of the two branches.
    pub fn branch_mixture(&self) -> Result<DensityMatrix> {
        DensityMatrix::mixture(&[(0.5, &self.branches[0]), (0.5, &self.branches[1])])
    }
}

/// Standard cat on 32 sites per axis in one dimension.
pub fn cat_scenario(separation: f64, n_particles: usize) -> Result<CatScenario> {
    CatScenario::new(&CatSpec { n_particles, separation, ..CatSpec::default() })
}
