use std::collections::HashMap;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::povm::{flash_history_povm, history_label, Povm};
use crate::error::{Error, Result};
use crate::evolution::KrausBranch;
use crate::hilbert::{tensor_split, GridSpec, GrwParams, Hamiltonian, StateVector, TensorSplit, C64};

/// `zeta`: flash history to outcome label; `None` where undefined.
pub type OutcomeMap = Arc<dyn Fn(&[KrausBranch]) -> Option<String> + Send + Sync>;

/// Declarative outcome maps. Particle labels refer to the joint model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case", deny_unknown_fields)]
pub enum OutcomeRule {
    Constant { label: String },
    /// `site:<s>` of the first flash of `particle`, or `none`.
    FirstFlashSite { particle: usize },
    /// Number of flashes of `particle`.
    FlashCount { particle: usize },
}

impl OutcomeRule {
    pub fn compile(&self, n_particles: usize) -> Result<OutcomeMap> {
        let check = |i: usize| {
            if i >= n_particles {
                Err(Error::Config(format!("particle {i} out of range for {n_particles} particles")))
            } else {
                Ok(())
            }
        };
        Ok(match self.clone() {
            OutcomeRule::Constant { label } => Arc::new(move |_: &[KrausBranch]| Some(label.clone())),
            OutcomeRule::FirstFlashSite { particle } => {
                check(particle)?;
                Arc::new(move |h: &[KrausBranch]| {
                    let first = h.iter().find_map(|b| match *b {
                        KrausBranch::Collapse { i, site } if i == particle => Some(site),
                        _ => None,
                    });
                    Some(first.map_or_else(|| "none".to_string(), |s| format!("site:{s}")))
                })
            }
            OutcomeRule::FlashCount { particle } => {
                check(particle)?;
                Arc::new(move |h: &[KrausBranch]| {
                    Some(h.iter().filter(|b| matches!(b, KrausBranch::Collapse { i, .. } if *i == particle)).count().to_string())
                })
            }
        })
    }
}

/// A system coupled to an apparatus/environment in a fixed state `phi`,
/// run for `n_steps` steps of `dt`, with outcome `zeta(F)`.
#[derive(Clone)]
pub struct ExperimentSpec {
    pub split: TensorSplit,
    pub hamiltonian: Hamiltonian,
    pub params: GrwParams,
    pub env_state: StateVector,
    pub n_steps: usize,
    pub dt: f64,
    pub zeta: OutcomeMap,
}

impl std::fmt::Debug for ExperimentSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ExperimentSpec")
            .field("sys_labels", &self.split.sys_labels())
            .field("n_steps", &self.n_steps)
            .field("dt", &self.dt)
            .finish_non_exhaustive()
    }
}

impl ExperimentSpec {
    pub fn new(
        split: TensorSplit,
        hamiltonian: Hamiltonian,
        params: GrwParams,
        env_state: StateVector,
        n_steps: usize,
        dt: f64,
        zeta: OutcomeMap,
    ) -> Result<Self> {
        if hamiltonian.grid() != &**split.full() {
            return Err(Error::bad("Hamiltonian does not live on the joint grid"));
        }
        if env_state.grid() != &**split.env() {
            return Err(Error::bad("environment state does not live on the environment grid"));
        }
        Ok(ExperimentSpec { split, hamiltonian, params: params.validated()?, env_state, n_steps, dt, zeta })
    }

    /// One system and one apparatus particle on two sites each, free
    /// Hamiltonian, outcome = site of the first system flash.
    pub fn tiny_1p1(n_steps: usize) -> Result<Self> {
        let grid = Arc::new(GridSpec::build(2, 1, 2, 1.0, vec![1.0, 1.0])?);
        let split = tensor_split(grid.clone(), &[0])?;
        let phi = StateVector::from_amplitudes(split.env().clone(), vec![C64::new(0.8, 0.0), C64::new(0.0, 0.6)])?;
        let zeta = OutcomeRule::FirstFlashSite { particle: 0 }.compile(2)?;
        Self::new(split, Hamiltonian::free(grid), GrwParams::new(0.5, 1.0)?, phi, n_steps, 0.1, zeta)
    }
}

/// `P_z = <phi| F(zeta^-1(z)) |phi>` on the system space; labels in order of
/// first appearance over lexicographically ordered histories.
pub fn experiment_povm(spec: &ExperimentSpec) -> Result<Povm> {
    let effects = flash_history_povm(&spec.hamiltonian, &spec.params, spec.n_steps, spec.dt)?;
    let d = spec.hamiltonian.dim();
    let mut labels: Vec<String> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut sums: Vec<DMatrix<C64>> = Vec::new();
    for e in &effects {
        match (spec.zeta)(&e.history) {
            Some(z) => {
                let j = *index.entry(z.clone()).or_insert_with(|| {
                    labels.push(z);
                    sums.push(DMatrix::zeros(d, d));
                    sums.len() - 1
                });
                sums[j] += &e.effect;
            }
            None => {
                let reduced = spec.split.partial_inner(&e.effect, &spec.env_state)?;
                if reduced.camax() > 1e-15 {
                    return Err(Error::PartialZeta(history_label(&e.history)));
                }
            }
        }
    }
    let elements = sums.iter().map(|s| spec.split.partial_inner(s, &spec.env_state)).collect::<Result<Vec<_>>>()?;
    Povm::new(labels, elements)
}
