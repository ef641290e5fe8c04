use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::propagator::{Propagator, QuantumState};
use crate::error::{Error, Result};
use crate::hilbert::gaussian::collapse_multiplier;
use crate::hilbert::{CollapseKernel, CollapseTarget, GridSpec, GrwParams, Hamiltonian, C64};
use crate::rng::categorical;

pub const DEFAULT_BRANCH_CAP: usize = 200_000;
/// Bound on stored operator entries across a whole tree.
pub const DEFAULT_ENTRY_CAP: usize = 50_000_000;

/// Outcome of one discrete time step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KrausBranch {
    NoCollapse,
    Collapse { i: usize, site: usize },
}

/// The one-step operators `sqrt(1 - N lambda dt) U` and
/// `sqrt(lambda dt a^d) g_{i,x}^(1/2) U`.
#[derive(Debug, Clone)]
pub struct KrausStep {
    branches: Vec<KrausBranch>,
    ops: Vec<DMatrix<C64>>,
    dt: f64,
}

impl KrausStep {
    pub fn new(h: &Hamiltonian, params: &GrwParams, dt: f64) -> Result<Self> {
        let params = params.validated()?;
        let grid = h.grid();
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::bad(format!("dt must be positive, got {dt}")));
        }
        let p_collapse = params.total_rate(grid.n_particles()) * dt;
        if p_collapse > 1.0 {
            return Err(Error::bad(format!("N lambda dt = {p_collapse} exceeds one")));
        }
        if p_collapse > 0.1 {
            log::warn!("N lambda dt = {p_collapse} is coarse for the first-order scheme");
        }
        let d = grid.dim();
        let u = Propagator::new(h).unitary(d, dt);
        let kernel = CollapseKernel::new(grid, params.sigma)?;
        let mut branches = vec![KrausBranch::NoCollapse];
        let mut ops = vec![&u * C64::new((1.0 - p_collapse).sqrt(), 0.0)];
        let amp = (params.lambda * dt * grid.cell_volume()).sqrt();
        for i in 0..grid.n_particles() {
            for site in 0..grid.sites() {
                let m = collapse_multiplier(grid, &kernel, CollapseTarget::Particle(i), site);
                let mut k = u.clone();
                for (r, mut row) in k.row_iter_mut().enumerate() {
                    row *= C64::new(amp * m[r].sqrt(), 0.0);
                }
                branches.push(KrausBranch::Collapse { i, site });
                ops.push(k);
            }
        }
        Ok(KrausStep { branches, ops, dt })
    }

    pub fn branches(&self) -> &[KrausBranch] {
        &self.branches
    }

    pub fn ops(&self) -> &[DMatrix<C64>] {
        &self.ops
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn dim(&self) -> usize {
        self.ops[0].nrows()
    }

    /// `sum_b K_b^dagger K_b`.
    pub fn completeness(&self) -> DMatrix<C64> {
        self.ops.iter().fold(DMatrix::zeros(self.dim(), self.dim()), |acc, k| acc + k.adjoint() * k)
    }
}

/// One leaf of the history tree.
#[derive(Debug, Clone)]
pub struct KrausNode {
    pub history: Vec<KrausBranch>,
    /// `K_h = K_{b_n} ... K_{b_1}`.
    pub op: DMatrix<C64>,
    /// `|K_h psi0|^2` or `tr(K_h rho0 K_h^dagger)`.
    pub prob: f64,
}

pub fn state_probability(op: &DMatrix<C64>, init: &QuantumState) -> f64 {
    match init {
        QuantumState::Pure(psi) => {
            let v = DVector::from_column_slice(psi.amplitudes());
            (op * v).norm_squared()
        }
        QuantumState::Mixed(rho) => (op * rho.matrix() * op.adjoint()).trace().re,
    }
}

/// Enumerates every `n_steps`-step history with its operator and probability.
pub fn kraus_tree(init: &QuantumState, h: &Hamiltonian, params: &GrwParams, n_steps: usize, dt: f64) -> Result<Vec<KrausNode>> {
    kraus_tree_capped(init, h, params, n_steps, dt, DEFAULT_BRANCH_CAP, DEFAULT_ENTRY_CAP)
}

pub fn kraus_tree_capped(
    init: &QuantumState,
    h: &Hamiltonian,
    params: &GrwParams,
    n_steps: usize,
    dt: f64,
    branch_cap: usize,
    entry_cap: usize,
) -> Result<Vec<KrausNode>> {
    if init.grid() != h.grid() {
        return Err(Error::bad("state and Hamiltonian live on different grids"));
    }
    Ok(history_operators(h, params, n_steps, dt, branch_cap, entry_cap)?
        .into_iter()
        .map(|(history, op)| {
            let prob = state_probability(&op, init);
            KrausNode { history, op, prob }
        })
        .collect())
}

/// Every `n_steps`-step history paired with `K_h`, in lexicographic branch order.
pub fn history_operators(
    h: &Hamiltonian,
    params: &GrwParams,
    n_steps: usize,
    dt: f64,
    branch_cap: usize,
    entry_cap: usize,
) -> Result<Vec<(Vec<KrausBranch>, DMatrix<C64>)>> {
    let grid = h.grid();
    let d = grid.dim();
    let per_step = per_step_branches(grid);
    let count = (per_step as u128).checked_pow(n_steps as u32).unwrap_or(u128::MAX);
    if count > branch_cap as u128 {
        return Err(Error::CapExceeded { dim: count, cap: branch_cap as u128 });
    }
    let entries = count.saturating_mul((d * d) as u128);
    if entries > entry_cap as u128 {
        return Err(Error::CapExceeded { dim: entries, cap: entry_cap as u128 });
    }
    let identity = DMatrix::<C64>::identity(d, d);
    if n_steps == 0 {
        params.validated()?;
        return Ok(vec![(vec![], identity)]);
    }
    let step = KrausStep::new(h, params, dt)?;
    let mut layer = vec![(Vec::new(), identity)];
    for _ in 0..n_steps {
        let mut next = Vec::with_capacity(layer.len() * per_step);
        for (hist, op) in &layer {
            for (b, k) in step.branches.iter().zip(&step.ops) {
                let mut h2: Vec<KrausBranch> = hist.clone();
                h2.push(*b);
                next.push((h2, k * op));
            }
        }
        layer = next;
    }
    Ok(layer)
}

/// Samples a history step by step, drawing each branch from its conditional
/// probability and renormalizing the state.
pub fn sample_discrete_history(step: &KrausStep, psi0: &[C64], n_steps: usize, rng: &mut impl Rng) -> Vec<KrausBranch> {
    let mut psi = DVector::from_column_slice(psi0);
    let mut out = Vec::with_capacity(n_steps);
    for _ in 0..n_steps {
        let cands: Vec<DVector<C64>> = step.ops.iter().map(|k| k * &psi).collect();
        let w: Vec<f64> = cands.iter().map(|v| v.norm_squared()).collect();
        let b = categorical(rng, &w);
        let n = w[b].sqrt();
        psi = &cands[b] / C64::new(n, 0.0);
        out.push(step.branches[b]);
    }
    out
}

/// Flash time of a collapse in step `k` (0-based): the end of the step.
pub fn step_time(k: usize, dt: f64) -> f64 {
    (k + 1) as f64 * dt
}

/// Histories where every step has no collapse.
pub fn is_silent(history: &[KrausBranch]) -> bool {
    history.iter().all(|b| *b == KrausBranch::NoCollapse)
}

pub fn per_step_branches(grid: &GridSpec) -> usize {
    1 + grid.n_particles() * grid.sites()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::{DensityMatrix, StateVector};
    use crate::rng::stream;
    use std::collections::HashMap;
    use std::sync::Arc;

    fn two_site() -> (Arc<GridSpec>, Hamiltonian, StateVector) {
        let g = Arc::new(GridSpec::ring(2).unwrap());
        let h = Hamiltonian::new(g.clone(), |x| 0.4 * x[0]).unwrap();
        let psi = StateVector::from_amplitudes(g.clone(), vec![C64::new(0.6, 0.0), C64::new(0.0, 0.8)]).unwrap();
        (g, h, psi)
    }

    #[test]
    fn zero_steps_is_the_identity() {
        let (_, h, psi) = two_site();
        let p = GrwParams::new(0.5, 1.0).unwrap();
        let tree = kraus_tree(&QuantumState::Pure(psi), &h, &p, 0, 0.1).unwrap();
        assert_eq!(tree.len(), 1);
        assert!((tree[0].prob - 1.0).abs() < 1e-12);
    }

    #[test]
    fn one_step_is_complete() {
        let (_, h, psi) = two_site();
        let p = GrwParams::new(1.0, 1.0).unwrap();
        let tree = kraus_tree(&QuantumState::Pure(psi.clone()), &h, &p, 1, 0.1).unwrap();
        assert_eq!(tree.len(), 3);
        assert!((tree.iter().map(|n| n.prob).sum::<f64>() - 1.0).abs() < 1e-10);
        let rho = DensityMatrix::pure(&psi);
        let t2 = kraus_tree(&QuantumState::Mixed(rho), &h, &p, 2, 0.1).unwrap();
        assert!((t2.iter().map(|n| n.prob).sum::<f64>() - 1.0).abs() < 1e-10);
        let step = KrausStep::new(&h, &p, 0.1).unwrap();
        assert!((step.completeness() - DMatrix::<C64>::identity(2, 2)).camax() < 1e-12);
    }

    #[test]
    fn caps_are_enforced() {
        let (_, h, psi) = two_site();
        let p = GrwParams::new(0.5, 1.0).unwrap();
        let r = kraus_tree_capped(&QuantumState::Pure(psi), &h, &p, 12, 0.1, 1000, usize::MAX);
        assert!(matches!(r, Err(Error::CapExceeded { .. })));
    }

    #[test]
    fn sampler_matches_tree_probabilities() {
        let (_, h, psi) = two_site();
        let p = GrwParams::new(1.0, 1.0).unwrap();
        let dt = 0.1;
        let tree = kraus_tree(&QuantumState::Pure(psi.clone()), &h, &p, 3, dt).unwrap();
        let step = KrausStep::new(&h, &p, dt).unwrap();
        let mut rng = stream(77, 0);
        let n = 200_000;
        let mut counts: HashMap<Vec<KrausBranch>, usize> = HashMap::new();
        for _ in 0..n {
            *counts.entry(sample_discrete_history(&step, psi.amplitudes(), 3, &mut rng)).or_default() += 1;
        }
        for node in &tree {
            let c = *counts.get(&node.history).unwrap_or(&0) as f64;
            let sd = (n as f64 * node.prob * (1.0 - node.prob)).sqrt().max(1.0);
            assert!((c - n as f64 * node.prob).abs() < 4.5 * sd, "{:?}", node.history);
        }
    }
}
