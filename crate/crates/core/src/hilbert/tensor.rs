use std::sync::Arc;

use nalgebra::DMatrix;

use super::grid::GridSpec;
use super::state::{StateVector, C64};
use crate::error::{Error, Result};

/// Partition of particle labels into a system and an environment.
///
/// System and environment grids keep the parent's lattice and list their
/// particles in increasing label order.
#[derive(Debug, Clone)]
pub struct TensorSplit {
    full: Arc<GridSpec>,
    sys_labels: Vec<usize>,
    env_labels: Vec<usize>,
    sys: Arc<GridSpec>,
    env: Arc<GridSpec>,
}

fn subgrid(full: &GridSpec, labels: &[usize]) -> Result<GridSpec> {
    let masses = labels.iter().map(|&i| full.masses()[i]).collect();
    let g = GridSpec::build(labels.len(), full.dims(), full.points_per_dim(), full.spacing(), masses)?;
    match full.charges() {
        Some(c) => g.with_charges(labels.iter().map(|&i| c[i]).collect()),
        None => Ok(g),
    }
}

/// Splits `grid` into the particles in `sys_labels` and the rest.
pub fn tensor_split(grid: Arc<GridSpec>, sys_labels: &[usize]) -> Result<TensorSplit> {
    let n = grid.n_particles();
    let mut seen = vec![false; n];
    for &i in sys_labels {
        if i >= n {
            return Err(Error::BadPartition(format!("label {i} out of range for {n} particles")));
        }
        if std::mem::replace(&mut seen[i], true) {
            return Err(Error::BadPartition(format!("label {i} listed twice")));
        }
    }
    let mut sys_labels: Vec<usize> = sys_labels.to_vec();
    sys_labels.sort_unstable();
    let env_labels: Vec<usize> = (0..n).filter(|&i| !seen[i]).collect();
    if sys_labels.is_empty() || env_labels.is_empty() {
        return Err(Error::BadPartition("system and environment must both be non-empty".into()));
    }
    let sys = Arc::new(subgrid(&grid, &sys_labels)?);
    let env = Arc::new(subgrid(&grid, &env_labels)?);
    Ok(TensorSplit { full: grid, sys_labels, env_labels, sys, env })
}

impl TensorSplit {
    pub fn full(&self) -> &Arc<GridSpec> {
        &self.full
    }

    pub fn sys(&self) -> &Arc<GridSpec> {
        &self.sys
    }

    pub fn env(&self) -> &Arc<GridSpec> {
        &self.env
    }

    pub fn sys_labels(&self) -> &[usize] {
        &self.sys_labels
    }

    pub fn env_labels(&self) -> &[usize] {
        &self.env_labels
    }

    /// Full configuration index from system and environment indices.
    pub fn join(&self, s: usize, e: usize) -> usize {
        let mut sites = vec![0; self.full.n_particles()];
        for (k, &i) in self.sys_labels.iter().enumerate() {
            sites[i] = self.sys.site_of(s, k);
        }
        for (k, &i) in self.env_labels.iter().enumerate() {
            sites[i] = self.env.site_of(e, k);
        }
        self.full.config_index(&sites)
    }

    /// `join` tabulated as `[s][e]`.
    pub fn index_table(&self) -> Vec<Vec<usize>> {
        (0..self.sys.dim()).map(|s| (0..self.env.dim()).map(|e| self.join(s, e)).collect()).collect()
    }

    /// `psi (x) phi`.
    pub fn embed(&self, psi: &StateVector, phi: &StateVector) -> Result<StateVector> {
        self.check(psi, phi)?;
        let mut amps = vec![C64::new(0.0, 0.0); self.full.dim()];
        for (s, a) in psi.amplitudes().iter().enumerate() {
            for (e, b) in phi.amplitudes().iter().enumerate() {
                amps[self.join(s, e)] = a * b;
            }
        }
        Ok(StateVector::from_unit(self.full.clone(), amps))
    }

    fn check(&self, psi: &StateVector, phi: &StateVector) -> Result<()> {
        if psi.grid() != &*self.sys || phi.grid() != &*self.env {
            return Err(Error::bad("states do not live on the split grids"));
        }
        Ok(())
    }

    /// `A_sys (x) B_env` as a dense operator on the full space.
    pub fn kron(&self, a: &DMatrix<C64>, b: &DMatrix<C64>) -> DMatrix<C64> {
        let table = self.index_table();
        let d = self.full.dim();
        let mut out = DMatrix::zeros(d, d);
        for s in 0..a.nrows() {
            for s2 in 0..a.ncols() {
                let x = a[(s, s2)];
                if x == C64::new(0.0, 0.0) {
                    continue;
                }
                for e in 0..b.nrows() {
                    for e2 in 0..b.ncols() {
                        out[(table[s][e], table[s2][e2])] = x * b[(e, e2)];
                    }
                }
            }
        }
        out
    }

    /// Partial scalar product `<phi|A|phi>_env`, an operator on the system.
    pub fn partial_inner(&self, a: &DMatrix<C64>, phi: &StateVector) -> Result<DMatrix<C64>> {
        if phi.grid() != &*self.env {
            return Err(Error::bad("environment state does not live on the environment grid"));
        }
        let table = self.index_table();
        let ds = self.sys.dim();
        let f = phi.amplitudes();
        let mut out = DMatrix::zeros(ds, ds);
        for s in 0..ds {
            for s2 in 0..ds {
                let mut acc = C64::new(0.0, 0.0);
                for (e, fe) in f.iter().enumerate() {
                    let row = table[s][e];
                    let mut inner = C64::new(0.0, 0.0);
                    for (e2, fe2) in f.iter().enumerate() {
                        inner += a[(row, table[s2][e2])] * fe2;
                    }
                    acc += fe.conj() * inner;
                }
                out[(s, s2)] = acc;
            }
        }
        Ok(out)
    }

    /// Partial trace over the environment.
    pub fn partial_trace(&self, rho: &DMatrix<C64>) -> DMatrix<C64> {
        let table = self.index_table();
        let ds = self.sys.dim();
        let de = self.env.dim();
        DMatrix::from_fn(ds, ds, |s, s2| (0..de).map(|e| rho[(table[s][e], table[s2][e])]).sum())
    }
}
