use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::calibration::Region;
use crate::error::{Error, Result};
use crate::evolution::QuantumState;
use crate::hilbert::{GridSpec, LinOp};
use crate::theories::{PoHistory, PrimitiveOntology};

/// Share of matter or flashes a cell must hold to be read as that cell.
pub const DOMINANCE: f64 = 0.9;

/// Disjoint labeled sets of configurations covering configuration space.
#[derive(Debug, Clone, PartialEq)]
pub struct MacroPartition {
    labels: Vec<String>,
    cell_of: Vec<usize>,
    /// Sites occupied by some particle in each cell; `None` for the remainder cell.
    projections: Vec<Option<BTreeSet<usize>>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MacroLabel {
    Cell(usize),
    Mixed,
}

impl fmt::Display for MacroLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MacroLabel::Cell(j) => write!(f, "{j}"),
            MacroLabel::Mixed => f.write_str("mixed"),
        }
    }
}

impl MacroPartition {
    /// Partition from an explicit cell index per configuration.
    pub fn from_cells(grid: &GridSpec, labels: Vec<String>, cell_of: Vec<usize>) -> Result<Self> {
        if cell_of.len() != grid.dim() {
            return Err(Error::BadPartition(format!("need {} cell indices, got {}", grid.dim(), cell_of.len())));
        }
        if let Some(&j) = cell_of.iter().find(|&&j| j >= labels.len()) {
            return Err(Error::BadPartition(format!("cell {j} has no label")));
        }
        let unique: BTreeSet<&String> = labels.iter().collect();
        if unique.len() != labels.len() {
            return Err(Error::BadPartition("labels must be distinct".into()));
        }
        let mut projections = vec![Some(BTreeSet::new()); labels.len()];
        for (q, &j) in cell_of.iter().enumerate() {
            let set = projections[j].as_mut().expect("all cells start projected");
            set.extend((0..grid.n_particles()).map(|i| grid.site_of(q, i)));
        }
        Ok(MacroPartition { labels, cell_of, projections })
    }

    pub fn from_fn(grid: &GridSpec, labels: Vec<String>, f: impl Fn(usize) -> usize) -> Result<Self> {
        Self::from_cells(grid, labels, (0..grid.dim()).map(f).collect())
    }

    /// Cell `j` holds the configurations with every particle in `regions[j]`;
    /// a final `"mixed"` cell holds everything else.
    pub fn from_regions(grid: &GridSpec, labels: Vec<String>, regions: &[Region]) -> Result<Self> {
        if labels.len() != regions.len() {
            return Err(Error::BadPartition("one label per region".into()));
        }
        let site_sets: Vec<BTreeSet<usize>> = regions.iter().map(|r| r.sites(grid).into_iter().collect()).collect();
        for (a, sa) in site_sets.iter().enumerate() {
            for sb in &site_sets[a + 1..] {
                if !sa.is_disjoint(sb) {
                    return Err(Error::BadPartition("regions overlap".into()));
                }
            }
        }
        let rest = labels.len();
        let cell_of = (0..grid.dim())
            .map(|q| {
                site_sets
                    .iter()
                    .position(|set| (0..grid.n_particles()).all(|i| set.contains(&grid.site_of(q, i))))
                    .unwrap_or(rest)
            })
            .collect();
        let mut all = labels;
        all.push("mixed".into());
        let mut p = Self::from_cells(grid, all, cell_of)?;
        for (proj, set) in p.projections.iter_mut().zip(site_sets) {
            *proj = Some(set);
        }
        p.projections[rest] = None;
        Ok(p)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn label(&self, l: &MacroLabel) -> &str {
        match l {
            MacroLabel::Cell(j) => &self.labels[*j],
            MacroLabel::Mixed => "mixed",
        }
    }

    pub fn cell_of(&self, q: usize) -> usize {
        self.cell_of[q]
    }

    pub fn cell(&self, j: usize) -> Vec<usize> {
        (0..self.cell_of.len()).filter(|&q| self.cell_of[q] == j).collect()
    }

    fn is_remainder(&self, j: usize) -> bool {
        self.projections[j].is_none()
    }

    /// `P(S_j)`, diagonal in position.
    pub fn projector(&self, j: usize) -> LinOp {
        LinOp::Diagonal(self.cell_of.iter().map(|&c| if c == j { 1.0 } else { 0.0 }).collect())
    }

    fn read(&self, j: usize) -> MacroLabel {
        if self.is_remainder(j) {
            MacroLabel::Mixed
        } else {
            MacroLabel::Cell(j)
        }
    }

    /// Cell whose projection holds at least the dominance share of `weight`.
    fn dominant(&self, total: f64, weight: impl Fn(usize) -> f64) -> MacroLabel {
        for (j, proj) in self.projections.iter().enumerate() {
            let Some(sites) = proj else { continue };
            let inside: f64 = sites.iter().map(|&s| weight(s)).sum();
            if total > 0.0 && inside >= DOMINANCE * total {
                return MacroLabel::Cell(j);
            }
        }
        MacroLabel::Mixed
    }
}

/// `p(S_j) = tr(rho P(S_j))`.
pub fn macro_probability(state: &QuantumState, partition: &MacroPartition, j: usize) -> f64 {
    state.diagonal().iter().zip(&partition.cell_of).filter(|(_, &c)| c == j).map(|(p, _)| p).sum()
}

pub fn macro_distribution(state: &QuantumState, partition: &MacroPartition) -> Vec<f64> {
    let mut out = vec![0.0; partition.len()];
    for (p, &c) in state.diagonal().iter().zip(&partition.cell_of) {
        out[c] += p;
    }
    out
}

fn snapshot_index(mut times: impl Iterator<Item = f64>, t: f64) -> Result<usize> {
    times.position(|s| (s - t).abs() <= 1e-12 * t.abs().max(1.0)).ok_or(Error::MissingSnapshot(t))
}

/// Macro state displayed by the primitive ontology at time `t`.
///
/// Particles read the cell of the snapped configuration, matter fields and
/// flashes in `[t, t + window]` read the cell whose single-particle
/// projection holds at least [`DOMINANCE`] of them.
pub fn classify_po(history: &PoHistory, grid: &GridSpec, partition: &MacroPartition, t: f64, window: f64) -> Result<MacroLabel> {
    match &history.po {
        PrimitiveOntology::Particles(path) => {
            let k = snapshot_index(path.times.iter().copied(), t)?;
            let q = &path.configs[k];
            let d = grid.dims();
            let sites: Vec<usize> = (0..grid.n_particles()).map(|i| grid.snap(&q[i * d..(i + 1) * d])).collect();
            Ok(partition.read(partition.cell_of(grid.config_index(&sites))))
        }
        PrimitiveOntology::Matter(fields) => {
            let k = snapshot_index(fields.iter().map(|f| f.t), t)?;
            let f = &fields[k];
            let total: f64 = f.values.iter().sum();
            Ok(partition.dominant(total, |s| f.values[s]))
        }
        PrimitiveOntology::Flashes(set) => {
            let mut counts = vec![0.0; grid.sites()];
            let mut total = 0.0;
            for fl in set.in_window(t, t + window) {
                counts[grid.snap(&fl.x)] += 1.0;
                total += 1.0;
            }
            if total == 0.0 {
                return Err(Error::NoFlashes);
            }
            Ok(partition.dominant(total, |s| counts[s]))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::{DensityMatrix, GrwParams, StateVector};
    use crate::rng::stream;
    use crate::theories::{cat_scenario, run_theory, RunOptions, TheoryContext, TheoryId};
    use std::sync::Arc;

    fn halves(grid: &GridSpec) -> MacroPartition {
        MacroPartition::from_fn(grid, vec!["left".into(), "right".into()], |q| usize::from(grid.site_of(q, 0) >= 2)).unwrap()
    }

    #[test]
    fn probabilities_sum_to_one_and_match_diagonals() {
        let g = Arc::new(GridSpec::build(1, 1, 4, 1.0, vec![1.0]).unwrap());
        let a = StateVector::random(g.clone(), &mut stream(1, 0));
        let b = StateVector::random(g.clone(), &mut stream(1, 1));
        let rho = DensityMatrix::mixture(&[(0.4, &a), (0.6, &b)]).unwrap();
        let part = halves(&g);
        let d = rho.diagonal();
        let st = QuantumState::Mixed(rho);
        assert!((macro_probability(&st, &part, 0) - (d[0] + d[1])).abs() < 1e-14);
        assert!((macro_distribution(&st, &part).iter().sum::<f64>() - 1.0).abs() < 1e-10);
        let whole = MacroPartition::from_fn(&g, vec!["all".into()], |_| 0).unwrap();
        assert!((macro_probability(&st, &whole, 0) - 1.0).abs() < 1e-12);
        let pa = QuantumState::Pure(a.clone());
        let proj = part.projector(1).apply(a.amplitudes());
        let norm: f64 = proj.iter().map(|c| c.norm_sqr()).sum();
        assert!((macro_probability(&pa, &part, 1) - norm).abs() < 1e-14);
        let swapped = MacroPartition::from_fn(&g, vec!["right".into(), "left".into()], |q| usize::from(g.site_of(q, 0) < 2)).unwrap();
        assert!((macro_probability(&pa, &swapped, 1) - macro_probability(&pa, &part, 0)).abs() < 1e-15);
    }

    #[test]
    fn malformed_partitions_are_rejected() {
        let g = GridSpec::build(1, 1, 4, 1.0, vec![1.0]).unwrap();
        assert!(MacroPartition::from_cells(&g, vec!["a".into()], vec![0, 0, 1, 0]).is_err());
        assert!(MacroPartition::from_cells(&g, vec!["a".into()], vec![0, 0]).is_err());
        assert!(MacroPartition::from_cells(&g, vec!["a".into(), "a".into()], vec![0, 0, 1, 1]).is_err());
        let r1 = Region::new(&g, vec![0.0], vec![2.0]).unwrap();
        let r2 = Region::new(&g, vec![2.0], vec![3.0]).unwrap();
        assert!(MacroPartition::from_regions(&g, vec!["a".into(), "b".into()], &[r1, r2]).is_err());
    }

    fn cat_partition(grid: &GridSpec) -> MacroPartition {
        let regions = [Region::slab(grid, 8.0, 6.0).unwrap(), Region::slab(grid, 24.0, 6.0).unwrap()];
        MacroPartition::from_regions(grid, vec!["alive".into(), "dead".into()], &regions).unwrap()
    }

    #[test]
    fn cat_probabilities_are_one_half() {
        let cat = cat_scenario(16.0, 2).unwrap();
        let part = cat_partition(&cat.grid);
        let dist = macro_distribution(&QuantumState::Mixed(cat.branch_mixture().unwrap()), &part);
        assert!((dist[0] - 0.5).abs() < 1e-10 && (dist[1] - 0.5).abs() < 1e-10 && dist[2] < 1e-10);
    }

    #[test]
    fn collapsed_flash_runs_pick_one_branch() {
        let cat = cat_scenario(16.0, 2).unwrap();
        let part = cat_partition(&cat.grid);
        let p = GrwParams::new(5.0, 1.0).unwrap();
        let ctx = TheoryContext::new(TheoryId::Grwf, &cat.h, &p, cat.initial_data(TheoryId::Grwf, 7), 3.0, &[], &RunOptions::default()).unwrap();
        for h in ctx.run_ensemble(1000).unwrap() {
            let label = classify_po(&h, &cat.grid, &part, 2.0, 1.0).unwrap();
            assert!(matches!(label, MacroLabel::Cell(0) | MacroLabel::Cell(1)), "{label}");
        }
    }

    #[test]
    fn matter_cat_is_mixed_and_contained_bohm_is_not() {
        let cat = cat_scenario(16.0, 2).unwrap();
        let part = cat_partition(&cat.grid);
        let p = GrwParams::new(5.0, 1.0).unwrap();
        let mm = run_theory(TheoryId::Mm, &cat.h, &p, cat.initial_data(TheoryId::Mm, 1), 2.0, &[2.0], &RunOptions::default()).unwrap();
        assert_eq!(classify_po(&mm, &cat.grid, &part, 2.0, 1.0).unwrap(), MacroLabel::Mixed);
        let alive = crate::theories::InitialData::pure(cat.branches[0].clone(), 3);
        let ctx = TheoryContext::new(TheoryId::Bm, &cat.h, &p, alive, 1.0, &[1.0], &RunOptions::default()).unwrap();
        for k in 0..100 {
            assert_eq!(classify_po(&ctx.run(k).unwrap(), &cat.grid, &part, 1.0, 1.0).unwrap(), MacroLabel::Cell(0));
        }
        let empty = run_theory(TheoryId::Grwf, &cat.h, &GrwParams::new(0.0, 1.0).unwrap(), cat.initial_data(TheoryId::Grwf, 1), 2.0, &[], &RunOptions::default()).unwrap();
        assert!(matches!(classify_po(&empty, &cat.grid, &part, 1.0, 1.0), Err(Error::NoFlashes)));
    }

    #[test]
    fn grwp5_branch_flip_leaves_a_mixed_configuration() {
        let cat = cat_scenario(16.0, 2).unwrap();
        let part = cat_partition(&cat.grid);
        let p = GrwParams::new(1.0, 1.0).unwrap();
        let opts = RunOptions { schedule: crate::evolution::CollapseSchedule::Forced(vec![0.5]), ..RunOptions::default() };
        let ctx = TheoryContext::new(TheoryId::Grwp5, &cat.h, &p, cat.initial_data(TheoryId::Grwp5, 3), 1.0, &[0.4, 1.0], &opts).unwrap();
        let mut mixed = 0;
        for k in 0..200 {
            let h = ctx.run(k).unwrap();
            let before = classify_po(&h, &cat.grid, &part, 0.4, 1.0).unwrap();
            let after = classify_po(&h, &cat.grid, &part, 1.0, 1.0).unwrap();
            let MacroLabel::Cell(b) = before else { panic!("initial configuration straddles") };
            let e = &h.events[0];
            let collapsed_to = usize::from((e.x[0] - 24.0).abs() < 8.0);
            if collapsed_to == b {
                assert_eq!(after, before);
            } else {
                assert_eq!(after, MacroLabel::Mixed);
                mixed += 1;
            }
        }
        assert!(mixed > 50);
    }
}
