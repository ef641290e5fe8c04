use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evolution::kraus::{history_operators, DEFAULT_BRANCH_CAP, DEFAULT_ENTRY_CAP};
use crate::evolution::{KrausBranch, QuantumState};
use crate::hilbert::{GrwParams, Hamiltonian, C64};

pub const COMPLETENESS_TOL: f64 = 1e-8;
pub const POSITIVITY_TOL: f64 = 1e-9;

/// A finite labeled family of effects on one Hilbert space.
#[derive(Debug, Clone, PartialEq)]
pub struct Povm {
    labels: Vec<String>,
    elements: Vec<DMatrix<C64>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PovmFile {
    dim: usize,
    elements: Vec<PovmEntry>,
}

/// Row-major matrix of `[re, im]` pairs.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PovmEntry {
    label: String,
    matrix: Vec<Vec<[f64; 2]>>,
}

impl Povm {
    pub fn new(labels: Vec<String>, elements: Vec<DMatrix<C64>>) -> Result<Self> {
        if labels.len() != elements.len() {
            return Err(Error::bad("one label per element"));
        }
        let Some(first) = elements.first() else {
            return Err(Error::bad("a POVM needs at least one element"));
        };
        let d = first.nrows();
        if elements.iter().any(|e| e.nrows() != d || e.ncols() != d) {
            return Err(Error::bad("elements must be square of one dimension"));
        }
        let mut sorted: Vec<&String> = labels.iter().collect();
        sorted.sort();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::bad("labels must be distinct"));
        }
        Ok(Povm { labels, elements })
    }

    pub fn dim(&self) -> usize {
        self.elements[0].nrows()
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn elements(&self) -> &[DMatrix<C64>] {
        &self.elements
    }

    pub fn element(&self, label: &str) -> Option<&DMatrix<C64>> {
        self.labels.iter().position(|l| l == label).map(|j| &self.elements[j])
    }

    /// `max |sum_z P_z - I|` entrywise.
    pub fn completeness_error(&self) -> f64 {
        let d = self.dim();
        let sum = self.elements.iter().fold(DMatrix::<C64>::zeros(d, d), |acc, e| acc + e);
        (sum - DMatrix::<C64>::identity(d, d)).camax()
    }

    /// Smallest eigenvalue over all elements (Hermitian parts).
    pub fn min_eigenvalue(&self) -> f64 {
        self.elements
            .iter()
            .map(|e| {
                let herm = (e + e.adjoint()) * C64::new(0.5, 0.0);
                SymmetricEigen::new(herm).eigenvalues.min()
            })
            .fold(f64::INFINITY, f64::min)
    }

    pub fn max_hermiticity_error(&self) -> f64 {
        self.elements.iter().map(|e| (e - e.adjoint()).camax()).fold(0.0, f64::max)
    }

    /// Checks positivity and completeness at the standard tolerances.
    pub fn validated(self) -> Result<Self> {
        let herm = self.max_hermiticity_error();
        if herm > POSITIVITY_TOL {
            return Err(Error::bad(format!("element is not Hermitian (error {herm:e})")));
        }
        let min = self.min_eigenvalue();
        if min < -POSITIVITY_TOL {
            return Err(Error::bad(format!("element has eigenvalue {min:e}")));
        }
        let c = self.completeness_error();
        if c > COMPLETENESS_TOL {
            return Err(Error::bad(format!("elements sum to identity only within {c:e}")));
        }
        Ok(self)
    }

    pub fn to_json(&self) -> String {
        let file = PovmFile {
            dim: self.dim(),
            elements: self
                .labels
                .iter()
                .zip(&self.elements)
                .map(|(label, e)| PovmEntry {
                    label: label.clone(),
                    matrix: (0..e.nrows()).map(|r| (0..e.ncols()).map(|c| [e[(r, c)].re, e[(r, c)].im]).collect()).collect(),
                })
                .collect(),
        };
        serde_json::to_string_pretty(&file).expect("POVM serializes")
    }

    /// Parses the export format; structure is checked, positivity and completeness are not.
    pub fn from_json(s: &str) -> Result<Self> {
        let file: PovmFile = serde_json::from_str(s)?;
        let d = file.dim;
        if d == 0 {
            return Err(Error::bad("dim must be positive"));
        }
        let mut labels = Vec::with_capacity(file.elements.len());
        let mut elements = Vec::with_capacity(file.elements.len());
        for entry in file.elements {
            if entry.matrix.len() != d || entry.matrix.iter().any(|row| row.len() != d) {
                return Err(Error::bad(format!("element {:?} is not {d}x{d}", entry.label)));
            }
            if entry.matrix.iter().flatten().flatten().any(|x| !x.is_finite()) {
                return Err(Error::bad(format!("element {:?} has a non-finite entry", entry.label)));
            }
            elements.push(DMatrix::from_fn(d, d, |r, c| {
                let [re, im] = entry.matrix[r][c];
                C64::new(re, im)
            }));
            labels.push(entry.label);
        }
        Povm::new(labels, elements)
    }
}

/// `P(Z = z) = tr(rho P_z)` for every label, in POVM order.
pub fn outcome_distribution(state: &QuantumState, povm: &Povm) -> Result<Vec<f64>> {
    if state.grid().dim() != povm.dim() {
        return Err(Error::bad("state and POVM dimensions differ"));
    }
    Ok(povm.elements.iter().map(|e| expectation(state, e).max(0.0)).collect())
}

fn expectation(state: &QuantumState, e: &DMatrix<C64>) -> f64 {
    match state {
        QuantumState::Pure(psi) => {
            let v = DVector::from_column_slice(psi.amplitudes());
            v.dotc(&(e * &v)).re
        }
        QuantumState::Mixed(rho) => (rho.matrix() * e).trace().re,
    }
}

/// One discrete flash history with its effect `E_h = K_h^dagger K_h`.
#[derive(Debug, Clone)]
pub struct HistoryEffect {
    pub history: Vec<KrausBranch>,
    pub effect: DMatrix<C64>,
}

/// Exhaustive first-order POVM on the flash histories of `n_steps` steps.
pub fn flash_history_povm(h: &Hamiltonian, params: &GrwParams, n_steps: usize, dt: f64) -> Result<Vec<HistoryEffect>> {
    Ok(history_operators(h, params, n_steps, dt, DEFAULT_BRANCH_CAP, DEFAULT_ENTRY_CAP)?
        .into_iter()
        .map(|(history, k)| HistoryEffect { effect: k.adjoint() * &k, history })
        .collect())
}

/// `tr(rho E_h)` for each history.
pub fn history_probabilities(effects: &[HistoryEffect], state: &QuantumState) -> Result<Vec<f64>> {
    if let Some(e) = effects.first() {
        if e.effect.nrows() != state.grid().dim() {
            return Err(Error::bad("state and POVM dimensions differ"));
        }
    }
    Ok(effects.iter().map(|e| expectation(state, &e.effect)).collect())
}

/// `.` for a silent step, `i:site` for a collapse, steps joined by `,`.
pub fn history_label(history: &[KrausBranch]) -> String {
    history
        .iter()
        .map(|b| match b {
            KrausBranch::NoCollapse => ".".to_string(),
            KrausBranch::Collapse { i, site } => format!("{i}:{site}"),
        })
        .collect::<Vec<_>>()
        .join(",")
}

impl Povm {
    pub fn from_histories(effects: &[HistoryEffect]) -> Result<Self> {
        Povm::new(effects.iter().map(|e| history_label(&e.history)).collect(), effects.iter().map(|e| e.effect.clone()).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evolution::kraus::{sample_discrete_history, KrausStep};
    use crate::hilbert::{DensityMatrix, GridSpec, StateVector};
    use crate::rng::stream;
    use std::collections::HashMap;
    use std::sync::Arc;

    fn ring() -> (Arc<GridSpec>, Hamiltonian) {
        let g = Arc::new(GridSpec::ring(2).unwrap());
        (g.clone(), Hamiltonian::new(g, |x| 0.3 * x[0]).unwrap())
    }

    #[test]
    fn zero_steps_gives_the_identity() {
        let (_, h) = ring();
        let p = GrwParams::new(0.5, 1.0).unwrap();
        let f = flash_history_povm(&h, &p, 0, 0.1).unwrap();
        assert_eq!(f.len(), 1);
        assert!((f[0].effect.clone() - DMatrix::<C64>::identity(2, 2)).camax() < 1e-15);
    }

    #[test]
    fn two_steps_on_two_sites_is_a_nine_element_povm() {
        let (_, h) = ring();
        let p = GrwParams::new(0.5, 1.0).unwrap();
        let povm = Povm::from_histories(&flash_history_povm(&h, &p, 2, 0.1).unwrap()).unwrap();
        assert_eq!(povm.len(), 9);
        assert!(povm.completeness_error() < 1e-10);
        assert!(povm.min_eigenvalue() > -1e-12);
        assert!(povm.clone().validated().is_ok());
    }

    #[test]
    fn history_probabilities_match_the_sampler() {
        let (g, h) = ring();
        let p = GrwParams::new(1.0, 1.0).unwrap();
        let psi = StateVector::random(g, &mut stream(3, 0));
        let effects = flash_history_povm(&h, &p, 2, 0.1).unwrap();
        let probs = history_probabilities(&effects, &QuantumState::Pure(psi.clone())).unwrap();
        let step = KrausStep::new(&h, &p, 0.1).unwrap();
        let mut rng = stream(3, 1);
        let n = 100_000;
        let mut counts: HashMap<Vec<KrausBranch>, usize> = HashMap::new();
        for _ in 0..n {
            *counts.entry(sample_discrete_history(&step, psi.amplitudes(), 2, &mut rng)).or_default() += 1;
        }
        for (e, pr) in effects.iter().zip(&probs) {
            let c = *counts.get(&e.history).unwrap_or(&0) as f64;
            let sd = (n as f64 * pr * (1.0 - pr)).sqrt().max(1.0);
            assert!((c - n as f64 * pr).abs() < 4.5 * sd, "{}", history_label(&e.history));
        }
    }

    #[test]
    fn outcome_distributions() {
        let g = Arc::new(GridSpec::ring(3).unwrap());
        let basis: Vec<DMatrix<C64>> = (0..3)
            .map(|q| DMatrix::from_fn(3, 3, |r, c| if r == q && c == q { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) }))
            .collect();
        let povm = Povm::new(vec!["a".into(), "b".into(), "c".into()], basis).unwrap();
        let e1 = StateVector::position_eigenstate(g.clone(), 1).unwrap();
        assert_eq!(outcome_distribution(&QuantumState::Pure(e1), &povm).unwrap(), vec![0.0, 1.0, 0.0]);

        let (_, h) = ring();
        let hp = Povm::from_histories(&flash_history_povm(&h, &GrwParams::new(1.0, 1.0).unwrap(), 2, 0.1).unwrap()).unwrap();
        let g2 = Arc::new(GridSpec::ring(2).unwrap());
        let a = StateVector::position_eigenstate(g2.clone(), 0).unwrap();
        let b = StateVector::position_eigenstate(g2.clone(), 1).unwrap();
        let mixed = QuantumState::Mixed(DensityMatrix::mixture(&[(0.5, &a), (0.5, &b)]).unwrap());
        for (p, e) in outcome_distribution(&mixed, &hp).unwrap().iter().zip(hp.elements()) {
            assert!((p - e.trace().re / 2.0).abs() < 1e-14);
        }

        let psi = StateVector::random(g2, &mut stream(9, 0));
        let dist = outcome_distribution(&QuantumState::Pure(psi.clone()), &hp).unwrap();
        assert!((dist.iter().sum::<f64>() - 1.0).abs() < 1e-10);
        for (p, e) in dist.iter().zip(hp.elements()) {
            let c = psi.amplitudes();
            let mut q = C64::new(0.0, 0.0);
            for r in 0..2 {
                for s in 0..2 {
                    q += c[r].conj() * e[(r, s)] * c[s];
                }
            }
            assert!((p - q.re).abs() < 1e-14);
        }
    }

    #[test]
    fn json_round_trip_and_rejects() {
        let (_, h) = ring();
        let povm = Povm::from_histories(&flash_history_povm(&h, &GrwParams::new(1.0, 1.0).unwrap(), 1, 0.1).unwrap()).unwrap();
        let back = Povm::from_json(&povm.to_json()).unwrap();
        assert_eq!(back, povm);
        assert!(Povm::from_json(r#"{"dim":2,"elements":[{"label":"a","matrix":[[[1,0]]]}]}"#).is_err());
        assert!(Povm::from_json(r#"{"dim":1,"elements":[]}"#).is_err());
        assert!(Povm::from_json(r#"{"dim":1,"elements":[{"label":"a","matrix":[[[1,0]]]},{"label":"a","matrix":[[[0,0]]]}]}"#).is_err());
        assert!(Povm::from_json(r#"{"dim":1,"elements":[{"label":"a","matrix":[[[1,0]]],"x":1}]}"#).is_err());
        let bad = Povm::from_json(r#"{"dim":1,"elements":[{"label":"a","matrix":[[[2,0]]]},{"label":"b","matrix":[[[-1,0]]]}]}"#).unwrap();
        assert!(bad.validated().is_err());
    }
}
