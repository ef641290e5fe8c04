use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evolution::QuantumState;
use crate::hilbert::{DensityMatrix, GridSpec, GrwParams, Hamiltonian, StateVector, C64};
use crate::readout::{MacroPartition, Region};
use crate::rng::stream;
use crate::theories::{CatScenario, CatSpec, InitialData, RunOptions, TheoryId};

/// A declarative scenario: model, initial state, theories and test plan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Ensemble size; the plan's default when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ensemble: Option<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub theories: Vec<TheoryId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub init: Option<StateSpec>,
    #[serde(default)]
    pub options: RunOptions,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub readout: Option<ReadoutSpec>,
    pub plan: TestPlan,
}

fn default_seed() -> u64 {
    42
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub particles: usize,
    #[serde(default = "one_usize")]
    pub dims: usize,
    pub points: usize,
    #[serde(default = "one_f64")]
    pub spacing: f64,
    /// Unit masses when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub masses: Option<Vec<f64>>,
    #[serde(default)]
    pub hamiltonian: HamiltonianSpec,
    pub lambda: f64,
    #[serde(default = "one_f64")]
    pub sigma: f64,
}

fn one_usize() -> usize {
    1
}

fn one_f64() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HamiltonianSpec {
    #[serde(default)]
    pub kinetic: bool,
    #[serde(default)]
    pub potential: PotentialSpec,
}

impl HamiltonianSpec {
    pub fn zero() -> Self {
        HamiltonianSpec { kinetic: false, potential: PotentialSpec::None }
    }

    pub fn free() -> Self {
        HamiltonianSpec { kinetic: true, potential: PotentialSpec::None }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PotentialSpec {
    #[default]
    None,
    /// `(omega^2 / 2) sum_k (x_k - center)^2` with minimum-image displacements.
    Harmonic { omega: f64, center: f64 },
    /// `strength cos(x_0 - x_1)` on the first two coordinates.
    PairCos { strength: f64 },
}

/// Initial states. Mixed theories start from the projector on a pure state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum StateSpec {
    Packet { centers: Vec<f64>, widths: Vec<f64>, #[serde(default)] momenta: Vec<f64> },
    /// `(|a, b> + |b, a>)/sqrt 2` built from two-particle packets.
    SymmetricPair { a: f64, b: f64, width: f64 },
    /// Two-branch cat state on the model grid.
    Cat { separation: f64, #[serde(default = "cat_width")] width: f64 },
    Random { seed: u64 },
    /// Incoherent mixture of packets; only mixed theories accept it.
    Mixture { weights: Vec<f64>, packets: Vec<PacketSpec> },
}

fn cat_width() -> f64 {
    CatSpec::default().width
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PacketSpec {
    pub centers: Vec<f64>,
    pub widths: Vec<f64>,
    #[serde(default)]
    pub momenta: Vec<f64>,
}

/// Macro partition: configurations with every particle in region `j` are
/// cell `labels[j]`; everything else is `mixed`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReadoutSpec {
    pub labels: Vec<String>,
    pub regions: Vec<Region>,
    /// Flash window `[t, t + window]`.
    #[serde(default = "one_f64")]
    pub window: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Expectation {
    /// Every p-value above 0.01.
    Consistent,
    /// Some p-value below 1e-3.
    Inconsistent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "test", rename_all = "snake_case", deny_unknown_fields)]
pub enum TestPlan {
    /// Mean flash count of the first theory against `[lo, hi]`.
    FlashRate { t_final: f64, bounds: [f64; 2] },
    /// `expected_flash_rate(n, lambda) == expected`.
    RateArithmetic { n: f64, lambda: f64, expected: f64 },
    /// Trace-norm gap between the GRW ensemble and the master equation.
    EnsembleMaster { t: f64, max_gap: f64 },
    /// Position diagonal of the master evolution; meant for `H = 0`.
    DiagonalInvariance { times: Vec<f64>, tol: f64 },
    MbmContinuity { t: f64, dt: f64, points: Vec<Vec<f64>>, tol: f64 },
    /// KS of the first coordinate against the equivariant density.
    Equivariance { times: Vec<f64> },
    /// Conditional law of `Q(t)` given identical collapse records.
    Conditional { t: f64, #[serde(default = "min_bin")] min_bin: usize, expect: Expectation },
    /// `max |Q_1 - Q_2|` over runs and times.
    Coincidence { times: Vec<f64>, tol: f64 },
    /// χ² of snapped configurations against the master diagonal.
    ConfigurationChi2 { t: f64 },
    CatClassification { t: f64, tol: f64 },
    Equivalence { times: Vec<f64>, expect: Expectation },
    PovmExactness { draws: usize },
    NoSignaling { steps: usize, dt: f64, field: f64, interaction: f64 },
}

fn min_bin() -> usize {
    200
}

impl TestPlan {
    pub fn name(&self) -> &'static str {
        match self {
            TestPlan::FlashRate { .. } => "flash_rate",
            TestPlan::RateArithmetic { .. } => "rate_arithmetic",
            TestPlan::EnsembleMaster { .. } => "ensemble_master",
            TestPlan::DiagonalInvariance { .. } => "diagonal_invariance",
            TestPlan::MbmContinuity { .. } => "mbm_continuity",
            TestPlan::Equivariance { .. } => "equivariance",
            TestPlan::Conditional { .. } => "conditional",
            TestPlan::Coincidence { .. } => "coincidence",
            TestPlan::ConfigurationChi2 { .. } => "configuration_chi2",
            TestPlan::CatClassification { .. } => "cat_classification",
            TestPlan::Equivalence { .. } => "equivalence",
            TestPlan::PovmExactness { .. } => "povm_exactness",
            TestPlan::NoSignaling { .. } => "no_signaling",
        }
    }

    pub fn default_ensemble(&self) -> usize {
        match self {
            TestPlan::RateArithmetic { .. } | TestPlan::DiagonalInvariance { .. } | TestPlan::MbmContinuity { .. } | TestPlan::NoSignaling { .. } => 1,
            TestPlan::Coincidence { .. } => 100,
            TestPlan::PovmExactness { draws } => *draws,
            _ => 10_000,
        }
    }
}

impl ScenarioConfig {
    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn ensemble_size(&self) -> usize {
        self.ensemble.unwrap_or_else(|| self.plan.default_ensemble())
    }

    /// Cheap structural checks; component validation happens on build.
    pub fn validate(&self) -> Result<()> {
        if self.name.is_empty() {
            return Err(Error::Config("scenario name is empty".into()));
        }
        if self.ensemble == Some(0) {
            return Err(Error::BadArgument("ensemble size must be at least 1".into()));
        }
        if let Some(m) = &self.model {
            if m.dims == 0 || m.dims > 3 {
                return Err(Error::Config(format!("dims must be 1, 2 or 3, got {}", m.dims)));
            }
        }
        Ok(())
    }

    pub fn theory(&self, k: usize) -> Result<TheoryId> {
        self.theories.get(k).copied().ok_or_else(|| Error::Config(format!("plan {} needs at least {} theories", self.plan.name(), k + 1)))
    }

    pub fn build_model(&self) -> Result<Model> {
        let spec = self.model.as_ref().ok_or_else(|| Error::Config(format!("plan {} needs a model", self.plan.name())))?;
        let init = self.init.as_ref().ok_or_else(|| Error::Config(format!("plan {} needs an initial state", self.plan.name())))?;
        Model::build(spec, init, self.readout.as_ref())
    }
}

/// A built scenario model.
#[derive(Debug, Clone)]
pub struct Model {
    pub grid: Arc<GridSpec>,
    pub h: Hamiltonian,
    pub params: GrwParams,
    pub state: QuantumState,
    pub cat: Option<CatScenario>,
    pub partition: Option<MacroPartition>,
    pub window: f64,
}

fn potential(grid: &GridSpec, spec: &PotentialSpec) -> Result<Vec<f64>> {
    let d = grid.dim();
    Ok(match *spec {
        PotentialSpec::None => vec![0.0; d],
        PotentialSpec::Harmonic { omega, center } => (0..d)
            .map(|q| grid.config_position(q).iter().map(|x| 0.5 * omega * omega * grid.min_image(*x, center).powi(2)).sum())
            .collect(),
        PotentialSpec::PairCos { strength } => {
            if grid.n_axes() < 2 {
                return Err(Error::Config("pair_cos needs two coordinates".into()));
            }
            (0..d).map(|q| {
                let x = grid.config_position(q);
                strength * (x[0] - x[1]).cos()
            })
            .collect()
        }
    })
}

fn packet(grid: &Arc<GridSpec>, p: &PacketSpec) -> Result<StateVector> {
    let momenta = if p.momenta.is_empty() { vec![0.0; p.centers.len()] } else { p.momenta.clone() };
    StateVector::gaussian_packet(grid.clone(), &p.centers, &p.widths, &momenta)
}

impl Model {
    pub fn build(spec: &ModelSpec, init: &StateSpec, readout: Option<&ReadoutSpec>) -> Result<Self> {
        let masses = spec.masses.clone().unwrap_or_else(|| vec![1.0; spec.particles]);
        let params = GrwParams::new(spec.lambda, spec.sigma)?;
        let mut cat = None;
        let (grid, state) = match init {
            StateSpec::Cat { separation, width } => {
                let c = CatScenario::new(&CatSpec {
                    n_particles: spec.particles,
                    dims: spec.dims,
                    points_per_dim: spec.points,
                    spacing: spec.spacing,
                    separation: *separation,
                    width: *width,
                })?;
                if masses.iter().any(|m| *m != 1.0) {
                    return Err(Error::Config("cat scenarios use unit masses".into()));
                }
                let g = c.grid.clone();
                let s = QuantumState::Pure(c.psi.clone());
                cat = Some(c);
                (g, s)
            }
            other => {
                let g = Arc::new(GridSpec::build(spec.particles, spec.dims, spec.points, spec.spacing, masses)?);
                let s = match other {
                    StateSpec::Packet { centers, widths, momenta } => {
                        QuantumState::Pure(packet(&g, &PacketSpec { centers: centers.clone(), widths: widths.clone(), momenta: momenta.clone() })?)
                    }
                    StateSpec::SymmetricPair { a, b, width } => {
                        if spec.particles != 2 || spec.dims != 1 {
                            return Err(Error::Config("symmetric_pair needs two particles in one dimension".into()));
                        }
                        let x = StateVector::gaussian_packet(g.clone(), &[*a, *b], &[*width; 2], &[0.0; 2])?;
                        let y = StateVector::gaussian_packet(g.clone(), &[*b, *a], &[*width; 2], &[0.0; 2])?;
                        let r = C64::new(0.5f64.sqrt(), 0.0);
                        QuantumState::Pure(StateVector::superpose(&[(r, &x), (r, &y)])?)
                    }
                    StateSpec::Random { seed } => QuantumState::Pure(StateVector::random(g.clone(), &mut stream(*seed, 0))),
                    StateSpec::Mixture { weights, packets } => {
                        if weights.len() != packets.len() || packets.is_empty() {
                            return Err(Error::Config("mixture needs one weight per packet".into()));
                        }
                        let states = packets.iter().map(|p| packet(&g, p)).collect::<Result<Vec<_>>>()?;
                        let terms: Vec<(f64, &StateVector)> = weights.iter().copied().zip(&states).collect();
                        QuantumState::Mixed(DensityMatrix::mixture(&terms)?)
                    }
                    StateSpec::Cat { .. } => unreachable!(),
                };
                (g, s)
            }
        };
        let h = Hamiltonian::from_values(grid.clone(), potential(&grid, &spec.hamiltonian.potential)?, spec.hamiltonian.kinetic)?;
        let (partition, window) = match (readout, &cat) {
            (Some(r), _) => {
                let regions = r.regions.iter().map(|x| x.clone().validated(&grid)).collect::<Result<Vec<_>>>()?;
                if !(r.window.is_finite() && r.window > 0.0) {
                    return Err(Error::Config("readout window must be positive".into()));
                }
                (Some(MacroPartition::from_regions(&grid, r.labels.clone(), &regions)?), r.window)
            }
            (None, Some(c)) => (Some(c.default_partition()?), 1.0),
            (None, None) => (None, 1.0),
        };
        Ok(Model { grid, h, params, state, cat, partition, window })
    }

    pub fn pure(&self) -> Result<&StateVector> {
        match &self.state {
            QuantumState::Pure(p) => Ok(p),
            QuantumState::Mixed(_) => Err(Error::Config("plan needs a pure initial state".into())),
        }
    }

    pub fn density(&self) -> DensityMatrix {
        self.state.density_matrix()
    }

    /// Initial data for `id`: pure theories need a pure state, mixed ones get
    /// the state itself or its projector.
    pub fn initial_data(&self, id: TheoryId, seed: u64) -> Result<InitialData> {
        Ok(if id.is_mixed() {
            InitialData::mixed(self.density(), seed)
        } else {
            InitialData::pure(self.pure()?.clone(), seed)
        })
    }

    pub fn partition(&self) -> Result<&MacroPartition> {
        self.partition.as_ref().ok_or_else(|| Error::Config("plan needs a readout partition".into()))
    }
}

impl CatScenario {
    /// Slabs of half the branch separation (less a margin) around each center.
    pub fn default_partition(&self) -> Result<MacroPartition> {
        let sep = (self.centers[1] - self.centers[0]).abs();
        let half = 0.375 * sep;
        let regions = self.centers.iter().map(|c| Region::slab(&self.grid, *c, half)).collect::<Result<Vec<_>>>()?;
        MacroPartition::from_regions(&self.grid, self.labels.iter().map(|s| s.to_string()).collect(), &regions)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal() -> &'static str {
        r#"{"name":"x","theories":["BM"],"model":{"particles":1,"points":8,"lambda":0.1,"hamiltonian":{"kinetic":true}},
            "init":{"kind":"packet","centers":[3.0],"widths":[1.0]},"plan":{"test":"equivariance","times":[1.0]}}"#
    }

    #[test]
    fn configs_parse_with_defaults() {
        let c = ScenarioConfig::from_json(minimal()).unwrap();
        assert_eq!(c.seed, 42);
        assert_eq!(c.ensemble_size(), 10_000);
        let m = c.build_model().unwrap();
        assert!(m.h.has_kinetic());
        assert_eq!(m.grid.dim(), 8);
        let back = ScenarioConfig::from_json(&c.to_json()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn bad_configs_are_rejected() {
        assert!(matches!(ScenarioConfig::from_json("{}"), Err(Error::Config(_))));
        let extra = minimal().replace("\"name\":\"x\"", "\"name\":\"x\",\"bogus\":1");
        assert!(ScenarioConfig::from_json(&extra).is_err());
        let mut c = ScenarioConfig::from_json(minimal()).unwrap();
        c.ensemble = Some(0);
        assert!(matches!(c.validate(), Err(Error::BadArgument(_))));
        let plan = minimal().replace("\"equivariance\"", "\"nope\"");
        assert!(ScenarioConfig::from_json(&plan).is_err());
    }

    #[test]
    fn cat_models_get_a_default_partition() {
        let spec = ModelSpec { particles: 2, dims: 1, points: 32, spacing: 1.0, masses: None, hamiltonian: HamiltonianSpec::zero(), lambda: 5.0, sigma: 1.0 };
        let m = Model::build(&spec, &StateSpec::Cat { separation: 16.0, width: 0.6 }, None).unwrap();
        let p = m.partition().unwrap();
        assert_eq!(p.labels(), ["alive", "dead", "mixed"]);
        assert!(m.h.is_zero());
        assert!(m.initial_data(TheoryId::Mm, 0).unwrap().rho0.is_some());
    }

    #[test]
    fn potentials() {
        let g = GridSpec::build(2, 1, 4, 1.0, vec![1.0, 1.0]).unwrap();
        let v = potential(&g, &PotentialSpec::PairCos { strength: 0.3 }).unwrap();
        assert!((v[g.config_index(&[1, 0])] - 0.3 * 1f64.cos()).abs() < 1e-15);
        let h = potential(&g, &PotentialSpec::Harmonic { omega: 2.0, center: 0.0 }).unwrap();
        assert!((h[g.config_index(&[3, 1])] - 2.0 * 2.0).abs() < 1e-12);
        let one = GridSpec::build(1, 1, 4, 1.0, vec![1.0]).unwrap();
        assert!(potential(&one, &PotentialSpec::PairCos { strength: 1.0 }).is_err());
    }
}
