use std::collections::BTreeMap;

use rayon::prelude::*;

use super::report::{Check, RawTable, Requirement, TestReport};
use super::scenario::{Expectation, Model, ScenarioConfig, TestPlan};
use super::stats::{chi2_test, chi2_two_sample, fisher_combine, ks_test, tv_distance, PiecewiseCdf};
use crate::error::{Error, Result};
use crate::evolution::kraus::{sample_discrete_history, KrausStep};
use crate::evolution::log::replay_events;
use crate::evolution::{ensemble_density_matrix, sample_grw_ensemble, CollapseMode, GrwOptions, KrausBranch, MasterEquation, Propagator, QuantumState};
use crate::formalism::{
    bell_pair, experiment_povm, flash_history_povm, history_probabilities, local_potential, no_signaling_check, outcome_distribution, ExperimentSpec,
    Povm,
};
use crate::hilbert::{expected_flash_rate, DensityMatrix, GridSpec, GrwParams, Hamiltonian, StateVector};
use crate::ontology::{matter_density_from_dm, mbm_continuity_residual, BohmField, EquilibriumSampling, MbmField};
use crate::readout::{classify_po, MacroPartition};
use crate::rng::{derive_seed, stream};
use crate::theories::{PoHistory, PoKind, RunOptions, TheoryContext, TheoryId};

/// Significance levels for consistency and inconsistency claims.
pub const P_CONSISTENT: f64 = 0.01;
pub const P_WITNESS: f64 = 1e-3;

/// Report plus the raw tables behind it.
#[derive(Debug, Clone)]
pub struct ScenarioOutput {
    pub report: TestReport,
    pub raw: Vec<RawTable>,
}

/// Executes the scenario's ensemble and test plan.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<ScenarioOutput> {
    cfg.validate()?;
    let m = cfg.ensemble_size();
    let mut report = TestReport::new(&cfg.name, cfg.plan.name(), cfg.seed, m);
    let mut raw = Vec::new();
    match &cfg.plan {
        TestPlan::FlashRate { t_final, bounds } => {
            let model = cfg.build_model()?;
            let id = cfg.theory(0)?;
            let ctx = TheoryContext::new(id, &model.h, &model.params, model.initial_data(id, cfg.seed)?, *t_final, &[], &cfg.options)?;
            let runs = ctx.run_ensemble(m)?;
            let counts: Vec<f64> = runs.iter().map(|r| r.events.len() as f64).collect();
            let mean = counts.iter().sum::<f64>() / m as f64;
            let var = counts.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / (m.max(2) - 1) as f64;
            report.check(Check::new("mean_count", mean, Requirement::Within(bounds[0], bounds[1])));
            report.note(format!("expected {} with standard error {:.4}", model.params.total_rate(model.grid.n_particles()) * t_final, (var / m as f64).sqrt()));
            let mut t = RawTable::new("counts", &["index", "count"]);
            for (k, c) in counts.iter().enumerate() {
                t.push(vec![k.to_string(), c.to_string()]);
            }
            raw.push(t);
        }
        TestPlan::RateArithmetic { n, lambda, expected } => {
            let got = expected_flash_rate(*n, *lambda);
            report.check(Check::new("abs_error", (got - expected).abs(), Requirement::AtMost(0.0)).with_statistic(got));
        }
        TestPlan::EnsembleMaster { t, max_gap } => {
            let model = cfg.build_model()?;
            if cfg.options.mode != CollapseMode::PerParticle {
                return Err(Error::Config("ensemble_master compares per-particle collapses".into()));
            }
            let psi = model.pure()?;
            let opts = GrwOptions { mode: cfg.options.mode, schedule: cfg.options.schedule.clone() };
            let recs = sample_grw_ensemble(psi, &model.h, &model.params, *t, &[*t], cfg.seed, m, &opts)?;
            let rho = ensemble_density_matrix(&recs, *t)?;
            let exact = MasterEquation::new(&model.h, &model.params)?.propagate(&DensityMatrix::pure(psi), *t)?;
            report.check(Check::new("trace_norm_gap", rho.trace_norm_distance(&exact), Requirement::AtMost(*max_gap)));
        }
        TestPlan::DiagonalInvariance { times, tol } => {
            let model = cfg.build_model()?;
            let rho0 = model.density();
            let d0 = rho0.diagonal();
            let traj = MasterEquation::new(&model.h, &model.params)?.trajectory(&rho0, times)?;
            let gap = traj
                .iter()
                .flat_map(|r| r.diagonal().into_iter().zip(&d0).map(|(a, b)| (a - b).abs()).collect::<Vec<_>>())
                .fold(0.0, f64::max);
            if !model.h.is_zero() {
                report.note("H is not zero; the diagonal is only invariant for H = 0");
            }
            report.check(Check::new("max_diagonal_change", gap, Requirement::AtMost(*tol)));
        }
        TestPlan::MbmContinuity { t, dt, points, tol } => {
            let model = cfg.build_model()?;
            let master = MasterEquation::new(&model.h, &model.params)?.with_tolerance(1e-12);
            let r = mbm_continuity_residual(&master, &model.density(), *t, *dt, points)?;
            report.check(Check::new("max_residual", r, Requirement::AtMost(*tol)));
        }
        TestPlan::Equivariance { times } => {
            let model = cfg.build_model()?;
            let out = equivariance_test(cfg.theory(0)?, &model, &cfg.options, times, m, cfg.seed, &mut report)?;
            raw.push(out);
        }
        TestPlan::Conditional { t, min_bin, expect } => {
            let model = cfg.build_model()?;
            raw.push(grwp3_conditional_test(cfg.theory(0)?, &model, &cfg.options, *t, m, cfg.seed, *min_bin, *expect, &mut report)?);
        }
        TestPlan::Coincidence { times, tol } => {
            let model = cfg.build_model()?;
            let id = cfg.theory(0)?;
            if model.grid.n_particles() < 2 {
                return Err(Error::Config("coincidence needs two particles".into()));
            }
            let t_final = times.iter().copied().fold(0.0, f64::max);
            let ctx = TheoryContext::new(id, &model.h, &model.params, model.initial_data(id, cfg.seed)?, t_final, times, &cfg.options)?;
            let runs = ctx.run_ensemble(m)?;
            let d = model.grid.dims();
            let mut gap: f64 = 0.0;
            for r in &runs {
                let path = r.path().ok_or_else(|| Error::Config(format!("{id} has no particles")))?;
                for q in &path.configs {
                    for k in 0..d {
                        gap = gap.max(model.grid.min_image(q[k], q[d + k]).abs());
                    }
                }
                report.flagged_steps += r.flagged_steps() as u64;
                report.total_steps += r.steps() as u64;
            }
            report.check(Check::new("max_separation", gap, Requirement::AtMost(*tol)));
        }
        TestPlan::ConfigurationChi2 { t } => {
            let model = cfg.build_model()?;
            let id = cfg.theory(0)?;
            let ctx = TheoryContext::new(id, &model.h, &model.params, model.initial_data(id, cfg.seed)?, *t, &[*t], &cfg.options)?;
            let runs = ctx.run_ensemble(m)?;
            let g = &model.grid;
            let mut counts = vec![0u64; g.dim()];
            for r in &runs {
                let path = r.path().ok_or_else(|| Error::Config(format!("{id} has no particles")))?;
                counts[snap_config(g, &path.configs[0])] += 1;
                report.flagged_steps += r.flagged_steps() as u64;
                report.total_steps += r.steps() as u64;
            }
            let exact = MasterEquation::new(&model.h, &model.params)?.propagate(&model.density(), *t)?;
            let s = chi2_test(&counts, &exact.diagonal())?;
            report.check(Check::new("chi2", s.p_value, Requirement::PAbove(P_CONSISTENT)).with_statistic(s.statistic));
        }
        TestPlan::CatClassification { t, tol } => {
            let model = cfg.build_model()?;
            raw.push(cat_classification(cfg, &model, *t, *tol, m, &mut report)?);
        }
        TestPlan::Equivalence { times, expect } => {
            let model = cfg.build_model()?;
            let pair = (cfg.theory(0)?, cfg.theory(1)?);
            raw.push(equivalence_suite(pair, &model, &cfg.options, times, m, cfg.seed, *expect, &mut report)?);
        }
        TestPlan::PovmExactness { draws } => povm_exactness(cfg.seed, *draws, &mut report)?,
        TestPlan::NoSignaling { steps, dt, field, interaction } => {
            let params = match &cfg.model {
                Some(spec) => GrwParams::new(spec.lambda, spec.sigma)?,
                None => GrwParams::new(0.5, 0.5)?,
            };
            let (grid, psi) = bell_pair()?;
            let free = Hamiltonian::free(grid.clone());
            let local = Hamiltonian::from_values(grid.clone(), local_potential(&grid, 1, |x| field * x[0]), true)?;
            let gap = no_signaling_check(&psi, &[free.clone(), local], &params, &[0], *steps, *dt)?;
            report.check(Check::new("local_gap", gap, Requirement::AtMost(1e-10)));
            if *interaction != 0.0 {
                let mut v = local_potential(&grid, 1, |x| field * x[0]);
                for (q, vq) in v.iter_mut().enumerate() {
                    *vq += interaction * (grid.site_of(q, 0) * grid.site_of(q, 1)) as f64;
                }
                let coupled = Hamiltonian::from_values(grid, v, true)?;
                let leak = no_signaling_check(&psi, &[free, coupled], &params, &[0], *steps, *dt)?;
                report.check(Check::new("interaction_gap", leak, Requirement::AtLeast(0.01)));
            }
        }
    }
    Ok(ScenarioOutput { report: report.finish(), raw })
}

fn snap_config(g: &GridSpec, q: &[f64]) -> usize {
    let d = g.dims();
    let sites: Vec<usize> = (0..g.n_particles()).map(|i| g.snap(&q[i * d..(i + 1) * d])).collect();
    g.config_index(&sites)
}

/// Marginal of the first coordinate on its `L` lattice values.
fn axis0_masses(g: &GridSpec, state: &QuantumState) -> Vec<f64> {
    let mut out = vec![0.0; g.points_per_dim()];
    for (q, p) in state.diagonal().iter().enumerate() {
        out[g.axis_index(q, 0)] += p;
    }
    out
}

/// Law of the first coordinate under the equilibrium density of `state`.
fn reference_cdf(g: &GridSpec, state: &QuantumState, sampling: EquilibriumSampling) -> Result<PiecewiseCdf> {
    match sampling {
        EquilibriumSampling::Lattice => Ok(PiecewiseCdf::lattice(&axis0_masses(g, state), g.spacing())),
        EquilibriumSampling::Interpolant => {
            if g.n_axes() != 1 {
                return Err(Error::Config("interpolant references need a single coordinate".into()));
            }
            let points = 64 * g.points_per_dim();
            Ok(match state {
                QuantumState::Pure(psi) => {
                    let f = BohmField::new(psi);
                    PiecewiseCdf::from_density(g.box_len(), points, |x| f.density(&[x]))
                }
                QuantumState::Mixed(rho) => {
                    let f = MbmField::new(rho);
                    PiecewiseCdf::from_density(g.box_len(), points, |x| f.density(&[x]))
                }
            })
        }
    }
}

/// Quantum state the guidance law is equivariant for at `t`.
fn equivariant_state(id: TheoryId, model: &Model, t: f64) -> Result<QuantumState> {
    Ok(if id.is_mixed() {
        QuantumState::Mixed(MasterEquation::new(&model.h, &model.params)?.propagate(&model.density(), t)?)
    } else {
        QuantumState::Pure(Propagator::new(&model.h).evolve(model.pure()?, t))
    })
}

fn tally(report: &mut TestReport, runs: &[PoHistory]) {
    for r in runs {
        report.flagged_steps += r.flagged_steps() as u64;
        report.total_steps += r.steps() as u64;
    }
}

/// KS of the first coordinate of `Q(t)` against the equivariant density, one
/// check per time.
pub fn equivariance_test(
    id: TheoryId,
    model: &Model,
    opts: &RunOptions,
    times: &[f64],
    m: usize,
    seed: u64,
    report: &mut TestReport,
) -> Result<RawTable> {
    if id.po_kind() != PoKind::Particles {
        return Err(Error::Config(format!("{id} has no particle configuration")));
    }
    let t_final = times.iter().copied().fold(0.0, f64::max);
    let ctx = TheoryContext::new(id, &model.h, &model.params, model.initial_data(id, seed)?, t_final, times, opts)?;
    let runs = ctx.run_ensemble(m)?;
    tally(report, &runs);
    let mut table = RawTable::new("samples", &["index", "t", "x0"]);
    for (k, t) in times.iter().enumerate() {
        let xs: Vec<f64> = runs.iter().map(|r| r.path().expect("particle theory").configs[k][0]).collect();
        for (i, x) in xs.iter().enumerate() {
            table.push(vec![i.to_string(), t.to_string(), x.to_string()]);
        }
        let cdf = reference_cdf(&model.grid, &equivariant_state(id, model, *t)?, opts.sampling)?;
        let s = ks_test(&xs, |x| cdf.eval(x))?;
        report.check(Check::new(format!("ks_t={t}"), s.p_value, Requirement::PAbove(P_CONSISTENT)).with_statistic(s.statistic));
    }
    Ok(table)
}

type RecordKey = Vec<(usize, usize, i64)>;

/// Groups runs by identical collapse records up to `t` and tests `Q(t)` in
/// each large group against the density of the recorded `psi_t`.
///
/// With `H = 0` and lattice sampling the reference is exact; otherwise the
/// lattice reference ignores intra-cell transport.
#[allow(clippy::too_many_arguments)]
pub fn grwp3_conditional_test(
    id: TheoryId,
    model: &Model,
    opts: &RunOptions,
    t: f64,
    m: usize,
    seed: u64,
    min_bin: usize,
    expect: Expectation,
    report: &mut TestReport,
) -> Result<RawTable> {
    if id.po_kind() != PoKind::Particles || id.is_mixed() {
        return Err(Error::Config(format!("{id} is not a pure-state particle theory")));
    }
    let psi0 = model.pure()?;
    let ctx = TheoryContext::new(id, &model.h, &model.params, model.initial_data(id, seed)?, t, &[t], opts)?;
    let runs = ctx.run_ensemble(m)?;
    tally(report, &runs);
    let mut bins: BTreeMap<RecordKey, Vec<usize>> = BTreeMap::new();
    for (k, r) in runs.iter().enumerate() {
        let key = r.events.iter().filter(|e| e.t <= t).map(|e| (e.i, e.site, (e.t * 1e9).round() as i64)).collect();
        bins.entry(key).or_default().push(k);
    }
    let mut table = RawTable::new("bins", &["record", "members", "ks", "p"]);
    let mut ps = Vec::new();
    for (key, members) in &bins {
        if members.len() < min_bin {
            continue;
        }
        let events = &runs[members[0]].events[..key.len()];
        let psi_t = replay_events(psi0, &model.h, &model.params, opts.mode, events, t, &[t])?.pop().expect("one snapshot").1;
        let cdf = reference_cdf(&model.grid, &QuantumState::Pure(psi_t), opts.sampling)?;
        let xs: Vec<f64> = members.iter().map(|&k| runs[k].path().expect("particles").configs[0][0]).collect();
        let s = ks_test(&xs, |x| cdf.eval(x))?;
        let label = key.iter().map(|(i, site, _)| format!("{i}:{site}")).collect::<Vec<_>>().join(" ");
        table.push(vec![format!("[{label}]"), members.len().to_string(), s.statistic.to_string(), format!("{:.6e}", s.p_value)]);
        ps.push(s.p_value);
    }
    if ps.is_empty() {
        let largest = bins.values().map(Vec::len).max().unwrap_or(0);
        report.note(Error::InsufficientBinMass { largest, needed: min_bin }.to_string());
        return Ok(table);
    }
    let f = fisher_combine(&ps)?;
    let req = match expect {
        Expectation::Consistent => Requirement::PAbove(P_CONSISTENT),
        Expectation::Inconsistent => Requirement::PBelow(P_WITNESS),
    };
    report.check(Check::new(format!("fisher_over_{}_bins", ps.len()), f.p_value, req).with_statistic(f.statistic));
    Ok(table)
}

fn label_columns(partition: &MacroPartition) -> Vec<String> {
    let mut cols: Vec<String> = partition.labels().to_vec();
    if !cols.iter().any(|c| c == "mixed") {
        cols.push("mixed".into());
    }
    cols
}

/// Macro label at `t`, or `None` when the readout has no outcome.
fn read_label(h: &PoHistory, g: &GridSpec, partition: &MacroPartition, t: f64, window: f64) -> Result<Option<String>> {
    match classify_po(h, g, partition, t, window) {
        Ok(l) => Ok(Some(partition.label(&l).to_string())),
        Err(Error::NoFlashes | Error::EmptyRegionMass) => Ok(None),
        Err(e) => Err(e),
    }
}

fn run_for_labels(id: TheoryId, model: &Model, opts: &RunOptions, times: &[f64], m: usize, seed: u64) -> Result<Vec<PoHistory>> {
    let t_last = times.iter().copied().fold(0.0, f64::max);
    let t_final = if id.po_kind() == PoKind::Flashes { t_last + model.window } else { t_last };
    let ctx = TheoryContext::new(id, &model.h, &model.params, model.initial_data(id, seed)?, t_final, times, opts)?;
    ctx.run_ensemble(m)
}

/// Compares the macro-label distributions of two theories at each time by a
/// χ² homogeneity test. Each theory draws from its own derived seed.
#[allow(clippy::too_many_arguments)]
pub fn equivalence_suite(
    pair: (TheoryId, TheoryId),
    model: &Model,
    opts: &RunOptions,
    times: &[f64],
    m: usize,
    seed: u64,
    expect: Expectation,
    report: &mut TestReport,
) -> Result<RawTable> {
    let partition = model.partition()?;
    let cols = label_columns(partition);
    let mut header = vec!["t".to_string(), "theory".to_string()];
    header.extend(cols.iter().cloned());
    header.extend(["none".to_string(), "p".to_string(), "tv".to_string()]);
    let mut table = RawTable { name: "labels".into(), header, rows: Vec::new() };
    let ids = [pair.0, pair.1];
    let runs = ids
        .iter()
        .map(|id| run_for_labels(*id, model, opts, times, m, derive_seed(seed, id.as_str())))
        .collect::<Result<Vec<_>>>()?;
    for r in &runs {
        tally(report, r);
    }
    let mut ps = Vec::new();
    for t in times {
        let mut counts = [vec![0u64; cols.len()], vec![0u64; cols.len()]];
        let mut none = [0usize; 2];
        for (side, rs) in runs.iter().enumerate() {
            let labels = rs.par_iter().map(|h| read_label(h, &model.grid, partition, *t, model.window)).collect::<Result<Vec<_>>>()?;
            for l in labels {
                match l {
                    Some(l) => counts[side][cols.iter().position(|c| *c == l).expect("known label")] += 1,
                    None => none[side] += 1,
                }
            }
        }
        report.no_outcome += none[0] + none[1];
        let s = chi2_two_sample(&counts[0], &counts[1])?;
        let fa: Vec<f64> = counts[0].iter().map(|c| *c as f64).collect();
        let fb: Vec<f64> = counts[1].iter().map(|c| *c as f64).collect();
        let tv = tv_distance(&fa, &fb)?;
        for side in 0..2 {
            let mut row = vec![t.to_string(), ids[side].to_string()];
            row.extend(counts[side].iter().map(|c| c.to_string()));
            row.extend([none[side].to_string(), format!("{:.6e}", s.p_value), tv.to_string()]);
            table.push(row);
        }
        if expect == Expectation::Consistent {
            report.check(Check::new(format!("chi2_t={t}"), s.p_value, Requirement::PAbove(P_CONSISTENT)).with_statistic(s.statistic));
        }
        ps.push((t, s));
    }
    if expect == Expectation::Inconsistent {
        let (t, s) = ps.iter().min_by(|a, b| a.1.p_value.total_cmp(&b.1.p_value)).expect("at least one time");
        report.check(Check::new(format!("min_chi2_p (t={t})"), s.p_value, Requirement::PBelow(P_WITNESS)).with_statistic(s.statistic));
    }
    Ok(table)
}

/// Branch frequencies for collapse theories, the mixed readout for
/// non-collapse theories, and the matter identity for mixture matter fields.
fn cat_classification(cfg: &ScenarioConfig, model: &Model, t: f64, tol: f64, m: usize, report: &mut TestReport) -> Result<RawTable> {
    let cat = model.cat.as_ref().ok_or_else(|| Error::Config("cat_classification needs a cat initial state".into()))?;
    let partition = model.partition()?;
    let cols = label_columns(partition);
    let mut header = vec!["theory".to_string()];
    header.extend(cols.iter().cloned());
    header.push("none".into());
    let mut table = RawTable { name: "labels".into(), header, rows: Vec::new() };
    if cfg.theories.is_empty() {
        return Err(Error::Config("cat_classification needs theories".into()));
    }
    for id in &cfg.theories {
        let runs = run_for_labels(*id, model, &cfg.options, &[t], m, derive_seed(cfg.seed, id.as_str()))?;
        tally(report, &runs);
        let mut counts = vec![0usize; cols.len()];
        let mut none = 0;
        for h in &runs {
            match read_label(h, &model.grid, partition, t, model.window)? {
                Some(l) => counts[cols.iter().position(|c| *c == l).expect("known label")] += 1,
                None => none += 1,
            }
        }
        report.no_outcome += none;
        let mut row = vec![id.to_string()];
        row.extend(counts.iter().map(|c| c.to_string()));
        row.push(none.to_string());
        table.push(row);
        let freq = |label: &str| counts[cols.iter().position(|c| c == label).expect("label")] as f64 / m as f64;
        if id.collapses() {
            for label in cat.labels {
                report.check(Check::new(format!("{id}_{label}_fraction"), freq(label), Requirement::Within(0.48, 0.52)));
            }
        } else {
            report.check(Check::new(format!("{id}_mixed_fraction"), freq("mixed"), Requirement::AtLeast(1.0)));
        }
        if id.po_kind() == PoKind::Matter && !id.collapses() {
            let field = &runs[0].fields().expect("matter theory")[0];
            let master = MasterEquation::new(&model.h, &model.params)?;
            let branch = |k: usize| -> Result<Vec<f64>> {
                let rho = master.propagate(&DensityMatrix::pure(&cat.branches[k]), t)?;
                Ok(matter_density_from_dm(&rho, t, cfg.options.weight)?.values)
            };
            let (alive, dead) = (branch(0)?, branch(1)?);
            let gap = field.values.iter().zip(alive.iter().zip(&dead)).map(|(m, (a, d))| (m - 0.5 * (a + d)).abs()).fold(0.0, f64::max);
            report.check(Check::new(format!("{id}_matter_identity"), gap, Requirement::AtMost(tol)));
        }
    }
    Ok(table)
}

/// Exactness checks on the flash-history and experiment POVMs.
fn povm_exactness(seed: u64, draws: usize, report: &mut TestReport) -> Result<()> {
    let spec = ExperimentSpec::tiny_1p1(3)?;
    let effects = flash_history_povm(&spec.hamiltonian, &spec.params, spec.n_steps, spec.dt)?;
    let full = Povm::from_histories(&effects)?;
    report.check(Check::new("history_completeness", full.completeness_error(), Requirement::AtMost(1e-8)));
    report.check(Check::new("history_min_eigenvalue", full.min_eigenvalue(), Requirement::AtLeast(-1e-9)));
    let exp = experiment_povm(&spec)?;
    report.check(Check::new("experiment_completeness", exp.completeness_error(), Requirement::AtMost(1e-8)));

    let mut factor_gap: f64 = 0.0;
    for k in 0..5 {
        let psi = StateVector::random(spec.split.sys().clone(), &mut stream(seed, 2 * k));
        let phi = StateVector::random(spec.split.env().clone(), &mut stream(seed, 2 * k + 1));
        let s = ExperimentSpec { env_state: phi.clone(), ..spec.clone() };
        let povm = experiment_povm(&s)?;
        let via_povm = outcome_distribution(&QuantumState::Pure(psi.clone()), &povm)?;
        let joint = QuantumState::Pure(s.split.embed(&psi, &phi)?);
        let probs = history_probabilities(&effects, &joint)?;
        for (label, p) in povm.labels().iter().zip(via_povm) {
            let direct: f64 = effects.iter().zip(&probs).filter(|(e, _)| (s.zeta)(&e.history).as_deref() == Some(label)).map(|(_, q)| q).sum();
            factor_gap = factor_gap.max((direct - p).abs());
        }
    }
    report.check(Check::new("factorization_gap", factor_gap, Requirement::AtMost(1e-10)));

    let grid = spec.split.full().clone();
    let comps: Vec<StateVector> = (0..3).map(|k| StateVector::random(grid.clone(), &mut stream(seed, 100 + k))).collect();
    let weights = [0.5, 0.3, 0.2];
    let terms: Vec<(f64, &StateVector)> = weights.iter().copied().zip(&comps).collect();
    let rho = QuantumState::Mixed(DensityMatrix::mixture(&terms)?);
    let mixed = history_probabilities(&effects, &rho)?;
    let mut parts = vec![0.0; effects.len()];
    for (w, c) in weights.iter().zip(&comps) {
        for (acc, p) in parts.iter_mut().zip(history_probabilities(&effects, &QuantumState::Pure(c.clone()))?) {
            *acc += w * p;
        }
    }
    let mix_gap = mixed.iter().zip(&parts).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    report.check(Check::new("mixture_identity_gap", mix_gap, Requirement::AtMost(1e-12)));

    let ring = std::sync::Arc::new(GridSpec::ring(2)?);
    let h = Hamiltonian::new(ring.clone(), |x| 0.3 * x[0])?;
    let params = GrwParams::new(1.0, 1.0)?;
    let psi = StateVector::random(ring, &mut stream(seed, 200));
    let n_steps = 2;
    let effects = flash_history_povm(&h, &params, n_steps, 0.1)?;
    let probs = history_probabilities(&effects, &QuantumState::Pure(psi.clone()))?;
    let step = KrausStep::new(&h, &params, 0.1)?;
    let index: BTreeMap<Vec<KrausBranch>, usize> = effects.iter().enumerate().map(|(k, e)| (e.history.clone(), k)).collect();
    const CHUNK: usize = 10_000;
    let chunks = draws.div_ceil(CHUNK);
    let counts = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = stream(derive_seed(seed, "povm-sampler"), c as u64);
            let mut local = vec![0u64; effects.len()];
            for _ in 0..CHUNK.min(draws - c * CHUNK) {
                local[index[&sample_discrete_history(&step, psi.amplitudes(), n_steps, &mut rng)]] += 1;
            }
            local
        })
        .reduce(|| vec![0u64; effects.len()], |a, b| a.iter().zip(&b).map(|(x, y)| x + y).collect());
    let s = chi2_test(&counts, &probs)?;
    report.check(Check::new("sampler_chi2", s.p_value, Requirement::PAbove(P_CONSISTENT)).with_statistic(s.statistic));
    Ok(())
}
