use super::scenario::{Expectation, HamiltonianSpec, ModelSpec, PacketSpec, PotentialSpec, ReadoutSpec, ScenarioConfig, StateSpec, TestPlan};
use crate::error::{Error, Result};
use crate::evolution::{CollapseMode, CollapseSchedule};
use crate::ontology::EquilibriumSampling;
use crate::readout::Region;
use crate::rng::{stream, unit};
use crate::theories::{RunOptions, TheoryId};

fn model(particles: usize, points: usize, hamiltonian: HamiltonianSpec, lambda: f64, sigma: f64) -> ModelSpec {
    ModelSpec { particles, dims: 1, points, spacing: 1.0, masses: None, hamiltonian, lambda, sigma }
}

fn base(name: &str, theories: &[TheoryId], plan: TestPlan) -> ScenarioConfig {
    ScenarioConfig {
        name: name.into(),
        seed: 42,
        ensemble: None,
        theories: theories.to_vec(),
        model: None,
        init: None,
        options: RunOptions::default(),
        readout: None,
        plan,
    }
}

fn packet(centers: &[f64], widths: &[f64], momenta: &[f64]) -> StateSpec {
    StateSpec::Packet { centers: centers.to_vec(), widths: widths.to_vec(), momenta: momenta.to_vec() }
}

fn cat_model(hamiltonian: HamiltonianSpec, lambda: f64) -> (ModelSpec, StateSpec) {
    (model(2, 32, hamiltonian, lambda, 1.0), StateSpec::Cat { separation: 16.0, width: 0.6 })
}

fn cat_readout(window: f64) -> ReadoutSpec {
    ReadoutSpec {
        labels: vec!["alive".into(), "dead".into()],
        regions: vec![Region { lo: vec![2.0], hi: vec![14.0] }, Region { lo: vec![18.0], hi: vec![30.0] }],
        window,
    }
}

fn two_packet_mixture() -> StateSpec {
    StateSpec::Mixture {
        weights: vec![0.5, 0.5],
        packets: vec![
            PacketSpec { centers: vec![2.0, 5.0], widths: vec![1.5, 1.5], momenta: vec![0.3, -0.2] },
            PacketSpec { centers: vec![5.5, 2.5], widths: vec![1.5, 1.5], momenta: vec![-0.1, 0.25] },
        ],
    }
}

/// Named scenarios shipped with the tool.
pub fn builtin_scenarios() -> Vec<ScenarioConfig> {
    let mut out = Vec::new();

    let mut s = base("flash-rate", &[TheoryId::Grwf], TestPlan::FlashRate { t_final: 100.0, bounds: [99.0, 101.0] });
    s.model = Some(model(2, 8, HamiltonianSpec::zero(), 0.5, 1.0));
    s.init = Some(packet(&[2.0, 5.0], &[1.0, 1.0], &[]));
    out.push(s);

    out.push(base("rate-arithmetic", &[], TestPlan::RateArithmetic { n: 1e23, lambda: 1e-15, expected: 1e8 }));

    let mut s = base("ensemble-master", &[], TestPlan::EnsembleMaster { t: 5.0, max_gap: 0.05 });
    s.model = Some(model(2, 8, HamiltonianSpec::free(), 0.2, 1.0));
    s.init = Some(packet(&[2.0, 5.0], &[1.2, 1.2], &[0.3, -0.2]));
    out.push(s);

    let mut s = base("diagonal-invariance", &[], TestPlan::DiagonalInvariance { times: vec![0.5, 1.0, 2.0, 5.0, 10.0], tol: 1e-8 });
    s.model = Some(model(2, 8, HamiltonianSpec::zero(), 0.5, 1.0));
    s.init = Some(StateSpec::Random { seed: 5 });
    out.push(s);

    let mut rng = stream(3, 0);
    let points: Vec<Vec<f64>> = (0..20).map(|_| vec![unit(&mut rng) * 8.0, unit(&mut rng) * 8.0]).collect();
    let mut s = base("mbm-continuity", &[], TestPlan::MbmContinuity { t: 0.5, dt: 1e-3, points, tol: 1e-4 });
    s.model = Some(model(2, 8, HamiltonianSpec::free(), 0.1, 2.0));
    s.init = Some(two_packet_mixture());
    out.push(s);

    let interp = RunOptions { sampling: EquilibriumSampling::Interpolant, ..RunOptions::default() };
    let mut s = base("bm-equivariance", &[TheoryId::Bm], TestPlan::Equivariance { times: vec![1.0, 5.0] });
    s.model = Some(model(1, 32, HamiltonianSpec::free(), 0.1, 1.0));
    s.init = Some(packet(&[10.0], &[2.0], &[0.7]));
    s.options = interp.clone();
    out.push(s);

    let mut s = base("mbm-equivariance", &[TheoryId::Mbm], TestPlan::Equivariance { times: vec![1.0, 5.0] });
    s.model = Some(model(1, 16, HamiltonianSpec::free(), 0.2, 1.0));
    s.init = Some(StateSpec::Mixture {
        weights: vec![0.6, 0.4],
        packets: vec![
            PacketSpec { centers: vec![4.0], widths: vec![1.5], momenta: vec![0.5] },
            PacketSpec { centers: vec![11.0], widths: vec![1.5], momenta: vec![-0.3] },
        ],
    });
    s.options = interp;
    out.push(s);

    let forced = RunOptions { schedule: CollapseSchedule::Forced(vec![0.5]), ..RunOptions::default() };
    for (name, id, expect) in [
        ("grwp3-conditional", TheoryId::Grwp3, Expectation::Consistent),
        ("grwp2-conditional-control", TheoryId::Grwp2, Expectation::Inconsistent),
    ] {
        let mut s = base(name, &[id], TestPlan::Conditional { t: 1.0, min_bin: 200, expect });
        s.model = Some(model(1, 16, HamiltonianSpec::zero(), 1.0, 1.5));
        s.init = Some(packet(&[8.0], &[3.0], &[]));
        s.options = forced.clone();
        out.push(s);
    }

    let times: Vec<f64> = (0..=20).map(|k| k as f64 * 0.25).collect();
    let mut s = base("grwp4-coincidence", &[TheoryId::Grwp4], TestPlan::Coincidence { times, tol: 1e-12 });
    s.model = Some(model(2, 16, HamiltonianSpec::free(), 0.5, 1.0));
    s.init = Some(StateSpec::SymmetricPair { a: 3.0, b: 8.0, width: 1.0 });
    s.options = RunOptions { mode: CollapseMode::LabelSymmetric, ..RunOptions::default() };
    out.push(s);

    let mut s = base("grwp6-equivariance", &[TheoryId::Grwp6], TestPlan::ConfigurationChi2 { t: 5.0 });
    s.model = Some(model(2, 4, HamiltonianSpec { kinetic: false, potential: PotentialSpec::PairCos { strength: 0.3 } }, 0.2, 1.0));
    s.init = Some(StateSpec::Random { seed: 8 });
    out.push(s);

    let mut s = base("cat-classification", &[TheoryId::Grwf, TheoryId::Grwm, TheoryId::Mm], TestPlan::CatClassification { t: 2.0, tol: 1e-10 });
    let (m, i) = cat_model(HamiltonianSpec::zero(), 5.0);
    s.model = Some(m);
    s.init = Some(i);
    s.readout = Some(cat_readout(2.0));
    out.push(s);

    let mut s = base("witness-grwp1", &[TheoryId::Grwp1, TheoryId::Grwf], TestPlan::Equivalence { times: vec![1.0, 2.0], expect: Expectation::Inconsistent });
    let (m, i) = cat_model(HamiltonianSpec::free(), 5.0);
    s.model = Some(m);
    s.init = Some(i);
    s.readout = Some(cat_readout(1.0));
    out.push(s);

    let mut s = base("witness-grwp5", &[TheoryId::Grwp5, TheoryId::Grwf], TestPlan::Equivalence { times: vec![0.2], expect: Expectation::Inconsistent });
    let (m, i) = cat_model(HamiltonianSpec::zero(), 5.0);
    s.model = Some(m);
    s.init = Some(i);
    s.readout = Some(cat_readout(1.0));
    out.push(s);

    let mut s = base("equivalence-grwm-grwf", &[TheoryId::Grwm, TheoryId::Grwf], TestPlan::Equivalence { times: vec![1.0, 2.0], expect: Expectation::Consistent });
    let (m, i) = cat_model(HamiltonianSpec::zero(), 5.0);
    s.model = Some(m);
    s.init = Some(i);
    s.readout = Some(cat_readout(1.0));
    out.push(s);

    let mut s = base("equivalence-mbm-grwm", &[TheoryId::Mbm, TheoryId::Grwm], TestPlan::Equivalence { times: vec![2.0, 4.0], expect: Expectation::Consistent });
    s.model = Some(model(1, 16, HamiltonianSpec::zero(), 5.0, 1.0));
    s.init = Some(StateSpec::Cat { separation: 8.0, width: 0.6 });
    s.readout = Some(ReadoutSpec {
        labels: vec!["alive".into(), "dead".into()],
        regions: vec![Region { lo: vec![1.0], hi: vec![7.0] }, Region { lo: vec![9.0], hi: vec![15.0] }],
        window: 1.0,
    });
    out.push(s);

    let mut s = base("povm-exactness", &[], TestPlan::PovmExactness { draws: 1_000_000 });
    s.seed = 2;
    out.push(s);
    out.push(base("no-signaling", &[], TestPlan::NoSignaling { steps: 3, dt: 0.2, field: 6.0, interaction: 8.0 }));
    out
}

pub fn builtin(name: &str) -> Result<ScenarioConfig> {
    builtin_scenarios()
        .into_iter()
        .find(|s| s.name == name)
        .ok_or_else(|| Error::Config(format!("unknown scenario {name:?}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtins_validate_and_round_trip() {
        let all = builtin_scenarios();
        let mut names: Vec<&str> = all.iter().map(|s| s.name.as_str()).collect();
        names.sort();
        names.dedup();
        assert_eq!(names.len(), all.len());
        for s in &all {
            s.validate().unwrap();
            assert_eq!(&ScenarioConfig::from_json(&s.to_json()).unwrap(), s, "{}", s.name);
            if s.model.is_some() {
                s.build_model().unwrap_or_else(|e| panic!("{}: {e}", s.name));
            }
        }
        assert!(builtin("nope").is_err());
    }
}
