use std::time::{Duration, Instant};

use super::builtins::builtin;
use super::protocols::{run_scenario, ScenarioOutput};
use super::report::TestReport;
use super::scenario::ScenarioConfig;
use crate::error::Result;

/// One acceptance criterion and the scenarios that decide it.
#[derive(Debug, Clone)]
pub struct Criterion {
    pub id: u8,
    pub title: &'static str,
    pub scenarios: Vec<&'static str>,
    pub budget: Option<Duration>,
}

pub fn criteria() -> Vec<Criterion> {
    let c = |id, title, scenarios: &[&'static str], secs: Option<u64>| Criterion {
        id,
        title,
        scenarios: scenarios.to_vec(),
        budget: secs.map(Duration::from_secs),
    };
    vec![
        c(1, "flash rate N lambda", &["flash-rate"], Some(30)),
        c(2, "rate arithmetic", &["rate-arithmetic"], None),
        c(3, "ensemble vs master equation", &["ensemble-master"], Some(300)),
        c(4, "diagonal invariance for H = 0", &["diagonal-invariance"], None),
        c(5, "MBM continuity residual", &["mbm-continuity"], None),
        c(6, "BM and MBM equivariance", &["bm-equivariance", "mbm-equivariance"], None),
        c(7, "GRWp3 conditional law, GRWp2 control", &["grwp3-conditional", "grwp2-conditional-control"], None),
        c(8, "GRWp4 coincidence", &["grwp4-coincidence"], None),
        c(9, "GRWp6 equivariance", &["grwp6-equivariance"], None),
        c(10, "cat classifications", &["cat-classification"], None),
        c(11, "inequivalence witnesses", &["witness-grwp1", "witness-grwp5"], None),
        c(12, "POVM exactness", &["povm-exactness"], Some(120)),
        c(13, "no signaling", &["no-signaling"], None),
    ]
}

#[derive(Debug, Clone)]
pub struct CriterionResult {
    pub id: u8,
    pub title: String,
    pub passed: bool,
    pub reports: Vec<TestReport>,
    pub elapsed: Duration,
    pub detail: String,
}

impl CriterionResult {
    pub fn line(&self) -> String {
        format!(
            "[{}] criterion {:>2}: {} ({:.1}s) {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.title,
            self.elapsed.as_secs_f64(),
            self.detail
        )
    }
}

fn serialize(out: &ScenarioOutput) -> String {
    let mut s = out.report.to_json();
    for r in &out.raw {
        s.push_str(&r.to_csv());
    }
    s
}

fn configs(c: &Criterion, seed: Option<u64>) -> Result<Vec<ScenarioConfig>> {
    c.scenarios
        .iter()
        .map(|n| {
            let mut s = builtin(n)?;
            if let Some(seed) = seed {
                s.seed = seed;
            }
            Ok(s)
        })
        .collect()
}

/// Runs criteria 1-13, then reruns every scenario and requires byte-identical
/// reports and raw tables for criterion 14. `on_result` sees each result as
/// it completes.
pub fn run_acceptance(seed: Option<u64>, mut on_result: impl FnMut(&CriterionResult)) -> Result<Vec<CriterionResult>> {
    let mut results = Vec::new();
    let mut first: Vec<(ScenarioConfig, String)> = Vec::new();
    for c in criteria() {
        let start = Instant::now();
        let mut reports = Vec::new();
        let mut problems = Vec::new();
        for cfg in configs(&c, seed)? {
            match run_scenario(&cfg) {
                Ok(out) => {
                    if !out.report.passed() {
                        problems.push(out.report.summary());
                    }
                    first.push((cfg, serialize(&out)));
                    reports.push(out.report);
                }
                Err(e) => problems.push(format!("{}: error: {e}", cfg.name)),
            }
        }
        let elapsed = start.elapsed();
        if let Some(b) = c.budget {
            if elapsed > b {
                problems.push(format!("runtime {:.1}s exceeds {}s", elapsed.as_secs_f64(), b.as_secs()));
            }
        }
        let detail = if problems.is_empty() {
            reports.iter().flat_map(|r| r.checks.iter().map(|k| format!("{}={:.4e}", k.name, k.value))).collect::<Vec<_>>().join(" ")
        } else {
            problems.join("; ")
        };
        let r = CriterionResult { id: c.id, title: c.title.into(), passed: problems.is_empty(), reports, elapsed, detail };
        on_result(&r);
        results.push(r);
    }
    let start = Instant::now();
    let mut mismatched = Vec::new();
    for (cfg, bytes) in &first {
        match run_scenario(cfg) {
            Ok(out) if serialize(&out) == *bytes => {}
            Ok(_) => mismatched.push(cfg.name.clone()),
            Err(e) => mismatched.push(format!("{}: {e}", cfg.name)),
        }
    }
    let r = CriterionResult {
        id: 14,
        title: "determinism".into(),
        passed: mismatched.is_empty() && !first.is_empty(),
        reports: Vec::new(),
        elapsed: start.elapsed(),
        detail: if mismatched.is_empty() { format!("{} scenarios reproduced byte for byte", first.len()) } else { format!("differs: {}", mismatched.join(", ")) },
    };
    on_result(&r);
    results.push(r);
    Ok(results)
}
