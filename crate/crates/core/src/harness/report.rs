use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::Result;

/// Share of flagged integration steps above which a scenario is not trusted.
pub const MAX_FLAGGED_FRACTION: f64 = 0.01;

/// What a check requires of its value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "bound", rename_all = "snake_case")]
pub enum Requirement {
    /// p-value strictly above the bound.
    PAbove(f64),
    /// p-value strictly below the bound.
    PBelow(f64),
    AtMost(f64),
    AtLeast(f64),
    Within(f64, f64),
}

impl Requirement {
    pub fn holds(&self, value: f64) -> bool {
        match *self {
            Requirement::PAbove(b) => value > b,
            Requirement::PBelow(b) => value < b,
            Requirement::AtMost(b) => value <= b,
            Requirement::AtLeast(b) => value >= b,
            Requirement::Within(lo, hi) => (lo..=hi).contains(&value),
        }
    }
}

/// One named quantity compared against its requirement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    /// The compared value: a p-value for `PAbove`/`PBelow`, else the quantity itself.
    pub value: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub statistic: Option<f64>,
    pub requirement: Requirement,
    pub passed: bool,
}

impl Check {
    pub fn new(name: impl Into<String>, value: f64, requirement: Requirement) -> Self {
        Check { name: name.into(), value, statistic: None, passed: requirement.holds(value), requirement }
    }

    pub fn with_statistic(mut self, s: f64) -> Self {
        self.statistic = Some(s);
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pass,
    Fail,
    /// Too many guidance steps hit the node clamp for the numbers to count.
    Flagged,
    /// A diagnostic could not be formed, e.g. no bin had enough members.
    Inconclusive,
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Status::Pass => "pass",
            Status::Fail => "fail",
            Status::Flagged => "flagged",
            Status::Inconclusive => "inconclusive",
        })
    }
}

/// Result of one scenario. Contains nothing that varies between reruns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub scenario: String,
    pub protocol: String,
    pub seed: u64,
    pub ensemble: usize,
    pub checks: Vec<Check>,
    pub status: Status,
    /// Runs whose readout produced no outcome.
    pub no_outcome: usize,
    pub flagged_steps: u64,
    pub total_steps: u64,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub notes: Vec<String>,
}

impl TestReport {
    pub fn new(scenario: &str, protocol: &str, seed: u64, ensemble: usize) -> Self {
        TestReport {
            scenario: scenario.into(),
            protocol: protocol.into(),
            seed,
            ensemble,
            checks: Vec::new(),
            status: Status::Pass,
            no_outcome: 0,
            flagged_steps: 0,
            total_steps: 0,
            notes: Vec::new(),
        }
    }

    pub fn check(&mut self, c: Check) -> &mut Self {
        self.checks.push(c);
        self
    }

    pub fn note(&mut self, s: impl Into<String>) -> &mut Self {
        self.notes.push(s.into());
        self
    }

    pub fn flagged_fraction(&self) -> f64 {
        if self.total_steps == 0 {
            0.0
        } else {
            self.flagged_steps as f64 / self.total_steps as f64
        }
    }

    /// Sets `status` from the checks and the flag count.
    pub fn finish(mut self) -> Self {
        self.status = if self.flagged_fraction() > MAX_FLAGGED_FRACTION {
            Status::Flagged
        } else if self.checks.is_empty() {
            Status::Inconclusive
        } else if self.checks.iter().all(|c| c.passed) {
            Status::Pass
        } else {
            Status::Fail
        };
        self
    }

    pub fn passed(&self) -> bool {
        self.status == Status::Pass
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// `check,value,statistic,requirement,bound,passed` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("check,value,statistic,requirement,bound,passed\n");
        for c in &self.checks {
            let (kind, bound) = match c.requirement {
                Requirement::PAbove(b) => ("p_above", b.to_string()),
                Requirement::PBelow(b) => ("p_below", b.to_string()),
                Requirement::AtMost(b) => ("at_most", b.to_string()),
                Requirement::AtLeast(b) => ("at_least", b.to_string()),
                Requirement::Within(lo, hi) => ("within", format!("{lo}:{hi}")),
            };
            let stat = c.statistic.map(|s| s.to_string()).unwrap_or_default();
            out.push_str(&format!("{},{},{},{},{},{}\n", c.name, c.value, stat, kind, bound, c.passed));
        }
        out
    }

    pub fn summary(&self) -> String {
        let failed: Vec<&str> = self.checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
        let mut s = format!("{} [{}]: {}", self.scenario, self.protocol, self.status);
        if !failed.is_empty() {
            s.push_str(&format!(" (failed: {})", failed.join(", ")));
        }
        if self.no_outcome > 0 {
            s.push_str(&format!(", {} runs without outcome", self.no_outcome));
        }
        if self.flagged_steps > 0 {
            s.push_str(&format!(", {}/{} steps flagged", self.flagged_steps, self.total_steps));
        }
        s
    }
}

/// Raw per-run data written next to a report.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RawTable {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl RawTable {
    pub fn new(name: &str, header: &[&str]) -> Self {
        RawTable { name: name.into(), header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.header.join(",");
        out.push('\n');
        for r in &self.rows {
            out.push_str(&r.join(","));
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    /// SHA-256 of the canonical scenario JSON.
    pub config_hash: String,
    pub scenarios: Vec<String>,
    pub seeds: Vec<u64>,
    pub files: Vec<String>,
}

pub fn config_hash(canonical_json: &str) -> String {
    let digest = Sha256::digest(canonical_json.as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    #[default]
    Json,
    Csv,
}

/// Writes reports, raw tables and a manifest under `dir`.
pub fn write_run_dir(
    dir: &Path,
    config_json: &str,
    reports: &[(TestReport, Vec<RawTable>)],
    format: ReportFormat,
) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let mut files = Vec::new();
    for (report, raws) in reports {
        let stem = report.scenario.replace(|c: char| !c.is_ascii_alphanumeric() && c != '-' && c != '_', "_");
        let name = match format {
            ReportFormat::Json => format!("{stem}.report.json"),
            ReportFormat::Csv => format!("{stem}.report.csv"),
        };
        let body = match format {
            ReportFormat::Json => report.to_json(),
            ReportFormat::Csv => report.to_csv(),
        };
        fs::write(dir.join(&name), body)?;
        files.push(name);
        for raw in raws {
            let name = format!("{stem}.{}.csv", raw.name);
            fs::write(dir.join(&name), raw.to_csv())?;
            files.push(name);
        }
    }
    let manifest = Manifest {
        tool: "primo".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        config_hash: config_hash(config_json),
        scenarios: reports.iter().map(|(r, _)| r.scenario.clone()).collect(),
        seeds: reports.iter().map(|(r, _)| r.seed).collect(),
        files,
    };
    fs::write(dir.join("config.json"), config_json)?;
    let path = dir.join("manifest.json");
    fs::write(&path, serde_json::to_string_pretty(&manifest)?)?;
    Ok(path)
}
