//! Line-delimited JSON event logs.
//!
//! The first line is a header object. Each following line is either an
//! event `{"t": 0.5, "x": [3.0], "i": 1}` with a 1-based particle label, or
//! a snapshot `{"snapshot": 1.0, "re": [...], "im": [...]}`.

use serde::{Deserialize, Serialize};

use super::grw::{check_times, apply_collapse, CollapseEvent, CollapseMode, Segmenter, TrajectoryRecord};
use super::propagator::Propagator;
use crate::error::{Error, Result};
use crate::hilbert::{CollapseKernel, GridSpec, GrwParams, Hamiltonian, StateVector, C64};

pub const LOG_FORMAT: &str = "primo-event-log";
pub const LOG_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LogHeader {
    pub format: String,
    pub version: u32,
    pub seed: u64,
    pub index: u64,
    pub n_particles: usize,
    pub dims: usize,
    pub lambda: f64,
    pub sigma: f64,
    pub t_final: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoggedEvent {
    pub t: f64,
    pub x: Vec<f64>,
    /// 1-based particle label.
    pub i: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoggedSnapshot {
    pub snapshot: f64,
    pub re: Vec<f64>,
    pub im: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
enum Line {
    Event(LoggedEvent),
    Snapshot(LoggedSnapshot),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EventLog {
    pub header: LogHeader,
    pub events: Vec<LoggedEvent>,
    pub snapshots: Vec<LoggedSnapshot>,
}

impl EventLog {
    pub fn from_record(record: &TrajectoryRecord, grid: &GridSpec, with_snapshots: bool) -> Self {
        let header = LogHeader {
            format: LOG_FORMAT.into(),
            version: LOG_VERSION,
            seed: record.seed,
            index: record.index,
            n_particles: grid.n_particles(),
            dims: grid.dims(),
            lambda: record.params.lambda,
            sigma: record.params.sigma,
            t_final: record.t_final,
        };
        let events = record.events.iter().map(|e| LoggedEvent { t: e.t, x: e.x.clone(), i: e.i + 1 }).collect();
        let snapshots = if with_snapshots {
            record
                .snapshots
                .iter()
                .map(|(t, s)| LoggedSnapshot {
                    snapshot: *t,
                    re: s.amplitudes().iter().map(|c| c.re).collect(),
                    im: s.amplitudes().iter().map(|c| c.im).collect(),
                })
                .collect()
        } else {
            Vec::new()
        };
        EventLog { header, events, snapshots }
    }

    pub fn to_json_lines(&self) -> String {
        let mut out = serde_json::to_string(&self.header).expect("header serializes");
        out.push('\n');
        for e in &self.events {
            out.push_str(&serde_json::to_string(e).expect("event serializes"));
            out.push('\n');
        }
        for s in &self.snapshots {
            out.push_str(&serde_json::to_string(s).expect("snapshot serializes"));
            out.push('\n');
        }
        out
    }

    /// Events as grid collapse events, checking centers lie on `grid`.
    pub fn collapse_events(&self, grid: &GridSpec) -> Result<Vec<CollapseEvent>> {
        if grid.n_particles() != self.header.n_particles || grid.dims() != self.header.dims {
            return Err(Error::bad("event log does not match the grid"));
        }
        self.events
            .iter()
            .map(|e| {
                let site = grid.snap(&e.x);
                let pos = grid.site_position(site);
                let off = e.x.iter().zip(&pos).map(|(a, b)| grid.min_image(*a, *b).abs()).fold(0.0, f64::max);
                if off > 1e-9 * grid.spacing() {
                    return Err(Error::bad(format!("event center {:?} is not a grid point", e.x)));
                }
                Ok(CollapseEvent { t: e.t, site, x: pos, i: e.i - 1 })
            })
            .collect()
    }
}

fn finite(x: f64, what: &str) -> Result<()> {
    if x.is_finite() {
        Ok(())
    } else {
        Err(Error::Config(format!("{what} must be finite")))
    }
}

/// Parses and validates a log.
pub fn parse_event_log(text: &str) -> Result<EventLog> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, first) = lines.next().ok_or_else(|| Error::Config("empty event log".into()))?;
    let header: LogHeader = serde_json::from_str(first)?;
    if header.format != LOG_FORMAT {
        return Err(Error::Config(format!("unknown log format {:?}", header.format)));
    }
    if header.version != LOG_VERSION {
        return Err(Error::Config(format!("unsupported log version {}", header.version)));
    }
    if header.n_particles == 0 || !(1..=3).contains(&header.dims) {
        return Err(Error::Config("header has an invalid particle count or dimension".into()));
    }
    for (v, name) in [(header.lambda, "lambda"), (header.sigma, "sigma"), (header.t_final, "t_final")] {
        finite(v, name)?;
    }
    GrwParams::new(header.lambda, header.sigma).map_err(|e| Error::Config(e.to_string()))?;
    if header.t_final < 0.0 {
        return Err(Error::Config("t_final must be non-negative".into()));
    }
    let mut events: Vec<LoggedEvent> = Vec::new();
    let mut snapshots: Vec<LoggedSnapshot> = Vec::new();
    for (no, line) in lines {
        let at = |msg: String| Error::Config(format!("line {}: {msg}", no + 1));
        match serde_json::from_str::<Line>(line).map_err(|e| at(e.to_string()))? {
            Line::Event(e) => {
                finite(e.t, "event time").map_err(|err| at(err.to_string()))?;
                if e.t < 0.0 || e.t > header.t_final {
                    return Err(at(format!("event time {} outside [0, t_final]", e.t)));
                }
                if let Some(prev) = events.last() {
                    if e.t < prev.t {
                        return Err(at("event times must not decrease".into()));
                    }
                }
                if e.i == 0 || e.i > header.n_particles {
                    return Err(at(format!("label {} outside 1..={}", e.i, header.n_particles)));
                }
                if e.x.len() != header.dims || e.x.iter().any(|c| !c.is_finite()) {
                    return Err(at("event center has the wrong shape or non-finite coordinates".into()));
                }
                if !snapshots.is_empty() {
                    return Err(at("events must precede snapshots".into()));
                }
                events.push(e);
            }
            Line::Snapshot(s) => {
                finite(s.snapshot, "snapshot time").map_err(|err| at(err.to_string()))?;
                if s.re.len() != s.im.len() || s.re.iter().chain(&s.im).any(|c| !c.is_finite()) {
                    return Err(at("snapshot amplitudes are malformed".into()));
                }
                snapshots.push(s);
            }
        }
    }
    Ok(EventLog { header, events, snapshots })
}

/// Re-runs a recorded collapse sequence without randomness, returning the
/// state at each of `times` (right-continuous at event times).
pub fn replay_events(
    psi0: &StateVector,
    h: &Hamiltonian,
    params: &GrwParams,
    mode: CollapseMode,
    events: &[CollapseEvent],
    t_final: f64,
    times: &[f64],
) -> Result<Vec<(f64, StateVector)>> {
    let snaps = check_times(t_final, times)?;
    let prop = Propagator::new(h);
    let kernel = CollapseKernel::new(psi0.grid(), params.sigma)?;
    let mut seg = Segmenter::new(&snaps);
    let mut psi = psi0.clone();
    let mut now = 0.0;
    let evolve = |p: &StateVector, dt: f64| prop.evolve(p, dt);
    for e in events {
        if e.t < now || e.t > t_final {
            return Err(Error::bad("replayed events must be ordered and within [0, t_final]"));
        }
        seg.drain(&mut now, &mut psi, e.t, false, evolve);
        psi = evolve(&psi, e.t - now);
        now = e.t;
        psi = apply_collapse(&psi, &kernel, mode, e.i, e.site)?;
    }
    seg.drain(&mut now, &mut psi, t_final, true, evolve);
    Ok(seg.out)
}

/// Amplitudes stored in a logged snapshot.
pub fn snapshot_amplitudes(s: &LoggedSnapshot) -> Vec<C64> {
    s.re.iter().zip(&s.im).map(|(r, i)| C64::new(*r, *i)).collect()
}
