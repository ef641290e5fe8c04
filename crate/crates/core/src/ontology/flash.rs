use serde::{Deserialize, Serialize};

use crate::evolution::log::{EventLog, LogHeader, LoggedEvent, LOG_FORMAT, LOG_VERSION};
use crate::evolution::TrajectoryRecord;
use crate::hilbert::{GridSpec, GrwParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Flash {
    pub t: f64,
    pub x: Vec<f64>,
    /// 0-based particle label.
    pub i: usize,
}

/// Space-time points of a collapse history, in time order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FlashSet {
    pub flashes: Vec<Flash>,
}

impl FlashSet {
    pub fn len(&self) -> usize {
        self.flashes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.flashes.is_empty()
    }

    /// Flashes with `t1 <= t <= t2`.
    pub fn in_window(&self, t1: f64, t2: f64) -> impl Iterator<Item = &Flash> {
        self.flashes.iter().filter(move |f| f.t >= t1 && f.t <= t2)
    }

    pub fn count_in(&self, t1: f64, t2: f64) -> usize {
        self.in_window(t1, t2).count()
    }

    pub fn to_event_log(&self, grid: &GridSpec, seed: u64, index: u64, params: &GrwParams, t_final: f64) -> EventLog {
        EventLog {
            header: LogHeader {
                format: LOG_FORMAT.into(),
                version: LOG_VERSION,
                seed,
                index,
                n_particles: grid.n_particles(),
                dims: grid.dims(),
                lambda: params.lambda,
                sigma: params.sigma,
                t_final,
            },
            events: self.flashes.iter().map(|f| LoggedEvent { t: f.t, x: f.x.clone(), i: f.i + 1 }).collect(),
            snapshots: Vec::new(),
        }
    }
}

pub fn extract_flashes<S>(record: &TrajectoryRecord<S>) -> FlashSet {
    FlashSet { flashes: record.events.iter().map(|e| Flash { t: e.t, x: e.x.clone(), i: e.i }).collect() }
}
