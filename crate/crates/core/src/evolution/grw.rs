use rand::Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use super::propagator::Propagator;
use crate::error::{Error, Result};
use crate::hilbert::gaussian::{apply_multiplier, collapse_multiplier, symmetric_collapse_weights};
use crate::hilbert::{collapse_weights, CollapseKernel, CollapseTarget, GridSpec, GrwParams, Hamiltonian, StateVector};
use crate::rng::{categorical, stream, StreamRng};

/// One collapse: time, center and (0-based) particle label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollapseEvent {
    pub t: f64,
    /// Center site index on the single-particle lattice.
    pub site: usize,
    /// Center coordinates.
    pub x: Vec<f64>,
    /// Particle label, `0..N`.
    pub i: usize,
}

impl CollapseEvent {
    pub fn new(grid: &GridSpec, t: f64, site: usize, i: usize) -> Self {
        CollapseEvent { t, site, x: grid.site_position(site), i }
    }
}

/// How collapse operators act on configurations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CollapseMode {
    /// `g(q_I - x)` for a uniformly drawn label `I`.
    #[default]
    PerParticle,
    /// `(1/N) sum_i g(q_i - x)`; the drawn label only colors the event.
    LabelSymmetric,
}

/// When collapses happen.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CollapseSchedule {
    /// Poisson process of total rate `N lambda`.
    #[default]
    Poisson,
    /// Collapses at exactly these times, in increasing order.
    Forced(Vec<f64>),
}

/// Event-time and label source shared by every collapse dynamics.
#[derive(Debug, Clone)]
pub struct GrwClock {
    n: usize,
    rate: f64,
    forced: Option<Vec<f64>>,
    next_forced: usize,
}

impl GrwClock {
    pub fn new(n_particles: usize, params: &GrwParams, schedule: &CollapseSchedule) -> Result<Self> {
        let forced = match schedule {
            CollapseSchedule::Poisson => None,
            CollapseSchedule::Forced(ts) => {
                if ts.iter().any(|t| !(t.is_finite() && *t >= 0.0)) || ts.windows(2).any(|w| w[1] <= w[0]) {
                    return Err(Error::bad("forced collapse times must be non-negative and increasing"));
                }
                Some(ts.clone())
            }
        };
        Ok(GrwClock { n: n_particles, rate: params.total_rate(n_particles), forced, next_forced: 0 })
    }

    /// Time and label of the next collapse after `now`, if any.
    pub fn next(&mut self, now: f64, rng: &mut impl Rng) -> Option<(f64, usize)> {
        let t = match &self.forced {
            Some(ts) => {
                let t = *ts.get(self.next_forced)?;
                self.next_forced += 1;
                t
            }
            None => {
                if self.rate <= 0.0 {
                    return None;
                }
                now + Exp::new(self.rate).expect("positive rate").sample(rng)
            }
        };
        let i = rng.random_range(0..self.n);
        Some((t, i))
    }
}

/// Options shared by the collapse samplers.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GrwOptions {
    #[serde(default)]
    pub mode: CollapseMode,
    #[serde(default)]
    pub schedule: CollapseSchedule,
}

/// Draws a center site for a collapse of label `i` from `Z(x)^2 a^d`.
pub fn sample_center(psi: &StateVector, kernel: &CollapseKernel, mode: CollapseMode, i: usize, rng: &mut impl Rng) -> usize {
    let w = match mode {
        CollapseMode::PerParticle => collapse_weights(psi, kernel, i),
        CollapseMode::LabelSymmetric => symmetric_collapse_weights(psi, kernel),
    };
    categorical(rng, &w)
}

/// Collapse of `psi` at `site` for label `i` under `mode`.
pub fn apply_collapse(psi: &StateVector, kernel: &CollapseKernel, mode: CollapseMode, i: usize, site: usize) -> Result<StateVector> {
    let target = match mode {
        CollapseMode::PerParticle => CollapseTarget::Particle(i),
        CollapseMode::LabelSymmetric => CollapseTarget::Symmetric,
    };
    apply_multiplier(psi, &collapse_multiplier(psi.grid(), kernel, target, site), site)
}

/// One realization of a collapse process.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord<S = StateVector> {
    pub seed: u64,
    pub index: u64,
    pub params: GrwParams,
    pub t_final: f64,
    pub events: Vec<CollapseEvent>,
    /// `(t, state)` in increasing time; right-continuous at event times.
    pub snapshots: Vec<(f64, S)>,
}

impl<S> TrajectoryRecord<S> {
    pub fn snapshot(&self, t: f64) -> Result<&S> {
        self.snapshots
            .iter()
            .find(|(s, _)| (s - t).abs() <= 1e-12 * t.abs().max(1.0))
            .map(|(_, s)| s)
            .ok_or(Error::MissingSnapshot(t))
    }

    pub fn final_state(&self) -> Option<&S> {
        self.snapshots.last().map(|(_, s)| s)
    }
}

pub(crate) fn check_times(t_final: f64, snapshot_times: &[f64]) -> Result<Vec<f64>> {
    if !(t_final.is_finite() && t_final >= 0.0) {
        return Err(Error::bad(format!("t_final must be non-negative, got {t_final}")));
    }
    let mut ts = snapshot_times.to_vec();
    if ts.iter().any(|t| !(t.is_finite() && *t >= 0.0 && *t <= t_final)) {
        return Err(Error::bad("snapshot times must lie in [0, t_final]"));
    }
    ts.sort_by(f64::total_cmp);
    ts.dedup();
    Ok(ts)
}

/// Piecewise evolution driver: unitary segments punctuated by collapses,
/// emitting right-continuous snapshots.
pub(crate) struct Segmenter<'a, S> {
    pub snaps: &'a [f64],
    pub next_snap: usize,
    pub out: Vec<(f64, S)>,
}

impl<'a, S: Clone> Segmenter<'a, S> {
    pub fn new(snaps: &'a [f64]) -> Self {
        Segmenter { snaps, next_snap: 0, out: Vec::with_capacity(snaps.len()) }
    }

    /// Records every snapshot strictly before `until` (or at it, if `inclusive`),
    /// evolving `state` forward from `now` with `evolve`.
    pub fn drain(
        &mut self,
        now: &mut f64,
        state: &mut S,
        until: f64,
        inclusive: bool,
        mut evolve: impl FnMut(&S, f64) -> S,
    ) {
        while let Some(&s) = self.snaps.get(self.next_snap) {
            if s > until || (!inclusive && s == until) {
                break;
            }
            *state = evolve(state, s - *now);
            *now = s;
            self.out.push((s, state.clone()));
            self.next_snap += 1;
        }
    }
}

/// Samples one GRW trajectory on stream `(seed, index)`.
pub fn sample_grw_trajectory(
    psi0: &StateVector,
    h: &Hamiltonian,
    params: &GrwParams,
    t_final: f64,
    snapshot_times: &[f64],
    seed: u64,
    index: u64,
    opts: &GrwOptions,
) -> Result<TrajectoryRecord> {
    let prop = Propagator::new(h);
    let kernel = CollapseKernel::new(psi0.grid(), params.sigma)?;
    let mut rng = stream(seed, index);
    sample_grw_with(psi0, &prop, &kernel, params, t_final, snapshot_times, seed, index, opts, &mut rng)
}

/// As [`sample_grw_trajectory`] with a prepared propagator, kernel and stream.
#[allow(clippy::too_many_arguments)]
pub fn sample_grw_with(
    psi0: &StateVector,
    prop: &Propagator,
    kernel: &CollapseKernel,
    params: &GrwParams,
    t_final: f64,
    snapshot_times: &[f64],
    seed: u64,
    index: u64,
    opts: &GrwOptions,
    rng: &mut StreamRng,
) -> Result<TrajectoryRecord> {
    let params = params.validated()?;
    let snaps = check_times(t_final, snapshot_times)?;
    let grid = psi0.grid_arc();
    let mut clock = GrwClock::new(grid.n_particles(), &params, &opts.schedule)?;
    let mut seg = Segmenter::new(&snaps);
    let mut events = Vec::new();
    let mut psi = psi0.clone();
    let mut now = 0.0;
    let evolve = |p: &StateVector, dt: f64| prop.evolve(p, dt);
    while let Some((t, i)) = clock.next(now, rng) {
        if t > t_final {
            break;
        }
        seg.drain(&mut now, &mut psi, t, false, evolve);
        psi = evolve(&psi, t - now);
        now = t;
        let site = sample_center(&psi, kernel, opts.mode, i, rng);
        psi = apply_collapse(&psi, kernel, opts.mode, i, site)?;
        events.push(CollapseEvent::new(&grid, t, site, i));
    }
    seg.drain(&mut now, &mut psi, t_final, true, evolve);
    Ok(TrajectoryRecord { seed, index, params, t_final, events, snapshots: seg.out })
}
