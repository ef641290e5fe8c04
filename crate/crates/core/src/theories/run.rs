use std::f64::consts::PI;
use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::id::{PoKind, TheoryId};
use crate::error::{Error, Result};
use crate::evolution::grw::{apply_collapse, check_times, sample_center, sample_grw_with};
use crate::evolution::{
    mgrwf_trajectory, CollapseEvent, CollapseMode, CollapseSchedule, GrwClock, GrwOptions, MasterEquation, Propagator,
    QuantumState,
};
use crate::hilbert::gaussian::collapse_weights_dm;
use crate::hilbert::{CollapseKernel, DensityMatrix, DensityWeight, GridSpec, GrwParams, Hamiltonian, StateVector};
use crate::ontology::velocity::rk4_step;
use crate::ontology::{
    extract_flashes, matter_density, matter_density_from_dm, EquilibriumSampler, EquilibriumSampling, FieldLattice,
    FieldSource, FlashSet, MatterField, MbmField, MixedSource, ParticlePath, PureSource,
};
use crate::rng::{categorical, stream, unit, StreamRng};

/// Initial particle configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialConfig {
    Given(Vec<f64>),
    /// Drawn from the quantum-equilibrium density of the initial state.
    Equilibrium,
}

#[derive(Debug, Clone)]
pub struct InitialData {
    pub psi0: Option<StateVector>,
    pub rho0: Option<DensityMatrix>,
    pub q0: Option<InitialConfig>,
    pub seed: u64,
}

impl InitialData {
    pub fn pure(psi0: StateVector, seed: u64) -> Self {
        InitialData { psi0: Some(psi0), rho0: None, q0: None, seed }
    }

    pub fn mixed(rho0: DensityMatrix, seed: u64) -> Self {
        InitialData { psi0: None, rho0: Some(rho0), q0: None, seed }
    }

    pub fn with_config(mut self, q0: InitialConfig) -> Self {
        self.q0 = Some(q0);
        self
    }

    fn grid(&self) -> Option<Arc<GridSpec>> {
        self.psi0.as_ref().map(StateVector::grid_arc).or_else(|| self.rho0.as_ref().map(DensityMatrix::grid_arc))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunOptions {
    pub mode: CollapseMode,
    pub schedule: CollapseSchedule,
    /// Largest RK4 step for particle motion. MBM precomputes its guiding
    /// field on a lattice of this step, so its sample times must be multiples of it.
    pub step: f64,
    pub sampling: EquilibriumSampling,
    pub weight: DensityWeight,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            mode: CollapseMode::PerParticle,
            schedule: CollapseSchedule::Poisson,
            step: 0.05,
            sampling: EquilibriumSampling::Lattice,
            weight: DensityWeight::Mass,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "data", rename_all = "snake_case")]
pub enum PrimitiveOntology {
    Particles(ParticlePath),
    Matter(Vec<MatterField>),
    Flashes(FlashSet),
}

impl PrimitiveOntology {
    pub fn kind(&self) -> PoKind {
        match self {
            PrimitiveOntology::Particles(_) => PoKind::Particles,
            PrimitiveOntology::Matter(_) => PoKind::Matter,
            PrimitiveOntology::Flashes(_) => PoKind::Flashes,
        }
    }
}

/// Output of one run: the primitive ontology plus provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoHistory {
    pub theory: TheoryId,
    pub seed: u64,
    pub index: u64,
    pub params: GrwParams,
    pub t_final: f64,
    pub times: Vec<f64>,
    pub po: PrimitiveOntology,
    /// Collapse record of the driving state (empty for collapse-free theories).
    pub events: Vec<CollapseEvent>,
    pub initial_config: Option<Vec<f64>>,
    pub config_policy: Option<String>,
}

impl PoHistory {
    pub fn path(&self) -> Option<&ParticlePath> {
        match &self.po {
            PrimitiveOntology::Particles(p) => Some(p),
            _ => None,
        }
    }

    pub fn fields(&self) -> Option<&[MatterField]> {
        match &self.po {
            PrimitiveOntology::Matter(m) => Some(m),
            _ => None,
        }
    }

    pub fn flashes(&self) -> Option<&FlashSet> {
        match &self.po {
            PrimitiveOntology::Flashes(f) => Some(f),
            _ => None,
        }
    }

    pub fn flagged_steps(&self) -> usize {
        self.path().map_or(0, |p| p.flagged_steps)
    }

    pub fn steps(&self) -> usize {
        self.path().map_or(0, |p| p.steps)
    }
}

enum Shared {
    None,
    Fields(Vec<MatterField>),
    Lattice(FieldLattice<MbmField>),
    Master(MasterEquation),
}

/// A validated theory setup, reusable across the runs of an ensemble.
pub struct TheoryContext {
    id: TheoryId,
    grid: Arc<GridSpec>,
    params: GrwParams,
    init: InitialData,
    t_final: f64,
    times: Vec<f64>,
    opts: RunOptions,
    h: Hamiltonian,
    prop: Propagator,
    kernel: CollapseKernel,
    moving: bool,
    shared: Shared,
}

fn bad_init(id: TheoryId, reason: impl Into<String>) -> Error {
    Error::BadInit { theory: id.to_string(), reason: reason.into() }
}

impl TheoryContext {
    pub fn new(
        id: TheoryId,
        h: &Hamiltonian,
        params: &GrwParams,
        init: InitialData,
        t_final: f64,
        sample_times: &[f64],
        opts: &RunOptions,
    ) -> Result<Self> {
        let params = params.clone().validated()?;
        let times = check_times(t_final, sample_times)?;
        if !(opts.step > 0.0 && opts.step.is_finite()) {
            return Err(Error::bad("step must be positive"));
        }
        if id.is_mixed() {
            if init.rho0.is_none() || init.psi0.is_some() {
                return Err(bad_init(id, "needs rho0 and no psi0"));
            }
        } else if init.psi0.is_none() || init.rho0.is_some() {
            return Err(bad_init(id, "needs psi0 and no rho0"));
        }
        if init.q0.is_some() && !id.needs_configuration() {
            return Err(bad_init(id, "takes no initial configuration"));
        }
        let grid = init.grid().expect("state checked above");
        if *grid != *h.grid() {
            return Err(bad_init(id, "state and Hamiltonian live on different grids"));
        }
        if let Some(InitialConfig::Given(q)) = &init.q0 {
            if q.len() != grid.n_axes() || q.iter().any(|x| !x.is_finite()) {
                return Err(bad_init(id, format!("initial configuration needs {} finite coordinates", grid.n_axes())));
            }
        }
        if id.is_mixed() {
            grid.require_mixed()?;
        }
        let kernel = CollapseKernel::new(&grid, params.sigma)?;
        let moving = h.has_kinetic();
        let shared = match id {
            TheoryId::Sm => {
                let psi0 = init.psi0.as_ref().expect("validated");
                let prop = Propagator::new(h);
                Shared::Fields(
                    times
                        .iter()
                        .map(|&t| matter_density(&prop.evolve(psi0, t), t, opts.weight))
                        .collect::<Result<_>>()?,
                )
            }
            TheoryId::Mm => {
                let master = MasterEquation::new(h, &params)?;
                let states = master.trajectory(init.rho0.as_ref().expect("validated"), &times)?;
                Shared::Fields(
                    states
                        .iter()
                        .zip(&times)
                        .map(|(r, &t)| matter_density_from_dm(r, t, opts.weight))
                        .collect::<Result<_>>()?,
                )
            }
            TheoryId::Mbm if moving => {
                let master = MasterEquation::new(h, &params)?;
                let last = times.last().copied().unwrap_or(0.0);
                let t_end = (last / opts.step - 1e-9).ceil().max(0.0) * opts.step;
                let rho0 = init.rho0.clone().expect("validated");
                Shared::Lattice(FieldLattice::build(&mut MixedSource::new(&master, rho0, 0.0), 0.0, t_end, opts.step)?)
            }
            TheoryId::Mf => Shared::Master(MasterEquation::new(h, &params)?),
            _ => Shared::None,
        };
        Ok(TheoryContext {
            id,
            grid,
            params,
            init,
            t_final,
            times,
            opts: opts.clone(),
            h: h.clone(),
            prop: Propagator::new(h),
            kernel,
            moving,
            shared,
        })
    }

    pub fn id(&self) -> TheoryId {
        self.id
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    fn psi0(&self) -> &StateVector {
        self.init.psi0.as_ref().expect("validated")
    }

    fn rho0(&self) -> &DensityMatrix {
        self.init.rho0.as_ref().expect("validated")
    }

    fn grw_options(&self) -> GrwOptions {
        GrwOptions { mode: self.opts.mode, schedule: self.opts.schedule.clone() }
    }

    fn history(&self, index: u64, po: PrimitiveOntology, events: Vec<CollapseEvent>) -> PoHistory {
        PoHistory {
            theory: self.id,
            seed: self.init.seed,
            index,
            params: self.params.clone(),
            t_final: self.t_final,
            times: self.times.clone(),
            po,
            events,
            initial_config: None,
            config_policy: None,
        }
    }

    fn initial_config(&self, state: QuantumState, rng: &mut StreamRng) -> (Vec<f64>, String) {
        match &self.init.q0 {
            Some(InitialConfig::Given(q)) => (q.iter().map(|&x| self.grid.wrap(x)).collect(), "given".into()),
            _ => {
                let q = EquilibriumSampler::new(&state, self.opts.sampling).sample(rng);
                let policy = match self.opts.sampling {
                    EquilibriumSampling::Lattice => "equilibrium-lattice",
                    EquilibriumSampling::Interpolant => "equilibrium-interpolant",
                };
                (q, policy.into())
            }
        }
    }

    /// One run on stream `(seed, index)`.
    pub fn run(&self, index: u64) -> Result<PoHistory> {
        let mut rng = stream(self.init.seed, index);
        use TheoryId::*;
        match self.id {
            Grwm | Grwf | Grwp4 => {
                let rec = sample_grw_with(
                    self.psi0(),
                    &self.prop,
                    &self.kernel,
                    &self.params,
                    self.t_final,
                    &self.times,
                    self.init.seed,
                    index,
                    &self.grw_options(),
                    &mut rng,
                )?;
                let po = match self.id {
                    Grwm => PrimitiveOntology::Matter(
                        rec.snapshots.iter().map(|(t, s)| matter_density(s, *t, self.opts.weight)).collect::<Result<_>>()?,
                    ),
                    Grwf => PrimitiveOntology::Flashes(extract_flashes(&rec)),
                    _ => {
                        let configs: Vec<Vec<f64>> = rec.snapshots.iter().map(|(_, s)| mean_configuration(s)).collect();
                        let n = configs.len();
                        PrimitiveOntology::Particles(ParticlePath {
                            times: self.times.clone(),
                            configs,
                            node_flags: vec![false; n],
                            steps: 0,
                            flagged_steps: 0,
                        })
                    }
                };
                Ok(self.history(index, po, rec.events))
            }
            Sm | Mm => {
                let Shared::Fields(f) = &self.shared else { unreachable!("fields precomputed") };
                Ok(self.history(index, PrimitiveOntology::Matter(f.clone()), vec![]))
            }
            Mgrwf => {
                let rec = mgrwf_trajectory(
                    self.rho0(),
                    &self.h,
                    &self.params,
                    self.t_final,
                    &[],
                    self.init.seed,
                    index,
                    &self.opts.schedule,
                )?;
                Ok(self.history(index, PrimitiveOntology::Flashes(extract_flashes(&rec)), rec.events))
            }
            Mf => self.run_mf(index, &mut rng),
            BellIid => {
                let configs = self
                    .times
                    .iter()
                    .map(|&t| {
                        let psi = self.prop.evolve(self.psi0(), t);
                        EquilibriumSampler::new(&QuantumState::Pure(psi), self.opts.sampling).sample(&mut rng)
                    })
                    .collect();
                let n = self.times.len();
                let path = ParticlePath { times: self.times.clone(), configs, node_flags: vec![false; n], steps: 0, flagged_steps: 0 };
                Ok(self.history(index, PrimitiveOntology::Particles(path), vec![]))
            }
            Bm => {
                let (mut q, policy) = self.initial_config(QuantumState::Pure(self.psi0().clone()), &mut rng);
                let q0 = q.clone();
                let mut src = PureSource::new(&self.prop, self.psi0().clone(), 0.0);
                let mut rec = Recorder::new(&self.times);
                let mut now = 0.0;
                rec.advance(self, &mut src, &mut q, &mut now, self.t_final, true)?;
                Ok(self.particle_history(index, rec, vec![], q0, policy))
            }
            Mbm => {
                let (mut q, policy) = self.initial_config(QuantumState::Mixed(self.rho0().clone()), &mut rng);
                let q0 = q.clone();
                let mut rec = Recorder::new(&self.times);
                let mut now = 0.0;
                let until = self.times.last().copied().unwrap_or(0.0);
                match &self.shared {
                    Shared::Lattice(l) => rec.advance(self, &mut l.source(), &mut q, &mut now, until, true)?,
                    _ => rec.advance(self, &mut Still, &mut q, &mut now, until, true)?,
                }
                Ok(self.particle_history(index, rec, vec![], q0, policy))
            }
            Grwp1 | Grwp2 | Grwp3 | Grwp5 | Grwp5c | Grwp6 => self.run_jumping(index, &mut rng),
        }
    }

    fn particle_history(&self, index: u64, rec: Recorder, events: Vec<CollapseEvent>, q0: Vec<f64>, policy: String) -> PoHistory {
        let mut h = self.history(index, PrimitiveOntology::Particles(rec.path), events);
        h.initial_config = Some(q0);
        h.config_policy = Some(policy);
        h
    }

    fn run_mf(&self, index: u64, rng: &mut StreamRng) -> Result<PoHistory> {
        let Shared::Master(master) = &self.shared else { unreachable!("master prepared") };
        let mut clock = GrwClock::new(self.grid.n_particles(), &self.params, &self.opts.schedule)?;
        let mut rho = self.rho0().clone();
        let mut now = 0.0;
        let mut events = Vec::new();
        while let Some((t, i)) = clock.next(now, rng) {
            if t > self.t_final {
                break;
            }
            rho = master.propagate(&rho, t - now)?;
            now = t;
            let site = categorical(rng, &collapse_weights_dm(&rho, &self.kernel, i));
            events.push(CollapseEvent::new(&self.grid, t, site, i));
        }
        let flashes = extract_flashes(&crate::evolution::TrajectoryRecord::<DensityMatrix> {
            seed: self.init.seed,
            index,
            params: self.params.clone(),
            t_final: self.t_final,
            events: events.clone(),
            snapshots: vec![],
        });
        Ok(self.history(index, PrimitiveOntology::Flashes(flashes), events))
    }

    /// GRW wave function with Bohmian particles and a theory-specific
    /// collapse-center or jump rule.
    fn run_jumping(&self, index: u64, rng: &mut StreamRng) -> Result<PoHistory> {
        let g = &*self.grid;
        let (mut q, policy) = self.initial_config(QuantumState::Pure(self.psi0().clone()), rng);
        let q0 = q.clone();
        let mut src = PureSource::new(&self.prop, self.psi0().clone(), 0.0);
        let mut rec = Recorder::new(&self.times);
        let mut clock = GrwClock::new(g.n_particles(), &self.params, &self.opts.schedule)?;
        let mut events = Vec::new();
        let mut now = 0.0;
        let offsets = matches!(self.id, TheoryId::Grwp3).then(|| self.kernel.offset_probabilities(g));
        while let Some((t, i)) = clock.next(now, rng) {
            if t > self.t_final {
                break;
            }
            rec.advance(self, &mut src, &mut q, &mut now, t, false)?;
            src.at(t)?;
            let psi = src.state().clone();
            let own = g.snap(&q[i * g.dims()..(i + 1) * g.dims()]);
            let site = match self.id {
                TheoryId::Grwp2 => own,
                TheoryId::Grwp3 => shift_site(g, own, categorical(rng, offsets.as_deref().expect("grwp3 offsets"))),
                _ => sample_center(&psi, &self.kernel, self.opts.mode, i, rng),
            };
            let after = apply_collapse(&psi, &self.kernel, self.opts.mode, i, site)?;
            match self.id {
                TheoryId::Grwp5 => set_particle(g, &mut q, i, &g.site_position(site)),
                TheoryId::Grwp5c => {
                    let x = conditional_site_sample(g, &after, &q, i, rng);
                    set_particle(g, &mut q, i, &x);
                }
                TheoryId::Grwp6 => {
                    q = EquilibriumSampler::new(&QuantumState::Pure(after.clone()), self.opts.sampling).sample(rng);
                }
                _ => {}
            }
            src.reset(after);
            events.push(CollapseEvent::new(g, t, site, i));
        }
        rec.advance(self, &mut src, &mut q, &mut now, self.t_final, true)?;
        Ok(self.particle_history(index, rec, events, q0, policy))
    }

    /// `m` runs on indices `0..m`, in index order.
    pub fn run_ensemble(&self, m: usize) -> Result<Vec<PoHistory>> {
        (0..m as u64).into_par_iter().map(|k| self.run(k).map_err(|e| Error::in_run(k as usize, e))).collect()
    }
}

/// Runs theory `id` once on stream `(init.seed, 0)`.
pub fn run_theory(
    id: TheoryId,
    h: &Hamiltonian,
    params: &GrwParams,
    init: InitialData,
    t_final: f64,
    sample_times: &[f64],
    opts: &RunOptions,
) -> Result<PoHistory> {
    TheoryContext::new(id, h, params, init, t_final, sample_times, opts)?.run(0)
}

/// Field source for dynamics without a kinetic term, where every velocity vanishes.
struct Still;

struct ZeroField;

impl crate::ontology::VelocityField for ZeroField {
    fn velocity(&self, q: &[f64]) -> crate::ontology::Velocity {
        crate::ontology::Velocity { v: vec![0.0; q.len()], flagged: false }
    }
}

impl FieldSource for Still {
    type Field = ZeroField;

    fn at(&mut self, _t: f64) -> Result<&ZeroField> {
        Ok(&ZeroField)
    }
}

/// Collects samples of a path integrated piece by piece.
struct Recorder<'a> {
    samples: &'a [f64],
    next: usize,
    pending_flag: bool,
    path: ParticlePath,
}

impl<'a> Recorder<'a> {
    fn new(samples: &'a [f64]) -> Self {
        Recorder {
            samples,
            next: 0,
            pending_flag: false,
            path: ParticlePath { times: vec![], configs: vec![], node_flags: vec![], steps: 0, flagged_steps: 0 },
        }
    }

    /// Integrates from `now` to `until`, recording samples before `until`
    /// (and at it, if `inclusive`).
    fn advance<S: FieldSource>(
        &mut self,
        ctx: &TheoryContext,
        src: &mut S,
        q: &mut Vec<f64>,
        now: &mut f64,
        until: f64,
        inclusive: bool,
    ) -> Result<()> {
        while let Some(&s) = self.samples.get(self.next) {
            if s > until || (!inclusive && s == until) {
                break;
            }
            self.integrate(ctx, src, q, now, s)?;
            self.path.times.push(s);
            self.path.configs.push(q.clone());
            self.path.node_flags.push(std::mem::take(&mut self.pending_flag));
            self.next += 1;
        }
        self.integrate(ctx, src, q, now, until)
    }

    fn integrate<S: FieldSource>(
        &mut self,
        ctx: &TheoryContext,
        src: &mut S,
        q: &mut Vec<f64>,
        now: &mut f64,
        target: f64,
    ) -> Result<()> {
        let span = target - *now;
        if ctx.moving && span > 0.0 {
            let n = (span / ctx.opts.step - 1e-9).ceil().max(1.0) as usize;
            let h = span / n as f64;
            if h <= 1e-12 * now.abs().max(1.0) {
                return Err(Error::StepSizeUnderflow { t: *now });
            }
            for k in 0..n {
                let (next, flagged) = rk4_step(&ctx.grid, src, *now + k as f64 * h, q, h)?;
                *q = next;
                self.path.steps += 1;
                if flagged {
                    self.path.flagged_steps += 1;
                    self.pending_flag = true;
                }
            }
        }
        *now = target.max(*now);
        Ok(())
    }
}

fn set_particle(grid: &GridSpec, q: &mut [f64], i: usize, x: &[f64]) {
    let d = grid.dims();
    for (k, &xk) in x.iter().enumerate() {
        q[i * d + k] = grid.wrap(xk);
    }
}

/// Site `s + z` on the periodic lattice.
fn shift_site(grid: &GridSpec, s: usize, z: usize) -> usize {
    let l = grid.points_per_dim();
    let coords: Vec<usize> = grid.site_coords(s).iter().zip(grid.site_coords(z)).map(|(a, b)| (a + b) % l).collect();
    grid.site_from_coords(&coords)
}

/// Position of particle `i` drawn from `|psi|^2` with the other particles
/// held at their lattice sites, jittered uniformly within the cell.
fn conditional_site_sample(grid: &GridSpec, psi: &StateVector, q: &[f64], i: usize, rng: &mut impl Rng) -> Vec<f64> {
    let d = grid.dims();
    let sites: Vec<usize> = (0..grid.n_particles()).map(|j| grid.snap(&q[j * d..(j + 1) * d])).collect();
    let base = grid.config_index(&sites);
    let w: Vec<f64> =
        (0..grid.sites()).map(|s| psi.amplitudes()[grid.with_site(base, i, s)].norm_sqr()).collect();
    let s = categorical(rng, &w);
    grid.site_position(s).into_iter().map(|x| x + grid.spacing() * (unit(rng) - 0.5)).collect()
}

/// Per-axis circular mean of a site distribution.
pub fn circular_mean(grid: &GridSpec, marginal: &[f64]) -> Vec<f64> {
    let l = grid.points_per_dim() as f64;
    (0..grid.dims())
        .map(|k| {
            let (mut re, mut im) = (0.0, 0.0);
            for (s, p) in marginal.iter().enumerate() {
                let theta = 2.0 * PI * grid.site_coords(s)[k] as f64 / l;
                re += p * theta.cos();
                im += p * theta.sin();
            }
            grid.wrap(im.atan2(re) / (2.0 * PI) * grid.box_len())
        })
        .collect()
}

/// `Q_i = <psi|Q_i|psi>` for every particle, with the circular-mean convention.
pub fn mean_configuration(psi: &StateVector) -> Vec<f64> {
    let g = psi.grid();
    (0..g.n_particles()).flat_map(|i| circular_mean(g, &psi.site_marginal(i))).collect()
}
