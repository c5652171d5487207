//! Time stepping of the fouling model and the performance metrics of a run.
//!
//! Both modes share one engine: transport is solved exactly for the current
//! profile, the wall is advanced by explicit Euler, and throughput and
//! collected mass are accumulated with the trapezoidal rule in time.

use std::f64::consts::FRAC_PI_4;

use crate::error::{ModelError, SimError};
use crate::model::{
    accumulate_rate, cumulative_trapezoid, fill_decay, fill_screened_weight,
    flux_constant_pressure, inlet_pressure_constant_flux, trapezoid_by, validate_shape, Drive,
    FeedSpec, PoreProfile, ScreeningParams, ShapeCheck, ShapeFunction, Species, DEFAULT_NX,
};

pub const DEFAULT_DT: f64 = 1e-3;
pub const DEFAULT_MAX_RADIUS_STEP: f64 = 1e-3;
pub const DEFAULT_FLUX_FRACTION: f64 = 0.1;
pub const DEFAULT_P_INIT_MAX: f64 = 100.0;
pub const DEFAULT_P_RATIO_MAX: f64 = 10.0;
pub const DEFAULT_MAX_STEPS: usize = 100_000;

/// Relative slack below which a volume-limited run counts as complete.
const VOLUME_REL_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    ConstantPressure,
    ConstantFlux,
}

/// When a run stops.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Termination {
    /// Stop at the first step with `u <= fraction * u(0)`.
    FluxFraction(f64),
    /// Advance exactly this many steps.
    FixedSteps(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub mode: Mode,
    pub n_x: usize,
    pub dt: f64,
    /// Largest radius change allowed in one constant-pressure step; `dt` shrinks to honour it.
    pub max_radius_step: f64,
    pub termination: Termination,
    /// Hard cap on steps for flux-terminated runs.
    pub max_steps: usize,
    pub p_init_max: f64,
    pub p_ratio_max: f64,
    pub screening: bool,
    /// Keep radius snapshots at the start, midpoint and end of the run.
    pub record_profiles: bool,
}

impl SimConfig {
    pub fn constant_pressure() -> Self {
        Self {
            mode: Mode::ConstantPressure,
            n_x: DEFAULT_NX,
            dt: DEFAULT_DT,
            max_radius_step: DEFAULT_MAX_RADIUS_STEP,
            termination: Termination::FluxFraction(DEFAULT_FLUX_FRACTION),
            max_steps: DEFAULT_MAX_STEPS,
            p_init_max: DEFAULT_P_INIT_MAX,
            p_ratio_max: DEFAULT_P_RATIO_MAX,
            screening: false,
            record_profiles: false,
        }
    }

    pub fn constant_flux(steps: usize) -> Self {
        Self {
            mode: Mode::ConstantFlux,
            termination: Termination::FixedSteps(steps),
            ..Self::constant_pressure()
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::InvalidConfig(m));
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad(format!("dt must be positive, got {}", self.dt));
        }
        if self.n_x < 1 {
            return bad("n_x must be positive".into());
        }
        if !(self.max_radius_step > 0.0) {
            return bad(format!(
                "max_radius_step must be positive, got {}",
                self.max_radius_step
            ));
        }
        match (self.mode, self.termination) {
            (Mode::ConstantPressure, Termination::FluxFraction(f)) => {
                if !(f > 0.0 && f < 1.0) {
                    return bad(format!("flux fraction must lie in (0, 1), got {f}"));
                }
            }
            (Mode::ConstantFlux, Termination::FixedSteps(_)) => {
                if !(self.p_init_max > 0.0 && self.p_ratio_max >= 1.0) {
                    return bad("pressure caps must be positive with ratio cap >= 1".into());
                }
            }
            (Mode::ConstantPressure, _) => {
                return bad("constant pressure runs terminate on a flux fraction".into())
            }
            (Mode::ConstantFlux, _) => {
                return bad("constant flux runs terminate after a fixed step count".into())
            }
        }
        Ok(())
    }

    pub fn flux_fraction(&self) -> f64 {
        match self.termination {
            Termination::FluxFraction(f) => f,
            Termination::FixedSteps(_) => DEFAULT_FLUX_FRACTION,
        }
    }

    fn require(&self, mode: Mode) -> Result<(), SimError> {
        self.validate()?;
        if self.mode != mode {
            return Err(SimError::InvalidConfig(format!(
                "expected {mode:?} mode, config is {:?}",
                self.mode
            )));
        }
        Ok(())
    }
}

impl Default for SimConfig {
    fn default() -> Self {
        Self::constant_pressure()
    }
}

/// Why a run stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    FluxThreshold,
    StepsCompleted,
    PressureViolation,
    PoreClosed,
    StepCap,
    VolumeProcessed,
}

/// Time series of one filtration run. Species series are indexed `[species][step]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SimRecord {
    pub inlet: Vec<f64>,
    pub t: Vec<f64>,
    pub u: Vec<f64>,
    pub j: Vec<f64>,
    pub p0: Vec<f64>,
    pub c_ins: Vec<Vec<f64>>,
    pub c_acm: Vec<Vec<f64>>,
    pub removal: Vec<Vec<f64>>,
    pub cum_removal: Vec<Vec<f64>>,
    pub initial_profile: PoreProfile,
    pub final_profile: PoreProfile,
    /// `(t, profile)` at the start, midpoint and end when requested.
    pub snapshots: Vec<(f64, PoreProfile)>,
    pub stop: StopReason,
}

impl SimRecord {
    fn start(inlet: Vec<f64>, initial: PoreProfile) -> Self {
        let s = inlet.len();
        Self {
            inlet,
            t: Vec::new(),
            u: Vec::new(),
            j: Vec::new(),
            p0: Vec::new(),
            c_ins: vec![Vec::new(); s],
            c_acm: vec![Vec::new(); s],
            removal: vec![Vec::new(); s],
            cum_removal: vec![Vec::new(); s],
            final_profile: initial.clone(),
            initial_profile: initial,
            snapshots: Vec::new(),
            stop: StopReason::StepsCompleted,
        }
    }

    pub fn species_count(&self) -> usize {
        self.inlet.len()
    }

    /// Number of recorded rows, including the initial one.
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn t_final(&self) -> f64 {
        *self.t.last().unwrap_or(&0.0)
    }

    pub fn throughput(&self) -> f64 {
        *self.j.last().unwrap_or(&0.0)
    }

    pub fn final_c_acm(&self) -> Vec<f64> {
        self.c_acm
            .iter()
            .map(|c| *c.last().unwrap_or(&0.0))
            .collect()
    }

    pub fn initial_removal(&self) -> Vec<f64> {
        self.removal
            .iter()
            .map(|r| r.first().copied().unwrap_or(0.0))
            .collect()
    }

    pub fn final_cum_removal(&self) -> Vec<f64> {
        self.cum_removal
            .iter()
            .map(|r| *r.last().unwrap_or(&0.0))
            .collect()
    }

    /// Collected mass per species at the end of the run.
    pub fn collected_mass(&self) -> Vec<f64> {
        let j = self.throughput();
        self.final_c_acm().iter().map(|c| c * j).collect()
    }
}

/// Transport and fouling state of one pore during a run.
pub(crate) struct Filtration<'a> {
    species: &'a [Species],
    screening: Option<&'a [ScreeningParams]>,
    inlet: Vec<f64>,
    clean: PoreProfile,
    pub(crate) profile: PoreProfile,
    cum: Vec<f64>,
    weighted: Vec<f64>,
    weighted_cum: Vec<f64>,
    conc: Vec<Vec<f64>>,
    rate: Vec<f64>,
}

impl<'a> Filtration<'a> {
    pub(crate) fn new(
        feed: &'a FeedSpec,
        inlet: Vec<f64>,
        clean: PoreProfile,
        profile: PoreProfile,
        screening: bool,
    ) -> Result<Self, SimError> {
        if inlet.len() != feed.len() {
            return Err(SimError::InvalidConfig(format!(
                "{} inlet concentrations for {} species",
                inlet.len(),
                feed.len()
            )));
        }
        if clean.radii().len() != profile.radii().len() {
            return Err(ModelError::GridMismatch {
                expected: clean.radii().len(),
                found: profile.radii().len(),
            }
            .into());
        }
        let screening = if screening {
            Some(feed.screening().ok_or_else(|| {
                SimError::InvalidConfig(
                    "screening enabled but the feed has no screening data".into(),
                )
            })?)
        } else {
            None
        };
        let n = profile.radii().len();
        Ok(Self {
            species: feed.species(),
            screening,
            inlet,
            clean,
            profile,
            cum: vec![0.0; n],
            weighted: vec![0.0; n],
            weighted_cum: vec![0.0; n],
            conc: vec![vec![0.0; n]; feed.len()],
            rate: vec![0.0; n],
        })
    }

    /// Solves transport for the current profile.
    pub(crate) fn transport(&mut self, drive: Drive) -> Result<(), ModelError> {
        let scale = drive.decay_scale()?;
        let h = self.profile.spacing();
        cumulative_trapezoid(self.profile.radii(), h, &mut self.cum);
        for (i, s) in self.species.iter().enumerate() {
            match self.screening.map(|sc| sc[i]).filter(|sc| !sc.is_trivial()) {
                Some(sc) => {
                    fill_screened_weight(&self.profile, &self.clean, &sc, &mut self.weighted);
                    cumulative_trapezoid(&self.weighted, h, &mut self.weighted_cum);
                    fill_decay(&self.weighted_cum, scale, self.inlet[i], &mut self.conc[i]);
                }
                None => {
                    let lambda = self.screening.map_or(s.lambda, |sc| sc[i].lambda_clean);
                    fill_decay(&self.cum, scale * lambda, self.inlet[i], &mut self.conc[i]);
                }
            }
        }
        Ok(())
    }

    /// Marks the outlet as empty when no flow passes.
    pub(crate) fn clear_transport(&mut self) {
        self.conc
            .iter_mut()
            .for_each(|c| c.iter_mut().for_each(|v| *v = 0.0));
    }

    pub(crate) fn outlets(&self) -> Vec<f64> {
        self.conc.iter().map(|c| *c.last().unwrap()).collect()
    }

    /// Computes the wall growth rate and returns its largest magnitude.
    pub(crate) fn update_rate(&mut self) -> f64 {
        accumulate_rate(&self.conc, self.species, &mut self.rate);
        self.rate.iter().fold(0.0f64, |m, r| m.max(r.abs()))
    }

    pub(crate) fn rate(&self) -> &[f64] {
        &self.rate
    }

    pub(crate) fn advance(&mut self, dt: f64) {
        self.profile.advance(&self.rate, dt);
    }
}

/// Accumulates the recorded series.
struct Recorder {
    record: SimRecord,
    mass: Vec<f64>,
    keep_profiles: bool,
    profiles: Vec<(f64, PoreProfile)>,
}

impl Recorder {
    fn new(inlet: Vec<f64>, initial: PoreProfile, keep_profiles: bool) -> Self {
        let s = inlet.len();
        Self {
            record: SimRecord::start(inlet, initial),
            mass: vec![0.0; s],
            keep_profiles,
            profiles: Vec::new(),
        }
    }

    fn push(&mut self, t: f64, u: f64, p0: f64, outlets: &[f64], dt: f64, profile: &PoreProfile) {
        let r = &mut self.record;
        let j = match (r.j.last(), r.u.last()) {
            (Some(&j), Some(&u_prev)) => {
                for (i, m) in self.mass.iter_mut().enumerate() {
                    let c_prev = *r.c_ins[i].last().unwrap();
                    *m += 0.5 * dt * (c_prev * u_prev + outlets[i] * u);
                }
                j + 0.5 * dt * (u_prev + u)
            }
            _ => 0.0,
        };
        r.t.push(t);
        r.u.push(u);
        r.j.push(j);
        r.p0.push(p0);
        for (i, &c) in outlets.iter().enumerate() {
            let acm = if j > 0.0 { self.mass[i] / j } else { c };
            let c0 = r.inlet[i];
            r.c_ins[i].push(c);
            r.c_acm[i].push(acm);
            r.removal[i].push(removal_ratio(c, c0));
            r.cum_removal[i].push(removal_ratio(acm, c0));
        }
        if self.keep_profiles {
            self.profiles.push((t, profile.clone()));
        }
    }

    fn finish(mut self, stop: StopReason, profile: PoreProfile) -> SimRecord {
        self.record.stop = stop;
        self.record.final_profile = profile;
        if self.keep_profiles && !self.profiles.is_empty() {
            let t_mid = 0.5 * self.record.t_final();
            let mid = self
                .profiles
                .iter()
                .min_by(|a, b| (a.0 - t_mid).abs().total_cmp(&(b.0 - t_mid).abs()))
                .cloned()
                .unwrap();
            let first = self.profiles.first().cloned().unwrap();
            let last = self.profiles.last().cloned().unwrap();
            self.record.snapshots = vec![first, mid, last];
        }
        self.record
    }
}

fn removal_ratio(c: f64, c0: f64) -> f64 {
    if c0 > 0.0 {
        1.0 - c / c0
    } else {
        0.0
    }
}

fn initial_profile(shape: &ShapeFunction, cfg: &SimConfig) -> Result<PoreProfile, SimError> {
    if let ShapeCheck::Violation { x, value } = validate_shape(shape, cfg.n_x + 1)? {
        return Err(SimError::InfeasibleShape { x, value });
    }
    Ok(PoreProfile::from_shape(shape, cfg.n_x)?)
}

/// Stop rules of a constant-pressure run beyond the flux fraction.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct PressureLimits {
    /// Reference flux for exhaustion; the run's own initial flux when absent.
    pub clean_flux: Option<f64>,
    /// Volume after which the run stops, with a shortened last step.
    pub volume: Option<f64>,
}

/// Constant-pressure engine shared by single runs and multi-stage passes.
pub(crate) fn pressure_run(
    feed: &FeedSpec,
    inlet: Vec<f64>,
    clean: PoreProfile,
    start: PoreProfile,
    cfg: &SimConfig,
    limits: PressureLimits,
) -> Result<SimRecord, SimError> {
    cfg.require(Mode::ConstantPressure)?;
    let mut f = Filtration::new(feed, inlet.clone(), clean, start.clone(), cfg.screening)?;
    let mut u = flux_constant_pressure(&f.profile)?;
    let threshold = cfg.flux_fraction() * limits.clean_flux.unwrap_or(u);
    f.transport(Drive::ConstantPressure { flux: u })?;
    let mut rec = Recorder::new(inlet, start, cfg.record_profiles);
    rec.push(0.0, u, 1.0, &f.outlets(), 0.0, &f.profile);

    let mut t = 0.0;
    let mut steps = 0usize;
    let stop = loop {
        if u <= threshold {
            break if f.profile.is_closed() {
                StopReason::PoreClosed
            } else {
                StopReason::FluxThreshold
            };
        }
        let mut dt = cfg.dt;
        if let Some(v) = limits.volume {
            let remaining = v - rec.record.throughput();
            if remaining <= v * VOLUME_REL_TOL {
                break StopReason::VolumeProcessed;
            }
            dt = dt.min(remaining / u);
        }
        if steps >= cfg.max_steps {
            break StopReason::StepCap;
        }
        let peak = f.update_rate();
        if peak * dt > cfg.max_radius_step {
            dt = cfg.max_radius_step / peak;
        }
        f.advance(dt);
        t += dt;
        steps += 1;
        if f.profile.is_closed() {
            u = 0.0;
            f.clear_transport();
        } else {
            u = flux_constant_pressure(&f.profile)?;
            f.transport(Drive::ConstantPressure { flux: u })?;
        }
        rec.push(t, u, 1.0, &f.outlets(), dt, &f.profile);
    };
    let profile = f.profile.clone();
    Ok(rec.finish(stop, profile))
}

/// Runs at constant driving pressure until the flux falls to the configured fraction of its start value.
pub fn run_constant_pressure(
    shape: &ShapeFunction,
    feed: &FeedSpec,
    cfg: &SimConfig,
) -> Result<SimRecord, SimError> {
    cfg.require(Mode::ConstantPressure)?;
    let profile = initial_profile(shape, cfg)?;
    pressure_run(
        feed,
        feed.inlet(),
        profile.clone(),
        profile,
        cfg,
        PressureLimits::default(),
    )
}

/// Runs at unit flux for a fixed number of steps, stopping early if the pressure cap is exceeded.
pub fn run_constant_flux(
    shape: &ShapeFunction,
    feed: &FeedSpec,
    cfg: &SimConfig,
) -> Result<SimRecord, SimError> {
    cfg.require(Mode::ConstantFlux)?;
    let Termination::FixedSteps(n_steps) = cfg.termination else {
        unreachable!("validated above")
    };
    let profile = initial_profile(shape, cfg)?;
    let p_start =
        inlet_pressure_constant_flux(&profile).map_err(|_| SimError::InfeasibleStart {
            p0: f64::INFINITY,
            cap: cfg.p_init_max,
        })?;
    if p_start > cfg.p_init_max {
        return Err(SimError::InfeasibleStart {
            p0: p_start,
            cap: cfg.p_init_max,
        });
    }
    let inlet = feed.inlet();
    let mut f = Filtration::new(
        feed,
        inlet.clone(),
        profile.clone(),
        profile.clone(),
        cfg.screening,
    )?;
    f.transport(Drive::ConstantFlux)?;
    let mut rec = Recorder::new(inlet, profile, cfg.record_profiles);
    rec.push(0.0, 1.0, p_start, &f.outlets(), 0.0, &f.profile);

    let p_cap = cfg.p_ratio_max * p_start;
    let mut stop = StopReason::StepsCompleted;
    for n in 1..=n_steps {
        f.update_rate();
        f.advance(cfg.dt);
        let p = if f.profile.is_closed() {
            f64::INFINITY
        } else {
            inlet_pressure_constant_flux(&f.profile)?
        };
        f.transport(Drive::ConstantFlux)?;
        rec.push(n as f64 * cfg.dt, 1.0, p, &f.outlets(), cfg.dt, &f.profile);
        if p > p_cap {
            stop = StopReason::PressureViolation;
            break;
        }
    }
    let profile = f.profile.clone();
    Ok(rec.finish(stop, profile))
}

/// Runs whichever mode the config selects.
pub fn run(shape: &ShapeFunction, feed: &FeedSpec, cfg: &SimConfig) -> Result<SimRecord, SimError> {
    match cfg.mode {
        Mode::ConstantPressure => run_constant_pressure(shape, feed, cfg),
        Mode::ConstantFlux => run_constant_flux(shape, feed, cfg),
    }
}

/// End-of-run performance figures.
#[derive(Debug, Clone, PartialEq)]
pub struct Metrics {
    pub t_final: f64,
    pub throughput: f64,
    pub c_acm: Vec<f64>,
    /// Cumulative removal against the reference concentrations.
    pub cum_removal: Vec<f64>,
    pub purity: Vec<f64>,
    /// Collected mass of the product species.
    pub product_yield: f64,
}

/// Index of the recovered species: the second one, or the only one.
pub fn product_index(species_count: usize) -> usize {
    if species_count >= 2 {
        1
    } else {
        0
    }
}

pub fn compute_metrics(record: &SimRecord, reference: &[f64]) -> Result<Metrics, SimError> {
    if record.is_empty() {
        return Err(SimError::InvalidConfig("record has no steps".into()));
    }
    if reference.len() != record.species_count() {
        return Err(SimError::InvalidConfig(format!(
            "{} reference concentrations for {} species",
            reference.len(),
            record.species_count()
        )));
    }
    let c_acm = record.final_c_acm();
    let purity = purity(&c_acm)?;
    let throughput = record.throughput();
    Ok(Metrics {
        t_final: record.t_final(),
        throughput,
        cum_removal: c_acm
            .iter()
            .zip(reference)
            .map(|(&c, &c0)| removal_ratio(c, c0))
            .collect(),
        product_yield: c_acm[product_index(c_acm.len())] * throughput,
        purity,
        c_acm,
    })
}

/// Mass share of each species.
pub fn purity(concentrations: &[f64]) -> Result<Vec<f64>, SimError> {
    let total: f64 = concentrations.iter().sum();
    if !(total > 0.0) {
        return Err(SimError::UndefinedPurity);
    }
    Ok(concentrations.iter().map(|c| c / total).collect())
}

/// Product purity from the feed fraction and the two cumulative removals.
pub fn purity_from_removal(xi: f64, rbar1: f64, rbar2: f64) -> f64 {
    let passed1 = xi * (1.0 - rbar1);
    let passed2 = (1.0 - xi) * (1.0 - rbar2);
    passed2 / (passed1 + passed2)
}

/// Largest clean-filter removal under constant flux, reached by the fully open pore.
pub fn max_constant_flux_removal(lambda: f64) -> f64 {
    1.0 - (-lambda * FRAC_PI_4).exp()
}

/// Smallest deposition coefficient for which an open pore under constant flux removes `removal`.
pub fn min_lambda_for_removal(removal: f64) -> Result<f64, SimError> {
    if !(0.0..1.0).contains(&removal) {
        return Err(SimError::InvalidConfig(format!(
            "removal must lie in [0, 1), got {removal}"
        )));
    }
    Ok(-(1.0 - removal).ln() / FRAC_PI_4)
}

/// Flux, outlet concentrations and their rates of change on the clean filter.
#[derive(Debug, Clone, PartialEq)]
pub struct InitialRates {
    pub flux: f64,
    pub flux_rate: f64,
    pub outlet: Vec<f64>,
    pub outlet_rate: Vec<f64>,
}

/// Flux and outlet concentrations of the clean filter.
#[derive(Debug, Clone, PartialEq)]
pub struct InitialState {
    pub flux: f64,
    pub outlet: Vec<f64>,
    pub removal: Vec<f64>,
}

/// Clean-filter state without stepping. Constant flux reports unit flux.
pub fn initial_state(
    shape: &ShapeFunction,
    feed: &FeedSpec,
    cfg: &SimConfig,
) -> Result<InitialState, SimError> {
    let profile = initial_profile(shape, cfg)?;
    let drive = match cfg.mode {
        Mode::ConstantPressure => Drive::ConstantPressure {
            flux: flux_constant_pressure(&profile)?,
        },
        Mode::ConstantFlux => Drive::ConstantFlux,
    };
    let inlet = feed.inlet();
    let mut f = Filtration::new(feed, inlet.clone(), profile.clone(), profile, cfg.screening)?;
    f.transport(drive)?;
    let outlet = f.outlets();
    let removal = outlet
        .iter()
        .zip(&inlet)
        .map(|(&c, &c0)| removal_ratio(c, c0))
        .collect();
    Ok(InitialState {
        flux: drive.flux(),
        outlet,
        removal,
    })
}

/// `u'(0)` from differentiating the flux formula under the fouling law; outlet
/// rates from one forward Euler step of size `cfg.dt`.
pub fn initial_rates(
    shape: &ShapeFunction,
    feed: &FeedSpec,
    cfg: &SimConfig,
) -> Result<InitialRates, SimError> {
    cfg.require(Mode::ConstantPressure)?;
    let profile = initial_profile(shape, cfg)?;
    let inlet = feed.inlet();
    let mut f = Filtration::new(feed, inlet, profile.clone(), profile, cfg.screening)?;
    let u = flux_constant_pressure(&f.profile)?;
    f.transport(Drive::ConstantPressure { flux: u })?;
    let outlet = f.outlets();
    f.update_rate();
    // d/dt int a^-4 = -4 int a^-5 da/dt
    let h = f.profile.spacing();
    let weighted: Vec<f64> = f
        .profile
        .radii()
        .iter()
        .zip(f.rate())
        .map(|(&a, &r)| -r / a.powi(5))
        .collect();
    let flux_rate = -4.0 * u * u * trapezoid_by(&weighted, h, |v| v);

    f.advance(cfg.dt);
    let next = if f.profile.is_closed() {
        vec![0.0; outlet.len()]
    } else {
        let u1 = flux_constant_pressure(&f.profile)?;
        f.transport(Drive::ConstantPressure { flux: u1 })?;
        f.outlets()
    };
    let outlet_rate = next
        .iter()
        .zip(&outlet)
        .map(|(c1, c0)| (c1 - c0) / cfg.dt)
        .collect();
    Ok(InitialRates {
        flux: u,
        flux_rate,
        outlet,
        outlet_rate,
    })
}
