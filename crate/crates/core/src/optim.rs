//! Pore-shape optimization: objectives, constraints and multistart simplex search.
//!
//! Candidates are compared feasibility first. A feasible point beats any
//! infeasible one, feasible points compare by objective, and infeasible
//! points compare by how far they sit from the feasible set.

use std::cmp::Ordering;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{OptError, SimError};
use crate::model::FeedSpec;
use crate::model::{shape_violation, ShapeFunction, CLOSURE_FLOOR};
use crate::sim::{
    initial_rates, initial_state, product_index, run_constant_flux, run_constant_pressure, Mode,
    SimConfig, SimRecord, StopReason, Termination,
};

pub const DEFAULT_INITIAL_REMOVAL: f64 = 0.99;
pub const DEFAULT_CUM_REMOVAL: f64 = 0.98;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ProblemKind {
    /// Maximize `w1 * j(t_f) + w2 * c_acm,2(t_f)` at constant pressure.
    WeightedThroughput { w1: f64, w2: f64 },
    /// Maximize the collected product mass at constant pressure.
    Yield,
    /// Maximize the collected product mass at constant flux under pressure and removal limits.
    ConstantFluxYield,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    /// Objective from the full filter lifetime.
    Slow,
    /// Surrogate objective from the clean filter only.
    Fast,
}

/// Extra bound on the clean-filter removal of one species.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RemovalBound {
    /// Zero-based species index.
    pub species: usize,
    pub min: Option<f64>,
    pub max: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProblemSpec {
    pub kind: ProblemKind,
    pub method: Method,
    /// Lower bound on the clean-filter removal of species 1.
    pub initial_removal_min: f64,
    /// Lower bound on the cumulative removal of species 1, constant-flux problem only.
    pub cum_removal_min: f64,
    pub removal_bounds: Vec<RemovalBound>,
    pub sim: SimConfig,
    pub feed: FeedSpec,
}

impl ProblemSpec {
    pub fn weighted_throughput(w1: f64, w2: f64, feed: FeedSpec) -> Self {
        Self::new(
            ProblemKind::WeightedThroughput { w1, w2 },
            feed,
            SimConfig::constant_pressure(),
        )
    }

    pub fn product_yield(feed: FeedSpec) -> Self {
        Self::new(ProblemKind::Yield, feed, SimConfig::constant_pressure())
    }

    pub fn constant_flux_yield(feed: FeedSpec, steps: usize) -> Self {
        Self::new(
            ProblemKind::ConstantFluxYield,
            feed,
            SimConfig::constant_flux(steps),
        )
    }

    fn new(kind: ProblemKind, feed: FeedSpec, sim: SimConfig) -> Self {
        Self {
            kind,
            method: Method::Slow,
            initial_removal_min: DEFAULT_INITIAL_REMOVAL,
            cum_removal_min: DEFAULT_CUM_REMOVAL,
            removal_bounds: Vec::new(),
            sim,
            feed,
        }
    }

    pub fn with_method(mut self, method: Method) -> Self {
        self.method = method;
        self
    }

    pub fn with_initial_removal(mut self, min: f64) -> Self {
        self.initial_removal_min = min;
        self
    }

    pub fn validate(&self) -> Result<(), OptError> {
        self.sim.validate()?;
        let expected = match self.kind {
            ProblemKind::ConstantFluxYield => Mode::ConstantFlux,
            _ => Mode::ConstantPressure,
        };
        if self.sim.mode != expected {
            return Err(OptError::InvalidProblem(format!(
                "{:?} needs {expected:?} simulation",
                self.kind
            )));
        }
        if self.kind == ProblemKind::ConstantFluxYield && self.method == Method::Fast {
            return Err(OptError::UnsupportedMethod);
        }
        for r in [self.initial_removal_min, self.cum_removal_min] {
            if !(0.0..=1.0).contains(&r) {
                return Err(OptError::InvalidProblem(format!(
                    "removal thresholds must lie in [0, 1], got {r}"
                )));
            }
        }
        if let Some(b) = self
            .removal_bounds
            .iter()
            .find(|b| b.species >= self.feed.len())
        {
            return Err(OptError::InvalidProblem(format!(
                "removal bound on species {} but the feed has {}",
                b.species + 1,
                self.feed.len()
            )));
        }
        Ok(())
    }

    /// Total shortfall of the clean-filter removal constraints.
    fn removal_shortfall(&self, removal: &[f64]) -> f64 {
        let mut v = (self.initial_removal_min - removal[0]).max(0.0);
        for b in &self.removal_bounds {
            let r = removal[b.species];
            if let Some(lo) = b.min {
                v += (lo - r).max(0.0);
            }
            if let Some(hi) = b.max {
                v += (r - hi).max(0.0);
            }
        }
        v
    }

    fn check_points(&self) -> usize {
        self.sim.n_x + 1
    }
}

/// Constraint report for one candidate shape.
#[derive(Debug, Clone, PartialEq)]
pub struct Feasibility {
    pub initial_removal: Vec<f64>,
    /// Cumulative removal at the end of the run, when a run took place.
    pub cum_removal: Option<Vec<f64>>,
    /// Whether the constant-flux run finished without breaking the pressure cap.
    pub pressure_ok: bool,
    /// Zero when every constraint holds.
    pub violation: f64,
}

impl Feasibility {
    pub fn is_feasible(&self) -> bool {
        self.violation == 0.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub objective: f64,
    pub feasibility: Feasibility,
}

fn slow_objective(kind: ProblemKind, record: &SimRecord) -> f64 {
    let c_acm = record.final_c_acm();
    let product = c_acm[product_index(c_acm.len())];
    let j = record.throughput();
    match kind {
        ProblemKind::WeightedThroughput { w1, w2 } => w1 * j + w2 * product,
        ProblemKind::Yield | ProblemKind::ConstantFluxYield => product * j,
    }
}

/// Objective and constraints from a full simulation of the shape.
pub fn evaluate_slow(shape: &ShapeFunction, problem: &ProblemSpec) -> Result<Evaluation, OptError> {
    problem.validate()?;
    match problem.kind {
        ProblemKind::ConstantFluxYield => {
            let record = match run_constant_flux(shape, &problem.feed, &problem.sim) {
                Ok(r) => r,
                Err(SimError::InfeasibleStart { p0, cap }) => {
                    let removal = initial_state(shape, &problem.feed, &problem.sim)?.removal;
                    return Ok(Evaluation {
                        objective: f64::NEG_INFINITY,
                        feasibility: Feasibility {
                            violation: problem.removal_shortfall(&removal)
                                + pressure_excess(p0, cap),
                            initial_removal: removal,
                            cum_removal: None,
                            pressure_ok: false,
                        },
                    });
                }
                Err(e) => return Err(e.into()),
            };
            let removal = record.initial_removal();
            let cum = record.final_cum_removal();
            let mut violation =
                problem.removal_shortfall(&removal) + (problem.cum_removal_min - cum[0]).max(0.0);
            let pressure_ok = record.stop != StopReason::PressureViolation;
            if !pressure_ok {
                violation += truncation_penalty(&record, &problem.sim);
            }
            Ok(Evaluation {
                objective: slow_objective(problem.kind, &record),
                feasibility: Feasibility {
                    initial_removal: removal,
                    cum_removal: Some(cum),
                    pressure_ok,
                    violation,
                },
            })
        }
        _ => {
            let record = run_constant_pressure(shape, &problem.feed, &problem.sim)?;
            let removal = record.initial_removal();
            Ok(Evaluation {
                objective: slow_objective(problem.kind, &record),
                feasibility: Feasibility {
                    violation: problem.removal_shortfall(&removal),
                    initial_removal: removal,
                    cum_removal: Some(record.final_cum_removal()),
                    pressure_ok: true,
                },
            })
        }
    }
}

fn pressure_excess(p0: f64, cap: f64) -> f64 {
    if p0.is_finite() {
        (p0 / cap).ln().max(f64::MIN_POSITIVE)
    } else {
        f64::MAX
    }
}

/// Share of the planned steps a pressure-capped run failed to complete.
fn truncation_penalty(record: &SimRecord, sim: &SimConfig) -> f64 {
    let planned = match sim.termination {
        Termination::FixedSteps(n) => n.max(1),
        Termination::FluxFraction(_) => 1,
    };
    let done = record.len().saturating_sub(1);
    (1.0 - done as f64 / planned as f64).max(0.0) + 1.0 / planned as f64
}

/// Surrogate objective from the clean filter only.
pub fn evaluate_fast(shape: &ShapeFunction, problem: &ProblemSpec) -> Result<Evaluation, OptError> {
    problem.validate()?;
    if problem.kind == ProblemKind::ConstantFluxYield {
        return Err(OptError::UnsupportedMethod);
    }
    let rates = initial_rates(shape, &problem.feed, &problem.sim)?;
    let p = product_index(rates.outlet.len());
    let objective = match problem.kind {
        ProblemKind::WeightedThroughput { w1, w2 } => {
            w1 * rates.flux
                + w1 * rates.flux_rate
                + w2 * rates.outlet[p]
                + w2 * rates.outlet_rate[p]
        }
        _ => rates.flux * rates.outlet[p],
    };
    let removal: Vec<f64> = rates
        .outlet
        .iter()
        .zip(problem.feed.inlet())
        .map(|(c, c0)| 1.0 - c / c0)
        .collect();
    Ok(Evaluation {
        objective,
        feasibility: Feasibility {
            violation: problem.removal_shortfall(&removal),
            initial_removal: removal,
            cum_removal: None,
            pressure_ok: true,
        },
    })
}

/// Evaluates with the problem's own method.
pub fn evaluate(shape: &ShapeFunction, problem: &ProblemSpec) -> Result<Evaluation, OptError> {
    match problem.method {
        Method::Slow => evaluate_slow(shape, problem),
        Method::Fast => evaluate_fast(shape, problem),
    }
}

/// Lexicographic candidate score.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Score {
    /// 0 feasible, 1 violates a removal or pressure limit, 2 not a valid shape.
    tier: u8,
    violation: f64,
    objective: f64,
}

impl Score {
    fn feasible(objective: f64) -> Self {
        if objective.is_nan() {
            return Self::infeasible(1, f64::INFINITY);
        }
        Self {
            tier: 0,
            violation: 0.0,
            objective,
        }
    }

    fn infeasible(tier: u8, violation: f64) -> Self {
        Self {
            tier,
            violation,
            objective: f64::NEG_INFINITY,
        }
    }

    pub fn is_feasible(&self) -> bool {
        self.tier == 0
    }

    pub fn objective(&self) -> f64 {
        self.objective
    }

    pub fn violation(&self) -> f64 {
        self.violation
    }

    /// `Greater` means `self` is the better candidate.
    pub fn compare(&self, other: &Self) -> Ordering {
        match other.tier.cmp(&self.tier) {
            Ordering::Equal if self.tier == 0 => self.objective.total_cmp(&other.objective),
            Ordering::Equal => other.violation.total_cmp(&self.violation),
            ord => ord,
        }
    }

    fn beats(&self, other: &Self) -> bool {
        self.compare(other) == Ordering::Greater
    }
}

/// Scores a coefficient vector, skipping the simulation when the clean filter already fails.
fn score(coeffs: &[f64], problem: &ProblemSpec) -> Result<Score, OptError> {
    let shape = ShapeFunction::new(coeffs.to_vec())?;
    let outside = shape_violation(&shape, problem.check_points());
    if outside > 0.0 {
        return Ok(Score::infeasible(2, outside));
    }
    let narrowest = (0..problem.check_points())
        .map(|k| shape.eval(k as f64 / problem.sim.n_x as f64))
        .fold(f64::INFINITY, f64::min);
    if narrowest <= CLOSURE_FLOOR {
        return Ok(Score::infeasible(
            2,
            CLOSURE_FLOOR - narrowest + f64::MIN_POSITIVE,
        ));
    }
    if problem.kind == ProblemKind::ConstantFluxYield {
        let profile = crate::model::PoreProfile::from_shape(&shape, problem.sim.n_x)?;
        let p0 = crate::model::inlet_pressure_constant_flux(&profile)?;
        if p0 > problem.sim.p_init_max {
            return Ok(Score::infeasible(
                1,
                pressure_excess(p0, problem.sim.p_init_max),
            ));
        }
    }
    let state = initial_state(&shape, &problem.feed, &problem.sim)?;
    let shortfall = problem.removal_shortfall(&state.removal);
    if shortfall > 0.0 {
        return Ok(Score::infeasible(1, shortfall));
    }
    let eval = evaluate(&shape, problem)?;
    Ok(if eval.feasibility.is_feasible() {
        Score::feasible(eval.objective)
    } else {
        Score::infeasible(1, eval.feasibility.violation)
    })
}

/// Coarser simulation used to survey the search box before refinement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Fidelity {
    pub n_x: usize,
    pub dt: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchConfig {
    /// Lower bounds per coefficient, `d_0` first.
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// User-supplied first start.
    pub start: Vec<f64>,
    pub n_starts: usize,
    pub seed: u64,
    /// Simplex size below which a local search stops.
    pub step_tol: f64,
    /// Relative objective spread below which a local search stops.
    pub objective_tol: f64,
    pub max_iter: usize,
    /// Initial simplex edge as a fraction of each coefficient range.
    pub initial_step: f64,
    /// Relative objective gap treated as a tie between optima.
    pub tie_tol: f64,
    /// Survey resolution for slow searches; the best optima are refined at full resolution.
    pub survey: Option<Fidelity>,
    /// Number of distinct survey optima refined at full resolution.
    pub refine: usize,
}

impl SearchConfig {
    /// Linear profiles with `d_0` in `[0, 1]` and `d_1` in `[-1, 1]`.
    pub fn linear(n_starts: usize, seed: u64) -> Self {
        Self::polynomial(1, n_starts, seed)
    }

    /// Degree `p` profiles; coefficients above the slope share its bounds.
    pub fn polynomial(degree: usize, n_starts: usize, seed: u64) -> Self {
        let mut lower = vec![0.0];
        let mut upper = vec![1.0];
        lower.extend(std::iter::repeat(-1.0).take(degree));
        upper.extend(std::iter::repeat(1.0).take(degree));
        let mut start = vec![0.5];
        start.extend(std::iter::repeat(0.0).take(degree));
        Self {
            lower,
            upper,
            start,
            n_starts,
            seed,
            step_tol: 1e-5,
            objective_tol: 1e-10,
            max_iter: 400,
            initial_step: 0.05,
            tie_tol: 1e-4,
            survey: None,
            refine: 8,
        }
    }

    pub fn validate(&self) -> Result<(), OptError> {
        let bad = |m: String| Err(OptError::InvalidSearch(m));
        let n = self.lower.len();
        if n == 0 || self.upper.len() != n || self.start.len() != n {
            return bad("bounds and start must have one entry per coefficient".into());
        }
        if self.lower.iter().zip(&self.upper).any(|(l, u)| !(l <= u)) {
            return bad("lower bounds must not exceed upper bounds".into());
        }
        if !self.contains(&self.start) {
            return bad(format!("start {:?} lies outside the bounds", self.start));
        }
        if self.n_starts == 0 {
            return bad("n_starts must be at least 1".into());
        }
        if !(self.initial_step > 0.0 && self.step_tol > 0.0 && self.objective_tol >= 0.0) {
            return bad("tolerances must be positive".into());
        }
        if let Some(f) = self.survey {
            if f.n_x == 0 || !(f.dt > 0.0) {
                return bad("survey fidelity needs positive n_x and dt".into());
            }
        }
        Ok(())
    }

    fn contains(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(v, (l, u))| *l <= *v && *v <= *u)
    }

    fn clamp(&self, x: &mut [f64]) {
        for (v, (l, u)) in x.iter_mut().zip(self.lower.iter().zip(&self.upper)) {
            *v = v.clamp(*l, *u);
        }
    }

    /// Start `index`; 0 is the user start, others are uniform draws from an index-keyed stream.
    pub fn start_point(&self, index: usize) -> Vec<f64> {
        if index == 0 {
            return self.start.clone();
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(index as u64);
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(&l, &u)| if l < u { rng.random_range(l..=u) } else { l })
            .collect()
    }
}

/// Result of one local search.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalOptimum {
    pub start: Vec<f64>,
    pub coefficients: Vec<f64>,
    pub score: Score,
    pub evaluations: usize,
    pub iterations: usize,
}

impl LocalOptimum {
    pub fn is_feasible(&self) -> bool {
        self.score.is_feasible()
    }

    pub fn objective(&self) -> f64 {
        self.score.objective
    }

    pub fn shape(&self) -> ShapeFunction {
        ShapeFunction::new(self.coefficients.clone()).expect("search points are finite")
    }
}

struct Vertex {
    x: Vec<f64>,
    score: Score,
}

/// Bound-constrained Nelder-Mead ascent from `start`.
pub fn local_search(
    start: &[f64],
    problem: &ProblemSpec,
    search: &SearchConfig,
) -> Result<LocalOptimum, OptError> {
    problem.validate()?;
    search.validate()?;
    if start.len() != search.lower.len() || !search.contains(start) {
        return Err(OptError::InvalidSearch(format!(
            "start {start:?} lies outside the bounds"
        )));
    }
    nelder_mead(start, problem, search, search.initial_step)
}

fn nelder_mead(
    start: &[f64],
    problem: &ProblemSpec,
    search: &SearchConfig,
    initial_step: f64,
) -> Result<LocalOptimum, OptError> {
    const REFLECT: f64 = 1.0;
    const EXPAND: f64 = 2.0;
    const CONTRACT: f64 = 0.5;
    const SHRINK: f64 = 0.5;

    let n = start.len();
    let mut evaluations = 0usize;
    let mut eval = |x: &[f64]| {
        evaluations += 1;
        score(x, problem)
    };

    let mut simplex = Vec::with_capacity(n + 1);
    simplex.push(Vertex {
        x: start.to_vec(),
        score: eval(start)?,
    });
    for i in 0..n {
        let mut x = start.to_vec();
        let step = initial_step * (search.upper[i] - search.lower[i]).max(f64::EPSILON);
        x[i] = if x[i] + step <= search.upper[i] {
            x[i] + step
        } else {
            x[i] - step
        };
        search.clamp(&mut x);
        let score = eval(&x)?;
        simplex.push(Vertex { x, score });
    }

    let mut iterations = 0;
    while iterations < search.max_iter {
        // best first; the sort is stable so ties keep the start ahead
        simplex.sort_by(|a, b| b.score.compare(&a.score));
        if converged(&simplex, search) {
            break;
        }
        iterations += 1;

        let worst = &simplex[n];
        let centroid: Vec<f64> = (0..n)
            .map(|k| simplex[..n].iter().map(|v| v.x[k]).sum::<f64>() / n as f64)
            .collect();
        let toward = |coef: f64, from: &[f64]| -> Vec<f64> {
            let mut x: Vec<f64> = centroid
                .iter()
                .zip(from)
                .map(|(c, w)| c + coef * (c - w))
                .collect();
            search.clamp(&mut x);
            x
        };

        let xr = toward(REFLECT, &worst.x);
        let sr = eval(&xr)?;
        if sr.beats(&simplex[0].score) {
            let xe = toward(EXPAND, &worst.x);
            let se = eval(&xe)?;
            simplex[n] = if se.beats(&sr) {
                Vertex { x: xe, score: se }
            } else {
                Vertex { x: xr, score: sr }
            };
            continue;
        }
        if sr.beats(&simplex[n - 1].score) {
            simplex[n] = Vertex { x: xr, score: sr };
            continue;
        }
        let (xc, sc) = if sr.beats(&worst.score) {
            let xc = toward(CONTRACT, &worst.x);
            let sc = eval(&xc)?;
            if sc.compare(&sr) != Ordering::Less {
                (Some(xc), sc)
            } else {
                (None, sc)
            }
        } else {
            let xc = toward(-CONTRACT, &worst.x);
            let sc = eval(&xc)?;
            if sc.beats(&worst.score) {
                (Some(xc), sc)
            } else {
                (None, sc)
            }
        };
        if let Some(x) = xc {
            simplex[n] = Vertex { x, score: sc };
            continue;
        }
        let best = simplex[0].x.clone();
        for v in simplex.iter_mut().skip(1) {
            for (xk, bk) in v.x.iter_mut().zip(&best) {
                *xk = bk + SHRINK * (*xk - bk);
            }
            v.score = eval(&v.x)?;
        }
    }
    simplex.sort_by(|a, b| b.score.compare(&a.score));
    let best = simplex.swap_remove(0);
    Ok(LocalOptimum {
        start: start.to_vec(),
        coefficients: best.x,
        score: best.score,
        evaluations,
        iterations,
    })
}

fn converged(simplex: &[Vertex], search: &SearchConfig) -> bool {
    let best = &simplex[0];
    let size = simplex[1..]
        .iter()
        .flat_map(|v| v.x.iter().zip(&best.x).map(|(a, b)| (a - b).abs()))
        .fold(0.0, f64::max);
    if size <= search.step_tol {
        return true;
    }
    let worst = &simplex[simplex.len() - 1];
    if best.score.tier != worst.score.tier {
        return false;
    }
    let (hi, lo) = if best.score.tier == 0 {
        (best.score.objective, worst.score.objective)
    } else {
        (worst.score.violation, best.score.violation)
    };
    (hi - lo).abs() <= search.objective_tol * hi.abs().max(lo.abs()).max(f64::MIN_POSITIVE)
        || hi == lo
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizationResult {
    pub best: LocalOptimum,
    /// Constraint report and objective of the best shape under the problem's method.
    pub evaluation: Evaluation,
    pub feasible: bool,
    /// Full-resolution local optima.
    pub local_optima: Vec<LocalOptimum>,
    /// Survey-resolution optima, empty unless a survey fidelity is configured.
    pub survey: Vec<LocalOptimum>,
    pub evaluations: usize,
    pub seed: u64,
    pub elapsed: Duration,
}

impl OptimizationResult {
    pub fn best_shape(&self) -> ShapeFunction {
        self.best.shape()
    }

    pub fn best_objective(&self) -> f64 {
        self.best.objective()
    }
}

/// Best optimum: highest objective, near-ties resolved toward the smallest
/// coefficients compared from the highest degree down.
fn select_best(optima: &[LocalOptimum], tie_tol: f64) -> usize {
    let top = (0..optima.len())
        .max_by(|&a, &b| optima[a].score.compare(&optima[b].score).then(b.cmp(&a)))
        .expect("at least one optimum");
    if !optima[top].is_feasible() {
        return top;
    }
    let j_max = optima[top].objective();
    let floor = j_max - tie_tol * j_max.abs();
    (0..optima.len())
        .filter(|&i| optima[i].is_feasible() && optima[i].objective() >= floor)
        .min_by(|&a, &b| {
            let ka = optima[a].coefficients.iter().rev();
            let kb = optima[b].coefficients.iter().rev();
            ka.zip(kb)
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| *o != Ordering::Equal)
                .unwrap_or(Ordering::Equal)
                .then(a.cmp(&b))
        })
        .unwrap_or(top)
}

fn run_starts(
    starts: &[Vec<f64>],
    problem: &ProblemSpec,
    search: &SearchConfig,
    initial_step: f64,
) -> Result<Vec<LocalOptimum>, OptError> {
    starts
        .par_iter()
        .map(|s| nelder_mead(s, problem, search, initial_step))
        .collect()
}

/// Local searches from the user start plus `n_starts - 1` seeded random starts.
pub fn multistart(
    problem: &ProblemSpec,
    search: &SearchConfig,
) -> Result<OptimizationResult, OptError> {
    problem.validate()?;
    search.validate()?;
    let clock = Instant::now();
    let starts: Vec<Vec<f64>> = (0..search.n_starts)
        .map(|i| search.start_point(i))
        .collect();

    let (survey, local_optima) = match search.survey.filter(|_| problem.method == Method::Slow) {
        None => (
            Vec::new(),
            run_starts(&starts, problem, search, search.initial_step)?,
        ),
        Some(fid) => {
            let mut coarse = problem.clone();
            coarse.sim.n_x = fid.n_x;
            coarse.sim.dt = fid.dt;
            coarse.sim.max_radius_step = coarse.sim.max_radius_step.max(fid.dt);
            if let Termination::FixedSteps(n) = problem.sim.termination {
                // keep the fed volume unchanged
                let steps = (n as f64 * problem.sim.dt / fid.dt).round() as usize;
                coarse.sim.termination = Termination::FixedSteps(steps);
            }
            let survey = run_starts(&starts, &coarse, search, search.initial_step)?;
            let seeds = distinct_leaders(&survey, search.refine, search.initial_step * 0.1);
            let refined = run_starts(&seeds, problem, search, search.initial_step * 0.1)?;
            (survey, refined)
        }
    };

    let best = local_optima[select_best(&local_optima, search.tie_tol)].clone();
    let evaluation = evaluate(&best.shape(), problem)?;
    let evaluations = survey
        .iter()
        .chain(&local_optima)
        .map(|o| o.evaluations)
        .sum();
    Ok(OptimizationResult {
        feasible: best.is_feasible(),
        best,
        evaluation,
        local_optima,
        survey,
        evaluations,
        seed: search.seed,
        elapsed: clock.elapsed(),
    })
}

/// Up to `count` best optima whose coefficients differ by more than `spacing`.
fn distinct_leaders(optima: &[LocalOptimum], count: usize, spacing: f64) -> Vec<Vec<f64>> {
    let mut order: Vec<usize> = (0..optima.len()).collect();
    order.sort_by(|&a, &b| optima[b].score.compare(&optima[a].score).then(a.cmp(&b)));
    let mut picked: Vec<Vec<f64>> = Vec::new();
    for i in order {
        let x = &optima[i].coefficients;
        let far = picked
            .iter()
            .all(|p| p.iter().zip(x).any(|(a, b)| (a - b).abs() > spacing));
        if far {
            picked.push(x.clone());
        }
        if picked.len() >= count.max(1) {
            break;
        }
    }
    picked
}
