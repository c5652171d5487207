//! Run configuration file. Unknown keys are rejected everywhere.

use serde::Deserialize;

use crate::model::{FeedSpec, ScreeningParams, ShapeFunction, Species};
use crate::multistage::{StagePlan, StageSpec, Stages};
use crate::optim::{Fidelity, Method, ProblemKind, ProblemSpec, RemovalBound, SearchConfig};
use crate::sim::{Mode, SimConfig, Termination};

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub feed: FeedConfig,
    #[serde(default)]
    pub sim: SimSection,
    pub simulate: Option<SimulateSection>,
    pub optimize: Option<OptimizeSection>,
    pub multistage: Option<MultistageSection>,
    pub sweep: Option<SweepSection>,
}

/// The one command a config file carries.
#[derive(Debug, Clone, Copy)]
pub enum Payload<'a> {
    Simulate(&'a SimulateSection),
    Optimize(&'a OptimizeSection),
    Multistage(&'a MultistageSection),
    Sweep(&'a SweepSection),
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, String> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| e.to_string())?;
        cfg.payload()?;
        Ok(cfg)
    }

    pub fn payload(&self) -> Result<Payload<'_>, String> {
        let mut found = Vec::new();
        if let Some(s) = &self.simulate {
            found.push(Payload::Simulate(s));
        }
        if let Some(s) = &self.optimize {
            found.push(Payload::Optimize(s));
        }
        if let Some(s) = &self.multistage {
            found.push(Payload::Multistage(s));
        }
        if let Some(s) = &self.sweep {
            found.push(Payload::Sweep(s));
        }
        match found.as_slice() {
            [one] => Ok(*one),
            [] => Err("config needs one of simulate, optimize, multistage or sweep".into()),
            _ => Err("config must carry exactly one command payload".into()),
        }
    }

    /// Fixed shape of the payload, if it has one.
    pub fn shape(&self) -> Option<&[f64]> {
        match self.payload().ok()? {
            Payload::Simulate(s) => Some(&s.shape),
            Payload::Multistage(s) => Some(&s.shape),
            Payload::Sweep(s) => Some(&s.shape),
            Payload::Optimize(s) => s.start.as_deref(),
        }
    }
}

pub fn shape_from(coeffs: &[f64]) -> Result<ShapeFunction, String> {
    ShapeFunction::new(coeffs.to_vec()).map_err(|e| e.to_string())
}

/// Either explicit species or fractions and ratios coupled through `lambda1`.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeedConfig {
    pub species: Option<Vec<SpeciesConfig>>,
    pub xi: Option<Vec<f64>>,
    pub beta: Option<Vec<f64>>,
    pub lambda1: Option<f64>,
    pub screening: Option<Vec<ScreeningConfig>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpeciesConfig {
    pub xi: f64,
    pub lambda: f64,
    pub beta: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScreeningConfig {
    pub lambda_clean: f64,
    pub lambda_fouled: f64,
    pub h0: f64,
}

impl FeedConfig {
    pub fn build(&self) -> Result<FeedSpec, String> {
        let feed = match (&self.species, &self.xi, &self.beta) {
            (Some(species), None, None) if self.lambda1.is_none() => FeedSpec::new(
                species
                    .iter()
                    .map(|s| Species {
                        xi: s.xi,
                        lambda: s.lambda,
                        beta: s.beta,
                    })
                    .collect(),
            ),
            (None, Some(xi), Some(beta)) => {
                FeedSpec::coupled(xi, beta, self.lambda1.unwrap_or(1.0))
            }
            _ => {
                return Err(
                    "feed needs either `species` or `xi` with `beta` (and optional `lambda1`)"
                        .into(),
                )
            }
        }
        .map_err(|e| e.to_string())?;
        match &self.screening {
            None => Ok(feed),
            Some(list) => feed
                .with_screening(
                    list.iter()
                        .map(|s| ScreeningParams {
                            lambda_clean: s.lambda_clean,
                            lambda_fouled: s.lambda_fouled,
                            h0: s.h0,
                        })
                        .collect(),
                )
                .map_err(|e| e.to_string()),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeName {
    #[default]
    ConstantPressure,
    ConstantFlux,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSection {
    #[serde(default)]
    pub mode: ModeName,
    pub n_x: Option<usize>,
    pub dt: Option<f64>,
    pub max_radius_step: Option<f64>,
    pub flux_fraction: Option<f64>,
    pub steps: Option<usize>,
    pub max_steps: Option<usize>,
    pub p_init_max: Option<f64>,
    pub p_ratio_max: Option<f64>,
    #[serde(default)]
    pub screening: bool,
}

impl SimSection {
    pub fn build(&self) -> Result<SimConfig, String> {
        let mut cfg = match (self.mode, self.steps, self.flux_fraction) {
            (ModeName::ConstantPressure, None, fraction) => {
                let mut c = SimConfig::constant_pressure();
                if let Some(f) = fraction {
                    c.termination = Termination::FluxFraction(f);
                }
                c
            }
            (ModeName::ConstantFlux, Some(n), None) => SimConfig::constant_flux(n),
            (ModeName::ConstantPressure, Some(_), _) => {
                return Err("`steps` applies to constant_flux mode only".into())
            }
            (ModeName::ConstantFlux, None, _) => {
                return Err("constant_flux mode needs `steps`".into())
            }
            (ModeName::ConstantFlux, Some(_), Some(_)) => {
                return Err("`flux_fraction` applies to constant_pressure mode only".into())
            }
        };
        if let Some(v) = self.n_x {
            cfg.n_x = v;
        }
        if let Some(v) = self.dt {
            cfg.dt = v;
        }
        if let Some(v) = self.max_radius_step {
            cfg.max_radius_step = v;
        }
        if let Some(v) = self.max_steps {
            cfg.max_steps = v;
        }
        if let Some(v) = self.p_init_max {
            cfg.p_init_max = v;
        }
        if let Some(v) = self.p_ratio_max {
            cfg.p_ratio_max = v;
        }
        cfg.screening = self.screening;
        cfg.validate().map_err(|e| e.to_string())?;
        Ok(cfg)
    }

    pub fn mode(&self) -> Mode {
        match self.mode {
            ModeName::ConstantPressure => Mode::ConstantPressure,
            ModeName::ConstantFlux => Mode::ConstantFlux,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateSection {
    pub shape: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProblemName {
    WeightedThroughput,
    Yield,
    ConstantFluxYield,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodName {
    #[default]
    Slow,
    Fast,
}

impl ProblemName {
    pub fn as_str(self) -> &'static str {
        match self {
            ProblemName::WeightedThroughput => "weighted_throughput",
            ProblemName::Yield => "yield",
            ProblemName::ConstantFluxYield => "constant_flux_yield",
        }
    }
}

impl MethodName {
    pub fn as_str(self) -> &'static str {
        match self {
            MethodName::Slow => "slow",
            MethodName::Fast => "fast",
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundConfig {
    /// One-based species number.
    pub species: usize,
    pub min: Option<f64>,
    pub max: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FidelityConfig {
    pub n_x: usize,
    pub dt: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizeSection {
    pub problem: ProblemName,
    pub weights: Option<[f64; 2]>,
    #[serde(default)]
    pub method: MethodName,
    pub initial_removal: Option<f64>,
    pub cum_removal: Option<f64>,
    #[serde(default)]
    pub removal_bounds: Vec<BoundConfig>,
    pub n_starts: usize,
    #[serde(default)]
    pub seed: u64,
    pub degree: Option<usize>,
    pub start: Option<Vec<f64>>,
    pub lower: Option<Vec<f64>>,
    pub upper: Option<Vec<f64>>,
    pub step_tol: Option<f64>,
    pub objective_tol: Option<f64>,
    pub max_iter: Option<usize>,
    pub initial_step: Option<f64>,
    pub tie_tol: Option<f64>,
    pub survey: Option<FidelityConfig>,
    pub refine: Option<usize>,
}

impl OptimizeSection {
    pub fn problem(&self, feed: FeedSpec, sim: SimConfig) -> Result<ProblemSpec, String> {
        let kind = match (self.problem, self.weights) {
            (ProblemName::WeightedThroughput, Some([w1, w2])) => {
                ProblemKind::WeightedThroughput { w1, w2 }
            }
            (ProblemName::WeightedThroughput, None) => {
                return Err("weighted_throughput needs `weights`".into())
            }
            (_, Some(_)) => return Err("`weights` applies to weighted_throughput only".into()),
            (ProblemName::Yield, None) => ProblemKind::Yield,
            (ProblemName::ConstantFluxYield, None) => ProblemKind::ConstantFluxYield,
        };
        let mut p = match kind {
            ProblemKind::WeightedThroughput { w1, w2 } => {
                ProblemSpec::weighted_throughput(w1, w2, feed)
            }
            ProblemKind::Yield => ProblemSpec::product_yield(feed),
            ProblemKind::ConstantFluxYield => ProblemSpec::constant_flux_yield(feed, 0),
        };
        p.sim = sim;
        p.method = match self.method {
            MethodName::Slow => Method::Slow,
            MethodName::Fast => Method::Fast,
        };
        if let Some(r) = self.initial_removal {
            p.initial_removal_min = r;
        }
        if let Some(r) = self.cum_removal {
            p.cum_removal_min = r;
        }
        for b in &self.removal_bounds {
            if b.species == 0 {
                return Err("removal bound species numbers start at 1".into());
            }
            p.removal_bounds.push(RemovalBound {
                species: b.species - 1,
                min: b.min,
                max: b.max,
            });
        }
        Ok(p)
    }

    pub fn search(&self, seed_override: Option<u64>) -> SearchConfig {
        let mut s = SearchConfig::polynomial(
            self.degree.unwrap_or(1),
            self.n_starts,
            seed_override.unwrap_or(self.seed),
        );
        if let Some(v) = &self.start {
            s.start = v.clone();
        }
        if let Some(v) = &self.lower {
            s.lower = v.clone();
        }
        if let Some(v) = &self.upper {
            s.upper = v.clone();
        }
        if let Some(v) = self.step_tol {
            s.step_tol = v;
        }
        if let Some(v) = self.objective_tol {
            s.objective_tol = v;
        }
        if let Some(v) = self.max_iter {
            s.max_iter = v;
        }
        if let Some(v) = self.initial_step {
            s.initial_step = v;
        }
        if let Some(v) = self.tie_tol {
            s.tie_tol = v;
        }
        if let Some(f) = &self.survey {
            s.survey = Some(Fidelity {
                n_x: f.n_x,
                dt: f.dt,
            });
        }
        if let Some(v) = self.refine {
            s.refine = v;
        }
        s
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageConfig {
    pub filters: usize,
    pub max_uses: Option<u32>,
}

/// Stage list: plain counts reuse only the last stage; objects set each limit.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum StagesConfig {
    Chain(Vec<usize>),
    Explicit(Vec<StageConfig>),
}

impl StagesConfig {
    pub fn build(&self) -> Vec<StageSpec> {
        match self {
            StagesConfig::Chain(counts) => StageSpec::chain(counts),
            StagesConfig::Explicit(list) => list
                .iter()
                .map(|s| StageSpec {
                    filters: s.filters,
                    max_uses: s.max_uses,
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdaptiveConfig {
    pub first: usize,
    pub max_stages: Option<usize>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MultistageSection {
    pub shape: Vec<f64>,
    pub design_removal: f64,
    pub target: Option<f64>,
    pub stages: Option<StagesConfig>,
    pub adaptive: Option<AdaptiveConfig>,
}

impl MultistageSection {
    pub fn plan(&self) -> Result<StagePlan, String> {
        let mut plan = match (&self.stages, &self.adaptive) {
            (Some(stages), None) => StagePlan::fixed(self.design_removal, stages.build()),
            (None, Some(a)) => {
                let mut p = StagePlan::adaptive(self.design_removal, a.first);
                if let (Some(max), Stages::Adaptive { max_stages, .. }) =
                    (a.max_stages, &mut p.stages)
                {
                    *max_stages = max;
                }
                p
            }
            _ => return Err("multistage needs exactly one of `stages` or `adaptive`".into()),
        };
        if let Some(t) = self.target {
            plan.target = t;
        }
        plan.validate().map_err(|e| e.to_string())?;
        Ok(plan)
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub shape: Vec<f64>,
    pub design_removal: f64,
    pub candidates: Vec<StagesConfig>,
}
