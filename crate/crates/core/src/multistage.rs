//! Multi-stage filtration: exhaust first-stage filters on raw feed, then pass the
//! pooled filtrate through later-stage filters until the species-1 removal target
//! is met against the original feed.

use rayon::prelude::*;

use crate::error::{SimError, StageError};
use crate::model::{flux_constant_pressure, FeedSpec, PoreProfile, ShapeFunction};
use crate::sim::{pressure_run, product_index, purity, PressureLimits, SimConfig, StopReason};

pub const DEFAULT_TARGET_REMOVAL: f64 = 0.99;
const DEFAULT_MAX_STAGES: usize = 64;

/// A volume of collected filtrate with uniform concentrations.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub volume: f64,
    pub conc: Vec<f64>,
}

impl Batch {
    /// Volume-weighted mixture.
    pub fn mix(batches: &[Batch]) -> Batch {
        let species = batches.first().map_or(0, |b| b.conc.len());
        let volume: f64 = batches.iter().map(|b| b.volume).sum();
        let conc = (0..species)
            .map(|i| {
                if volume > 0.0 {
                    batches.iter().map(|b| b.volume * b.conc[i]).sum::<f64>() / volume
                } else {
                    batches[0].conc[i]
                }
            })
            .collect();
        Batch { volume, conc }
    }

    /// Equal shares by volume.
    pub fn split(&self, parts: usize) -> Vec<Batch> {
        let share = Batch {
            volume: self.volume / parts as f64,
            conc: self.conc.clone(),
        };
        vec![share; parts]
    }

    pub fn mass(&self) -> Vec<f64> {
        self.conc.iter().map(|c| c * self.volume).collect()
    }

    /// Cumulative removal against reference concentrations.
    pub fn removal(&self, reference: &[f64]) -> Vec<f64> {
        self.conc
            .iter()
            .zip(reference)
            .map(|(c, c0)| 1.0 - c / c0)
            .collect()
    }
}

/// One physical filter; its pore profile persists across passes.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterInstance {
    /// One-based stage number.
    pub stage: usize,
    /// Zero-based position within the stage.
    pub index: usize,
    pub shape: ShapeFunction,
    clean: PoreProfile,
    pub profile: PoreProfile,
    pub u_clean: f64,
    pub uses: u32,
    pub volume_in: f64,
    pub volume_out: f64,
    pub volume_discarded: f64,
    exhausted: bool,
}

impl FilterInstance {
    pub fn new(
        stage: usize,
        index: usize,
        shape: &ShapeFunction,
        cfg: &SimConfig,
    ) -> Result<Self, StageError> {
        let clean = PoreProfile::from_shape(shape, cfg.n_x)?;
        let u_clean = flux_constant_pressure(&clean)?;
        Ok(Self {
            stage,
            index,
            shape: shape.clone(),
            profile: clean.clone(),
            clean,
            u_clean,
            uses: 0,
            volume_in: 0.0,
            volume_out: 0.0,
            volume_discarded: 0.0,
            exhausted: false,
        })
    }

    pub fn is_exhausted(&self) -> bool {
        self.exhausted
    }

    pub fn is_clean(&self) -> bool {
        self.uses == 0
    }
}

/// Runs a clean filter on raw feed until its flux falls to the exhaustion fraction of its clean value.
pub fn run_stage1_filter(
    filter: &mut FilterInstance,
    feed: &FeedSpec,
    cfg: &SimConfig,
) -> Result<Batch, StageError> {
    if !filter.is_clean() {
        return Err(StageError::InvalidPlan(
            "a first-stage filter must start clean".into(),
        ));
    }
    let record = pressure_run(
        feed,
        feed.inlet(),
        filter.clean.clone(),
        filter.profile.clone(),
        cfg,
        PressureLimits {
            clean_flux: Some(filter.u_clean),
            volume: None,
        },
    )?;
    if record.stop == StopReason::StepCap {
        return Err(SimError::NotExhausted(cfg.max_steps).into());
    }
    let volume = record.throughput();
    filter.profile = record.final_profile.clone();
    filter.uses += 1;
    filter.volume_in += volume;
    filter.volume_out += volume;
    filter.exhausted = true;
    Ok(Batch {
        volume,
        conc: record.final_c_acm(),
    })
}

/// Outcome of passing a batch through a filter.
#[derive(Debug, Clone, PartialEq)]
pub struct PassOutcome {
    pub outflow: Batch,
    pub discarded: f64,
}

/// Filters a batch, resuming from the filter's fouled profile with the batch concentration held at the inlet.
pub fn run_pass(
    filter: &mut FilterInstance,
    inflow: &Batch,
    feed: &FeedSpec,
    cfg: &SimConfig,
) -> Result<PassOutcome, StageError> {
    if filter.exhausted {
        return Err(SimError::FilterExhausted.into());
    }
    if inflow.conc.len() != feed.len() {
        return Err(StageError::InvalidPlan(format!(
            "batch carries {} species, feed has {}",
            inflow.conc.len(),
            feed.len()
        )));
    }
    if !(inflow.volume > 0.0) {
        return Ok(PassOutcome {
            outflow: Batch {
                volume: 0.0,
                conc: inflow.conc.clone(),
            },
            discarded: 0.0,
        });
    }
    let record = pressure_run(
        feed,
        inflow.conc.clone(),
        filter.clean.clone(),
        filter.profile.clone(),
        cfg,
        PressureLimits {
            clean_flux: Some(filter.u_clean),
            volume: Some(inflow.volume),
        },
    )?;
    let processed = record.throughput();
    let (volume, discarded) = match record.stop {
        StopReason::VolumeProcessed => (inflow.volume, 0.0),
        StopReason::FluxThreshold | StopReason::PoreClosed => {
            filter.exhausted = true;
            (processed, (inflow.volume - processed).max(0.0))
        }
        StopReason::StepCap => return Err(SimError::NotExhausted(cfg.max_steps).into()),
        other => unreachable!("constant-pressure pass stopped by {other:?}"),
    };
    let conc = if processed > 0.0 {
        record.final_c_acm()
    } else {
        vec![0.0; feed.len()]
    };
    filter.profile = record.final_profile;
    filter.uses += 1;
    filter.volume_in += inflow.volume;
    filter.volume_out += volume;
    filter.volume_discarded += discarded;
    Ok(PassOutcome {
        outflow: Batch { volume, conc },
        discarded,
    })
}

/// Filters in one stage and how often each may be reused.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StageSpec {
    pub filters: usize,
    /// Passes allowed per filter; unlimited when absent.
    pub max_uses: Option<u32>,
}

impl StageSpec {
    pub fn unlimited(filters: usize) -> Self {
        Self {
            filters,
            max_uses: None,
        }
    }

    /// Stages where every intermediate stage is used once and the last is reused as needed.
    pub fn chain(counts: &[usize]) -> Vec<StageSpec> {
        let last = counts.len().saturating_sub(1);
        counts
            .iter()
            .enumerate()
            .map(|(m, &filters)| StageSpec {
                filters,
                max_uses: if m == 0 || m == last { None } else { Some(1) },
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Stages {
    /// Stage list starting with stage 1.
    Fixed(Vec<StageSpec>),
    /// `first` parallel first-stage filters, then single reusable filters added as needed.
    Adaptive { first: usize, max_stages: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct StagePlan {
    /// Clean-filter removal threshold the stage filter was designed for.
    pub design_removal: f64,
    /// Cumulative species-1 removal that ends the protocol.
    pub target: f64,
    pub stages: Stages,
}

impl StagePlan {
    pub fn fixed(design_removal: f64, stages: Vec<StageSpec>) -> Self {
        Self {
            design_removal,
            target: DEFAULT_TARGET_REMOVAL,
            stages: Stages::Fixed(stages),
        }
    }

    pub fn adaptive(design_removal: f64, first: usize) -> Self {
        Self {
            design_removal,
            target: DEFAULT_TARGET_REMOVAL,
            stages: Stages::Adaptive {
                first,
                max_stages: DEFAULT_MAX_STAGES,
            },
        }
    }

    pub fn validate(&self) -> Result<(), StageError> {
        let bad = |m: String| Err(StageError::InvalidPlan(m));
        if !(self.target > 0.0 && self.target <= 1.0) {
            return bad(format!(
                "target removal must lie in (0, 1], got {}",
                self.target
            ));
        }
        if !(self.design_removal > 0.0 && self.design_removal <= self.target) {
            return bad(format!(
                "design removal must lie in (0, {}], got {}",
                self.target, self.design_removal
            ));
        }
        match &self.stages {
            Stages::Fixed(stages) => {
                if stages.is_empty() || stages[0].filters == 0 {
                    return bad("the first stage needs at least one filter".into());
                }
                if stages
                    .iter()
                    .any(|s| s.filters == 0 || s.max_uses == Some(0))
                {
                    return bad("every stage needs filters and at least one use".into());
                }
            }
            Stages::Adaptive { first, max_stages } => {
                if *first == 0 || *max_stages == 0 {
                    return bad(
                        "adaptive plans need a first-stage filter and a stage budget".into(),
                    );
                }
            }
        }
        Ok(())
    }

    fn stage(&self, m: usize) -> Option<StageSpec> {
        match &self.stages {
            Stages::Fixed(stages) => stages.get(m).copied(),
            Stages::Adaptive { first, max_stages } => match m {
                0 => Some(StageSpec::unlimited(*first)),
                m if m < *max_stages => Some(StageSpec::unlimited(1)),
                _ => None,
            },
        }
    }
}

/// Per-filter accounting.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterRecord {
    pub stage: usize,
    pub index: usize,
    pub uses: u32,
    pub volume_in: f64,
    pub volume_out: f64,
    pub volume_discarded: f64,
    pub exhausted: bool,
}

impl From<&FilterInstance> for FilterRecord {
    fn from(f: &FilterInstance) -> Self {
        Self {
            stage: f.stage,
            index: f.index,
            uses: f.uses,
            volume_in: f.volume_in,
            volume_out: f.volume_out,
            volume_discarded: f.volume_discarded,
            exhausted: f.exhausted,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultiStageResult {
    pub ledger: Vec<FilterRecord>,
    /// Filters per stage actually run.
    pub stage_filters: Vec<usize>,
    /// Passes through each stage's filters.
    pub stage_uses: Vec<u32>,
    pub stage1_volume: f64,
    pub discarded: f64,
    pub final_batch: Batch,
    /// Filters that received any volume.
    pub total_filters: usize,
    pub cum_removal: Vec<f64>,
    pub purity: Vec<f64>,
    /// Collected product mass.
    pub product_yield: f64,
    pub yield_per_filter: f64,
    pub target_met: bool,
}

impl MultiStageResult {
    pub fn throughput(&self) -> f64 {
        self.final_batch.volume
    }
}

/// Runs the staged protocol with every filter cut to `shape`.
pub fn run_protocol(
    plan: &StagePlan,
    shape: &ShapeFunction,
    feed: &FeedSpec,
    cfg: &SimConfig,
) -> Result<MultiStageResult, StageError> {
    plan.validate()?;
    let reference = feed.inlet();
    let meets = |b: &Batch| b.removal(&reference)[0] >= plan.target;

    let first = plan.stage(0).expect("validated plan has a first stage");
    let mut template = FilterInstance::new(1, 0, shape, cfg)?;
    let batch = run_stage1_filter(&mut template, feed, cfg)?;
    // identical clean filters on identical feed give identical batches
    let mut ledger: Vec<FilterRecord> = (0..first.filters)
        .map(|index| FilterRecord {
            index,
            ..FilterRecord::from(&template)
        })
        .collect();
    let mut pooled = Batch::mix(&vec![batch; first.filters]);
    let stage1_volume = pooled.volume;
    let mut stage_filters = vec![first.filters];
    let mut stage_uses = vec![1];
    let mut target_met = meets(&pooled);

    let mut m = 1;
    while !target_met {
        let Some(spec) = plan.stage(m) else { break };
        let mut filters: Vec<FilterInstance> = (0..spec.filters)
            .map(|i| FilterInstance::new(m + 1, i, shape, cfg))
            .collect::<Result<_, _>>()?;
        let mut passes = 0u32;
        loop {
            let shares = pooled.split(filters.len());
            let outflows: Vec<Batch> = filters
                .iter_mut()
                .zip(&shares)
                .map(|(f, share)| run_pass(f, share, feed, cfg).map(|o| o.outflow))
                .collect::<Result<_, _>>()?;
            pooled = Batch::mix(&outflows);
            passes += 1;
            target_met = meets(&pooled);
            let worn = filters.iter().any(FilterInstance::is_exhausted);
            let capped = spec.max_uses.is_some_and(|k| passes >= k);
            if target_met || worn || capped || !(pooled.volume > 0.0) {
                break;
            }
        }
        ledger.extend(filters.iter().map(FilterRecord::from));
        stage_filters.push(spec.filters);
        stage_uses.push(passes);
        m += 1;
        if !(pooled.volume > 0.0) {
            break;
        }
    }

    let total_filters = ledger.iter().filter(|r| r.volume_in > 0.0).count();
    let discarded = ledger.iter().map(|r| r.volume_discarded).sum();
    let p = product_index(feed.len());
    let product_yield = pooled.conc[p] * pooled.volume;
    Ok(MultiStageResult {
        cum_removal: pooled.removal(&reference),
        purity: purity(&pooled.conc).map_err(StageError::from)?,
        yield_per_filter: product_yield / total_filters as f64,
        product_yield,
        total_filters,
        discarded,
        stage1_volume,
        stage_filters,
        stage_uses,
        final_batch: pooled,
        ledger,
        target_met,
    })
}

/// One evaluated candidate of a stage-ratio sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    /// Position in the input candidate list.
    pub candidate: usize,
    pub stages: Vec<StageSpec>,
    pub result: MultiStageResult,
}

/// Runs each candidate stage list and ranks them: target met first, then by yield per filter.
pub fn sweep_stage_ratios(
    candidates: &[Vec<StageSpec>],
    design_removal: f64,
    shape: &ShapeFunction,
    feed: &FeedSpec,
    cfg: &SimConfig,
) -> Result<Vec<SweepRow>, StageError> {
    if candidates.is_empty() {
        return Err(StageError::InvalidPlan("candidate list is empty".into()));
    }
    let mut rows: Vec<SweepRow> = candidates
        .par_iter()
        .enumerate()
        .map(|(candidate, stages)| {
            let plan = StagePlan::fixed(design_removal, stages.clone());
            run_protocol(&plan, shape, feed, cfg).map(|result| SweepRow {
                candidate,
                stages: stages.clone(),
                result,
            })
        })
        .collect::<Result<_, _>>()?;
    rows.sort_by(|a, b| {
        b.result
            .target_met
            .cmp(&a.result.target_met)
            .then(
                b.result
                    .yield_per_filter
                    .total_cmp(&a.result.yield_per_filter),
            )
            .then(a.candidate.cmp(&b.candidate))
    });
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Species;

    fn feed() -> FeedSpec {
        FeedSpec::two_species(0.9, 0.1, 1.0).unwrap()
    }

    fn flat() -> ShapeFunction {
        ShapeFunction::linear(1.0, 0.0)
    }

    fn cfg() -> SimConfig {
        SimConfig::constant_pressure()
    }

    fn stage1_batch() -> Batch {
        let mut f = FilterInstance::new(1, 0, &flat(), &cfg()).unwrap();
        run_stage1_filter(&mut f, &feed(), &cfg()).unwrap()
    }

    #[test]
    fn mixing_conserves_mass() {
        let a = Batch {
            volume: 1.0,
            conc: vec![0.2, 0.4],
        };
        let b = Batch {
            volume: 3.0,
            conc: vec![0.6, 0.0],
        };
        let m = Batch::mix(&[a.clone(), b.clone()]);
        assert_eq!(m.volume, 4.0);
        for i in 0..2 {
            assert!((m.mass()[i] - a.mass()[i] - b.mass()[i]).abs() < 1e-15);
        }
        let parts = m.split(4);
        assert_eq!(parts.len(), 4);
        assert_eq!(Batch::mix(&parts), m);
    }

    #[test]
    fn empty_pass_leaves_filter_untouched() {
        let mut f = FilterInstance::new(2, 0, &flat(), &cfg()).unwrap();
        let before = f.clone();
        let out = run_pass(
            &mut f,
            &Batch {
                volume: 0.0,
                conc: vec![0.1, 0.2],
            },
            &feed(),
            &cfg(),
        )
        .unwrap();
        assert_eq!(out.outflow.volume, 0.0);
        assert_eq!(out.discarded, 0.0);
        assert_eq!(f, before);
    }

    #[test]
    fn small_batch_passes_completely() {
        let batch = stage1_batch();
        let mut f = FilterInstance::new(2, 0, &flat(), &cfg()).unwrap();
        let inflow = Batch {
            volume: 0.05,
            conc: batch.conc.clone(),
        };
        let out = run_pass(&mut f, &inflow, &feed(), &cfg()).unwrap();
        assert!((out.outflow.volume - 0.05).abs() < 1e-12 * 0.05);
        assert_eq!(out.discarded, 0.0);
        assert!(!f.is_exhausted());
        assert!(out.outflow.mass()[0] <= inflow.mass()[0]);
        assert!(out.outflow.conc[0] < inflow.conc[0]);
    }

    #[test]
    fn oversized_batch_exhausts_the_filter() {
        let mut f = FilterInstance::new(2, 0, &flat(), &cfg()).unwrap();
        let inflow = Batch {
            volume: 1e3,
            conc: feed().inlet(),
        };
        let out = run_pass(&mut f, &inflow, &feed(), &cfg()).unwrap();
        assert!(f.is_exhausted());
        assert!(out.discarded > 0.0);
        assert!((out.outflow.volume + out.discarded - inflow.volume).abs() < 1e-9 * inflow.volume);
        assert!((f.volume_in - f.volume_out - f.volume_discarded).abs() < 1e-9 * f.volume_in);
        assert!(matches!(
            run_pass(&mut f, &inflow, &feed(), &cfg()),
            Err(StageError::Sim(SimError::FilterExhausted))
        ));
    }

    #[test]
    fn non_fouling_feed_never_exhausts() {
        let clear = FeedSpec::new(vec![Species {
            xi: 1.0,
            lambda: 0.0,
            beta: 1.0,
        }])
        .unwrap();
        let mut c = cfg();
        c.max_steps = 2_000;
        let mut f = FilterInstance::new(1, 0, &flat(), &c).unwrap();
        assert!(matches!(
            run_stage1_filter(&mut f, &clear, &c),
            Err(StageError::Sim(SimError::NotExhausted(2_000)))
        ));
    }

    #[test]
    fn single_species_protocol() {
        let one = FeedSpec::new(vec![Species {
            xi: 1.0,
            lambda: 1.0,
            beta: 1.0,
        }])
        .unwrap();
        let plan = StagePlan::fixed(0.5, StageSpec::chain(&[1, 1]));
        let r = run_protocol(&plan, &flat(), &one, &cfg()).unwrap();
        assert_eq!(r.final_batch.conc.len(), 1);
        assert_eq!(r.purity, vec![1.0]);
    }

    #[test]
    fn protocol_conserves_volume_and_species_one_mass() {
        let plan = StagePlan::fixed(0.5, StageSpec::chain(&[2, 1]));
        let r = run_protocol(&plan, &flat(), &feed(), &cfg()).unwrap();
        assert!(
            (r.final_batch.volume + r.discarded - r.stage1_volume).abs() < 1e-9 * r.stage1_volume
        );
        let stage1_mass = r.stage1_volume * stage1_batch().conc[0];
        assert!(r.final_batch.mass()[0] <= stage1_mass);
        assert_eq!(r.stage_filters, vec![2, 1]);
        assert_eq!(r.ledger.len(), 3);
        let m = r.ledger.iter().filter(|f| f.volume_in > 0.0).count();
        assert_eq!(r.total_filters, m);
        assert!((r.yield_per_filter * m as f64 - r.product_yield).abs() < 1e-15);
    }

    #[test]
    fn target_already_met_skips_later_stages() {
        let mut plan = StagePlan::fixed(0.1, StageSpec::chain(&[1, 1]));
        plan.target = 0.1;
        let r = run_protocol(&plan, &flat(), &feed(), &cfg()).unwrap();
        assert!(r.target_met);
        assert_eq!(r.stage_filters, vec![1]);
        assert_eq!(r.total_filters, 1);
    }

    #[test]
    fn chain_caps_intermediate_stages() {
        let s = StageSpec::chain(&[27, 9, 3, 1]);
        let caps: Vec<_> = s.iter().map(|x| x.max_uses).collect();
        assert_eq!(caps, vec![None, Some(1), Some(1), None]);
        assert_eq!(StageSpec::chain(&[3])[0].max_uses, None);
    }

    #[test]
    fn invalid_plans_are_rejected() {
        for plan in [
            StagePlan::fixed(0.5, vec![]),
            StagePlan::fixed(0.5, StageSpec::chain(&[0, 1])),
            StagePlan::fixed(1.5, StageSpec::chain(&[1])),
        ] {
            assert!(matches!(
                run_protocol(&plan, &flat(), &feed(), &cfg()),
                Err(StageError::InvalidPlan(_))
            ));
        }
    }

    #[test]
    fn sweep_of_one_matches_protocol() {
        let stages = StageSpec::chain(&[2, 1]);
        let rows = sweep_stage_ratios(&[stages.clone()], 0.5, &flat(), &feed(), &cfg()).unwrap();
        let direct =
            run_protocol(&StagePlan::fixed(0.5, stages), &flat(), &feed(), &cfg()).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].result, direct);
        assert!(matches!(
            sweep_stage_ratios(&[], 0.5, &flat(), &feed(), &cfg()),
            Err(StageError::InvalidPlan(_))
        ));
    }

    #[test]
    fn sweep_ranks_target_met_first() {
        let candidates = vec![
            StageSpec::chain(&[1]),
            StageSpec::chain(&[1, 1]),
            StageSpec::chain(&[2, 1]),
        ];
        let rows = sweep_stage_ratios(&candidates, 0.5, &flat(), &feed(), &cfg()).unwrap();
        assert_eq!(rows.last().unwrap().candidate, 0);
        assert!(!rows.last().unwrap().result.target_met);
        assert!(rows[0].result.target_met);
        assert!(
            rows[0].result.yield_per_filter >= rows[1].result.yield_per_filter
                || !rows[1].result.target_met
        );
    }
}
