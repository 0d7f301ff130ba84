//! Stage-by-stage orchestration of a run.

use std::time::{Duration, Instant};

use nalgebra::DVector;

use crate::abstraction::{
    build_action_set, label_locations, ActionSet, LabelSets, Layer, LocationId, Partition,
};
use crate::app::config::RunConfig;
use crate::error::{Result, StageExt};
use crate::imdp::{assemble_imdp, robust_value_iteration, Imdp, Policy, ValueTable};
use crate::noise::NoiseSource;
use crate::scenario::{build_interval_table, confidence_budget, IntervalTable};
use crate::synthesis::{monte_carlo, MonteCarloReport, ReachAvoid, RefinedController};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Certified,
    Unknown,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Certified => "certified",
            Verdict::Unknown => "unknown",
        }
    }

    pub fn exit_code(self) -> i32 {
        match self {
            Verdict::Certified => 0,
            Verdict::Unknown => 2,
        }
    }
}

/// Wall-clock time per named stage, in execution order.
#[derive(Debug, Clone, Default)]
pub struct Timings(pub Vec<(&'static str, Duration)>);

impl Timings {
    fn time<T>(&mut self, stage: &'static str, f: impl FnOnce() -> Result<T>) -> Result<T> {
        let start = Instant::now();
        let out = f().stage(stage)?;
        self.0.push((stage, start.elapsed()));
        Ok(out)
    }

    pub fn total(&self) -> Duration {
        self.0.iter().map(|(_, d)| *d).sum()
    }
}

#[derive(Debug, Clone)]
pub struct AbstractionArtifacts {
    pub partition: Partition,
    pub actions: ActionSet,
    pub labels: LabelSets,
}

#[derive(Debug, Clone)]
pub struct SynthesisArtifacts {
    pub intervals: IntervalTable,
    pub imdp: Imdp,
    pub values: ValueTable,
    pub policy: Policy,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InitialStateReport {
    pub state: DVector<f64>,
    pub location: LocationId,
    /// `None` when only a policy file was available.
    pub lower_bound: Option<f64>,
    pub monte_carlo: Option<MonteCarloReport>,
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub partition: Partition,
    /// Lower bound `V[H][s]` for every location, sink last.
    pub bounds: Vec<f64>,
    pub num_actions: usize,
    pub enabled_pairs: usize,
    pub transition_count: u64,
    pub beta: f64,
    pub samples: usize,
    pub scenario_seed: u64,
    pub simulate_seed: u64,
    pub noise_scheme: &'static str,
    pub grouping: usize,
    /// In plant steps, after grouping.
    pub horizon: usize,
    pub threshold: f64,
    pub initial: Vec<InitialStateReport>,
    pub verdict: Verdict,
    pub policy: Policy,
    pub model_export: Option<String>,
    pub timings: Timings,
}

impl RunReport {
    pub fn min_initial_bound(&self) -> f64 {
        self.initial
            .iter()
            .filter_map(|r| r.lower_bound)
            .fold(f64::INFINITY, f64::min)
    }
}

pub fn noise_scheme(noise: &NoiseSource) -> &'static str {
    match noise {
        NoiseSource::Gaussian { .. } => "gaussian-box-muller-chacha8",
        NoiseSource::Empirical { .. } => "empirical-resample-chacha8",
        NoiseSource::Lumped { base, .. } => noise_scheme(base),
    }
}

fn layer(cfg: &RunConfig) -> Layer<'_> {
    match &cfg.prepared.stabilized {
        Some(s) => Layer::TwoLayer(s),
        None => Layer::Single(&cfg.prepared.plant),
    }
}

pub fn reach_avoid(cfg: &RunConfig) -> ReachAvoid {
    ReachAvoid {
        goal: cfg.property.goal.clone(),
        avoid: cfg.property.avoid.clone(),
        safe_domain: cfg.property.avoid_complement.then(|| cfg.domain.clone()),
        horizon: cfg.prepared.horizon,
    }
}

pub fn build_partition(cfg: &RunConfig) -> Result<Partition> {
    Partition::new(cfg.domain.clone(), cfg.counts.clone())
}

pub fn build_abstraction(cfg: &RunConfig, timings: &mut Timings) -> Result<AbstractionArtifacts> {
    let partition = timings.time("partition", || build_partition(cfg))?;
    let actions = timings.time("enabled-actions", || build_action_set(&partition, layer(cfg)))?;
    let labels = timings.time("labels", || {
        label_locations(
            &partition,
            &cfg.property.goal,
            &cfg.property.avoid,
            cfg.property.avoid_complement,
        )
    })?;
    Ok(AbstractionArtifacts {
        partition,
        actions,
        labels,
    })
}

pub fn synthesize(
    cfg: &RunConfig,
    abs: &AbstractionArtifacts,
    timings: &mut Timings,
) -> Result<SynthesisArtifacts> {
    let samples = timings.time("sampling", || {
        cfg.prepared
            .plant
            .noise()
            .sample_set(cfg.scenario.samples, cfg.scenario.seed)
    })?;
    let intervals = timings.time("intervals", || {
        let beta = confidence_budget(
            cfg.scenario.overall_confidence,
            abs.actions.num_actions(),
            abs.partition.num_locations(),
        )?;
        build_interval_table(&abs.actions.targets, &samples, &abs.partition, beta)
    })?;
    let imdp = timings.time("assemble", || {
        assemble_imdp(
            abs.partition.num_locations(),
            abs.actions.enabled.clone(),
            &intervals,
            abs.labels.clone(),
            cfg.prepared.horizon,
        )
    })?;
    let (values, policy) = timings.time("value-iteration", || robust_value_iteration(&imdp))?;
    Ok(SynthesisArtifacts {
        intervals,
        imdp,
        values,
        policy,
    })
}

pub fn refined_controller(
    cfg: &RunConfig,
    partition: &Partition,
    policy: Policy,
) -> Result<RefinedController> {
    let targets = (0..partition.num_regions())
        .map(|s| DVector::from_vec(partition.center(s)))
        .collect();
    RefinedController::new(layer(cfg), partition.clone(), targets, policy)
}

/// Monte Carlo from every configured initial state; skipped when `runs = 0`.
pub fn simulate_initial_states(
    cfg: &RunConfig,
    ctrl: &RefinedController,
    values: Option<&ValueTable>,
) -> Result<Vec<InitialStateReport>> {
    let property = reach_avoid(cfg);
    cfg.simulate
        .initial_states
        .iter()
        .map(|x0| {
            let location = ctrl.partition().locate(x0.as_slice());
            let lower_bound = values.map(|v| v.lower_bound(location));
            let monte_carlo = if cfg.simulate.runs == 0 {
                None
            } else {
                Some(monte_carlo(
                    &cfg.prepared.plant,
                    ctrl,
                    x0,
                    &property,
                    cfg.simulate.runs,
                    cfg.simulate.seed,
                    lower_bound,
                )?)
            };
            Ok(InitialStateReport {
                state: x0.clone(),
                location,
                lower_bound,
                monte_carlo,
            })
        })
        .collect()
}

/// Abstraction, synthesis, refinement and Monte Carlo validation.
pub fn run_pipeline(cfg: &RunConfig) -> Result<RunReport> {
    let mut timings = Timings::default();
    let abs = build_abstraction(cfg, &mut timings)?;
    let syn = synthesize(cfg, &abs, &mut timings)?;
    let ctrl = timings.time("refine", || {
        refined_controller(cfg, &abs.partition, syn.policy.clone())
    })?;
    let initial = timings.time("monte-carlo", || {
        simulate_initial_states(cfg, &ctrl, Some(&syn.values))
    })?;

    let threshold = cfg.property.threshold;
    let certified = initial
        .iter()
        .all(|r| r.lower_bound.is_some_and(|b| b >= threshold));
    let model_export = cfg
        .outputs
        .export_model
        .then(|| crate::imdp::export_interval_model(&syn.imdp, Some(&syn.policy)));

    Ok(RunReport {
        bounds: (0..abs.partition.num_locations())
            .map(|s| syn.values.lower_bound(s))
            .collect(),
        num_actions: abs.actions.num_actions(),
        enabled_pairs: abs.actions.enabled_pairs(),
        transition_count: syn.imdp.transition_count(),
        beta: syn.intervals.beta,
        samples: syn.intervals.samples,
        scenario_seed: cfg.scenario.seed,
        simulate_seed: cfg.simulate.seed,
        noise_scheme: noise_scheme(cfg.prepared.plant.noise()),
        grouping: cfg.grouping,
        horizon: cfg.prepared.horizon,
        threshold,
        initial,
        verdict: if certified {
            Verdict::Certified
        } else {
            Verdict::Unknown
        },
        policy: syn.policy,
        model_export,
        partition: abs.partition,
        timings,
    })
}
