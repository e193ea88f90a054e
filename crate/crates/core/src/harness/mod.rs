//! Experiment runner: builds a suite, runs seeded episode batches with
//! oracle-backed components, and aggregates metrics.
//!
//! Randomness: episode `e` of instance `i` draws from a ChaCha8 generator
//! seeded with the master seed and switched to stream `(i << 32) | e`, so
//! every episode is reproducible on its own and independent of scheduling.

pub mod config;
pub mod metrics;

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::anticipation::{FixedPlanAnticipator, OracleAnticipator, TwoStageAnticipator};
use crate::envs::instance::{Instance, SuiteError};
use crate::envs::{SkillLibrary, DEFAULT_STATE_CAP};
use crate::executor::{EpisodeEvent, EpisodeId, EpisodeResult, EventKind, Executor, ExecutorConfig, StageTracker};
use crate::gmdp::{AnticipationModel, Goal, ModelError, StateId};
use crate::par::{map_indexed, Execution};
use crate::policy::{MaskedPolicy, OraclePolicy};
use crate::value::{OracleValueModel, ValueError, ValueOracle};

pub use config::{ablation_variants, ExperimentConfig};
pub use metrics::{render_csv, render_table, MetricsReport};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Suite(#[from] SuiteError),
    #[error("instance {instance}: {source}")]
    Value { instance: String, source: ValueError },
    #[error("instance {instance}: {source}")]
    Model { instance: String, source: ModelError },
    #[error(transparent)]
    Metrics(#[from] metrics::MetricsError),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("trace line {line}: {message}")]
    Trace { line: usize, message: String },
}

#[derive(Clone, Copy, Debug, Default)]
pub struct RunOptions {
    pub execution: Execution,
    /// Keep per-episode event traces in the results.
    pub keep_events: bool,
}

pub struct SuiteRun {
    pub report: MetricsReport,
    /// Sorted by (instance, episode).
    pub results: Vec<EpisodeResult>,
    pub instance_names: Vec<String>,
}

/// Seeded generator for one episode.
pub fn episode_rng(seed: u64, id: EpisodeId) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((u64::from(id.instance) << 32) | (id.episode & 0xffff_ffff));
    rng
}

/// Builds every instance of the configured suite.
pub fn build_instances(cfg: &ExperimentConfig) -> Result<Vec<Instance>, HarnessError> {
    cfg.validate().map_err(HarnessError::Config)?;
    Ok(cfg.suite.load(cfg.seed)?.build(DEFAULT_STATE_CAP)?)
}

/// Executor settings for one instance, resolving the automatic budget.
pub fn executor_config(cfg: &ExperimentConfig, oracle: &ValueOracle<'_>, task: &Goal) -> Result<ExecutorConfig, ValueError> {
    let max_steps = match cfg.executor.max_steps {
        Some(n) => n,
        None => {
            let v = oracle.table(task)?.require(oracle.env().initial_state())?;
            4 * u64::from(v.max(1)) * u64::from(cfg.executor.max_depth)
        }
    };
    Ok(ExecutorConfig {
        check_interval: cfg.executor.check_interval,
        thresholds: cfg.executor.thresholds,
        max_depth: cfg.effective_depth(),
        max_steps,
        max_backtracks: cfg.executor.max_backtracks,
    })
}

/// Runs every episode of one instance.
pub fn run_instance(
    cfg: &ExperimentConfig,
    index: u32,
    instance: &Instance,
    opts: RunOptions,
) -> Result<Vec<EpisodeResult>, HarnessError> {
    let env: &dyn SkillLibrary = instance.env.as_ref();
    let named = |source| HarnessError::Value { instance: instance.name.clone(), source };
    let oracle = ValueOracle::new(env).map_err(named)?;
    let exec_cfg = executor_config(cfg, &oracle, &instance.task_goal).map_err(named)?;
    let model_err = |source| HarnessError::Model { instance: instance.name.clone(), source };
    let stages = StageTracker::new(env, &instance.task_goal).map_err(model_err)?;
    let plan = if cfg.ablation.no_recursive {
        let fixed = FixedPlanAnticipator::from_expert(env, &instance.task_goal)
            .map_err(|e| model_err(ModelError::from(e)))?;
        Some(fixed.plan().to_vec())
    } else {
        None
    };
    let value = OracleValueModel::new(&oracle, cfg.executor.thresholds);
    let policy = MaskedPolicy::new(
        OraclePolicy::new(&oracle, cfg.policy),
        cfg.ablation.no_target_state,
        cfg.ablation.no_descriptor,
    );
    let acfg = cfg.anticipation.config;
    let anticipator: Box<dyn AnticipationModel + '_> = match (&plan, cfg.anticipation.kind) {
        (Some(plan), _) => Box::new(FixedPlanAnticipator::new(env, plan.clone())),
        (None, config::AnticipatorKind::Oracle) => Box::new(OracleAnticipator::new(env, &oracle, acfg)),
        (None, config::AnticipatorKind::TwoStage) => Box::new(TwoStageAnticipator::new(env, &oracle, acfg)),
    };
    let executor = Executor {
        env,
        policy: &policy,
        value: &value,
        anticipation: anticipator.as_ref(),
        config: exec_cfg,
    };
    let results = map_indexed(opts.execution, cfg.episodes_per_instance as usize, |e| {
        let id = EpisodeId { instance: index, episode: e as u64 };
        let mut rng = episode_rng(cfg.seed, id);
        let mut r = executor.run(&instance.task_goal, id, &stages, &mut rng);
        if !opts.keep_events {
            r.events = Vec::new();
        }
        r
    });
    Ok(results)
}

/// Runs the configured suite and aggregates a report labeled `label`.
pub fn run_suite(cfg: &ExperimentConfig, label: &str, opts: RunOptions) -> Result<SuiteRun, HarnessError> {
    let instances = build_instances(cfg)?;
    let per_instance = map_indexed(opts.execution, instances.len(), |i| {
        run_instance(cfg, i as u32, &instances[i], opts)
    });
    let mut results = Vec::new();
    for r in per_instance {
        results.extend(r?);
    }
    results.sort_by_key(|r| (r.instance, r.episode));
    let report = MetricsReport::from_results(label, &results)?;
    Ok(SuiteRun { report, results, instance_names: instances.into_iter().map(|i| i.name).collect() })
}

/// Writes the events of `results` as JSON lines, in episode order.
pub fn write_trace<W: Write>(mut w: W, results: &[EpisodeResult]) -> Result<(), HarnessError> {
    for r in results {
        for e in &r.events {
            serde_json::to_writer(&mut w, e).map_err(std::io::Error::from)?;
            w.write_all(b"\n")?;
        }
    }
    Ok(())
}

/// Reads a trace and groups it by episode.
pub fn read_trace<R: BufRead>(r: R) -> Result<BTreeMap<EpisodeId, Vec<EpisodeEvent>>, HarnessError> {
    let mut out: BTreeMap<EpisodeId, Vec<EpisodeEvent>> = BTreeMap::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let e: EpisodeEvent = serde_json::from_str(&line)
            .map_err(|err| HarnessError::Trace { line: i + 1, message: err.to_string() })?;
        out.entry(EpisodeId { instance: e.instance, episode: e.episode }).or_default().push(e);
    }
    Ok(out)
}

/// Outcome of one episode recomputed from its trace alone.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Recount {
    pub id: EpisodeId,
    pub success: bool,
    pub steps_used: u64,
    pub pushes: u32,
    pub pops: u32,
    pub backtracks: u32,
    pub stack_depth_max: usize,
    pub stage_completions: Vec<bool>,
}

/// Recomputes episode outcomes from trace events and the instance.
pub fn recount(
    id: EpisodeId,
    events: &[EpisodeEvent],
    env: &dyn SkillLibrary,
    task: &Goal,
    stages: &StageTracker,
) -> Recount {
    let s0 = env.initial_state();
    let count = |k: EventKind| events.iter().filter(|e| e.kind == k).count() as u32;
    let best = events.iter().map(|e| stages.prefix(e.state)).chain([stages.prefix(s0)]).max().unwrap_or(0);
    let last: StateId = events.last().map_or(s0, |e| e.state);
    let emptied = events.last().is_some_and(|e| e.kind == EventKind::Pop && e.depth == 0);
    Recount {
        id,
        success: emptied || env.satisfied(last, task).unwrap_or(false),
        steps_used: count(EventKind::Act).into(),
        pushes: count(EventKind::Push),
        pops: count(EventKind::Pop),
        backtracks: count(EventKind::Backtrack),
        stack_depth_max: events.iter().map(|e| e.depth).max().unwrap_or(1).max(1),
        stage_completions: (0..stages.num_stages()).map(|i| i < best).collect(),
    }
}

/// Converts a recount into a result for metric aggregation.
pub fn recount_result(r: &Recount) -> EpisodeResult {
    EpisodeResult {
        instance: r.id.instance,
        episode: r.id.episode,
        success: r.success,
        steps_used: r.steps_used,
        final_state: StateId(0),
        stack_depth_max: r.stack_depth_max,
        backtrack_count: r.backtracks,
        pushes: r.pushes,
        pops: r.pops,
        checks: 0,
        stage_completions: r.stage_completions.clone(),
        error: None,
        events: Vec::new(),
    }
}
