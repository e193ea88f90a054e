use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use goalstack::datasetgen::{annotate, build_datasets, expert_trajectory, write_datasets, Datasets, LabelingConfig, Offset};
use goalstack::envs::generate;
use goalstack::envs::instance::Suite;
use goalstack::envs::DEFAULT_STATE_CAP;
use goalstack::executor::{check_trace, StageTracker};
use goalstack::harness::config::AnticipatorKind;
use goalstack::harness::metrics::MetricsReport;
use goalstack::harness::{
    ablation_variants, build_instances, executor_config, read_trace, recount, recount_result, render_csv,
    render_table, run_suite, write_trace, ExperimentConfig, RunOptions,
};
use goalstack::par::Execution;
use goalstack::value::ValueOracle;

#[derive(Parser)]
#[command(name = "goalstack", version, about = "Goal-stack planning experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a seeded instance suite file.
    GenerateSuite(GenerateArgs),
    /// Run one experiment configuration.
    Run(RunArgs),
    /// Run the full system and each ablation on the same suite.
    Ablate(RunArgs),
    /// Emit datasets from expert trajectories of a suite.
    Datasetgen(DatasetArgs),
    /// Check a trace file's invariants and recompute its metrics.
    ReplayTrace(ReplayArgs),
    /// Render saved reports as a table or CSV.
    Report(ReportArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Family {
    Blockwords,
    Rearrange,
    Chain,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long, value_enum)]
    family: Family,
    #[arg(long, default_value_t = 10)]
    count: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Word length for blockwords.
    #[arg(long, default_value_t = 4)]
    word_length: usize,
    #[arg(long, default_value_t = 3)]
    objects: usize,
    #[arg(long, default_value_t = 3)]
    plates: usize,
    /// Chain length.
    #[arg(long, default_value_t = 10)]
    length: u32,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    episodes: Option<u64>,
    #[arg(long)]
    check_interval: Option<u32>,
    #[arg(long)]
    max_depth: Option<u32>,
    #[arg(long)]
    max_steps: Option<u64>,
    #[arg(long)]
    max_backtracks: Option<u32>,
    #[arg(long)]
    competence_radius: Option<u32>,
    #[arg(long)]
    slip_probability: Option<f64>,
    #[arg(long, value_enum)]
    anticipator: Option<Anticipator>,
    #[arg(long)]
    hallucination_rate: Option<f64>,
    #[arg(long)]
    no_target_state: bool,
    #[arg(long)]
    no_descriptor: bool,
    #[arg(long)]
    no_recursive: bool,
    /// Run on the calling thread only.
    #[arg(long)]
    sequential: bool,
    /// Write the event trace (JSON lines).
    #[arg(long)]
    trace: Option<PathBuf>,
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Write the reports as JSON, for `report`.
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Anticipator {
    Oracle,
    TwoStage,
}

#[derive(Args)]
struct DatasetArgs {
    /// Instance suite file.
    #[arg(long)]
    suite: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 4)]
    samples_per_subgoal: u32,
    /// Labeling config file (TOML); overrides the defaults.
    #[arg(long)]
    labeling: Option<PathBuf>,
    /// Minimum advance in frames; default is a tenth of the segment.
    #[arg(long)]
    beta: Option<u32>,
    #[arg(long)]
    gamma: Option<u32>,
}

#[derive(Args)]
struct ReplayArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    trace: PathBuf,
}

#[derive(Args)]
struct ReportArgs {
    /// JSON file written by `run --json` or `ablate --json`.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum, default_value = "table")]
    format: Format,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Table,
    Csv,
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::GenerateSuite(a) => generate_suite(a),
        Command::Run(a) => run(a, false),
        Command::Ablate(a) => run(a, true),
        Command::Datasetgen(a) => datasetgen(a),
        Command::ReplayTrace(a) => replay(a),
        Command::Report(a) => report(a),
    }
}

fn emit(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn generate_suite(a: GenerateArgs) -> Result<()> {
    let suite = match a.family {
        Family::Blockwords => {
            if generate::words(a.word_length).is_empty() {
                bail!("word length must be 3, 4 or 5");
            }
            generate::blockwords_suite(a.word_length, a.count, a.seed)
        }
        Family::Rearrange => {
            if !(2..=8).contains(&a.plates) || a.objects > 8 {
                bail!("rearrange needs 2..=8 plates and at most 8 objects");
            }
            generate::rearrange_suite(a.objects, a.plates, a.count, a.seed)
        }
        Family::Chain => generate::chain_suite(a.length.max(2), a.count, a.seed),
    };
    suite.build(DEFAULT_STATE_CAP).context("generated suite does not build")?;
    emit(a.out.as_deref(), &suite.to_toml()?)
}

fn load_config(a: &RunArgs) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(&a.config).with_context(|| format!("reading {}", a.config.display()))?;
    let mut cfg: ExperimentConfig = toml::from_str(&text).with_context(|| format!("parsing {}", a.config.display()))?;
    if let Some(v) = a.seed {
        cfg.seed = v;
    }
    if let Some(v) = a.episodes {
        cfg.episodes_per_instance = v;
    }
    if let Some(v) = a.check_interval {
        cfg.executor.check_interval = v;
    }
    if let Some(v) = a.max_depth {
        cfg.executor.max_depth = v;
    }
    if let Some(v) = a.max_steps {
        cfg.executor.max_steps = Some(v);
    }
    if let Some(v) = a.max_backtracks {
        cfg.executor.max_backtracks = v;
    }
    if let Some(v) = a.competence_radius {
        cfg.policy.competence_radius = Some(v);
    }
    if let Some(v) = a.slip_probability {
        cfg.policy.slip_probability = v;
    }
    if let Some(k) = a.anticipator {
        cfg.anticipation.kind = match k {
            Anticipator::Oracle => AnticipatorKind::Oracle,
            Anticipator::TwoStage => AnticipatorKind::TwoStage,
        };
    }
    if let Some(v) = a.hallucination_rate {
        let c = cfg.anticipation.config;
        cfg.anticipation.config =
            goalstack::anticipation::AnticipationConfig::new(c.max_regenerations(), c.split_fraction(), v)
                .map_err(anyhow::Error::msg)?;
    }
    cfg.ablation.no_target_state |= a.no_target_state;
    cfg.ablation.no_descriptor |= a.no_descriptor;
    cfg.ablation.no_recursive |= a.no_recursive;
    cfg.validate().map_err(anyhow::Error::msg)?;
    Ok(cfg)
}

fn run(a: RunArgs, ablate: bool) -> Result<()> {
    let cfg = load_config(&a)?;
    let opts = RunOptions {
        execution: if a.sequential { Execution::Sequential } else { Execution::default() },
        keep_events: a.trace.is_some(),
    };
    let variants = if ablate { ablation_variants(&cfg) } else { vec![("run".to_string(), cfg)] };
    let mut reports = Vec::new();
    let mut trace = match &a.trace {
        Some(p) => Some(BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?)),
        None => None,
    };
    for (name, c) in &variants {
        let run = run_suite(c, name, opts)?;
        if let Some(w) = trace.as_mut() {
            write_trace(&mut *w, &run.results)?;
        }
        reports.push(run.report);
    }
    if let Some(mut w) = trace {
        w.flush()?;
    }
    print!("{}", render_table(&reports));
    if let Some(p) = &a.csv {
        emit(Some(p), &render_csv(&reports))?;
    }
    if let Some(p) = &a.json {
        emit(Some(p), &(serde_json::to_string_pretty(&reports)? + "\n"))?;
    }
    Ok(())
}

fn datasetgen(a: DatasetArgs) -> Result<()> {
    let suite = Suite::load(&a.suite).with_context(|| format!("loading {}", a.suite.display()))?;
    let instances = suite.build(DEFAULT_STATE_CAP)?;
    let mut cfg = match &a.labeling {
        Some(p) => toml::from_str(&std::fs::read_to_string(p)?).with_context(|| format!("parsing {}", p.display()))?,
        None => LabelingConfig::default(),
    };
    cfg.seed = a.seed;
    cfg.samples_per_subgoal = a.samples_per_subgoal;
    if let Some(b) = a.beta {
        cfg.beta = Offset::Frames(b);
    }
    if let Some(g) = a.gamma {
        cfg.gamma = Offset::Frames(g);
    }
    let mut all = Datasets::default();
    let mut family = String::new();
    for (i, inst) in instances.iter().enumerate() {
        let traj = expert_trajectory(inst.env.as_ref(), &inst.task_goal)
            .with_context(|| format!("expert run on {}", inst.name))?;
        let tree = annotate(inst.env.as_ref(), &traj).with_context(|| format!("annotating {}", inst.name))?;
        all.extend(build_datasets(&traj, &tree, &cfg, i as u64)?);
        if family.is_empty() {
            family = inst.spec.family().to_string();
        } else if family != inst.spec.family() {
            family = "mixed".into();
        }
    }
    write_datasets(&a.out, &family, instances.len(), &all, &cfg)?;
    for (k, v) in all.counts() {
        println!("{k:<13} {v}");
    }
    Ok(())
}

fn replay(a: ReplayArgs) -> Result<()> {
    let text = std::fs::read_to_string(&a.config)?;
    let cfg = ExperimentConfig::from_toml(&text).map_err(anyhow::Error::msg)?;
    let instances = build_instances(&cfg)?;
    let episodes = read_trace(BufReader::new(File::open(&a.trace)?))?;
    let mut results = Vec::new();
    let mut violations = 0usize;
    for (id, events) in &episodes {
        let inst = instances
            .get(id.instance as usize)
            .with_context(|| format!("trace refers to missing instance {}", id.instance))?;
        let oracle = ValueOracle::new(inst.env.as_ref())?;
        let exec_cfg = executor_config(&cfg, &oracle, &inst.task_goal)?;
        if let Err(e) = check_trace(events, &exec_cfg) {
            violations += 1;
            eprintln!("instance {} episode {}: {e}", id.instance, id.episode);
        }
        let stages = StageTracker::new(inst.env.as_ref(), &inst.task_goal)?;
        results.push(recount_result(&recount(*id, events, inst.env.as_ref(), &inst.task_goal, &stages)));
    }
    print!("{}", render_table(&[MetricsReport::from_results("replay", &results)?]));
    println!("episodes {}  invariant violations {violations}", episodes.len());
    if violations > 0 {
        bail!("{violations} episodes violate trace invariants");
    }
    Ok(())
}

fn report(a: ReportArgs) -> Result<()> {
    let reports: Vec<MetricsReport> = serde_json::from_reader(BufReader::new(File::open(&a.input)?))?;
    let text = match a.format {
        Format::Table => render_table(&reports),
        Format::Csv => render_csv(&reports),
    };
    std::io::stdout().write_all(text.as_bytes())?;
    Ok(())
}
