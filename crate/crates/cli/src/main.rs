//! `escort`: run planning episodes, batch experiments and log replays.
//!
//! Configuration comes from an optional TOML file; command-line flags
//! override individual values from the file. Exit status is 0 on success,
//! 1 for configuration errors and 2 for runtime failures.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use escort_core::config::{parse_config, Config};
use escort_core::coordinator::{ExecutionMode, SchedulerMode};
use escort_core::rewards::RewardVariant;
use escort_core::simulator::{
    batch_evaluate, replay, run_episode_with, write_record, BatchSpec, EpisodeLog,
};
use escort_core::task::ReachMode;
use serde::de::DeserializeOwned;

const OUT_ENV: &str = "ESCORT_OUT";

#[derive(Debug, Parser)]
#[command(name = "escort", version, about = "Decentralised escort planning simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one episode and write its log.
    Run(RunArgs),
    /// Run every (variant, escort count) cell over paired environments.
    Batch(BatchArgs),
    /// Re-execute a log's controls and check the recorded trajectory.
    Replay(ReplayArgs),
}

#[derive(Debug, Args)]
struct Common {
    /// TOML configuration file; missing keys take their defaults.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, short, env = OUT_ENV, default_value = "out")]
    out: PathBuf,
    /// Suppress the summary on stdout.
    #[arg(long, short)]
    quiet: bool,
    #[command(flatten)]
    overrides: Overrides,
}

/// Flags that replace single configuration values.
#[derive(Debug, Args, Default)]
struct Overrides {
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    max_ticks: Option<usize>,
    #[arg(long)]
    n_objects: Option<usize>,
    #[arg(long)]
    prior_variance: Option<f64>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    horizon: Option<usize>,
    #[arg(long)]
    u_max: Option<f64>,
    #[arg(long)]
    n_samples: Option<usize>,
    #[arg(long)]
    n_elite: Option<usize>,
    #[arg(long)]
    n_inner_iters: Option<usize>,
    #[arg(long)]
    var_floor: Option<f64>,
    #[arg(long)]
    var_terminate: Option<f64>,
    #[arg(long)]
    sigma0_sq: Option<f64>,
    #[arg(long)]
    sensor_range: Option<f64>,
    #[arg(long)]
    noise_var: Option<f64>,
    #[arg(long)]
    peak_collision: Option<f64>,
    #[arg(long)]
    task_collision_radius: Option<f64>,
    #[arg(long)]
    reach_radius: Option<f64>,
    /// `every-step` or `terminal`.
    #[arg(long, value_parser = parse_enum::<ReachMode>)]
    reach_mode: Option<ReachMode>,
    #[arg(long)]
    outer_rounds: Option<usize>,
    /// `mean` or `sample`.
    #[arg(long, value_parser = parse_enum::<ExecutionMode>)]
    execution: Option<ExecutionMode>,
    #[arg(long)]
    n_traj: Option<usize>,
    #[arg(long)]
    n_mc: Option<usize>,
    #[arg(long)]
    drop_probability: Option<f64>,
    /// `synchronous` or `event-driven`.
    #[arg(long, value_parser = parse_enum::<SchedulerMode>)]
    scheduler: Option<SchedulerMode>,
}

#[derive(Debug, Args)]
struct RunArgs {
    #[command(flatten)]
    common: Common,
    /// blind, mi-ucb, si or se.
    #[arg(long)]
    variant: Option<RewardVariant>,
    /// Number of escorts (0 for blind).
    #[arg(long)]
    escorts: Option<usize>,
}

#[derive(Debug, Args)]
struct BatchArgs {
    #[command(flatten)]
    common: Common,
    /// Comma-separated variants.
    #[arg(long, alias = "variant", value_delimiter = ',')]
    variants: Option<Vec<RewardVariant>>,
    /// Comma-separated escort counts (ignored by blind).
    #[arg(long, value_delimiter = ',')]
    escorts: Option<Vec<usize>>,
    /// Number of paired environments per cell.
    #[arg(long)]
    envs: Option<usize>,
    #[arg(long)]
    workers: Option<usize>,
    /// Also keep every episode log under `<out>/logs`.
    #[arg(long)]
    logs: bool,
}

#[derive(Debug, Args)]
struct ReplayArgs {
    /// Episode log (JSON lines).
    log: PathBuf,
}

fn parse_enum<T: DeserializeOwned>(s: &str) -> Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|e| e.to_string())
}

/// Error classes that map to distinct exit codes.
enum Failure {
    Config(anyhow::Error),
    Runtime(anyhow::Error),
}

impl From<escort_core::Error> for Failure {
    fn from(e: escort_core::Error) -> Self {
        use escort_core::Error as E;
        match e {
            E::ConfigParse { .. } | E::ConfigInvalid { .. } => Failure::Config(e.into()),
            _ => Failure::Runtime(e.into()),
        }
    }
}

fn runtime<T>(r: anyhow::Result<T>) -> Result<T, Failure> {
    r.map_err(Failure::Runtime)
}

impl Overrides {
    fn apply(&self, cfg: &mut Config) {
        macro_rules! set {
            ($($flag:ident => $($field:ident).+;)*) => {
                $(if let Some(v) = self.$flag { cfg.$($field).+ = v; })*
            };
        }
        set! {
            seed => scenario.seed;
            max_ticks => scenario.max_ticks;
            n_objects => scenario.n_objects;
            prior_variance => scenario.prior_variance;
            dt => dynamics.dt;
            horizon => dynamics.horizon;
            u_max => dynamics.u_max;
            n_samples => cem.n_samples;
            n_elite => cem.n_elite;
            n_inner_iters => cem.n_inner_iters;
            var_floor => cem.var_floor;
            var_terminate => cem.var_terminate;
            sigma0_sq => cem.sigma0_sq;
            sensor_range => sensor.range;
            noise_var => sensor.noise_var;
            peak_collision => task.peak_collision;
            task_collision_radius => task.collision_radius;
            reach_radius => task.reach_radius;
            reach_mode => task.reach_mode;
            outer_rounds => planner.outer_rounds;
            execution => planner.execution;
            n_traj => planner.n_traj;
            n_mc => planner.n_mc;
            drop_probability => comms.drop_probability;
            scheduler => comms.scheduler;
        }
    }
}

fn load_config(common: &Common) -> Result<Config, Failure> {
    let mut cfg = match &common.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .with_context(|| format!("cannot read config {}", path.display()))
                .map_err(Failure::Config)?;
            parse_config(&text).map_err(|e| Failure::Config(anyhow::Error::new(e).context(path.display().to_string())))?
        }
        None => Config::default(),
    };
    common.overrides.apply(&mut cfg);
    Ok(cfg)
}

fn write_manifest(dir: &Path, cfg: &Config, command: &str) -> anyhow::Result<()> {
    let mut f = File::create(dir.join("manifest.toml"))?;
    writeln!(f, "# escort {} {command}", env!("CARGO_PKG_VERSION"))?;
    writeln!(f, "# seed {}", cfg.scenario.seed)?;
    f.write_all(cfg.to_toml().as_bytes())?;
    Ok(())
}

fn prepare_out(dir: &Path) -> anyhow::Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create output directory {}", dir.display()))
}

fn run(args: RunArgs) -> Result<(), Failure> {
    let mut cfg = load_config(&args.common)?;
    if let Some(v) = args.variant {
        cfg.set_variant(v);
    }
    if let Some(n) = args.escorts {
        cfg.scenario.n_escorts = n;
    }
    cfg.validate()?;

    let out = &args.common.out;
    runtime(prepare_out(out))?;
    runtime(write_manifest(out, &cfg, "run"))?;
    let path = out.join("episode.jsonl");
    let file = runtime(File::create(&path).with_context(|| format!("cannot create {}", path.display())))?;
    let mut writer = BufWriter::new(file);
    // flush after every record so an interrupted run keeps its finished ticks
    let log = run_episode_with(
        &cfg,
        cfg.scenario.seed,
        |r| {
            write_record(&mut writer, r)?;
            writer.flush()?;
            Ok(())
        },
        None,
    )?;
    if !args.common.quiet {
        println!(
            "{:?} after {} ticks (variant {}, {} escorts, seed {}); log {}",
            log.verdict(),
            log.outcome.ticks,
            cfg.scenario.variant,
            cfg.scenario.n_escorts,
            cfg.scenario.seed,
            path.display()
        );
    }
    Ok(())
}

fn batch(args: BatchArgs) -> Result<(), Failure> {
    let mut cfg = load_config(&args.common)?;
    if let Some(v) = args.variants {
        cfg.batch.variants = v;
    }
    if let Some(e) = args.escorts {
        cfg.batch.escorts = e;
    }
    if let Some(n) = args.envs {
        cfg.batch.envs = n;
    }
    if let Some(w) = args.workers {
        cfg.batch.workers = w;
    }
    // the scenario's own variant is irrelevant to a batch; keep it consistent
    let first = cfg.batch.variants.first().copied().unwrap_or(RewardVariant::Se);
    cfg.set_variant(first);
    if first.uses_escorts() {
        if let Some(&n) = cfg.batch.escorts.first() {
            cfg.scenario.n_escorts = n;
        }
    }
    cfg.validate()?;

    let out = &args.common.out;
    runtime(prepare_out(out))?;
    runtime(write_manifest(out, &cfg, "batch"))?;
    let logs = args.logs.then(|| out.join("logs"));
    let result = batch_evaluate(&cfg, &BatchSpec::from_config(&cfg), logs.as_deref())?;
    let path = out.join("results.csv");
    let file = runtime(File::create(&path).with_context(|| format!("cannot create {}", path.display())))?;
    result.write_csv(BufWriter::new(file))?;
    if !args.common.quiet {
        for c in &result.cells {
            println!(
                "{:<7} escorts={} episodes={} failure_rate={:.3} timeout_rate={:.3}",
                c.variant.name(),
                c.n_escorts,
                c.n_episodes,
                c.failure_rate,
                c.timeout_rate
            );
        }
        println!("results {}", path.display());
    }
    Ok(())
}

fn replay_log(args: ReplayArgs) -> Result<(), Failure> {
    let file = runtime(File::open(&args.log).with_context(|| format!("cannot open {}", args.log.display())))?;
    let log = EpisodeLog::read_jsonl(BufReader::new(file))?;
    let report = replay(&log)?;
    println!(
        "{} steps replayed; max deviation {:e}; {}",
        report.steps,
        report.max_deviation,
        if report.exact { "trajectory reproduced exactly" } else { "MISMATCH" }
    );
    if report.exact {
        Ok(())
    } else {
        Err(Failure::Runtime(anyhow::anyhow!("replayed trajectory differs from the log")))
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Run(a) => run(a),
        Command::Batch(a) => batch(a),
        Command::Replay(a) => replay_log(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            eprintln!("configuration error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
