use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use kst_core::{Error, Result};
use kst_harness::{run, Experiment, ExperimentConfig, ShadowBudget};
use serde_json::{json, Value};

/// Reproduce the QFI-bound experiments and write `<name>.csv` plus `<name>.meta.json`.
#[derive(Parser, Debug)]
#[command(name = "kst", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Exact bounds vs p for GHZ pseudo-pure states.
    #[command(name = "fig2a")]
    Fig2a(RunArgs),
    /// Shadow estimate of B_1 vs p.
    #[command(name = "fig2b")]
    Fig2b(RunArgs),
    /// Smallest M reaching Ê ≤ 0.1 vs N, pseudo-pure states.
    #[command(name = "fig2c")]
    Fig2c(RunArgs),
    /// Exact bounds vs k for the bound-entangled family.
    #[command(name = "fig3a")]
    Fig3a(RunArgs),
    /// Shadow estimate of B_1 vs k.
    #[command(name = "fig3b")]
    Fig3b(RunArgs),
    /// Smallest M reaching Ê ≤ 0.1 vs N, bound-entangled states.
    #[command(name = "fig3c")]
    Fig3c(RunArgs),
    /// Detection ratios over random two-qubit states.
    #[command(name = "figS3")]
    FigS3(RunArgs),
    /// Any state and observable given in the config file.
    #[command(name = "custom")]
    Custom(RunArgs),
}

#[derive(Args, Debug)]
struct RunArgs {
    /// JSON file whose keys override the experiment defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "results")]
    out: PathBuf,
    /// Worker threads (default: all cores).
    #[arg(long)]
    workers: Option<usize>,
    /// Fixed number of snapshots per point.
    #[arg(long, conflicts_with_all = ["epsilon", "delta"])]
    shadow_budget: Option<usize>,
    /// Planner accuracy, relative to T_0.
    #[arg(long)]
    epsilon: Option<f64>,
    /// Planner failure probability.
    #[arg(long)]
    delta: Option<f64>,
}

impl Command {
    fn split(self) -> (Experiment, RunArgs) {
        match self {
            Command::Fig2a(a) => (Experiment::Fig2a, a),
            Command::Fig2b(a) => (Experiment::Fig2b, a),
            Command::Fig2c(a) => (Experiment::Fig2c, a),
            Command::Fig3a(a) => (Experiment::Fig3a, a),
            Command::Fig3b(a) => (Experiment::Fig3b, a),
            Command::Fig3c(a) => (Experiment::Fig3c, a),
            Command::FigS3(a) => (Experiment::FigS3, a),
            Command::Custom(a) => (Experiment::Custom, a),
        }
    }
}

fn load_config(experiment: Experiment, args: &RunArgs) -> Result<ExperimentConfig> {
    let mut overrides = match &args.config {
        Some(path) => serde_json::from_str::<Value>(&fs::read_to_string(path)?)
            .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?,
        None => json!({}),
    };
    let Value::Object(map) = &mut overrides else {
        return Err(Error::Validation("config must be a JSON object".into()));
    };
    if let Some(seed) = args.seed {
        map.insert("seed".into(), json!(seed));
    }
    if let Some(w) = args.workers {
        map.insert("workers".into(), json!(w));
    }
    let budget = match (args.shadow_budget, args.epsilon, args.delta) {
        (Some(m), _, _) => Some(ShadowBudget::Fixed { m }),
        (None, Some(epsilon), delta) => Some(ShadowBudget::Planner { epsilon, delta: delta.unwrap_or(0.1) }),
        (None, None, Some(_)) => return Err(Error::Validation("--delta needs --epsilon".into())),
        (None, None, None) => None,
    };
    if let Some(b) = budget {
        map.insert("budget".into(), serde_json::to_value(b).map_err(|e| Error::Format(e.to_string()))?);
    }
    ExperimentConfig::from_json(experiment, &overrides)
}

fn execute(experiment: Experiment, args: RunArgs) -> Result<Value> {
    let config = load_config(experiment, &args)?;
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(w) = config.workers {
        pool = pool.num_threads(w);
    }
    let pool = pool.build().map_err(|e| Error::Resource(e.to_string()))?;
    let record = pool.install(|| run(&config))?;
    let (csv, meta) = record.save(&args.out)?;
    Ok(json!({ "status": "ok", "rows": record.rows.len(), "csv": csv, "meta": meta }))
}

fn fail(kind: &str, message: String) -> ExitCode {
    eprintln!("{}", json!({ "error": { "kind": kind, "message": message } }));
    ExitCode::FAILURE
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => return fail("usage", e.to_string()),
    };
    let (experiment, args) = cli.command.split();
    match execute(experiment, args) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => fail(e.kind(), e.to_string()),
    }
}
