mod manifest;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use circalloc::datagen::{generate, write_dataset, GenConfig};
use circalloc::engine::EngineConfig;
use circalloc::io::{read_offers, read_orders, read_postcodes, read_weights};
use circalloc::metrics::{run_strategy_suite, Strategy, StrategyRun};
use circalloc::report::{
    emit_reports, emit_run_artifacts, summary_table, write_metrics_json, MetricsReport, ALLOCATIONS_FILE,
    COMPARISON_FILE, DIAGNOSTICS_FILE, METRICS_FILE,
};
use circalloc::solver::{PruneMode, SolverConfig};

use manifest::RunManifest;

/// Exit status when a run finished but some iteration was not solved to optimality.
const EXIT_NOT_OPTIMAL: u8 = 3;

#[derive(Parser)]
#[command(name = "circalloc", version, about = "Allocate surplus supply to demand orders")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a seeded synthetic market (offers.csv, orders.csv, postcodes.csv).
    Generate(GenerateArgs),
    /// Allocate supply to orders under one or all weight strategies.
    Allocate(AllocateArgs),
    /// Same as `allocate --all-strategies`.
    Evaluate(EvaluateArgs),
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    orders: Option<u64>,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    offers: Option<u64>,
}

#[derive(Args)]
struct InputArgs {
    #[arg(long)]
    offers: PathBuf,
    #[arg(long)]
    orders: PathBuf,
    #[arg(long)]
    postcodes: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum PruneArg {
    Union,
    Intersection,
}

#[derive(Args)]
struct EngineArgs {
    #[arg(long, default_value_t = 250, value_parser = clap::value_parser!(u64).range(1..))]
    top_k: u64,
    #[arg(long, default_value_t = 5, value_parser = clap::value_parser!(u32).range(1..))]
    max_iters: u32,
    /// Scenario date for expiry checks and circulation (YYYY-MM-DD).
    #[arg(long, default_value = "2025-10-13", value_parser = parse_date)]
    seed_date: NaiveDate,
    #[arg(long, value_enum, default_value_t = PruneArg::Union)]
    prune_mode: PruneArg,
    #[arg(long, default_value_t = 100_000)]
    node_limit: usize,
}

impl EngineArgs {
    fn config(&self) -> EngineConfig {
        EngineConfig {
            max_iterations: self.max_iters,
            reference_date: self.seed_date,
            solver: SolverConfig {
                top_k: self.top_k as usize,
                prune_mode: match self.prune_mode {
                    PruneArg::Union => PruneMode::Union,
                    PruneArg::Intersection => PruneMode::Intersection,
                },
                node_limit: self.node_limit,
                ..SolverConfig::default()
            },
        }
    }
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct WeightChoice {
    /// JSON file {"price":..,"quantity":..,"expiry":..,"distance":..}.
    #[arg(long)]
    weights: Option<PathBuf>,
    #[arg(long, value_parser = parse_strategy)]
    strategy: Option<Strategy>,
    #[arg(long)]
    all_strategies: bool,
}

#[derive(Args)]
struct AllocateArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    choice: WeightChoice,
    #[command(flatten)]
    engine: EngineArgs,
}

#[derive(Args)]
struct EvaluateArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    engine: EngineArgs,
}

fn parse_date(s: &str) -> Result<NaiveDate, String> {
    NaiveDate::parse_from_str(s, "%Y-%m-%d").map_err(|e| format!("expected YYYY-MM-DD: {e}"))
}

fn parse_strategy(s: &str) -> Result<Strategy, String> {
    s.parse().map_err(|e| {
        let names: Vec<_> = Strategy::ALL.iter().map(|s| s.cli_name()).collect();
        format!("{e}; expected one of {}", names.join(", "))
    })
}

fn cmd_generate(args: &GenerateArgs) -> Result<bool> {
    let defaults = GenConfig::default();
    let config = GenConfig {
        seed: args.seed,
        n_orders: args.orders.map_or(defaults.n_orders, |n| n as usize),
        n_offers: args.offers.map_or(defaults.n_offers, |n| n as usize),
        ..defaults
    };
    let mut manifest = RunManifest::new(serde_json::to_value(&config)?, Some(config.seed));
    let data = manifest.time("generate", || generate(&config))?;
    manifest.time("write", || write_dataset(&args.out, &data))?;
    for file in ["offers.csv", "orders.csv", "postcodes.csv"] {
        manifest.add_artifact(&args.out, file)?;
    }
    manifest.write(&args.out)?;
    println!(
        "wrote {} offers and {} orders to {}",
        data.offers.len(),
        data.orders.len(),
        args.out.display()
    );
    Ok(true)
}

enum Selection {
    Single(StrategyRunSpec),
    All,
}

struct StrategyRunSpec {
    label: String,
    strategy: Option<Strategy>,
    weights: circalloc::Weights,
}

fn run_allocation(input: &InputArgs, engine: &EngineArgs, selection: Selection) -> Result<bool> {
    let config = engine.config();
    let out = &input.out;
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;

    let snapshot = json!({
        "offers": input.offers,
        "orders": input.orders,
        "postcodes": input.postcodes,
        "engine": config,
        "runs": match &selection {
            Selection::Single(spec) => json!([{ "label": spec.label, "weights": spec.weights }]),
            Selection::All => json!(Strategy::ALL
                .iter()
                .map(|s| json!({ "label": s.label(), "weights": s.weights() }))
                .collect::<Vec<_>>()),
        },
    });
    let mut manifest = RunManifest::new(snapshot, None);
    for path in [&input.offers, &input.orders, &input.postcodes] {
        manifest.add_input(path)?;
    }

    let (offers, orders, postcodes) = manifest.time("load", || -> Result<_> {
        Ok((
            read_offers(&input.offers)?,
            read_orders(&input.orders)?,
            read_postcodes(&input.postcodes)?,
        ))
    })?;
    log::info!("loaded {} offers, {} orders", offers.len(), orders.len());

    let runs: Vec<StrategyRun> = match selection {
        Selection::Single(spec) => {
            let run = manifest.time("allocate", || {
                StrategyRun::execute(
                    &spec.label,
                    spec.strategy,
                    spec.weights,
                    &offers,
                    &orders,
                    &postcodes,
                    &config,
                )
            })?;
            manifest.time("report", || -> Result<()> {
                emit_run_artifacts(&run.result, out)?;
                write_metrics_json(&out.join(METRICS_FILE), &MetricsReport::new(std::slice::from_ref(&run)))?;
                Ok(())
            })?;
            for file in [ALLOCATIONS_FILE, DIAGNOSTICS_FILE, METRICS_FILE] {
                manifest.add_artifact(out, file)?;
            }
            vec![run]
        }
        Selection::All => {
            let runs = manifest.time("allocate", || run_strategy_suite(&offers, &orders, &postcodes, &config))?;
            manifest.time("report", || -> Result<()> {
                for run in &runs {
                    let dir = strategy_dir(out, run);
                    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
                    emit_run_artifacts(&run.result, &dir)?;
                }
                emit_reports(&runs, out)?;
                Ok(())
            })?;
            for run in &runs {
                let sub = strategy_subdir(run);
                for file in [ALLOCATIONS_FILE, DIAGNOSTICS_FILE] {
                    manifest.add_artifact(out, &format!("{sub}/{file}"))?;
                }
            }
            for file in [METRICS_FILE, COMPARISON_FILE] {
                manifest.add_artifact(out, file)?;
            }
            runs
        }
    };
    manifest.write(out)?;

    print!("{}", summary_table(&runs));
    let optimal = runs.iter().all(|r| r.result.all_optimal());
    if !optimal {
        log::warn!("some iteration did not reach a proven optimum");
    }
    Ok(optimal)
}

fn strategy_subdir(run: &StrategyRun) -> String {
    run.strategy
        .map_or_else(|| run.label.clone(), |s| s.cli_name().to_string())
}

fn strategy_dir(out: &Path, run: &StrategyRun) -> PathBuf {
    out.join(strategy_subdir(run))
}

fn cmd_allocate(args: &AllocateArgs) -> Result<bool> {
    let selection = if args.choice.all_strategies {
        Selection::All
    } else if let Some(strategy) = args.choice.strategy {
        Selection::Single(StrategyRunSpec {
            label: strategy.label().to_string(),
            strategy: Some(strategy),
            weights: strategy.weights(),
        })
    } else {
        let path = args.choice.weights.as_ref().expect("clap enforces one weight choice");
        Selection::Single(StrategyRunSpec {
            label: "custom".to_string(),
            strategy: None,
            weights: read_weights(path)?,
        })
    };
    run_allocation(&args.input, &args.engine, selection)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("CIRCALLOC_LOG", "warn")).init();
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Generate(args) => cmd_generate(args),
        Command::Allocate(args) => cmd_allocate(args),
        Command::Evaluate(args) => run_allocation(&args.input, &args.engine, Selection::All),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(EXIT_NOT_OPTIMAL),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
