use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use affordplan::harness::{self, AffordanceChoice, Experiment, ExperimentConfig, Method, WorldChoice};

#[derive(Parser)]
#[command(version, about = "Planning experiments with affordance-restricted world models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Search quality: full versus affordance-restricted search.
    Table1(RunArgs),
    /// Online execution: steps to completion and reward.
    Table2(RunArgs),
    /// Success against affordance accuracy with a perfect world model.
    Fig3(RunArgs),
    /// Binary-query world-model extraction bounds.
    VerifyT1(RunArgs),
    /// Adaptive intent sampler restart bound.
    VerifyT2(RunArgs),
    /// Mixture-component coverage of the corrected sampler.
    LemmaA1(RunArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelArg {
    Oracle,
    Noisy,
    Llm,
}

#[derive(Clone, Copy, ValueEnum)]
enum AffordanceArg {
    None,
    Oracle,
    Noisy,
    Llm,
}

#[derive(Args)]
struct RunArgs {
    /// TOML experiment config; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    blocks: Option<usize>,
    /// A count (`20`), a range (`5..10`) or a list (`1,4,9`).
    #[arg(long)]
    seeds: Option<String>,
    #[arg(long, value_enum)]
    model: Option<ModelArg>,
    /// Run a single row with this affordance source instead of the default rows.
    #[arg(long, value_enum)]
    affordance: Option<AffordanceArg>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    master_seed: Option<u64>,
    /// Serve llm completions from a recorded transcript.
    #[arg(long)]
    replay: Option<PathBuf>,
}

fn parse_seeds(text: &str) -> Result<Vec<u64>> {
    let text = text.trim();
    if let Some((a, b)) = text.split_once("..") {
        let (a, b): (u64, u64) = (a.trim().parse()?, b.trim().parse()?);
        if a >= b {
            bail!("empty seed range {text}");
        }
        return Ok((a..b).collect());
    }
    if text.contains(',') {
        return text
            .split(',')
            .map(|s| s.trim().parse().with_context(|| format!("bad seed {s:?}")))
            .collect();
    }
    let count: u64 = text.parse().with_context(|| format!("bad seed count {text:?}"))?;
    Ok((0..count).collect())
}

fn build_config(experiment: Experiment, args: RunArgs) -> Result<ExperimentConfig> {
    let mut config = match &args.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    config.experiment = experiment;
    if let Some(n) = args.blocks {
        config.num_blocks = n;
    }
    if let Some(seeds) = &args.seeds {
        config.seeds = parse_seeds(seeds)?;
    }
    if let Some(model) = args.model {
        config.model = match model {
            ModelArg::Oracle => WorldChoice::Oracle,
            ModelArg::Noisy => WorldChoice::Noisy,
            ModelArg::Llm => WorldChoice::Llm,
        };
        config.methods.clear();
    }
    if let Some(aff) = args.affordance {
        let affordance = match aff {
            AffordanceArg::None => AffordanceChoice::None,
            AffordanceArg::Oracle => AffordanceChoice::Oracle,
            AffordanceArg::Noisy => AffordanceChoice::Noisy,
            AffordanceArg::Llm => AffordanceChoice::Llm,
        };
        config.methods = vec![Method::new(config.model, affordance)];
    }
    if let Some(out) = args.out {
        config.output_dir = out;
    }
    if let Some(seed) = args.master_seed {
        config.master_seed = seed;
    }
    if args.replay.is_some() {
        config.replay = args.replay;
    }
    config.validate()?;
    Ok(config)
}

fn main() -> Result<ExitCode> {
    let cli = Cli::parse();
    let (experiment, args) = match cli.command {
        Command::Table1(a) => (Experiment::Table1, a),
        Command::Table2(a) => (Experiment::Table2, a),
        Command::Fig3(a) => (Experiment::Fig3Sweep, a),
        Command::VerifyT1(a) => (Experiment::Theorem1Verify, a),
        Command::VerifyT2(a) => (Experiment::Theorem2Verify, a),
        Command::LemmaA1(a) => (Experiment::LemmaA1Verify, a),
    };
    let config = build_config(experiment, args)?;
    let outcome = harness::run(&config)?;

    if let Some(csv) = &outcome.aggregate_csv {
        print!("{csv}");
    }
    if experiment.is_verifier() {
        let failed = outcome.verify.iter().filter(|r| !r.passed()).count();
        println!(
            "{}: {} checks, {} failed",
            experiment.name(),
            outcome.verify.len(),
            failed
        );
    }
    eprintln!("wrote {}", config.output_dir.display());
    Ok(if outcome.passed {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}
