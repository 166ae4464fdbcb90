mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use readscale_core::{Error, ErrorClass};

use crate::commands::Run;
use crate::config::{resolve, Config};

#[derive(Parser)]
#[command(name = "readscale", version, about = "Scaling analyses of language-model vectors against human reading data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Apply exclusions and partition the configured dataset.
    Preprocess(RunArgs),
    /// Score every configured bundle on the held-out data.
    Evaluate(RunArgs),
    /// Score trained bundles against the residuals of their untrained pairs.
    Residualize(RunArgs),
    /// Score, fit scaling lines with permutation tests, and plot.
    Scaling(RunArgs),
    /// Write a synthetic corpus, bundle pairs, and a pipeline config.
    Synth(RunArgs),
}

#[derive(clap::Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config's `seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the config's `workers`.
    #[arg(long)]
    workers: Option<usize>,
    /// Overrides the config's `output_dir`.
    #[arg(long)]
    output_dir: Option<PathBuf>,
}

fn setup(args: &RunArgs) -> readscale_core::Result<Run> {
    let (mut cfg, base) = Config::load(&args.config)?;
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(w) = args.workers {
        cfg.workers = w;
    }
    let out = match (&args.output_dir, &cfg.output_dir) {
        (Some(o), _) => o.clone(),
        (None, Some(o)) => resolve(&base, o),
        (None, None) => PathBuf::from("readscale-out"),
    };
    cfg.validate()?;
    if cfg.workers > 0 {
        // Fails only if a pool already exists, which cannot happen here.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(cfg.workers).build_global();
    }
    Ok(Run { cfg, base, out })
}

fn exit_code(e: &Error) -> u8 {
    match e.class() {
        ErrorClass::Config => 2,
        ErrorClass::Data => 3,
        ErrorClass::Numerical => 4,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let (args, f): (&RunArgs, fn(&Run) -> readscale_core::Result<()>) = match &cli.command {
        Command::Preprocess(a) => (a, commands::preprocess),
        Command::Evaluate(a) => (a, commands::evaluate),
        Command::Residualize(a) => (a, commands::residualize),
        Command::Scaling(a) => (a, commands::scaling),
        Command::Synth(a) => (a, commands::synth),
    };
    match setup(args).and_then(|run| f(&run)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
