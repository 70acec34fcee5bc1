//! `sigdistill`: generate modulation datasets, distill them and evaluate
//! the distilled sets.

mod commands;
mod manifest;
mod plot;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use commands::PlotArgs;
use manifest::{ExperimentManifest, Method, Overrides};

#[derive(Parser)]
#[command(name = "sigdistill", version, about = "Dataset distillation for modulated I/Q signals")]
struct Cli {
    /// Experiment manifest (TOML). Defaults are used when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed applied to generation, splitting, distillation and evaluation.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory, overriding `out_dir` from the manifest.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Replace existing outputs.
    #[arg(long, global = true)]
    force: bool,
    /// Synthetic samples per class.
    #[arg(long, global = true)]
    spc: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the dataset and write train.sigds / test.sigds.
    Gen,
    /// Build a synthetic set from train.sigds.
    Distill {
        /// random, dm or mdm.
        #[arg(long)]
        method: Option<Method>,
        /// Weight of the frequency-domain loss.
        #[arg(long)]
        alpha: Option<f64>,
        /// Step size on the synthetic signals.
        #[arg(long)]
        eta: Option<f64>,
        /// Number of optimization steps.
        #[arg(long)]
        iterations: Option<usize>,
    },
    /// Train classifiers on each synthetic set and report test accuracy.
    Eval,
    /// Distill with several architectures and evaluate on several others.
    Crossarch,
    /// Render time and frequency views of one class to SVG.
    Plot {
        dataset: PathBuf,
        class: String,
        output: PathBuf,
        /// A second dataset drawn below the first, e.g. a synthetic set.
        #[arg(long)]
        compare: Option<PathBuf>,
        /// Records drawn per dataset.
        #[arg(long, default_value_t = 3)]
        records: usize,
    },
}

fn configure_threads() -> Result<()> {
    if let Ok(value) = std::env::var("SIGDISTILL_THREADS") {
        let n: usize = value
            .parse()
            .with_context(|| format!("SIGDISTILL_THREADS must be a positive integer, got {value:?}"))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("cannot configure the thread pool")?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    configure_threads()?;
    let mut overrides = Overrides {
        seed: cli.seed,
        out: cli.out,
        spc: cli.spc,
        ..Overrides::default()
    };
    if let Command::Distill {
        method,
        alpha,
        eta,
        iterations,
    } = &cli.command
    {
        overrides.method = *method;
        overrides.alpha = *alpha;
        overrides.eta = *eta;
        overrides.iterations = *iterations;
    }
    if let Command::Plot {
        dataset,
        class,
        output,
        compare,
        records,
    } = cli.command
    {
        let args = PlotArgs {
            dataset,
            class,
            output,
            compare,
            records,
        };
        return commands::plot(&args, cli.force);
    }
    let manifest = ExperimentManifest::load(cli.config.as_deref(), &overrides)?;
    match cli.command {
        Command::Gen => commands::gen(&manifest, cli.force),
        Command::Distill { .. } => commands::distill(&manifest, cli.force),
        Command::Eval => commands::eval(&manifest, cli.force),
        Command::Crossarch => commands::crossarch(&manifest, cli.force),
        Command::Plot { .. } => unreachable!(),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}
