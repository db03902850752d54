use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use difflab::{
    run_convergence_study, run_eval, run_recon_curve, run_sample, run_schedule_dump, run_train,
    ExperimentConfig, HarnessError, HarnessResult,
};

#[derive(Parser)]
#[command(name = "difflab", version, about = "Desk-scale diffusion experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON experiment config (defaults apply when omitted)
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides `output_dir` from the config
    #[arg(long)]
    output_dir: Option<PathBuf>,
    /// Overrides the root seed from the config
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Train the two-headed denoiser and write a checkpoint and loss curve
    Train(Common),
    /// Draw samples with the trained model, or the closed-form oracle if no checkpoint is given
    Sample {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Distances between sample files and a reference set
    Eval {
        #[command(flatten)]
        common: Common,
        /// Sample tensors to score; without any, the configured sweep is run
        #[arg(long)]
        samples: Vec<PathBuf>,
        /// Reference tensor; generated from the dataset when omitted
        #[arg(long)]
        reference: Option<PathBuf>,
        /// Denoiser for the sweep
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Write the schedule tables as CSV
    ScheduleDump(Common),
    /// Direct versus derived reconstruction errors over t
    ReconCurve {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Endpoint error against step count for each integrator on the oracle
    ConvergenceStudy(Common),
}

fn load(common: &Common) -> HarnessResult<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(dir) = &common.output_dir {
        cfg.output_dir = dir.clone();
    }
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn configure_threads() -> HarnessResult<()> {
    let Ok(raw) = std::env::var("DIFFLAB_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| HarnessError::Config(format!("DIFFLAB_THREADS must be a positive integer, got {raw:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| HarnessError::Runtime(e.to_string()))
}

fn run(cli: Cli) -> HarnessResult<()> {
    configure_threads()?;
    let manifest = match &cli.command {
        Command::Train(c) => run_train(&load(c)?)?,
        Command::Sample { common, checkpoint } => run_sample(&load(common)?, checkpoint.as_deref())?,
        Command::Eval {
            common,
            samples,
            reference,
            checkpoint,
        } => run_eval(&load(common)?, samples, reference.as_deref(), checkpoint.as_deref())?,
        Command::ScheduleDump(c) => run_schedule_dump(&load(c)?)?,
        Command::ReconCurve { common, checkpoint } => {
            run_recon_curve(&load(common)?, checkpoint.as_deref())?
        }
        Command::ConvergenceStudy(c) => run_convergence_study(&load(c)?)?,
    };
    for f in &manifest.files {
        println!("{f}");
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("difflab: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
