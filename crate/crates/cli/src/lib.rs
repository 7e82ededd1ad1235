//! Command-line front end for the reconstruction-error vs. saliency
//! experiments: training, evaluation, map rendering and reporting.

pub mod commands;
pub mod config;
pub mod eval;
pub mod render;
pub mod report;
pub mod summary;

use std::path::PathBuf;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

use config::RunConfig;

#[derive(Debug, Parser)]
#[command(name = "reconsal", version, about = "Autoencoder reconstruction error vs. gradient saliency on MNIST")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Run configuration (`key = value` lines). Without it, defaults apply
    /// and dataset files are looked up in the working directory.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory: overrides the run directory for `train` and
    /// `eval`; receives the grids for `render-maps`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl RunArgs {
    /// The configuration with `--seed` and `--out` applied.
    pub fn load(&self) -> Result<RunConfig> {
        let mut config = self.load_without_out()?;
        if let Some(out) = &self.out {
            config.output_dir = out.clone();
        }
        Ok(config)
    }

    fn load_without_out(&self) -> Result<RunConfig> {
        let mut config = match &self.config {
            Some(path) => RunConfig::from_file(path)?,
            None => RunConfig::parse("", std::path::Path::new("."))?,
        };
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        Ok(config)
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train the autoencoder on the normal classes, choosing the learning rate.
    Train(RunArgs),
    /// Compute per-image metrics on the test set.
    Eval {
        #[command(flatten)]
        run: RunArgs,
        /// Checkpoint to evaluate (default: `<output_dir>/model.ckpt`).
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Comma-separated K values, overriding the config.
        #[arg(long, value_delimiter = ',')]
        k: Option<Vec<usize>>,
    },
    /// Write input/reconstruction/saliency/error panels as PGM files.
    RenderMaps {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Comma-separated test-set indices.
        #[arg(long, value_delimiter = ',', required = true)]
        indices: Vec<usize>,
    },
    /// Build a Markdown report from an evaluation CSV.
    Report {
        /// Evaluation CSV.
        csv: PathBuf,
        /// Directory for `report.md` (default: the CSV's directory).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train(args) => {
            let path = commands::cmd_train(&args.load()?)?;
            println!("{}", path.display());
        }
        Command::Eval { run, checkpoint, k } => {
            let mut config = run.load()?;
            if let Some(k) = k {
                config.k_values = k;
                config.validate()?;
            }
            let path = commands::cmd_eval(&config, checkpoint.as_deref())?;
            println!("{}", path.display());
        }
        Command::RenderMaps { run, checkpoint, indices } => {
            let config = run.load_without_out()?;
            let dir = run.out.clone().unwrap_or_else(|| config.output_dir.join("maps"));
            for path in commands::cmd_render_maps(&config, checkpoint.as_deref(), &indices, &dir)? {
                println!("{}", path.display());
            }
        }
        Command::Report { csv, out } => {
            let out = match out {
                Some(dir) => dir.join("report.md"),
                None => csv.with_file_name("report.md"),
            };
            commands::cmd_report(&csv, &out)?;
            println!("{}", out.display());
        }
    }
    Ok(())
}
