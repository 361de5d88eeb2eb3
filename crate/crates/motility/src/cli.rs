//! Command-line surface. Every flag overrides the matching config entry.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::config::{DataSource, RunConfig};
use crate::error::{Error, Result};
use crate::run;

#[derive(Debug, Parser)]
#[command(name = "motility", version, about = "Learn motility maps with Gaussian branching regression")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// TOML run configuration; defaults to the built-in benchmark.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Model family (phase, geometric, gbr, agbr); repeat to compare several.
    #[arg(long, global = true)]
    pub model: Vec<String>,
    /// Training data files in the canonical layout.
    #[arg(long, global = true, num_args = 1..)]
    pub train: Vec<PathBuf>,
    /// Test data files in the canonical layout.
    #[arg(long, global = true, num_args = 1..)]
    pub test: Vec<PathBuf>,
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate (or re-export) the train and test sets as CSV.
    Synth {
        #[command(flatten)]
        common: Common,
        /// Also write this many points of the two-branch toy variety.
        #[arg(long)]
        variety: Option<usize>,
    },
    /// Fit one model and save it.
    Fit {
        #[command(flatten)]
        common: Common,
    },
    /// Write the training graph points plus ruled-surface synthetic points.
    Augment {
        #[command(flatten)]
        common: Common,
    },
    /// Predict body velocities and trajectories with a saved model.
    Predict {
        #[command(flatten)]
        common: Common,
        /// Model document written by `fit`.
        #[arg(long)]
        model_file: PathBuf,
    },
    /// Fit, predict and score every configured model.
    Evaluate {
        #[command(flatten)]
        common: Common,
    },
    /// Print the loss table of a finished `evaluate` run.
    Report {
        #[command(flatten)]
        common: Common,
    },
}

impl Common {
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if !self.model.is_empty() {
            cfg.models = self.model.clone();
        }
        if !self.train.is_empty() {
            cfg.train = DataSource { derive: cfg.train.derive, layout: cfg.train.layout, ..DataSource::files(self.train.clone()) };
        }
        if !self.test.is_empty() {
            cfg.test = DataSource { derive: cfg.test.derive, layout: cfg.test.layout, ..DataSource::files(self.test.clone()) };
        }
        if let Some(out) = &self.out {
            cfg.out = out.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn list(files: Vec<String>, cfg: &RunConfig) -> String {
    files.iter().map(|f| format!("{}\n", cfg.out.join(f).display())).collect()
}

pub fn execute(cli: Cli) -> Result<String> {
    match cli.command {
        Command::Synth { common, variety } => {
            let cfg = common.resolve()?;
            Ok(list(run::synth(&cfg, variety)?, &cfg))
        }
        Command::Fit { common } => {
            let cfg = common.resolve()?;
            Ok(list(run::fit(&cfg)?, &cfg))
        }
        Command::Augment { common } => {
            let cfg = common.resolve()?;
            Ok(list(run::augment(&cfg)?, &cfg))
        }
        Command::Predict { common, model_file } => {
            let cfg = common.resolve()?;
            Ok(list(run::predict(&cfg, &model_file)?, &cfg))
        }
        Command::Evaluate { common } => {
            let cfg = common.resolve()?;
            run::run_experiment(&cfg)?;
            run::report_table(&cfg.out)
        }
        Command::Report { common } => {
            let cfg = common.resolve()?;
            run::report_table(&cfg.out)
        }
    }
}

/// Exit status for an error: 2 for invalid input, 1 otherwise.
pub fn exit_code(e: &Error) -> u8 {
    if e.is_validation() {
        2
    } else {
        1
    }
}

pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli) {
        Ok(text) => {
            print!("{text}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
