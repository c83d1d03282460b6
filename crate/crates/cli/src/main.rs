//! `twtlrl`: spec tooling, data generation, training and the experiment driver.
//!
//! Exit codes: 0 success, 1 domain failure (violation, quality bar, failed
//! check), 2 usage or configuration error.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use twtlrl_core::envs::EnvKind;
use twtlrl_core::harness::{ControllerKind, Variant};
use twtlrl_core::ppo::ShapingForm;

#[derive(Debug, Parser)]
#[command(name = "twtlrl", version, about = "TWTL monitoring and TWTL-shaped hybrid PPO")]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Global {
    /// Master seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output file or directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Run config (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
}

/// Environment and spec selection shared by the data and training commands.
#[derive(Debug, Clone, Args)]
pub struct Setup {
    /// Environment kind; overrides the config.
    #[arg(long)]
    pub env: Option<EnvKind>,
    /// Spec file; overrides the config.
    #[arg(long)]
    pub spec: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse a spec file and print its normalized form.
    Parse { spec: PathBuf },
    /// Print the time horizon of a spec's formula.
    Horizon { spec: PathBuf },
    /// Check a trajectory CSV (`t,o0,o1,...`) against a spec.
    Monitor {
        spec: PathBuf,
        trajectory: PathBuf,
        /// Print `true` or `false` (default).
        #[arg(long, conflicts_with = "robustness")]
        boolean: bool,
        /// Print the robustness degree.
        #[arg(long)]
        robustness: bool,
    },
    /// Roll out a scripted controller and write a demonstration CSV.
    GenDemos {
        #[command(flatten)]
        setup: Setup,
        #[arg(long, default_value = "expert")]
        controller: ControllerKind,
        #[arg(long)]
        episodes: Option<usize>,
    },
    /// Behavior-clone a policy from demonstrations.
    Bc {
        #[arg(long)]
        demos: PathBuf,
    },
    /// Add Gaussian parameter noise to a policy.
    Degrade {
        #[arg(long)]
        policy: PathBuf,
        #[arg(long)]
        sigma: Option<f64>,
    },
    /// Fit the sequence predictor to demonstrations.
    TrainPredictor {
        #[command(flatten)]
        setup: Setup,
        #[arg(long)]
        demos: PathBuf,
    },
    /// Train one variant with APPO into a run directory.
    Train {
        #[command(flatten)]
        setup: Setup,
        #[arg(long, default_value = "shaping+mixing")]
        variant: Variant,
        /// Offline policy file; built from fresh demonstrations when absent.
        #[arg(long)]
        offline: Option<PathBuf>,
        /// Predictor file for shaping variants.
        #[arg(long)]
        predictor: Option<PathBuf>,
        /// Override the training budget.
        #[arg(long)]
        steps: Option<usize>,
    },
    /// Greedy evaluation of a saved policy.
    Eval {
        #[command(flatten)]
        setup: Setup,
        #[arg(long)]
        policy: PathBuf,
        #[arg(long)]
        episodes: Option<usize>,
        /// Exit 1 when the mean return is below this value.
        #[arg(long)]
        min_return: Option<f64>,
    },
    /// Check that shaping preserves greedy actions on a tabular gridworld.
    VerifyShaping {
        #[arg(long, default_value_t = 50)]
        trials: usize,
        #[arg(long, default_value = "potential")]
        form: ShapingForm,
        /// Potentials are drawn from `[-scale, scale]`.
        #[arg(long, default_value_t = 5.0)]
        scale: f64,
    },
    /// Run the variant-by-seed experiment matrix of a config.
    Experiment,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(commands::exit_code(&e))
        }
    }
}
