//! Experiment plumbing: run configs, demonstration generation and the
//! variant-by-seed training matrix.

mod config;
mod demos;
mod experiment;

pub use config::{
    default_threshold, BcSection, EnvSection, ExperimentSection, PredictorKind, PredictorSection, RunConfig, SpecSection,
    Variant,
};
pub use demos::{generate_demos, ControllerKind, DemoStats};
pub use experiment::{
    moving_average, prepare_offline, run_cell, run_experiment, steps_to_threshold, CellInputs, CellResult, ExperimentReport,
    OfflineArtifacts, VariantSummary, CELLS_HEADER, SUMMARY_HEADER,
};

use thiserror::Error;

use crate::envs::EnvError;
use crate::nn::NnError;
use crate::ppo::PpoError;
use crate::predictor::{DemoError, PredictorError};
use crate::twtl::TwtlError;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config error: {0}")]
    Config(String),
    #[error("expert below quality bar: {0}")]
    ExpertQuality(String),
    #[error(transparent)]
    Twtl(#[from] TwtlError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Demo(#[from] DemoError),
    #[error(transparent)]
    Predictor(#[from] PredictorError),
    #[error(transparent)]
    Ppo(#[from] PpoError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}
