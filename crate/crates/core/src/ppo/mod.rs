//! Accelerated PPO: rollouts with TWTL-shaped rewards, GAE, clipped updates of
//! the hybrid policy, plus behavior cloning, degradation and evaluation.

mod advantage;
mod episode;
mod eval;
mod offline;
mod train;

pub use advantage::{clip_bound, clipped_objective, gae, normalize, ratio_branch_active, shaping_increment};
pub use episode::{score_episode, EpisodeScore};
pub use eval::{evaluate, EvalReport};
pub use offline::{agreement, behavior_clone, degrade_policy, BcConfig};
pub use train::{appo_train, MetricsRow, Shaper, TrainOutcome, TransitionBatch, METRICS_HEADER};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::envs::EnvError;
use crate::nn::NnError;
use crate::predictor::PredictorError;
use crate::twtl::TwtlError;

#[derive(Debug, Error)]
pub enum PpoError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("non-finite loss at update {update}; diagnostics in {dump}")]
    NonFinite { update: usize, dump: String },
    #[error("empty dataset")]
    EmptyDataset,
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Twtl(#[from] TwtlError),
    #[error(transparent)]
    Predictor(#[from] PredictorError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ShapingForm {
    /// `gamma * phi(x') - phi(x)`.
    #[default]
    Potential,
    /// `kappa * phi(x) - phi(x')`.
    Reversed,
}

impl std::str::FromStr for ShapingForm {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "potential" => Ok(ShapingForm::Potential),
            "reversed" => Ok(ShapingForm::Reversed),
            other => Err(format!("unknown shaping form `{other}` (expected potential or reversed)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PpoConfig {
    pub clip: f64,
    pub gamma: f64,
    pub lambda: f64,
    pub kappa: f64,
    pub epochs: usize,
    pub minibatch: usize,
    /// Learning rate of the online branch and mixing weight.
    pub lr: f64,
    pub value_lr: f64,
    /// Minimum environment steps per rollout; episodes are always completed.
    pub steps_per_rollout: usize,
    pub total_steps: usize,
    pub shaping_form: ShapingForm,
    pub shaping_scale: f64,
    /// Clamp for infinite robustness values.
    pub r_max: f64,
    /// Weight of the per-step concrete-time reward in the training reward.
    pub task_reward_scale: f64,
    pub normalize_advantages: bool,
    pub entropy_coef: f64,
    pub value_coef: f64,
    pub max_grad_norm: f64,
    /// Linear lower bound on alpha over training, from start to end (0 disables).
    pub alpha_floor_start: f64,
    pub alpha_floor_end: f64,
    pub hidden: Vec<usize>,
    /// States sampled from each rollout for the total-variation diagnostic.
    pub tv_states: usize,
}

impl Default for PpoConfig {
    fn default() -> Self {
        PpoConfig {
            clip: 0.2,
            gamma: 0.99,
            lambda: 0.95,
            kappa: 0.99,
            epochs: 10,
            minibatch: 64,
            lr: 3e-4,
            value_lr: 1e-3,
            steps_per_rollout: 2048,
            total_steps: 100_000,
            shaping_form: ShapingForm::Potential,
            shaping_scale: 1.0,
            r_max: 100.0,
            task_reward_scale: 1.0,
            normalize_advantages: true,
            entropy_coef: 0.0,
            value_coef: 0.5,
            max_grad_norm: 0.5,
            alpha_floor_start: 0.0,
            alpha_floor_end: 0.0,
            hidden: crate::policy::DEFAULT_HIDDEN.to_vec(),
            tv_states: 256,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<(), PpoError> {
        let open01 = |v: f64| v > 0.0 && v < 1.0;
        let err = |m: &str| Err(PpoError::Config(m.to_string()));
        if !open01(self.clip) {
            return err("clip must lie in (0, 1)");
        }
        if !open01(self.gamma) {
            return err("gamma must lie in (0, 1)");
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return err("lambda must lie in [0, 1]");
        }
        if !open01(self.kappa) {
            return err("kappa must lie in (0, 1)");
        }
        if self.epochs == 0 || self.minibatch == 0 || self.steps_per_rollout == 0 {
            return err("epochs, minibatch and steps_per_rollout must be positive");
        }
        let nonneg = [
            self.lr,
            self.value_lr,
            self.shaping_scale,
            self.task_reward_scale,
            self.entropy_coef,
            self.value_coef,
            self.max_grad_norm,
        ];
        if nonneg.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return err("learning rates, scales and coefficients must be finite and non-negative");
        }
        if !(self.r_max.is_finite() && self.r_max > 0.0) {
            return err("r_max must be finite and positive");
        }
        if !(0.0..=1.0).contains(&self.alpha_floor_start) || !(0.0..=1.0).contains(&self.alpha_floor_end) {
            return err("alpha floor bounds must lie in [0, 1]");
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return err("hidden sizes must be non-empty and positive");
        }
        Ok(())
    }
}
