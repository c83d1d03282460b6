use super::episode::score_episode;
use super::PpoError;
use crate::envs::{rollout, Controller, EnvConfig};
use crate::policy::{CategoricalPolicy, HybridPolicy};
use crate::seed::indexed;
use crate::twtl::SpecFile;

impl Controller for CategoricalPolicy {
    fn act(&mut self, state: &[f64]) -> usize {
        self.greedy(state).expect("policy input dimension matches the environment")
    }
}

impl Controller for HybridPolicy {
    fn act(&mut self, state: &[f64]) -> usize {
        self.greedy(state).expect("policy input dimension matches the environment")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub episodes: usize,
    /// Mean and population std of the environment (base) return.
    pub mean_return: f64,
    pub std_return: f64,
    /// Mean number of satisfied windows per episode.
    pub mean_task_return: f64,
    pub satisfaction_rate: f64,
    /// Mean robustness, clamped to `[-r_max, r_max]`.
    pub robustness_mean: f64,
}

/// Roll out `controller` on `episodes` resets derived from `seed`.
pub fn evaluate(
    controller: &mut dyn Controller,
    env: &EnvConfig,
    spec: &SpecFile,
    episodes: usize,
    seed: u64,
    r_max: f64,
) -> Result<EvalReport, PpoError> {
    if episodes == 0 {
        return Err(PpoError::Config("evaluation needs at least one episode".into()));
    }
    let mut returns = Vec::with_capacity(episodes);
    let (mut task, mut sat, mut rob) = (0.0, 0usize, 0.0);
    for i in 0..episodes {
        let ep = rollout(env, controller, indexed(seed, i as u64))?;
        let score = score_episode(&ep.states, ep.terminated, spec)?;
        returns.push(ep.total_reward());
        task += score.task_rewards.iter().sum::<f64>();
        sat += usize::from(score.satisfied);
        rob += score.robustness.clamp(-r_max, r_max);
    }
    let n = episodes as f64;
    let mean = returns.iter().sum::<f64>() / n;
    let var = returns.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / n;
    Ok(EvalReport {
        episodes,
        mean_return: mean,
        std_return: var.sqrt(),
        mean_task_return: task / n,
        satisfaction_rate: sat as f64 / n,
        robustness_mean: rob / n,
    })
}
