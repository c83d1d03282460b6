use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::envs::{rollout, EnvConfig, EnvKind, ScriptedController};
use crate::ppo::score_episode;
use crate::predictor::{DemonstrationSet, Trajectory};
use crate::seed::indexed;
use crate::twtl::SpecFile;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ControllerKind {
    Expert,
    Random,
}

impl std::str::FromStr for ControllerKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "expert" => Ok(ControllerKind::Expert),
            "random" => Ok(ControllerKind::Random),
            other => Err(format!("unknown controller `{other}` (expected expert or random)")),
        }
    }
}

/// Quality of a generated demonstration set.
#[derive(Debug, Clone, PartialEq)]
pub struct DemoStats {
    pub episodes: usize,
    /// Fraction of episodes whose word satisfies the spec.
    pub satisfaction_rate: f64,
    /// Fraction of episodes that earned a positive base reward
    /// (upright hold on the pendulum, soft touchdown on the lander).
    pub success_rate: f64,
    pub mean_return: f64,
}

/// Expert bars: lander satisfaction >= 0.9, pendulum upright hold >= 0.95.
fn check_expert(kind: EnvKind, stats: &DemoStats) -> Result<(), HarnessError> {
    let (value, bar, what) = match kind {
        EnvKind::Lander => (stats.satisfaction_rate, 0.9, "satisfaction rate"),
        EnvKind::Pendulum => (stats.success_rate, 0.95, "upright-hold rate"),
    };
    if value < bar {
        return Err(HarnessError::ExpertQuality(format!("{kind} expert {what} {value} < {bar}")));
    }
    Ok(())
}

/// Roll out a scripted controller; expert runs must clear the quality bar.
pub fn generate_demos(
    env: &EnvConfig,
    spec: &SpecFile,
    controller: ControllerKind,
    episodes: usize,
    seed: u64,
) -> Result<(DemonstrationSet, DemoStats), HarnessError> {
    if episodes == 0 {
        return Err(HarnessError::Config("episodes must be at least 1".into()));
    }
    let mut ctl = match controller {
        ControllerKind::Expert => ScriptedController::expert(env),
        ControllerKind::Random => ScriptedController::random(env, indexed(seed, u64::MAX)),
    };
    let mut trajectories = Vec::with_capacity(episodes);
    let (mut sat, mut success, mut ret) = (0usize, 0usize, 0.0);
    for i in 0..episodes {
        let ep = rollout(env, &mut ctl, indexed(seed, i as u64))?;
        let score = score_episode(&ep.states, ep.terminated, spec)?;
        sat += usize::from(score.satisfied);
        success += usize::from(ep.total_reward() > 0.0);
        ret += ep.total_reward();
        trajectories.push(Trajectory::from((i, &ep)));
    }
    let n = episodes as f64;
    let stats = DemoStats {
        episodes,
        satisfaction_rate: sat as f64 / n,
        success_rate: success as f64 / n,
        mean_return: ret / n,
    };
    if controller == ControllerKind::Expert {
        check_expert(env.kind(), &stats)?;
    }
    Ok((DemonstrationSet::new(env.state_dim(), trajectories)?, stats))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::twtl::parse_spec;

    #[test]
    fn pendulum_expert_demos() {
        let env = EnvConfig::default_for(EnvKind::Pendulum);
        let spec = parse_spec(include_str!("../../../../specs/pendulum.twtl")).unwrap();
        let (demos, stats) = generate_demos(&env, &spec, ControllerKind::Expert, 10, 3).unwrap();
        assert_eq!(demos.len(), 10);
        assert!(stats.success_rate >= 0.95);
        let (again, _) = generate_demos(&env, &spec, ControllerKind::Expert, 10, 3).unwrap();
        assert_eq!(demos, again);
    }

    #[test]
    fn lander_expert_clears_the_bar() {
        let env = EnvConfig::default_for(EnvKind::Lander);
        let spec = parse_spec(include_str!("../../../../specs/lander.twtl")).unwrap();
        let (_, stats) = generate_demos(&env, &spec, ControllerKind::Expert, 60, 0).unwrap();
        assert!(stats.satisfaction_rate >= 0.9, "{stats:?}");
    }

    #[test]
    fn random_lander_rarely_satisfies() {
        let env = EnvConfig::default_for(EnvKind::Lander);
        let spec = parse_spec(include_str!("../../../../specs/lander.twtl")).unwrap();
        let (_, stats) = generate_demos(&env, &spec, ControllerKind::Random, 10, 3).unwrap();
        assert_eq!(stats.satisfaction_rate, 0.0);
    }

    #[test]
    fn quality_bar() {
        let weak = DemoStats { episodes: 10, satisfaction_rate: 0.5, success_rate: 0.5, mean_return: 0.0 };
        assert!(matches!(check_expert(EnvKind::Lander, &weak), Err(HarnessError::ExpertQuality(_))));
        assert!(matches!(check_expert(EnvKind::Pendulum, &weak), Err(HarnessError::ExpertQuality(_))));
        let good = DemoStats { episodes: 10, satisfaction_rate: 0.95, success_rate: 0.96, mean_return: 1.0 };
        assert!(check_expert(EnvKind::Lander, &good).is_ok());
        assert!(check_expert(EnvKind::Pendulum, &good).is_ok());
    }
}
