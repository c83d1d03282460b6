use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{EnvConfig, PendulumParams};

/// A feedback policy over raw states.
pub trait Controller {
    /// Called at the start of every episode.
    fn reset(&mut self) {}
    fn act(&mut self, state: &[f64]) -> usize;
}

/// Hand-written controllers used for demonstrations and baselines.
#[derive(Debug, Clone)]
pub enum ScriptedController {
    /// Switching stabilizer on `s = theta + gain * omega` with a deadband.
    Pendulum { gain: f64, deadband: f64 },
    /// Staged descent keyed on altitude: a slow hover-descent down to
    /// `hover_alt`, then a fast descent, then a soft flare.
    Lander { hover_alt: f64, hover_vy: f64 },
    /// Uniform random actions.
    Random { rng: ChaCha8Rng, num_actions: usize },
}

impl ScriptedController {
    pub fn expert(config: &EnvConfig) -> Self {
        match config {
            EnvConfig::Pendulum(p) => Self::pendulum_expert(p),
            EnvConfig::Lander(_) => ScriptedController::Lander { hover_alt: 1.1, hover_vy: -0.05 },
        }
    }

    fn pendulum_expert(_p: &PendulumParams) -> Self {
        ScriptedController::Pendulum { gain: 0.3, deadband: 0.01 }
    }

    pub fn random(config: &EnvConfig, seed: u64) -> Self {
        ScriptedController::Random { rng: ChaCha8Rng::seed_from_u64(seed), num_actions: config.num_actions() }
    }
}

fn lander_action(s: &[f64], hover_alt: f64, hover_vy: f64) -> usize {
    let (px, py, vx, vy, psi, omega) = (s[0], s[1], s[2], s[3], s[4], s[5]);
    let vy_target = if py > hover_alt {
        hover_vy
    } else if py > 0.15 {
        -0.3
    } else {
        -0.045
    };
    // tilt so the main engine pushes back toward x = 0
    let psi_target = (1.0 * vx + 0.3 * px).clamp(-0.06, 0.06);
    let att_err = psi_target - psi - 0.5 * omega;
    let fall = vy_target - vy;
    if fall > 0.03 {
        2
    } else if att_err > 0.02 {
        1
    } else if att_err < -0.02 {
        3
    } else if fall > 0.0 {
        2
    } else {
        0
    }
}

impl Controller for ScriptedController {
    fn act(&mut self, state: &[f64]) -> usize {
        match self {
            ScriptedController::Pendulum { gain, deadband } => {
                let s = state[0] + *gain * state[1];
                if s > *deadband {
                    0
                } else if s < -*deadband {
                    2
                } else {
                    1
                }
            }
            ScriptedController::Lander { hover_alt, hover_vy } => lander_action(state, *hover_alt, *hover_vy),
            ScriptedController::Random { rng, num_actions } => rng.random_range(0..*num_actions),
        }
    }
}
