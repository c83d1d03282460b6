use crate::envs::label;
use crate::twtl::{windowed_rewards, ObservationWord, SpecFile, TwtlError};

/// Task-level view of one finished episode.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeScore {
    /// Concrete-time reward per transition.
    pub task_rewards: Vec<f64>,
    /// Whether the episode word satisfies the spec from time 0.
    pub satisfied: bool,
    /// Robustness of the episode word (may be infinite).
    pub robustness: f64,
}

/// Score an episode with `states.len() - 1` transitions against `spec`.
///
/// Terminal states are absorbing: a terminated episode is extended with copies
/// of its last observation. The window reward `r_t` (for `o_{t, t+H}`) is
/// credited to the transition that completes the window, or to the last
/// transition when the window reaches into the padding.
pub fn score_episode(states: &[Vec<f64>], terminated: bool, spec: &SpecFile) -> Result<EpisodeScore, TwtlError> {
    let h = spec.time_horizon();
    let transitions = states.len().saturating_sub(1);
    let mut word: Vec<Vec<f64>> = states.iter().map(|s| label(s)).collect();
    let last = word.last().cloned().ok_or(TwtlError::EmptyWord)?;
    let target = if terminated { word.len() + h } else { word.len().max(h + 1) };
    word.resize(target, last);
    let word = ObservationWord::new(0, word)?;
    let windows = windowed_rewards(&word, spec.formula(), spec)?;
    let mut task_rewards = vec![0.0; transitions];
    // a truncated episode only earns rewards for windows it actually realized
    let realized = if terminated { transitions } else { states.len().saturating_sub(h).min(transitions) };
    for (t, r) in windows.iter().enumerate().take(realized) {
        if *r == 1 {
            let j = (t + h).clamp(1, transitions) - 1;
            task_rewards[j] += 1.0;
        }
    }
    let satisfied = windows.first().is_some_and(|r| *r == 1);
    let robustness = spec.robustness(&word.truncated(h + 1)?)?.value();
    Ok(EpisodeScore { task_rewards, satisfied, robustness })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::twtl::parse_spec;

    fn spec() -> SpecFile {
        parse_spec("obs_dim 1\npred up := o[0]\nformula := H^2 up\n").unwrap()
    }

    #[test]
    fn rewards_credit_the_completing_transition() {
        let states: Vec<Vec<f64>> = [1.0, 1.0, 1.0, 1.0, -1.0, 1.0].iter().map(|v| vec![*v]).collect();
        let s = score_episode(&states, false, &spec()).unwrap();
        // windows starting at 0 and 1 hold; they complete at states 2 and 3
        assert_eq!(s.task_rewards, vec![0.0, 1.0, 1.0, 0.0, 0.0]);
        assert!(s.satisfied);
        assert_eq!(s.robustness, 1.0);
    }

    #[test]
    fn terminated_episodes_are_padded() {
        let states = vec![vec![0.5], vec![0.5]];
        let s = score_episode(&states, true, &spec()).unwrap();
        assert!(s.satisfied);
        assert_eq!(s.task_rewards, vec![1.0]);
        let t = score_episode(&states, false, &spec()).unwrap();
        assert_eq!(t.task_rewards, vec![0.0]);
    }
}
