//! Tabular check that potential-based shaping keeps the optimal policy.

use rand::Rng;
use thiserror::Error;

use crate::ppo::ShapingForm;

pub const VI_TOL: f64 = 1e-10;
pub const TIE_TOL: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum MdpError {
    #[error("transition row ({state}, {action}) sums to {sum}")]
    NotStochastic { state: usize, action: usize, sum: f64 },
    #[error("table has {found} entries, expected {expected}")]
    Shape { expected: usize, found: usize },
    #[error("non-finite reward or probability")]
    NonFinite,
    #[error("discount must lie in [0, 1), got {0}")]
    Discount(f64),
}

/// Finite MDP with rewards on `(s, a, s')`.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularMdp {
    states: usize,
    actions: usize,
    // p[(s * A + a) * S + s']
    p: Vec<f64>,
    r: Vec<f64>,
    gamma: f64,
}

impl TabularMdp {
    pub fn new(states: usize, actions: usize, p: Vec<f64>, r: Vec<f64>, gamma: f64) -> Result<Self, MdpError> {
        let n = states * actions * states;
        for t in [&p, &r] {
            if t.len() != n {
                return Err(MdpError::Shape { expected: n, found: t.len() });
            }
        }
        if p.iter().chain(&r).any(|v| !v.is_finite()) || p.iter().any(|v| *v < 0.0) {
            return Err(MdpError::NonFinite);
        }
        if !(0.0..1.0).contains(&gamma) {
            return Err(MdpError::Discount(gamma));
        }
        for s in 0..states {
            for a in 0..actions {
                let sum: f64 = p[(s * actions + a) * states..][..states].iter().sum();
                if (sum - 1.0).abs() > 1e-12 {
                    return Err(MdpError::NotStochastic { state: s, action: a, sum });
                }
            }
        }
        Ok(TabularMdp { states, actions, p, r, gamma })
    }

    pub fn states(&self) -> usize {
        self.states
    }

    pub fn actions(&self) -> usize {
        self.actions
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    fn idx(&self, s: usize, a: usize, s2: usize) -> usize {
        (s * self.actions + a) * self.states + s2
    }

    pub fn prob(&self, s: usize, a: usize, s2: usize) -> f64 {
        self.p[self.idx(s, a, s2)]
    }

    pub fn reward(&self, s: usize, a: usize, s2: usize) -> f64 {
        self.r[self.idx(s, a, s2)]
    }

    /// Same dynamics with `r'(s, a, s') = r + bonus(s, s')`.
    pub fn reshaped(&self, bonus: impl Fn(usize, usize) -> f64) -> TabularMdp {
        let mut out = self.clone();
        for s in 0..self.states {
            for a in 0..self.actions {
                for s2 in 0..self.states {
                    let i = self.idx(s, a, s2);
                    out.r[i] += bonus(s, s2);
                }
            }
        }
        out
    }

    fn q(&self, v: &[f64], s: usize, a: usize) -> f64 {
        (0..self.states)
            .map(|s2| {
                let i = self.idx(s, a, s2);
                self.p[i] * (self.r[i] + self.gamma * v[s2])
            })
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub values: Vec<f64>,
    pub q: Vec<Vec<f64>>,
    /// Actions within [`TIE_TOL`] of the best Q-value, per state.
    pub greedy: Vec<Vec<usize>>,
    pub iterations: usize,
    pub residual: f64,
}

/// Value iteration until the sup-norm Bellman residual is at most `tol * (1 - gamma)`,
/// which bounds the distance to the fixed point by `gamma * tol`.
pub fn value_iteration(mdp: &TabularMdp, tol: f64) -> Solution {
    let target = tol * (1.0 - mdp.gamma);
    let mut v = vec![0.0; mdp.states];
    let mut iterations = 0;
    let residual = loop {
        let next: Vec<f64> = (0..mdp.states)
            .map(|s| (0..mdp.actions).map(|a| mdp.q(&v, s, a)).fold(f64::NEG_INFINITY, f64::max))
            .collect();
        let res = next.iter().zip(&v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        v = next;
        iterations += 1;
        if res <= target {
            break res;
        }
    };
    let q: Vec<Vec<f64>> = (0..mdp.states).map(|s| (0..mdp.actions).map(|a| mdp.q(&v, s, a)).collect()).collect();
    let greedy = q
        .iter()
        .map(|row| {
            let best = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            (0..row.len()).filter(|a| row[*a] >= best - TIE_TOL).collect()
        })
        .collect();
    Solution { values: v, q, greedy, iterations, residual }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShapingReport {
    /// Greedy action sets agree in every state.
    pub argmax_equal: bool,
    pub mismatched_states: Vec<usize>,
    /// `max_s |V_shaped(s) - (V(s) - phi(s))|`.
    pub max_shift_error: f64,
    pub original: Solution,
    pub shaped: Solution,
}

/// Solve the MDP with and without shaping by `phi` and compare greedy sets.
///
/// Potential form adds `gamma * phi(s') - phi(s)`; the reversed form
/// adds `kappa * phi(s) - phi(s')`.
pub fn verify_shaping(mdp: &TabularMdp, phi: &[f64], form: ShapingForm, kappa: f64) -> ShapingReport {
    assert_eq!(phi.len(), mdp.states, "one potential per state");
    let gamma = mdp.gamma;
    let shaped_mdp = mdp.reshaped(|s, s2| crate::ppo::shaping_increment(phi[s], phi[s2], gamma, kappa, form));
    let original = value_iteration(mdp, VI_TOL);
    let shaped = value_iteration(&shaped_mdp, VI_TOL);
    let mismatched_states: Vec<usize> = (0..mdp.states).filter(|s| original.greedy[*s] != shaped.greedy[*s]).collect();
    let max_shift_error =
        (0..mdp.states).map(|s| (shaped.values[s] - (original.values[s] - phi[s])).abs()).fold(0.0, f64::max);
    ShapingReport { argmax_equal: mismatched_states.is_empty(), mismatched_states, max_shift_error, original, shaped }
}

/// `n x n` grid, actions up/down/left/right. The intended move happens with
/// probability `1 - slip`; otherwise one of the other three moves is taken
/// uniformly. Walls keep the agent in place. Entering the goal (bottom-right)
/// pays 1; the goal is absorbing with zero reward.
pub fn gridworld(n: usize, slip: f64, gamma: f64) -> TabularMdp {
    let s_count = n * n;
    let goal = s_count - 1;
    let a_count = 4;
    let mut p = vec![0.0; s_count * a_count * s_count];
    let mut r = vec![0.0; s_count * a_count * s_count];
    let moves: [(i64, i64); 4] = [(-1, 0), (1, 0), (0, -1), (0, 1)];
    let target = |s: usize, m: usize| {
        let (row, col) = ((s / n) as i64, (s % n) as i64);
        let (nr, nc) = (row + moves[m].0, col + moves[m].1);
        if nr < 0 || nc < 0 || nr >= n as i64 || nc >= n as i64 {
            s
        } else {
            (nr as usize) * n + nc as usize
        }
    };
    for s in 0..s_count {
        for a in 0..a_count {
            let base = (s * a_count + a) * s_count;
            if s == goal {
                p[base + goal] = 1.0;
                continue;
            }
            for m in 0..a_count {
                let pr = if m == a { 1.0 - slip } else { slip / 3.0 };
                let s2 = target(s, m);
                p[base + s2] += pr;
                if s2 == goal {
                    r[base + s2] = 1.0;
                }
            }
        }
    }
    TabularMdp::new(s_count, a_count, p, r, gamma).expect("gridworld tables are well formed")
}

/// The 5x5, slip 0.1, gamma 0.95 gridworld used for shaping checks.
pub fn default_gridworld() -> TabularMdp {
    gridworld(5, 0.1, 0.95)
}

/// Outcome of several random-potential trials.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialSummary {
    pub trials: usize,
    pub argmax_passed: usize,
    pub worst_shift_error: f64,
}

/// Draw `trials` potentials uniformly from `[-scale, scale]` and verify each.
pub fn random_trials(
    mdp: &TabularMdp,
    trials: usize,
    scale: f64,
    form: ShapingForm,
    kappa: f64,
    rng: &mut impl Rng,
) -> TrialSummary {
    let mut passed = 0;
    let mut worst: f64 = 0.0;
    for _ in 0..trials {
        let phi: Vec<f64> = (0..mdp.states()).map(|_| rng.random_range(-scale..=scale)).collect();
        let rep = verify_shaping(mdp, &phi, form, kappa);
        passed += usize::from(rep.argmax_equal);
        worst = worst.max(rep.max_shift_error);
    }
    TrialSummary { trials, argmax_passed: passed, worst_shift_error: worst }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn single_state_geometric_series() {
        let mdp = TabularMdp::new(1, 1, vec![1.0], vec![1.0], 0.5).unwrap();
        let sol = value_iteration(&mdp, VI_TOL);
        assert!((sol.values[0] - 2.0).abs() < 1e-10);
    }

    #[test]
    fn zero_reward_all_actions_tie() {
        let mut flat = gridworld(3, 0.1, 0.9);
        flat.r.iter_mut().for_each(|v| *v = 0.0);
        let sol = value_iteration(&flat, VI_TOL);
        assert!(sol.values.iter().all(|v| *v == 0.0));
        assert!(sol.greedy.iter().all(|g| g.len() == 4));
    }

    #[test]
    fn three_state_chain_by_hand() {
        // 0 -> 1 -> 2 -> sink, reward 1 when leaving 2
        let n = 4;
        let mut p = vec![0.0; n * n];
        let mut r = vec![0.0; n * n];
        for s in 0..n {
            let s2 = (s + 1).min(n - 1);
            p[s * n + s2] = 1.0;
        }
        r[2 * n + 3] = 1.0;
        let mdp = TabularMdp::new(n, 1, p, r, 0.9).unwrap();
        let v = value_iteration(&mdp, VI_TOL).values;
        for (got, want) in v.iter().zip([0.81, 0.9, 1.0, 0.0]) {
            assert!((got - want).abs() < 1e-10, "{v:?}");
        }
    }

    #[test]
    fn validation() {
        assert!(matches!(
            TabularMdp::new(1, 1, vec![0.5], vec![0.0], 0.9),
            Err(MdpError::NotStochastic { .. })
        ));
        assert!(matches!(TabularMdp::new(1, 1, vec![1.0], vec![0.0], 1.0), Err(MdpError::Discount(_))));
        assert!(matches!(TabularMdp::new(1, 1, vec![1.0], vec![f64::NAN], 0.5), Err(MdpError::NonFinite)));
    }

    #[test]
    fn zero_and_constant_potentials() {
        let g = default_gridworld();
        let zero = verify_shaping(&g, &[0.0; 25], ShapingForm::Potential, 0.99);
        assert!(zero.argmax_equal);
        assert_eq!(zero.original.values, zero.shaped.values);
        let c = verify_shaping(&g, &[3.0; 25], ShapingForm::Potential, 0.99);
        assert!(c.argmax_equal);
        assert!(c.max_shift_error < 1e-8);
        for (o, s) in c.original.values.iter().zip(&c.shaped.values) {
            assert!((o - s - 3.0).abs() < 1e-8);
        }
    }

    #[test]
    fn random_potentials_keep_the_greedy_policy() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let s = random_trials(&default_gridworld(), 10, 1.0, ShapingForm::Potential, 0.99, &mut rng);
        assert_eq!(s.argmax_passed, 10);
        assert!(s.worst_shift_error < 1e-8);
    }
}
