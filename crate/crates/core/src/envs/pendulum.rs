use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

/// Inverted pendulum with the angle measured from upright.
///
/// `theta_ddot = (g / l) sin(theta) + u / (m l^2)` with `u` in `{-tau, 0, +tau}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PendulumParams {
    pub dt: f64,
    pub gravity: f64,
    pub length: f64,
    pub mass: f64,
    pub max_torque: f64,
    pub episode_len: usize,
    pub reset_noise: f64,
    /// Episode ends once `|theta|` exceeds this.
    pub fall_angle: f64,
    /// `|theta|` below this counts as upright for the terminal reward.
    pub upright_angle: f64,
    /// Upright steps required at the end of the episode for the terminal reward.
    pub upright_tail: usize,
    pub success_reward: f64,
}

impl Default for PendulumParams {
    fn default() -> Self {
        PendulumParams {
            dt: 0.05,
            gravity: 9.8,
            length: 1.0,
            mass: 1.0,
            max_torque: 2.0,
            episode_len: 200,
            reset_noise: 0.05,
            fall_angle: PI / 2.0,
            upright_angle: 0.05,
            upright_tail: 50,
            success_reward: 1.0,
        }
    }
}

/// Wrap into `(-pi, pi]`.
pub(crate) fn wrap_angle(theta: f64) -> f64 {
    let mut a = theta.rem_euclid(2.0 * PI);
    if a > PI {
        a -= 2.0 * PI;
    }
    a
}

impl PendulumParams {
    pub(crate) fn initial_state(&self, rng: &mut impl Rng) -> Vec<f64> {
        let n = self.reset_noise;
        vec![rng.random_range(-n..=n), rng.random_range(-n..=n)]
    }

    pub fn torque(&self, action: usize) -> f64 {
        (action as f64 - 1.0) * self.max_torque
    }

    pub(crate) fn step(&self, state: &[f64], action: usize) -> Vec<f64> {
        let (theta, omega) = (state[0], state[1]);
        let ml2 = self.mass * self.length * self.length;
        let accel = self.gravity / self.length * theta.sin() + self.torque(action) / ml2;
        let omega = omega + self.dt * accel;
        let theta = wrap_angle(theta + self.dt * omega);
        vec![theta, omega]
    }

    pub(crate) fn is_terminal(&self, state: &[f64]) -> bool {
        state[0].abs() > self.fall_angle
    }

    /// Mechanical energy per unit mass-length, upright potential at `theta = 0`.
    pub fn energy(&self, state: &[f64]) -> f64 {
        let ml2 = self.mass * self.length * self.length;
        0.5 * ml2 * state[1] * state[1] + self.mass * self.gravity * self.length * state[0].cos()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn upright_equilibrium_is_fixed() {
        let p = PendulumParams::default();
        assert_eq!(p.step(&[0.0, 0.0], 1), vec![0.0, 0.0]);
    }

    #[test]
    fn terminates_past_horizontal() {
        let p = PendulumParams::default();
        assert!(p.is_terminal(&[PI / 2.0 + 0.01, 0.0]));
        assert!(!p.is_terminal(&[PI / 2.0 - 0.01, 0.0]));
    }

    #[test]
    fn wrap_stays_in_half_open_interval() {
        assert_eq!(wrap_angle(PI), PI);
        assert!((wrap_angle(-PI) - PI).abs() < 1e-12);
        assert!((wrap_angle(3.0 * PI / 2.0) + PI / 2.0).abs() < 1e-12);
        assert!((wrap_angle(0.3) - 0.3).abs() < 1e-15);
    }

    #[test]
    fn energy_drift_small_at_fine_step() {
        let p = PendulumParams { dt: 0.005, ..Default::default() };
        let mut s = vec![0.3, 0.0];
        let e0 = p.energy(&s);
        let mut worst: f64 = 0.0;
        for _ in 0..1000 {
            s = p.step(&s, 1);
            worst = worst.max((p.energy(&s) - e0).abs());
        }
        let drift = (p.energy(&s) - e0).abs() / 1000.0;
        assert!(drift <= 1e-3, "mean drift per step {drift}");
        // symplectic integrator: bounded oscillation, no secular growth
        assert!(worst < 0.5, "worst deviation {worst}");
    }
}
