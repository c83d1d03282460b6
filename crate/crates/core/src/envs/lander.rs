use rand::Rng;
use serde::{Deserialize, Serialize};

/// Planar rigid-body lander, state `(p_x, p_y, v_x, v_y, psi, psi_dot)`.
///
/// Actions: 0 no-op, 1 left thruster, 2 main engine, 3 right thruster.
/// The main engine pushes along the body axis `(-sin psi, cos psi)`; side
/// thrusters push along the body x-axis and spin the hull.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LanderParams {
    pub dt: f64,
    pub gravity: f64,
    pub main_thrust: f64,
    pub side_thrust: f64,
    pub side_angular: f64,
    pub spawn_height: f64,
    pub reset_noise: f64,
    pub episode_len: usize,
    /// Touchdown counts as soft below this speed and tilt.
    pub land_speed: f64,
    pub land_angle: f64,
    pub land_reward: f64,
    pub crash_reward: f64,
}

impl Default for LanderParams {
    fn default() -> Self {
        LanderParams {
            dt: 0.05,
            gravity: 1.0,
            main_thrust: 1.8,
            side_thrust: 0.6,
            side_angular: 1.2,
            spawn_height: 1.4,
            reset_noise: 0.05,
            episode_len: 500,
            land_speed: 0.1,
            land_angle: 0.1,
            land_reward: 100.0,
            crash_reward: -100.0,
        }
    }
}

impl LanderParams {
    pub(crate) fn initial_state(&self, rng: &mut impl Rng) -> Vec<f64> {
        let n = self.reset_noise;
        let vx = rng.random_range(-n..=n);
        let vy = rng.random_range(-n..=n);
        vec![0.0, self.spawn_height, vx, vy, 0.0, 0.0]
    }

    pub(crate) fn step(&self, s: &[f64], action: usize) -> Vec<f64> {
        let psi = s[4];
        let (sin, cos) = psi.sin_cos();
        let main = if action == 2 { self.main_thrust } else { 0.0 };
        // left fires +spin / -lateral, right the opposite
        let side = match action {
            1 => -1.0,
            3 => 1.0,
            _ => 0.0,
        };
        let ax = -sin * main + side * self.side_thrust * cos;
        let ay = -self.gravity + cos * main + side * self.side_thrust * sin;
        let alpha = -side * self.side_angular;
        let vx = s[2] + self.dt * ax;
        let vy = s[3] + self.dt * ay;
        let omega = s[5] + self.dt * alpha;
        vec![s[0] + self.dt * vx, s[1] + self.dt * vy, vx, vy, psi + self.dt * omega, omega]
    }

    pub(crate) fn is_terminal(&self, s: &[f64]) -> bool {
        s[1] <= 0.0
    }

    pub fn is_soft_touchdown(&self, s: &[f64]) -> bool {
        s[2].hypot(s[3]) < self.land_speed && s[4].abs() < self.land_angle
    }

    pub(crate) fn base_reward(&self, next: &[f64]) -> f64 {
        if !self.is_terminal(next) {
            0.0
        } else if self.is_soft_touchdown(next) {
            self.land_reward
        } else {
            self.crash_reward
        }
    }
}
