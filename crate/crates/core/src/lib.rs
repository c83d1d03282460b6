//! TWTL robustness monitoring and robustness-shaped hybrid-policy PPO.

pub mod envs;
pub mod harness;
pub mod nn;
pub mod policy;
pub mod ppo;
pub mod predictor;
pub mod seed;
pub mod shaping;
pub mod twtl;
