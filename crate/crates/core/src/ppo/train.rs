use std::fs;
use std::io::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::advantage::{clipped_objective, gae, normalize, ratio_branch_active, shaping_increment};
use super::episode::score_episode;
use super::{PpoConfig, PpoError};
use crate::envs::{Env, EnvConfig};
use crate::nn::{clip_grad_norm, Adam};
use crate::policy::{entropy, sample_categorical, tv_distance, HybridPolicy, ValueNet};
use crate::predictor::Predictor;
use crate::seed::{indexed, substream};
use crate::twtl::SpecFile;

pub const METRICS_HEADER: [&str; 11] = [
    "update",
    "steps",
    "mean_return",
    "mean_shaped_return",
    "satisfaction_rate",
    "alpha",
    "policy_loss",
    "value_loss",
    "entropy",
    "tv_distance",
    "robustness_mean",
];

/// One line of `metrics.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub update: usize,
    pub steps: usize,
    /// Mean episode return of base plus task reward.
    pub mean_return: f64,
    /// Same with the shaping term added.
    pub mean_shaped_return: f64,
    pub satisfaction_rate: f64,
    pub alpha: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub tv_distance: f64,
    pub robustness_mean: f64,
}

/// Robustness-based potential computed on predicted observation words.
#[derive(Debug, Clone)]
pub struct Shaper {
    pub predictor: Predictor,
}

impl Shaper {
    /// `clamp(rho(predict(history)), -r_max, r_max)`.
    pub fn potential(&self, history: &[Vec<f64>], spec: &SpecFile, r_max: f64) -> Result<f64, PpoError> {
        let lo = history.len().saturating_sub(self.predictor.window());
        let word = self.predictor.predict(&history[lo..], spec.time_horizon())?;
        Ok(spec.robustness(&word)?.clamped(r_max))
    }
}

/// Flattened transitions of whole episodes.
#[derive(Debug, Clone, Default)]
pub struct TransitionBatch {
    pub states: Vec<Vec<f64>>,
    pub actions: Vec<usize>,
    pub old_log_probs: Vec<f64>,
    pub offline_probs: Vec<Vec<f64>>,
    pub values: Vec<f64>,
    pub next_values: Vec<f64>,
    pub base_rewards: Vec<f64>,
    pub task_rewards: Vec<f64>,
    pub shaping: Vec<f64>,
    pub rewards: Vec<f64>,
    pub ends: Vec<bool>,
    pub entropies: Vec<f64>,
    pub episode_returns: Vec<f64>,
    pub episode_shaped_returns: Vec<f64>,
    pub satisfied: Vec<bool>,
    pub robustness: Vec<f64>,
}

impl TransitionBatch {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }
}

pub struct TrainOutcome {
    pub policy: HybridPolicy,
    pub value: ValueNet,
    pub metrics: Vec<MetricsRow>,
    pub steps: usize,
}

struct Rollouts<'a> {
    env: &'a EnvConfig,
    spec: &'a SpecFile,
    shaper: Option<&'a Shaper>,
    cfg: &'a PpoConfig,
    rng: ChaCha8Rng,
    env_seed: u64,
    episodes: u64,
}

impl Rollouts<'_> {
    fn collect(&mut self, policy: &HybridPolicy, value: &ValueNet, min_steps: usize) -> Result<TransitionBatch, PpoError> {
        let mut b = TransitionBatch::default();
        while b.len() < min_steps {
            self.episode(policy, value, &mut b)?;
        }
        Ok(b)
    }

    fn episode(&mut self, policy: &HybridPolicy, value: &ValueNet, b: &mut TransitionBatch) -> Result<(), PpoError> {
        let cfg = self.cfg;
        let mut env = Env::new(self.env.clone());
        let s0 = env.reset(indexed(self.env_seed, self.episodes));
        self.episodes += 1;
        let mut states = vec![s0];
        let mut potentials = Vec::new();
        if let Some(sh) = self.shaper {
            potentials.push(sh.potential(&states, self.spec, cfg.r_max)?);
        }
        let mut base = Vec::new();
        let mut terminated = false;
        while !env.is_done() {
            let x = env.state().to_vec();
            let cache = policy.forward(&x)?;
            let (a, lp) = sample_categorical(&cache.probs, &mut self.rng);
            let step = env.step(a)?;
            b.entropies.push(entropy(&cache.probs));
            b.values.push(value.value(&x)?);
            b.offline_probs.push(cache.offline_probs().to_vec());
            b.states.push(x);
            b.actions.push(a);
            b.old_log_probs.push(lp);
            base.push(step.base_reward);
            terminated = step.terminated;
            b.next_values.push(if step.terminated { 0.0 } else { value.value(&step.next_state)? });
            states.push(step.next_state);
            if let Some(sh) = self.shaper {
                potentials.push(sh.potential(&states, self.spec, cfg.r_max)?);
            }
        }
        let n = base.len();
        let score = score_episode(&states, terminated, self.spec)?;
        let mut ret = 0.0;
        let mut shaped_ret = 0.0;
        for t in 0..n {
            let task = cfg.task_reward_scale * score.task_rewards[t];
            let f = if self.shaper.is_some() {
                cfg.shaping_scale * shaping_increment(potentials[t], potentials[t + 1], cfg.gamma, cfg.kappa, cfg.shaping_form)
            } else {
                0.0
            };
            ret += base[t] + task;
            shaped_ret += base[t] + task + f;
            b.base_rewards.push(base[t]);
            b.task_rewards.push(task);
            b.shaping.push(f);
            b.rewards.push(base[t] + task + f);
            b.ends.push(t + 1 == n);
        }
        b.episode_returns.push(ret);
        b.episode_shaped_returns.push(shaped_ret);
        b.satisfied.push(score.satisfied);
        b.robustness.push(score.robustness.clamp(-cfg.r_max, cfg.r_max));
        Ok(())
    }
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

struct UpdateStats {
    policy_loss: f64,
    value_loss: f64,
}

#[allow(clippy::too_many_arguments)]
fn update(
    policy: &mut HybridPolicy,
    value: &mut ValueNet,
    popt: &mut Adam,
    vopt: &mut Adam,
    batch: &TransitionBatch,
    adv: &[f64],
    targets: &[f64],
    cfg: &PpoConfig,
    rng: &mut ChaCha8Rng,
) -> Result<UpdateStats, PpoError> {
    let n = batch.len();
    let mut order: Vec<usize> = (0..n).collect();
    let (mut pl_sum, mut vl_sum, mut count) = (0.0, 0.0, 0usize);
    for _ in 0..cfg.epochs {
        order.shuffle(rng);
        for chunk in order.chunks(cfg.minibatch) {
            let m = chunk.len() as f64;
            let mut gp = vec![0.0; policy.trainable().len()];
            let mut gv = vec![0.0; value.params.len()];
            let (mut pl, mut vl) = (0.0, 0.0);
            for &i in chunk {
                let cache = policy.forward_given_offline(&batch.states[i], batch.offline_probs[i].clone())?;
                let a = batch.actions[i];
                let old = batch.old_log_probs[i].exp();
                let ratio = cache.probs[a] / old;
                pl -= clipped_objective(ratio, adv[i], cfg.clip);
                let mut g_probs = vec![0.0; cache.probs.len()];
                if ratio_branch_active(ratio, adv[i], cfg.clip) {
                    g_probs[a] = -adv[i] / old;
                }
                if cfg.entropy_coef > 0.0 {
                    pl -= cfg.entropy_coef * entropy(&cache.probs);
                    for (g, p) in g_probs.iter_mut().zip(&cache.probs) {
                        if *p > 0.0 {
                            *g += cfg.entropy_coef * (p.ln() + 1.0);
                        }
                    }
                }
                g_probs.iter_mut().for_each(|g| *g /= m);
                policy.backward_probs(&cache, &g_probs, &mut gp)?;
                let v = value.value(&batch.states[i])?;
                let err = v - targets[i];
                vl += err * err;
                value.accumulate_grad(&batch.states[i], 2.0 * cfg.value_coef * err / m, &mut gv)?;
            }
            pl /= m;
            vl /= m;
            if !pl.is_finite() || !vl.is_finite() || gp.iter().chain(&gv).any(|g| !g.is_finite()) {
                return Err(PpoError::Config(format!("non-finite loss (policy {pl}, value {vl})")));
            }
            if cfg.max_grad_norm > 0.0 {
                clip_grad_norm(&mut gp, cfg.max_grad_norm);
                clip_grad_norm(&mut gv, cfg.max_grad_norm);
            }
            popt.step(policy.trainable_mut().as_mut_slice(), &gp);
            vopt.step(value.params.as_mut_slice(), &gv);
            pl_sum += pl;
            vl_sum += vl;
            count += 1;
        }
    }
    let c = count.max(1) as f64;
    Ok(UpdateStats { policy_loss: pl_sum / c, value_loss: vl_sum / c })
}

fn tv_sample(states: &[Vec<f64>], k: usize) -> Vec<Vec<f64>> {
    if states.is_empty() || k == 0 {
        return Vec::new();
    }
    let stride = states.len().div_ceil(k);
    states.iter().step_by(stride).cloned().collect()
}

fn dump_diagnostics(dir: &Path, update: usize, policy: &HybridPolicy, batch: &TransitionBatch, msg: &str) -> std::io::Result<String> {
    let path = dir.join("diagnostic.txt");
    let mut f = fs::File::create(&path)?;
    writeln!(f, "update {update}")?;
    writeln!(f, "error {msg}")?;
    writeln!(f, "alpha {:?}", policy.alpha())?;
    writeln!(f, "batch_len {}", batch.len())?;
    let bad = |xs: &[f64]| xs.iter().filter(|v| !v.is_finite()).count();
    writeln!(f, "non_finite rewards {} values {} log_probs {}", bad(&batch.rewards), bad(&batch.values), bad(&batch.old_log_probs))?;
    writeln!(f, "non_finite params {}", bad(policy.trainable().as_slice()))?;
    policy.save(&dir.join("policy_failed.txt")).map_err(std::io::Error::other)?;
    Ok(path.display().to_string())
}

/// Train `policy` with clipped PPO on base + task (+ shaping) rewards.
///
/// With `run_dir` set, writes `metrics.csv` (one row per update),
/// `policy_best.txt` whenever the mean return improves, and `policy.txt`
/// and `value.txt` at the end.
pub fn appo_train(
    mut policy: HybridPolicy,
    env: &EnvConfig,
    spec: &SpecFile,
    shaper: Option<&Shaper>,
    cfg: &PpoConfig,
    seed: u64,
    run_dir: Option<&Path>,
) -> Result<TrainOutcome, PpoError> {
    cfg.validate()?;
    if spec.obs_dim() != env.state_dim() {
        return Err(PpoError::Config(format!(
            "spec obs_dim {} does not match the {} state dimension {}",
            spec.obs_dim(),
            env.kind(),
            env.state_dim()
        )));
    }
    let mut value = ValueNet::new(env.state_dim(), &cfg.hidden, substream(seed, "value-init"));
    let mut popt = Adam::new(policy.trainable().len(), cfg.lr);
    let mut vopt = Adam::new(value.params.len(), cfg.value_lr);
    let mut mb_rng = ChaCha8Rng::seed_from_u64(substream(seed, "minibatch"));
    let mut rollouts = Rollouts {
        env,
        spec,
        shaper,
        cfg,
        rng: ChaCha8Rng::seed_from_u64(substream(seed, "actions")),
        env_seed: substream(seed, "env"),
        episodes: 0,
    };
    let mut writer = match run_dir {
        Some(d) => {
            fs::create_dir_all(d)?;
            let mut w = csv::Writer::from_path(d.join("metrics.csv"))?;
            w.write_record(METRICS_HEADER)?;
            w.flush()?;
            Some(w)
        }
        None => None,
    };
    let mut metrics = Vec::new();
    let mut steps = 0;
    let mut best = f64::NEG_INFINITY;
    while steps < cfg.total_steps {
        let progress = steps as f64 / cfg.total_steps as f64;
        policy.set_alpha_floor(cfg.alpha_floor_start + (cfg.alpha_floor_end - cfg.alpha_floor_start) * progress);
        let batch = rollouts.collect(&policy, &value, cfg.steps_per_rollout)?;
        steps += batch.len();
        let (mut adv, targets) = gae(&batch.rewards, &batch.values, &batch.next_values, &batch.ends, cfg.gamma, cfg.lambda)
            .map_err(PpoError::Config)?;
        if cfg.normalize_advantages {
            normalize(&mut adv);
        }
        let before = policy.clone();
        let stats = match update(&mut policy, &mut value, &mut popt, &mut vopt, &batch, &adv, &targets, cfg, &mut mb_rng) {
            Ok(s) => s,
            Err(PpoError::Config(msg)) if msg.starts_with("non-finite") => {
                let dump = match run_dir {
                    Some(d) => dump_diagnostics(d, metrics.len(), &before, &batch, &msg)?,
                    None => msg,
                };
                return Err(PpoError::NonFinite { update: metrics.len(), dump });
            }
            Err(e) => return Err(e),
        };
        let tv = tv_distance(&before, &policy, &tv_sample(&batch.states, cfg.tv_states))?;
        let row = MetricsRow {
            update: metrics.len(),
            steps,
            mean_return: mean(&batch.episode_returns),
            mean_shaped_return: mean(&batch.episode_shaped_returns),
            satisfaction_rate: batch.satisfied.iter().filter(|s| **s).count() as f64 / batch.satisfied.len() as f64,
            alpha: policy.alpha(),
            policy_loss: stats.policy_loss,
            value_loss: stats.value_loss,
            entropy: mean(&batch.entropies),
            tv_distance: tv,
            robustness_mean: mean(&batch.robustness),
        };
        if let Some(w) = writer.as_mut() {
            w.serialize(&row)?;
            w.flush()?;
        }
        if let Some(d) = run_dir {
            if row.mean_return > best {
                best = row.mean_return;
                // the rollout that earned this return came from the pre-update policy
                before.save(&d.join("policy_best.txt"))?;
            }
        }
        metrics.push(row);
    }
    if let Some(d) = run_dir {
        policy.save(&d.join("policy.txt"))?;
        value.params.save("value", &d.join("value.txt"))?;
    }
    Ok(TrainOutcome { policy, value, metrics, steps })
}
