use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::PpoError;
use crate::nn::{clip_grad_norm, Adam};
use crate::policy::CategoricalPolicy;
use crate::predictor::DemonstrationSet;
use crate::seed::substream;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BcConfig {
    pub epochs: usize,
    pub lr: f64,
    pub batch: usize,
    pub hidden: Vec<usize>,
    pub max_grad_norm: f64,
}

impl Default for BcConfig {
    fn default() -> Self {
        BcConfig { epochs: 40, lr: 1e-3, batch: 64, hidden: crate::policy::DEFAULT_HIDDEN.to_vec(), max_grad_norm: 5.0 }
    }
}

/// Fit a policy to demonstration `(state, action)` pairs by cross-entropy.
/// Returns the policy and the mean loss of each epoch.
pub fn behavior_clone(
    demos: &DemonstrationSet,
    num_actions: usize,
    cfg: &BcConfig,
    seed: u64,
) -> Result<(CategoricalPolicy, Vec<f64>), PpoError> {
    if cfg.batch == 0 || !(cfg.lr.is_finite() && cfg.lr >= 0.0) {
        return Err(PpoError::Config("bc needs a positive batch size and a non-negative lr".into()));
    }
    let pairs: Vec<(&[f64], usize)> = demos.pairs().collect();
    if pairs.is_empty() {
        return Err(PpoError::EmptyDataset);
    }
    if let Some((_, a)) = pairs.iter().find(|(_, a)| *a >= num_actions) {
        return Err(PpoError::Config(format!("demonstration action {a} out of range for {num_actions} actions")));
    }
    let mut policy = CategoricalPolicy::new(demos.state_dim, &cfg.hidden, num_actions, substream(seed, "bc-init"));
    let mut opt = Adam::new(policy.params.len(), cfg.lr);
    let mut rng = ChaCha8Rng::seed_from_u64(substream(seed, "bc-shuffle"));
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    let mut losses = Vec::with_capacity(cfg.epochs);
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(cfg.batch) {
            let m = chunk.len() as f64;
            let mut grad = vec![0.0; policy.params.len()];
            for &i in chunk {
                let (x, a) = pairs[i];
                let cache = policy.mlp.forward(&policy.params, x)?;
                total -= cache.output[a].max(f64::MIN_POSITIVE).ln();
                let mut g: Vec<f64> = cache.output.iter().map(|p| p / m).collect();
                g[a] -= 1.0 / m;
                policy.mlp.backward_pre_head(&policy.params, &cache, &g, &mut grad)?;
            }
            if cfg.max_grad_norm > 0.0 {
                clip_grad_norm(&mut grad, cfg.max_grad_norm);
            }
            opt.step(policy.params.as_mut_slice(), &grad);
        }
        losses.push(total / pairs.len() as f64);
    }
    Ok((policy, losses))
}

/// Fraction of demonstration pairs where the greedy action matches.
pub fn agreement(policy: &CategoricalPolicy, demos: &DemonstrationSet) -> Result<f64, PpoError> {
    let (mut hit, mut n) = (0usize, 0usize);
    for (x, a) in demos.pairs() {
        hit += usize::from(policy.greedy(x)? == a);
        n += 1;
    }
    if n == 0 {
        return Err(PpoError::EmptyDataset);
    }
    Ok(hit as f64 / n as f64)
}

/// Copy of `policy` with i.i.d. `N(0, sigma^2)` noise added to every parameter.
pub fn degrade_policy(policy: &CategoricalPolicy, sigma: f64, seed: u64) -> Result<CategoricalPolicy, PpoError> {
    if !(sigma.is_finite() && sigma >= 0.0) {
        return Err(PpoError::Config(format!("sigma must be finite and non-negative, got {sigma}")));
    }
    let normal = Normal::new(0.0, sigma).map_err(|e| PpoError::Config(format!("sigma: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(substream(seed, "degrade"));
    let mut out = policy.clone();
    for p in out.params.as_mut_slice() {
        *p += normal.sample(&mut rng);
    }
    Ok(out)
}
