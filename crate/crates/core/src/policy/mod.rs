//! Categorical policies and the hybrid offline/online mixture
//! `pi = (1 - alpha) pi_offline + alpha pi_online`.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::nn::{Head, Mlp, MlpCache, NnError, ParamVector};

pub const DEFAULT_HIDDEN: [usize; 2] = [64, 64];
/// Initial mixing weight.
pub const ALPHA0: f64 = 0.1;

pub fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

fn layer_sizes(input: usize, hidden: &[usize], output: usize) -> Vec<usize> {
    let mut s = vec![input];
    s.extend_from_slice(hidden);
    s.push(output);
    s
}

/// Draw an index from a probability vector; returns the index and its log-probability.
pub fn sample_categorical(probs: &[f64], rng: &mut impl Rng) -> (usize, f64) {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut pick = probs.len() - 1;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            pick = i;
            break;
        }
    }
    // never return a zero-probability tail index from rounding
    while probs[pick] == 0.0 && pick > 0 {
        pick -= 1;
    }
    (pick, probs[pick].ln())
}

pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

pub fn entropy(probs: &[f64]) -> f64 {
    -probs.iter().filter(|p| **p > 0.0).map(|p| p * p.ln()).sum::<f64>()
}

/// `1/2 * sum |p - q|`.
pub fn tv(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

/// Softmax-headed tanh MLP over discrete actions.
#[derive(Debug, Clone, PartialEq)]
pub struct CategoricalPolicy {
    pub mlp: Mlp,
    pub params: ParamVector,
}

impl CategoricalPolicy {
    pub fn new(obs_dim: usize, hidden: &[usize], num_actions: usize, seed: u64) -> Self {
        let mut params = ParamVector::new();
        let mlp = Mlp::new(&mut params, "", &layer_sizes(obs_dim, hidden, num_actions), Head::Softmax);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        mlp.init(&mut params, &mut rng, 0.01);
        CategoricalPolicy { mlp, params }
    }

    pub fn obs_dim(&self) -> usize {
        self.mlp.input_dim()
    }

    pub fn num_actions(&self) -> usize {
        self.mlp.output_dim()
    }

    pub fn probs(&self, x: &[f64]) -> Result<Vec<f64>, NnError> {
        self.mlp.eval(&self.params, x)
    }

    pub fn greedy(&self, x: &[f64]) -> Result<usize, NnError> {
        Ok(argmax(&self.probs(x)?))
    }

    /// Layer sizes are inferred from the segment shapes.
    pub fn from_params(params: ParamVector) -> Result<Self, NnError> {
        let mut sizes = Vec::new();
        let mut i = 0;
        while let Some(s) = params.segment(&format!("l{i}.w")) {
            if s.shape.len() != 2 {
                return Err(NnError::Format(format!("segment l{i}.w is not a matrix")));
            }
            if i == 0 {
                sizes.push(s.shape[1]);
            }
            sizes.push(s.shape[0]);
            i += 1;
        }
        if sizes.len() < 2 {
            return Err(NnError::Format("no layers".into()));
        }
        let mut fresh = ParamVector::new();
        let mlp = Mlp::new(&mut fresh, "", &sizes, Head::Softmax);
        if fresh.segments() != params.segments() {
            return Err(NnError::Format("unexpected segment layout".into()));
        }
        Ok(CategoricalPolicy { mlp, params })
    }

    pub fn save(&self, path: &Path) -> Result<(), NnError> {
        self.params.save("policy", path)
    }

    pub fn load(path: &Path) -> Result<Self, NnError> {
        let (kind, params) = ParamVector::load(path)?;
        if kind != "policy" {
            return Err(NnError::Format(format!("expected a policy file, found `{kind}`")));
        }
        Self::from_params(params)
    }
}

/// State-value network with a scalar identity head.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueNet {
    pub mlp: Mlp,
    pub params: ParamVector,
}

impl ValueNet {
    pub fn new(obs_dim: usize, hidden: &[usize], seed: u64) -> Self {
        let mut params = ParamVector::new();
        let mlp = Mlp::new(&mut params, "", &layer_sizes(obs_dim, hidden, 1), Head::Identity);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        mlp.init(&mut params, &mut rng, 1.0);
        ValueNet { mlp, params }
    }

    pub fn value(&self, x: &[f64]) -> Result<f64, NnError> {
        Ok(self.mlp.eval(&self.params, x)?[0])
    }

    /// Accumulates `d/dtheta` of `V(x)` scaled by `g` and returns `V(x)`.
    pub fn accumulate_grad(&self, x: &[f64], g: f64, grad: &mut [f64]) -> Result<f64, NnError> {
        let c = self.mlp.forward(&self.params, x)?;
        self.mlp.backward(&self.params, &c, &[g], grad)?;
        Ok(c.output[0])
    }
}

/// Frozen offline branch, trainable online branch and a trainable scalar mixing weight.
///
/// Trainable parameters live in one vector: the online network segments
/// followed by `mix_raw`. With mixing disabled the policy is the online
/// branch alone and `alpha` reads as 1.
#[derive(Debug, Clone)]
pub struct HybridPolicy {
    offline: CategoricalPolicy,
    online: Mlp,
    trainable: ParamVector,
    mix_index: usize,
    mixing: bool,
    alpha_floor: f64,
}

#[derive(Debug, Clone)]
pub struct HybridCache {
    offline_probs: Vec<f64>,
    online: MlpCache,
    pub alpha: f64,
    pub probs: Vec<f64>,
}

impl HybridCache {
    pub fn online_probs(&self) -> &[f64] {
        &self.online.output
    }

    pub fn offline_probs(&self) -> &[f64] {
        &self.offline_probs
    }
}

impl HybridPolicy {
    pub fn new(offline: CategoricalPolicy, hidden: &[usize], seed: u64, mixing: bool) -> Self {
        let mut trainable = ParamVector::new();
        let sizes = layer_sizes(offline.obs_dim(), hidden, offline.num_actions());
        let online = Mlp::new(&mut trainable, "", &sizes, Head::Softmax);
        let mix_index = trainable.add_segment("mix_raw", &[1]);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        online.init(&mut trainable, &mut rng, 0.01);
        trainable.as_mut_slice()[mix_index] = logit(ALPHA0);
        HybridPolicy { offline, online, trainable, mix_index, mixing, alpha_floor: 0.0 }
    }

    pub fn mixing(&self) -> bool {
        self.mixing
    }

    pub fn num_actions(&self) -> usize {
        self.online.output_dim()
    }

    pub fn obs_dim(&self) -> usize {
        self.online.input_dim()
    }

    pub fn offline(&self) -> &CategoricalPolicy {
        &self.offline
    }

    pub fn offline_checksum(&self) -> u64 {
        self.offline.params.checksum()
    }

    pub fn trainable(&self) -> &ParamVector {
        &self.trainable
    }

    pub fn trainable_mut(&mut self) -> &mut ParamVector {
        &mut self.trainable
    }

    pub fn mix_raw(&self) -> f64 {
        self.trainable.as_slice()[self.mix_index]
    }

    pub fn set_mix_raw(&mut self, v: f64) {
        self.trainable.as_mut_slice()[self.mix_index] = v;
    }

    /// Lower bound applied to `alpha` (0 disables it).
    pub fn set_alpha_floor(&mut self, floor: f64) {
        self.alpha_floor = floor.clamp(0.0, 1.0);
    }

    pub fn alpha(&self) -> f64 {
        if self.mixing {
            logistic(self.mix_raw()).max(self.alpha_floor)
        } else {
            1.0
        }
    }

    pub fn forward(&self, x: &[f64]) -> Result<HybridCache, NnError> {
        let offline_probs = if self.mixing { self.offline.probs(x)? } else { Vec::new() };
        self.forward_given_offline(x, offline_probs)
    }

    /// Like [`forward`](Self::forward) with the frozen branch's output supplied by the caller.
    pub fn forward_given_offline(&self, x: &[f64], offline_probs: Vec<f64>) -> Result<HybridCache, NnError> {
        let online = self.online.forward(&self.trainable, x)?;
        if !self.mixing {
            let probs = online.output.clone();
            return Ok(HybridCache { offline_probs: probs.clone(), online, alpha: 1.0, probs });
        }
        crate::nn::check_len(self.num_actions(), offline_probs.len())?;
        let alpha = self.alpha();
        let probs = offline_probs.iter().zip(&online.output).map(|(r, b)| (1.0 - alpha) * r + alpha * b).collect();
        Ok(HybridCache { offline_probs, online, alpha, probs })
    }

    pub fn action_probs(&self, x: &[f64]) -> Result<Vec<f64>, NnError> {
        Ok(self.forward(x)?.probs)
    }

    pub fn sample(&self, x: &[f64], rng: &mut impl Rng) -> Result<(usize, f64), NnError> {
        Ok(sample_categorical(&self.action_probs(x)?, rng))
    }

    pub fn greedy(&self, x: &[f64]) -> Result<usize, NnError> {
        Ok(argmax(&self.action_probs(x)?))
    }

    /// Accumulate `sum_u g_probs[u] * d pi(u|x) / d theta` into `grad` (trainable layout).
    pub fn backward_probs(&self, cache: &HybridCache, g_probs: &[f64], grad: &mut [f64]) -> Result<(), NnError> {
        let alpha = cache.alpha;
        let g_online: Vec<f64> = g_probs.iter().map(|g| alpha * g).collect();
        self.online.backward(&self.trainable, &cache.online, &g_online, grad)?;
        let raw = self.mix_raw();
        if self.mixing && logistic(raw) >= self.alpha_floor {
            let s = logistic(raw);
            let d_alpha: f64 =
                g_probs.iter().zip(cache.online_probs()).zip(&cache.offline_probs).map(|((g, b), r)| g * (b - r)).sum();
            grad[self.mix_index] += d_alpha * s * (1.0 - s);
        }
        Ok(())
    }

    /// `log pi(u|x)` and its gradient with respect to the trainable parameters.
    pub fn log_prob_grad(&self, x: &[f64], action: usize) -> Result<(f64, Vec<f64>), NnError> {
        let cache = self.forward(x)?;
        let mut g_probs = vec![0.0; cache.probs.len()];
        g_probs[action] = 1.0 / cache.probs[action];
        let mut grad = vec![0.0; self.trainable.len()];
        self.backward_probs(&cache, &g_probs, &mut grad)?;
        Ok((cache.probs[action].ln(), grad))
    }

    pub fn to_params(&self) -> ParamVector {
        let mut out = ParamVector::new();
        out.append("offline.", &self.offline.params);
        out.append("online.", &self.trainable.without("mix_raw"));
        let off = out.add_segment("mix_raw", &[1]);
        out.as_mut_slice()[off] = self.mix_raw();
        out
    }

    pub fn save(&self, path: &Path) -> Result<(), NnError> {
        self.to_params().save(if self.mixing { "hybrid" } else { "hybrid-online" }, path)
    }

    pub fn load(path: &Path) -> Result<Self, NnError> {
        let (kind, pv) = ParamVector::load(path)?;
        let mixing = match kind.as_str() {
            "hybrid" => true,
            "hybrid-online" => false,
            other => return Err(NnError::Format(format!("expected a hybrid policy file, found `{other}`"))),
        };
        let offline = CategoricalPolicy::from_params(pv.extract("offline."))?;
        let online = CategoricalPolicy::from_params(pv.extract("online."))?;
        let mix = pv.get("mix_raw")?[0];
        let mut trainable = online.params.clone();
        let mix_index = trainable.add_segment("mix_raw", &[1]);
        trainable.as_mut_slice()[mix_index] = mix;
        Ok(HybridPolicy { offline, online: online.mlp, trainable, mix_index, mixing, alpha_floor: 0.0 })
    }

    /// The online branch alone as a standalone policy.
    pub fn online_policy(&self) -> CategoricalPolicy {
        CategoricalPolicy { mlp: self.online.clone(), params: self.trainable.without("mix_raw") }
    }
}

/// Largest total-variation distance between the two policies over `states`.
pub fn tv_distance(a: &HybridPolicy, b: &HybridPolicy, states: &[Vec<f64>]) -> Result<f64, NnError> {
    let mut worst: f64 = 0.0;
    for x in states {
        worst = worst.max(tv(&a.action_probs(x)?, &b.action_probs(x)?));
    }
    Ok(worst)
}
