//! Trajectory predictors `Pred: X -> O^(H+1)`.
//!
//! [`LearnedPredictor`] is an embed / GRU encoder / GRU decoder sequence model
//! trained on demonstrations; [`RolloutPredictor`] steps the true dynamics
//! under a frozen policy.

mod demos;

pub use demos::{DemoError, DemonstrationSet, Trajectory};

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::envs::{label, EnvConfig, EnvError};
use crate::nn::{clip_grad_norm, Adam, GruCell, Linear, NnError, ParamVector};
use crate::policy::CategoricalPolicy;
use crate::twtl::{ObservationWord, TwtlError};

#[derive(Debug, Error)]
pub enum PredictorError {
    #[error("no usable demonstration windows ({skipped} trajectories too short)")]
    EmptyDataset { skipped: usize },
    #[error("state has dimension {found}, expected {expected}")]
    Dimension { expected: usize, found: usize },
    #[error("at least one recent state is required")]
    NoHistory,
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Twtl(#[from] TwtlError),
}

/// Architecture and optimization settings for [`train_predictor`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PredictorTrainConfig {
    /// History window `w`.
    pub window: usize,
    pub embed: usize,
    pub hidden: usize,
    pub epochs: usize,
    pub lr: f64,
    /// Windows per optimizer step.
    pub batch: usize,
    /// Distance between consecutive training window starts.
    pub stride: usize,
    pub max_grad_norm: f64,
}

impl Default for PredictorTrainConfig {
    fn default() -> Self {
        PredictorTrainConfig {
            window: 4,
            embed: 16,
            hidden: 64,
            epochs: 30,
            lr: 3e-3,
            batch: 16,
            stride: 4,
            max_grad_norm: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    /// Mean per-window loss of each epoch.
    pub losses: Vec<f64>,
    pub windows: usize,
    pub skipped: usize,
}

/// GRU encoder-decoder over normalized states with residual outputs.
#[derive(Debug, Clone)]
pub struct LearnedPredictor {
    window: usize,
    dim: usize,
    mean: Vec<f64>,
    std: Vec<f64>,
    embed: Linear,
    encoder: GruCell,
    decoder: GruCell,
    out: Linear,
    pub params: ParamVector,
}

struct Forward {
    enc_in: Vec<Vec<f64>>,
    dec_in: Vec<Vec<f64>>,
    enc: crate::nn::GruTrace,
    dec: crate::nn::GruTrace,
    preds: Vec<Vec<f64>>,
}

impl LearnedPredictor {
    pub fn new(dim: usize, cfg: &PredictorTrainConfig, seed: u64) -> Self {
        let mut params = ParamVector::new();
        let embed = Linear::new(&mut params, "embed", dim, cfg.embed);
        let encoder = GruCell::new(&mut params, "encoder", cfg.embed, cfg.hidden);
        let decoder = GruCell::new(&mut params, "decoder", cfg.embed, cfg.hidden);
        let out = Linear::new(&mut params, "out", cfg.hidden, dim);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        embed.init(&mut params, &mut rng, 1.0);
        encoder.init(&mut params, &mut rng);
        decoder.init(&mut params, &mut rng);
        out.init(&mut params, &mut rng, 0.1);
        LearnedPredictor {
            window: cfg.window.max(1),
            dim,
            mean: vec![0.0; dim],
            std: vec![1.0; dim],
            embed,
            encoder,
            decoder,
            out,
            params,
        }
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    fn normalize(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.mean).zip(&self.std).map(|((v, m), s)| (v - m) / s).collect()
    }

    fn denormalize(&self, z: &[f64]) -> Vec<f64> {
        z.iter().zip(&self.mean).zip(&self.std).map(|((v, m), s)| v * s + m).collect()
    }

    fn embed(&self, z: &[f64]) -> Vec<f64> {
        let mut e = Vec::new();
        self.embed.forward(self.params.as_slice(), z, &mut e);
        e.iter_mut().for_each(|v| *v = v.tanh());
        e
    }

    /// History of exactly `window` normalized states, front-padded with the oldest.
    fn history(&self, recent: &[Vec<f64>]) -> Result<Vec<Vec<f64>>, PredictorError> {
        let first = recent.first().ok_or(PredictorError::NoHistory)?;
        for s in recent {
            if s.len() != self.dim {
                return Err(PredictorError::Dimension { expected: self.dim, found: s.len() });
            }
        }
        let tail = &recent[recent.len().saturating_sub(self.window)..];
        let mut h = vec![self.normalize(first); self.window - tail.len()];
        h.extend(tail.iter().map(|s| self.normalize(s)));
        Ok(h)
    }

    /// Free-running prediction of `horizon + 1` states; element 0 is the latest state.
    pub fn predict(&self, recent: &[Vec<f64>], horizon: usize) -> Result<Vec<Vec<f64>>, PredictorError> {
        let hist = self.history(recent)?;
        let enc_in: Vec<Vec<f64>> = hist.iter().map(|z| self.embed(z)).collect();
        let trace = self.encoder.unroll(&self.params, &vec![0.0; self.encoder.hidden], &enc_in)?;
        let mut h = trace.hidden.last().expect("window >= 1").clone();
        let mut prev = hist.last().expect("window >= 1").clone();
        let mut out = Vec::with_capacity(horizon + 1);
        out.push(recent.last().expect("nonempty").clone());
        let mut delta = Vec::new();
        for _ in 0..horizon {
            h = self.decoder.step(&self.params, &self.embed(&prev), &h)?;
            self.out.forward(self.params.as_slice(), &h, &mut delta);
            prev.iter_mut().zip(&delta).for_each(|(p, d)| *p += d);
            out.push(self.denormalize(&prev));
        }
        Ok(out)
    }

    /// Teacher-forced forward over normalized `hist` and `target` (`target[0]` is the current state).
    fn forward_tf(&self, hist: &[Vec<f64>], target: &[Vec<f64>]) -> Result<Forward, PredictorError> {
        let enc_in: Vec<Vec<f64>> = hist.iter().map(|z| self.embed(z)).collect();
        let enc = self.encoder.unroll(&self.params, &vec![0.0; self.encoder.hidden], &enc_in)?;
        let h0 = enc.hidden.last().expect("window >= 1").clone();
        let dec_in: Vec<Vec<f64>> = target[..target.len() - 1].iter().map(|z| self.embed(z)).collect();
        let dec = self.decoder.unroll(&self.params, &h0, &dec_in)?;
        let mut preds = Vec::with_capacity(dec_in.len());
        let mut delta = Vec::new();
        for (k, h) in dec.hidden.iter().enumerate() {
            self.out.forward(self.params.as_slice(), h, &mut delta);
            preds.push(target[k].iter().zip(&delta).map(|(a, b)| a + b).collect());
        }
        Ok(Forward { enc_in, dec_in, enc, dec, preds })
    }

    /// Mean squared error (normalized units) of one teacher-forced window and its
    /// gradient accumulated into `grad`.
    fn loss_and_grad(
        &self,
        hist: &[Vec<f64>],
        target: &[Vec<f64>],
        grad: Option<&mut [f64]>,
    ) -> Result<f64, PredictorError> {
        let horizon = target.len() - 1;
        if horizon == 0 {
            return Ok(0.0);
        }
        let f = self.forward_tf(hist, target)?;
        let scale = 1.0 / (horizon * self.dim) as f64;
        let mut loss = 0.0;
        for (p, t) in f.preds.iter().zip(&target[1..]) {
            loss += p.iter().zip(t).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
        }
        loss *= scale;
        let Some(grad) = grad else {
            return Ok(loss);
        };
        let p = self.params.as_slice();
        let mut g_dec = Vec::with_capacity(horizon);
        let mut gh = Vec::new();
        for (k, pred) in f.preds.iter().enumerate() {
            let g_pred: Vec<f64> = pred.iter().zip(&target[k + 1]).map(|(a, b)| 2.0 * scale * (a - b)).collect();
            self.out.backward(p, &f.dec.hidden[k], &g_pred, grad, &mut gh);
            g_dec.push(gh.clone());
        }
        let (g_dec_in, g_h0) = self.decoder.unroll_backward(&self.params, &f.dec, &g_dec, grad)?;
        let mut g_enc = vec![vec![0.0; self.encoder.hidden]; hist.len()];
        *g_enc.last_mut().expect("window >= 1") = g_h0;
        let (g_enc_in, _) = self.encoder.unroll_backward(&self.params, &f.enc, &g_enc, grad)?;
        let mut gz = Vec::new();
        let inputs = hist.iter().zip(&f.enc_in).zip(&g_enc_in).chain(target.iter().zip(&f.dec_in).zip(&g_dec_in));
        for ((z, e), ge) in inputs {
            let g_pre: Vec<f64> = ge.iter().zip(e).map(|(g, y)| g * (1.0 - y * y)).collect();
            self.embed.backward(p, z, &g_pre, grad, &mut gz);
        }
        Ok(loss)
    }

    pub fn save(&self, path: &Path) -> Result<(), NnError> {
        let mut pv = ParamVector::new();
        pv.add_segment("meta.window", &[1]);
        pv.get_mut("meta.window")?[0] = self.window as f64;
        pv.add_segment("norm.mean", &[self.dim]);
        pv.get_mut("norm.mean")?.copy_from_slice(&self.mean);
        pv.add_segment("norm.std", &[self.dim]);
        pv.get_mut("norm.std")?.copy_from_slice(&self.std);
        pv.append("", &self.params);
        pv.save("predictor", path)
    }

    pub fn load(path: &Path) -> Result<Self, NnError> {
        let (kind, pv) = ParamVector::load(path)?;
        if kind != "predictor" {
            return Err(NnError::Format(format!("expected a predictor file, found `{kind}`")));
        }
        let mean = pv.get("norm.mean")?.to_vec();
        let std = pv.get("norm.std")?.to_vec();
        let window = pv.get("meta.window")?[0] as usize;
        let embed = pv.segment("embed.w").ok_or_else(|| NnError::UnknownSegment("embed.w".into()))?.shape.clone();
        let enc = pv.segment("encoder.h.w").ok_or_else(|| NnError::UnknownSegment("encoder.h.w".into()))?.shape.clone();
        let cfg = PredictorTrainConfig { window, embed: embed[0], hidden: enc[1], ..Default::default() };
        let mut p = LearnedPredictor::new(mean.len(), &cfg, 0);
        let body = pv.without("meta.window").without("norm.mean").without("norm.std");
        if body.segments() != p.params.segments() {
            return Err(NnError::Format("unexpected predictor layout".into()));
        }
        p.params = body;
        p.mean = mean;
        p.std = std;
        Ok(p)
    }
}

/// Steps the true dynamics from the latest state under a frozen greedy policy.
/// Terminal states are absorbing.
#[derive(Debug, Clone)]
pub struct RolloutPredictor {
    pub env: EnvConfig,
    pub policy: CategoricalPolicy,
}

impl RolloutPredictor {
    pub fn predict(&self, recent: &[Vec<f64>], horizon: usize) -> Result<Vec<Vec<f64>>, PredictorError> {
        let mut x = recent.last().ok_or(PredictorError::NoHistory)?.clone();
        if x.len() != self.env.state_dim() {
            return Err(PredictorError::Dimension { expected: self.env.state_dim(), found: x.len() });
        }
        let mut out = Vec::with_capacity(horizon + 1);
        out.push(x.clone());
        for _ in 0..horizon {
            if !self.env.is_terminal(&x) {
                let a = self.policy.greedy(&x)?;
                x = self.env.dynamics(&x, a)?;
            }
            out.push(x.clone());
        }
        Ok(out)
    }
}

#[derive(Debug, Clone)]
pub enum Predictor {
    Learned(LearnedPredictor),
    Rollout(RolloutPredictor),
}

impl Predictor {
    /// Number of recent states the predictor looks at.
    pub fn window(&self) -> usize {
        match self {
            Predictor::Learned(p) => p.window(),
            Predictor::Rollout(_) => 1,
        }
    }

    /// Predicted states for times `t..=t+horizon`.
    pub fn predict_states(&self, recent: &[Vec<f64>], horizon: usize) -> Result<Vec<Vec<f64>>, PredictorError> {
        match self {
            Predictor::Learned(p) => p.predict(recent, horizon),
            Predictor::Rollout(p) => p.predict(recent, horizon),
        }
    }

    /// Predicted observation word of length `horizon + 1`.
    pub fn predict(&self, recent: &[Vec<f64>], horizon: usize) -> Result<ObservationWord, PredictorError> {
        let states = self.predict_states(recent, horizon)?;
        Ok(ObservationWord::new(0, states.iter().map(|s| label(s)).collect())?)
    }
}

/// Build `(history, target)` windows in normalized units.
fn windows(
    model: &LearnedPredictor,
    trajectories: &[Vec<Vec<f64>>],
    horizon: usize,
    stride: usize,
) -> Vec<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    let mut out = Vec::new();
    for states in trajectories {
        let z: Vec<Vec<f64>> = states.iter().map(|s| model.normalize(s)).collect();
        let mut t = 0;
        while t + horizon < z.len() {
            let lo = (t + 1).saturating_sub(model.window);
            let mut hist = vec![z[0].clone(); model.window - (t + 1 - lo)];
            hist.extend_from_slice(&z[lo..=t]);
            out.push((hist, z[t..=t + horizon].to_vec()));
            t += stride.max(1);
        }
    }
    out
}

/// Fit a [`LearnedPredictor`] to demonstrations with teacher forcing.
///
/// Trajectories that end in a terminal state of `env` are extended with
/// `horizon` copies of that state. Trajectories still shorter than
/// `window + horizon + 1` are skipped.
pub fn train_predictor(
    demos: &DemonstrationSet,
    horizon: usize,
    cfg: &PredictorTrainConfig,
    env: Option<&EnvConfig>,
    seed: u64,
) -> Result<(LearnedPredictor, TrainReport), PredictorError> {
    let mut model = LearnedPredictor::new(demos.state_dim, cfg, seed);
    let mut skipped = 0;
    let mut usable = Vec::new();
    for tr in &demos.trajectories {
        let mut states = tr.states.clone();
        if let Some(env) = env {
            if states.last().is_some_and(|s| env.is_terminal(s)) {
                let last = states.last().expect("checked").clone();
                states.extend(std::iter::repeat_n(last, horizon));
            }
        }
        if states.len() < model.window + horizon + 1 {
            skipped += 1;
        } else {
            usable.push(states);
        }
    }
    if usable.is_empty() {
        return Err(PredictorError::EmptyDataset { skipped });
    }
    let all: Vec<&Vec<f64>> = usable.iter().flatten().collect();
    let n = all.len() as f64;
    for d in 0..model.dim {
        let mean = all.iter().map(|s| s[d]).sum::<f64>() / n;
        let var = all.iter().map(|s| (s[d] - mean) * (s[d] - mean)).sum::<f64>() / n;
        model.mean[d] = mean;
        model.std[d] = if var.sqrt() > 1e-8 { var.sqrt() } else { 1.0 };
    }
    let data = windows(&model, &usable, horizon, cfg.stride);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut adam = Adam::new(model.params.len(), cfg.lr);
    let mut losses = Vec::with_capacity(cfg.epochs);
    let mut grad = vec![0.0; model.params.len()];
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(cfg.batch.max(1)) {
            grad.iter_mut().for_each(|g| *g = 0.0);
            for &i in chunk {
                total += model.loss_and_grad(&data[i].0, &data[i].1, Some(&mut grad))?;
            }
            let inv = 1.0 / chunk.len() as f64;
            grad.iter_mut().for_each(|g| *g *= inv);
            clip_grad_norm(&mut grad, cfg.max_grad_norm);
            adam.step(model.params.as_mut_slice(), &grad);
        }
        losses.push(total / data.len() as f64);
    }
    Ok((model, TrainReport { losses, windows: data.len(), skipped }))
}

/// Gradient of the teacher-forced loss, exposed for gradient checks.
#[doc(hidden)]
pub fn predictor_loss_grad(
    model: &LearnedPredictor,
    hist: &[Vec<f64>],
    target: &[Vec<f64>],
) -> Result<(f64, Vec<f64>), PredictorError> {
    let mut g = vec![0.0; model.params.len()];
    let l = model.loss_and_grad(hist, target, Some(&mut g))?;
    Ok((l, g))
}

#[doc(hidden)]
pub fn predictor_loss(model: &LearnedPredictor, hist: &[Vec<f64>], target: &[Vec<f64>]) -> Result<f64, PredictorError> {
    model.loss_and_grad(hist, target, None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{EnvKind, LanderParams};
    use crate::nn::{finite_difference, relative_error};
    use rand::Rng;

    fn constant_demos(value: &[f64], len: usize, n: usize) -> DemonstrationSet {
        let trs = (0..n)
            .map(|e| Trajectory {
                episode: e,
                states: vec![value.to_vec(); len + 1],
                actions: vec![0; len],
                rewards: vec![0.0; len],
            })
            .collect();
        DemonstrationSet::new(value.len(), trs).unwrap()
    }

    #[test]
    fn output_length_and_first_element() {
        let p = LearnedPredictor::new(3, &PredictorTrainConfig { hidden: 8, embed: 4, ..Default::default() }, 0);
        for h in [0, 1, 7] {
            let out = p.predict(&[vec![0.1, 0.2, 0.3]], h).unwrap();
            assert_eq!(out.len(), h + 1);
            assert_eq!(out[0], vec![0.1, 0.2, 0.3]);
        }
        assert!(p.predict(&[], 3).is_err());
        assert!(p.predict(&[vec![0.0; 2]], 3).is_err());
    }

    #[test]
    fn rollout_matches_free_fall() {
        let env = EnvConfig::Lander(LanderParams::default());
        let mut policy = CategoricalPolicy::new(6, &[4], 4, 0);
        // bias strongly toward no-op
        policy.params.get_mut("l1.b").unwrap()[0] = 100.0;
        let pred = RolloutPredictor { env: env.clone(), policy };
        let x0 = vec![0.0, 1.0, 0.0, 0.0, 0.0, 0.0];
        let out = pred.predict(&[x0.clone()], 10).unwrap();
        let mut x = x0;
        for o in &out[1..] {
            x = env.dynamics(&x, 0).unwrap();
            assert_eq!(o, &x);
        }
    }

    #[test]
    fn constant_dataset_is_learned() {
        let demos = constant_demos(&[0.3, -1.2], 30, 3);
        let cfg = PredictorTrainConfig { hidden: 8, embed: 4, epochs: 60, lr: 1e-2, ..Default::default() };
        let (p, rep) = train_predictor(&demos, 5, &cfg, None, 1).unwrap();
        assert!(*rep.losses.last().unwrap() < 1e-4, "{:?}", rep.losses.last());
        let out = p.predict(&[vec![0.3, -1.2]], 5).unwrap();
        for s in out {
            assert!((s[0] - 0.3).abs() < 1e-3 && (s[1] + 1.2).abs() < 1e-3);
        }
    }

    #[test]
    fn zero_epochs_keeps_init_and_training_is_deterministic() {
        let demos = constant_demos(&[1.0], 12, 2);
        let cfg = PredictorTrainConfig { hidden: 6, embed: 3, epochs: 0, ..Default::default() };
        let (p, rep) = train_predictor(&demos, 3, &cfg, None, 9).unwrap();
        assert!(rep.losses.is_empty());
        assert_eq!(p.params, LearnedPredictor::new(1, &cfg, 9).params);
        let cfg = PredictorTrainConfig { epochs: 3, ..cfg };
        let a = train_predictor(&demos, 3, &cfg, None, 9).unwrap().1;
        let b = train_predictor(&demos, 3, &cfg, None, 9).unwrap().1;
        assert_eq!(a, b);
    }

    #[test]
    fn short_trajectories_are_skipped_unless_terminal() {
        let demos = constant_demos(&[0.0; 6], 4, 2);
        let cfg = PredictorTrainConfig { hidden: 4, embed: 2, epochs: 1, ..Default::default() };
        assert!(matches!(
            train_predictor(&demos, 10, &cfg, None, 0),
            Err(PredictorError::EmptyDataset { skipped: 2 })
        ));
        // p_y = 0 is terminal for the lander, so the trajectories are padded
        let env = EnvConfig::default_for(EnvKind::Lander);
        let (_, rep) = train_predictor(&demos, 10, &cfg, Some(&env), 0).unwrap();
        assert_eq!(rep.skipped, 0);
    }

    #[test]
    fn teacher_forced_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let cfg = PredictorTrainConfig { window: 3, hidden: 5, embed: 3, ..Default::default() };
        let p = LearnedPredictor::new(2, &cfg, 4);
        let mk = |n: usize, rng: &mut ChaCha8Rng| -> Vec<Vec<f64>> {
            (0..n).map(|_| (0..2).map(|_| rng.random_range(-1.0..1.0)).collect()).collect()
        };
        let hist = mk(3, &mut rng);
        let target = mk(5, &mut rng);
        let (_, g) = predictor_loss_grad(&p, &hist, &target).unwrap();
        let coords: Vec<usize> = (0..p.params.len()).collect();
        let mut theta = p.params.as_slice().to_vec();
        let fd = finite_difference(&mut theta, &coords, 1e-5, |t| {
            let mut q = p.clone();
            q.params.as_mut_slice().copy_from_slice(t);
            predictor_loss(&q, &hist, &target).unwrap()
        });
        assert!(relative_error(&g, &fd) < 1e-6, "{}", relative_error(&g, &fd));
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let demos = constant_demos(&[0.5, 0.25], 10, 1);
        let cfg = PredictorTrainConfig { window: 2, hidden: 4, embed: 3, epochs: 2, ..Default::default() };
        let (p, _) = train_predictor(&demos, 3, &cfg, None, 0).unwrap();
        p.save(&dir.path().join("pred.txt")).unwrap();
        let q = LearnedPredictor::load(&dir.path().join("pred.txt")).unwrap();
        assert_eq!(p.predict(&[vec![0.4, 0.2]], 4).unwrap(), q.predict(&[vec![0.4, 0.2]], 4).unwrap());
    }
}
