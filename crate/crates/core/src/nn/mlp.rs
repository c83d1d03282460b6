use rand::Rng;

use super::{check_len, NnError, ParamVector};

/// Fully connected layer `y = W x + b`, `W` stored row-major `[out][in]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub inputs: usize,
    pub outputs: usize,
    w: usize,
    b: usize,
}

impl Linear {
    pub fn new(pv: &mut ParamVector, name: &str, inputs: usize, outputs: usize) -> Self {
        let w = pv.add_segment(format!("{name}.w"), &[outputs, inputs]);
        let b = pv.add_segment(format!("{name}.b"), &[outputs]);
        Linear { inputs, outputs, w, b }
    }

    /// Uniform Glorot init of the weights scaled by `gain`; zero bias.
    pub fn init(&self, pv: &mut ParamVector, rng: &mut impl Rng, gain: f64) {
        let limit = gain * (6.0 / (self.inputs + self.outputs) as f64).sqrt();
        let p = pv.as_mut_slice();
        for v in &mut p[self.w..self.w + self.inputs * self.outputs] {
            *v = rng.random_range(-limit..=limit);
        }
        p[self.b..self.b + self.outputs].fill(0.0);
    }

    pub fn forward(&self, p: &[f64], x: &[f64], y: &mut Vec<f64>) {
        y.clear();
        let w = &p[self.w..self.w + self.inputs * self.outputs];
        let b = &p[self.b..self.b + self.outputs];
        for (row, bias) in w.chunks_exact(self.inputs).zip(b) {
            y.push(bias + row.iter().zip(x).map(|(a, c)| a * c).sum::<f64>());
        }
    }

    /// Accumulate parameter gradients into `grad` and write `dL/dx` into `gx`.
    pub fn backward(&self, p: &[f64], x: &[f64], gy: &[f64], grad: &mut [f64], gx: &mut Vec<f64>) {
        gx.clear();
        gx.resize(self.inputs, 0.0);
        let w = &p[self.w..self.w + self.inputs * self.outputs];
        for (o, &g) in gy.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            grad[self.b + o] += g;
            let row = &w[o * self.inputs..(o + 1) * self.inputs];
            let grow = &mut grad[self.w + o * self.inputs..self.w + (o + 1) * self.inputs];
            for i in 0..self.inputs {
                grow[i] += g * x[i];
                gx[i] += g * row[i];
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Head {
    Identity,
    Softmax,
}

/// Tanh multilayer perceptron with an identity or softmax output head.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    layers: Vec<Linear>,
    head: Head,
}

#[derive(Debug, Clone)]
pub struct MlpCache {
    generation: u64,
    // input to each layer
    inputs: Vec<Vec<f64>>,
    pub pre_head: Vec<f64>,
    pub output: Vec<f64>,
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + logits.iter().map(|l| (l - m).exp()).sum::<f64>().ln();
    logits.iter().map(|l| l - lse).collect()
}

impl Mlp {
    /// Register layers `{prefix}l{i}` for the given layer sizes.
    pub fn new(pv: &mut ParamVector, prefix: &str, sizes: &[usize], head: Head) -> Self {
        assert!(sizes.len() >= 2, "need input and output sizes");
        let layers = sizes.windows(2).enumerate().map(|(i, w)| Linear::new(pv, &format!("{prefix}l{i}"), w[0], w[1])).collect();
        Mlp { layers, head }
    }

    /// Random init; the last layer is scaled by `out_gain`.
    pub fn init(&self, pv: &mut ParamVector, rng: &mut impl Rng, out_gain: f64) {
        let n = self.layers.len();
        for (i, l) in self.layers.iter().enumerate() {
            l.init(pv, rng, if i + 1 == n { out_gain } else { 1.0 });
        }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.outputs)
    }

    pub fn head(&self) -> Head {
        self.head
    }

    pub fn forward(&self, pv: &ParamVector, x: &[f64]) -> Result<MlpCache, NnError> {
        check_len(self.input_dim(), x.len())?;
        let p = pv.as_slice();
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut cur = x.to_vec();
        let n = self.layers.len();
        for (i, l) in self.layers.iter().enumerate() {
            let mut y = Vec::with_capacity(l.outputs);
            l.forward(p, &cur, &mut y);
            if i + 1 < n {
                y.iter_mut().for_each(|v| *v = v.tanh());
            }
            inputs.push(std::mem::replace(&mut cur, y));
        }
        let output = match self.head {
            Head::Identity => cur.clone(),
            Head::Softmax => softmax(&cur),
        };
        Ok(MlpCache { generation: pv.generation(), inputs, pre_head: cur, output })
    }

    /// Output only.
    pub fn eval(&self, pv: &ParamVector, x: &[f64]) -> Result<Vec<f64>, NnError> {
        Ok(self.forward(pv, x)?.output)
    }

    /// Backpropagate `dL/d output`; accumulates into `grad`, returns `dL/dx`.
    pub fn backward(&self, pv: &ParamVector, cache: &MlpCache, g_out: &[f64], grad: &mut [f64]) -> Result<Vec<f64>, NnError> {
        check_len(self.output_dim(), g_out.len())?;
        let g_pre = match self.head {
            Head::Identity => g_out.to_vec(),
            Head::Softmax => {
                let p = &cache.output;
                let dot: f64 = g_out.iter().zip(p).map(|(g, q)| g * q).sum();
                p.iter().zip(g_out).map(|(q, g)| q * (g - dot)).collect()
            }
        };
        self.backward_pre_head(pv, cache, &g_pre, grad)
    }

    /// Backpropagate a gradient taken with respect to the pre-head activations (logits).
    pub fn backward_pre_head(
        &self,
        pv: &ParamVector,
        cache: &MlpCache,
        g_pre: &[f64],
        grad: &mut [f64],
    ) -> Result<Vec<f64>, NnError> {
        if cache.generation != pv.generation() {
            return Err(NnError::StaleCache);
        }
        check_len(pv.len(), grad.len())?;
        let p = pv.as_slice();
        let mut g = g_pre.to_vec();
        let mut gx = Vec::new();
        for (i, l) in self.layers.iter().enumerate().rev() {
            l.backward(p, &cache.inputs[i], &g, grad, &mut gx);
            if i > 0 {
                // inputs[i] is the tanh output of layer i-1
                for (v, y) in gx.iter_mut().zip(&cache.inputs[i]) {
                    *v *= 1.0 - y * y;
                }
            }
            std::mem::swap(&mut g, &mut gx);
        }
        Ok(g)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{finite_difference, relative_error};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_weights_give_uniform_softmax() {
        let mut pv = ParamVector::new();
        let m = Mlp::new(&mut pv, "", &[3, 8, 4], Head::Softmax);
        let out = m.eval(&pv, &[1.0, -2.0, 0.5]).unwrap();
        for p in out {
            assert!((p - 0.25).abs() < 1e-15);
        }
    }

    #[test]
    fn linear_identity_layer() {
        let mut pv = ParamVector::new();
        let m = Mlp::new(&mut pv, "", &[2, 2], Head::Identity);
        pv.get_mut("l0.w").unwrap().copy_from_slice(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m.eval(&pv, &[1.0, -1.0]).unwrap(), vec![-1.0, -1.0]);
    }

    #[test]
    fn scalar_weight_gradient_is_input() {
        let mut pv = ParamVector::new();
        let m = Mlp::new(&mut pv, "", &[1, 1], Head::Identity);
        pv.get_mut("l0.w").unwrap()[0] = 0.7;
        let c = m.forward(&pv, &[2.5]).unwrap();
        let mut g = vec![0.0; pv.len()];
        m.backward(&pv, &c, &[1.0], &mut g).unwrap();
        assert_eq!(g[0], 2.5);
    }

    #[test]
    fn zero_output_gradient_gives_zero_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut pv = ParamVector::new();
        let m = Mlp::new(&mut pv, "", &[3, 5, 2], Head::Softmax);
        m.init(&mut pv, &mut rng, 1.0);
        let c = m.forward(&pv, &[0.1, 0.2, 0.3]).unwrap();
        let mut g = vec![0.0; pv.len()];
        let gx = m.backward(&pv, &c, &[0.0, 0.0], &mut g).unwrap();
        assert!(g.iter().chain(&gx).all(|v| *v == 0.0));
    }

    #[test]
    fn stale_cache_is_detected() {
        let mut pv = ParamVector::new();
        let m = Mlp::new(&mut pv, "", &[1, 1], Head::Identity);
        let c = m.forward(&pv, &[1.0]).unwrap();
        pv.as_mut_slice()[0] = 1.0;
        let mut g = vec![0.0; pv.len()];
        assert!(matches!(m.backward(&pv, &c, &[1.0], &mut g), Err(NnError::StaleCache)));
    }

    #[test]
    fn softmax_is_stable_for_large_logits() {
        let p = softmax(&[50.0, -50.0, 0.0]);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let lp = log_softmax(&[50.0, -50.0, 0.0]);
        assert!(lp.iter().all(|v| v.is_finite()));
        assert!((lp[1] + 100.0).abs() < 1e-9);
    }

    #[test]
    fn two_layer_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let mut pv = ParamVector::new();
            let m = Mlp::new(&mut pv, "", &[3, 6, 4], Head::Softmax);
            m.init(&mut pv, &mut rng, 1.0);
            let x: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
            let w: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
            let c = m.forward(&pv, &x).unwrap();
            let mut g = vec![0.0; pv.len()];
            m.backward(&pv, &c, &w, &mut g).unwrap();
            let coords: Vec<usize> = (0..pv.len()).collect();
            let mut theta = pv.as_slice().to_vec();
            let fd = finite_difference(&mut theta, &coords, 1e-5, |t| {
                let mut q = pv.clone();
                q.as_mut_slice().copy_from_slice(t);
                m.eval(&q, &x).unwrap().iter().zip(&w).map(|(a, b)| a * b).sum()
            });
            assert!(relative_error(&g, &fd) < 1e-6, "{}", relative_error(&g, &fd));
        }
    }
}
