use rand::Rng;

use super::{check_len, Linear, NnError, ParamVector};

/// Gated recurrent unit (reset gate applied after the hidden projection):
///
/// ```text
/// z = sigma(W_z x + b_z + U_z h + c_z)
/// r = sigma(W_r x + b_r + U_r h + c_r)
/// n = tanh(W_n x + b_n + r * (U_n h + c_n))
/// h' = (1 - z) * n + z * h
/// ```
#[derive(Debug, Clone, PartialEq)]
pub struct GruCell {
    pub inputs: usize,
    pub hidden: usize,
    w: Linear,
    u: Linear,
}

#[derive(Debug, Clone)]
struct StepCache {
    x: Vec<f64>,
    h_prev: Vec<f64>,
    z: Vec<f64>,
    r: Vec<f64>,
    n: Vec<f64>,
    un: Vec<f64>,
}

/// Hidden states of an unrolled sequence plus what the backward pass needs.
#[derive(Debug, Clone)]
pub struct GruTrace {
    generation: u64,
    steps: Vec<StepCache>,
    /// `hidden[t]` is the state after consuming input `t`.
    pub hidden: Vec<Vec<f64>>,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

impl GruCell {
    pub fn new(pv: &mut ParamVector, name: &str, inputs: usize, hidden: usize) -> Self {
        let w = Linear::new(pv, &format!("{name}.x"), inputs, 3 * hidden);
        let u = Linear::new(pv, &format!("{name}.h"), hidden, 3 * hidden);
        GruCell { inputs, hidden, w, u }
    }

    pub fn init(&self, pv: &mut ParamVector, rng: &mut impl Rng) {
        self.w.init(pv, rng, 1.0);
        self.u.init(pv, rng, 1.0);
    }

    fn step_cached(&self, p: &[f64], x: &[f64], h: &[f64]) -> (Vec<f64>, StepCache) {
        let hd = self.hidden;
        let mut a = Vec::with_capacity(3 * hd);
        let mut u = Vec::with_capacity(3 * hd);
        self.w.forward(p, x, &mut a);
        self.u.forward(p, h, &mut u);
        let z: Vec<f64> = (0..hd).map(|k| sigmoid(a[k] + u[k])).collect();
        let r: Vec<f64> = (0..hd).map(|k| sigmoid(a[hd + k] + u[hd + k])).collect();
        let un = u[2 * hd..].to_vec();
        let n: Vec<f64> = (0..hd).map(|k| (a[2 * hd + k] + r[k] * un[k]).tanh()).collect();
        let h_new = (0..hd).map(|k| (1.0 - z[k]) * n[k] + z[k] * h[k]).collect();
        (h_new, StepCache { x: x.to_vec(), h_prev: h.to_vec(), z, r, n, un })
    }

    /// One step without caching.
    pub fn step(&self, pv: &ParamVector, x: &[f64], h: &[f64]) -> Result<Vec<f64>, NnError> {
        check_len(self.inputs, x.len())?;
        check_len(self.hidden, h.len())?;
        Ok(self.step_cached(pv.as_slice(), x, h).0)
    }

    pub fn unroll(&self, pv: &ParamVector, h0: &[f64], xs: &[Vec<f64>]) -> Result<GruTrace, NnError> {
        check_len(self.hidden, h0.len())?;
        if xs.is_empty() {
            return Err(NnError::Shape { expected: 1, found: 0 });
        }
        let p = pv.as_slice();
        let mut h = h0.to_vec();
        let mut steps = Vec::with_capacity(xs.len());
        let mut hidden = Vec::with_capacity(xs.len());
        for x in xs {
            check_len(self.inputs, x.len())?;
            let (hn, c) = self.step_cached(p, x, &h);
            steps.push(c);
            hidden.push(hn.clone());
            h = hn;
        }
        Ok(GruTrace { generation: pv.generation(), steps, hidden })
    }

    /// Backpropagation through time. `g_hidden[t]` is `dL/d hidden[t]` from outside the
    /// recurrence. Accumulates parameter gradients and returns `(dL/dxs, dL/dh0)`.
    pub fn unroll_backward(
        &self,
        pv: &ParamVector,
        trace: &GruTrace,
        g_hidden: &[Vec<f64>],
        grad: &mut [f64],
    ) -> Result<(Vec<Vec<f64>>, Vec<f64>), NnError> {
        if trace.generation != pv.generation() {
            return Err(NnError::StaleCache);
        }
        check_len(trace.steps.len(), g_hidden.len())?;
        check_len(pv.len(), grad.len())?;
        let p = pv.as_slice();
        let hd = self.hidden;
        let mut dh = vec![0.0; hd];
        let mut gxs = vec![Vec::new(); trace.steps.len()];
        let mut da = vec![0.0; 3 * hd];
        let mut du = vec![0.0; 3 * hd];
        let mut tmp = Vec::new();
        for t in (0..trace.steps.len()).rev() {
            let c = &trace.steps[t];
            for k in 0..hd {
                dh[k] += g_hidden[t][k];
            }
            for k in 0..hd {
                let g = dh[k];
                let dn = g * (1.0 - c.z[k]);
                let dz = g * (c.h_prev[k] - c.n[k]);
                let dan = dn * (1.0 - c.n[k] * c.n[k]);
                let dr = dan * c.un[k];
                let daz = dz * c.z[k] * (1.0 - c.z[k]);
                let dar = dr * c.r[k] * (1.0 - c.r[k]);
                da[k] = daz;
                da[hd + k] = dar;
                da[2 * hd + k] = dan;
                du[k] = daz;
                du[hd + k] = dar;
                du[2 * hd + k] = dan * c.r[k];
                dh[k] = g * c.z[k];
            }
            self.w.backward(p, &c.x, &da, grad, &mut gxs[t]);
            self.u.backward(p, &c.h_prev, &du, grad, &mut tmp);
            for k in 0..hd {
                dh[k] += tmp[k];
            }
        }
        Ok((gxs, dh))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{finite_difference, relative_error};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_weights_hold_the_fixed_point() {
        let mut pv = ParamVector::new();
        let g = GruCell::new(&mut pv, "g", 2, 3);
        let tr = g.unroll(&pv, &[0.0; 3], &vec![vec![1.0, -1.0]; 4]).unwrap();
        // z = 1/2, n = 0, so h stays 0
        assert!(tr.hidden.iter().flatten().all(|v| *v == 0.0));
    }

    #[test]
    fn single_step_matches_step() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut pv = ParamVector::new();
        let g = GruCell::new(&mut pv, "g", 2, 3);
        g.init(&mut pv, &mut rng);
        let tr = g.unroll(&pv, &[0.1, 0.2, 0.3], &[vec![0.5, -0.5]]).unwrap();
        assert_eq!(tr.hidden[0], g.step(&pv, &[0.5, -0.5], &[0.1, 0.2, 0.3]).unwrap());
    }

    #[test]
    fn bptt_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..10 {
            let mut pv = ParamVector::new();
            let g = GruCell::new(&mut pv, "g", 3, 4);
            g.init(&mut pv, &mut rng);
            let xs: Vec<Vec<f64>> = (0..5).map(|_| (0..3).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
            let h0: Vec<f64> = (0..4).map(|_| rng.random_range(-0.5..0.5)).collect();
            let ws: Vec<Vec<f64>> = (0..5).map(|_| (0..4).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
            let loss = |pv: &ParamVector, xs: &[Vec<f64>], h0: &[f64]| -> f64 {
                let tr = g.unroll(pv, h0, xs).unwrap();
                tr.hidden.iter().zip(&ws).map(|(h, w)| h.iter().zip(w).map(|(a, b)| a * b).sum::<f64>()).sum()
            };
            let tr = g.unroll(&pv, &h0, &xs).unwrap();
            let mut grad = vec![0.0; pv.len()];
            let (gxs, gh0) = g.unroll_backward(&pv, &tr, &ws, &mut grad).unwrap();

            let coords: Vec<usize> = (0..pv.len()).collect();
            let mut theta = pv.as_slice().to_vec();
            let fd = finite_difference(&mut theta, &coords, 1e-5, |t| {
                let mut q = pv.clone();
                q.as_mut_slice().copy_from_slice(t);
                loss(&q, &xs, &h0)
            });
            assert!(relative_error(&grad, &fd) < 1e-6);

            let mut h = h0.clone();
            let fd_h0 = finite_difference(&mut h, &[0, 1, 2, 3], 1e-5, |h| loss(&pv, &xs, h));
            assert!(relative_error(&gh0, &fd_h0) < 1e-6);

            let mut flat: Vec<f64> = xs.concat();
            let fd_x = finite_difference(&mut flat, &(0..15).collect::<Vec<_>>(), 1e-5, |f| {
                let xs: Vec<Vec<f64>> = f.chunks(3).map(|c| c.to_vec()).collect();
                loss(&pv, &xs, &h0)
            });
            assert!(relative_error(&gxs.concat(), &fd_x) < 1e-6);
        }
    }
}
