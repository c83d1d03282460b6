//! Small dense networks with hand-written reverse-mode gradients.
//!
//! Models register named segments in a shared [`ParamVector`] and read their
//! weights from it; gradients are accumulated into flat buffers with the same
//! layout.

mod adam;
mod gru;
mod mlp;
mod params;

pub use adam::{clip_grad_norm, Adam};
pub use gru::{GruCell, GruTrace};
pub use mlp::{log_softmax, softmax, Head, Linear, Mlp, MlpCache};
pub use params::{ParamVector, Segment};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("shape mismatch: expected {expected}, found {found}")]
    Shape { expected: usize, found: usize },
    #[error("cached activations are stale (parameters changed since the forward pass)")]
    StaleCache,
    #[error("unknown segment `{0}`")]
    UnknownSegment(String),
    #[error("params file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub(crate) fn check_len(expected: usize, found: usize) -> Result<(), NnError> {
    if expected == found {
        Ok(())
    } else {
        Err(NnError::Shape { expected, found })
    }
}

/// Norm-wise relative error `|a - b| / max(|a|, |b|)`, 0 when both vanish.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let diff = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    let scale = na.max(nb);
    if scale == 0.0 {
        0.0
    } else {
        diff / scale
    }
}

/// Central finite-difference gradient of `f` at `x` over the given coordinates.
pub fn finite_difference(x: &mut [f64], coords: &[usize], h: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    coords
        .iter()
        .map(|&i| {
            let orig = x[i];
            x[i] = orig + h;
            let up = f(x);
            x[i] = orig - h;
            let down = f(x);
            x[i] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}
