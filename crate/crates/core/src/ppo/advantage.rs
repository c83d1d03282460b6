use super::ShapingForm;

/// `g(eps, A)`: the clipped advantage bound.
pub fn clip_bound(eps: f64, adv: f64) -> f64 {
    if adv >= 0.0 {
        (1.0 + eps) * adv
    } else {
        (1.0 - eps) * adv
    }
}

/// Per-sample clipped surrogate `min(ratio * A, g(eps, A))`.
pub fn clipped_objective(ratio: f64, adv: f64, eps: f64) -> f64 {
    (ratio * adv).min(clip_bound(eps, adv))
}

/// Whether the unclipped branch is the active one (so the gradient flows through the ratio).
pub fn ratio_branch_active(ratio: f64, adv: f64, eps: f64) -> bool {
    ratio * adv <= clip_bound(eps, adv)
}

/// Shaping increment from the potentials of `x_t` and `x_{t+1}`.
///
/// Potential form: `gamma * phi_next - phi`. Reversed form: `kappa * phi - phi_next`.
pub fn shaping_increment(phi: f64, phi_next: f64, gamma: f64, kappa: f64, form: ShapingForm) -> f64 {
    match form {
        ShapingForm::Potential => gamma * phi_next - phi,
        ShapingForm::Reversed => kappa * phi - phi_next,
    }
}

/// Generalized advantage estimation.
///
/// `next_values[t]` is the value of the successor of step `t` (0 after a
/// termination, the bootstrap estimate after a truncation). `ends[t]` marks the
/// last step of an episode. Returns `(advantages, return_targets)`.
pub fn gae(
    rewards: &[f64],
    values: &[f64],
    next_values: &[f64],
    ends: &[bool],
    gamma: f64,
    lambda: f64,
) -> Result<(Vec<f64>, Vec<f64>), String> {
    let n = rewards.len();
    if values.len() != n || next_values.len() != n || ends.len() != n {
        return Err(format!(
            "length mismatch: rewards {n}, values {}, next_values {}, ends {}",
            values.len(),
            next_values.len(),
            ends.len()
        ));
    }
    let mut adv = vec![0.0; n];
    let mut acc = 0.0;
    for t in (0..n).rev() {
        if ends[t] {
            acc = 0.0;
        }
        let delta = rewards[t] + gamma * next_values[t] - values[t];
        acc = delta + gamma * lambda * acc;
        adv[t] = acc;
    }
    let targets = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    Ok((adv, targets))
}

/// Shift and scale to zero mean and unit (population) standard deviation.
pub fn normalize(xs: &mut [f64]) {
    if xs.len() < 2 {
        return;
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let std = (xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n).sqrt();
    let s = if std > 1e-12 { std } else { 1.0 };
    xs.iter_mut().for_each(|x| *x = (*x - mean) / s);
}
