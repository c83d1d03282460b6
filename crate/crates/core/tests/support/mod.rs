#![allow(dead_code)]
//! Shared oracles for integration and acceptance tests.

use rand::Rng;
use twtlrl_core::twtl::{parse_spec, Formula, SpecFile, Target};

/// Two-proposition spec: `A := o[0]`, `B := o[1]`.
pub fn ab_spec() -> SpecFile {
    parse_spec("obs_dim 2\npred A := o[0]\npred B := o[1]\nformula := H^0 A\n").unwrap()
}

fn value(target: &Target, o: &[f64]) -> f64 {
    match target {
        Target::True => f64::INFINITY,
        Target::Atom(a) if a == "A" => o[0],
        Target::Atom(_) => o[1],
    }
}

/// Unmemoized robustness recursion over `word[i1..=i2]`.
pub fn brute_rob(f: &Formula, w: &[Vec<f64>], i1: usize, i2: usize) -> f64 {
    match f {
        Formula::Hold { duration, target } => {
            if i2 - i1 < *duration {
                return f64::NEG_INFINITY;
            }
            (i1..=i1 + duration).map(|t| value(target, &w[t])).fold(f64::INFINITY, f64::min)
        }
        Formula::Disj(l, r) => brute_rob(l, w, i1, i2).max(brute_rob(r, w, i1, i2)),
        Formula::Concat(l, r) => {
            (i1..i2).map(|i| brute_rob(l, w, i1, i).min(brute_rob(r, w, i + 1, i2))).fold(f64::NEG_INFINITY, f64::max)
        }
        Formula::Within { inner, start, end } => {
            if i2 - i1 < *end {
                return f64::NEG_INFINITY;
            }
            (i1 + start..=i1 + end).map(|i| brute_rob(inner, w, i, i1 + end)).fold(f64::NEG_INFINITY, f64::max)
        }
    }
}

/// Unmemoized Boolean semantics; `earliest` selects the earliest-split concatenation.
pub fn brute_sat(f: &Formula, w: &[Vec<f64>], i1: usize, i2: usize, earliest: bool) -> bool {
    match f {
        Formula::Hold { duration, target } => {
            i2 - i1 >= *duration && (i1..=i1 + duration).all(|t| value(target, &w[t]) > 0.0)
        }
        Formula::Disj(l, r) => brute_sat(l, w, i1, i2, earliest) || brute_sat(r, w, i1, i2, earliest),
        Formula::Concat(l, r) => {
            if earliest {
                match (i1..=i2).find(|&t| brute_sat(l, w, i1, t, earliest)) {
                    Some(t) if t < i2 => brute_sat(r, w, t + 1, i2, earliest),
                    _ => false,
                }
            } else {
                (i1..i2).any(|i| brute_sat(l, w, i1, i, earliest) && brute_sat(r, w, i + 1, i2, earliest))
            }
        }
        Formula::Within { inner, start, end } => {
            i2 - i1 >= *end && (i1 + start..=i1 + end).any(|i| brute_sat(inner, w, i, i1 + end, earliest))
        }
    }
}

/// Random formula of depth at most `depth` over `A`, `B` and `T`.
pub fn random_formula(rng: &mut impl Rng, depth: usize) -> Formula {
    let leaf = |rng: &mut dyn rand::RngCore| {
        let target = match rng.random_range(0..5) {
            0 => Target::True,
            1 | 2 => Target::Atom("A".into()),
            _ => Target::Atom("B".into()),
        };
        Formula::Hold { duration: rng.random_range(0..3), target }
    };
    if depth == 0 || rng.random_bool(0.3) {
        return leaf(rng);
    }
    match rng.random_range(0..3) {
        0 => Formula::concat(random_formula(rng, depth - 1), random_formula(rng, depth - 1)),
        1 => Formula::disj(random_formula(rng, depth - 1), random_formula(rng, depth - 1)),
        _ => {
            let inner = random_formula(rng, depth - 1);
            let h = inner.time_horizon();
            let start = rng.random_range(0..3);
            let end = start + h + rng.random_range(0..3);
            Formula::within(inner, start, end)
        }
    }
}

/// Random word with values drawn from a small grid so ties and zeros occur.
pub fn random_word(rng: &mut impl Rng, len: usize) -> Vec<Vec<f64>> {
    const GRID: [f64; 7] = [-2.0, -1.0, -0.5, 0.0, 0.5, 1.0, 2.0];
    (0..len).map(|_| vec![GRID[rng.random_range(0..7)], GRID[rng.random_range(0..7)]]).collect()
}
