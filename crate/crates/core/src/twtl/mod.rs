//! Time Window Temporal Logic: spec files, horizons, Boolean and robustness semantics.

mod eval;
mod formula;
mod parser;
mod predicate;
mod spec;
mod word;

pub use eval::{concrete_reward, robustness, satisfies, satisfies_with, windowed_rewards, ConcatSplit, Robustness};
pub use formula::{FeasibilityViolation, Formula, Target};
pub use parser::{parse_formula_str, parse_predicate_str, ParseError};
pub use predicate::{Params, PredicateExpr};
pub use spec::{parse_spec, SpecFile};
pub use word::ObservationWord;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum TwtlError {
    #[error("syntax error at {0}")]
    Syntax(#[from] ParseError),
    #[error("unknown proposition `{0}`")]
    UnknownProposition(String),
    #[error("unbound parameter `{0}`")]
    UnboundParameter(String),
    #[error("observation index o[{index}] out of range for obs_dim {obs_dim}")]
    IndexOutOfRange { index: usize, obs_dim: usize },
    #[error("infeasible formula: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    Infeasible(Vec<FeasibilityViolation>),
    #[error("invalid spec: {0}")]
    InvalidSpec(String),
    #[error("observation {index} has dimension {found}, expected {expected}")]
    DimensionMismatch { expected: usize, found: usize, index: usize },
    #[error("observation word is empty")]
    EmptyWord,
    #[error("bad trajectory file: {0}")]
    Trajectory(String),
    #[error("word of length {len} is shorter than horizon + 1 = {needed}")]
    WordTooShort { len: usize, needed: usize },
}
