use std::collections::BTreeMap;
use std::fmt;

use super::TwtlError;

/// Named real parameters bound in a spec file.
pub type Params = BTreeMap<String, f64>;

/// Real-valued predicate function over one observation vector.
///
/// The proposition it defines holds at an observation iff the value is
/// strictly positive; thresholds are written into the expression itself.
#[derive(Debug, Clone, PartialEq)]
pub enum PredicateExpr {
    Const(f64),
    /// `o[i]`, the i-th observation component.
    Obs(usize),
    Param(String),
    Neg(Box<PredicateExpr>),
    Add(Box<PredicateExpr>, Box<PredicateExpr>),
    Sub(Box<PredicateExpr>, Box<PredicateExpr>),
    Mul(Box<PredicateExpr>, Box<PredicateExpr>),
    Abs(Box<PredicateExpr>),
    Sqrt(Box<PredicateExpr>),
    Min(Vec<PredicateExpr>),
    Max(Vec<PredicateExpr>),
    /// +1 when the argument is >= 0, -1 otherwise.
    Ind(Box<PredicateExpr>),
}

impl PredicateExpr {
    pub fn eval(&self, obs: &[f64], params: &Params) -> Result<f64, TwtlError> {
        use PredicateExpr::*;
        Ok(match self {
            Const(c) => *c,
            Obs(i) => *obs.get(*i).ok_or(TwtlError::IndexOutOfRange { index: *i, obs_dim: obs.len() })?,
            Param(name) => *params.get(name).ok_or_else(|| TwtlError::UnboundParameter(name.clone()))?,
            Neg(e) => -e.eval(obs, params)?,
            Add(a, b) => a.eval(obs, params)? + b.eval(obs, params)?,
            Sub(a, b) => a.eval(obs, params)? - b.eval(obs, params)?,
            Mul(a, b) => a.eval(obs, params)? * b.eval(obs, params)?,
            Abs(e) => e.eval(obs, params)?.abs(),
            // clamp keeps tiny negative rounding residue from producing NaN
            Sqrt(e) => e.eval(obs, params)?.max(0.0).sqrt(),
            Min(args) => {
                let mut acc = f64::INFINITY;
                for a in args {
                    acc = acc.min(a.eval(obs, params)?);
                }
                acc
            }
            Max(args) => {
                let mut acc = f64::NEG_INFINITY;
                for a in args {
                    acc = acc.max(a.eval(obs, params)?);
                }
                acc
            }
            Ind(e) => {
                if e.eval(obs, params)? >= 0.0 {
                    1.0
                } else {
                    -1.0
                }
            }
        })
    }

    /// Replace every parameter reference by its bound value.
    pub fn bind(&self, params: &Params) -> Result<PredicateExpr, TwtlError> {
        use PredicateExpr::*;
        let b = |e: &PredicateExpr| e.bind(params).map(Box::new);
        Ok(match self {
            Const(c) => Const(*c),
            Obs(i) => Obs(*i),
            Param(name) => Const(*params.get(name).ok_or_else(|| TwtlError::UnboundParameter(name.clone()))?),
            Neg(e) => Neg(b(e)?),
            Add(x, y) => Add(b(x)?, b(y)?),
            Sub(x, y) => Sub(b(x)?, b(y)?),
            Mul(x, y) => Mul(b(x)?, b(y)?),
            Abs(e) => Abs(b(e)?),
            Sqrt(e) => Sqrt(b(e)?),
            Min(args) => Min(args.iter().map(|a| a.bind(params)).collect::<Result<_, _>>()?),
            Max(args) => Max(args.iter().map(|a| a.bind(params)).collect::<Result<_, _>>()?),
            Ind(e) => Ind(b(e)?),
        })
    }

    /// Calls `f` on every sub-expression, parents first.
    pub fn walk(&self, f: &mut impl FnMut(&PredicateExpr)) {
        use PredicateExpr::*;
        f(self);
        match self {
            Const(_) | Obs(_) | Param(_) => {}
            Neg(e) | Abs(e) | Sqrt(e) | Ind(e) => e.walk(f),
            Add(a, b) | Sub(a, b) | Mul(a, b) => {
                a.walk(f);
                b.walk(f);
            }
            Min(args) | Max(args) => args.iter().for_each(|a| a.walk(f)),
        }
    }

    fn prec(&self) -> u8 {
        match self {
            PredicateExpr::Add(..) | PredicateExpr::Sub(..) => 1,
            PredicateExpr::Mul(..) => 2,
            PredicateExpr::Neg(_) => 3,
            PredicateExpr::Const(c) if *c < 0.0 || c.is_sign_negative() => 3,
            _ => 4,
        }
    }

    fn fmt_child(&self, f: &mut fmt::Formatter<'_>, min_prec: u8) -> fmt::Result {
        if self.prec() < min_prec {
            write!(f, "({self})")
        } else {
            write!(f, "{self}")
        }
    }
}

fn write_args(f: &mut fmt::Formatter<'_>, name: &str, args: &[PredicateExpr]) -> fmt::Result {
    write!(f, "{name}(")?;
    for (i, a) in args.iter().enumerate() {
        if i > 0 {
            write!(f, ", ")?;
        }
        write!(f, "{a}")?;
    }
    write!(f, ")")
}

impl fmt::Display for PredicateExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use PredicateExpr::*;
        match self {
            Const(c) if c.is_sign_negative() => write!(f, "-{}", -c),
            Const(c) => write!(f, "{c}"),
            Obs(i) => write!(f, "o[{i}]"),
            Param(name) => f.write_str(name),
            Neg(e) => {
                write!(f, "-")?;
                // `--x` would still parse, but keep nested negation readable
                e.fmt_child(f, 4)
            }
            Add(a, b) => {
                a.fmt_child(f, 1)?;
                write!(f, " + ")?;
                b.fmt_child(f, 2)
            }
            Sub(a, b) => {
                a.fmt_child(f, 1)?;
                write!(f, " - ")?;
                b.fmt_child(f, 2)
            }
            Mul(a, b) => {
                a.fmt_child(f, 2)?;
                write!(f, " * ")?;
                b.fmt_child(f, 3)
            }
            Abs(e) => write!(f, "abs({e})"),
            Sqrt(e) => write!(f, "sqrt({e})"),
            Ind(e) => write!(f, "ind({e})"),
            Min(args) => write_args(f, "min", args),
            Max(args) => write_args(f, "max", args),
        }
    }
}
