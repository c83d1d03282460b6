use std::fmt;

/// What a hold operator keeps true: either a named atomic proposition or `T`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Target {
    True,
    Atom(String),
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Target::True => f.write_str("T"),
            Target::Atom(name) => f.write_str(name),
        }
    }
}

/// TWTL abstract syntax tree.
///
/// Durations and window bounds are measured in discrete steps.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Formula {
    Hold { duration: usize, target: Target },
    Concat(Box<Formula>, Box<Formula>),
    Disj(Box<Formula>, Box<Formula>),
    Within { inner: Box<Formula>, start: usize, end: usize },
}

/// A within node whose window is shorter than the task it encloses.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeasibilityViolation {
    pub start: usize,
    pub end: usize,
    pub inner_horizon: usize,
    pub rendered: String,
}

impl fmt::Display for FeasibilityViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "window [{},{}] of length {} is shorter than enclosed horizon {} in `{}`",
            self.start,
            self.end,
            self.end - self.start,
            self.inner_horizon,
            self.rendered
        )
    }
}

impl Formula {
    pub fn hold(duration: usize, target: Target) -> Self {
        Formula::Hold { duration, target }
    }

    pub fn atom(duration: usize, name: &str) -> Self {
        Formula::Hold { duration, target: Target::Atom(name.to_string()) }
    }

    pub fn concat(left: Formula, right: Formula) -> Self {
        Formula::Concat(Box::new(left), Box::new(right))
    }

    pub fn disj(left: Formula, right: Formula) -> Self {
        Formula::Disj(Box::new(left), Box::new(right))
    }

    /// Panics if `start > end`; the parser reports that case as a syntax error instead.
    pub fn within(inner: Formula, start: usize, end: usize) -> Self {
        assert!(start <= end, "within window [{start},{end}] is reversed");
        Formula::Within { inner: Box::new(inner), start, end }
    }

    /// Minimum number of steps needed to decide the formula, `||f||`.
    pub fn time_horizon(&self) -> usize {
        match self {
            Formula::Hold { duration, .. } => *duration,
            Formula::Concat(l, r) => l.time_horizon() + r.time_horizon() + 1,
            Formula::Disj(l, r) => l.time_horizon().max(r.time_horizon()),
            Formula::Within { end, .. } => *end,
        }
    }

    /// Shortest window span (`t2 - t1`) on which the formula can possibly hold.
    ///
    /// Equals the time horizon except under disjunction, which only needs
    /// its cheaper branch.
    pub fn min_span(&self) -> usize {
        match self {
            Formula::Hold { duration, .. } => *duration,
            Formula::Concat(l, r) => l.min_span() + r.min_span() + 1,
            Formula::Disj(l, r) => l.min_span().min(r.min_span()),
            Formula::Within { end, .. } => *end,
        }
    }

    /// Every within node must satisfy `end - start >= ||inner||`.
    pub fn check_feasibility(&self) -> Vec<FeasibilityViolation> {
        let mut out = Vec::new();
        self.collect_violations(&mut out);
        out
    }

    pub fn is_feasible(&self) -> bool {
        self.check_feasibility().is_empty()
    }

    fn collect_violations(&self, out: &mut Vec<FeasibilityViolation>) {
        match self {
            Formula::Hold { .. } => {}
            Formula::Concat(l, r) | Formula::Disj(l, r) => {
                l.collect_violations(out);
                r.collect_violations(out);
            }
            Formula::Within { inner, start, end } => {
                inner.collect_violations(out);
                let inner_horizon = inner.time_horizon();
                if end - start < inner_horizon {
                    out.push(FeasibilityViolation {
                        start: *start,
                        end: *end,
                        inner_horizon,
                        rendered: self.to_string(),
                    });
                }
            }
        }
    }

    /// Atomic proposition names in first-occurrence order.
    pub fn atoms(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        self.visit_atoms(&mut |name| {
            if !out.contains(&name) {
                out.push(name);
            }
        });
        out
    }

    fn visit_atoms<'a>(&'a self, f: &mut impl FnMut(&'a str)) {
        match self {
            Formula::Hold { target: Target::Atom(name), .. } => f(name),
            Formula::Hold { .. } => {}
            Formula::Concat(l, r) | Formula::Disj(l, r) => {
                l.visit_atoms(f);
                r.visit_atoms(f);
            }
            Formula::Within { inner, .. } => inner.visit_atoms(f),
        }
    }

    pub fn node_count(&self) -> usize {
        match self {
            Formula::Hold { .. } => 1,
            Formula::Concat(l, r) | Formula::Disj(l, r) => 1 + l.node_count() + r.node_count(),
            Formula::Within { inner, .. } => 1 + inner.node_count(),
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            Formula::Hold { .. } => 1,
            Formula::Concat(l, r) | Formula::Disj(l, r) => 1 + l.depth().max(r.depth()),
            Formula::Within { inner, .. } => 1 + inner.depth(),
        }
    }

    fn fmt_prec(&self, f: &mut fmt::Formatter<'_>, prec: u8) -> fmt::Result {
        // prec 0: disjunction level, 1: concatenation level, 2: primary
        match self {
            Formula::Hold { duration, target } => write!(f, "H^{duration} {target}"),
            Formula::Within { inner, start, end } => {
                write!(f, "[")?;
                inner.fmt_prec(f, 0)?;
                write!(f, "]^[{start},{end}]")
            }
            Formula::Disj(l, r) => {
                if prec > 0 {
                    write!(f, "(")?;
                }
                l.fmt_prec(f, 0)?;
                write!(f, " | ")?;
                r.fmt_prec(f, 1)?;
                if prec > 0 {
                    write!(f, ")")?;
                }
                Ok(())
            }
            Formula::Concat(l, r) => {
                if prec > 1 {
                    write!(f, "(")?;
                }
                l.fmt_prec(f, 1)?;
                write!(f, " . ")?;
                r.fmt_prec(f, 2)?;
                if prec > 1 {
                    write!(f, ")")?;
                }
                Ok(())
            }
        }
    }
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.fmt_prec(f, 0)
    }
}
