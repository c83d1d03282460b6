//! Boolean and quantitative (robustness) evaluation of TWTL formulas.
//!
//! Both evaluators flatten the formula into an arena and memoize on
//! `(node, window)`. A node whose value only depends on the window end
//! through a length check (hold, within, and disjunctions of those) has its
//! window end clamped before lookup, so concatenation splits share entries.

use std::collections::HashMap;
use std::fmt;

use super::formula::{Formula, Target};
use super::spec::SpecFile;
use super::word::ObservationWord;
use super::TwtlError;

/// Robustness degree over the extended reals.
///
/// Infinities are the IEEE ones, which order correctly under `min`/`max`;
/// finite values come straight from predicate arithmetic.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Robustness(f64);

impl Robustness {
    pub const NEG_INF: Robustness = Robustness(f64::NEG_INFINITY);
    pub const POS_INF: Robustness = Robustness(f64::INFINITY);

    pub fn finite(v: f64) -> Self {
        debug_assert!(v.is_finite());
        Robustness(v)
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn is_finite(self) -> bool {
        self.0.is_finite()
    }

    /// Map the symbolic infinities into `[-r_max, r_max]`.
    pub fn clamped(self, r_max: f64) -> f64 {
        self.0.clamp(-r_max, r_max)
    }
}

impl fmt::Display for Robustness {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0 == f64::INFINITY {
            f.write_str("inf")
        } else if self.0 == f64::NEG_INFINITY {
            f.write_str("-inf")
        } else {
            write!(f, "{}", self.0)
        }
    }
}

/// How the Boolean evaluator picks the concatenation split.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ConcatSplit {
    /// Some split satisfies both halves. Sign-consistent with robustness.
    #[default]
    Any,
    /// Only the earliest prefix-satisfying split is tried.
    Earliest,
}

#[derive(Debug, Clone)]
enum Node {
    Hold { duration: usize, atom: Option<usize> },
    Concat(usize, usize),
    Disj(usize, usize),
    Within { inner: usize, start: usize, end: usize },
}

#[derive(Debug, Clone)]
struct Compiled {
    nodes: Vec<Node>,
    min_span: Vec<usize>,
    horizon: Vec<usize>,
    // value depends on the window end only through `t2 - t1 >= horizon`
    end_invariant: Vec<bool>,
    // concatenation whose right operand is end-invariant and -inf below its horizon:
    // values for growing window ends are a running max over splits
    prefix_row: Vec<bool>,
    root: usize,
}

impl Compiled {
    fn new(formula: &Formula, atoms: &[&str]) -> Self {
        let mut c = Compiled {
            nodes: vec![],
            min_span: vec![],
            horizon: vec![],
            end_invariant: vec![],
            prefix_row: vec![],
            root: 0,
        };
        c.root = c.add(formula, atoms);
        c
    }

    fn add(&mut self, f: &Formula, atoms: &[&str]) -> usize {
        let (node, invariant) = match f {
            Formula::Hold { duration, target } => {
                let atom = match target {
                    Target::True => None,
                    Target::Atom(name) => Some(atoms.iter().position(|a| a == name).expect("atom indexed")),
                };
                (Node::Hold { duration: *duration, atom }, true)
            }
            Formula::Concat(l, r) => {
                let (l, r) = (self.add(l, atoms), self.add(r, atoms));
                (Node::Concat(l, r), false)
            }
            Formula::Disj(l, r) => {
                let (l, r) = (self.add(l, atoms), self.add(r, atoms));
                let inv = self.end_invariant[l] && self.end_invariant[r];
                (Node::Disj(l, r), inv)
            }
            Formula::Within { inner, start, end } => {
                let inner = self.add(inner, atoms);
                (Node::Within { inner, start: *start, end: *end }, true)
            }
        };
        self.nodes.push(node);
        self.min_span.push(f.min_span());
        self.horizon.push(f.time_horizon());
        self.end_invariant.push(invariant);
        let row = match node_kind_concat(&self.nodes) {
            Some(r) => self.end_invariant[r] && self.min_span[r] == self.horizon[r],
            None => false,
        };
        self.prefix_row.push(row);
        self.nodes.len() - 1
    }
}

fn node_kind_concat(nodes: &[Node]) -> Option<usize> {
    match nodes.last() {
        Some(Node::Concat(_, r)) => Some(*r),
        _ => None,
    }
}

/// Per-word evaluation state: predicate table, hold minima and memo tables.
struct Evaluator {
    compiled: Compiled,
    // hold_min[node][t] = min over [t, t + d] of the held predicate
    hold_min: Vec<Option<Vec<f64>>>,
    len: usize,
    rob_memo: HashMap<(usize, usize, usize), f64>,
    sat_memo: HashMap<(usize, usize, usize), bool>,
    // running max (or any) over concatenation splits, keyed by (node, i1)
    rob_rows: HashMap<(usize, usize), Vec<f64>>,
    sat_rows: HashMap<(usize, usize), Vec<bool>>,
}

/// Sliding-window minimum over `[t, t + d]` for every `t` with `t + d < values.len()`.
fn window_min(values: &[f64], d: usize) -> Vec<f64> {
    let n = values.len();
    if n <= d {
        return Vec::new();
    }
    let mut out = vec![0.0; n - d];
    let mut deque: std::collections::VecDeque<usize> = std::collections::VecDeque::new();
    for i in (0..n).rev() {
        while deque.back().is_some_and(|&j| values[j] >= values[i]) {
            deque.pop_back();
        }
        deque.push_back(i);
        while deque.front().is_some_and(|&j| j > i + d) {
            deque.pop_front();
        }
        if i + d < n {
            out[i] = values[*deque.front().unwrap()];
        }
    }
    out
}

impl Evaluator {
    fn new(word: &ObservationWord, formula: &Formula, spec: &SpecFile) -> Result<Self, TwtlError> {
        let dim = spec.obs_dim();
        if word.dim() != dim {
            return Err(TwtlError::DimensionMismatch { expected: dim, found: word.dim(), index: 0 });
        }
        let atom_names: Vec<&str> = formula.atoms();
        let bound = spec.bound_atoms();
        let no_params = Default::default();
        let mut table: Vec<Vec<f64>> = Vec::with_capacity(atom_names.len());
        for name in &atom_names {
            let expr = match bound.iter().find(|(n, _)| n == name) {
                Some((_, e)) => e.clone(),
                None => {
                    let raw = spec.predicates().get(*name).ok_or_else(|| TwtlError::UnknownProposition(name.to_string()))?;
                    raw.bind(spec.params())?
                }
            };
            let mut column = Vec::with_capacity(word.len());
            for o in word.observations() {
                column.push(expr.eval(o, &no_params)?);
            }
            table.push(column);
        }
        let compiled = Compiled::new(formula, &atom_names);
        let hold_min = compiled
            .nodes
            .iter()
            .map(|n| match n {
                Node::Hold { duration, atom: Some(a) } => Some(window_min(&table[*a], *duration)),
                _ => None,
            })
            .collect();
        Ok(Evaluator {
            compiled,
            hold_min,
            len: word.len(),
            rob_memo: HashMap::new(),
            sat_memo: HashMap::new(),
            rob_rows: HashMap::new(),
            sat_rows: HashMap::new(),
        })
    }

    fn key(&self, n: usize, i1: usize, i2: usize) -> (usize, usize, usize) {
        let h = self.compiled.horizon[n];
        if self.compiled.end_invariant[n] && i2 - i1 >= h {
            (n, i1, i1 + h)
        } else {
            (n, i1, i2)
        }
    }

    fn robustness(&mut self, n: usize, i1: usize, i2: usize) -> f64 {
        if i2 - i1 < self.compiled.min_span[n] {
            return f64::NEG_INFINITY;
        }
        if let Node::Hold { atom, .. } = self.compiled.nodes[n] {
            return match atom {
                None => f64::INFINITY,
                Some(_) => self.hold_min[n].as_ref().unwrap()[i1],
            };
        }
        if self.compiled.prefix_row[n] {
            return self.concat_row_robustness(n, i1, i2);
        }
        let key = self.key(n, i1, i2);
        if let Some(&v) = self.rob_memo.get(&key) {
            return v;
        }
        let v = match self.compiled.nodes[n].clone() {
            Node::Hold { .. } => unreachable!(),
            Node::Disj(l, r) => self.robustness(l, i1, i2).max(self.robustness(r, i1, i2)),
            Node::Concat(l, r) => {
                let lo = i1 + self.compiled.min_span[l];
                let hi = i2 - 1 - self.compiled.min_span[r];
                let mut best = f64::NEG_INFINITY;
                for i in lo..=hi {
                    let left = self.robustness(l, i1, i);
                    if left <= best {
                        continue;
                    }
                    best = best.max(left.min(self.robustness(r, i + 1, i2)));
                }
                best
            }
            Node::Within { inner, start, end } => {
                let mut best = f64::NEG_INFINITY;
                for i in (i1 + start)..=(i1 + end) {
                    best = best.max(self.robustness(inner, i, i1 + end));
                }
                best
            }
        };
        self.rob_memo.insert(key, v);
        v
    }

    // Concat(l, r) where r is -inf on spans shorter than its horizon h and
    // end-invariant beyond: only splits i <= i2 - 1 - h count, and each
    // contributes min(rob(l, i1, i), rob(r, i + 1, i + 1 + h)).
    fn concat_row_robustness(&mut self, n: usize, i1: usize, i2: usize) -> f64 {
        let Node::Concat(l, r) = self.compiled.nodes[n] else { unreachable!() };
        let h = self.compiled.horizon[r];
        let lo = i1 + self.compiled.min_span[l];
        let last = i2 - 1 - h;
        let mut row = self.rob_rows.remove(&(n, i1)).unwrap_or_default();
        while row.len() <= last - lo {
            let i = lo + row.len();
            let v = self.robustness(l, i1, i).min(self.robustness(r, i + 1, i + 1 + h));
            let prev = row.last().copied().unwrap_or(f64::NEG_INFINITY);
            row.push(prev.max(v));
        }
        let v = row[last - lo];
        self.rob_rows.insert((n, i1), row);
        v
    }

    fn concat_row_satisfies(&mut self, n: usize, i1: usize, i2: usize) -> bool {
        let Node::Concat(l, r) = self.compiled.nodes[n] else { unreachable!() };
        let h = self.compiled.horizon[r];
        let lo = i1 + self.compiled.min_span[l];
        let last = i2 - 1 - h;
        let mut row = self.sat_rows.remove(&(n, i1)).unwrap_or_default();
        while row.len() <= last - lo {
            let i = lo + row.len();
            let v = self.satisfies(l, i1, i, ConcatSplit::Any) && self.satisfies(r, i + 1, i + 1 + h, ConcatSplit::Any);
            let prev = row.last().copied().unwrap_or(false);
            row.push(prev || v);
        }
        let v = row[last - lo];
        self.sat_rows.insert((n, i1), row);
        v
    }

    fn satisfies(&mut self, n: usize, i1: usize, i2: usize, split: ConcatSplit) -> bool {
        if i2 - i1 < self.compiled.min_span[n] {
            return false;
        }
        if let Node::Hold { atom, .. } = self.compiled.nodes[n] {
            return match atom {
                None => true,
                Some(_) => self.hold_min[n].as_ref().unwrap()[i1] > 0.0,
            };
        }
        if split == ConcatSplit::Any && self.compiled.prefix_row[n] {
            return self.concat_row_satisfies(n, i1, i2);
        }
        let key = self.key(n, i1, i2);
        if let Some(&v) = self.sat_memo.get(&key) {
            return v;
        }
        let v = match self.compiled.nodes[n].clone() {
            Node::Hold { .. } => unreachable!(),
            Node::Disj(l, r) => self.satisfies(l, i1, i2, split) || self.satisfies(r, i1, i2, split),
            Node::Concat(l, r) => match split {
                ConcatSplit::Any => {
                    let lo = i1 + self.compiled.min_span[l];
                    let hi = i2 - 1 - self.compiled.min_span[r];
                    (lo..=hi).any(|i| self.satisfies(l, i1, i, split) && self.satisfies(r, i + 1, i2, split))
                }
                ConcatSplit::Earliest => match (i1..=i2).find(|&t| self.satisfies(l, i1, t, split)) {
                    Some(t) if t < i2 => self.satisfies(r, t + 1, i2, split),
                    _ => false,
                },
            },
            Node::Within { inner, start, end } => {
                ((i1 + start)..=(i1 + end)).any(|i| self.satisfies(inner, i, i1 + end, split))
            }
        };
        self.sat_memo.insert(key, v);
        v
    }
}

/// Boolean satisfaction `w |= f` over the whole word.
pub fn satisfies(word: &ObservationWord, formula: &Formula, spec: &SpecFile) -> Result<bool, TwtlError> {
    satisfies_with(word, formula, spec, ConcatSplit::Any)
}

pub fn satisfies_with(
    word: &ObservationWord,
    formula: &Formula,
    spec: &SpecFile,
    split: ConcatSplit,
) -> Result<bool, TwtlError> {
    let mut ev = Evaluator::new(word, formula, spec)?;
    let root = ev.compiled.root;
    Ok(ev.satisfies(root, 0, ev.len - 1, split))
}

/// Robustness degree of the whole word against `formula`.
pub fn robustness(word: &ObservationWord, formula: &Formula, spec: &SpecFile) -> Result<Robustness, TwtlError> {
    let mut ev = Evaluator::new(word, formula, spec)?;
    let root = ev.compiled.root;
    Ok(Robustness(ev.robustness(root, 0, ev.len - 1)))
}

/// Concrete-time reward: 1 iff the first `||f|| + 1` observations satisfy `f`.
pub fn concrete_reward(word: &ObservationWord, formula: &Formula, spec: &SpecFile) -> Result<u8, TwtlError> {
    let needed = formula.time_horizon() + 1;
    if word.len() < needed {
        return Err(TwtlError::WordTooShort { len: word.len(), needed });
    }
    let window = word.truncated(needed)?;
    Ok(u8::from(satisfies(&window, formula, spec)?))
}

/// `concrete_reward` for every start `t` with a full window `o_{t, t+||f||}` in `word`,
/// sharing one evaluator across windows.
pub fn windowed_rewards(word: &ObservationWord, formula: &Formula, spec: &SpecFile) -> Result<Vec<u8>, TwtlError> {
    let h = formula.time_horizon();
    let mut ev = Evaluator::new(word, formula, spec)?;
    let root = ev.compiled.root;
    Ok((0..word.len().saturating_sub(h)).map(|t| u8::from(ev.satisfies(root, t, t + h, ConcatSplit::Any))).collect())
}

/// Convenience wrappers using the spec's own formula.
impl SpecFile {
    pub fn robustness(&self, word: &ObservationWord) -> Result<Robustness, TwtlError> {
        robustness(word, self.formula(), self)
    }

    pub fn satisfies(&self, word: &ObservationWord) -> Result<bool, TwtlError> {
        satisfies(word, self.formula(), self)
    }

    pub fn concrete_reward(&self, word: &ObservationWord) -> Result<u8, TwtlError> {
        concrete_reward(word, self.formula(), self)
    }
}
