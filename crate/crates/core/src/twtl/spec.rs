use std::collections::BTreeMap;
use std::fmt;

use super::formula::Formula;
use super::parser::{parse_directives, Directive, ParseError};
use super::predicate::{Params, PredicateExpr};
use super::TwtlError;

/// A validated spec file: observation dimension, parameters, predicates and the task formula.
#[derive(Debug, Clone, PartialEq)]
pub struct SpecFile {
    obs_dim: usize,
    params: Params,
    predicates: BTreeMap<String, PredicateExpr>,
    formula: Formula,
    // predicates referenced by the formula with parameters substituted,
    // in `formula.atoms()` order
    bound: Vec<(String, PredicateExpr)>,
}

impl SpecFile {
    pub fn new(
        obs_dim: usize,
        params: Params,
        predicates: BTreeMap<String, PredicateExpr>,
        formula: Formula,
    ) -> Result<Self, TwtlError> {
        if obs_dim == 0 {
            return Err(TwtlError::InvalidSpec("obs_dim must be positive".into()));
        }
        for (name, expr) in &predicates {
            let mut err = None;
            expr.walk(&mut |e| {
                if err.is_some() {
                    return;
                }
                match e {
                    PredicateExpr::Obs(i) if *i >= obs_dim => {
                        err = Some(TwtlError::IndexOutOfRange { index: *i, obs_dim });
                    }
                    PredicateExpr::Param(p) if !params.contains_key(p) => {
                        err = Some(TwtlError::UnboundParameter(format!("{p} (in predicate `{name}`)")));
                    }
                    PredicateExpr::Const(c) if !c.is_finite() => {
                        err = Some(TwtlError::InvalidSpec(format!("non-finite constant in predicate `{name}`")));
                    }
                    _ => {}
                }
            });
            if let Some(e) = err {
                return Err(e);
            }
        }
        if let Some((name, _)) = params.iter().find(|(_, v)| !v.is_finite()) {
            return Err(TwtlError::InvalidSpec(format!("parameter `{name}` is not finite")));
        }
        let mut bound = Vec::new();
        for atom in formula.atoms() {
            let expr = predicates.get(atom).ok_or_else(|| TwtlError::UnknownProposition(atom.to_string()))?;
            bound.push((atom.to_string(), expr.bind(&params)?));
        }
        let violations = formula.check_feasibility();
        if !violations.is_empty() {
            return Err(TwtlError::Infeasible(violations));
        }
        Ok(SpecFile { obs_dim, params, predicates, formula, bound })
    }

    pub fn obs_dim(&self) -> usize {
        self.obs_dim
    }

    pub fn params(&self) -> &Params {
        &self.params
    }

    pub fn predicates(&self) -> &BTreeMap<String, PredicateExpr> {
        &self.predicates
    }

    pub fn formula(&self) -> &Formula {
        &self.formula
    }

    pub fn time_horizon(&self) -> usize {
        self.formula.time_horizon()
    }

    /// Atomic propositions used by the formula, with parameters already substituted.
    pub(crate) fn bound_atoms(&self) -> &[(String, PredicateExpr)] {
        &self.bound
    }

    /// Value of a named predicate at one observation.
    pub fn eval_predicate(&self, name: &str, obs: &[f64]) -> Result<f64, TwtlError> {
        if obs.len() != self.obs_dim {
            return Err(TwtlError::DimensionMismatch { expected: self.obs_dim, found: obs.len(), index: 0 });
        }
        let expr = self.predicates.get(name).ok_or_else(|| TwtlError::UnknownProposition(name.to_string()))?;
        expr.eval(obs, &self.params)
    }

    /// Same spec with a different task formula (re-validated).
    pub fn with_formula(&self, formula: Formula) -> Result<Self, TwtlError> {
        SpecFile::new(self.obs_dim, self.params.clone(), self.predicates.clone(), formula)
    }
}

/// `parse_spec`: text to validated [`SpecFile`].
pub fn parse_spec(text: &str) -> Result<SpecFile, TwtlError> {
    let directives = parse_directives(text)?;
    let mut obs_dim = None;
    let mut params = Params::new();
    let mut predicates = BTreeMap::new();
    let mut formula = None;
    let seen_line = |line: usize, message: String| TwtlError::Syntax(ParseError { line, column: 1, message, expected: vec![] });
    for d in directives {
        match d {
            Directive::ObsDim { value, line } => {
                if obs_dim.replace(value).is_some() {
                    return Err(seen_line(line, "duplicate `obs_dim`".into()));
                }
            }
            Directive::Param { name, value, line } => {
                if predicates.contains_key(&name) || params.insert(name.clone(), value).is_some() {
                    return Err(seen_line(line, format!("duplicate name `{name}`")));
                }
            }
            Directive::Pred { name, expr, line } => {
                if params.contains_key(&name) || predicates.insert(name.clone(), expr).is_some() {
                    return Err(seen_line(line, format!("duplicate name `{name}`")));
                }
            }
            Directive::Formula { formula: f, .. } => formula = Some(f),
        }
    }
    let obs_dim = obs_dim.ok_or_else(|| TwtlError::InvalidSpec("missing `obs_dim` directive".into()))?;
    let formula = formula.ok_or_else(|| TwtlError::InvalidSpec("missing `formula :=` directive".into()))?;
    SpecFile::new(obs_dim, params, predicates, formula)
}

impl fmt::Display for SpecFile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "obs_dim {}", self.obs_dim)?;
        for (name, value) in &self.params {
            writeln!(f, "param {name} = {value}")?;
        }
        for (name, expr) in &self.predicates {
            writeln!(f, "pred {name} := {expr}")?;
        }
        writeln!(f, "formula := {}", self.formula)
    }
}
