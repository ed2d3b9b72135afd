//! Solver-agnostic model representation for mixed-integer second-order cone
//! programs, plus the outer-approximation solve loop and a text exchange format.
//!
//! A model is a table of continuous/binary variables, sparse linear rows,
//! cone rows `‖A x + b‖ ≤ c·x + d` and a linear objective (always minimized).

mod backend;
pub mod conic;
mod oa;

pub use backend::{backend_by_name, BackendError, HighsBackend, MilpBackend, MilpProblem, MilpSolution, MilpStatus};
pub use oa::{separate_cut, solve_misocp, OptionsError, SolveError, SolveOptions, SolveResult, SolveStatus};

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Handle to a variable of an [`OptModel`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct VarId(pub usize);

/// Handle to a linear row of an [`OptModel`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RowId(pub usize);

/// Handle to a cone row of an [`OptModel`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SocId(pub usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum VarKind {
    Continuous,
    Binary,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Variable {
    pub name: String,
    pub kind: VarKind,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RowSense {
    Le,
    Ge,
    Eq,
}

/// Sparse affine expression `Σ coeff·x + constant`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct AffineExpr {
    pub terms: Vec<(VarId, f64)>,
    pub constant: f64,
}

impl AffineExpr {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn constant(c: f64) -> Self {
        Self { terms: Vec::new(), constant: c }
    }

    pub fn var(v: VarId) -> Self {
        Self { terms: vec![(v, 1.0)], constant: 0.0 }
    }

    pub fn term(mut self, v: VarId, coeff: f64) -> Self {
        self.terms.push((v, coeff));
        self
    }

    pub fn plus(mut self, c: f64) -> Self {
        self.constant += c;
        self
    }

    pub fn add_term(&mut self, v: VarId, coeff: f64) {
        self.terms.push((v, coeff));
    }

    pub fn eval(&self, values: &[f64]) -> f64 {
        self.terms.iter().map(|&(v, c)| c * values[v.0]).sum::<f64>() + self.constant
    }

    pub fn scaled(&self, k: f64) -> Self {
        Self { terms: self.terms.iter().map(|&(v, c)| (v, c * k)).collect(), constant: self.constant * k }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LinearRow {
    pub family: String,
    pub terms: Vec<(VarId, f64)>,
    pub sense: RowSense,
    pub rhs: f64,
}

impl LinearRow {
    pub fn activity(&self, values: &[f64]) -> f64 {
        self.terms.iter().map(|&(v, c)| c * values[v.0]).sum()
    }

    /// Amount by which `values` violates the row (zero when satisfied).
    pub fn violation(&self, values: &[f64]) -> f64 {
        let a = self.activity(values);
        match self.sense {
            RowSense::Le => (a - self.rhs).max(0.0),
            RowSense::Ge => (self.rhs - a).max(0.0),
            RowSense::Eq => (a - self.rhs).abs(),
        }
    }
}

/// Cone row `‖(v_1(x), …, v_k(x))‖₂ ≤ bound(x)`.
#[derive(Clone, Debug, PartialEq)]
pub struct SocRow {
    pub family: String,
    pub vector: Vec<AffineExpr>,
    pub bound: AffineExpr,
}

impl SocRow {
    pub fn norm(&self, values: &[f64]) -> f64 {
        self.vector.iter().map(|e| e.eval(values).powi(2)).sum::<f64>().sqrt()
    }

    /// Signed violation `‖u‖ − bound`; positive means infeasible.
    pub fn violation(&self, values: &[f64]) -> f64 {
        self.norm(values) - self.bound.eval(values)
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("row `{family}` references undeclared variable {var}")]
    UnknownVariable { family: String, var: usize },
    #[error("binary variable `{0}` has bounds outside [0, 1]")]
    BinaryBounds(String),
    #[error("variable `{0}` has lower bound above upper bound")]
    EmptyBounds(String),
    #[error("cone row `{0}` has no vector components")]
    EmptyCone(String),
    #[error("non-finite coefficient in `{0}`")]
    NonFinite(String),
}

/// Mixed-integer SOC model with a minimized linear objective.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct OptModel {
    pub vars: Vec<Variable>,
    pub rows: Vec<LinearRow>,
    pub socs: Vec<SocRow>,
    pub objective: AffineExpr,
}

fn merge_terms(terms: impl IntoIterator<Item = (VarId, f64)>) -> Vec<(VarId, f64)> {
    let mut t: Vec<(VarId, f64)> = terms.into_iter().collect();
    t.sort_by_key(|&(v, _)| v);
    let mut out: Vec<(VarId, f64)> = Vec::with_capacity(t.len());
    for (v, c) in t {
        match out.last_mut() {
            Some(last) if last.0 == v => last.1 += c,
            _ => out.push((v, c)),
        }
    }
    out.retain(|&(_, c)| c != 0.0);
    out
}

impl OptModel {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_var(&mut self, name: impl Into<String>, kind: VarKind, lower: f64, upper: f64) -> VarId {
        let id = VarId(self.vars.len());
        self.vars.push(Variable { name: name.into(), kind, lower, upper });
        id
    }

    pub fn continuous(&mut self, name: impl Into<String>, lower: f64, upper: f64) -> VarId {
        self.add_var(name, VarKind::Continuous, lower, upper)
    }

    pub fn binary(&mut self, name: impl Into<String>) -> VarId {
        self.add_var(name, VarKind::Binary, 0.0, 1.0)
    }

    /// Adds a linear row; repeated variables are merged and zero terms dropped.
    pub fn add_row(
        &mut self,
        family: impl Into<String>,
        terms: impl IntoIterator<Item = (VarId, f64)>,
        sense: RowSense,
        rhs: f64,
    ) -> RowId {
        let id = RowId(self.rows.len());
        self.rows.push(LinearRow { family: family.into(), terms: merge_terms(terms), sense, rhs });
        id
    }

    pub fn add_soc(&mut self, family: impl Into<String>, vector: Vec<AffineExpr>, bound: AffineExpr) -> SocId {
        let id = SocId(self.socs.len());
        let norm = |e: AffineExpr| AffineExpr { terms: merge_terms(e.terms), constant: e.constant };
        self.socs.push(SocRow { family: family.into(), vector: vector.into_iter().map(norm).collect(), bound: norm(bound) });
        id
    }

    pub fn add_objective(&mut self, v: VarId, coeff: f64) {
        if coeff != 0.0 {
            self.objective.terms.push((v, coeff));
        }
    }

    /// Collapses duplicate objective terms so exports and checksums are canonical.
    pub fn normalize_objective(&mut self) {
        self.objective.terms = merge_terms(std::mem::take(&mut self.objective.terms));
    }

    pub fn num_vars(&self) -> usize {
        self.vars.len()
    }

    pub fn num_binaries(&self) -> usize {
        self.vars.iter().filter(|v| v.kind == VarKind::Binary).count()
    }

    pub fn rows_in_family(&self, family: &str) -> usize {
        self.rows.iter().filter(|r| r.family == family).count()
    }

    pub fn socs_in_family(&self, family: &str) -> usize {
        self.socs.iter().filter(|r| r.family == family).count()
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let n = self.vars.len();
        for v in &self.vars {
            if v.lower > v.upper {
                return Err(ModelError::EmptyBounds(v.name.clone()));
            }
            if v.kind == VarKind::Binary && (v.lower < 0.0 || v.upper > 1.0) {
                return Err(ModelError::BinaryBounds(v.name.clone()));
            }
        }
        let check = |family: &str, terms: &[(VarId, f64)]| -> Result<(), ModelError> {
            for &(v, c) in terms {
                if v.0 >= n {
                    return Err(ModelError::UnknownVariable { family: family.to_string(), var: v.0 });
                }
                if !c.is_finite() {
                    return Err(ModelError::NonFinite(family.to_string()));
                }
            }
            Ok(())
        };
        check("objective", &self.objective.terms)?;
        for r in &self.rows {
            check(&r.family, &r.terms)?;
            if !r.rhs.is_finite() {
                return Err(ModelError::NonFinite(r.family.clone()));
            }
        }
        for s in &self.socs {
            if s.vector.is_empty() {
                return Err(ModelError::EmptyCone(s.family.clone()));
            }
            for e in s.vector.iter().chain(std::iter::once(&s.bound)) {
                check(&s.family, &e.terms)?;
                if !e.constant.is_finite() {
                    return Err(ModelError::NonFinite(s.family.clone()));
                }
            }
        }
        Ok(())
    }

    /// Largest linear-row or bound violation at `values`.
    pub fn max_linear_violation(&self, values: &[f64]) -> f64 {
        let rows = self.rows.iter().map(|r| r.violation(values)).fold(0.0, f64::max);
        let bounds = self.vars.iter().zip(values).map(|(v, &x)| (v.lower - x).max(x - v.upper).max(0.0)).fold(0.0, f64::max);
        rows.max(bounds)
    }

    /// Largest signed cone violation at `values` (negative when all rows are strictly satisfied).
    pub fn max_soc_violation(&self, values: &[f64]) -> f64 {
        self.socs.iter().map(|s| s.violation(values)).fold(f64::NEG_INFINITY, f64::max)
    }

    /// Rows violated by more than `tol`, as `(row, violation)`.
    pub fn violated_rows(&self, values: &[f64], tol: f64) -> Vec<(RowId, f64)> {
        self.rows
            .iter()
            .enumerate()
            .filter_map(|(i, r)| {
                let v = r.violation(values);
                (v > tol).then_some((RowId(i), v))
            })
            .collect()
    }

    /// Hash over structure and exact coefficient bits.
    pub fn checksum(&self) -> u64 {
        let mut h = DefaultHasher::new();
        let hash_terms = |h: &mut DefaultHasher, terms: &[(VarId, f64)]| {
            for &(v, c) in terms {
                v.0.hash(h);
                c.to_bits().hash(h);
            }
        };
        for v in &self.vars {
            v.name.hash(&mut h);
            v.kind.hash(&mut h);
            v.lower.to_bits().hash(&mut h);
            v.upper.to_bits().hash(&mut h);
        }
        for r in &self.rows {
            r.family.hash(&mut h);
            r.sense.hash(&mut h);
            r.rhs.to_bits().hash(&mut h);
            hash_terms(&mut h, &r.terms);
        }
        for s in &self.socs {
            s.family.hash(&mut h);
            for e in s.vector.iter().chain(std::iter::once(&s.bound)) {
                hash_terms(&mut h, &e.terms);
                e.constant.to_bits().hash(&mut h);
            }
        }
        hash_terms(&mut h, &self.objective.terms);
        self.objective.constant.to_bits().hash(&mut h);
        h.finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn add_row_merges_duplicates() {
        let mut m = OptModel::new();
        let x = m.continuous("x", 0.0, 1.0);
        let y = m.continuous("y", 0.0, 1.0);
        m.add_row("r", [(y, 1.0), (x, 2.0), (x, -2.0), (y, 3.0)], RowSense::Le, 1.0);
        assert_eq!(m.rows[0].terms, vec![(y, 4.0)]);
    }

    #[test]
    fn validate_catches_bad_reference() {
        let mut m = OptModel::new();
        m.add_row("r", [(VarId(3), 1.0)], RowSense::Le, 1.0);
        assert!(matches!(m.validate(), Err(ModelError::UnknownVariable { .. })));
    }

    #[test]
    fn soc_violation_sign() {
        let mut m = OptModel::new();
        let x = m.continuous("x", -10.0, 10.0);
        m.add_soc("c", vec![AffineExpr::constant(1.0), AffineExpr::var(x)], AffineExpr::constant(2.0));
        assert!(m.max_soc_violation(&[0.0]) < 0.0);
        assert!(m.max_soc_violation(&[2.0]) > 0.0);
    }
}
