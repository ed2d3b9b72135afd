//! Outer approximation of cone rows by supporting hyperplanes.
//!
//! Each round solves the mixed-integer linear master (original rows plus all
//! cuts so far), then fixes the binaries at the master point and tightens the
//! continuous relaxation with more cuts until the cones hold. The fixed-binary
//! point is the incumbent; the master's dual bound is the lower bound.

use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::backend::{BackendError, MilpBackend, MilpProblem, MilpStatus};
use super::{LinearRow, ModelError, OptModel, RowSense, SocRow, VarKind};

#[derive(Debug, Error, PartialEq)]
pub enum OptionsError {
    #[error("MIP gap must lie in [0, 1), got {0}")]
    Gap(f64),
    #[error("time limit must be positive and finite, got {0}")]
    TimeLimit(f64),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    pub mip_gap: f64,
    /// Wall-clock budget in seconds for the whole cut loop.
    pub time_limit: Option<f64>,
    /// Absolute tolerance on `‖Ax+b‖ − (c·x+d)`.
    pub tol_soc: f64,
    pub max_cut_rounds: usize,
    /// Cap on continuous tightening rounds after the binaries are fixed.
    pub max_polish_rounds: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self { mip_gap: 0.01, time_limit: None, tol_soc: 1e-6, max_cut_rounds: 200, max_polish_rounds: 200 }
    }
}

impl SolveOptions {
    pub fn set_mip_gap(&mut self, gap: f64) -> Result<(), OptionsError> {
        if !(0.0..1.0).contains(&gap) {
            return Err(OptionsError::Gap(gap));
        }
        self.mip_gap = gap;
        Ok(())
    }

    pub fn set_time_limit(&mut self, seconds: f64) -> Result<(), OptionsError> {
        if !(seconds.is_finite() && seconds > 0.0) {
            return Err(OptionsError::TimeLimit(seconds));
        }
        self.time_limit = Some(seconds);
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    Feasible,
    Infeasible,
    Limit,
}

#[derive(Clone, Debug)]
pub struct SolveResult {
    pub status: SolveStatus,
    pub values: Option<Vec<f64>>,
    pub objective: Option<f64>,
    /// Relative distance between incumbent and best bound.
    pub mip_gap: f64,
    /// Cuts generated, including the initial box cuts.
    pub cut_count: usize,
    pub cut_rounds: usize,
    pub backend_calls: usize,
    /// Largest cone violation of the returned point (or of the last master point if none).
    pub max_soc_violation: f64,
    /// Largest cone violation of each master solution, in order.
    pub violation_history: Vec<f64>,
    pub cuts: Vec<LinearRow>,
    pub wall_time: f64,
}

impl SolveResult {
    pub fn has_values(&self) -> bool {
        self.values.is_some()
    }
}

#[derive(Debug, Error)]
pub enum SolveError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("linear relaxation is unbounded; add bounds to the variables in the cone rows")]
    Unbounded,
}

/// Supporting hyperplane of `row` at `point`, or `None` when the row holds there.
///
/// Uses `û = A x̂ + b`: `(û/‖û‖)ᵀ(A x + b) ≤ c·x + d`. When `û = 0` the cut is
/// `c·x + d ≥ 0`.
pub fn separate_cut(row: &SocRow, point: &[f64], tol: f64) -> Option<LinearRow> {
    let u: Vec<f64> = row.vector.iter().map(|e| e.eval(point)).collect();
    let norm = u.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm - row.bound.eval(point) <= tol {
        return None;
    }
    let mut terms = Vec::new();
    let mut rhs = row.bound.constant;
    if norm > 1e-12 {
        for (ui, e) in u.iter().zip(&row.vector) {
            let w = ui / norm;
            terms.extend(e.terms.iter().map(|&(v, c)| (v, w * c)));
            rhs -= w * e.constant;
        }
    }
    terms.extend(row.bound.terms.iter().map(|&(v, c)| (v, -c)));
    Some(cut_row(&row.family, terms, rhs))
}

fn cut_row(family: &str, terms: Vec<(super::VarId, f64)>, rhs: f64) -> LinearRow {
    let mut m = OptModel::new();
    m.add_row(format!("cut:{family}"), terms, RowSense::Le, rhs);
    m.rows.pop().unwrap()
}

/// `|u_i| ≤ bound` for every component: a valid polyhedral outer box that keeps
/// the first master bounded.
fn box_cuts(row: &SocRow) -> Vec<LinearRow> {
    let mut out = Vec::with_capacity(2 * row.vector.len());
    for e in &row.vector {
        for sign in [1.0, -1.0] {
            let mut terms: Vec<_> = e.terms.iter().map(|&(v, c)| (v, sign * c)).collect();
            terms.extend(row.bound.terms.iter().map(|&(v, c)| (v, -c)));
            out.push(cut_row(&row.family, terms, row.bound.constant - sign * e.constant));
        }
    }
    out
}

fn max_violation(model: &OptModel, values: &[f64]) -> f64 {
    if model.socs.is_empty() {
        0.0
    } else {
        model.max_soc_violation(values)
    }
}

struct Loop<'a> {
    model: &'a OptModel,
    backend: &'a dyn MilpBackend,
    options: &'a SolveOptions,
    start: Instant,
    cuts: Vec<LinearRow>,
    calls: usize,
}

enum Polish {
    Done(Vec<f64>, f64),
    Infeasible,
    Stalled,
}

impl Loop<'_> {
    fn remaining(&self) -> Option<f64> {
        self.options.time_limit.map(|t| (t - self.start.elapsed().as_secs_f64()).max(1e-3))
    }

    fn out_of_time(&self) -> bool {
        self.options.time_limit.is_some_and(|t| self.start.elapsed().as_secs_f64() >= t)
    }

    fn add_cuts(&mut self, values: &[f64]) {
        let tol = self.options.tol_soc;
        let new: Vec<_> = self.model.socs.iter().filter_map(|s| separate_cut(s, values, tol)).collect();
        self.cuts.extend(new);
    }

    fn solve(&mut self, bounds: Option<&[(f64, f64)]>) -> Result<super::MilpSolution, SolveError> {
        self.solve_with(bounds, bounds.is_some())
    }

    fn solve_with(&mut self, bounds: Option<&[(f64, f64)]>, relax_integrality: bool) -> Result<super::MilpSolution, SolveError> {
        self.calls += 1;
        let problem = MilpProblem {
            variables: &self.model.vars,
            rows: &self.model.rows,
            cuts: &self.cuts,
            objective: &self.model.objective,
            bounds,
            relax_integrality,
            mip_gap: self.options.mip_gap,
            time_limit: self.remaining(),
        };
        let t0 = Instant::now();
        let sol = self.backend.solve(&problem)?;
        log::trace!(
            "backend call {} ({}): {:?} in {:.3}s with {} cuts",
            self.calls,
            if relax_integrality { "lp" } else { "milp" },
            sol.status,
            t0.elapsed().as_secs_f64(),
            self.cuts.len()
        );
        Ok(sol)
    }

    /// Cuts the continuous relaxation (binaries free in [0, 1]) until its cones
    /// hold. The cuts stay valid for every binary assignment and spare the
    /// mixed-integer masters most of the early rounds.
    fn root_rounds(&mut self) -> Result<(), SolveError> {
        for _ in 0..self.options.max_polish_rounds {
            if self.out_of_time() {
                break;
            }
            let sol = self.solve_with(None, true)?;
            if sol.status != MilpStatus::Optimal {
                break;
            }
            let before = self.cuts.len();
            self.add_cuts(&sol.values);
            if self.cuts.len() == before {
                break;
            }
        }
        Ok(())
    }

    /// Fixes binaries at their rounded master values and tightens the continuous part.
    fn polish(&mut self, master: &[f64]) -> Result<Polish, SolveError> {
        let bounds: Vec<(f64, f64)> = self
            .model
            .vars
            .iter()
            .zip(master)
            .map(|(v, &x)| match v.kind {
                VarKind::Binary => {
                    let b = x.round().clamp(v.lower, v.upper);
                    (b, b)
                }
                VarKind::Continuous => (v.lower, v.upper),
            })
            .collect();
        for _ in 0..self.options.max_polish_rounds {
            if self.out_of_time() {
                return Ok(Polish::Stalled);
            }
            let sol = self.solve(Some(&bounds))?;
            match sol.status {
                MilpStatus::Optimal => {}
                MilpStatus::Infeasible => return Ok(Polish::Infeasible),
                MilpStatus::Unbounded => return Err(SolveError::Unbounded),
                _ => return Ok(Polish::Stalled),
            }
            if max_violation(self.model, &sol.values) <= self.options.tol_soc {
                return Ok(Polish::Done(sol.values, sol.objective));
            }
            self.add_cuts(&sol.values);
        }
        Ok(Polish::Stalled)
    }
}

/// Solves `model` by outer approximation around a mixed-integer linear backend.
pub fn solve_misocp(model: &OptModel, backend: &dyn MilpBackend, options: &SolveOptions) -> Result<SolveResult, SolveError> {
    model.validate()?;
    let mut lp = Loop { model, backend, options, start: Instant::now(), cuts: model.socs.iter().flat_map(box_cuts).collect(), calls: 0 };
    let has_binaries = model.num_binaries() > 0;
    let mut best: Option<(Vec<f64>, f64)> = None;
    let mut lower = f64::NEG_INFINITY;
    let mut history = Vec::new();
    let mut rounds = 0;
    let mut converged = false;
    let mut last_violation = f64::INFINITY;
    if has_binaries && !model.socs.is_empty() {
        lp.root_rounds()?;
    }

    while rounds < options.max_cut_rounds && !lp.out_of_time() {
        rounds += 1;
        let master = lp.solve(None)?;
        match master.status {
            MilpStatus::Optimal | MilpStatus::Feasible => {}
            MilpStatus::Infeasible => {
                return Ok(finish(lp, SolveStatus::Infeasible, None, lower, rounds, history, f64::NAN));
            }
            MilpStatus::Unbounded => return Err(SolveError::Unbounded),
            MilpStatus::Limit => break,
        }
        lower = lower.max(master.bound);
        let violation = max_violation(model, &master.values);
        last_violation = violation;
        history.push(violation);
        let master_ok = violation <= options.tol_soc && master.status == MilpStatus::Optimal;

        if !has_binaries {
            if violation <= options.tol_soc {
                best = Some((master.values, master.objective));
                converged = master.status == MilpStatus::Optimal;
                break;
            }
            lp.add_cuts(&master.values);
            continue;
        }

        lp.add_cuts(&master.values);
        if let Polish::Done(values, obj) = lp.polish(&master.values)? {
            if best.as_ref().is_none_or(|b| obj < b.1) {
                best = Some((values, obj));
            }
        }
        if let Some((_, ub)) = &best {
            let closed = ub - lower <= options.mip_gap * ub.abs().max(1.0);
            if master_ok || closed {
                converged = true;
                break;
            }
        }
    }

    Ok(match best {
        Some((values, obj)) => {
            let viol = max_violation(model, &values);
            let status = if converged { SolveStatus::Optimal } else { SolveStatus::Feasible };
            let mut r = finish(lp, status, Some(values), lower, rounds, history, viol);
            r.objective = Some(obj);
            r
        }
        None => finish(lp, SolveStatus::Limit, None, lower, rounds, history, last_violation),
    })
}

fn finish(
    lp: Loop<'_>,
    status: SolveStatus,
    values: Option<Vec<f64>>,
    lower: f64,
    rounds: usize,
    history: Vec<f64>,
    violation: f64,
) -> SolveResult {
    let objective = values.as_ref().map(|v| lp.model.objective.eval(v));
    let mip_gap = match objective {
        Some(ub) if lower.is_finite() => ((ub - lower) / ub.abs().max(1e-9)).max(0.0),
        Some(_) => f64::INFINITY,
        None => f64::NAN,
    };
    SolveResult {
        status,
        values,
        objective,
        mip_gap,
        cut_count: lp.cuts.len(),
        cut_rounds: rounds,
        backend_calls: lp.calls,
        max_soc_violation: violation,
        violation_history: history,
        cuts: lp.cuts,
        wall_time: lp.start.elapsed().as_secs_f64(),
    }
}

#[cfg(test)]
mod tests {
    use super::super::{AffineExpr, HighsBackend};
    use super::*;

    #[test]
    fn gap_range_is_checked() {
        let mut o = SolveOptions::default();
        assert_eq!(o.mip_gap, 0.01);
        assert!(o.set_mip_gap(0.01).is_ok());
        assert_eq!(o.set_mip_gap(1.5), Err(OptionsError::Gap(1.5)));
        assert!(o.set_time_limit(-1.0).is_err());
    }

    #[test]
    fn pure_milp_needs_one_call() {
        let mut m = OptModel::new();
        let x = m.continuous("x", 0.0, 10.0);
        let b = m.binary("b");
        m.add_row("link", [(x, 1.0), (b, -4.0)], RowSense::Ge, 0.5);
        m.add_objective(x, 1.0);
        m.add_objective(b, 1.0);
        let r = solve_misocp(&m, &HighsBackend::default(), &SolveOptions::default()).unwrap();
        assert_eq!(r.status, SolveStatus::Optimal);
        assert_eq!(r.cut_count, 0);
        assert_eq!(r.cut_rounds, 1);
        assert!((r.objective.unwrap() - 0.5).abs() < 1e-9);
    }

    #[test]
    fn cone_boundary() {
        let mut m = OptModel::new();
        let x = m.continuous("x", f64::NEG_INFINITY, f64::INFINITY);
        m.add_soc("disk", vec![AffineExpr::constant(1.0), AffineExpr::var(x)], AffineExpr::constant(2.0));
        m.add_objective(x, 1.0);
        let r = solve_misocp(&m, &HighsBackend::default(), &SolveOptions::default()).unwrap();
        assert_eq!(r.status, SolveStatus::Optimal);
        let v = r.values.unwrap()[0];
        assert!((v + 3f64.sqrt()).abs() < 1e-6, "{v}");
    }

    #[test]
    fn cut_at_origin_uses_bound() {
        let mut m = OptModel::new();
        let x = m.continuous("x", -5.0, 5.0);
        m.add_soc("c", vec![AffineExpr::var(x)], AffineExpr::var(x).plus(-1.0));
        let cut = separate_cut(&m.socs[0], &[0.0], 1e-9).unwrap();
        assert_eq!(cut.terms, vec![(x, -1.0)]);
        assert_eq!(cut.rhs, -1.0);
    }
}
