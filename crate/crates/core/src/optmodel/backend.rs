use std::num::NonZeroU32;

use highs::{HighsModelStatus, RowProblem, Sense};
use thiserror::Error;

use super::{AffineExpr, LinearRow, RowSense, VarKind, Variable};

/// One mixed-integer linear solve request.
///
/// `bounds` overrides the variable bounds when present (used to fix binaries);
/// `relax_integrality` turns every binary into a continuous column.
pub struct MilpProblem<'a> {
    pub variables: &'a [Variable],
    pub rows: &'a [LinearRow],
    pub cuts: &'a [LinearRow],
    pub objective: &'a AffineExpr,
    pub bounds: Option<&'a [(f64, f64)]>,
    pub relax_integrality: bool,
    pub mip_gap: f64,
    pub time_limit: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MilpStatus {
    Optimal,
    /// A feasible point exists but a limit stopped the search.
    Feasible,
    Infeasible,
    Unbounded,
    /// A limit stopped the search before any feasible point was found.
    Limit,
}

#[derive(Clone, Debug)]
pub struct MilpSolution {
    pub status: MilpStatus,
    pub values: Vec<f64>,
    pub objective: f64,
    /// Best proven lower bound on the objective.
    pub bound: f64,
}

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("backend `{backend}` failed: {message}")]
    Failure { backend: String, message: String },
    #[error("unknown backend `{0}` (available: highs)")]
    Unknown(String),
}

/// Narrow interface to a mixed-integer linear solver.
pub trait MilpBackend: Send + Sync {
    fn name(&self) -> &str;
    fn solve(&self, problem: &MilpProblem<'_>) -> Result<MilpSolution, BackendError>;
}

/// Resolves a backend by name; `None` selects the default.
pub fn backend_by_name(name: Option<&str>) -> Result<Box<dyn MilpBackend>, BackendError> {
    match name.map(|s| s.trim().to_ascii_lowercase()).as_deref() {
        None | Some("") | Some("highs") => Ok(Box::new(HighsBackend::default())),
        Some(other) => Err(BackendError::Unknown(other.to_string())),
    }
}

/// Matrix entries below this magnitude are moved into the row bound.
const TINY_COEFF: f64 = 1e-9;

/// HiGHS through its C API, single-threaded for reproducibility.
#[derive(Clone, Debug)]
pub struct HighsBackend {
    pub feasibility_tol: f64,
}

impl Default for HighsBackend {
    fn default() -> Self {
        Self { feasibility_tol: 1e-9 }
    }
}

impl MilpBackend for HighsBackend {
    fn name(&self) -> &str {
        "highs"
    }

    fn solve(&self, p: &MilpProblem<'_>) -> Result<MilpSolution, BackendError> {
        match self.solve_once(p, true) {
            // Presolve occasionally ends in an unknown status on cut-heavy
            // models; a second attempt without it usually settles the point.
            Err(BackendError::Failure { message, .. }) if message.contains("Unknown") => {
                log::debug!("highs returned an unknown status; retrying without presolve");
                self.solve_once(p, false)
            }
            other => other,
        }
    }
}

impl HighsBackend {
    fn solve_once(&self, p: &MilpProblem<'_>, presolve: bool) -> Result<MilpSolution, BackendError> {
        let fail = |message: String| BackendError::Failure { backend: "highs".into(), message };
        let n = p.variables.len();
        let mut cost = vec![0.0; n];
        for &(v, c) in &p.objective.terms {
            cost[v.0] += c;
        }
        let mut pb = RowProblem::default();
        let mut cols = Vec::with_capacity(n);
        let mut has_int = false;
        for (j, var) in p.variables.iter().enumerate() {
            let (lo, hi) = p.bounds.map_or((var.lower, var.upper), |b| b[j]);
            let integer = var.kind == VarKind::Binary && !p.relax_integrality;
            has_int |= integer;
            cols.push(pb.add_column_with_integrality(cost[j], lo..=hi, integer));
        }
        let bound = |j: usize| p.bounds.map_or((p.variables[j].lower, p.variables[j].upper), |b| b[j]);
        for row in p.rows.iter().chain(p.cuts) {
            let mut rhs = row.rhs;
            let mut coeffs = Vec::with_capacity(row.terms.len());
            for &(v, c) in &row.terms {
                // HiGHS drops entries this small; fold them into the bound over
                // the variable's box so inequalities stay valid.
                let (lo, hi) = bound(v.0);
                if c.abs() < TINY_COEFF && row.sense != RowSense::Eq && lo.is_finite() && hi.is_finite() {
                    let (a, b) = (c * lo, c * hi);
                    rhs -= if row.sense == RowSense::Le { a.min(b) } else { a.max(b) };
                    continue;
                }
                coeffs.push((cols[v.0], c));
            }
            match row.sense {
                RowSense::Le => pb.add_row(..=rhs, coeffs),
                RowSense::Ge => pb.add_row(rhs.., coeffs),
                RowSense::Eq => pb.add_row(rhs..=rhs, coeffs),
            }
        }
        let mut model = pb.optimise(Sense::Minimise);
        if std::env::var_os("DRFCUC_HIGHS_LOG").is_some() {
            model.set_option("output_flag", true);
            model.set_option("log_to_console", true);
        } else {
            model.make_quiet();
        }
        model.set_threads(NonZeroU32::new(1).unwrap());
        model.set_option("primal_feasibility_tolerance", self.feasibility_tol);
        model.set_option("mip_feasibility_tolerance", self.feasibility_tol);
        model.set_option("mip_rel_gap", p.mip_gap);
        model.set_option("random_seed", 0);
        if !presolve {
            model.set_option("presolve", "off");
        }
        if let Some(t) = p.time_limit {
            model.set_option("time_limit", t);
        }
        let solved = model.try_solve().map_err(|s| fail(format!("{s:?}")))?;
        let status = solved.status();
        let have_point = matches!(solved.primal_solution_status(), highs::HighsSolutionStatus::Feasible);
        let status = match status {
            HighsModelStatus::Optimal => MilpStatus::Optimal,
            HighsModelStatus::ModelEmpty => MilpStatus::Optimal,
            HighsModelStatus::Infeasible => MilpStatus::Infeasible,
            HighsModelStatus::Unbounded | HighsModelStatus::UnboundedOrInfeasible => MilpStatus::Unbounded,
            HighsModelStatus::ReachedTimeLimit
            | HighsModelStatus::ReachedIterationLimit
            | HighsModelStatus::ReachedSolutionLimit
            | HighsModelStatus::ObjectiveBound
            | HighsModelStatus::ObjectiveTarget
            | HighsModelStatus::ReachedInterrupt
            | HighsModelStatus::ReachedMemoryLimit => {
                if have_point {
                    MilpStatus::Feasible
                } else {
                    MilpStatus::Limit
                }
            }
            HighsModelStatus::Unknown if have_point => MilpStatus::Feasible,
            other => return Err(fail(format!("model status {other:?}"))),
        };
        let values = if matches!(status, MilpStatus::Optimal | MilpStatus::Feasible) {
            solved.get_solution().columns().to_vec()
        } else {
            Vec::new()
        };
        let objective = solved.objective_value() + p.objective.constant;
        let bound = if has_int {
            solved.double_info_value(c"mip_dual_bound").map(|b| b + p.objective.constant).unwrap_or(f64::NEG_INFINITY)
        } else {
            objective
        };
        Ok(MilpSolution { status, values, objective, bound })
    }
}
