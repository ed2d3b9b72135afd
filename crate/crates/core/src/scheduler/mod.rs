//! Frequency-constrained unit commitment for the coupled electricity and gas
//! system: model variants, assembly of the relaxed and penalized problems,
//! the sequential gas-tightening loop, and solution verification.

mod build;
mod run;
mod verify;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::drcc::{AmbiguitySpec, DrccError, ScenarioSet, UNIMODAL_EPS_MAX};
use crate::freq::FreqError;
use crate::gasnet::{GasError, GasState, PccpParams, PccpRecord};
use crate::instance::InstanceError;
use crate::optmodel::{BackendError, ModelError, SolveError};

pub use build::{assemble, build_objective, build_uc_core, Assembly, ElasticVars, Stage, UcVars};
pub use run::{prepare, run_algorithm1, run_with_context, AlgorithmRun, Context, RunParams};
pub use verify::{recompute_costs, verify_solution, VerifyReport};

/// Which uncertainty treatment and which ablation to schedule with.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelVariant {
    /// Sample average approximation over the first `samples` in-sample draws.
    Saa { samples: usize },
    /// Moment-based joint chance constraint.
    DrM,
    /// Moment-based joint chance constraint with unimodality.
    DrU,
    /// Moment-based individual chance constraints at `eps_ind` each.
    DrMI { eps_ind: f64 },
    /// Unimodal individual chance constraints at `eps_ind` each.
    DrUI { eps_ind: f64 },
    /// Moment-based model without frequency rows, with a capacity reserve row instead.
    NoFc,
    /// Moment-based model without gas network rows.
    NoNgs,
    /// Moment-based model without wind virtual inertia or wind response.
    NoVi,
}

impl ModelVariant {
    pub fn has_frequency(&self) -> bool {
        !matches!(self, Self::NoFc)
    }

    pub fn has_gas(&self) -> bool {
        !matches!(self, Self::NoNgs)
    }

    pub fn has_virtual_inertia(&self) -> bool {
        !matches!(self, Self::NoVi)
    }

    /// Short name used on the command line and in reports.
    pub fn label(&self) -> String {
        match self {
            Self::Saa { samples } => format!("saa:{samples}"),
            Self::DrM => "dr-m".into(),
            Self::DrU => "dr-u".into(),
            Self::DrMI { eps_ind } => format!("dr-m-i:{eps_ind}"),
            Self::DrUI { eps_ind } => format!("dr-u-i:{eps_ind}"),
            Self::NoFc => "no-fc".into(),
            Self::NoNgs => "no-ngs".into(),
            Self::NoVi => "no-vi".into(),
        }
    }

    /// Checks parameter ranges; `epsilon` is the joint budget in force.
    pub fn check(&self, epsilon: f64) -> Result<(), ScheduleError> {
        let range = |e: f64| -> Result<(), ScheduleError> {
            if e > 0.0 && e < 1.0 {
                Ok(())
            } else {
                Err(ScheduleError::Drcc(DrccError::Epsilon(e)))
            }
        };
        match *self {
            Self::Saa { samples: 0 } => Err(ScheduleError::Variant("the sample average approximation needs at least one sample".into())),
            Self::DrU if epsilon > UNIMODAL_EPS_MAX => Err(ScheduleError::Drcc(DrccError::UnimodalEpsilon(epsilon))),
            Self::DrUI { eps_ind } if eps_ind > UNIMODAL_EPS_MAX => Err(ScheduleError::Drcc(DrccError::UnimodalEpsilon(eps_ind))),
            Self::DrMI { eps_ind } | Self::DrUI { eps_ind } => range(eps_ind),
            _ => range(epsilon),
        }
    }
}

impl fmt::Display for ModelVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

impl FromStr for ModelVariant {
    type Err = String;

    /// Accepts `saa[:N]`, `dr-m`, `dr-u`, `dr-m-i[:ε]`, `dr-u-i[:ε]`, `no-fc`,
    /// `no-ngs`, `no-vi`. Defaults are 20 samples and ε = 0.1.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim().to_ascii_lowercase().replace('_', "-");
        let (name, arg) = match s.split_once(':') {
            Some((n, a)) => (n.to_string(), Some(a.to_string())),
            None => (s.clone(), None),
        };
        let num = |default: f64| -> Result<f64, String> {
            arg.as_deref().map_or(Ok(default), |a| a.parse().map_err(|_| format!("bad variant argument `{a}`")))
        };
        let plain = |v: ModelVariant| if arg.is_some() { Err(format!("variant `{name}` takes no argument")) } else { Ok(v) };
        match name.as_str() {
            "saa" | "saa-fcuc" => {
                let n = num(20.0)?;
                if n < 1.0 || n.fract() != 0.0 {
                    return Err(format!("bad sample count `{n}`"));
                }
                Ok(Self::Saa { samples: n as usize })
            }
            "dr-m" | "dr-fcuc-m" => plain(Self::DrM),
            "dr-u" | "dr-fcuc-u" => plain(Self::DrU),
            "dr-m-i" | "dr-fcuc-m-i" => Ok(Self::DrMI { eps_ind: num(0.1)? }),
            "dr-u-i" | "dr-fcuc-u-i" => Ok(Self::DrUI { eps_ind: num(0.1)? }),
            "no-fc" => plain(Self::NoFc),
            "no-ngs" => plain(Self::NoNgs),
            "no-vi" => plain(Self::NoVi),
            _ => Err(format!("unknown variant `{name}`")),
        }
    }
}

#[derive(Debug, Error)]
pub enum ScheduleError {
    #[error(transparent)]
    Instance(#[from] InstanceError),
    #[error(transparent)]
    Freq(#[from] FreqError),
    #[error(transparent)]
    Drcc(#[from] DrccError),
    #[error(transparent)]
    Gas(#[from] GasError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("invalid variant: {0}")]
    Variant(String),
    #[error("{stage} problem is infeasible; {diagnosis}")]
    Infeasible { stage: String, diagnosis: Diagnosis },
    #[error("solver stopped at a limit without a feasible point in the {0} problem")]
    NoIncumbent(String),
}

/// Outcome of the elastic re-solve run after an infeasible relaxed problem.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnosis {
    /// Total elastic slack per row family, largest first.
    pub families: Vec<(String, f64)>,
    /// Element-level slacks above tolerance, e.g. `gas_balance@N3[t=7]`.
    pub elements: Vec<(String, f64)>,
    /// False when the elastic problem is itself infeasible.
    pub resolved: bool,
}

impl fmt::Display for Diagnosis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if !self.resolved {
            return f.write_str("infeasibility persists with elastic balances and line limits");
        }
        match self.families.first() {
            None => f.write_str("no elastic slack needed; the conflict lies in frequency or uncertainty rows"),
            Some((fam, v)) => {
                write!(f, "binding subsystem `{fam}` (slack {v:.4})")?;
                if let Some((e, _)) = self.elements.first() {
                    write!(f, ", first at {e}")?;
                }
                Ok(())
            }
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CostBreakdown {
    pub total: f64,
    pub startup_shutdown: f64,
    pub no_load: f64,
    pub generation: f64,
    /// Generator and wind primary response.
    pub pfr: f64,
    pub vi: f64,
}

impl CostBreakdown {
    pub fn component_sum(&self) -> f64 {
        self.startup_shutdown + self.no_load + self.generation + self.pfr + self.vi
    }
}

/// How a run ended.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExitCondition {
    /// Gap target met and every solve finished within its MIP gap.
    Converged,
    /// Iteration cap reached with the gap above target.
    IterationLimit,
    /// A solve stopped at a time or round limit with a feasible point.
    SolverLimit,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SolverStats {
    /// Mixed-integer cone solves, relaxed plus penalized.
    pub iterations: usize,
    pub backend_calls: usize,
    pub cut_count: usize,
    /// Relative MIP gap of the last solve.
    pub mip_gap: f64,
    /// Objective of the last solve including penalty terms.
    pub objective: f64,
    pub max_soc_violation: f64,
    pub wall_time: f64,
    pub backend: String,
}

/// A schedule with its gas state and bookkeeping. Binary arrays are rounded;
/// every array is indexed `[unit][hour]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScheduleSolution {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub instance: Option<String>,
    pub variant: ModelVariant,
    pub epsilon: f64,
    pub exit: ExitCondition,
    pub committed: Vec<Vec<bool>>,
    pub startup: Vec<Vec<bool>>,
    pub shutdown: Vec<Vec<bool>>,
    pub virtual_inertia: Vec<Vec<bool>>,
    /// MW.
    pub power: Vec<Vec<f64>>,
    pub gen_reserve: Vec<Vec<f64>>,
    pub wind_power: Vec<Vec<f64>>,
    pub wind_reserve: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gas: Option<GasState>,
    pub cost: CostBreakdown,
    /// Nadir threshold per hour, MW·MW·s/Hz.
    pub kappa: Vec<f64>,
    pub pccp: Vec<PccpRecord>,
    /// Largest Weymouth gap after the last solve; `None` without gas rows.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_gap: Option<f64>,
    pub params: PccpParams,
    pub stats: SolverStats,
}

impl ScheduleSolution {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("solution serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn horizon(&self) -> usize {
        self.kappa.len()
    }

    /// Committed flags of hour `t`, by generator.
    pub fn committed_at(&self, t: usize) -> Vec<bool> {
        self.committed.iter().map(|r| r[t]).collect()
    }

    pub fn vi_at(&self, t: usize) -> Vec<bool> {
        self.virtual_inertia.iter().map(|r| r[t]).collect()
    }

    pub fn gen_reserve_at(&self, t: usize) -> Vec<f64> {
        self.gen_reserve.iter().map(|r| r[t]).collect()
    }

    pub fn wind_reserve_at(&self, t: usize) -> Vec<f64> {
        self.wind_reserve.iter().map(|r| r[t]).collect()
    }

    /// Scheduled wind power plus wind response `[farm][hour]`.
    pub fn wind_commitment(&self) -> Vec<Vec<f64>> {
        self.wind_power.iter().zip(&self.wind_reserve).map(|(p, r)| p.iter().zip(r).map(|(a, b)| a + b).collect()).collect()
    }
}

/// Input data of the uncertainty block chosen for a variant.
#[derive(Clone, Debug, PartialEq)]
pub enum UncertaintyData {
    Moments(AmbiguitySpec),
    Samples(ScenarioSet),
}
