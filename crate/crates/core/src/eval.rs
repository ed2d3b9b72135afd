//! Out-of-sample validation, post-solve frequency and gas audits, and
//! variant comparison tables.

use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::drcc::{generate_scenarios, Provenance, ScenarioSet, ScenarioSource};
use crate::freq::{simulate_swing, FrequencySnapshot, RK4_STEP, SIM_HORIZON};
use crate::gasnet::{
    add_tightening, add_weymouth_rows, allocate_gas_vars, build_gas_block, pccp_step, GasError, GasVarOptions, GasVarSet, PccpObservation,
    PccpParams, PccpRecord, PccpStage, PccpState, PccpStatus,
};
use crate::instance::IegsInstance;
use crate::optmodel::{solve_misocp, MilpBackend, OptModel, SolveError, SolveOptions, SolveStatus};
use crate::scheduler::{run_algorithm1, CostBreakdown, ModelVariant, RunParams, ScheduleError, ScheduleSolution};

/// RoCoF pass tolerance, Hz/s.
pub const ROCOF_TOL: f64 = 1e-3;
/// Nadir and quasi-steady-state pass tolerance, Hz.
pub const DEVIATION_TOL: f64 = 1e-3;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("the out-of-sample set is empty")]
    EmptySamples,
    #[error("violation rates need an out-of-sample set; got in-sample draws")]
    InSample,
    #[error("scenario shape {farms}×{horizon} does not match the schedule {want_farms}×{want_horizon}")]
    Shape { farms: usize, horizon: usize, want_farms: usize, want_horizon: usize },
    #[error(transparent)]
    Gas(#[from] GasError),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// How violations are aggregated over the horizon.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EjvpMode {
    /// A sample counts if any farm-hour is violated.
    #[default]
    Horizon,
    /// Worst per-hour violation percentage.
    PerHour,
}

/// Empirical joint violation probability in percent: share of samples in
/// which some scheduled `P^W + R^W` strictly exceeds the realized output.
pub fn compute_ejvp(sol: &ScheduleSolution, out: &ScenarioSet) -> Result<f64, EvalError> {
    compute_ejvp_with(&sol.wind_commitment(), out, EjvpMode::Horizon)
}

/// [`compute_ejvp`] on a raw `[farm][hour]` commitment.
pub fn compute_ejvp_with(commitment: &[Vec<f64>], out: &ScenarioSet, mode: EjvpMode) -> Result<f64, EvalError> {
    if out.samples == 0 {
        return Err(EvalError::EmptySamples);
    }
    if out.provenance != Provenance::OutOfSample {
        return Err(EvalError::InSample);
    }
    let horizon = commitment.first().map_or(0, |r| r.len());
    if out.farms != commitment.len() || out.horizon != horizon {
        return Err(EvalError::Shape { farms: out.farms, horizon: out.horizon, want_farms: commitment.len(), want_horizon: horizon });
    }
    let violated = |s: usize, t: usize| (0..out.farms).any(|w| commitment[w][t] > out.get(s, w, t));
    let pct = |count: usize| 100.0 * count as f64 / out.samples as f64;
    Ok(match mode {
        EjvpMode::Horizon => pct((0..out.samples).into_par_iter().filter(|&s| (0..horizon).any(|t| violated(s, t))).count()),
        EjvpMode::PerHour => {
            (0..horizon).map(|t| pct((0..out.samples).into_par_iter().filter(|&s| violated(s, t)).count())).fold(0.0, f64::max)
        }
    })
}

/// Paired in-sample and out-of-sample draws from one seeded stream: the first
/// `n_in` draws are in-sample, the next `n_out` out-of-sample.
pub fn paired_scenarios(instance: &IegsInstance, seed: u64, n_in: usize, n_out: usize) -> (ScenarioSet, ScenarioSet) {
    generate_scenarios(&ScenarioSource::from_instance(instance), n_in + n_out, seed, Provenance::InSample).split(n_in)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HourAudit {
    pub hour: usize,
    /// MW·s/Hz.
    pub inertia: f64,
    /// MW.
    pub reserve: f64,
    /// Hz/s; infinite when the hour has no inertia.
    pub rocof: f64,
    /// Largest deviation, Hz.
    pub nadir: f64,
    pub nadir_time: f64,
    /// Settled deviation, Hz.
    pub qss: f64,
    pub rocof_ok: bool,
    pub nadir_ok: bool,
    pub qss_ok: bool,
    pub catastrophic: bool,
}

impl HourAudit {
    pub fn passes(&self) -> bool {
        self.rocof_ok && self.nadir_ok && self.qss_ok
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrequencyAudit {
    pub hours: Vec<HourAudit>,
}

impl FrequencyAudit {
    pub fn all_pass(&self) -> bool {
        self.hours.iter().all(HourAudit::passes)
    }

    pub fn failing_hours(&self) -> Vec<usize> {
        self.hours.iter().filter(|h| !h.passes()).map(|h| h.hour).collect()
    }

    /// `hour,inertia,reserve,rocof,nadir,qss,pass`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("hour,inertia_mws_per_hz,reserve_mw,rocof_hz_per_s,nadir_hz,qss_hz,pass\n");
        for h in &self.hours {
            let _ = writeln!(out, "{},{},{},{},{},{},{}", h.hour, h.inertia, h.reserve, h.rocof, h.nadir, h.qss, h.passes());
        }
        out
    }
}

/// Simulates every hour's contingency with the schedule's inertia and response.
pub fn audit_frequency(sol: &ScheduleSolution, instance: &IegsInstance) -> FrequencyAudit {
    let f = &instance.frequency;
    let hours = (0..instance.horizon)
        .map(|t| {
            let snap = FrequencySnapshot::from_schedule(
                instance,
                t,
                &sol.committed_at(t),
                &sol.vi_at(t),
                &sol.gen_reserve_at(t),
                &sol.wind_reserve_at(t),
            );
            match simulate_swing(&snap, f, RK4_STEP, SIM_HORIZON) {
                Ok(tr) => HourAudit {
                    hour: t,
                    inertia: snap.inertia,
                    reserve: snap.reserve,
                    rocof: tr.rocof,
                    nadir: tr.nadir,
                    nadir_time: tr.nadir_time,
                    qss: tr.qss,
                    rocof_ok: tr.rocof <= f.rocof_max + ROCOF_TOL,
                    nadir_ok: tr.nadir <= f.df_max() + DEVIATION_TOL,
                    qss_ok: tr.qss <= f.df_qss_max + DEVIATION_TOL,
                    catastrophic: false,
                },
                Err(_) => HourAudit {
                    hour: t,
                    inertia: snap.inertia,
                    reserve: snap.reserve,
                    rocof: f64::INFINITY,
                    nadir: f64::INFINITY,
                    nadir_time: 0.0,
                    qss: f64::INFINITY,
                    rocof_ok: false,
                    nadir_ok: false,
                    qss_ok: false,
                    catastrophic: true,
                },
            }
        })
        .collect();
    FrequencyAudit { hours }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GasVerdict {
    Feasible,
    Infeasible,
    Undetermined,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GasAudit {
    pub verdict: GasVerdict,
    /// Minimum total elastic slack found, gas flow units summed over node-hours.
    pub total_slack: f64,
    /// Slack tolerance, `1e-6 ×` total gas demand.
    pub threshold: f64,
    /// `(node, hour, slack)` above the tolerance, largest first.
    pub slack_nodes: Vec<(String, usize, f64)>,
    pub trace: Vec<PccpRecord>,
}

struct GasOnly {
    model: OptModel,
    vars: GasVarSet,
}

fn gas_only(instance: &IegsInstance, gfu_use: &[Vec<f64>], stage: PccpStage<'_>) -> Result<GasOnly, GasError> {
    let mut model = OptModel::new();
    let options = GasVarOptions { pccp_slack: matches!(stage, PccpStage::Penalized { .. }), elastic: true };
    let mut vars = allocate_gas_vars(&mut model, instance, options);
    for (j, row) in vars.gfu_use.iter().enumerate() {
        for (t, v) in row.iter().enumerate() {
            let x = &mut model.vars[v.0];
            x.lower = gfu_use[j][t];
            x.upper = gfu_use[j][t];
        }
    }
    for t in 0..instance.horizon {
        build_gas_block(&mut model, instance, &vars, t, None)?;
    }
    add_weymouth_rows(&mut model, instance, &mut vars, stage)?;
    let (plus, minus) = vars.elastic.clone().expect("elastic slacks allocated");
    for v in plus.iter().chain(&minus).flatten() {
        model.add_objective(*v, 1.0);
    }
    if matches!(stage, PccpStage::Relaxed) {
        // Small enough not to trade against balance slack.
        add_tightening(&mut model, instance, &vars, 1e-6);
    }
    model.normalize_objective();
    Ok(GasOnly { model, vars })
}

fn elastic_total(vars: &GasVarSet, values: &[f64]) -> f64 {
    let (plus, minus) = vars.elastic.as_ref().expect("elastic slacks allocated");
    plus.iter().chain(minus).flatten().map(|v| values[v.0]).sum()
}

/// Fixes GFU gas use at `φ (P + R^G)` and minimizes elastic balance slack on
/// the gas network alone through the same relaxed-then-penalized procedure.
///
/// A relaxed minimum above the tolerance already certifies infeasibility,
/// since the cone relaxation contains the true feasible set.
pub fn audit_gas_feasibility(
    sol: &ScheduleSolution,
    instance: &IegsInstance,
    params: &PccpParams,
    backend: &dyn MilpBackend,
) -> Result<GasAudit, EvalError> {
    let gfus = instance.gfu_indices();
    let gfu_use: Vec<Vec<f64>> = gfus
        .iter()
        .map(|&g| {
            let phi = instance.generators[g].gas_rate.unwrap_or(0.0);
            (0..instance.horizon).map(|t| phi * (sol.power[g][t] + sol.gen_reserve[g][t])).collect()
        })
        .collect();
    let demand = instance.total_gas_load() + gfu_use.iter().flatten().sum::<f64>();
    let threshold = 1e-6 * demand.max(1.0);
    let options = SolveOptions::default();

    let solve = |stage: PccpStage<'_>| -> Result<Option<(GasOnly, Vec<f64>, f64)>, EvalError> {
        let g = gas_only(instance, &gfu_use, stage)?;
        let r = solve_misocp(&g.model, backend, &options)?;
        Ok(match (r.status, r.values) {
            (SolveStatus::Infeasible, _) | (_, None) => None,
            (_, Some(v)) => Some((g, v, r.objective.unwrap_or(f64::NAN))),
        })
    };

    let Some((mut g, mut values, obj)) = solve(PccpStage::Relaxed)? else {
        return Ok(GasAudit {
            verdict: GasVerdict::Infeasible,
            total_slack: f64::INFINITY,
            threshold,
            slack_nodes: Vec::new(),
            trace: Vec::new(),
        });
    };
    let mut state = PccpState::start(&PccpObservation::new(instance, &g.vars, &values, obj), params)?;
    let relaxed_slack = elastic_total(&g.vars, &values);
    if relaxed_slack <= threshold {
        while state.status == PccpStatus::Running {
            let stage = PccpStage::Penalized { points: &state.points, penalty: state.penalty };
            let Some((g2, v2, obj2)) = solve(stage)? else { break };
            state = pccp_step(&state, &PccpObservation::new(instance, &g2.vars, &v2, obj2), params)?;
            (g, values) = (g2, v2);
        }
    }
    let total_slack = elastic_total(&g.vars, &values);
    let verdict = if relaxed_slack > threshold {
        GasVerdict::Infeasible
    } else if state.status != PccpStatus::Converged {
        GasVerdict::Undetermined
    } else if total_slack <= threshold {
        GasVerdict::Feasible
    } else {
        GasVerdict::Infeasible
    };
    let (plus, minus) = g.vars.elastic.as_ref().expect("elastic slacks allocated");
    let mut slack_nodes = Vec::new();
    for (m, node) in instance.gas_network.nodes.iter().enumerate() {
        for t in 0..instance.horizon {
            let s = values[plus[m][t].0] + values[minus[m][t].0];
            if s > threshold {
                slack_nodes.push((node.id.clone(), t, s));
            }
        }
    }
    slack_nodes.sort_by(|a, b| b.2.total_cmp(&a.2));
    Ok(GasAudit { verdict, total_slack, threshold, slack_nodes, trace: state.history })
}

/// One row of a comparison table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub variant: String,
    /// In-sample draws used (SAA samples or moment estimation); `None` uses instance moments.
    pub sample_size: Option<usize>,
    /// `None` on success, otherwise the failure message.
    pub error: Option<String>,
    pub cost: Option<CostBreakdown>,
    /// Percent.
    pub ejvp: Option<f64>,
    pub rocof: Vec<f64>,
    pub nadir: Vec<f64>,
    pub frequency_pass: Option<bool>,
    pub gas: Option<GasVerdict>,
    pub iterations: Option<usize>,
    /// Seconds.
    pub wall_time: f64,
    pub out_samples: usize,
}

/// Settings of a comparison run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CompareConfig {
    pub params: RunParams,
    pub in_samples: usize,
    pub out_samples: usize,
    /// Run the gas audit on every schedule.
    pub gas_audit: bool,
    /// Solve variants on this many threads (1 = sequential).
    pub threads: usize,
}

impl Default for CompareConfig {
    fn default() -> Self {
        Self { params: RunParams::default(), in_samples: 10_000, out_samples: 10_000, gas_audit: true, threads: 1 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub rows: Vec<EvalReport>,
    pub epsilon: f64,
    pub notes: Vec<String>,
}

fn sort_key(v: &ModelVariant) -> (usize, u64) {
    match v {
        ModelVariant::Saa { .. } => (0, 0),
        ModelVariant::DrM => (1, 0),
        ModelVariant::DrU => (2, 0),
        ModelVariant::DrMI { eps_ind } => (3, eps_ind.to_bits()),
        ModelVariant::DrUI { eps_ind } => (4, eps_ind.to_bits()),
        ModelVariant::NoFc => (5, 0),
        ModelVariant::NoNgs => (6, 0),
        ModelVariant::NoVi => (7, 0),
    }
}

/// Evaluates one schedule against a shared out-of-sample set.
pub fn evaluate_solution(
    sol: &ScheduleSolution,
    instance: &IegsInstance,
    out: &ScenarioSet,
    gas_audit: Option<(&PccpParams, &dyn MilpBackend)>,
) -> Result<EvalReport, EvalError> {
    let freq = audit_frequency(sol, instance);
    let gas = match gas_audit {
        Some((p, b)) if !instance.gas_network.nodes.is_empty() => Some(audit_gas_feasibility(sol, instance, p, b)?.verdict),
        _ => None,
    };
    Ok(EvalReport {
        variant: sol.variant.label(),
        sample_size: None,
        error: None,
        cost: Some(sol.cost),
        ejvp: Some(compute_ejvp(sol, out)?),
        rocof: freq.hours.iter().map(|h| h.rocof).collect(),
        nadir: freq.hours.iter().map(|h| h.nadir).collect(),
        frequency_pass: Some(freq.all_pass()),
        gas,
        iterations: Some(sol.stats.iterations),
        wall_time: sol.stats.wall_time,
        out_samples: out.samples,
    })
}

/// Solves every `(variant, size)` pair and scores it on one shared
/// out-of-sample set. Failures are recorded in their row.
pub fn compare_variants(
    instance: &IegsInstance,
    variants: &[ModelVariant],
    sizes: &[usize],
    config: &CompareConfig,
) -> Result<ComparisonTable, EvalError> {
    let (_, out) = paired_scenarios(instance, config.params.seed, config.in_samples, config.out_samples);
    let mut jobs: Vec<(ModelVariant, Option<usize>)> = Vec::new();
    for v in variants {
        if sizes.is_empty() {
            let size = if let ModelVariant::Saa { samples } = v { Some(*samples) } else { None };
            jobs.push((*v, size));
        }
        for &n in sizes {
            match v {
                ModelVariant::Saa { .. } => jobs.push((ModelVariant::Saa { samples: n }, Some(n))),
                _ => jobs.push((*v, Some(n))),
            }
        }
    }
    jobs.sort_by_key(|(v, n)| (sort_key(v), *n));
    jobs.dedup();

    let run_job = |(variant, size): &(ModelVariant, Option<usize>)| -> EvalReport {
        let start = Instant::now();
        let mut params = config.params.clone();
        if !matches!(variant, ModelVariant::Saa { .. }) {
            params.moment_samples = *size;
        }
        let result = (|| -> Result<EvalReport, EvalError> {
            if let Some(n) = size {
                if *n > config.in_samples {
                    return Err(EvalError::Schedule(ScheduleError::Variant(format!(
                        "sample size {n} exceeds the {} in-sample draws",
                        config.in_samples
                    ))));
                }
            }
            let run = run_algorithm1(instance, variant, &params)?;
            let backend = params.backend()?;
            let audit = config.gas_audit.then_some((&params.pccp, backend.as_ref()));
            evaluate_solution(&run.solution, instance, &out, audit)
        })();
        match result {
            Ok(mut r) => {
                r.sample_size = *size;
                r
            }
            Err(e) => EvalReport {
                variant: variant.label(),
                sample_size: *size,
                error: Some(e.to_string()),
                cost: None,
                ejvp: None,
                rocof: Vec::new(),
                nadir: Vec::new(),
                frequency_pass: None,
                gas: None,
                iterations: None,
                wall_time: start.elapsed().as_secs_f64(),
                out_samples: out.samples,
            },
        }
    };
    let rows: Vec<EvalReport> = if config.threads > 1 {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(config.threads).build().expect("thread pool");
        pool.install(|| jobs.par_iter().map(run_job).collect())
    } else {
        jobs.iter().map(run_job).collect()
    };
    let epsilon = config.params.epsilon.unwrap_or(instance.uncertainty.epsilon);
    let notes = vec![format!(
        "EJVP over {} paired out-of-sample draws (seed {}); SAA rates depend on the instance and show direction only.",
        out.samples, config.params.seed
    )];
    Ok(ComparisonTable { rows, epsilon, notes })
}

fn opt<T: std::fmt::Display>(v: Option<T>) -> String {
    v.map_or("-".into(), |x| x.to_string())
}

impl ComparisonTable {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("table serializes")
    }

    /// Aligned plain-text table.
    pub fn to_text(&self) -> String {
        let header = ["variant", "size", "total_cost", "ejvp_%", "freq", "gas", "iters", "time_s", "error"];
        let mut cells: Vec<Vec<String>> = vec![header.iter().map(|s| s.to_string()).collect()];
        for r in &self.rows {
            cells.push(vec![
                r.variant.clone(),
                opt(r.sample_size),
                opt(r.cost.map(|c| format!("{:.2}", c.total))),
                opt(r.ejvp.map(|e| format!("{e:.2}"))),
                opt(r.frequency_pass.map(|p| if p { "pass" } else { "FAIL" })),
                opt(r.gas.map(|g| format!("{g:?}").to_lowercase())),
                opt(r.iterations),
                format!("{:.1}", r.wall_time),
                r.error.clone().unwrap_or_default(),
            ]);
        }
        let widths: Vec<usize> = (0..header.len()).map(|c| cells.iter().map(|r| r[c].len()).max().unwrap_or(0)).collect();
        let mut out = String::new();
        for row in &cells {
            let line: Vec<String> = row.iter().zip(&widths).map(|(s, w)| format!("{s:<w$}")).collect();
            let _ = writeln!(out, "{}", line.join("  ").trim_end());
        }
        let _ = writeln!(out, "epsilon = {}", self.epsilon);
        for n in &self.notes {
            let _ = writeln!(out, "{n}");
        }
        out
    }

    /// Per-hour CSV of one metric, one column per row.
    fn hourly_csv(&self, pick: impl Fn(&EvalReport) -> &Vec<f64>) -> String {
        let horizon = self.rows.iter().map(|r| pick(r).len()).max().unwrap_or(0);
        let mut out = String::from("hour");
        for r in &self.rows {
            let _ = write!(out, ",{}@{}", r.variant, opt(r.sample_size));
        }
        out.push('\n');
        for t in 0..horizon {
            let _ = write!(out, "{t}");
            for r in &self.rows {
                let _ = write!(out, ",{}", pick(r).get(t).map_or(String::new(), |v| v.to_string()));
            }
            out.push('\n');
        }
        out
    }

    /// Writes `report.json`, `report.txt`, `rocof_by_hour.csv` and `nadir_by_hour.csv`.
    pub fn write(&self, dir: &Path) -> Result<(), EvalError> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("report.json"), self.to_json())?;
        std::fs::write(dir.join("report.txt"), self.to_text())?;
        std::fs::write(dir.join("rocof_by_hour.csv"), self.hourly_csv(|r| &r.rocof))?;
        std::fs::write(dir.join("nadir_by_hour.csv"), self.hourly_csv(|r| &r.nadir))?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(values: Vec<f64>, samples: usize) -> ScenarioSet {
        ScenarioSet::new(samples, 1, values.len() / samples, values, 0, Provenance::OutOfSample).unwrap()
    }

    #[test]
    fn ejvp_counts_strict_exceedance() {
        let out = set((1..=10).map(f64::from).collect(), 10);
        assert_eq!(compute_ejvp_with(&[vec![1.5]], &out, EjvpMode::Horizon).unwrap(), 10.0);
        assert_eq!(compute_ejvp_with(&[vec![1.0]], &out, EjvpMode::Horizon).unwrap(), 0.0);
        assert_eq!(compute_ejvp_with(&[vec![10.5]], &out, EjvpMode::Horizon).unwrap(), 100.0);
    }

    #[test]
    fn ejvp_rejects_in_sample() {
        let mut out = set(vec![1.0], 1);
        out.provenance = Provenance::InSample;
        assert!(matches!(compute_ejvp_with(&[vec![0.0]], &out, EjvpMode::Horizon), Err(EvalError::InSample)));
    }

    #[test]
    fn per_hour_is_at_most_horizon() {
        let out = set(vec![1.0, 5.0, 5.0, 1.0], 2);
        let c = [vec![2.0, 2.0]];
        assert_eq!(compute_ejvp_with(&c, &out, EjvpMode::Horizon).unwrap(), 100.0);
        assert_eq!(compute_ejvp_with(&c, &out, EjvpMode::PerHour).unwrap(), 50.0);
    }
}
