use std::collections::BTreeMap;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::drcc::{estimate_moments, generate_scenarios, AmbiguitySpec, Provenance, ScenarioSet, ScenarioSource};
use crate::freq::{big_m, hourly_kappa};
use crate::gasnet::{pccp_step, GasState, PccpObservation, PccpParams, PccpState, PccpStatus};
use crate::instance::IegsInstance;
use crate::optmodel::{backend_by_name, solve_misocp, MilpBackend, SolveOptions, SolveResult, SolveStatus, VarKind};

use super::build::{assemble, Assembly, Stage};
use super::verify::recompute_costs;
use super::{Diagnosis, ExitCondition, ModelVariant, ScheduleError, ScheduleSolution, SolverStats, UncertaintyData};

/// Settings of one scheduling run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunParams {
    /// Joint violation budget; `None` takes the instance value.
    pub epsilon: Option<f64>,
    /// Seed of the in-sample scenario stream.
    pub seed: u64,
    /// Estimate the moment set from this many in-sample draws instead of the
    /// instance forecast.
    pub moment_samples: Option<usize>,
    pub pccp: PccpParams,
    pub mip_gap: f64,
    /// Seconds per backend call.
    pub time_limit: Option<f64>,
    /// Backend name; `None` reads `DRFCUC_BACKEND` and falls back to HiGHS.
    pub backend: Option<String>,
}

impl Default for RunParams {
    fn default() -> Self {
        Self { epsilon: None, seed: 42, moment_samples: None, pccp: PccpParams::default(), mip_gap: 0.01, time_limit: None, backend: None }
    }
}

impl RunParams {
    pub fn solve_options(&self) -> Result<SolveOptions, ScheduleError> {
        let mut o = SolveOptions::default();
        o.set_mip_gap(self.mip_gap).map_err(|e| ScheduleError::Variant(e.to_string()))?;
        if let Some(t) = self.time_limit {
            o.set_time_limit(t).map_err(|e| ScheduleError::Variant(e.to_string()))?;
        }
        Ok(o)
    }

    pub fn backend(&self) -> Result<Box<dyn MilpBackend>, ScheduleError> {
        let env = std::env::var("DRFCUC_BACKEND").ok();
        Ok(backend_by_name(self.backend.as_deref().or(env.as_deref()))?)
    }
}

/// Parameter-only data shared by every problem of one run.
#[derive(Clone, Debug, PartialEq)]
pub struct Context {
    pub epsilon: f64,
    /// Per-hour nadir threshold.
    pub kappa: Vec<f64>,
    pub big_m: f64,
    pub uncertainty: UncertaintyData,
    /// Weight of the pressure-drop term in the relaxed problem.
    pub tightening: f64,
}

fn instance_moments(instance: &IegsInstance, epsilon: f64) -> AmbiguitySpec {
    let u = &instance.uncertainty;
    match &u.moments {
        Some(table) => AmbiguitySpec { mean: table.mean.clone(), variance: table.variance.clone(), epsilon, unimodal: u.unimodal },
        None => AmbiguitySpec { epsilon, ..AmbiguitySpec::from_forecast(instance) },
    }
}

/// In-sample draws: the instance's own samples if it bundles them, else the
/// first `count` draws of the seeded stream.
pub(crate) fn in_sample(instance: &IegsInstance, count: usize, seed: u64) -> Result<ScenarioSet, ScheduleError> {
    if let Some(bundled) = &instance.uncertainty.samples {
        let values: Vec<f64> = bundled.iter().flatten().flatten().copied().collect();
        let set = ScenarioSet::new(bundled.len(), instance.num_wind(), instance.horizon, values, seed, Provenance::InSample)?;
        return Ok(set);
    }
    Ok(generate_scenarios(&ScenarioSource::from_instance(instance), count, seed, Provenance::InSample))
}

/// Validates the inputs and computes everything that does not depend on decisions.
pub fn prepare(instance: &IegsInstance, variant: &ModelVariant, params: &RunParams) -> Result<Context, ScheduleError> {
    instance.validate()?;
    let epsilon = params.epsilon.unwrap_or(instance.uncertainty.epsilon);
    variant.check(epsilon)?;
    let kappa = hourly_kappa(instance)?;
    let unimodal = matches!(variant, ModelVariant::DrU | ModelVariant::DrUI { .. }) || instance.uncertainty.unimodal;
    let uncertainty = match *variant {
        ModelVariant::Saa { samples } => UncertaintyData::Samples(in_sample(instance, samples, params.seed)?),
        _ => {
            let spec = match params.moment_samples {
                Some(n) => estimate_moments(&in_sample(instance, n, params.seed)?, n, epsilon, unimodal)?,
                None => AmbiguitySpec { unimodal, ..instance_moments(instance, epsilon) },
            };
            spec.validate()?;
            UncertaintyData::Moments(spec)
        }
    };
    let tightening = params.pccp.tightening.unwrap_or_else(|| {
        let cheapest = instance.generators.iter().map(|g| g.cost.energy).filter(|c| *c > 0.0).fold(f64::INFINITY, f64::min);
        if cheapest.is_finite() {
            0.1 * cheapest
        } else {
            0.1
        }
    });
    Ok(Context { epsilon, kappa, big_m: big_m(instance), uncertainty, tightening })
}

/// Final solution together with the last assembled problem and its raw point.
#[derive(Clone, Debug)]
pub struct AlgorithmRun {
    pub solution: ScheduleSolution,
    pub assembly: Assembly,
    pub values: Vec<f64>,
    pub context: Context,
}

struct Tally {
    stats: SolverStats,
    limited: bool,
}

impl Tally {
    fn add(&mut self, r: &SolveResult) {
        self.stats.iterations += 1;
        self.stats.backend_calls += r.backend_calls;
        self.stats.cut_count += r.cut_count;
        self.stats.mip_gap = r.mip_gap;
        self.stats.objective = r.objective.unwrap_or(f64::NAN);
        self.stats.max_soc_violation = r.max_soc_violation;
        self.limited |= r.status != SolveStatus::Optimal;
    }
}

/// Elastic re-solve naming the subsystem that absorbs the infeasibility.
pub(crate) fn diagnose(
    instance: &IegsInstance,
    variant: &ModelVariant,
    ctx: &Context,
    backend: &dyn MilpBackend,
    options: &SolveOptions,
) -> Result<Diagnosis, ScheduleError> {
    let a = assemble(instance, variant, ctx, Stage::Elastic)?;
    let r = solve_misocp(&a.model, backend, options)?;
    let Some(values) = r.values else {
        return Ok(Diagnosis { resolved: false, ..Diagnosis::default() });
    };
    let mut families: BTreeMap<String, f64> = BTreeMap::new();
    let mut elements = Vec::new();
    for (fam, elem, v) in &a.elastic.expect("elastic stage").slacks {
        let s = values[v.0];
        if s > 1e-6 {
            *families.entry(fam.clone()).or_default() += s;
            elements.push((format!("{fam}@{elem}"), s));
        }
    }
    let mut families: Vec<(String, f64)> = families.into_iter().collect();
    families.sort_by(|a, b| b.1.total_cmp(&a.1));
    elements.sort_by(|a, b| b.1.total_cmp(&a.1));
    Ok(Diagnosis { families, elements, resolved: true })
}

fn solve_stage(
    instance: &IegsInstance,
    variant: &ModelVariant,
    ctx: &Context,
    stage: Stage<'_>,
    backend: &dyn MilpBackend,
    options: &SolveOptions,
    tally: &mut Tally,
) -> Result<(Assembly, Vec<f64>, f64), ScheduleError> {
    let name = match stage {
        Stage::Relaxed => "relaxed",
        Stage::Penalized { .. } => "penalized",
        Stage::Elastic => "elastic",
    };
    let a = assemble(instance, variant, ctx, stage)?;
    log::info!(
        "{name} problem: {} variables ({} binary), {} rows, {} cones",
        a.model.num_vars(),
        a.model.num_binaries(),
        a.model.rows.len(),
        a.model.socs.len()
    );
    let r = solve_misocp(&a.model, backend, options)?;
    tally.add(&r);
    match (r.status, r.values) {
        (SolveStatus::Infeasible, _) => {
            let diagnosis =
                if matches!(stage, Stage::Relaxed) { diagnose(instance, variant, ctx, backend, options)? } else { Diagnosis::default() };
            Err(ScheduleError::Infeasible { stage: name.into(), diagnosis })
        }
        (_, None) => Err(ScheduleError::NoIncumbent(name.into())),
        (_, Some(values)) => Ok((a, values, r.objective.unwrap_or(f64::NAN))),
    }
}

/// Relaxed solve followed by penalized solves until the Weymouth gap closes.
pub fn run_algorithm1(instance: &IegsInstance, variant: &ModelVariant, params: &RunParams) -> Result<AlgorithmRun, ScheduleError> {
    let ctx = prepare(instance, variant, params)?;
    let backend = params.backend()?;
    run_with_context(instance, variant, params, ctx, backend.as_ref())
}

/// [`run_algorithm1`] with a prepared context and an explicit backend.
pub fn run_with_context(
    instance: &IegsInstance,
    variant: &ModelVariant,
    params: &RunParams,
    ctx: Context,
    backend: &dyn MilpBackend,
) -> Result<AlgorithmRun, ScheduleError> {
    let start = Instant::now();
    let options = params.solve_options()?;
    let mut tally = Tally { stats: SolverStats { backend: backend.name().to_string(), ..SolverStats::default() }, limited: false };

    let (mut assembly, mut values, mut objective) = solve_stage(instance, variant, &ctx, Stage::Relaxed, backend, &options, &mut tally)?;
    let mut state: Option<PccpState> = None;
    if let Some(gas) = &assembly.gas {
        let obs = PccpObservation::new(instance, gas, &values, objective);
        let mut s = PccpState::start(&obs, &params.pccp)?;
        if let Some((p, t, g)) = crate::gasnet::worst_gap(&obs.readings)? {
            let r = obs.readings[p][t];
            log::info!("relaxed gap {g:.3e} at pipeline {p}, hour {t}: flow {:.3}, pressures {:.3} -> {:.3}", r.flow, r.p_from, r.p_to);
        }
        if params.pccp.max_iter == 0 && s.status == PccpStatus::Running {
            s.status = PccpStatus::Exhausted;
        }
        while s.status == PccpStatus::Running {
            let stage = Stage::Penalized { points: &s.points, penalty: s.penalty };
            let (a, v, obj) = solve_stage(instance, variant, &ctx, stage, backend, &options, &mut tally)?;
            let obs = PccpObservation::new(instance, a.gas.as_ref().expect("gas rows present"), &v, obj);
            s = pccp_step(&s, &obs, &params.pccp)?;
            if let Some((p, t, g)) = crate::gasnet::worst_gap(&obs.readings)? {
                let r = obs.readings[p][t];
                log::info!(
                    "iteration {}: gap {g:.3e} at pipeline {p}, hour {t}: flow {:.3}, pressures {:.3} -> {:.3}, slack {:.3e}",
                    s.iteration,
                    r.flow,
                    r.p_from,
                    r.p_to,
                    obs.slack_sum
                );
            }
            (assembly, values, objective) = (a, v, obj);
        }
        state = Some(s);
    }
    let _ = objective;

    let exit = match &state {
        Some(s) if s.status == PccpStatus::Exhausted => ExitCondition::IterationLimit,
        _ if tally.limited => ExitCondition::SolverLimit,
        _ => ExitCondition::Converged,
    };
    tally.stats.wall_time = start.elapsed().as_secs_f64();
    let solution = extract(instance, variant, &ctx, &assembly, &values, state.as_ref(), params, exit, tally.stats);
    Ok(AlgorithmRun { solution, assembly, values, context: ctx })
}

fn round_binary(model_kind: VarKind, v: f64, name: &str) -> bool {
    debug_assert_eq!(model_kind, VarKind::Binary);
    let r = v.round();
    if (v - r).abs() > 1e-6 {
        log::warn!("binary {name} = {v} is not integral within 1e-6");
    }
    r >= 0.5
}

#[allow(clippy::too_many_arguments)]
fn extract(
    instance: &IegsInstance,
    variant: &ModelVariant,
    ctx: &Context,
    a: &Assembly,
    values: &[f64],
    state: Option<&PccpState>,
    params: &RunParams,
    exit: ExitCondition,
    stats: SolverStats,
) -> ScheduleSolution {
    let model = &a.model;
    let bin = |grid: &[Vec<crate::optmodel::VarId>], n: usize| -> Vec<Vec<bool>> {
        (0..n)
            .map(|i| {
                grid.iter()
                    .map(|row| {
                        let v = row[i];
                        round_binary(model.vars[v.0].kind, values[v.0], &model.vars[v.0].name)
                    })
                    .collect()
            })
            .collect()
    };
    let cont = |grid: &[Vec<crate::optmodel::VarId>], n: usize| -> Vec<Vec<f64>> {
        (0..n).map(|i| grid.iter().map(|row| values[row[i].0]).collect()).collect()
    };
    let (ng, nw) = (instance.num_generators(), instance.num_wind());
    let committed = bin(&a.uc.committed, ng);
    let power = cont(&a.uc.power, ng);
    let gen_reserve = cont(&a.uc.reserve, ng);
    // Clean solver noise on units that are off.
    let zero_off = |grid: Vec<Vec<f64>>| -> Vec<Vec<f64>> {
        grid.into_iter().zip(&committed).map(|(row, x)| row.into_iter().zip(x).map(|(v, &on)| if on { v } else { 0.0 }).collect()).collect()
    };
    let mut sol = ScheduleSolution {
        instance: instance.name.clone(),
        variant: *variant,
        epsilon: ctx.epsilon,
        exit,
        committed: committed.clone(),
        startup: bin(&a.uc.startup, ng),
        shutdown: bin(&a.uc.shutdown, ng),
        virtual_inertia: bin(&a.uc.virtual_inertia, nw),
        power: zero_off(power),
        gen_reserve: zero_off(gen_reserve),
        wind_power: cont(&a.uc.wind_power, nw),
        wind_reserve: cont(&a.uc.wind_reserve, nw),
        gas: a.gas.as_ref().map(|g| GasState::from_values(g, values)),
        cost: Default::default(),
        kappa: ctx.kappa.clone(),
        pccp: state.map(|s| s.history.clone()).unwrap_or_default(),
        max_gap: state.map(|s| s.max_gap),
        params: params.pccp.clone(),
        stats,
    };
    sol.cost = recompute_costs(instance, &sol);
    sol
}
