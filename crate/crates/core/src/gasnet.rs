//! Natural gas network rows and the penalty convex-concave machinery used to
//! restore the Weymouth equality from its cone relaxation.
//!
//! Node balance uses directed pipeline flows: a pipeline `m → n` withdraws its
//! inflow `F^in` at `m` and delivers its outflow `F^out` at `n`; the difference
//! goes into linepack. A compressor withdraws `F^C + τ` at its inlet and
//! delivers `F^C` at its outlet.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::instance::IegsInstance;
use crate::optmodel::{AffineExpr, OptModel, RowSense, SocId, VarId};

#[derive(Debug, Error, PartialEq)]
pub enum GasError {
    #[error("pipeline `{0}` has no initial linepack")]
    MissingInitialLinepack(String),
    #[error("compressor `{0}` has identical inlet and outlet")]
    DegenerateCompressor(String),
    #[error("pressure at node `{node}` is {value} at hour {hour}; the gap is undefined")]
    ZeroPressure { node: String, hour: usize, value: f64 },
    #[error("linearization point for pipeline {pipeline}, hour {hour} is not finite")]
    BadPoint { pipeline: usize, hour: usize },
}

/// Variable handles indexed `[element][hour]`.
pub type VarGrid = Vec<Vec<VarId>>;

/// Gas variables for the whole horizon, indexed `[element][hour]`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct GasVarSet {
    pub pressure: Vec<Vec<VarId>>,
    pub flow: Vec<Vec<VarId>>,
    pub flow_in: Vec<Vec<VarId>>,
    pub flow_out: Vec<Vec<VarId>>,
    pub linepack: Vec<Vec<VarId>>,
    pub comp_flow: Vec<Vec<VarId>>,
    pub comp_use: Vec<Vec<VarId>>,
    pub source: Vec<Vec<VarId>>,
    /// Indexed like `IegsInstance::gfu_indices`.
    pub gfu_use: Vec<Vec<VarId>>,
    /// Concave-side slacks, present only in penalized problems.
    pub pccp_slack: Option<Vec<Vec<VarId>>>,
    /// Elastic balance slacks `(supply, withdrawal)` per node, for feasibility audits.
    pub elastic: Option<(VarGrid, VarGrid)>,
    /// Weymouth cone rows `[pipeline][hour]`.
    pub weymouth: Vec<Vec<SocId>>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct GasVarOptions {
    pub pccp_slack: bool,
    pub elastic: bool,
}

fn grid(model: &mut OptModel, n: usize, horizon: usize, mut make: impl FnMut(&mut OptModel, usize, usize) -> VarId) -> Vec<Vec<VarId>> {
    (0..n).map(|i| (0..horizon).map(|t| make(model, i, t)).collect()).collect()
}

/// Declares all gas variables with their physical bounds.
pub fn allocate_gas_vars(model: &mut OptModel, instance: &IegsInstance, options: GasVarOptions) -> GasVarSet {
    let gas = &instance.gas_network;
    let t = instance.horizon;
    let inf = f64::INFINITY;
    let gfus = instance.gfu_indices();
    let mut v = GasVarSet {
        pressure: grid(model, gas.nodes.len(), t, |m, i, h| {
            let n = &gas.nodes[i];
            m.continuous(format!("pi[{},{h}]", n.id), n.pressure_min, n.pressure_max)
        }),
        flow: grid(model, gas.pipelines.len(), t, |m, i, h| m.continuous(format!("F[{},{h}]", gas.pipelines[i].id), 0.0, inf)),
        flow_in: grid(model, gas.pipelines.len(), t, |m, i, h| m.continuous(format!("Fin[{},{h}]", gas.pipelines[i].id), 0.0, inf)),
        flow_out: grid(model, gas.pipelines.len(), t, |m, i, h| m.continuous(format!("Fout[{},{h}]", gas.pipelines[i].id), 0.0, inf)),
        linepack: grid(model, gas.pipelines.len(), t, |m, i, h| m.continuous(format!("LP[{},{h}]", gas.pipelines[i].id), 0.0, inf)),
        comp_flow: grid(model, gas.compressors.len(), t, |m, i, h| {
            let k = &gas.compressors[i];
            m.continuous(format!("FC[{},{h}]", k.id), 0.0, k.flow_max)
        }),
        comp_use: grid(model, gas.compressors.len(), t, |m, i, h| m.continuous(format!("tauC[{},{h}]", gas.compressors[i].id), 0.0, inf)),
        source: grid(model, gas.sources.len(), t, |m, i, h| {
            let s = &gas.sources[i];
            m.continuous(format!("FS[{},{h}]", s.id), s.flow_min, s.flow_max)
        }),
        gfu_use: grid(model, gfus.len(), t, |m, i, h| m.continuous(format!("FG[{},{h}]", instance.generators[gfus[i]].id), 0.0, inf)),
        pccp_slack: None,
        elastic: None,
        weymouth: Vec::new(),
    };
    if options.pccp_slack {
        v.pccp_slack =
            Some(grid(model, gas.pipelines.len(), t, |m, i, h| m.continuous(format!("sW[{},{h}]", gas.pipelines[i].id), 0.0, inf)));
    }
    if options.elastic {
        let plus = grid(model, gas.nodes.len(), t, |m, i, h| m.continuous(format!("eplus[{},{h}]", gas.nodes[i].id), 0.0, inf));
        let minus = grid(model, gas.nodes.len(), t, |m, i, h| m.continuous(format!("eminus[{},{h}]", gas.nodes[i].id), 0.0, inf));
        v.elastic = Some((plus, minus));
    }
    v
}

/// GFU coupling for one hour: generator power and response handles by generator index.
#[derive(Clone, Copy, Debug)]
pub struct GfuLink<'a> {
    pub power: &'a [VarId],
    pub reserve: &'a [VarId],
}

/// Balance, linepack, compressor, and coupling rows for one hour. Pressure and
/// source bounds are carried by the variables. The terminal linepack row is
/// added at the last hour.
pub fn build_gas_block(
    model: &mut OptModel,
    instance: &IegsInstance,
    vars: &GasVarSet,
    hour: usize,
    coupling: Option<GfuLink<'_>>,
) -> Result<(), GasError> {
    let gas = &instance.gas_network;
    let node = |id: &str| instance.gas_node_index(id).expect("validated gas node");
    for p in &gas.pipelines {
        if p.initial_linepack.is_none() {
            return Err(GasError::MissingInitialLinepack(p.id.clone()));
        }
    }
    for k in &gas.compressors {
        if k.inlet == k.outlet {
            return Err(GasError::DegenerateCompressor(k.id.clone()));
        }
    }
    let gfus = instance.gfu_indices();

    let mut balance: Vec<Vec<(VarId, f64)>> = vec![Vec::new(); gas.nodes.len()];
    for (i, s) in gas.sources.iter().enumerate() {
        balance[node(&s.node)].push((vars.source[i][hour], 1.0));
    }
    for (i, p) in gas.pipelines.iter().enumerate() {
        balance[node(&p.from)].push((vars.flow_in[i][hour], -1.0));
        balance[node(&p.to)].push((vars.flow_out[i][hour], 1.0));
    }
    for (i, k) in gas.compressors.iter().enumerate() {
        balance[node(&k.inlet)].push((vars.comp_flow[i][hour], -1.0));
        balance[node(&k.inlet)].push((vars.comp_use[i][hour], -1.0));
        balance[node(&k.outlet)].push((vars.comp_flow[i][hour], 1.0));
    }
    for (j, &g) in gfus.iter().enumerate() {
        let n = node(instance.generators[g].gas_node.as_deref().expect("validated"));
        balance[n].push((vars.gfu_use[j][hour], -1.0));
    }
    let mut demand = vec![0.0; gas.nodes.len()];
    for l in &gas.loads {
        demand[node(&l.node)] += l.demand[hour];
    }
    for (m, mut terms) in balance.into_iter().enumerate() {
        if let Some((plus, minus)) = &vars.elastic {
            terms.push((plus[m][hour], 1.0));
            terms.push((minus[m][hour], -1.0));
        }
        model.add_row("gas_balance", terms, RowSense::Eq, demand[m]);
    }

    for (i, p) in gas.pipelines.iter().enumerate() {
        let (f, fin, fout, lp) = (vars.flow[i][hour], vars.flow_in[i][hour], vars.flow_out[i][hour], vars.linepack[i][hour]);
        model.add_row("gas_avg_flow", [(f, 1.0), (fin, -0.5), (fout, -0.5)], RowSense::Eq, 0.0);
        let (pm, pn) = (vars.pressure[node(&p.from)][hour], vars.pressure[node(&p.to)][hour]);
        model.add_row("linepack_def", [(lp, 1.0), (pm, -0.5 * p.linepack), (pn, -0.5 * p.linepack)], RowSense::Eq, 0.0);
        let lp0 = p.initial_linepack.unwrap();
        if hour == 0 {
            model.add_row("linepack_dyn", [(fin, 1.0), (fout, -1.0), (lp, -1.0)], RowSense::Eq, -lp0);
        } else {
            let prev = vars.linepack[i][hour - 1];
            model.add_row("linepack_dyn", [(fin, 1.0), (fout, -1.0), (lp, -1.0), (prev, 1.0)], RowSense::Eq, 0.0);
        }
    }
    if hour + 1 == instance.horizon && !gas.pipelines.is_empty() {
        let total0: f64 = gas.pipelines.iter().map(|p| p.initial_linepack.unwrap()).sum();
        model.add_row("linepack_terminal", vars.linepack.iter().map(|lp| (lp[hour], 1.0)), RowSense::Ge, total0);
    }

    for (i, k) in gas.compressors.iter().enumerate() {
        let (fc, tau) = (vars.comp_flow[i][hour], vars.comp_use[i][hour]);
        model.add_row("compressor_use", [(tau, 1.0), (fc, -k.consumption)], RowSense::Eq, 0.0);
        let (pin, pout) = (vars.pressure[node(&k.inlet)][hour], vars.pressure[node(&k.outlet)][hour]);
        model.add_row("compressor_ratio", [(pout, 1.0), (pin, -k.ratio_min)], RowSense::Ge, 0.0);
        model.add_row("compressor_ratio", [(pout, 1.0), (pin, -k.ratio_max)], RowSense::Le, 0.0);
    }

    if let Some(link) = coupling {
        for (j, &g) in gfus.iter().enumerate() {
            let phi = instance.generators[g].gas_rate.expect("validated");
            model.add_row(
                "gfu_coupling",
                [(vars.gfu_use[j][hour], 1.0), (link.power[g], -phi), (link.reserve[g], -phi)],
                RowSense::Eq,
                0.0,
            );
        }
    }
    Ok(())
}

fn ends(instance: &IegsInstance, pipeline: usize) -> (usize, usize) {
    let p = &instance.gas_network.pipelines[pipeline];
    (instance.gas_node_index(&p.from).unwrap(), instance.gas_node_index(&p.to).unwrap())
}

/// Convex side of the Weymouth equation: `‖(F/C, π_n)‖ ≤ π_m`.
pub fn build_weymouth_soc(model: &mut OptModel, instance: &IegsInstance, vars: &GasVarSet, pipeline: usize, hour: usize) -> SocId {
    let c = instance.gas_network.pipelines[pipeline].weymouth;
    let (m, n) = ends(instance, pipeline);
    model.add_soc(
        "weymouth_cone",
        vec![AffineExpr::new().term(vars.flow[pipeline][hour], 1.0 / c), AffineExpr::var(vars.pressure[n][hour])],
        AffineExpr::var(vars.pressure[m][hour]),
    )
}

/// Affine `q` with `π_m² ≤ q` the linearized concave side at `(F^r, π_n^r)`:
/// `q = (2F^r F − F^r²)/C² + 2π_n^r π_n − π_n^r² + s`.
pub fn concave_rhs(
    instance: &IegsInstance,
    vars: &GasVarSet,
    pipeline: usize,
    hour: usize,
    point: (f64, f64),
    slack: Option<VarId>,
) -> AffineExpr {
    let c2 = instance.gas_network.pipelines[pipeline].weymouth.powi(2);
    let (_, n) = ends(instance, pipeline);
    let (fr, pr) = point;
    let mut q = AffineExpr::new()
        .term(vars.flow[pipeline][hour], 2.0 * fr / c2)
        .term(vars.pressure[n][hour], 2.0 * pr)
        .plus(-(fr * fr) / c2 - pr * pr);
    if let Some(s) = slack {
        q.add_term(s, 1.0);
    }
    q
}

/// Linearized concave side as the rotated cone `‖(π_m, (1−q)/2)‖ ≤ (1+q)/2`.
pub fn build_weymouth_concave_linearized(
    model: &mut OptModel,
    instance: &IegsInstance,
    vars: &GasVarSet,
    pipeline: usize,
    hour: usize,
    point: (f64, f64),
    slack: Option<VarId>,
) -> Result<SocId, GasError> {
    if !(point.0.is_finite() && point.1.is_finite()) {
        return Err(GasError::BadPoint { pipeline, hour });
    }
    let (m, _) = ends(instance, pipeline);
    let q = concave_rhs(instance, vars, pipeline, hour, point, slack);
    let lower = q.scaled(-0.5).plus(0.5);
    let upper = q.scaled(0.5).plus(0.5);
    Ok(model.add_soc("weymouth_concave", vec![AffineExpr::var(vars.pressure[m][hour]), lower], upper))
}

/// Flow and end pressures of one pipeline-hour read from a solution.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineReading {
    pub flow: f64,
    pub p_from: f64,
    pub p_to: f64,
    pub weymouth: f64,
}

impl PipelineReading {
    /// `(π_m² − π_n² − F²/C²) / π_m²`.
    pub fn gap(&self) -> f64 {
        (self.p_from.powi(2) - self.p_to.powi(2) - (self.flow / self.weymouth).powi(2)) / self.p_from.powi(2)
    }

    /// `|F² − C²(π_m² − π_n²)| / (C² π_m²)`.
    pub fn residual(&self) -> f64 {
        let c2 = self.weymouth.powi(2);
        (self.flow.powi(2) - c2 * (self.p_from.powi(2) - self.p_to.powi(2))).abs() / (c2 * self.p_from.powi(2))
    }
}

/// Readings `[pipeline][hour]` from solution values.
pub fn read_pipelines(instance: &IegsInstance, vars: &GasVarSet, values: &[f64]) -> Vec<Vec<PipelineReading>> {
    (0..instance.gas_network.pipelines.len())
        .map(|p| {
            let (m, n) = ends(instance, p);
            (0..instance.horizon)
                .map(|t| PipelineReading {
                    flow: values[vars.flow[p][t].0],
                    p_from: values[vars.pressure[m][t].0],
                    p_to: values[vars.pressure[n][t].0],
                    weymouth: instance.gas_network.pipelines[p].weymouth,
                })
                .collect()
        })
        .collect()
}

/// Largest relative cone relaxation gap over all pipeline-hours (0 without pipelines).
pub fn measure_relaxation_gap(readings: &[Vec<PipelineReading>]) -> Result<f64, GasError> {
    Ok(worst_gap(readings)?.map_or(0.0, |w| w.2))
}

/// `(pipeline, hour, gap)` of the largest relaxation gap.
pub fn worst_gap(readings: &[Vec<PipelineReading>]) -> Result<Option<(usize, usize, f64)>, GasError> {
    let mut worst: Option<(usize, usize, f64)> = None;
    for (p, row) in readings.iter().enumerate() {
        for (t, r) in row.iter().enumerate() {
            if !(r.p_from > 0.0) {
                return Err(GasError::ZeroPressure { node: format!("inlet of pipeline {p}"), hour: t, value: r.p_from });
            }
            let g = r.gap();
            if worst.is_none_or(|w| g > w.2) {
                worst = Some((p, t, g));
            }
        }
    }
    Ok(worst)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PccpParams {
    pub eps_gap: f64,
    pub rho0: f64,
    pub rho_max: f64,
    /// Penalty growth factor.
    pub growth: f64,
    pub max_iter: usize,
    /// Weight of the pressure-drop tightening term in the relaxed problem;
    /// `None` uses a tenth of the cheapest energy cost.
    #[serde(default)]
    pub tightening: Option<f64>,
}

impl Default for PccpParams {
    fn default() -> Self {
        Self { eps_gap: 1e-3, rho0: 0.02, rho_max: 1000.0, growth: 1.5, max_iter: 50, tightening: None }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PccpStatus {
    Running,
    Converged,
    Exhausted,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PccpRecord {
    pub iteration: usize,
    pub max_gap: f64,
    pub penalty: f64,
    pub objective: f64,
    pub slack_sum: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PccpState {
    pub iteration: usize,
    /// Linearization points `(F^r, π_n^r)` per `[pipeline][hour]`.
    pub points: Vec<Vec<(f64, f64)>>,
    pub penalty: f64,
    pub max_gap: f64,
    pub history: Vec<PccpRecord>,
    pub status: PccpStatus,
}

/// What one solve contributes to the procedure.
#[derive(Clone, Debug, PartialEq)]
pub struct PccpObservation {
    pub readings: Vec<Vec<PipelineReading>>,
    pub objective: f64,
    pub slack_sum: f64,
}

impl PccpObservation {
    pub fn new(instance: &IegsInstance, vars: &GasVarSet, values: &[f64], objective: f64) -> Self {
        let slack_sum = vars.pccp_slack.as_ref().map_or(0.0, |s| s.iter().flatten().map(|v| values[v.0]).sum());
        Self { readings: read_pipelines(instance, vars, values), objective, slack_sum }
    }
}

fn points_of(readings: &[Vec<PipelineReading>]) -> Vec<Vec<(f64, f64)>> {
    readings.iter().map(|row| row.iter().map(|r| (r.flow, r.p_to)).collect()).collect()
}

impl PccpState {
    /// State after the relaxed solve.
    pub fn start(obs: &PccpObservation, params: &PccpParams) -> Result<Self, GasError> {
        let gap = measure_relaxation_gap(&obs.readings)?;
        Ok(Self {
            iteration: 0,
            points: points_of(&obs.readings),
            penalty: params.rho0,
            max_gap: gap,
            history: vec![PccpRecord {
                iteration: 0,
                max_gap: gap,
                penalty: params.rho0,
                objective: obs.objective,
                slack_sum: obs.slack_sum,
            }],
            status: if gap <= params.eps_gap { PccpStatus::Converged } else { PccpStatus::Running },
        })
    }
}

/// Moves the linearization to the latest solution, updates the gap, grows the
/// penalty `ϱ ← min(κϱ, ϱ^max)`, and advances the iteration counter.
pub fn pccp_step(state: &PccpState, obs: &PccpObservation, params: &PccpParams) -> Result<PccpState, GasError> {
    let gap = measure_relaxation_gap(&obs.readings)?;
    let iteration = state.iteration + 1;
    let penalty = next_penalty(state.penalty, params);
    let mut history = state.history.clone();
    history.push(PccpRecord { iteration, max_gap: gap, penalty: state.penalty, objective: obs.objective, slack_sum: obs.slack_sum });
    let status = if gap <= params.eps_gap {
        PccpStatus::Converged
    } else if iteration >= params.max_iter {
        PccpStatus::Exhausted
    } else {
        PccpStatus::Running
    };
    Ok(PccpState { iteration, points: points_of(&obs.readings), penalty, max_gap: gap, history, status })
}

pub fn next_penalty(current: f64, params: &PccpParams) -> f64 {
    (params.growth * current).min(params.rho_max)
}

/// Trace as CSV with columns `r,m_gap,penalty,objective,slack_sum`.
pub fn trace_csv(history: &[PccpRecord]) -> String {
    let mut out = String::from("r,m_gap,penalty,objective,slack_sum\n");
    for h in history {
        out.push_str(&format!("{},{:?},{:?},{:?},{:?}\n", h.iteration, h.max_gap, h.penalty, h.objective, h.slack_sum));
    }
    out
}

/// Relaxed or penalized stage of the procedure.
#[derive(Clone, Copy, Debug)]
pub enum PccpStage<'a> {
    Relaxed,
    Penalized { points: &'a [Vec<(f64, f64)>], penalty: f64 },
}

/// Adds the Weymouth rows of `stage` for every pipeline-hour and, in the
/// penalized stage, the slack penalty to the objective.
pub fn add_weymouth_rows(
    model: &mut OptModel,
    instance: &IegsInstance,
    vars: &mut GasVarSet,
    stage: PccpStage<'_>,
) -> Result<(), GasError> {
    let np = instance.gas_network.pipelines.len();
    vars.weymouth = (0..np).map(|p| (0..instance.horizon).map(|t| build_weymouth_soc(model, instance, vars, p, t)).collect()).collect();
    if let PccpStage::Penalized { points, penalty } = stage {
        let slack = vars.pccp_slack.clone().expect("penalized stage allocates slacks");
        for p in 0..np {
            for t in 0..instance.horizon {
                build_weymouth_concave_linearized(model, instance, vars, p, t, points[p][t], Some(slack[p][t]))?;
                model.add_objective(slack[p][t], penalty);
            }
        }
    }
    Ok(())
}

/// Pressure-drop tightening `ρ Σ (π_m − π_n)` for the relaxed stage.
pub fn add_tightening(model: &mut OptModel, instance: &IegsInstance, vars: &GasVarSet, weight: f64) {
    for p in 0..instance.gas_network.pipelines.len() {
        let (m, n) = ends(instance, p);
        for t in 0..instance.horizon {
            model.add_objective(vars.pressure[m][t], weight);
            model.add_objective(vars.pressure[n][t], -weight);
        }
    }
}

/// Full gas state read from a solution.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GasState {
    pub pressure: Vec<Vec<f64>>,
    pub flow: Vec<Vec<f64>>,
    pub flow_in: Vec<Vec<f64>>,
    pub flow_out: Vec<Vec<f64>>,
    pub linepack: Vec<Vec<f64>>,
    pub comp_flow: Vec<Vec<f64>>,
    pub comp_use: Vec<Vec<f64>>,
    pub source: Vec<Vec<f64>>,
    pub gfu_use: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pccp_slack: Option<Vec<Vec<f64>>>,
}

fn read(grid: &[Vec<VarId>], values: &[f64]) -> Vec<Vec<f64>> {
    grid.iter().map(|row| row.iter().map(|v| values[v.0]).collect()).collect()
}

impl GasState {
    pub fn from_values(vars: &GasVarSet, values: &[f64]) -> Self {
        Self {
            pressure: read(&vars.pressure, values),
            flow: read(&vars.flow, values),
            flow_in: read(&vars.flow_in, values),
            flow_out: read(&vars.flow_out, values),
            linepack: read(&vars.linepack, values),
            comp_flow: read(&vars.comp_flow, values),
            comp_use: read(&vars.comp_use, values),
            source: read(&vars.source, values),
            gfu_use: read(&vars.gfu_use, values),
            pccp_slack: vars.pccp_slack.as_ref().map(|s| read(s, values)),
        }
    }

    /// Readings per `[pipeline][hour]`.
    pub fn readings(&self, instance: &IegsInstance) -> Vec<Vec<PipelineReading>> {
        (0..instance.gas_network.pipelines.len())
            .map(|p| {
                let (m, n) = ends(instance, p);
                (0..instance.horizon)
                    .map(|t| PipelineReading {
                        flow: self.flow[p][t],
                        p_from: self.pressure[m][t],
                        p_to: self.pressure[n][t],
                        weymouth: instance.gas_network.pipelines[p].weymouth,
                    })
                    .collect()
            })
            .collect()
    }

    /// Node balance residual `[node][hour]` (inflow minus outflow minus demand).
    pub fn balance_residuals(&self, instance: &IegsInstance) -> Vec<Vec<f64>> {
        let gas = &instance.gas_network;
        let node = |id: &str| instance.gas_node_index(id).unwrap();
        let gfus = instance.gfu_indices();
        let mut res = vec![vec![0.0; instance.horizon]; gas.nodes.len()];
        for t in 0..instance.horizon {
            for (i, s) in gas.sources.iter().enumerate() {
                res[node(&s.node)][t] += self.source[i][t];
            }
            for (i, p) in gas.pipelines.iter().enumerate() {
                res[node(&p.from)][t] -= self.flow_in[i][t];
                res[node(&p.to)][t] += self.flow_out[i][t];
            }
            for (i, k) in gas.compressors.iter().enumerate() {
                res[node(&k.inlet)][t] -= self.comp_flow[i][t] + self.comp_use[i][t];
                res[node(&k.outlet)][t] += self.comp_flow[i][t];
            }
            for (j, &g) in gfus.iter().enumerate() {
                res[node(instance.generators[g].gas_node.as_deref().unwrap())][t] -= self.gfu_use[j][t];
            }
            for l in &gas.loads {
                res[node(&l.node)][t] -= l.demand[t];
            }
        }
        res
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gap_arithmetic() {
        let r = PipelineReading { flow: 1.0, p_from: 2.0, p_to: 1.0, weymouth: 1.0 };
        assert_eq!(r.gap(), 0.5);
        let tight = PipelineReading { flow: 3f64.sqrt(), p_from: 2.0, p_to: 1.0, weymouth: 1.0 };
        assert!(tight.gap().abs() < 1e-15);
        assert_eq!(measure_relaxation_gap(&[vec![r], vec![tight]]).unwrap(), 0.5);
        assert_eq!(measure_relaxation_gap(&[vec![tight], vec![r]]).unwrap(), 0.5);
    }

    #[test]
    fn penalty_rule() {
        let p = PccpParams::default();
        assert!((next_penalty(0.02, &p) - 0.03).abs() < 1e-15);
        assert_eq!(next_penalty(900.0, &p), 1000.0);
    }
}
