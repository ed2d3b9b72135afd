use crate::drcc::{build_individual_drcc, build_saa_block, build_theorem1_soc, build_theorem2_soc, AmbiguitySpec, WindHourVars};
use crate::freq::{build_frequency_block, FreqConstraintBlock, FreqVars};
use crate::gasnet::{add_tightening, add_weymouth_rows, allocate_gas_vars, build_gas_block, GasVarOptions, GasVarSet, GfuLink, PccpStage};
use crate::instance::IegsInstance;
use crate::optmodel::{AffineExpr, OptModel, RowSense, VarId};

use super::{Context, ModelVariant, ScheduleError, UncertaintyData};

/// Unit commitment decision handles, indexed `[hour][unit]`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct UcVars {
    pub committed: Vec<Vec<VarId>>,
    pub startup: Vec<Vec<VarId>>,
    pub shutdown: Vec<Vec<VarId>>,
    pub power: Vec<Vec<VarId>>,
    pub reserve: Vec<Vec<VarId>>,
    pub virtual_inertia: Vec<Vec<VarId>>,
    pub wind_power: Vec<Vec<VarId>>,
    pub wind_reserve: Vec<Vec<VarId>>,
}

impl UcVars {
    /// Declares the variables; without virtual inertia the wind binaries and
    /// wind response are fixed at zero through their bounds.
    pub fn allocate(model: &mut OptModel, instance: &IegsInstance, virtual_inertia: bool) -> Self {
        let mut v = Self::default();
        for t in 0..instance.horizon {
            let mut row =
                |f: &mut dyn FnMut(&mut OptModel, usize) -> VarId, n: usize| (0..n).map(|i| f(&mut *model, i)).collect::<Vec<_>>();
            let ng = instance.generators.len();
            let nw = instance.wind_farms.len();
            let g = &instance.generators;
            let w = &instance.wind_farms;
            v.committed.push(row(&mut |m, i| m.binary(format!("x[{},{t}]", g[i].id)), ng));
            v.startup.push(row(&mut |m, i| m.binary(format!("zu[{},{t}]", g[i].id)), ng));
            v.shutdown.push(row(&mut |m, i| m.binary(format!("zd[{},{t}]", g[i].id)), ng));
            v.power.push(row(&mut |m, i| m.continuous(format!("P[{},{t}]", g[i].id), 0.0, g[i].p_max), ng));
            v.reserve.push(row(&mut |m, i| m.continuous(format!("RG[{},{t}]", g[i].id), 0.0, g[i].reserve_max), ng));
            v.virtual_inertia.push(row(
                &mut |m, i| {
                    let y = m.binary(format!("y[{},{t}]", w[i].id));
                    if !virtual_inertia {
                        m.vars[y.0].upper = 0.0;
                    }
                    y
                },
                nw,
            ));
            v.wind_power.push(row(&mut |m, i| m.continuous(format!("PW[{},{t}]", w[i].id), 0.0, w[i].capacity), nw));
            let rmax = |i: usize| if virtual_inertia { w[i].reserve_max } else { 0.0 };
            v.wind_reserve.push(row(&mut |m, i| m.continuous(format!("RW[{},{t}]", w[i].id), 0.0, rmax(i)), nw));
        }
        v
    }
}

/// Elastic slacks added for infeasibility diagnosis: `(family, element, var)`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ElasticVars {
    pub slacks: Vec<(String, String, VarId)>,
}

/// Commitment logic, minimum up and down times, generation and response
/// limits, ramping, wind response limits, line limits and power balance.
pub fn build_uc_core(
    model: &mut OptModel,
    instance: &IegsInstance,
    uc: &UcVars,
    mut elastic: Option<&mut ElasticVars>,
) -> Result<(), ScheduleError> {
    let horizon = instance.horizon;
    for (i, g) in instance.generators.iter().enumerate() {
        let init = g.initial_state();
        let x0 = if init.committed { 1.0 } else { 0.0 };
        for t in 0..horizon {
            let (x, zu, zd) = (uc.committed[t][i], uc.startup[t][i], uc.shutdown[t][i]);
            if t == 0 {
                model.add_row("uc_logic", [(zu, 1.0), (zd, -1.0), (x, -1.0)], RowSense::Eq, -x0);
            } else {
                model.add_row("uc_logic", [(zu, 1.0), (zd, -1.0), (x, -1.0), (uc.committed[t - 1][i], 1.0)], RowSense::Eq, 0.0);
            }
            model.add_row("uc_exclusive", [(zu, 1.0), (zd, 1.0)], RowSense::Le, 1.0);
            let up_from = (t + 1).saturating_sub(g.min_up.max(1));
            let mut terms: Vec<(VarId, f64)> = (up_from..=t).map(|s| (uc.startup[s][i], 1.0)).collect();
            terms.push((x, -1.0));
            model.add_row("min_up", terms, RowSense::Le, 0.0);
            let down_from = (t + 1).saturating_sub(g.min_down.max(1));
            let mut terms: Vec<(VarId, f64)> = (down_from..=t).map(|s| (uc.shutdown[s][i], 1.0)).collect();
            terms.push((x, 1.0));
            model.add_row("min_down", terms, RowSense::Le, 1.0);

            let (p, r) = (uc.power[t][i], uc.reserve[t][i]);
            model.add_row("gen_min", [(p, 1.0), (x, -g.p_min)], RowSense::Ge, 0.0);
            model.add_row("gen_max", [(p, 1.0), (r, 1.0), (x, -g.p_max)], RowSense::Le, 0.0);
            model.add_row("pfr_limit", [(r, 1.0), (x, -g.reserve_max)], RowSense::Le, 0.0);
            if t == 0 {
                let prev = init.power + init.reserve;
                model.add_row("ramp_up", [(p, 1.0), (r, 1.0)], RowSense::Le, g.ramp_up + prev);
                model.add_row("ramp_down", [(p, 1.0), (r, 1.0)], RowSense::Ge, prev - g.ramp_down);
            } else {
                let (pp, rp) = (uc.power[t - 1][i], uc.reserve[t - 1][i]);
                model.add_row("ramp_up", [(p, 1.0), (r, 1.0), (pp, -1.0), (rp, -1.0)], RowSense::Le, g.ramp_up);
                model.add_row("ramp_down", [(p, 1.0), (r, 1.0), (pp, -1.0), (rp, -1.0)], RowSense::Ge, -g.ramp_down);
            }
        }
    }
    for (w, farm) in instance.wind_farms.iter().enumerate() {
        for t in 0..horizon {
            model.add_row(
                "wind_pfr_limit",
                [(uc.wind_reserve[t][w], 1.0), (uc.virtual_inertia[t][w], -farm.reserve_max)],
                RowSense::Le,
                0.0,
            );
        }
    }

    let psi = instance.shift_factors()?;
    let gen_bus: Vec<usize> = instance.generators.iter().map(|g| instance.bus_index(&g.bus).expect("validated")).collect();
    let wind_bus: Vec<usize> = instance.wind_farms.iter().map(|w| instance.bus_index(&w.bus).expect("validated")).collect();
    for t in 0..horizon {
        let demand = instance.bus_demand(t);
        for (l, line) in instance.power_network.lines.iter().enumerate() {
            let mut terms: Vec<(VarId, f64)> = Vec::new();
            for (i, &b) in gen_bus.iter().enumerate() {
                terms.push((uc.power[t][i], psi[(l, b)]));
            }
            for (w, &b) in wind_bus.iter().enumerate() {
                terms.push((uc.wind_power[t][w], psi[(l, b)]));
            }
            let shift: f64 = demand.iter().enumerate().map(|(b, d)| psi[(l, b)] * d).sum();
            let mut upper = terms.clone();
            let mut lower = terms;
            if let Some(e) = elastic.as_deref_mut() {
                let s_up = model.continuous(format!("e_line_up[{},{t}]", line.id), 0.0, f64::INFINITY);
                let s_dn = model.continuous(format!("e_line_dn[{},{t}]", line.id), 0.0, f64::INFINITY);
                upper.push((s_up, -1.0));
                lower.push((s_dn, 1.0));
                e.slacks.push(("line_limit".into(), format!("{}[t={t}]", line.id), s_up));
                e.slacks.push(("line_limit".into(), format!("{}[t={t}]", line.id), s_dn));
            }
            model.add_row("line_limit", upper, RowSense::Le, line.capacity + shift);
            model.add_row("line_limit", lower, RowSense::Ge, -line.capacity + shift);
        }
        let mut terms: Vec<(VarId, f64)> = uc.power[t].iter().chain(&uc.wind_power[t]).map(|&v| (v, 1.0)).collect();
        if let Some(e) = elastic.as_deref_mut() {
            let plus = model.continuous(format!("e_bal_plus[{t}]"), 0.0, f64::INFINITY);
            let minus = model.continuous(format!("e_bal_minus[{t}]"), 0.0, f64::INFINITY);
            terms.push((plus, 1.0));
            terms.push((minus, -1.0));
            e.slacks.push(("power_balance".into(), format!("t={t}"), plus));
            e.slacks.push(("power_balance".into(), format!("t={t}"), minus));
        }
        model.add_row("power_balance", terms, RowSense::Eq, instance.total_load(t));
    }
    Ok(())
}

/// Start-up, shut-down, no-load, energy, primary response and virtual inertia costs.
pub fn build_objective(model: &mut OptModel, instance: &IegsInstance, uc: &UcVars, variant: &ModelVariant) {
    for t in 0..instance.horizon {
        for (i, g) in instance.generators.iter().enumerate() {
            model.add_objective(uc.startup[t][i], g.cost.startup);
            model.add_objective(uc.shutdown[t][i], g.cost.shutdown);
            model.add_objective(uc.committed[t][i], g.cost.no_load);
            model.add_objective(uc.power[t][i], g.cost.energy);
            model.add_objective(uc.reserve[t][i], g.cost.pfr);
        }
        if variant.has_virtual_inertia() {
            for (w, farm) in instance.wind_farms.iter().enumerate() {
                model.add_objective(uc.virtual_inertia[t][w], farm.vi_cost);
                model.add_objective(uc.wind_reserve[t][w], farm.pfr_cost);
            }
        }
    }
    model.normalize_objective();
}

/// Which problem of the sequential procedure to assemble.
#[derive(Clone, Copy, Debug)]
pub enum Stage<'a> {
    /// Weymouth cone only, with the pressure-drop tightening term.
    Relaxed,
    /// Weymouth cone plus the linearized concave side with penalized slacks.
    Penalized { points: &'a [Vec<(f64, f64)>], penalty: f64 },
    /// Relaxed rows with elastic balances and line limits; minimizes total slack.
    Elastic,
}

#[derive(Clone, Debug)]
pub struct Assembly {
    pub model: OptModel,
    pub uc: UcVars,
    pub gas: Option<GasVarSet>,
    pub frequency: Vec<FreqConstraintBlock>,
    pub elastic: Option<ElasticVars>,
}

fn wind_vars(uc: &UcVars, t: usize) -> WindHourVars<'_> {
    WindHourVars { power: &uc.wind_power[t], reserve: &uc.wind_reserve[t] }
}

fn moments(ctx: &Context) -> Result<&AmbiguitySpec, ScheduleError> {
    match &ctx.uncertainty {
        UncertaintyData::Moments(m) => Ok(m),
        UncertaintyData::Samples(_) => Err(ScheduleError::Variant("this variant needs moment data, not samples".into())),
    }
}

/// Builds the full problem of `stage` for `variant`.
pub fn assemble(instance: &IegsInstance, variant: &ModelVariant, ctx: &Context, stage: Stage<'_>) -> Result<Assembly, ScheduleError> {
    variant.check(ctx.epsilon)?;
    let horizon = instance.horizon;
    let mut model = OptModel::new();
    let uc = UcVars::allocate(&mut model, instance, variant.has_virtual_inertia());
    let mut elastic = matches!(stage, Stage::Elastic).then(ElasticVars::default);
    build_uc_core(&mut model, instance, &uc, elastic.as_mut())?;
    build_objective(&mut model, instance, &uc, variant);

    let mut frequency = Vec::new();
    for t in 0..horizon {
        if variant.has_frequency() {
            let vars = FreqVars {
                committed: &uc.committed[t],
                virtual_inertia: &uc.virtual_inertia[t],
                gen_reserve: &uc.reserve[t],
                wind_reserve: &uc.wind_reserve[t],
            };
            frequency.push(build_frequency_block(&mut model, instance, t, vars, ctx.kappa[t], ctx.big_m)?);
        } else {
            let terms: Vec<(VarId, f64)> = uc.reserve[t].iter().chain(&uc.wind_reserve[t]).map(|&r| (r, 1.0)).collect();
            model.add_row("capacity_reserve", terms, RowSense::Ge, instance.frequency.contingency[t].abs());
        }
    }

    for t in 0..horizon {
        let vars = wind_vars(&uc, t);
        match *variant {
            ModelVariant::Saa { samples } => {
                let UncertaintyData::Samples(set) = &ctx.uncertainty else {
                    return Err(ScheduleError::Variant("the sample average approximation needs in-sample scenarios".into()));
                };
                if set.samples < samples {
                    return Err(ScheduleError::Drcc(crate::drcc::DrccError::TooFewSamples { need: samples, have: set.samples }));
                }
                let capacity: Vec<f64> = instance.wind_farms.iter().map(|w| w.capacity).collect();
                let used = set.slice(0..samples, set.provenance);
                build_saa_block(&mut model, &used, vars, &capacity, ctx.epsilon, t)?;
            }
            ModelVariant::DrU => {
                let mut spec = moments(ctx)?.clone();
                spec.unimodal = true;
                build_theorem2_soc(&mut model, &spec, vars, t)?;
            }
            ModelVariant::DrMI { eps_ind } => {
                build_individual_drcc(&mut model, moments(ctx)?, vars, eps_ind, t, false)?;
            }
            ModelVariant::DrUI { eps_ind } => {
                build_individual_drcc(&mut model, moments(ctx)?, vars, eps_ind, t, true)?;
            }
            ModelVariant::DrM | ModelVariant::NoFc | ModelVariant::NoNgs | ModelVariant::NoVi => {
                build_theorem1_soc(&mut model, moments(ctx)?, vars, t)?;
            }
        }
    }

    let mut gas = None;
    if variant.has_gas() && !instance.gas_network.nodes.is_empty() {
        let options = GasVarOptions { pccp_slack: matches!(stage, Stage::Penalized { .. }), elastic: matches!(stage, Stage::Elastic) };
        let mut vars = allocate_gas_vars(&mut model, instance, options);
        for t in 0..horizon {
            let link = GfuLink { power: &uc.power[t], reserve: &uc.reserve[t] };
            build_gas_block(&mut model, instance, &vars, t, Some(link))?;
        }
        let pccp = match stage {
            Stage::Penalized { points, penalty } => PccpStage::Penalized { points, penalty },
            _ => PccpStage::Relaxed,
        };
        add_weymouth_rows(&mut model, instance, &mut vars, pccp)?;
        if matches!(stage, Stage::Relaxed) {
            add_tightening(&mut model, instance, &vars, ctx.tightening);
        }
        if let (Some(e), Some((plus, minus))) = (elastic.as_mut(), vars.elastic.as_ref()) {
            for (m, node) in instance.gas_network.nodes.iter().enumerate() {
                for t in 0..horizon {
                    e.slacks.push(("gas_balance".into(), format!("{}[t={t}]", node.id), plus[m][t]));
                    e.slacks.push(("gas_balance".into(), format!("{}[t={t}]", node.id), minus[m][t]));
                }
            }
        }
        gas = Some(vars);
    }

    if let Some(e) = &elastic {
        model.objective = AffineExpr::new();
        for &(_, _, v) in &e.slacks {
            model.add_objective(v, 1.0);
        }
        model.normalize_objective();
    }
    Ok(Assembly { model, uc, gas, frequency, elastic })
}
