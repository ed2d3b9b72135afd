//! Re-checks a schedule against the instance data directly, without the
//! assembled model or any solver output beyond the reported values.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::drcc::{individual_factor, AmbiguitySpec};
use crate::freq::{rocof_requirement, system_inertia};
use crate::gasnet::PipelineReading;
use crate::instance::IegsInstance;

use super::{Context, CostBreakdown, ModelVariant, ScheduleSolution, UncertaintyData};

/// Worst scaled violation per constraint family. Each violation is divided
/// by `max(1, |right-hand side|)`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub families: BTreeMap<String, f64>,
    pub max_violation: f64,
}

impl VerifyReport {
    fn record(&mut self, family: &str, lhs: f64, rhs: f64, sense: char) {
        let raw = match sense {
            '<' => lhs - rhs,
            '>' => rhs - lhs,
            _ => (lhs - rhs).abs(),
        };
        let v = raw.max(0.0) / rhs.abs().max(1.0);
        let e = self.families.entry(family.to_string()).or_insert(0.0);
        *e = e.max(v);
        self.max_violation = self.max_violation.max(v);
    }

    pub fn is_feasible(&self, tol: f64) -> bool {
        self.max_violation <= tol
    }

    /// Families whose worst violation exceeds `tol`.
    pub fn failing(&self, tol: f64) -> Vec<(&str, f64)> {
        self.families.iter().filter(|(_, &v)| v > tol).map(|(k, &v)| (k.as_str(), v)).collect()
    }
}

/// Cost terms recomputed from the schedule.
pub fn recompute_costs(instance: &IegsInstance, sol: &ScheduleSolution) -> CostBreakdown {
    let mut c = CostBreakdown::default();
    let b = |x: bool| if x { 1.0 } else { 0.0 };
    for (i, g) in instance.generators.iter().enumerate() {
        for t in 0..instance.horizon {
            c.startup_shutdown += g.cost.startup * b(sol.startup[i][t]) + g.cost.shutdown * b(sol.shutdown[i][t]);
            c.no_load += g.cost.no_load * b(sol.committed[i][t]);
            c.generation += g.cost.energy * sol.power[i][t];
            c.pfr += g.cost.pfr * sol.gen_reserve[i][t];
        }
    }
    if sol.variant.has_virtual_inertia() {
        for (w, farm) in instance.wind_farms.iter().enumerate() {
            for t in 0..instance.horizon {
                c.vi += farm.vi_cost * b(sol.virtual_inertia[w][t]);
                c.pfr += farm.pfr_cost * sol.wind_reserve[w][t];
            }
        }
    }
    c.total = c.component_sum();
    c
}

/// Smallest per-farm risk share that a margin of `m` standard deviations
/// admits under the cone pair with constant `a`: `a/√(ε(ε+a)) ≤ m`.
pub(crate) fn risk_share(m: f64, a: f64) -> f64 {
    if m <= 0.0 {
        return f64::INFINITY;
    }
    (-a + (a * a + 4.0 * a * a / (m * m)).sqrt()) / 2.0
}

fn check_joint_moment(report: &mut VerifyReport, sol: &ScheduleSolution, spec: &AmbiguitySpec, a: f64, family: &str) {
    let horizon = sol.horizon();
    let pw = sol.wind_commitment();
    for t in 0..horizon {
        let mut used = 0.0;
        for (w, row) in pw.iter().enumerate() {
            let mu = spec.mean[w][t];
            let sigma = spec.std_dev(w, t);
            report.record(&format!("{family}_margin"), row[t], mu, '<');
            if sigma > 0.0 {
                used += risk_share((mu - row[t]) / sigma, a).min(1.0);
            }
        }
        report.record(&format!("{family}_budget"), used, spec.epsilon, '<');
    }
}

/// Checks every constraint of the variant at the solution's values.
pub fn verify_solution(instance: &IegsInstance, sol: &ScheduleSolution, ctx: &Context) -> VerifyReport {
    let mut r = VerifyReport::default();
    let horizon = instance.horizon;
    let b = |x: bool| if x { 1.0 } else { 0.0 };

    for (i, g) in instance.generators.iter().enumerate() {
        let init = g.initial_state();
        for t in 0..horizon {
            let x = b(sol.committed[i][t]);
            let prev = if t == 0 { b(init.committed) } else { b(sol.committed[i][t - 1]) };
            let (zu, zd) = (b(sol.startup[i][t]), b(sol.shutdown[i][t]));
            r.record("uc_logic", zu - zd, x - prev, '=');
            r.record("uc_exclusive", zu + zd, 1.0, '<');
            let up: f64 = ((t + 1).saturating_sub(g.min_up.max(1))..=t).map(|s| b(sol.startup[i][s])).sum();
            r.record("min_up", up, x, '<');
            let down: f64 = ((t + 1).saturating_sub(g.min_down.max(1))..=t).map(|s| b(sol.shutdown[i][s])).sum();
            r.record("min_down", down, 1.0 - x, '<');

            let (p, res) = (sol.power[i][t], sol.gen_reserve[i][t]);
            r.record("gen_bounds", 0.0, p, '<');
            r.record("gen_bounds", 0.0, res, '<');
            r.record("gen_min", p, x * g.p_min, '>');
            r.record("gen_max", p + res, x * g.p_max, '<');
            r.record("pfr_limit", res, x * g.reserve_max, '<');
            let before = if t == 0 { init.power + init.reserve } else { sol.power[i][t - 1] + sol.gen_reserve[i][t - 1] };
            r.record("ramp_up", p + res - before, g.ramp_up, '<');
            r.record("ramp_down", before - p - res, g.ramp_down, '<');
        }
    }
    for (w, farm) in instance.wind_farms.iter().enumerate() {
        for t in 0..horizon {
            let (p, res) = (sol.wind_power[w][t], sol.wind_reserve[w][t]);
            let y = if sol.variant.has_virtual_inertia() { b(sol.virtual_inertia[w][t]) } else { 0.0 };
            r.record("wind_bounds", 0.0, p, '<');
            r.record("wind_bounds", p, farm.capacity, '<');
            r.record("wind_bounds", 0.0, res, '<');
            r.record("wind_pfr_limit", res, y * farm.reserve_max, '<');
            if !sol.variant.has_virtual_inertia() {
                r.record("no_vi", b(sol.virtual_inertia[w][t]), 0.0, '=');
            }
        }
    }

    if let Ok(psi) = instance.shift_factors() {
        for t in 0..horizon {
            let mut inj = vec![0.0; instance.power_network.buses.len()];
            for (i, g) in instance.generators.iter().enumerate() {
                inj[instance.bus_index(&g.bus).unwrap()] += sol.power[i][t];
            }
            for (w, farm) in instance.wind_farms.iter().enumerate() {
                inj[instance.bus_index(&farm.bus).unwrap()] += sol.wind_power[w][t];
            }
            for (bus, d) in instance.bus_demand(t).into_iter().enumerate() {
                inj[bus] -= d;
            }
            let flows = crate::instance::line_flows(&psi, &inj);
            for (l, line) in instance.power_network.lines.iter().enumerate() {
                r.record("line_limit", flows[l].abs(), line.capacity, '<');
            }
            let supply: f64 = (0..instance.num_generators()).map(|i| sol.power[i][t]).sum::<f64>()
                + (0..instance.num_wind()).map(|w| sol.wind_power[w][t]).sum::<f64>();
            r.record("power_balance", supply, instance.total_load(t), '=');
        }
    } else {
        r.record("line_limit", f64::INFINITY, 0.0, '<');
    }

    let f = &instance.frequency;
    for t in 0..horizon {
        let reserve: f64 = sol.gen_reserve_at(t).iter().sum::<f64>() + sol.wind_reserve_at(t).iter().sum::<f64>();
        let dp = f.contingency[t].abs();
        if sol.variant.has_frequency() {
            let h = system_inertia(instance, &sol.committed_at(t), &sol.vi_at(t));
            r.record("rocof", h, rocof_requirement(f, dp), '>');
            r.record("nadir", reserve * h, ctx.kappa[t], '>');
            r.record("qss", reserve, dp - f.damping_mw(instance.total_load(t)) * f.df_qss_max, '>');
        } else {
            r.record("capacity_reserve", reserve, dp, '>');
        }
    }

    match (&sol.variant, &ctx.uncertainty) {
        (ModelVariant::Saa { samples }, UncertaintyData::Samples(set)) => {
            let pw = sol.wind_commitment();
            let budget = (ctx.epsilon * *samples as f64 + 1e-9).floor();
            for t in 0..horizon {
                let violated = (0..*samples).filter(|&s| (0..set.farms).any(|w| pw[w][t] > set.get(s, w, t) + 1e-6)).count();
                r.record("saa_budget", violated as f64, budget, '<');
            }
        }
        (ModelVariant::DrU, UncertaintyData::Moments(spec)) => check_joint_moment(&mut r, sol, spec, 4.0 / 9.0, "dru"),
        (ModelVariant::DrMI { eps_ind }, UncertaintyData::Moments(spec))
        | (ModelVariant::DrUI { eps_ind }, UncertaintyData::Moments(spec)) => {
            let unimodal = matches!(sol.variant, ModelVariant::DrUI { .. });
            match individual_factor(*eps_ind, unimodal) {
                Ok(k) => {
                    let pw = sol.wind_commitment();
                    for (w, row) in pw.iter().enumerate() {
                        for t in 0..horizon {
                            r.record("dri_margin", row[t], spec.mean[w][t] - k * spec.std_dev(w, t), '<');
                        }
                    }
                }
                Err(_) => r.record("dri_margin", f64::INFINITY, 0.0, '<'),
            }
        }
        (_, UncertaintyData::Moments(spec)) => check_joint_moment(&mut r, sol, spec, 1.0, "drm"),
        _ => r.record("uncertainty_data", f64::INFINITY, 0.0, '<'),
    }

    if sol.variant.has_gas() && !instance.gas_network.nodes.is_empty() {
        match &sol.gas {
            Some(gas) => verify_gas(&mut r, instance, sol, gas),
            None => r.record("gas_state", f64::INFINITY, 0.0, '<'),
        }
    }

    let c = recompute_costs(instance, sol);
    r.record("cost_total", sol.cost.total, c.total, '=');
    r.record("cost_components", sol.cost.component_sum(), sol.cost.total, '=');
    r
}

fn verify_gas(r: &mut VerifyReport, instance: &IegsInstance, sol: &ScheduleSolution, gas: &crate::gasnet::GasState) {
    let net = &instance.gas_network;
    let horizon = instance.horizon;
    for row in gas.balance_residuals(instance) {
        for v in row {
            r.record("gas_balance", v, 0.0, '=');
        }
    }
    for (m, node) in net.nodes.iter().enumerate() {
        for t in 0..horizon {
            r.record("pressure_bounds", gas.pressure[m][t], node.pressure_max, '<');
            r.record("pressure_bounds", gas.pressure[m][t], node.pressure_min, '>');
        }
    }
    for (s, src) in net.sources.iter().enumerate() {
        for t in 0..horizon {
            r.record("source_bounds", gas.source[s][t], src.flow_max, '<');
            r.record("source_bounds", gas.source[s][t], src.flow_min, '>');
        }
    }
    let node = |id: &str| instance.gas_node_index(id).unwrap();
    for (p, pipe) in net.pipelines.iter().enumerate() {
        let (m, n) = (node(&pipe.from), node(&pipe.to));
        for t in 0..horizon {
            let (fin, fout) = (gas.flow_in[p][t], gas.flow_out[p][t]);
            r.record("gas_flow_sign", 0.0, fin.min(fout).min(gas.flow[p][t]), '<');
            r.record("gas_avg_flow", gas.flow[p][t], 0.5 * (fin + fout), '=');
            let lp = 0.5 * pipe.linepack * (gas.pressure[m][t] + gas.pressure[n][t]);
            r.record("linepack_def", gas.linepack[p][t], lp, '=');
            let prev = if t == 0 { pipe.initial_linepack.unwrap_or(f64::NAN) } else { gas.linepack[p][t - 1] };
            r.record("linepack_dyn", gas.linepack[p][t], prev + fin - fout, '=');
            let reading =
                PipelineReading { flow: gas.flow[p][t], p_from: gas.pressure[m][t], p_to: gas.pressure[n][t], weymouth: pipe.weymouth };
            let norm = (reading.flow / reading.weymouth).hypot(reading.p_to);
            r.record("weymouth_cone", norm, reading.p_from, '<');
        }
    }
    if let Some(last) = horizon.checked_sub(1) {
        if !net.pipelines.is_empty() {
            let total: f64 = gas.linepack.iter().map(|row| row[last]).sum();
            let start: f64 = net.pipelines.iter().map(|p| p.initial_linepack.unwrap_or(f64::NAN)).sum();
            r.record("linepack_terminal", total, start, '>');
        }
    }
    for (k, c) in net.compressors.iter().enumerate() {
        let (i, o) = (node(&c.inlet), node(&c.outlet));
        for t in 0..horizon {
            r.record("compressor_use", gas.comp_use[k][t], c.consumption * gas.comp_flow[k][t], '=');
            r.record("compressor_flow", gas.comp_flow[k][t], c.flow_max, '<');
            r.record("compressor_flow", gas.comp_flow[k][t], 0.0, '>');
            r.record("compressor_ratio", gas.pressure[o][t], c.ratio_min * gas.pressure[i][t], '>');
            r.record("compressor_ratio", gas.pressure[o][t], c.ratio_max * gas.pressure[i][t], '<');
        }
    }
    for (j, &g) in instance.gfu_indices().iter().enumerate() {
        let phi = instance.generators[g].gas_rate.unwrap_or(f64::NAN);
        for t in 0..horizon {
            r.record("gfu_coupling", gas.gfu_use[j][t], phi * (sol.power[g][t] + sol.gen_reserve[g][t]), '=');
        }
    }
}
