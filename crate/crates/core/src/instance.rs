//! Data model of an integrated electricity-gas system and its JSON form.
//!
//! Units: power in MW, energy costs per MWh, time series hourly, frequency in
//! Hz, inertia constants in seconds, gas flow in consistent flow units per hour
//! (kcf/h-equivalent), pressures in consistent pressure units. The linepack
//! constant is in flow·h per pressure unit.

use std::collections::{HashMap, HashSet, VecDeque};
use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::drcc::VarianceMode;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum InstanceError {
    #[error("instance not found: {0}")]
    NotFound(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse error: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("validation error in `{element}`: {message}")]
    Validation { element: String, message: String },
    #[error("power network is disconnected: bus `{0}` is unreachable from the reference bus")]
    Disconnected(String),
    #[error("susceptance matrix is singular")]
    Singular,
}

fn invalid(element: impl Into<String>, message: impl Into<String>) -> InstanceError {
    InstanceError::Validation { element: element.into(), message: message.into() }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorKind {
    Gfu,
    NonGfu,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorCosts {
    /// Per MWh.
    pub energy: f64,
    /// Per committed hour.
    pub no_load: f64,
    pub startup: f64,
    pub shutdown: f64,
    /// Per MW of primary response held.
    pub pfr: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InitialState {
    pub committed: bool,
    pub power: f64,
    #[serde(default)]
    pub reserve: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Generator {
    pub id: String,
    pub kind: GeneratorKind,
    pub bus: String,
    pub p_min: f64,
    pub p_max: f64,
    /// MW/h.
    pub ramp_up: f64,
    pub ramp_down: f64,
    /// Hours.
    pub min_up: usize,
    pub min_down: usize,
    /// Seconds.
    pub inertia: f64,
    pub reserve_max: f64,
    pub cost: GeneratorCosts,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gas_node: Option<String>,
    /// Gas flow units per MW.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gas_rate: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<InitialState>,
}

impl Generator {
    /// Initial state, defaulting to committed at minimum output.
    pub fn initial_state(&self) -> InitialState {
        self.initial.clone().unwrap_or(InitialState { committed: true, power: self.p_min, reserve: 0.0 })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindFarm {
    pub id: String,
    pub bus: String,
    pub capacity: f64,
    /// Virtual inertia constant in seconds.
    pub inertia: f64,
    pub reserve_max: f64,
    /// Per hour with virtual inertia enabled.
    pub vi_cost: f64,
    /// Per MW of primary response held.
    pub pfr_cost: f64,
    /// Forecast mean output per hour, MW.
    pub forecast: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bus {
    pub id: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Line {
    pub id: String,
    pub from: String,
    pub to: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reactance: Option<f64>,
    pub capacity: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ElectricLoad {
    pub id: String,
    pub bus: String,
    pub demand: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerNetwork {
    pub buses: Vec<Bus>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_bus: Option<String>,
    pub lines: Vec<Line>,
    pub loads: Vec<ElectricLoad>,
    /// Rows by line, columns by bus.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shift_factors: Option<Vec<Vec<f64>>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GasNode {
    pub id: String,
    pub pressure_min: f64,
    pub pressure_max: f64,
}

/// Pipeline with fixed flow direction `from → to`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pipeline {
    pub id: String,
    pub from: String,
    pub to: String,
    pub weymouth: f64,
    pub linepack: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_linepack: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Compressor {
    pub id: String,
    pub inlet: String,
    pub outlet: String,
    pub flow_max: f64,
    /// Fraction of the compressed flow consumed at the inlet.
    pub consumption: f64,
    pub ratio_min: f64,
    pub ratio_max: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GasSource {
    pub id: String,
    pub node: String,
    pub flow_min: f64,
    pub flow_max: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GasLoad {
    pub id: String,
    pub node: String,
    pub demand: Vec<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GasNetwork {
    pub nodes: Vec<GasNode>,
    pub pipelines: Vec<Pipeline>,
    pub compressors: Vec<Compressor>,
    pub sources: Vec<GasSource>,
    pub loads: Vec<GasLoad>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrequencyParams {
    /// Load damping as a fraction of load per Hz.
    #[serde(rename = "D")]
    pub damping: f64,
    pub f0: f64,
    /// Governor dead band, Hz.
    pub df_db: f64,
    /// Extra governor dead time after the dead band is crossed, s.
    pub t_db: f64,
    /// Delivery time of primary response, s.
    #[serde(rename = "Td")]
    pub delivery_time: f64,
    /// Hz/s.
    pub rocof_max: f64,
    /// Nadir floor, Hz.
    pub f_min: f64,
    /// Quasi-steady-state deviation limit, Hz.
    pub df_qss_max: f64,
    /// Contingency size per hour, MW.
    #[serde(rename = "dP_loss")]
    pub contingency: Vec<f64>,
}

impl FrequencyParams {
    /// Largest tolerated deviation at the nadir, `f0 − f_min`.
    pub fn df_max(&self) -> f64 {
        self.f0 - self.f_min
    }

    /// Load damping in MW/Hz at load level `load` MW.
    pub fn damping_mw(&self, load: f64) -> f64 {
        self.damping * load
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentTable {
    /// `[farm][hour]`, MW.
    pub mean: Vec<Vec<f64>>,
    /// `[farm][hour]`, MW².
    pub variance: Vec<Vec<f64>>,
}

fn default_fraction() -> f64 {
    0.05
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyConfig {
    pub epsilon: f64,
    #[serde(default)]
    pub unimodal: bool,
    #[serde(default)]
    pub variance_mode: VarianceMode,
    /// Spread of the forecast error relative to the forecast (see `variance_mode`).
    #[serde(default = "default_fraction")]
    pub variance_fraction: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub moments: Option<MomentTable>,
    /// `[sample][farm][hour]`, MW.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<Vec<Vec<Vec<f64>>>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IegsInstance {
    pub schema_version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub horizon: usize,
    pub generators: Vec<Generator>,
    pub wind_farms: Vec<WindFarm>,
    pub power_network: PowerNetwork,
    #[serde(default)]
    pub gas_network: GasNetwork,
    pub frequency: FrequencyParams,
    pub uncertainty: UncertaintyConfig,
}

/// Loads and validates an instance file.
pub fn load_instance(path: &Path) -> Result<IegsInstance, InstanceError> {
    if !path.exists() {
        return Err(InstanceError::NotFound(path.display().to_string()));
    }
    let text = fs::read_to_string(path)?;
    IegsInstance::from_json(&text)
}

pub fn save_instance(instance: &IegsInstance, path: &Path) -> Result<(), InstanceError> {
    fs::write(path, serde_json::to_string_pretty(instance)?)?;
    Ok(())
}

fn index_of<'a>(ids: impl Iterator<Item = &'a String>, id: &str) -> Option<usize> {
    ids.into_iter().position(|x| x == id)
}

impl IegsInstance {
    pub fn from_json(text: &str) -> Result<Self, InstanceError> {
        let inst: IegsInstance = serde_json::from_str(text)?;
        inst.validate()?;
        Ok(inst)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("instance serializes")
    }

    pub fn num_generators(&self) -> usize {
        self.generators.len()
    }

    pub fn num_wind(&self) -> usize {
        self.wind_farms.len()
    }

    pub fn bus_index(&self, id: &str) -> Option<usize> {
        index_of(self.power_network.buses.iter().map(|b| &b.id), id)
    }

    pub fn gas_node_index(&self, id: &str) -> Option<usize> {
        index_of(self.gas_network.nodes.iter().map(|n| &n.id), id)
    }

    /// Total electric demand at hour `t` (0-based), MW.
    pub fn total_load(&self, t: usize) -> f64 {
        self.power_network.loads.iter().map(|l| l.demand[t]).sum()
    }

    /// Net injection-free demand per bus at hour `t`.
    pub fn bus_demand(&self, t: usize) -> Vec<f64> {
        let mut d = vec![0.0; self.power_network.buses.len()];
        for l in &self.power_network.loads {
            d[self.bus_index(&l.bus).expect("validated")] += l.demand[t];
        }
        d
    }

    /// Indices of gas-fired generators.
    pub fn gfu_indices(&self) -> Vec<usize> {
        (0..self.generators.len()).filter(|&i| self.generators[i].kind == GeneratorKind::Gfu).collect()
    }

    /// Total gas demand from gas loads over the horizon.
    pub fn total_gas_load(&self) -> f64 {
        self.gas_network.loads.iter().flat_map(|l| l.demand.iter()).sum()
    }

    /// Shift factors: supplied matrix if present, otherwise computed from reactances.
    pub fn shift_factors(&self) -> Result<DMatrix<f64>, InstanceError> {
        let net = &self.power_network;
        if let Some(psi) = &net.shift_factors {
            if net.lines.iter().any(|l| l.reactance.is_some()) {
                log::warn!("both shift factors and reactances supplied; using the supplied shift factors");
            }
            let cols = net.buses.len();
            return Ok(DMatrix::from_fn(psi.len(), cols, |r, c| psi[r][c]));
        }
        compute_shift_factors(net)
    }

    pub fn validate(&self) -> Result<(), InstanceError> {
        let t_len = self.horizon;
        if self.schema_version != SCHEMA_VERSION {
            return Err(invalid("schema_version", format!("unsupported version {}", self.schema_version)));
        }
        if t_len == 0 {
            return Err(invalid("horizon", "must be at least one hour"));
        }
        let series = |element: &str, s: &[f64]| -> Result<(), InstanceError> {
            if s.len() != t_len {
                return Err(invalid(element, format!("series has {} entries, horizon is {t_len}", s.len())));
            }
            if s.iter().any(|v| !v.is_finite() || *v < 0.0) {
                return Err(invalid(element, "series entries must be finite and nonnegative"));
            }
            Ok(())
        };
        unique(self.generators.iter().map(|g| &g.id).chain(self.wind_farms.iter().map(|w| &w.id)), "unit")?;

        let net = &self.power_network;
        unique(net.buses.iter().map(|b| &b.id), "bus")?;
        unique(net.lines.iter().map(|l| &l.id), "line")?;
        if net.buses.is_empty() {
            return Err(invalid("power_network", "needs at least one bus"));
        }
        if let Some(r) = &net.reference_bus {
            if self.bus_index(r).is_none() {
                return Err(invalid("power_network", format!("reference bus `{r}` does not exist")));
            }
        }
        for l in &net.lines {
            for end in [&l.from, &l.to] {
                if self.bus_index(end).is_none() {
                    return Err(invalid(&l.id, format!("unknown bus `{end}`")));
                }
            }
            if l.from == l.to {
                return Err(invalid(&l.id, "line connects a bus to itself"));
            }
            if !(l.capacity > 0.0) {
                return Err(invalid(&l.id, "capacity must be positive"));
            }
            if let Some(x) = l.reactance {
                if !(x > 0.0) {
                    return Err(invalid(&l.id, "reactance must be positive"));
                }
            }
        }
        match &net.shift_factors {
            Some(psi) => {
                if psi.len() != net.lines.len() {
                    return Err(invalid("shift_factors", "row count must equal line count"));
                }
                if psi.iter().any(|r| r.len() != net.buses.len()) {
                    return Err(invalid("shift_factors", "column count must equal bus count"));
                }
            }
            None => {
                if let Some(l) = net.lines.iter().find(|l| l.reactance.is_none()) {
                    return Err(invalid(&l.id, "reactance required when shift factors are not supplied"));
                }
            }
        }
        for d in &net.loads {
            if self.bus_index(&d.bus).is_none() {
                return Err(invalid(&d.id, format!("unknown bus `{}`", d.bus)));
            }
            series(&d.id, &d.demand)?;
        }

        let gas = &self.gas_network;
        unique(gas.nodes.iter().map(|n| &n.id), "gas node")?;
        for n in &gas.nodes {
            if !(n.pressure_min > 0.0 && n.pressure_min <= n.pressure_max) {
                return Err(invalid(&n.id, "requires 0 < pressure_min <= pressure_max"));
            }
        }
        for p in &gas.pipelines {
            for end in [&p.from, &p.to] {
                if self.gas_node_index(end).is_none() {
                    return Err(invalid(&p.id, format!("unknown gas node `{end}`")));
                }
            }
            if !(p.weymouth > 0.0 && p.linepack > 0.0) {
                return Err(invalid(&p.id, "Weymouth and linepack constants must be positive"));
            }
            if p.initial_linepack.is_some_and(|lp| lp < 0.0) {
                return Err(invalid(&p.id, "initial linepack must be nonnegative"));
            }
        }
        for k in &gas.compressors {
            for end in [&k.inlet, &k.outlet] {
                if self.gas_node_index(end).is_none() {
                    return Err(invalid(&k.id, format!("unknown gas node `{end}`")));
                }
            }
            if !(0.0..1.0).contains(&k.consumption) {
                return Err(invalid(&k.id, "consumption fraction must lie in [0, 1)"));
            }
            if !(1.0 <= k.ratio_min && k.ratio_min <= k.ratio_max) {
                return Err(invalid(&k.id, "requires 1 <= ratio_min <= ratio_max"));
            }
            if k.flow_max < 0.0 {
                return Err(invalid(&k.id, "flow_max must be nonnegative"));
            }
        }
        for s in &gas.sources {
            if self.gas_node_index(&s.node).is_none() {
                return Err(invalid(&s.id, format!("unknown gas node `{}`", s.node)));
            }
            if s.flow_min > s.flow_max {
                return Err(invalid(&s.id, "flow_min exceeds flow_max"));
            }
        }
        for l in &gas.loads {
            if self.gas_node_index(&l.node).is_none() {
                return Err(invalid(&l.id, format!("unknown gas node `{}`", l.node)));
            }
            series(&l.id, &l.demand)?;
        }

        for g in &self.generators {
            if self.bus_index(&g.bus).is_none() {
                return Err(invalid(&g.id, format!("unknown bus `{}`", g.bus)));
            }
            if !(0.0 <= g.p_min && g.p_min <= g.p_max) {
                return Err(invalid(&g.id, "requires 0 <= p_min <= p_max"));
            }
            if g.ramp_up < 0.0 || g.ramp_down < 0.0 {
                return Err(invalid(&g.id, "ramp limits must be nonnegative"));
            }
            if g.min_up < 1 || g.min_down < 1 {
                return Err(invalid(&g.id, "minimum up/down times must be at least one hour"));
            }
            if g.inertia < 0.0 {
                return Err(invalid(&g.id, "inertia must be nonnegative"));
            }
            if !(0.0 <= g.reserve_max && g.reserve_max <= g.p_max) {
                return Err(invalid(&g.id, "requires 0 <= reserve_max <= p_max"));
            }
            let c = &g.cost;
            if [c.energy, c.no_load, c.startup, c.shutdown, c.pfr].iter().any(|v| *v < 0.0) {
                return Err(invalid(&g.id, "costs must be nonnegative"));
            }
            match (g.kind, &g.gas_node) {
                (GeneratorKind::Gfu, Some(node)) => {
                    if self.gas_node_index(node).is_none() {
                        return Err(invalid(&g.id, format!("gas-fired unit references missing gas node `{node}`")));
                    }
                    if !g.gas_rate.is_some_and(|r| r > 0.0) {
                        return Err(invalid(&g.id, "gas-fired unit needs a positive gas_rate"));
                    }
                }
                (GeneratorKind::Gfu, None) => return Err(invalid(&g.id, "gas-fired unit needs a gas node")),
                (GeneratorKind::NonGfu, Some(_)) => return Err(invalid(&g.id, "only gas-fired units may reference a gas node")),
                (GeneratorKind::NonGfu, None) => {}
            }
            if let Some(init) = &g.initial {
                if init.power < 0.0 || init.power > g.p_max || init.reserve < 0.0 {
                    return Err(invalid(&g.id, "initial power/reserve out of range"));
                }
            }
        }
        for w in &self.wind_farms {
            if self.bus_index(&w.bus).is_none() {
                return Err(invalid(&w.id, format!("unknown bus `{}`", w.bus)));
            }
            if !(w.capacity > 0.0) {
                return Err(invalid(&w.id, "capacity must be positive"));
            }
            if !(0.0 <= w.reserve_max && w.reserve_max <= w.capacity) {
                return Err(invalid(&w.id, "requires 0 <= reserve_max <= capacity"));
            }
            if w.inertia < 0.0 || w.vi_cost < 0.0 || w.pfr_cost < 0.0 {
                return Err(invalid(&w.id, "inertia and costs must be nonnegative"));
            }
            series(&w.id, &w.forecast)?;
            if w.forecast.iter().any(|&m| m > w.capacity) {
                return Err(invalid(&w.id, "forecast exceeds capacity"));
            }
        }

        let f = &self.frequency;
        for (name, v) in [
            ("D", f.damping),
            ("f0", f.f0),
            ("df_db", f.df_db),
            ("Td", f.delivery_time),
            ("rocof_max", f.rocof_max),
            ("f_min", f.f_min),
            ("df_qss_max", f.df_qss_max),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid("frequency", format!("`{name}` must be positive")));
            }
        }
        if !(f.t_db >= 0.0) {
            return Err(invalid("frequency", "`t_db` must be nonnegative"));
        }
        if !(f.f_min < f.f0) {
            return Err(invalid("frequency", "f_min must be below f0"));
        }
        if !(f.df_db < f.df_max()) {
            return Err(invalid("frequency", "dead band must be below f0 - f_min"));
        }
        if f.df_qss_max > f.df_max() {
            return Err(invalid("frequency", "df_qss_max must not exceed f0 - f_min"));
        }
        series("frequency.dP_loss", &f.contingency)?;

        let u = &self.uncertainty;
        if !(u.epsilon > 0.0 && u.epsilon < 1.0) {
            return Err(invalid("uncertainty", "epsilon must lie in (0, 1)"));
        }
        if !(u.variance_fraction >= 0.0) {
            return Err(invalid("uncertainty", "variance_fraction must be nonnegative"));
        }
        let nw = self.wind_farms.len();
        if let Some(m) = &u.moments {
            if m.mean.len() != nw || m.variance.len() != nw {
                return Err(invalid("uncertainty.moments", "one row per wind farm required"));
            }
            for row in m.mean.iter().chain(&m.variance) {
                series("uncertainty.moments", row)?;
            }
        }
        if let Some(samples) = &u.samples {
            if samples.is_empty() {
                return Err(invalid("uncertainty.samples", "needs at least one sample"));
            }
            for s in samples {
                if s.len() != nw {
                    return Err(invalid("uncertainty.samples", "one row per wind farm required"));
                }
                for row in s {
                    series("uncertainty.samples", row)?;
                }
            }
        }
        Ok(())
    }
}

fn unique<'a>(ids: impl Iterator<Item = &'a String>, what: &str) -> Result<(), InstanceError> {
    let mut seen = HashSet::new();
    for id in ids {
        if !seen.insert(id) {
            return Err(invalid(id, format!("duplicate {what} id")));
        }
    }
    Ok(())
}

/// DC shift factors from line reactances; the reference-bus column is zero.
///
/// The reference bus is `reference_bus` if set, otherwise the first bus.
pub fn compute_shift_factors(net: &PowerNetwork) -> Result<DMatrix<f64>, InstanceError> {
    let nb = net.buses.len();
    let nl = net.lines.len();
    let idx: HashMap<&str, usize> = net.buses.iter().enumerate().map(|(i, b)| (b.id.as_str(), i)).collect();
    let bus = |id: &str| idx.get(id).copied().ok_or_else(|| invalid(id, "unknown bus"));
    let reference = match &net.reference_bus {
        Some(r) => bus(r)?,
        None => 0,
    };

    let mut adj = vec![Vec::new(); nb];
    let mut ends = Vec::with_capacity(nl);
    for l in &net.lines {
        let (a, b) = (bus(&l.from)?, bus(&l.to)?);
        let x = l.reactance.ok_or_else(|| invalid(&l.id, "missing reactance"))?;
        adj[a].push(b);
        adj[b].push(a);
        ends.push((a, b, 1.0 / x));
    }
    let mut seen = vec![false; nb];
    let mut queue = VecDeque::from([reference]);
    seen[reference] = true;
    while let Some(u) = queue.pop_front() {
        for &v in &adj[u] {
            if !seen[v] {
                seen[v] = true;
                queue.push_back(v);
            }
        }
    }
    if let Some(i) = seen.iter().position(|s| !s) {
        return Err(InstanceError::Disconnected(net.buses[i].id.clone()));
    }

    // Reduced susceptance matrix without the reference row/column.
    let reduced: Vec<usize> = (0..nb).filter(|&b| b != reference).collect();
    let pos = |b: usize| reduced.iter().position(|&r| r == b);
    let n = reduced.len();
    let mut bmat = DMatrix::<f64>::zeros(n, n);
    for &(a, b, y) in &ends {
        for (p, q) in [(a, b), (b, a)] {
            if let Some(i) = pos(p) {
                bmat[(i, i)] += y;
                if let Some(j) = pos(q) {
                    bmat[(i, j)] -= y;
                }
            }
        }
    }
    let inv = if n == 0 { DMatrix::zeros(0, 0) } else { bmat.try_inverse().ok_or(InstanceError::Singular)? };
    let mut psi = DMatrix::<f64>::zeros(nl, nb);
    for (l, &(a, b, y)) in ends.iter().enumerate() {
        for (k, &col) in reduced.iter().enumerate() {
            let theta_a = pos(a).map_or(0.0, |i| inv[(i, k)]);
            let theta_b = pos(b).map_or(0.0, |i| inv[(i, k)]);
            psi[(l, col)] = y * (theta_a - theta_b);
        }
    }
    Ok(psi)
}

/// Line flows for a bus injection vector.
pub fn line_flows(psi: &DMatrix<f64>, injection: &[f64]) -> Vec<f64> {
    (psi * DVector::from_column_slice(injection)).iter().copied().collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn net(lines: &[(&str, &str, f64)], buses: &[&str]) -> PowerNetwork {
        PowerNetwork {
            buses: buses.iter().map(|b| Bus { id: b.to_string() }).collect(),
            reference_bus: Some(buses[0].to_string()),
            lines: lines
                .iter()
                .enumerate()
                .map(|(i, &(a, b, x))| Line { id: format!("L{i}"), from: a.into(), to: b.into(), reactance: Some(x), capacity: 100.0 })
                .collect(),
            loads: vec![],
            shift_factors: None,
        }
    }

    #[test]
    fn two_bus_single_line() {
        let psi = compute_shift_factors(&net(&[("B2", "B1", 0.1)], &["B1", "B2"])).unwrap();
        assert_eq!(psi[(0, 0)], 0.0);
        assert!((psi[(0, 1)] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn triangle_splits_two_thirds() {
        let n = net(&[("B2", "B1", 1.0), ("B2", "B3", 1.0), ("B3", "B1", 1.0)], &["B1", "B2", "B3"]);
        let psi = compute_shift_factors(&n).unwrap();
        assert!((psi[(0, 1)] - 2.0 / 3.0).abs() < 1e-12);
        assert!((psi[(1, 1)] - 1.0 / 3.0).abs() < 1e-12);
        assert!((psi[(2, 1)] - 1.0 / 3.0).abs() < 1e-12);
        for l in 0..3 {
            assert_eq!(psi[(l, 0)], 0.0);
        }
    }

    #[test]
    fn disconnected_is_reported() {
        let n = net(&[("B1", "B2", 1.0)], &["B1", "B2", "B3"]);
        assert!(matches!(compute_shift_factors(&n), Err(InstanceError::Disconnected(b)) if b == "B3"));
    }
}
