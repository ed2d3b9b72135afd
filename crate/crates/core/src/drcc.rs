//! Wind uncertainty: moment-based ambiguity sets, their second-order cone
//! inner approximations, the sample average baseline, individual chance
//! rows, and Monte Carlo scenarios.
//!
//! Every chance row has the form `P^W + R^W ≤ P̃` per wind farm and hour.

use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::instance::IegsInstance;
use crate::optmodel::{AffineExpr, OptModel, RowId, RowSense, SocId, VarId};

/// Largest budget for which the unimodal bound holds.
pub const UNIMODAL_EPS_MAX: f64 = 1.0 / 6.0;
const FOUR_NINTHS: f64 = 4.0 / 9.0;

#[derive(Debug, Error, PartialEq)]
pub enum DrccError {
    #[error("violation budget must lie in (0, 1), got {0}")]
    Epsilon(f64),
    #[error(
        "the unimodal reformulation requires epsilon <= 1/6 (hypothesis of the one-sided \
         Vysochanskij-Petunin bound), got {0}"
    )]
    UnimodalEpsilon(f64),
    #[error("the unimodal reformulation needs an ambiguity set flagged unimodal")]
    NotUnimodal,
    #[error("at least {need} samples are required, got {have}")]
    TooFewSamples { need: usize, have: usize },
    #[error("negative or non-finite variance at farm {farm}, hour {hour}")]
    Variance { farm: usize, hour: usize },
    #[error("scenario set shape does not match: {0}")]
    Shape(String),
    #[error("out-of-sample evaluation needs an out-of-sample set")]
    Provenance,
    #[error("i/o error: {0}")]
    Io(String),
}

/// How the forecast spread is derived from the forecast mean.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VarianceMode {
    /// Standard deviation = fraction × mean.
    #[default]
    StdFraction,
    /// Variance = fraction × mean.
    VarFraction,
}

impl VarianceMode {
    pub fn std_dev(self, mean: f64, fraction: f64) -> f64 {
        match self {
            VarianceMode::StdFraction => fraction * mean,
            VarianceMode::VarFraction => (fraction * mean).sqrt(),
        }
    }
}

/// Per (farm, hour) mean and variance with a joint violation budget.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AmbiguitySpec {
    /// `[farm][hour]`, MW.
    pub mean: Vec<Vec<f64>>,
    /// `[farm][hour]`, MW².
    pub variance: Vec<Vec<f64>>,
    pub epsilon: f64,
    pub unimodal: bool,
}

impl AmbiguitySpec {
    pub fn validate(&self) -> Result<(), DrccError> {
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(DrccError::Epsilon(self.epsilon));
        }
        for (w, row) in self.variance.iter().enumerate() {
            if let Some(t) = row.iter().position(|v| !(v.is_finite() && *v >= 0.0)) {
                return Err(DrccError::Variance { farm: w, hour: t });
            }
        }
        Ok(())
    }

    pub fn std_dev(&self, w: usize, t: usize) -> f64 {
        self.variance[w][t].sqrt()
    }

    /// Ambiguity set centred on the instance forecast.
    pub fn from_forecast(instance: &IegsInstance) -> Self {
        let u = &instance.uncertainty;
        let mean: Vec<Vec<f64>> = instance.wind_farms.iter().map(|w| w.forecast.clone()).collect();
        let variance =
            mean.iter().map(|row| row.iter().map(|&m| u.variance_mode.std_dev(m, u.variance_fraction).powi(2)).collect()).collect();
        Self { mean, variance, epsilon: u.epsilon, unimodal: u.unimodal }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    InSample,
    OutOfSample,
}

/// Sampled wind outputs `[sample][farm][hour]`, stored flat.
#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioSet {
    pub samples: usize,
    pub farms: usize,
    pub horizon: usize,
    pub values: Vec<f64>,
    pub seed: u64,
    pub provenance: Provenance,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSidecar {
    pub samples: usize,
    pub farms: usize,
    pub horizon: usize,
    pub seed: u64,
    pub provenance: Provenance,
    pub distribution: String,
    pub truncation: String,
}

impl ScenarioSet {
    pub fn new(
        samples: usize,
        farms: usize,
        horizon: usize,
        values: Vec<f64>,
        seed: u64,
        provenance: Provenance,
    ) -> Result<Self, DrccError> {
        if values.len() != samples * farms * horizon {
            return Err(DrccError::Shape(format!("{} values for {samples}×{farms}×{horizon}", values.len())));
        }
        Ok(Self { samples, farms, horizon, values, seed, provenance })
    }

    #[inline]
    pub fn get(&self, s: usize, w: usize, t: usize) -> f64 {
        self.values[(s * self.farms + w) * self.horizon + t]
    }

    /// One sample as `[farm][hour]`.
    pub fn sample(&self, s: usize) -> &[f64] {
        let n = self.farms * self.horizon;
        &self.values[s * n..(s + 1) * n]
    }

    /// Samples `range`, retagged with `provenance`.
    pub fn slice(&self, range: std::ops::Range<usize>, provenance: Provenance) -> Self {
        let n = self.farms * self.horizon;
        Self {
            samples: range.len(),
            farms: self.farms,
            horizon: self.horizon,
            values: self.values[range.start * n..range.end * n].to_vec(),
            seed: self.seed,
            provenance,
        }
    }

    /// Splits into the first `n_in` samples (in-sample) and the rest (out-of-sample).
    pub fn split(&self, n_in: usize) -> (Self, Self) {
        let n_in = n_in.min(self.samples);
        (self.slice(0..n_in, Provenance::InSample), self.slice(n_in..self.samples, Provenance::OutOfSample))
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("s,w,t,value\n");
        for s in 0..self.samples {
            for w in 0..self.farms {
                for t in 0..self.horizon {
                    out.push_str(&format!("{s},{w},{t},{:?}\n", self.get(s, w, t)));
                }
            }
        }
        out
    }

    pub fn sidecar(&self) -> ScenarioSidecar {
        ScenarioSidecar {
            samples: self.samples,
            farms: self.farms,
            horizon: self.horizon,
            seed: self.seed,
            provenance: self.provenance,
            distribution: "gaussian".into(),
            truncation: "[0, capacity]".into(),
        }
    }

    /// Writes `<stem>.csv` and `<stem>.json`.
    pub fn write(&self, dir: &Path, stem: &str) -> Result<(), DrccError> {
        let io = |e: std::io::Error| DrccError::Io(e.to_string());
        fs::write(dir.join(format!("{stem}.csv")), self.to_csv()).map_err(io)?;
        let side = serde_json::to_string_pretty(&self.sidecar()).expect("sidecar serializes");
        fs::write(dir.join(format!("{stem}.json")), side).map_err(io)?;
        Ok(())
    }

    pub fn read(dir: &Path, stem: &str) -> Result<Self, DrccError> {
        let io = |e: std::io::Error| DrccError::Io(e.to_string());
        let side: ScenarioSidecar = serde_json::from_str(&fs::read_to_string(dir.join(format!("{stem}.json"))).map_err(io)?)
            .map_err(|e| DrccError::Io(e.to_string()))?;
        let mut rdr = csv::Reader::from_path(dir.join(format!("{stem}.csv"))).map_err(|e| DrccError::Io(e.to_string()))?;
        let mut values = vec![f64::NAN; side.samples * side.farms * side.horizon];
        for rec in rdr.deserialize::<(usize, usize, usize, f64)>() {
            let (s, w, t, v) = rec.map_err(|e| DrccError::Io(e.to_string()))?;
            if s >= side.samples || w >= side.farms || t >= side.horizon {
                return Err(DrccError::Shape(format!("index ({s},{w},{t}) out of range")));
            }
            values[(s * side.farms + w) * side.horizon + t] = v;
        }
        if values.iter().any(|v| v.is_nan()) {
            return Err(DrccError::Shape("missing entries".into()));
        }
        Self::new(side.samples, side.farms, side.horizon, values, side.seed, side.provenance)
    }
}

/// Gaussian source with per (farm, hour) mean and standard deviation.
#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioSource {
    pub mean: Vec<Vec<f64>>,
    pub std_dev: Vec<Vec<f64>>,
    pub capacity: Vec<f64>,
}

impl ScenarioSource {
    pub fn from_instance(instance: &IegsInstance) -> Self {
        Self::from_spec(&AmbiguitySpec::from_forecast(instance), instance.wind_farms.iter().map(|w| w.capacity).collect())
    }

    pub fn from_spec(spec: &AmbiguitySpec, capacity: Vec<f64>) -> Self {
        Self { mean: spec.mean.clone(), std_dev: spec.variance.iter().map(|r| r.iter().map(|v| v.sqrt()).collect()).collect(), capacity }
    }
}

/// Independent Gaussian draws truncated to `[0, capacity]`, ordered sample,
/// farm, hour. Reproducible for a fixed seed.
pub fn generate_scenarios(source: &ScenarioSource, count: usize, seed: u64, provenance: Provenance) -> ScenarioSet {
    let farms = source.mean.len();
    let horizon = source.mean.first().map_or(0, |r| r.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = Vec::with_capacity(count * farms * horizon);
    for _ in 0..count {
        for w in 0..farms {
            for t in 0..horizon {
                let z: f64 = StandardNormal.sample(&mut rng);
                let v = source.mean[w][t] + source.std_dev[w][t] * z;
                values.push(v.clamp(0.0, source.capacity[w]));
            }
        }
    }
    ScenarioSet { samples: count, farms, horizon, values, seed, provenance }
}

/// Sample mean and unbiased variance over the first `n` samples.
pub fn estimate_moments(set: &ScenarioSet, n: usize, epsilon: f64, unimodal: bool) -> Result<AmbiguitySpec, DrccError> {
    if n < 2 || n > set.samples {
        return Err(DrccError::TooFewSamples { need: n.max(2), have: if n < 2 { n } else { set.samples } });
    }
    let mut mean = vec![vec![0.0; set.horizon]; set.farms];
    let mut variance = vec![vec![0.0; set.horizon]; set.farms];
    for w in 0..set.farms {
        for t in 0..set.horizon {
            let m = (0..n).map(|s| set.get(s, w, t)).sum::<f64>() / n as f64;
            let v = (0..n).map(|s| (set.get(s, w, t) - m).powi(2)).sum::<f64>() / (n - 1) as f64;
            mean[w][t] = m;
            variance[w][t] = v;
        }
    }
    Ok(AmbiguitySpec { mean, variance, epsilon, unimodal })
}

/// Handles of wind dispatch and wind response for one hour, indexed by farm.
#[derive(Clone, Copy, Debug)]
pub struct WindHourVars<'a> {
    pub power: &'a [VarId],
    pub reserve: &'a [VarId],
}

#[derive(Clone, Debug, PartialEq)]
pub struct DrccBlock {
    pub hour: usize,
    pub risk: Vec<VarId>,
    pub r: Vec<VarId>,
    pub s: Vec<VarId>,
    pub linear_rows: Vec<RowId>,
    pub budget_row: RowId,
    pub soc_rows: Vec<SocId>,
}

/// Smallest safety factor the moment cone pair admits at risk level `eps`.
pub fn moment_min_factor(eps: f64) -> f64 {
    1.0 / (eps * (1.0 + eps)).sqrt()
}

/// Smallest safety factor the unimodal cone pair admits at risk level `eps`.
pub fn unimodal_min_factor(eps: f64) -> f64 {
    FOUR_NINTHS / (eps * (FOUR_NINTHS + eps)).sqrt()
}

/// One-sided Chebyshev (Cantelli) factor `√((1−ε)/ε)`.
pub fn cantelli_factor(eps: f64) -> f64 {
    ((1.0 - eps) / eps).sqrt()
}

/// One-sided Vysochanskij-Petunin factor `√((4/9−ε)/ε)`, valid for ε ≤ 1/6.
pub fn vp_factor(eps: f64) -> f64 {
    ((FOUR_NINTHS - eps) / eps).sqrt()
}

/// Shared builder: `r σ ≤ μ − P − R`, `‖(2s, a)‖ ≤ 2ε_w + a`,
/// `‖(2√a, r − s)‖ ≤ r + s`, `Σ_w ε_w ≤ ε`.
fn build_cone_pair(
    model: &mut OptModel,
    spec: &AmbiguitySpec,
    vars: WindHourVars<'_>,
    hour: usize,
    a: f64,
    tag: &str,
) -> Result<DrccBlock, DrccError> {
    spec.validate()?;
    let nw = vars.power.len();
    let mut block = DrccBlock {
        hour,
        risk: Vec::with_capacity(nw),
        r: Vec::with_capacity(nw),
        s: Vec::with_capacity(nw),
        linear_rows: Vec::with_capacity(nw),
        budget_row: RowId(0),
        soc_rows: Vec::with_capacity(2 * nw),
    };
    let two_root_a = 2.0 * a.sqrt();
    for w in 0..nw {
        let eps = model.continuous(format!("{tag}_eps[{w},{hour}]"), 0.0, spec.epsilon);
        let r = model.continuous(format!("{tag}_r[{w},{hour}]"), 0.0, 1e6);
        let s = model.continuous(format!("{tag}_s[{w},{hour}]"), 0.0, 1e6);
        let sigma = spec.std_dev(w, hour);
        block.linear_rows.push(model.add_row(
            format!("{tag}_margin"),
            [(r, sigma), (vars.power[w], 1.0), (vars.reserve[w], 1.0)],
            RowSense::Le,
            spec.mean[w][hour],
        ));
        block.soc_rows.push(model.add_soc(
            format!("{tag}_risk_cone"),
            vec![AffineExpr::new().term(s, 2.0), AffineExpr::constant(a)],
            AffineExpr::new().term(eps, 2.0).plus(a),
        ));
        block.soc_rows.push(model.add_soc(
            format!("{tag}_factor_cone"),
            vec![AffineExpr::constant(two_root_a), AffineExpr::new().term(r, 1.0).term(s, -1.0)],
            AffineExpr::new().term(r, 1.0).term(s, 1.0),
        ));
        block.risk.push(eps);
        block.r.push(r);
        block.s.push(s);
    }
    block.budget_row = model.add_row(format!("{tag}_budget"), block.risk.iter().map(|&e| (e, 1.0)), RowSense::Le, spec.epsilon);
    Ok(block)
}

/// Moment-only joint chance constraint for one hour (Bonferroni split with
/// a conservative cone approximation of the Cantelli factor).
pub fn build_theorem1_soc(model: &mut OptModel, spec: &AmbiguitySpec, vars: WindHourVars<'_>, hour: usize) -> Result<DrccBlock, DrccError> {
    build_cone_pair(model, spec, vars, hour, 1.0, "drm")
}

/// Unimodal joint chance constraint for one hour; requires ε ≤ 1/6.
pub fn build_theorem2_soc(model: &mut OptModel, spec: &AmbiguitySpec, vars: WindHourVars<'_>, hour: usize) -> Result<DrccBlock, DrccError> {
    if !spec.unimodal {
        return Err(DrccError::NotUnimodal);
    }
    if spec.epsilon > UNIMODAL_EPS_MAX {
        return Err(DrccError::UnimodalEpsilon(spec.epsilon));
    }
    build_cone_pair(model, spec, vars, hour, FOUR_NINTHS, "dru")
}

#[derive(Clone, Debug, PartialEq)]
pub struct SaaBlock {
    pub hour: usize,
    /// One violation indicator per sample, shared by all farms.
    pub indicators: Vec<VarId>,
    pub scenario_rows: Vec<RowId>,
    pub budget_row: RowId,
    /// Number of samples allowed to be violated, `⌊ε S⌋`.
    pub budget: usize,
}

/// Sample average approximation of the joint chance constraint for one hour.
pub fn build_saa_block(
    model: &mut OptModel,
    scenarios: &ScenarioSet,
    vars: WindHourVars<'_>,
    capacity: &[f64],
    epsilon: f64,
    hour: usize,
) -> Result<SaaBlock, DrccError> {
    if scenarios.samples == 0 {
        return Err(DrccError::TooFewSamples { need: 1, have: 0 });
    }
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(DrccError::Epsilon(epsilon));
    }
    if scenarios.farms != vars.power.len() || hour >= scenarios.horizon {
        return Err(DrccError::Shape("scenario set does not match the wind farms or horizon".into()));
    }
    let budget = (epsilon * scenarios.samples as f64 + 1e-9).floor() as usize;
    if budget == 0 {
        log::debug!("hour {hour}: zero violation budget, every sample must hold");
    }
    let mut indicators = Vec::with_capacity(scenarios.samples);
    let mut scenario_rows = Vec::new();
    for s in 0..scenarios.samples {
        let z = model.binary(format!("saa_z[{s},{hour}]"));
        for w in 0..scenarios.farms {
            scenario_rows.push(model.add_row(
                "saa_sample",
                [(vars.power[w], 1.0), (vars.reserve[w], 1.0), (z, -capacity[w])],
                RowSense::Le,
                scenarios.get(s, w, hour),
            ));
        }
        indicators.push(z);
    }
    let budget_row = model.add_row("saa_budget", indicators.iter().map(|&z| (z, 1.0)), RowSense::Le, budget as f64);
    Ok(SaaBlock { hour, indicators, scenario_rows, budget_row, budget })
}

/// Safety factor of an individual distributionally robust chance row.
pub fn individual_factor(eps_ind: f64, unimodal: bool) -> Result<f64, DrccError> {
    if !(eps_ind > 0.0 && eps_ind < 1.0) {
        return Err(DrccError::Epsilon(eps_ind));
    }
    if unimodal {
        if eps_ind > UNIMODAL_EPS_MAX {
            return Err(DrccError::UnimodalEpsilon(eps_ind));
        }
        Ok(vp_factor(eps_ind))
    } else {
        Ok(cantelli_factor(eps_ind))
    }
}

/// Individual chance rows `factor·σ ≤ μ − P − R` without a joint budget.
pub fn build_individual_drcc(
    model: &mut OptModel,
    spec: &AmbiguitySpec,
    vars: WindHourVars<'_>,
    eps_ind: f64,
    hour: usize,
    unimodal: bool,
) -> Result<Vec<RowId>, DrccError> {
    let factor = individual_factor(eps_ind, unimodal)?;
    Ok((0..vars.power.len())
        .map(|w| {
            model.add_row(
                "dri_margin",
                [(vars.power[w], 1.0), (vars.reserve[w], 1.0)],
                RowSense::Le,
                spec.mean[w][hour] - factor * spec.std_dev(w, hour),
            )
        })
        .collect())
}
