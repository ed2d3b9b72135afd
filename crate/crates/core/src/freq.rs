//! Post-contingency frequency dynamics and the frequency constraint family.
//!
//! Deviations are handled as magnitudes `y = |Δf| ≥ 0` of a frequency drop:
//! `2H ẏ + D' y = ΔP − PFR(τ)`, with PFR ramping linearly over the delivery
//! time once the governor dead band is crossed.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::instance::{FrequencyParams, IegsInstance};
use crate::optmodel::{OptModel, RowId, RowSense, VarId};

#[derive(Debug, Error, PartialEq)]
pub enum FreqError {
    #[error("system inertia must be positive, got {0} MW·s/Hz")]
    NonPositiveInertia(f64),
    #[error("non-finite state at τ = {0} s")]
    NonFinite(f64),
    #[error("time step must lie in (0, 1 ms] and the horizon must be positive")]
    BadStep,
    #[error("logarithm argument is nonpositive; inputs are inconsistent")]
    LogArgument,
    #[error("contingency {dp} MW does not exceed damping × dead band ({floor} MW)")]
    BelowDeadBand { dp: f64, floor: f64 },
    #[error("no sign change in the κ bracket; damping alone holds the nadir limit")]
    NoSignChange,
    #[error("κ root solve exceeded {0} iterations")]
    IterationCap(usize),
    #[error("κ for hour {0} is missing or not finite")]
    MissingKappa(usize),
    #[error("big-M constant must be positive, got {0}")]
    BadBigM(f64),
}

/// Aggregate frequency-relevant state of one hour of a schedule.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrequencySnapshot {
    pub hour: usize,
    pub committed: Vec<bool>,
    pub virtual_inertia: Vec<bool>,
    pub gen_reserve: Vec<f64>,
    pub wind_reserve: Vec<f64>,
    /// MW.
    pub load: f64,
    /// MW.
    pub contingency: f64,
    /// MW·s/Hz.
    pub inertia: f64,
    /// Total primary response, MW.
    pub reserve: f64,
    /// MW/Hz.
    pub damping: f64,
}

/// System inertia `(Σ H_i P_i^max x_i + Σ H_w W_w^max y_w) / f0`.
pub fn system_inertia(instance: &IegsInstance, committed: &[bool], vi: &[bool]) -> f64 {
    let g: f64 = instance.generators.iter().zip(committed).filter(|(_, &x)| x).map(|(g, _)| g.inertia * g.p_max).sum();
    let w: f64 = instance.wind_farms.iter().zip(vi).filter(|(_, &y)| y).map(|(w, _)| w.inertia * w.capacity).sum();
    (g + w) / instance.frequency.f0
}

impl FrequencySnapshot {
    pub fn from_schedule(
        instance: &IegsInstance,
        hour: usize,
        committed: &[bool],
        virtual_inertia: &[bool],
        gen_reserve: &[f64],
        wind_reserve: &[f64],
    ) -> Self {
        let load = instance.total_load(hour);
        Self {
            hour,
            committed: committed.to_vec(),
            virtual_inertia: virtual_inertia.to_vec(),
            gen_reserve: gen_reserve.to_vec(),
            wind_reserve: wind_reserve.to_vec(),
            load,
            contingency: instance.frequency.contingency[hour],
            inertia: system_inertia(instance, committed, virtual_inertia),
            reserve: gen_reserve.iter().sum::<f64>() + wind_reserve.iter().sum::<f64>(),
            damping: instance.frequency.damping_mw(load),
        }
    }

    /// Snapshot from aggregates only (single-machine studies).
    pub fn aggregate(params: &FrequencyParams, inertia: f64, reserve: f64, load: f64, contingency: f64) -> Self {
        Self {
            hour: 0,
            committed: Vec::new(),
            virtual_inertia: Vec::new(),
            gen_reserve: Vec::new(),
            wind_reserve: Vec::new(),
            load,
            contingency,
            inertia,
            reserve,
            damping: params.damping_mw(load),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SwingTrajectory {
    /// Seconds since the contingency.
    pub time: Vec<f64>,
    /// Signed deviation Δf, Hz (negative for a generation loss).
    pub deviation: Vec<f64>,
    /// Largest |dΔf/dτ| in the first 500 ms, Hz/s.
    pub rocof: f64,
    /// Largest |Δf|, Hz.
    pub nadir: f64,
    pub nadir_time: f64,
    /// Deviation the final state settles to, Hz.
    pub qss: f64,
    /// |Δf| at the end of the horizon, Hz.
    pub final_deviation: f64,
    /// Start of the primary response ramp, s.
    pub pfr_onset: Option<f64>,
}

impl SwingTrajectory {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("tau_s,df_hz\n");
        for (t, d) in self.time.iter().zip(&self.deviation) {
            out.push_str(&format!("{t},{d}\n"));
        }
        out
    }
}

pub const RK4_STEP: f64 = 1e-3;
pub const SIM_HORIZON: f64 = 60.0;
const ROCOF_WINDOW: f64 = 0.5;

struct Swing {
    two_h: f64,
    damping: f64,
    dp: f64,
    reserve: f64,
    td: f64,
}

impl Swing {
    fn pfr(&self, tau: f64, onset: Option<f64>) -> f64 {
        match onset {
            Some(o) if tau > o => self.reserve * ((tau - o) / self.td).min(1.0),
            _ => 0.0,
        }
    }

    fn rate(&self, tau: f64, y: f64, onset: Option<f64>) -> f64 {
        (self.dp - self.pfr(tau, onset) - self.damping * y) / self.two_h
    }

    fn rk4(&self, tau: f64, y: f64, h: f64, onset: Option<f64>) -> f64 {
        let k1 = self.rate(tau, y, onset);
        let k2 = self.rate(tau + h / 2.0, y + h * k1 / 2.0, onset);
        let k3 = self.rate(tau + h / 2.0, y + h * k2 / 2.0, onset);
        let k4 = self.rate(tau + h, y + h * k3, onset);
        y + h * (k1 + 2.0 * k2 + 2.0 * k3 + k4) / 6.0
    }

    /// Integrates across `[tau, tau+h]`, splitting at ramp kinks.
    fn advance(&self, tau: f64, y: f64, h: f64, onset: Option<f64>) -> f64 {
        let end = tau + h;
        let mut kinks: Vec<f64> = match onset {
            Some(o) => [o, o + self.td].into_iter().filter(|&k| k > tau && k < end).collect(),
            None => Vec::new(),
        };
        kinks.push(end);
        let (mut t, mut v) = (tau, y);
        for k in kinks {
            v = self.rk4(t, v, k - t, onset);
            t = k;
        }
        v
    }
}

/// Integrates the swing equation with RK4.
///
/// The response ramp starts when `|Δf|` first reaches the dead band, plus the
/// optional extra dead time `t_db`.
pub fn simulate_swing(snapshot: &FrequencySnapshot, params: &FrequencyParams, dt: f64, horizon: f64) -> Result<SwingTrajectory, FreqError> {
    if !(dt > 0.0 && dt <= 1e-3 + 1e-15 && horizon > 0.0) {
        return Err(FreqError::BadStep);
    }
    if !(snapshot.inertia > 0.0) {
        return Err(FreqError::NonPositiveInertia(snapshot.inertia));
    }
    let sys = Swing {
        two_h: 2.0 * snapshot.inertia,
        damping: snapshot.damping,
        dp: snapshot.contingency.abs(),
        reserve: snapshot.reserve,
        td: params.delivery_time,
    };
    let steps = (horizon / dt).round() as usize;
    let mut time = Vec::with_capacity(steps + 1);
    let mut dev = Vec::with_capacity(steps + 1);
    let mut onset: Option<f64> = None;
    let (mut tau, mut y) = (0.0_f64, 0.0_f64);
    let mut rocof = 0.0_f64;
    let mut nadir = (0.0_f64, 0.0_f64);
    time.push(0.0);
    dev.push(0.0);
    for k in 1..=steps {
        let next_tau = k as f64 * dt;
        let h = next_tau - tau;
        let mut next = sys.advance(tau, y, h, onset);
        if onset.is_none() && next >= params.df_db && y < params.df_db {
            // Locate the crossing by bisection on the sub-step length.
            let (mut lo, mut hi) = (0.0, h);
            for _ in 0..60 {
                let mid = 0.5 * (lo + hi);
                if sys.rk4(tau, y, mid, None) >= params.df_db {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            let cross = tau + hi;
            onset = Some(cross + params.t_db);
            let yc = sys.rk4(tau, y, hi, None);
            next = sys.advance(cross, yc, next_tau - cross, onset);
        }
        tau = next_tau;
        y = next;
        if !y.is_finite() {
            return Err(FreqError::NonFinite(tau));
        }
        if y > nadir.0 {
            nadir = (y, tau);
        }
        time.push(tau);
        dev.push(-y);
    }
    // Slope metric from the model right-hand side on the sampled grid.
    for (t, d) in time.iter().zip(&dev) {
        if *t > ROCOF_WINDOW + 1e-12 {
            break;
        }
        rocof = rocof.max(sys.rate(*t, -d, onset).abs());
    }
    let settle = if sys.damping > 0.0 { y + sys.two_h * sys.rate(tau, y, onset) / sys.damping } else { f64::INFINITY };
    Ok(SwingTrajectory {
        time,
        deviation: dev,
        rocof,
        nadir: nadir.0,
        nadir_time: nadir.1,
        qss: settle,
        final_deviation: y,
        pfr_onset: onset,
    })
}

/// Closed-form nadir magnitude for a ramp that starts at the dead band.
pub fn nadir_closed_form(reserve: f64, inertia: f64, params: &FrequencyParams, dp: f64, load: f64) -> Result<f64, FreqError> {
    let d = params.damping_mw(load);
    let td = params.delivery_time;
    let excess = dp - d * params.df_db;
    let rh2 = 2.0 * reserve * inertia;
    let arg = rh2 / (td * d * excess + rh2);
    if !(arg > 0.0) || !arg.is_finite() {
        return Err(FreqError::LogArgument);
    }
    Ok(rh2 / (td * d * d) * arg.ln() + excess / d + params.df_db)
}

/// Time of the nadir after the contingency implied by the closed form, s.
///
/// Useful to check that the nadir falls inside the response ramp, where the
/// closed form is exact.
pub fn nadir_time_closed_form(reserve: f64, inertia: f64, params: &FrequencyParams, dp: f64, load: f64) -> f64 {
    let d = params.damping_mw(load);
    let td = params.delivery_time;
    let excess = dp - d * params.df_db;
    let rh2 = 2.0 * reserve * inertia;
    let cross = -(2.0 * inertia / d) * (1.0 - d * params.df_db / dp).ln();
    cross - (2.0 * inertia / d) * (rh2 / (td * d * excess + rh2)).ln()
}

struct KappaEq {
    a: f64,
    rhs: f64,
    td: f64,
}

impl KappaEq {
    fn new(params: &FrequencyParams, dp: f64, load: f64) -> Self {
        let d = params.damping_mw(load);
        let excess = dp - d * params.df_db;
        Self { a: params.delivery_time * d * excess, rhs: d * d * (params.df_max() - params.df_db) - d * excess, td: params.delivery_time }
    }

    fn value(&self, k: f64) -> f64 {
        2.0 * k / self.td * (2.0 * k / (self.a + 2.0 * k)).ln() - self.rhs
    }

    fn slope(&self, k: f64) -> f64 {
        2.0 / self.td * ((2.0 * k / (self.a + 2.0 * k)).ln() + self.a / (self.a + 2.0 * k))
    }
}

/// Residual of the κ equation at `kappa`.
pub fn kappa_residual(params: &FrequencyParams, dp: f64, load: f64, kappa: f64) -> f64 {
    KappaEq::new(params, dp, load).value(kappa)
}

/// Natural scale of the κ equation, `D'(ΔP − D'Δf_DB)`.
pub fn kappa_scale(params: &FrequencyParams, dp: f64, load: f64) -> f64 {
    let d = params.damping_mw(load);
    d * (dp - d * params.df_db)
}

const KAPPA_CAP: usize = 10_000;

/// Minimum product `R·H` keeping the nadir within `f0 − f_min`.
///
/// Bisection on `[1e-6, 10·T_d·D'·ΔP]` (the upper end doubles until the sign
/// changes), then Newton steps that are kept only when they shrink the residual.
pub fn solve_kappa(params: &FrequencyParams, dp: f64, load: f64) -> Result<f64, FreqError> {
    let d = params.damping_mw(load);
    let floor = d * params.df_db;
    if !(dp > floor) {
        return Err(FreqError::BelowDeadBand { dp, floor });
    }
    let eq = KappaEq::new(params, dp, load);
    if eq.rhs >= 0.0 {
        return Err(FreqError::NoSignChange);
    }
    let tol = 1e-9 * kappa_scale(params, dp, load);
    let mut lo = 1e-6;
    let mut hi = 10.0 * params.delivery_time * d * dp;
    if eq.value(lo) <= 0.0 {
        return Err(FreqError::NoSignChange);
    }
    let mut iters = 0;
    while eq.value(hi) > 0.0 {
        hi *= 2.0;
        iters += 1;
        if iters > 200 {
            return Err(FreqError::NoSignChange);
        }
    }
    let mut mid = 0.5 * (lo + hi);
    loop {
        iters += 1;
        if iters > KAPPA_CAP {
            return Err(FreqError::IterationCap(KAPPA_CAP));
        }
        let v = eq.value(mid);
        if v.abs() <= tol * 1e-3 || hi - lo <= f64::EPSILON * hi {
            break;
        }
        if v > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        mid = 0.5 * (lo + hi);
    }
    for _ in 0..5 {
        let s = eq.slope(mid);
        if s == 0.0 {
            break;
        }
        let cand = mid - eq.value(mid) / s;
        if cand > 0.0 && eq.value(cand).abs() < eq.value(mid).abs() {
            mid = cand;
        } else {
            break;
        }
    }
    if eq.value(mid).abs() > tol {
        return Err(FreqError::IterationCap(KAPPA_CAP));
    }
    Ok(mid)
}

/// κ for each hour; hours where damping alone keeps the nadir in range get 0.
pub fn hourly_kappa(instance: &IegsInstance) -> Result<Vec<f64>, FreqError> {
    let f = &instance.frequency;
    (0..instance.horizon)
        .map(|t| match solve_kappa(f, f.contingency[t].abs(), instance.total_load(t)) {
            Ok(k) => Ok(k),
            Err(FreqError::NoSignChange | FreqError::BelowDeadBand { .. }) => Ok(0.0),
            Err(e) => Err(e),
        })
        .collect()
}

/// Big-M for the response/inertia product: total response capacity plus one.
pub fn big_m(instance: &IegsInstance) -> f64 {
    instance.generators.iter().map(|g| g.reserve_max).sum::<f64>() + instance.wind_farms.iter().map(|w| w.reserve_max).sum::<f64>() + 1.0
}

/// Per-hour decision handles the frequency block refers to.
#[derive(Clone, Copy, Debug)]
pub struct FreqVars<'a> {
    pub committed: &'a [VarId],
    pub virtual_inertia: &'a [VarId],
    pub gen_reserve: &'a [VarId],
    pub wind_reserve: &'a [VarId],
}

#[derive(Clone, Debug, PartialEq)]
pub struct FreqConstraintBlock {
    pub hour: usize,
    pub kappa: f64,
    pub big_m: f64,
    pub rocof_row: RowId,
    pub nadir_row: RowId,
    pub qss_row: RowId,
    pub big_m_rows: Vec<RowId>,
    pub gen_aux: Vec<VarId>,
    pub wind_aux: Vec<VarId>,
}

/// Required inertia for the RoCoF limit, `|ΔP| / (2 RoCoF^max)`, MW·s/Hz.
pub fn rocof_requirement(params: &FrequencyParams, dp: f64) -> f64 {
    dp.abs() / (2.0 * params.rocof_max)
}

/// Adds the RoCoF, nadir (exact big-M linearization of `R·H ≥ κ`) and
/// quasi-steady-state rows for one hour.
pub fn build_frequency_block(
    model: &mut OptModel,
    instance: &IegsInstance,
    hour: usize,
    vars: FreqVars<'_>,
    kappa: f64,
    m: f64,
) -> Result<FreqConstraintBlock, FreqError> {
    if !kappa.is_finite() {
        return Err(FreqError::MissingKappa(hour));
    }
    if !(m > 0.0 && m.is_finite()) {
        return Err(FreqError::BadBigM(m));
    }
    let f = &instance.frequency;
    let f0 = f.f0;
    let dp = f.contingency[hour].abs();

    let mut inertia_terms = Vec::new();
    for (g, &x) in instance.generators.iter().zip(vars.committed) {
        inertia_terms.push((x, g.inertia * g.p_max / f0));
    }
    for (w, &y) in instance.wind_farms.iter().zip(vars.virtual_inertia) {
        inertia_terms.push((y, w.inertia * w.capacity / f0));
    }
    let rocof_row = model.add_row("rocof", inertia_terms, RowSense::Ge, rocof_requirement(f, dp));

    let reserve: Vec<(VarId, f64)> = vars.gen_reserve.iter().chain(vars.wind_reserve).map(|&r| (r, 1.0)).collect();
    let mut big_m_rows = Vec::new();
    let mut link = |model: &mut OptModel, name: String, bin: VarId| -> VarId {
        let aux = model.continuous(name, -m, m);
        big_m_rows.push(model.add_row("nadir_bigm", [(aux, 1.0), (bin, -m)], RowSense::Le, 0.0));
        big_m_rows.push(model.add_row("nadir_bigm", [(aux, 1.0), (bin, m)], RowSense::Ge, 0.0));
        let mut t = vec![(aux, 1.0), (bin, m)];
        t.extend(reserve.iter().map(|&(r, _)| (r, -1.0)));
        big_m_rows.push(model.add_row("nadir_bigm", t, RowSense::Le, m));
        let mut t = vec![(aux, 1.0), (bin, -m)];
        t.extend(reserve.iter().map(|&(r, _)| (r, -1.0)));
        big_m_rows.push(model.add_row("nadir_bigm", t, RowSense::Ge, -m));
        aux
    };
    let gen_aux: Vec<VarId> =
        instance.generators.iter().zip(vars.committed).map(|(g, &x)| link(model, format!("rh_gen[{},{}]", g.id, hour), x)).collect();
    let wind_aux: Vec<VarId> =
        instance.wind_farms.iter().zip(vars.virtual_inertia).map(|(w, &y)| link(model, format!("rh_wind[{},{}]", w.id, hour), y)).collect();
    let mut nadir_terms = Vec::new();
    for (g, &a) in instance.generators.iter().zip(&gen_aux) {
        nadir_terms.push((a, g.inertia * g.p_max / f0));
    }
    for (w, &a) in instance.wind_farms.iter().zip(&wind_aux) {
        nadir_terms.push((a, w.inertia * w.capacity / f0));
    }
    let nadir_row = model.add_row("nadir", nadir_terms, RowSense::Ge, kappa);

    let d = f.damping_mw(instance.total_load(hour));
    let qss_row = model.add_row("qss", reserve, RowSense::Ge, dp - d * f.df_qss_max);

    Ok(FreqConstraintBlock { hour, kappa, big_m: m, rocof_row, nadir_row, qss_row, big_m_rows, gen_aux, wind_aux })
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn params() -> FrequencyParams {
        FrequencyParams {
            damping: 0.01,
            f0: 50.0,
            df_db: 0.015,
            t_db: 0.0,
            delivery_time: 10.0,
            rocof_max: 0.125,
            f_min: 49.2,
            df_qss_max: 0.2,
            contingency: vec![20.0],
        }
    }

    #[test]
    fn no_disturbance_stays_flat() {
        let p = params();
        let s = FrequencySnapshot::aggregate(&p, 50.0, 10.0, 300.0, 0.0);
        let tr = simulate_swing(&s, &p, 1e-3, 5.0).unwrap();
        assert!(tr.deviation.iter().all(|&d| d == 0.0));
        assert_eq!(tr.pfr_onset, None);
    }

    #[test]
    fn initial_slope() {
        let p = params();
        let s = FrequencySnapshot::aggregate(&p, 80.0, 30.0, 300.0, 20.0);
        let tr = simulate_swing(&s, &p, 1e-3, 2.0).unwrap();
        let expect = 20.0 / 160.0;
        assert!((tr.rocof - expect).abs() / expect < 1e-3);
    }

    #[test]
    fn nadir_limit_at_dead_band() {
        let p = params();
        let d = p.damping_mw(300.0);
        let v = nadir_closed_form(10.0, 50.0, &p, d * p.df_db * (1.0 + 1e-12), 300.0).unwrap();
        assert!((v - p.df_db).abs() < 1e-9);
    }

    #[test]
    fn kappa_is_deterministic_and_increasing() {
        let p = params();
        let a = solve_kappa(&p, 20.0, 300.0).unwrap();
        assert_eq!(a.to_bits(), solve_kappa(&p, 20.0, 300.0).unwrap().to_bits());
        assert!(solve_kappa(&p, 22.0, 300.0).unwrap() > a);
        assert!(kappa_residual(&p, 20.0, 300.0, a).abs() <= 1e-9 * kappa_scale(&p, 20.0, 300.0));
    }

    #[test]
    fn rocof_rhs_matches_large_case() {
        let mut p = params();
        p.rocof_max = 0.5;
        assert!((rocof_requirement(&p, 805.2) - 805.2).abs() < 1e-12);
    }
}
