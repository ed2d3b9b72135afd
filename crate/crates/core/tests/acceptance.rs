//! Acceptance run: one pass/fail line per criterion.
//!
//! Built with `harness = false`; the process exits non-zero when any
//! criterion fails. The scheduling criteria (4 to 8) share one set of solves
//! on the bundled 5-bus instance.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use drfcuc::drcc::{
    build_theorem1_soc, build_theorem2_soc, cantelli_factor, moment_min_factor, unimodal_min_factor, vp_factor, AmbiguitySpec, WindHourVars,
};
use drfcuc::eval::{audit_frequency, audit_gas_feasibility, compute_ejvp, paired_scenarios, GasVerdict};
use drfcuc::freq::{
    big_m, build_frequency_block, nadir_closed_form, nadir_time_closed_form, simulate_swing, solve_kappa, FreqVars, FrequencySnapshot,
};
use drfcuc::instance::{load_instance, FrequencyParams, IegsInstance};
use drfcuc::optmodel::{solve_misocp, AffineExpr, HighsBackend, OptModel, SolveOptions, SolveStatus, VarKind};
use drfcuc::scheduler::{run_algorithm1, ModelVariant, RunParams, ScheduleSolution};

fn data(name: &str) -> IegsInstance {
    load_instance(&Path::new(env!("CARGO_MANIFEST_DIR")).join("data").join(name)).expect("bundled instance loads")
}

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

// ---------------------------------------------------------------- criterion 1

fn big_m_exactness() -> Outcome {
    let start = Instant::now();
    let inst = data("toy_2g1w.json");
    let f = &inst.frequency;
    let hour = 0;
    let kappa = solve_kappa(f, f.contingency[hour], inst.total_load(hour)).map_err(|e| e.to_string())?;
    let m = big_m(&inst);
    let backend = HighsBackend::default();
    let options = SolveOptions::default();

    let mut model = OptModel::new();
    let x: Vec<_> = (0..2).map(|i| model.binary(format!("x{i}"))).collect();
    let y = vec![model.binary("y")];
    let rg: Vec<_> = inst.generators.iter().map(|g| model.continuous(format!("r_{}", g.id), 0.0, g.reserve_max)).collect();
    let rw = vec![model.continuous("r_w", 0.0, inst.wind_farms[0].reserve_max)];
    build_frequency_block(
        &mut model,
        &inst,
        hour,
        FreqVars { committed: &x, virtual_inertia: &y, gen_reserve: &rg, wind_reserve: &rw },
        kappa,
        m,
    )
    .map_err(|e| e.to_string())?;
    // Keep only the nadir linearization; RoCoF and QSS rows are separate conditions.
    model.rows.retain(|r| r.family == "nadir" || r.family == "nadir_bigm");

    let caps: Vec<f64> = inst.generators.iter().map(|g| g.reserve_max).chain([inst.wind_farms[0].reserve_max]).collect();
    let mut cases = 0;
    let mut mismatches = Vec::new();
    for mask in 0..8u32 {
        let bits = [mask & 1 != 0, mask & 2 != 0, mask & 4 != 0];
        let inertia = (if bits[0] { inst.generators[0].inertia * inst.generators[0].p_max } else { 0.0 }
            + if bits[1] { inst.generators[1].inertia * inst.generators[1].p_max } else { 0.0 }
            + if bits[2] { inst.wind_farms[0].inertia * inst.wind_farms[0].capacity } else { 0.0 })
            / f.f0;
        for step in 0..=40 {
            let share = step as f64 / 40.0;
            let reserve: Vec<f64> = caps.iter().map(|c| share * c).collect();
            let total: f64 = reserve.iter().sum();
            let bilinear = total * inertia;
            if (bilinear - kappa).abs() <= 1e-7 * kappa {
                continue;
            }
            let mut fixed = model.clone();
            for (v, b) in x.iter().chain(&y).zip(bits) {
                let b = f64::from(u8::from(b));
                fixed.vars[v.0].lower = b;
                fixed.vars[v.0].upper = b;
            }
            for (v, r) in rg.iter().chain(&rw).zip(&reserve) {
                fixed.vars[v.0].lower = *r;
                fixed.vars[v.0].upper = *r;
            }
            let res = solve_misocp(&fixed, &backend, &options).map_err(|e| e.to_string())?;
            let feasible = res.status == SolveStatus::Optimal;
            cases += 1;
            if feasible != (bilinear >= kappa) {
                mismatches.push((mask, share));
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    check(mismatches.is_empty() && secs < 5.0, format!("{cases} (assignment, reserve) cases, {} mismatches, {secs:.2} s", mismatches.len()))
}

// ---------------------------------------------------------------- criterion 2

fn kappa_nadir_consistency() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut draws = 0;
    let mut worst_closed: f64 = 0.0;
    let mut worst_sim: f64 = 0.0;
    let mut attempts = 0;
    while draws < 50 {
        attempts += 1;
        if attempts > 10_000 {
            return Err("could not draw 50 admissible parameter sets".into());
        }
        let load = rng.random_range(100.0..1000.0);
        let dp = rng.random_range(0.02..0.1) * load;
        let params = FrequencyParams {
            damping: rng.random_range(0.005..0.03),
            f0: 50.0,
            df_db: rng.random_range(0.01..0.03),
            t_db: 0.0,
            delivery_time: rng.random_range(5.0..15.0),
            rocof_max: 0.5,
            f_min: rng.random_range(49.0..49.7),
            df_qss_max: 1.0,
            contingency: vec![dp],
        };
        let inertia = rng.random_range(20.0..200.0);
        let Ok(kappa) = solve_kappa(&params, dp, load) else { continue };
        let reserve = kappa / inertia;
        let d = params.damping_mw(load);
        // The closed form holds while the response is still ramping.
        let onset = -(2.0 * inertia / d) * (1.0 - d * params.df_db / dp).ln();
        let t_nadir = nadir_time_closed_form(reserve, inertia, &params, dp, load);
        if !(t_nadir > onset && t_nadir < onset + params.delivery_time) {
            continue;
        }
        draws += 1;
        let closed = nadir_closed_form(reserve, inertia, &params, dp, load).map_err(|e| e.to_string())?;
        worst_closed = worst_closed.max((closed - params.df_max()).abs());
        let snap = FrequencySnapshot::aggregate(&params, inertia, reserve, load, dp);
        let tr = simulate_swing(&snap, &params, 1e-3, t_nadir + 5.0).map_err(|e| e.to_string())?;
        worst_sim = worst_sim.max((tr.nadir - params.df_max()).abs());
    }
    let secs = start.elapsed().as_secs_f64();
    check(
        worst_closed <= 1e-6 && worst_sim <= 1e-3 && secs < 30.0,
        format!("50 draws: closed-form error {worst_closed:.2e} Hz, simulated error {worst_sim:.2e} Hz, {secs:.2} s"),
    )
}

// ---------------------------------------------------------------- criterion 3

/// Smallest safety factor accepted by the cone pair, found by minimizing it.
fn min_factor(eps: f64, unimodal: bool) -> Result<f64, String> {
    let mut model = OptModel::new();
    let p = model.continuous("p", 0.0, 0.0);
    let r = model.continuous("r", 0.0, 0.0);
    let spec = AmbiguitySpec { mean: vec![vec![1e4]], variance: vec![vec![1.0]], epsilon: eps, unimodal };
    let vars = WindHourVars { power: &[p], reserve: &[r] };
    let block = if unimodal { build_theorem2_soc(&mut model, &spec, vars, 0) } else { build_theorem1_soc(&mut model, &spec, vars, 0) }
        .map_err(|e| e.to_string())?;
    model.add_objective(block.r[0], 1.0);
    // The factor gap to the exact Cantelli value shrinks like ε²/2 on the
    // grid, so the cone rows must hold far tighter than the default.
    let options = SolveOptions { tol_soc: 1e-11, ..SolveOptions::default() };
    let res = solve_misocp(&model, &HighsBackend::default(), &options).map_err(|e| e.to_string())?;
    if res.status != SolveStatus::Optimal {
        return Err(format!("factor solve at eps {eps} ended {:?}", res.status));
    }
    let values = res.values.ok_or("no point returned")?;
    Ok(values[block.r[0].0])
}

fn safety_constants() -> Outcome {
    let m = min_factor(0.05, false)?;
    let u = min_factor(0.05, true)?;
    let mut ok = (m - 4.3644).abs() <= 1e-4 && (u - 2.8267).abs() <= 1e-4;
    ok &= m >= cantelli_factor(0.05) && u >= vp_factor(0.05);
    ok &= (cantelli_factor(0.05) - 4.3589).abs() <= 1e-4 && (vp_factor(0.05) - 2.8087).abs() <= 1e-4;
    let mut worst_fit: f64 = 0.0;
    let mut dominated = 0;
    for k in 1..=100 {
        let eps = k as f64 / 600.0;
        let (mm, uu) = (min_factor(eps, false)?, min_factor(eps, true)?);
        worst_fit = worst_fit.max((mm / moment_min_factor(eps) - 1.0).abs()).max((uu / unimodal_min_factor(eps) - 1.0).abs());
        if mm >= cantelli_factor(eps) && uu >= vp_factor(eps) {
            dominated += 1;
        }
    }
    ok &= dominated == 100 && worst_fit <= 1e-5;
    check(
        ok,
        format!(
            "r_min(0.05) = {m:.4} (moment), {u:.4} (unimodal); grid: {dominated}/100 above exact factors, closed-form fit {worst_fit:.1e}"
        ),
    )
}

// ---------------------------------------------------------------- criterion 9

fn misocp_loop() -> Outcome {
    let backend = HighsBackend::default();
    let options = SolveOptions { mip_gap: 0.0, ..SolveOptions::default() };

    let mut model = OptModel::new();
    let x = model.continuous("x", -1e3, 1e3);
    model.add_soc("disk", vec![AffineExpr::constant(1.0), AffineExpr::var(x)], AffineExpr::constant(2.0));
    model.add_objective(x, 1.0);
    let res = solve_misocp(&model, &backend, &options).map_err(|e| e.to_string())?;
    let analytic = res.values.ok_or("no point")?[x.0];
    let analytic_err = (analytic + 3f64.sqrt()).abs();

    // min c·x + c_z z  s.t. ‖x − a‖ ≤ ρ0 + ρ1 z, with the disk minimum in closed form.
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut mismatches = 0;
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let c = [rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)];
        let a = [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)];
        let (rho0, rho1) = (rng.random_range(0.2..1.5), rng.random_range(0.0..1.5));
        let cz = rng.random_range(-1.0..4.0);
        let mut m = OptModel::new();
        let x1 = m.continuous("x1", -10.0, 10.0);
        let x2 = m.continuous("x2", -10.0, 10.0);
        let z = m.add_var("z", VarKind::Binary, 0.0, 1.0);
        m.add_soc("ball", vec![AffineExpr::var(x1).plus(-a[0]), AffineExpr::var(x2).plus(-a[1])], AffineExpr::constant(rho0).term(z, rho1));
        m.add_objective(x1, c[0]);
        m.add_objective(x2, c[1]);
        m.add_objective(z, cz);
        let norm = (c[0] * c[0] + c[1] * c[1]).sqrt();
        let oracle = [0.0, 1.0]
            .map(|zb: f64| c[0] * a[0] + c[1] * a[1] - (rho0 + rho1 * zb) * norm + cz * zb)
            .into_iter()
            .fold(f64::INFINITY, f64::min);
        let r = solve_misocp(&m, &backend, &options).map_err(|e| e.to_string())?;
        let got = r.objective.ok_or("no objective")?;
        let err = (got - oracle).abs();
        worst = worst.max(err);
        if err > 1e-5 || r.status != SolveStatus::Optimal {
            mismatches += 1;
        }
    }
    check(
        analytic_err <= 1e-6 && mismatches == 0,
        format!("analytic cone error {analytic_err:.1e}; 20 random mixed cases, {mismatches} mismatches, worst {worst:.1e}"),
    )
}

// ---------------------------------------------------------- criteria 4 to 8

const OUT_SAMPLES: usize = 10_000;
const SEED: u64 = 42;
const SAA_SAMPLES: usize = 20;

/// Solution and solve time, or the error message.
type RunOutcome = Result<(ScheduleSolution, f64), String>;

struct Solves {
    instance: IegsInstance,
    runs: Vec<(ModelVariant, RunOutcome)>,
    ejvp: Vec<Option<f64>>,
    params: RunParams,
}

impl Solves {
    fn get(&self, variant: &ModelVariant) -> Result<&ScheduleSolution, String> {
        let (_, r) = self.runs.iter().find(|(v, _)| v == variant).ok_or("variant not solved")?;
        r.as_ref().map(|(s, _)| s).map_err(|e| format!("{variant}: {e}"))
    }

    fn cost(&self, variant: &ModelVariant) -> Result<f64, String> {
        Ok(self.get(variant)?.cost.total)
    }

    /// Violation rate as a fraction.
    fn ejvp(&self, variant: &ModelVariant) -> Result<f64, String> {
        let i = self.runs.iter().position(|(v, _)| v == variant).ok_or("variant not solved")?;
        self.ejvp[i].map(|pct| pct / 100.0).ok_or_else(|| format!("{variant}: no EJVP"))
    }
}

fn variants() -> Vec<ModelVariant> {
    vec![
        ModelVariant::DrM,
        ModelVariant::Saa { samples: SAA_SAMPLES },
        ModelVariant::DrU,
        ModelVariant::DrMI { eps_ind: 0.1 },
        ModelVariant::NoFc,
        ModelVariant::NoNgs,
        ModelVariant::NoVi,
    ]
}

fn solve_all() -> Solves {
    let instance = data("iegs5_7.json");
    let params = RunParams { seed: SEED, ..RunParams::default() };
    let (_, out) = paired_scenarios(&instance, SEED, SAA_SAMPLES, OUT_SAMPLES);
    let mut runs = Vec::new();
    let mut ejvp = Vec::new();
    for v in variants() {
        let start = Instant::now();
        let r = run_algorithm1(&instance, &v, &params).map(|run| (run.solution, start.elapsed().as_secs_f64())).map_err(|e| e.to_string());
        ejvp.push(r.as_ref().ok().and_then(|(s, _)| compute_ejvp(s, &out).ok()));
        match &r {
            Ok((s, secs)) => println!("  solved {v}: cost {:.2}, {secs:.1} s", s.cost.total),
            Err(e) => println!("  solve {v} failed: {e}"),
        }
        runs.push((v, r));
    }
    Solves { instance, runs, ejvp, params }
}

fn distribution_free_guarantee(s: &Solves) -> Outcome {
    let e = s.ejvp(&ModelVariant::DrM)?;
    let (_, r) = s.runs.iter().find(|(v, _)| *v == ModelVariant::DrM).unwrap();
    let secs = r.as_ref().map_err(Clone::clone)?.1;
    check(e <= 0.05 + 0.007 && secs < 600.0, format!("DR-M EJVP {:.2}% over {OUT_SAMPLES} draws, solve {secs:.0} s", 100.0 * e))
}

fn orderings(s: &Solves) -> Outcome {
    let eps = s.instance.uncertainty.epsilon;
    let saa = ModelVariant::Saa { samples: SAA_SAMPLES };
    let checks = [
        ("cost SAA <= DR-U", s.cost(&saa)? <= s.cost(&ModelVariant::DrU)?),
        ("cost DR-U <= DR-M", s.cost(&ModelVariant::DrU)? <= s.cost(&ModelVariant::DrM)?),
        ("EJVP SAA(20) > eps", s.ejvp(&saa)? > eps),
        ("EJVP DR-M within guarantee", s.ejvp(&ModelVariant::DrM)? <= eps + 0.007),
        ("cost NO_NGS < NGS", s.cost(&ModelVariant::NoNgs)? < s.cost(&ModelVariant::DrM)?),
        ("cost VI <= NO_VI", s.cost(&ModelVariant::DrM)? <= s.cost(&ModelVariant::NoVi)?),
        ("EJVP DR-M-I > eps", s.ejvp(&ModelVariant::DrMI { eps_ind: 0.1 })? > eps),
    ];
    let failed: Vec<&str> = checks.iter().filter(|c| !c.1).map(|c| c.0).collect();
    let rates = format!(
        "EJVP SAA {:.2}%, DR-M {:.2}%, DR-U {:.2}%, DR-M-I {:.2}%",
        100.0 * s.ejvp(&saa)?,
        100.0 * s.ejvp(&ModelVariant::DrM)?,
        100.0 * s.ejvp(&ModelVariant::DrU)?,
        100.0 * s.ejvp(&ModelVariant::DrMI { eps_ind: 0.1 })?
    );
    let verdict = if failed.is_empty() { "all 7 hold".to_string() } else { format!("failed: {}", failed.join("; ")) };
    check(failed.is_empty(), format!("{verdict}; {rates}"))
}

fn pccp_convergence(s: &Solves) -> Outcome {
    let sol = s.get(&ModelVariant::DrM)?;
    let eps_gap = s.params.pccp.eps_gap;
    let penalized = sol.pccp.len().saturating_sub(1);
    let gap = sol.max_gap.ok_or("no gap recorded")?;
    let gas = sol.gas.as_ref().ok_or("no gas state")?;
    let worst = gas.readings(&s.instance).iter().flatten().map(|r| r.gap().abs()).fold(0.0, f64::max);
    check(
        gap <= eps_gap && penalized <= 10 && worst <= eps_gap,
        format!("{penalized} penalized iterations, final gap {gap:.2e}, worst pipeline-hour gap {worst:.2e}"),
    )
}

fn gas_audit(s: &Solves) -> Outcome {
    let sol = s.get(&ModelVariant::NoNgs)?;
    let audit = audit_gas_feasibility(sol, &s.instance, &s.params.pccp, &HighsBackend::default()).map_err(|e| e.to_string())?;
    check(
        audit.verdict == GasVerdict::Infeasible && !audit.slack_nodes.is_empty(),
        format!("NO_NGS verdict {:?}, total slack {:.3}, {} slack node-hours", audit.verdict, audit.total_slack, audit.slack_nodes.len()),
    )
}

fn frequency_audit(s: &Solves) -> Outcome {
    let mut bad = Vec::new();
    for (v, r) in &s.runs {
        let Ok((sol, _)) = r else { continue };
        if v.has_frequency() && !audit_frequency(sol, &s.instance).all_pass() {
            bad.push(v.to_string());
        }
    }
    let no_fc = audit_frequency(s.get(&ModelVariant::NoFc)?, &s.instance).failing_hours();
    check(bad.is_empty() && !no_fc.is_empty(), format!("variants with FCs failing: {bad:?}; NO_FC failing hours {no_fc:?}"))
}

// ---------------------------------------------------------------- driver

fn run(label: &str, f: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| Err("panicked".into()));
    let secs = start.elapsed().as_secs_f64();
    match outcome {
        Ok(d) => {
            println!("PASS  {label}: {d} [{secs:.1} s]");
            true
        }
        Err(d) => {
            println!("FAIL  {label}: {d} [{secs:.1} s]");
            false
        }
    }
}

fn main() -> ExitCode {
    let quick_only = std::env::args().any(|a| a == "--quick");
    let mut ok = true;
    ok &= run("1 big-M exactness", big_m_exactness);
    ok &= run("2 kappa/nadir consistency", kappa_nadir_consistency);
    ok &= run("3 safety constants", safety_constants);
    ok &= run("9 MISOCP loop", misocp_loop);
    if !quick_only {
        println!("solving the bundled 5-bus variants");
        let solves = solve_all();
        ok &= run("4 distribution-free guarantee", || distribution_free_guarantee(&solves));
        ok &= run("5 ordering reproduction", || orderings(&solves));
        ok &= run("6 PCCP convergence", || pccp_convergence(&solves));
        ok &= run("7 gas infeasibility audit", || gas_audit(&solves));
        ok &= run("8 frequency audit", || frequency_audit(&solves));
    }
    if ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
