//! Nadir thresholds and swing simulation for the bundled five-bus system.
//!
//! Prints κ per hour, then simulates the peak hour with just enough response
//! to meet both κ and the settling limit. Passing a path writes that
//! trajectory as CSV.
//!
//! `cargo run --example frequency -- /tmp/swing.csv`

use std::path::Path;

use drfcuc::freq::{hourly_kappa, rocof_requirement, simulate_swing, FrequencySnapshot, RK4_STEP, SIM_HORIZON};
use drfcuc::instance::load_instance;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let instance = load_instance(Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/data/iegs5_7.json")))?;
    let f = &instance.frequency;
    let kappa = hourly_kappa(&instance)?;
    println!("hour  load_MW  dP_MW  kappa_MW2s/Hz  H_rocof_MWs/Hz");
    for (t, k) in kappa.iter().enumerate() {
        let dp = f.contingency[t];
        println!("{t:>4} {:>8.1} {dp:>6.1} {k:>14.2} {:>15.2}", instance.total_load(t), rocof_requirement(f, dp));
    }

    let peak = (0..instance.horizon).max_by(|&a, &b| instance.total_load(a).total_cmp(&instance.total_load(b))).unwrap_or(0);
    let inertia: f64 = instance.generators.iter().map(|g| g.inertia * g.p_max).sum::<f64>() / f.f0;
    let dp = f.contingency[peak];
    let settle_floor = dp - f.damping_mw(instance.total_load(peak)) * f.df_qss_max;
    let reserve = (kappa[peak] / inertia).max(settle_floor);
    let snap = FrequencySnapshot::aggregate(f, inertia, reserve, instance.total_load(peak), dp);
    let tr = simulate_swing(&snap, f, RK4_STEP, SIM_HORIZON)?;
    println!(
        "\nhour {peak}: H = {inertia:.1} MW·s/Hz, R = {reserve:.2} MW -> RoCoF {:.4} Hz/s, nadir {:.4} Hz at {:.2} s (limit {:.4}), settles at {:.4} Hz (limit {:.4})",
        tr.rocof,
        tr.nadir,
        tr.nadir_time,
        f.df_max(),
        tr.qss,
        f.df_qss_max
    );
    if let Some(out) = std::env::args().nth(1) {
        std::fs::write(&out, tr.to_csv())?;
        println!("trajectory written to {out}");
    }
    Ok(())
}
