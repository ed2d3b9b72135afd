//! Paired in-sample and out-of-sample wind draws, moment estimation, and the
//! joint violation probability of simple fixed commitments.
//!
//! Commits `μ − k·σ` for each farm-hour and reports the out-of-sample EJVP for
//! several `k`, horizon-wide and per hour.
//!
//! `cargo run --release --example scenarios`

use std::path::Path;

use drfcuc::drcc::{estimate_moments, AmbiguitySpec};
use drfcuc::eval::{compute_ejvp_with, paired_scenarios, EjvpMode};
use drfcuc::instance::load_instance;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let instance = load_instance(Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/data/iegs5_7.json")))?;
    let (inn, out) = paired_scenarios(&instance, 42, 1000, 10_000);
    let forecast = AmbiguitySpec::from_forecast(&instance);
    let est = estimate_moments(&inn, inn.samples, instance.uncertainty.epsilon, false)?;
    println!(
        "farm-hour (0,0): forecast mean {:.2} sd {:.2}; estimated from {} draws mean {:.2} sd {:.2}",
        forecast.mean[0][0],
        forecast.std_dev(0, 0),
        inn.samples,
        est.mean[0][0],
        est.std_dev(0, 0)
    );

    println!("\n{:>5} {:>12} {:>12}", "k", "EJVP_horizon", "EJVP_hourly");
    for k in [0.0, 1.0, 2.0, 3.0, 4.3644] {
        let commit: Vec<Vec<f64>> = (0..instance.num_wind())
            .map(|w| (0..instance.horizon).map(|t| (forecast.mean[w][t] - k * forecast.std_dev(w, t)).max(0.0)).collect())
            .collect();
        let horizon = compute_ejvp_with(&commit, &out, EjvpMode::Horizon)?;
        let hourly = compute_ejvp_with(&commit, &out, EjvpMode::PerHour)?;
        println!("{k:>5.2} {horizon:>11.2}% {hourly:>11.2}%");
    }
    Ok(())
}
