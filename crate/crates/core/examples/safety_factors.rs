//! Safety factors of the chance-constraint reformulations across risk levels:
//! the minimum factor each cone pair admits next to the exact one-sided bound.
//!
//! `cargo run --example safety_factors`

use drfcuc::drcc::{cantelli_factor, moment_min_factor, unimodal_min_factor, vp_factor, UNIMODAL_EPS_MAX};

fn main() {
    println!("{:>7} {:>10} {:>10} {:>10} {:>10}", "eps", "moment", "cantelli", "unimodal", "vp");
    for eps in [0.01, 0.02, 0.05, 0.1, 0.15, UNIMODAL_EPS_MAX, 0.25] {
        let (u, v) = if eps <= UNIMODAL_EPS_MAX {
            (format!("{:.4}", unimodal_min_factor(eps)), format!("{:.4}", vp_factor(eps)))
        } else {
            ("-".into(), "-".into())
        };
        println!("{eps:>7.4} {:>10.4} {:>10.4} {u:>10} {v:>10}", moment_min_factor(eps), cantelli_factor(eps));
    }
}
