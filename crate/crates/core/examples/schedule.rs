//! Schedules the bundled five-bus system with one model variant and prints
//! the cost breakdown, solver statistics and the independent re-check.
//!
//! `cargo run --release --example schedule -- dr-m`

use std::path::Path;

use drfcuc::instance::load_instance;
use drfcuc::scheduler::{run_algorithm1, verify_solution, ModelVariant, RunParams};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    env_logger::init();
    let variant: ModelVariant = std::env::args().nth(1).unwrap_or_else(|| "dr-m".into()).parse()?;
    let path = std::env::args().nth(2).unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/data/iegs5_7.json").into());
    let instance = load_instance(Path::new(&path))?;
    let run = run_algorithm1(&instance, &variant, &RunParams::default())?;
    let sol = &run.solution;
    println!("variant {variant}: exit {:?}", sol.exit);
    println!("cost {:#?}", sol.cost);
    println!("stats {:#?}", sol.stats);
    if let Some(gap) = sol.max_gap {
        println!("weymouth gap {gap:.3e} after {} penalized solves", sol.pccp.len().saturating_sub(1));
    }
    for (i, g) in instance.generators.iter().enumerate() {
        let on: String = sol.committed[i].iter().map(|&x| if x { '1' } else { '.' }).collect();
        println!("{:>4} {on}", g.id);
    }
    for (w, f) in instance.wind_farms.iter().enumerate() {
        let on: String = sol.virtual_inertia[w].iter().map(|&x| if x { 'v' } else { '.' }).collect();
        println!("{:>4} {on}", f.id);
    }
    let report = verify_solution(&instance, sol, &run.context);
    println!("re-check max violation {:.2e}", report.max_violation);
    for (family, v) in report.failing(1e-6) {
        println!("  {family}: {v:.2e}");
    }
    Ok(())
}
