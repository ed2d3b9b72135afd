//! Schedules the five-bus system without the gas network and asks whether the
//! gas network could have delivered the resulting GFU fuel.
//!
//! `cargo run --release --example gas_audit`

use std::path::Path;

use drfcuc::eval::audit_gas_feasibility;
use drfcuc::instance::load_instance;
use drfcuc::scheduler::{run_algorithm1, ModelVariant, RunParams};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    env_logger::init();
    let instance = load_instance(Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/data/iegs5_7.json")))?;
    let params = RunParams::default();
    for variant in [ModelVariant::NoNgs, ModelVariant::DrM] {
        let sol = run_algorithm1(&instance, &variant, &params)?.solution;
        let audit = audit_gas_feasibility(&sol, &instance, &params.pccp, params.backend()?.as_ref())?;
        println!(
            "{variant}: cost {:.2}, gas verdict {:?}, total slack {:.4} (threshold {:.2e})",
            sol.cost.total, audit.verdict, audit.total_slack, audit.threshold
        );
        for (node, hour, slack) in audit.slack_nodes.iter().take(8) {
            println!("  {node} hour {hour}: {slack:.4}");
        }
    }
    Ok(())
}
