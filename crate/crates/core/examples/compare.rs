//! Solves several variants on the small two-generator instance and scores
//! them on a shared out-of-sample set.
//!
//! `cargo run --release --example compare`

use std::path::Path;

use drfcuc::eval::{compare_variants, CompareConfig};
use drfcuc::instance::load_instance;
use drfcuc::scheduler::ModelVariant;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let instance = load_instance(Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/data/toy_2g1w.json")))?;
    let variants: Vec<ModelVariant> =
        ["saa:20", "dr-m", "dr-u", "dr-m-i:0.1", "no-fc"].iter().map(|s| s.parse()).collect::<Result<_, _>>()?;
    let config = CompareConfig { out_samples: 5000, in_samples: 200, gas_audit: false, ..CompareConfig::default() };
    let table = compare_variants(&instance, &variants, &[], &config)?;
    print!("{}", table.to_text());
    Ok(())
}
