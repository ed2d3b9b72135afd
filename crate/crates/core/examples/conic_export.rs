//! Builds the relaxed DR-M problem, writes it in the text exchange format,
//! reads it back and compares checksums.
//!
//! `cargo run --example conic_export -- /tmp/drm.conic`

use std::path::{Path, PathBuf};

use drfcuc::instance::load_instance;
use drfcuc::optmodel::conic::{export_conic, import_conic};
use drfcuc::scheduler::{assemble, prepare, ModelVariant, RunParams, Stage};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let instance = load_instance(Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/data/iegs5_7.json")))?;
    let variant = ModelVariant::DrM;
    let ctx = prepare(&instance, &variant, &RunParams::default())?;
    let model = assemble(&instance, &variant, &ctx, Stage::Relaxed)?.model;
    let path = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("drm_relaxed.conic"));
    export_conic(&model, &path)?;
    let back = import_conic(&path)?;
    println!(
        "{}: {} variables ({} binary), {} rows, {} cones",
        path.display(),
        model.num_vars(),
        model.num_binaries(),
        model.rows.len(),
        model.socs.len()
    );
    println!("checksum written {:016x}, read back {:016x}", model.checksum(), back.checksum());
    if model.checksum() != back.checksum() {
        return Err("round trip changed the model".into());
    }
    Ok(())
}
