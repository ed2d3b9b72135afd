#![allow(dead_code)]

use std::path::{Path, PathBuf};

use drfcuc::instance::{load_instance, IegsInstance};

pub fn data_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data").join(name)
}

pub fn five_bus() -> IegsInstance {
    load_instance(&data_path("iegs5_7.json")).expect("bundled 5-bus instance")
}

pub fn toy() -> IegsInstance {
    load_instance(&data_path("toy_2g1w.json")).expect("bundled toy instance")
}
