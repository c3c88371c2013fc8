//! Run a shipped experiment config programmatically.
//!
//! `cargo run --example lab_run -- configs/bracket-fpu.json`

use anharmonic::lab::{self, LoadedConfig, RunOptions};

fn main() -> anharmonic::Result<()> {
    let path = std::env::args()
        .nth(1)
        .unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/periodize-harmonic.json").into());
    let loaded = LoadedConfig::load(&path)?;
    let experiment = loaded.config.experiment.expect("config names its experiment");
    let out = std::env::temp_dir().join(format!("lab-{experiment}"));
    let manifest = lab::run(experiment, &loaded, &RunOptions { seed: None, out: Some(out.clone()) })?;
    for c in &manifest.checks {
        println!("{} {}", if c.pass { "PASS" } else { "FAIL" }, c.name);
    }
    println!("artifacts in {}: {}", out.display(), manifest.artifacts.join(", "));
    Ok(())
}
