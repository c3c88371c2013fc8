//! Experiment runner behind the `lab` binary.
//!
//! A run reads a JSON config, loads the model it points to, executes one
//! experiment and writes everything into an output directory:
//!
//! - `manifest.json`: hashes, seed, thread count and every check with its
//!   measured value and threshold,
//! - `series.csv`: tidy `experiment,series,x,y,stderr` rows for plotting,
//! - `estimates.json`: named `{value, stderr, N, seed}` estimates,
//! - experiment specific artifacts (trajectories, pressure tables, ensembles).

mod config;
mod experiments;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::ensembles::StateSpec;
use crate::error::{Error, Result};
use crate::model::io::load_model;
use crate::model::{box_sites, BoxSystem, LatticeModel};
use crate::stats::Estimate;
use crate::thermo::inputs_hash;

pub use config::{Experiment, ExperimentConfig, LoadedConfig, Params, Tolerances};

/// Outcome of one named check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub pass: bool,
    pub measured: Option<f64>,
    pub threshold: Option<f64>,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub detail: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Running,
    Complete,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub experiment: Experiment,
    pub status: RunStatus,
    pub config: String,
    pub config_hash: String,
    pub model_hash: String,
    pub seed: u64,
    pub threads: usize,
    /// Unix seconds.
    pub started: u64,
    pub finished: Option<u64>,
    pub elapsed_seconds: Option<f64>,
    pub checks: Vec<CheckResult>,
    pub artifacts: Vec<String>,
    pub all_pass: bool,
}

impl RunManifest {
    pub fn check(&self, name: &str) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn failures(&self) -> impl Iterator<Item = &CheckResult> {
        self.checks.iter().filter(|c| !c.pass)
    }
}

/// Command-line overrides.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
struct SeriesRow {
    series: String,
    x: f64,
    y: f64,
    stderr: f64,
}

/// State shared by the experiment bodies while a run is in progress.
pub(crate) struct Run {
    pub experiment: Experiment,
    pub model: LatticeModel,
    pub params: Params,
    pub tol: Tolerances,
    pub seed: u64,
    pub out: PathBuf,
    checks: Vec<CheckResult>,
    series: Vec<SeriesRow>,
    estimates: BTreeMap<String, Estimate>,
    artifacts: Vec<String>,
}

impl Run {
    pub fn check(&mut self, name: impl Into<String>, pass: bool, measured: f64, threshold: f64, detail: impl Into<String>) {
        let name = name.into();
        assert!(
            self.checks.iter().all(|c| c.name != name),
            "check `{name}` recorded twice"
        );
        let finite = |x: f64| x.is_finite().then_some(x);
        self.checks.push(CheckResult {
            name,
            pass,
            measured: finite(measured),
            threshold: finite(threshold),
            detail: detail.into(),
        });
    }

    pub fn point(&mut self, series: &str, x: f64, y: f64, stderr: f64) {
        self.series.push(SeriesRow {
            series: series.to_string(),
            x,
            y,
            stderr,
        });
    }

    pub fn estimate(&mut self, name: impl Into<String>, e: Estimate) {
        self.estimates.insert(name.into(), e);
    }

    /// Write `contents` to `rel` inside the output directory.
    pub fn artifact(&mut self, rel: &str, contents: impl AsRef<[u8]>) -> Result<()> {
        let path = self.out.join(rel);
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        std::fs::write(&path, contents)?;
        self.register(rel);
        Ok(())
    }

    pub fn artifact_json<T: Serialize>(&mut self, rel: &str, value: &T) -> Result<()> {
        let text = serde_json::to_string_pretty(value)?;
        self.artifact(rel, text)
    }

    /// Record a file some other writer already put in the output directory.
    pub fn register(&mut self, rel: &str) {
        if !self.artifacts.iter().any(|a| a == rel) {
            self.artifacts.push(rel.to_string());
        }
    }

    pub fn system(&self, a: i64) -> Result<BoxSystem> {
        BoxSystem::new(&self.model, &box_sites(self.model.nu(), a)?)
    }

    pub fn state_or(&self, default: StateSpec) -> StateSpec {
        self.params.state.clone().unwrap_or(default)
    }

    /// Independent seed for the `k`-th random component of the run.
    pub fn sub_seed(&self, k: u64) -> u64 {
        self.seed.wrapping_add(k.wrapping_mul(0x9E37_79B9_7F4A_7C15))
    }

    fn series_csv(&self) -> String {
        let mut out = String::from("experiment,series,x,y,stderr\n");
        for r in &self.series {
            let _ = writeln!(out, "{},{},{},{},{}", self.experiment, r.series, r.x, r.y, r.stderr);
        }
        out
    }
}

fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

fn write_manifest(dir: &Path, m: &RunManifest) -> Result<()> {
    std::fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(m)?)?;
    Ok(())
}

/// Execute `experiment` as configured. Config problems come back as
/// [`Error::Config`]; failed checks are reported in the manifest, not as
/// errors.
pub fn run(experiment: Experiment, loaded: &LoadedConfig, opts: &RunOptions) -> Result<RunManifest> {
    let cfg = &loaded.config;
    if let Some(e) = cfg.experiment {
        if e != experiment {
            return Err(Error::Config(format!(
                "config is for experiment `{e}` but `{experiment}` was requested"
            )));
        }
    }
    let seed = opts
        .seed
        .or(cfg.seed)
        .ok_or_else(|| Error::Config("no seed: set `seed` in the config or pass --seed".into()))?;
    let model_path = loaded.model_path();
    let model = load_model(&model_path)
        .map_err(|e| Error::Config(format!("model {}: {e}", model_path.display())))?;
    let out = opts
        .out
        .clone()
        .or_else(|| cfg.out.clone())
        .unwrap_or_else(|| PathBuf::from(format!("runs/{experiment}-seed{seed}")));
    std::fs::create_dir_all(&out)
        .map_err(|e| Error::Config(format!("cannot create output directory {}: {e}", out.display())))?;

    let mut manifest = RunManifest {
        tool: "lab".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        experiment,
        status: RunStatus::Running,
        config: loaded.path.display().to_string(),
        config_hash: inputs_hash(&loaded.raw),
        model_hash: model.hash(),
        seed,
        threads: rayon::current_num_threads(),
        started: unix_now(),
        finished: None,
        elapsed_seconds: None,
        checks: Vec::new(),
        artifacts: Vec::new(),
        all_pass: false,
    };
    write_manifest(&out, &manifest)?;
    let clock = Instant::now();

    let mut r = Run {
        experiment,
        model,
        params: cfg.params.clone(),
        tol: cfg.tolerances.clone(),
        seed,
        out: out.clone(),
        checks: Vec::new(),
        series: Vec::new(),
        estimates: BTreeMap::new(),
        artifacts: Vec::new(),
    };
    experiments::dispatch(&mut r)?;

    let csv = r.series_csv();
    r.artifact("series.csv", csv)?;
    let estimates = std::mem::take(&mut r.estimates);
    r.artifact_json("estimates.json", &estimates)?;

    manifest.status = RunStatus::Complete;
    manifest.finished = Some(unix_now());
    manifest.elapsed_seconds = Some(clock.elapsed().as_secs_f64());
    manifest.all_pass = !r.checks.is_empty() && r.checks.iter().all(|c| c.pass);
    manifest.checks = r.checks;
    manifest.artifacts = r.artifacts;
    write_manifest(&out, &manifest)?;
    Ok(manifest)
}

/// Exit code convention of the binary: 0 all checks pass, 1 a check failed
/// (or the run itself failed), 2 usage or config error.
pub fn exit_code(result: &Result<RunManifest>) -> i32 {
    match result {
        Ok(m) if m.all_pass => 0,
        Ok(_) => 1,
        Err(Error::Config(_)) => 2,
        Err(_) => 1,
    }
}
