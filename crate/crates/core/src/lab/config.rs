//! Experiment configuration files.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::ensembles::{McmcParams, StateSpec};
use crate::error::{Error, Result};

/// The experiments the runner knows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Validate,
    Evolve,
    ConserveEnergy,
    ConserveEntropy,
    Locality,
    Bracket,
    Pressure,
    Equilibrium,
    Variational,
    DesDiagnostic,
    Periodize,
}

impl Experiment {
    pub fn name(&self) -> &'static str {
        match self {
            Experiment::Validate => "validate",
            Experiment::Evolve => "evolve",
            Experiment::ConserveEnergy => "conserve-energy",
            Experiment::ConserveEntropy => "conserve-entropy",
            Experiment::Locality => "locality",
            Experiment::Bracket => "bracket",
            Experiment::Pressure => "pressure",
            Experiment::Equilibrium => "equilibrium",
            Experiment::Variational => "variational",
            Experiment::DesDiagnostic => "des-diagnostic",
            Experiment::Periodize => "periodize",
        }
    }
}

impl std::fmt::Display for Experiment {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Experiment parameters. Unset fields take per-experiment defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Params {
    /// Box scale `a`.
    pub scale: Option<i64>,
    /// Small-box scales for the locality experiment.
    pub scales: Option<Vec<i64>>,
    /// Reference scale `b` for the locality experiment.
    pub reference_scale: Option<i64>,
    pub observer: Option<Vec<i64>>,
    pub h: Option<f64>,
    pub t: Option<f64>,
    pub t_grid: Option<Vec<f64>>,
    /// Horizons `T` of the time averages.
    pub time_average_grid: Option<Vec<f64>>,
    /// Strata per time average.
    pub n_times: Option<usize>,
    /// Ensemble size.
    pub n: Option<usize>,
    pub beta: Option<f64>,
    pub betas: Option<Vec<f64>>,
    pub state: Option<StateSpec>,
    pub states: Option<Vec<StateSpec>>,
    pub block_scale: Option<i64>,
    pub window_scale: Option<i64>,
    pub quadrature_nodes: Option<usize>,
    pub mc_samples: Option<usize>,
    pub knn_k: Option<usize>,
    pub snapshot_every: Option<u64>,
    pub mcmc: Option<McmcParams>,
}

/// Pass/fail thresholds, one place for all of them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// Standard errors allowed for "consistent with zero" checks.
    pub sigmas: f64,
    /// Standard errors a negative control must exceed.
    pub negative_sigmas: f64,
    pub energy_drift: f64,
    pub reversal: f64,
    /// Allowed `|det J - 1|` of one integrator step.
    pub jacobian: f64,
    pub expm: f64,
    pub locality_ratio: f64,
    pub knn_relative: f64,
    pub pressure_relative: f64,
    pub convexity: f64,
    pub periodization: f64,
    pub fekete: f64,
    pub ks_alpha: f64,
    pub covariance_entropy: f64,
    pub min_ess: f64,
    /// Slack on both sides of the entropy window of a time average.
    pub entropy_window: f64,
    /// Largest panel z-score still counted as noise.
    pub noise_floor_z: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            sigmas: 3.0,
            negative_sigmas: 5.0,
            energy_drift: 1e-6,
            reversal: 1e-8,
            jacobian: 1e-6,
            expm: 1e-8,
            locality_ratio: 1e-8,
            knn_relative: 0.05,
            pressure_relative: 0.01,
            convexity: 1e-6,
            periodization: 1e-6,
            fekete: 1e-3,
            ks_alpha: 0.01,
            covariance_entropy: 1e-10,
            min_ess: 100.0,
            entropy_window: 0.05,
            noise_floor_z: 4.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Model file, relative to the config file.
    pub model: PathBuf,
    #[serde(default)]
    pub experiment: Option<Experiment>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub params: Params,
    #[serde(default)]
    pub tolerances: Tolerances,
}

/// A parsed config with its location and raw text.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: ExperimentConfig,
    pub path: PathBuf,
    pub raw: String,
}

impl LoadedConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let raw = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        let config = ExperimentConfig::parse(&raw).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })?;
        Ok(LoadedConfig {
            config,
            path: path.to_path_buf(),
            raw,
        })
    }

    /// Model path resolved against the config's directory.
    pub fn model_path(&self) -> PathBuf {
        if self.config.model.is_absolute() {
            self.config.model.clone()
        } else {
            self.path.parent().unwrap_or(Path::new(".")).join(&self.config.model)
        }
    }
}

impl ExperimentConfig {
    pub fn parse(json: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            serde_json::from_str(json).map_err(|e| Error::Config(format!("config schema: {e}")))?;
        cfg.check()?;
        Ok(cfg)
    }

    fn check(&self) -> Result<()> {
        let p = &self.params;
        let positive = |name: &str, v: Option<f64>| -> Result<()> {
            match v {
                Some(x) if !(x > 0.0 && x.is_finite()) => {
                    Err(Error::Config(format!("`{name}` must be positive and finite, got {x}")))
                }
                _ => Ok(()),
            }
        };
        positive("h", p.h)?;
        positive("beta", p.beta)?;
        for (name, grid) in [("betas", &p.betas), ("time_average_grid", &p.time_average_grid)] {
            if let Some(g) = grid {
                if g.is_empty() || g.iter().any(|x| !(*x > 0.0 && x.is_finite())) {
                    return Err(Error::Config(format!("`{name}` needs positive finite entries")));
                }
                if g.windows(2).any(|w| !(w[1] > w[0])) {
                    return Err(Error::Config(format!("`{name}` must be strictly increasing")));
                }
            }
        }
        if let Some(g) = &p.t_grid {
            if g.is_empty() || g.iter().any(|x| !(*x >= 0.0 && x.is_finite())) || g.windows(2).any(|w| !(w[1] > w[0])) {
                return Err(Error::Config("`t_grid` must be non-negative and strictly increasing".into()));
            }
        }
        if let Some(t) = p.t {
            if !(t >= 0.0 && t.is_finite()) {
                return Err(Error::Config(format!("`t` must be non-negative, got {t}")));
            }
        }
        for (name, v) in [
            ("scale", p.scale),
            ("reference_scale", p.reference_scale),
            ("block_scale", p.block_scale),
            ("window_scale", p.window_scale),
        ] {
            if let Some(a) = v {
                if a < 1 {
                    return Err(Error::Config(format!("`{name}` must be at least 1, got {a}")));
                }
            }
        }
        if matches!(p.n, Some(0)) {
            return Err(Error::Config("`n` must be positive".into()));
        }
        Ok(())
    }
}
