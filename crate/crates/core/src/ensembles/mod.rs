//! Monte-Carlo ensembles of box configurations and their transformations.

pub mod io;
mod mcmc;
mod observable;
mod periodize;
mod state;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{evolve, Configuration, IntegratorSchedule};
use crate::error::{Error, Result};
use crate::model::{box_sites, linf_norm, BoxGeometry, BoxSystem};
use crate::stats::{mean_stderr, substream, Estimate};

pub use mcmc::{McmcParams, McmcReport};
pub use observable::{standard_panel, Observable, ObservableKind};
pub use periodize::periodize;
pub use state::{sample, SiteDensity, SiteGaussian, StateSpec};

/// Equally weighted samples on one box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ensemble {
    pub model_hash: String,
    pub nu: usize,
    pub scale: i64,
    pub site_dim: usize,
    pub seed: u64,
    pub generator: String,
    pub samples: Vec<Configuration>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mcmc: Option<McmcReport>,
}

impl Ensemble {
    pub fn new(sys: &BoxSystem, samples: Vec<Configuration>, seed: u64, generator: impl Into<String>) -> Self {
        Ensemble {
            model_hash: sys.model().hash(),
            nu: sys.model().nu(),
            scale: sys.geometry().scale(),
            site_dim: sys.site_dim(),
            seed,
            generator: generator.into(),
            samples,
            mcmc: None,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn geometry(&self) -> BoxGeometry {
        box_sites(self.nu, self.scale).expect("ensemble scale is valid")
    }

    pub(crate) fn wrap(&mut self, sys: &BoxSystem) {
        if sys.model().is_torus() {
            self.samples.par_iter_mut().for_each(|c| c.wrap(sys));
        }
    }

    /// Errors unless the ensemble lives on the box of `sys`.
    pub fn check_system(&self, sys: &BoxSystem) -> Result<()> {
        if self.model_hash != sys.model().hash() {
            return Err(Error::InvalidState(format!(
                "ensemble was drawn for model {} but the system is {}",
                self.model_hash,
                sys.model().hash()
            )));
        }
        if self.scale != sys.geometry().scale() || self.nu != sys.model().nu() {
            return Err(Error::InvalidState("ensemble and system boxes differ".into()));
        }
        Ok(())
    }

    /// Apply `f` to every sample and collect per-sample values.
    pub fn map<F>(&self, f: F) -> Vec<f64>
    where
        F: Fn(&Configuration) -> f64 + Sync + Send,
    {
        self.samples.par_iter().map(f).collect()
    }
}

/// `μ_t^a = μ ∘ (τ_t^a)^{-1}`: every sample moved by the severed flow.
pub fn pushforward(ens: &Ensemble, sys: &BoxSystem, schedule: &IntegratorSchedule) -> Result<Ensemble> {
    ens.check_system(sys)?;
    let samples: Result<Vec<Configuration>> = ens
        .samples
        .par_iter()
        .map(|c| evolve(sys, c, schedule).map(|t| t.last))
        .collect();
    Ok(Ensemble {
        samples: samples?,
        generator: format!("{}∘τ({})", ens.generator, schedule.t_end),
        ..ens.clone()
    })
}

/// `ϑ` applied samplewise.
pub fn reverse(ens: &Ensemble) -> Ensemble {
    Ensemble {
        samples: ens.samples.iter().map(crate::dynamics::time_reverse).collect(),
        ..ens.clone()
    }
}

/// Stratified realisation of `(1/T) ∫_0^T μ_t dt`: sample `k` is evolved to a
/// uniform time in stratum `k mod n_times` of `[0, T]`, with steps no longer
/// than `h`.
pub fn time_average(
    ens: &Ensemble,
    sys: &BoxSystem,
    t_max: f64,
    n_times: usize,
    h: f64,
    seed: u64,
) -> Result<Ensemble> {
    ens.check_system(sys)?;
    if !(t_max >= 0.0) || n_times == 0 {
        return Err(Error::InvalidSchedule("time average needs T >= 0 and at least one stratum".into()));
    }
    let samples: Result<Vec<Configuration>> = ens
        .samples
        .par_iter()
        .enumerate()
        .map(|(k, c)| {
            let mut rng = substream(seed, k as u64);
            let stratum = (k % n_times) as f64;
            let u: f64 = rng.random();
            let t = t_max * (stratum + u) / n_times as f64;
            if t == 0.0 {
                return Ok(c.clone());
            }
            let steps = (t / h).ceil().max(1.0);
            let sched = IntegratorSchedule::new(t / steps, t)?;
            evolve(sys, c, &sched).map(|tr| tr.last)
        })
        .collect();
    Ok(Ensemble {
        samples: samples?,
        seed,
        generator: format!("{}, time average T={t_max}", ens.generator),
        ..ens.clone()
    })
}

/// Sites with `γ(i, Λ^c) > 2 + ceil(t) D`, far enough from the boundary that
/// severing does not reach them by time `t`.
pub fn interior_sites(sys: &BoxSystem, t: f64) -> Vec<usize> {
    let d = sys.model().range().max(1) as u64;
    let min_gamma = 2 + (t.max(0.0).ceil() as u64) * d;
    sys.sites_beyond(min_gamma)
}

/// Per-sample averages of `f(cfg, site)` over `sites`.
pub fn site_averages<F>(ens: &Ensemble, sites: &[usize], f: F) -> Result<Vec<f64>>
where
    F: Fn(&Configuration, usize) -> f64 + Sync + Send,
{
    if sites.is_empty() {
        return Err(Error::EmptyInterior("site average".into()));
    }
    let n = sites.len() as f64;
    Ok(ens.map(|c| sites.iter().map(|&s| f(c, s)).sum::<f64>() / n))
}

/// `M_ζ = ∫ |E_0^{ni}|^ζ dμ`, averaged over `sites` (translation invariance).
pub fn moment_m(ens: &Ensemble, sys: &BoxSystem, zeta: f64, sites: &[usize]) -> Result<Estimate> {
    ens.check_system(sys)?;
    if !(zeta >= 1.0) {
        return Err(Error::InvalidState(format!("moment order must be at least 1, got {zeta}")));
    }
    let v = site_averages(ens, sites, |c, s| sys.local_energy_ni(&c.q, &c.p, s).abs().powf(zeta))?;
    Ok(Estimate::from_values(&v, ens.seed))
}

/// Fraction of samples with `max_i E_i^{ni} / (1+|i|)^r <= c`.
pub fn membership_fraction(ens: &Ensemble, sys: &BoxSystem, r: f64, c: f64) -> Result<f64> {
    ens.check_system(sys)?;
    let w: Vec<f64> = sys
        .geometry()
        .sites()
        .iter()
        .map(|s| (1.0 + linf_norm(s) as f64).powf(r))
        .collect();
    let inside = ens.map(|cfg| {
        let worst = (0..sys.n_sites())
            .map(|s| sys.local_energy_ni(&cfg.q, &cfg.p, s) / w[s])
            .fold(f64::NEG_INFINITY, f64::max);
        if worst <= c {
            1.0
        } else {
            0.0
        }
    });
    Ok(inside.iter().sum::<f64>() / inside.len().max(1) as f64)
}

/// Monte-Carlo mean of `f` averaged over the admissible anchors in `sites`.
pub fn expect(ens: &Ensemble, sys: &BoxSystem, f: &Observable, sites: &[usize]) -> Result<Estimate> {
    ens.check_system(sys)?;
    let anchors = f.admissible_anchors(sys, sites);
    if anchors.is_empty() {
        return Err(Error::EmptyInterior(format!("support of `{}`", f.name)));
    }
    let v = site_averages(ens, &anchors, |c, s| f.eval(sys, c, s))?;
    Ok(Estimate::from_values(&v, ens.seed))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelDistance {
    /// `max_f |E_1 f - E_2 f|`.
    pub distance: f64,
    /// Largest difference in units of the combined standard error.
    pub max_z: f64,
    pub per_observable: Vec<(String, f64, f64)>,
}

/// Distance between two ensembles on the same box over an observable panel.
pub fn observable_distance(
    a: &Ensemble,
    b: &Ensemble,
    sys: &BoxSystem,
    panel: &[Observable],
    sites: &[usize],
) -> Result<PanelDistance> {
    let mut out = PanelDistance {
        distance: 0.0,
        max_z: 0.0,
        per_observable: Vec::with_capacity(panel.len()),
    };
    for f in panel {
        let ea = expect(a, sys, f, sites)?;
        let eb = expect(b, sys, f, sites)?;
        let d = (ea.value - eb.value).abs();
        let z = ea.z_distance(&eb);
        out.distance = out.distance.max(d);
        out.max_z = out.max_z.max(z);
        out.per_observable.push((f.name.clone(), d, z));
    }
    Ok(out)
}

/// Mean and standard error of per-sample values, as an [`Estimate`].
pub fn estimate(values: &[f64], seed: u64) -> Estimate {
    let (m, se) = mean_stderr(values);
    Estimate {
        value: m,
        stderr: se,
        n: values.len(),
        seed,
    }
}
