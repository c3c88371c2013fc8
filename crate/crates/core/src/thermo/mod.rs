//! Energy, entropy and pressure functionals, with the identities that tie
//! them together at equilibrium.

mod entropy;
mod identities;
pub mod kdtree;
mod pressure;
pub mod quadrature;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dynamics::Configuration;
use crate::ensembles::{site_averages, Ensemble};
use crate::error::{Error, Result};
use crate::model::BoxSystem;
use crate::stats::mean_stderr;

pub use entropy::{
    covariance_transport, entropy_analytic, entropy_knn, entropy_knn_points, gaussian_entropy, periodized_entropy_rate,
    specific_entropy, specific_entropy_analytic, subadditivity_analytic, subadditivity_knn, Coordinates, KnnOptions,
    SpecificEntropy, SubadditivityReport, BELOW_FLOOR,
};
pub use identities::{
    bracket_mean_zero, gibbs_identity_check, variational_gap, BracketReport, GapReport, GibbsIdentity,
    GibbsIdentityOptions, StateThermo,
};
pub use pressure::{
    chain_symbol, compatible_beta, compatible_beta_fn, kinetic_pressure, pressure, pressure_curve, spectral_chain_pressure,
    stationary_chain_covariance,
    transfer_integral, Compatibility, PressureCurve, PressureMethod, PressurePoint, PressureReport, TransferIntegral,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Analytic,
    #[serde(rename = "mc")]
    MonteCarlo,
    Quadrature,
    Knn,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThermoReport {
    pub value: f64,
    pub stderr: f64,
    pub method: Method,
    #[serde(rename = "N")]
    pub n: usize,
    pub seed: u64,
    pub inputs_hash: String,
    /// Reported conditions such as applied jitter or a low effective sample size.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flags: Vec<String>,
}

impl ThermoReport {
    pub fn analytic(value: f64, inputs: &str) -> Self {
        ThermoReport {
            value,
            stderr: 0.0,
            method: Method::Analytic,
            n: 0,
            seed: 0,
            inputs_hash: inputs_hash(inputs),
            flags: Vec::new(),
        }
    }

    pub fn has_flag(&self, flag: &str) -> bool {
        self.flags.iter().any(|f| f == flag)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("report serializes")
    }
}

/// First 16 hex digits of the SHA-256 of a description of the inputs.
pub fn inputs_hash(desc: &str) -> String {
    hex::encode(&Sha256::digest(desc.as_bytes())[..8])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnergyFunctional {
    /// `K_i + W_{i}`.
    NonInteracting,
    /// `K_i + sum_{Δ ∋ i} W_Δ / #Δ`.
    Full,
    /// `H_Λ` of the severed box.
    BoxTotal,
}

/// Pointwise energy of one configuration; `site` is ignored for `BoxTotal`.
pub fn energy(sys: &BoxSystem, cfg: &Configuration, functional: EnergyFunctional, site: usize) -> Result<f64> {
    if site >= sys.n_sites() && functional != EnergyFunctional::BoxTotal {
        return Err(Error::SiteOutsideBox(vec![site as i64]));
    }
    Ok(match functional {
        EnergyFunctional::NonInteracting => sys.local_energy_ni(&cfg.q, &cfg.p, site),
        EnergyFunctional::Full => sys.local_energy_full(&cfg.q, &cfg.p, site)?,
        EnergyFunctional::BoxTotal => sys.hamiltonian(&cfg.q, &cfg.p),
    })
}

/// Ensemble mean of the functional averaged over `sites` (ignored for
/// `BoxTotal`).
pub fn energy_mean(
    ens: &Ensemble,
    sys: &BoxSystem,
    functional: EnergyFunctional,
    sites: &[usize],
) -> Result<ThermoReport> {
    ens.check_system(sys)?;
    if functional == EnergyFunctional::Full {
        // surface a too-small box as an error instead of a panic in the map
        for &s in sites {
            sys.full_instances_at(s)?;
        }
    }
    let values = match functional {
        EnergyFunctional::BoxTotal => ens.map(|c| sys.hamiltonian(&c.q, &c.p)),
        EnergyFunctional::NonInteracting => site_averages(ens, sites, |c, s| sys.local_energy_ni(&c.q, &c.p, s))?,
        EnergyFunctional::Full => site_averages(ens, sites, |c, s| {
            sys.local_energy_full(&c.q, &c.p, s).expect("instances checked above")
        })?,
    };
    let (value, stderr) = mean_stderr(&values);
    Ok(ThermoReport {
        value,
        stderr,
        method: Method::MonteCarlo,
        n: values.len(),
        seed: ens.seed,
        inputs_hash: inputs_hash(&format!("energy {:?} {} {} {:?}", functional, ens.model_hash, ens.generator, sites)),
        flags: Vec::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensembles::{sample, StateSpec};
    use crate::model::{box_sites, reference};

    #[test]
    fn zero_configuration_has_zero_energy() {
        for model in reference::all() {
            let sys = BoxSystem::new(&model, &box_sites(model.nu(), 2).unwrap()).unwrap();
            let cfg = Configuration::zeros(&sys);
            for f in [EnergyFunctional::NonInteracting, EnergyFunctional::Full, EnergyFunctional::BoxTotal] {
                let site = sys.geometry().index_of(&vec![0; model.nu()]).unwrap();
                assert_eq!(energy(&sys, &cfg, f, site).unwrap(), 0.0);
            }
        }
    }

    #[test]
    fn three_site_harmonic_chain() {
        // a three-site window of the chain: box (-2, 2] minus its last site is
        // not a box, so check H on Λ(2) with one displaced end site
        let sys = BoxSystem::new(&reference::harmonic_chain(), &box_sites(1, 2).unwrap()).unwrap();
        let mut cfg = Configuration::zeros(&sys);
        cfg.q[0] = 1.0;
        // on-site 1/2 plus one bond 1/4
        assert!((energy(&sys, &cfg, EnergyFunctional::BoxTotal, 0).unwrap() - 0.75).abs() < 1e-15);
    }

    #[test]
    fn box_average_approaches_local_energy() {
        // <H_Λ>/#Λ differs from <E_0> by the severed bonds, a boundary effect
        let model = reference::harmonic_chain();
        let mut gaps = Vec::new();
        for a in [4, 8, 16] {
            let sys = BoxSystem::new(&model, &box_sites(1, a).unwrap()).unwrap();
            let ens = sample(&StateSpec::product_gaussian(1.0, 1.0), &sys, 4000, 5).unwrap();
            let h = energy_mean(&ens, &sys, EnergyFunctional::BoxTotal, &[]).unwrap();
            let origin = sys.geometry().index_of(&[0]).unwrap();
            let e0 = energy_mean(&ens, &sys, EnergyFunctional::Full, &[origin]).unwrap();
            // exact: E_0 = 1 + 2 bonds * 1/2 * 1/2 = 1.5; H/#Λ = 1 + (n-1)/n * 1/2
            let n = sys.n_sites() as f64;
            assert!((h.value / n - (1.0 + 0.5 * (n - 1.0) / n)).abs() < 5.0 * h.stderr / n + 1e-12);
            assert!((e0.value - 1.5).abs() < 5.0 * e0.stderr);
            gaps.push(1.5 - (1.0 + 0.5 * (n - 1.0) / n));
        }
        assert!((gaps[0] / gaps[1] - 2.0).abs() < 1e-12 && (gaps[1] / gaps[2] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn report_json_uses_capital_n() {
        let r = ThermoReport::analytic(1.0, "x");
        assert!(r.to_json().contains("\"N\":0"));
        assert!(r.to_json().contains("\"method\":\"analytic\""));
    }
}
