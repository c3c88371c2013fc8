//! Equilibrium identities: the variational gap, the finite-volume Gibbs
//! identity and the vanishing mean of `{E_0, H}` in invariant states.

use serde::{Deserialize, Serialize};

use super::entropy::{entropy_knn, gaussian_entropy, Coordinates, KnnOptions};
use super::pressure::{kinetic_pressure, pressure, PressureCurve, PressureMethod};
use super::{energy_mean, inputs_hash, EnergyFunctional, Method, ThermoReport};
use crate::dynamics::poisson_bracket;
use crate::ensembles::{sample, Ensemble, McmcParams, StateSpec};
use crate::error::{Error, Result};
use crate::model::{box_sites, BoxSystem, LatticeModel};
use crate::stats::{mean_stderr, Estimate};

/// Specific entropy and mean local energy of a translation-invariant state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StateThermo {
    pub s: f64,
    pub s_err: f64,
    pub e0: f64,
    pub e0_err: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapReport {
    pub beta: f64,
    pub p: f64,
    /// `p_β + β⟨E_0⟩ − s`.
    pub gap: f64,
    pub stderr: f64,
    /// `gap >= −3 stderr`.
    pub ok: bool,
}

/// Gap of the variational inequality at `beta`, with the per-site pressure
/// read (and linearly interpolated) from `curve`.
pub fn variational_gap(state: &StateThermo, curve: &PressureCurve, beta: f64) -> Result<GapReport> {
    let p = curve
        .at(beta)
        .ok_or_else(|| Error::InvalidState(format!("beta {beta} is outside the pressure grid")))?;
    let p_err = curve
        .points
        .iter()
        .min_by(|a, b| (a.beta - beta).abs().total_cmp(&(b.beta - beta).abs()))
        .map(|pt| pt.stderr)
        .unwrap_or(0.0);
    let gap = p + beta * state.e0 - state.s;
    let stderr = (p_err.powi(2) + (beta * state.e0_err).powi(2) + state.s_err.powi(2)).sqrt();
    Ok(GapReport {
        beta,
        p,
        gap,
        stderr,
        ok: gap >= -3.0 * stderr - 1e-9 * gap.abs().max(1.0),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GibbsIdentityOptions {
    pub samples: usize,
    pub pressure_samples: usize,
    pub seed: u64,
    pub knn: KnnOptions,
}

impl Default for GibbsIdentityOptions {
    fn default() -> Self {
        GibbsIdentityOptions {
            samples: 100_000,
            pressure_samples: 400_000,
            seed: 1,
            knn: KnnOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GibbsIdentity {
    pub beta: f64,
    pub entropy: ThermoReport,
    pub mean_h: ThermoReport,
    pub pressure: ThermoReport,
    /// `S − β⟨H⟩ − P`.
    pub residual: f64,
    pub stderr: f64,
    pub holds: bool,
}

/// Check `S = β⟨H_Λ⟩ + P_β(H_Λ)` for the Gibbs state on `Λ(a)`.
///
/// Quadratic euclidean models use closed forms for all three terms. Others
/// sample the Gibbs state: `⟨H⟩` is a sample mean, `P` comes from importance
/// sampling and `S` is the nearest-neighbour entropy of the positions plus
/// the exact Gaussian momentum part.
pub fn gibbs_identity_check(
    model: &LatticeModel,
    beta: f64,
    a: i64,
    opts: &GibbsIdentityOptions,
    mcmc: &McmcParams,
) -> Result<GibbsIdentity> {
    let sys = BoxSystem::new(model, &box_sites(model.nu(), a)?)?;
    let n = sys.ndof();
    let desc = format!("gibbs_identity {} beta={beta} a={a}", model.hash());
    let (entropy, mean_h, press) = if model.is_quadratic() && !model.is_torus() {
        let hess = sys.hessian(&vec![0.0; n]);
        let chol = hess
            .clone()
            .cholesky()
            .ok_or_else(|| Error::LinearAlgebra("box Hessian is not positive definite".into()))?;
        let logdet: f64 = 2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>();
        let cov = StateSpec::gibbs(beta)
            .gaussian_covariance(&sys)
            .expect("quadratic euclidean Gibbs state is Gaussian");
        let s = gaussian_entropy(&cov)?;
        // <H> = tr(Hess Σ_q)/2 + tr(Σ_p)/2
        let cq = cov.view((0, 0), (n, n));
        let h = 0.5 * (&hess * cq).trace() + 0.5 * n as f64 / beta;
        let p = kinetic_pressure(n, beta) + kinetic_pressure(n, beta) - 0.5 * logdet;
        (
            ThermoReport::analytic(s, &desc),
            ThermoReport::analytic(h, &desc),
            ThermoReport::analytic(p, &desc),
        )
    } else {
        let spec = StateSpec::GibbsFiniteVolume {
            beta,
            mcmc: mcmc.clone(),
        };
        let ens = sample(&spec, &sys, opts.samples, opts.seed)?;
        let h = energy_mean(&ens, &sys, EnergyFunctional::BoxTotal, &[])?;
        let all: Vec<usize> = (0..sys.n_sites()).collect();
        let mut s = entropy_knn(&ens, &sys, &all, Coordinates::Positions, &opts.knn)?;
        s.value += 0.5 * n as f64 * (1.0 + std::f64::consts::TAU.ln() - beta.ln());
        let p = pressure(
            model,
            beta,
            a,
            PressureMethod::MonteCarlo {
                samples: opts.pressure_samples,
                seed: opts.seed.wrapping_add(1),
            },
        )?;
        (s, h, p.total)
    };
    let residual = entropy.value - beta * mean_h.value - press.value;
    let stderr = (entropy.stderr.powi(2) + (beta * mean_h.stderr).powi(2) + press.stderr.powi(2)).sqrt();
    let holds = if stderr == 0.0 {
        residual.abs() <= 1e-9 * entropy.value.abs().max(1.0)
    } else {
        residual.abs() <= 3.0 * stderr
    };
    Ok(GibbsIdentity {
        beta,
        entropy,
        mean_h,
        pressure: press,
        residual,
        stderr,
        holds,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BracketReport {
    pub estimate: Estimate,
    /// `|mean| / stderr`.
    pub z: f64,
    pub sites: Vec<usize>,
    pub inputs_hash: String,
}

impl BracketReport {
    pub fn is_zero(&self, sigmas: f64) -> bool {
        self.z < sigmas
    }
}

/// Monte-Carlo mean of `{E_i, H}` averaged over the given sites; sites whose
/// terms leave the box are dropped.
pub fn bracket_mean_zero(ens: &Ensemble, sys: &BoxSystem, sites: &[usize]) -> Result<BracketReport> {
    ens.check_system(sys)?;
    let usable: Vec<usize> = sites.iter().copied().filter(|&s| sys.full_instances_at(s).is_ok()).collect();
    if usable.is_empty() {
        return Err(Error::EmptyInterior("bracket sites".into()));
    }
    let m = usable.len() as f64;
    let values = ens.map(|c| {
        usable
            .iter()
            .map(|&s| poisson_bracket(sys, c, s).expect("instances checked"))
            .sum::<f64>()
            / m
    });
    let (mean, se) = mean_stderr(&values);
    let z = if se > 0.0 {
        mean.abs() / se
    } else if mean == 0.0 {
        0.0
    } else {
        f64::INFINITY
    };
    Ok(BracketReport {
        estimate: Estimate {
            value: mean,
            stderr: se,
            n: values.len(),
            seed: ens.seed,
        },
        z,
        inputs_hash: inputs_hash(&format!("bracket {} {} {:?}", ens.model_hash, ens.generator, usable)),
        sites: usable,
    })
}

impl ThermoReport {
    /// Monte-Carlo report from an [`Estimate`].
    pub fn from_estimate(e: &Estimate, inputs: &str) -> Self {
        ThermoReport {
            value: e.value,
            stderr: e.stderr,
            method: Method::MonteCarlo,
            n: e.n,
            seed: e.seed,
            inputs_hash: inputs_hash(inputs),
            flags: Vec::new(),
        }
    }
}
