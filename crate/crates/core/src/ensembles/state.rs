//! State specifications and exact samplers.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::mcmc::{gibbs_positions, McmcParams};
use super::Ensemble;
use crate::dynamics::Configuration;
use crate::error::{Error, Result};
use crate::model::{BoxSystem, PotentialSpec};
use crate::stats::substream;

/// Joint Gaussian law of one `(q, p)` component pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SiteGaussian {
    pub q_var: f64,
    pub p_var: f64,
    #[serde(default)]
    pub qp_cov: f64,
}

impl SiteGaussian {
    pub fn new(q_var: f64, p_var: f64) -> Self {
        SiteGaussian {
            q_var,
            p_var,
            qp_cov: 0.0,
        }
    }

    fn check(&self) -> Result<()> {
        if !(self.q_var > 0.0) || !(self.p_var > 0.0) {
            return Err(Error::InvalidState(format!(
                "variances must be positive, got q {} p {}",
                self.q_var, self.p_var
            )));
        }
        if self.qp_cov * self.qp_cov >= self.q_var * self.p_var {
            return Err(Error::InvalidState("q-p covariance makes the site law singular".into()));
        }
        Ok(())
    }

    fn draw(&self, rng: &mut ChaCha8Rng) -> (f64, f64) {
        let z1: f64 = rng.sample(StandardNormal);
        let z2: f64 = rng.sample(StandardNormal);
        let q = self.q_var.sqrt() * z1;
        let slope = self.qp_cov / self.q_var;
        let resid = (self.p_var - slope * self.qp_cov).sqrt();
        (q, slope * q + resid * z2)
    }
}

/// One-coordinate position law sampled by rejection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SiteDensity {
    /// Density proportional to `exp(-beta W_{{0}}(q))` per component.
    OnsiteBoltzmann { beta: f64 },
    /// Equal mixture of `N(-center, width^2)` and `N(center, width^2)`.
    Bimodal { center: f64, width: f64 },
    /// Uniform on `[-half_width, half_width]`.
    Uniform { half_width: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StateSpec {
    /// i.i.d. Gaussian sites (wrapped on a torus).
    ProductGaussian(SiteGaussian),
    /// Independent Gaussian sites with site-dependent parameters, one entry per
    /// box site. Not translation invariant.
    SiteVarying { sites: Vec<SiteGaussian> },
    /// i.i.d. sites: positions from `q_density`, momenta `N(0, p_var)`.
    ProductCustom { q_density: SiteDensity, p_var: f64 },
    /// Zero-mean Gaussian on the whole box phase space, ordered
    /// `(q_1..q_n, p_1..p_n)` with `n = #Λ · site_dim`.
    BlockGaussian { cov: Vec<Vec<f64>> },
    /// Finite-volume Gibbs state `exp(-beta H_Λ) / Z`.
    GibbsFiniteVolume {
        beta: f64,
        #[serde(default)]
        mcmc: McmcParams,
    },
    /// Deterministic configuration.
    Point { q: Vec<f64>, p: Vec<f64> },
}

impl StateSpec {
    pub fn product_gaussian(q_var: f64, p_var: f64) -> Self {
        StateSpec::ProductGaussian(SiteGaussian::new(q_var, p_var))
    }

    pub fn gibbs(beta: f64) -> Self {
        StateSpec::GibbsFiniteVolume {
            beta,
            mcmc: McmcParams::default(),
        }
    }

    /// Translation-invariant states (product states, and Gibbs states whose
    /// box version is only invariant up to the boundary) return true.
    pub fn is_product(&self) -> bool {
        matches!(self, StateSpec::ProductGaussian(_) | StateSpec::ProductCustom { .. })
    }

    pub fn check(&self, sys: &BoxSystem) -> Result<()> {
        match self {
            StateSpec::ProductGaussian(g) => g.check(),
            StateSpec::SiteVarying { sites } => {
                if sites.len() != sys.n_sites() {
                    return Err(Error::InvalidState(format!(
                        "{} site laws for a box of {} sites",
                        sites.len(),
                        sys.n_sites()
                    )));
                }
                sites.iter().try_for_each(SiteGaussian::check)
            }
            StateSpec::ProductCustom { q_density, p_var } => {
                if !(*p_var > 0.0) {
                    return Err(Error::InvalidState("momentum variance must be positive".into()));
                }
                match q_density {
                    SiteDensity::OnsiteBoltzmann { beta } if !(*beta > 0.0) => {
                        Err(Error::InvalidState(format!("beta must be positive, got {beta}")))
                    }
                    SiteDensity::Bimodal { width, .. } if !(*width > 0.0) => {
                        Err(Error::InvalidState("mixture width must be positive".into()))
                    }
                    SiteDensity::Uniform { half_width } if !(*half_width > 0.0) => {
                        Err(Error::InvalidState("uniform half width must be positive".into()))
                    }
                    _ => Ok(()),
                }
            }
            StateSpec::BlockGaussian { cov } => {
                block_cholesky(cov, 2 * sys.ndof())?;
                Ok(())
            }
            StateSpec::GibbsFiniteVolume { beta, .. } => {
                if !(*beta > 0.0) || !beta.is_finite() {
                    return Err(Error::InvalidState(format!("beta must be positive, got {beta}")));
                }
                Ok(())
            }
            StateSpec::Point { q, p } => {
                if q.len() != sys.ndof() || p.len() != sys.ndof() {
                    return Err(Error::InvalidState("point state has the wrong size".into()));
                }
                Ok(())
            }
        }
    }

    /// Phase-space covariance `(q, p)` when the state is exactly Gaussian on
    /// the box (Euclidean models only).
    pub fn gaussian_covariance(&self, sys: &BoxSystem) -> Option<DMatrix<f64>> {
        if sys.model().is_torus() || self.check(sys).is_err() {
            return None;
        }
        let n = sys.ndof();
        match self {
            StateSpec::ProductGaussian(g) => Some(site_cov(n, &vec![*g; sys.n_sites()], sys.site_dim())),
            StateSpec::SiteVarying { sites } => Some(site_cov(n, sites, sys.site_dim())),
            StateSpec::BlockGaussian { cov } => Some(DMatrix::from_fn(2 * n, 2 * n, |i, j| cov[i][j])),
            StateSpec::GibbsFiniteVolume { beta, .. } if sys.model().is_quadratic() => {
                let h = sys.hessian(&vec![0.0; n]);
                let cq = (h * *beta).try_inverse()?;
                let mut c = DMatrix::zeros(2 * n, 2 * n);
                c.view_mut((0, 0), (n, n)).copy_from(&cq);
                for k in 0..n {
                    c[(n + k, n + k)] = 1.0 / beta;
                }
                Some(c)
            }
            _ => None,
        }
    }
}

fn site_cov(n: usize, sites: &[SiteGaussian], sd: usize) -> DMatrix<f64> {
    let mut c = DMatrix::zeros(2 * n, 2 * n);
    for (s, g) in sites.iter().enumerate() {
        for k in 0..sd {
            let i = s * sd + k;
            c[(i, i)] = g.q_var;
            c[(n + i, n + i)] = g.p_var;
            c[(i, n + i)] = g.qp_cov;
            c[(n + i, i)] = g.qp_cov;
        }
    }
    c
}

fn block_cholesky(cov: &[Vec<f64>], dim: usize) -> Result<DMatrix<f64>> {
    if cov.len() != dim || cov.iter().any(|r| r.len() != dim) {
        return Err(Error::InvalidState(format!("block covariance must be {dim} x {dim}")));
    }
    let m = DMatrix::from_fn(dim, dim, |i, j| cov[i][j]);
    if (&m - m.transpose()).abs().max() > 1e-12 * m.abs().max() {
        return Err(Error::InvalidState("block covariance is not symmetric".into()));
    }
    m.cholesky()
        .map(|c| c.l())
        .ok_or_else(|| Error::InvalidState("block covariance is not positive definite".into()))
}

/// Draw `n` samples of `spec` on the box of `sys`.
pub fn sample(spec: &StateSpec, sys: &BoxSystem, n: usize, seed: u64) -> Result<Ensemble> {
    if n == 0 {
        return Err(Error::InsufficientSamples { have: 0, need: 1 });
    }
    spec.check(sys)?;
    let ndof = sys.ndof();
    let sd = sys.site_dim();
    let generator = generator_id(spec);
    let mut mcmc_report = None;
    let samples: Vec<Configuration> = match spec {
        StateSpec::ProductGaussian(g) => per_sample(n, seed, |rng| {
            let mut c = Configuration {
                q: vec![0.0; ndof],
                p: vec![0.0; ndof],
            };
            for k in 0..ndof {
                let (q, p) = g.draw(rng);
                c.q[k] = q;
                c.p[k] = p;
            }
            c
        }),
        StateSpec::SiteVarying { sites } => per_sample(n, seed, |rng| {
            let mut c = Configuration {
                q: vec![0.0; ndof],
                p: vec![0.0; ndof],
            };
            for k in 0..ndof {
                let (q, p) = sites[k / sd].draw(rng);
                c.q[k] = q;
                c.p[k] = p;
            }
            c
        }),
        StateSpec::ProductCustom { q_density, p_var } => {
            let sampler = RejectionSampler::new(q_density, sys)?;
            let ps = p_var.sqrt();
            per_sample(n, seed, |rng| {
                let q = (0..ndof).map(|k| sampler.draw(rng, k % sd)).collect();
                let p = (0..ndof).map(|_| ps * rng.sample::<f64, _>(StandardNormal)).collect();
                Configuration { q, p }
            })
        }
        StateSpec::BlockGaussian { cov } => {
            let l = block_cholesky(cov, 2 * ndof)?;
            per_sample(n, seed, |rng| {
                let z = DVector::from_fn(2 * ndof, |_, _| rng.sample::<f64, _>(StandardNormal));
                let x = &l * z;
                Configuration {
                    q: x.rows(0, ndof).iter().copied().collect(),
                    p: x.rows(ndof, ndof).iter().copied().collect(),
                }
            })
        }
        StateSpec::GibbsFiniteVolume { beta, mcmc } => {
            let ps = (1.0 / beta).sqrt();
            let positions = if sys.model().is_quadratic() && !sys.model().is_torus() && mcmc.exact_gaussian {
                exact_gaussian_positions(sys, *beta, n, seed)?
            } else {
                let (pos, report) = gibbs_positions(sys, *beta, mcmc, n, seed)?;
                mcmc_report = Some(report);
                pos
            };
            positions
                .into_par_iter()
                .enumerate()
                .map(|(k, q)| {
                    let mut rng = substream(seed, (1 << 40) + k as u64);
                    let p = (0..ndof).map(|_| ps * rng.sample::<f64, _>(StandardNormal)).collect();
                    Configuration { q, p }
                })
                .collect()
        }
        StateSpec::Point { q, p } => vec![Configuration { q: q.clone(), p: p.clone() }; n],
    };
    let mut ens = Ensemble::new(sys, samples, seed, generator);
    ens.mcmc = mcmc_report;
    ens.wrap(sys);
    Ok(ens)
}

fn generator_id(spec: &StateSpec) -> String {
    match spec {
        StateSpec::ProductGaussian(_) => "product_gaussian",
        StateSpec::SiteVarying { .. } => "site_varying",
        StateSpec::ProductCustom { .. } => "product_custom",
        StateSpec::BlockGaussian { .. } => "block_gaussian",
        StateSpec::GibbsFiniteVolume { .. } => "gibbs_finite_volume",
        StateSpec::Point { .. } => "point",
    }
    .to_string()
}

fn per_sample<F>(n: usize, seed: u64, f: F) -> Vec<Configuration>
where
    F: Fn(&mut ChaCha8Rng) -> Configuration + Sync,
{
    (0..n)
        .into_par_iter()
        .map(|k| {
            let mut rng = substream(seed, k as u64);
            f(&mut rng)
        })
        .collect()
}

/// Positions of a quadratic Euclidean model: `q ~ N(0, (beta Hess)^{-1})`.
fn exact_gaussian_positions(sys: &BoxSystem, beta: f64, n: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    let ndof = sys.ndof();
    let h = sys.hessian(&vec![0.0; ndof]) * beta;
    let chol = h
        .cholesky()
        .ok_or_else(|| Error::LinearAlgebra("box Hessian is not positive definite".into()))?;
    let l = chol.l();
    let lt = l.transpose();
    Ok((0..n)
        .into_par_iter()
        .map(|k| {
            let mut rng = substream(seed, k as u64);
            let z = DVector::from_fn(ndof, |_, _| rng.sample::<f64, _>(StandardNormal));
            // solve L^T x = z so that cov(x) = (L L^T)^{-1}
            let x = lt.solve_upper_triangular(&z).expect("triangular factor is invertible");
            x.iter().copied().collect()
        })
        .collect())
}

/// Exact rejection sampler for a one-dimensional density.
struct RejectionSampler {
    density: SiteDensity,
    onsite: PotentialSpec,
    periods: Vec<Option<f64>>,
    /// Gaussian proposal scale (Euclidean case).
    sigma: f64,
    /// log of the envelope constant
    log_m: f64,
    min_w: f64,
}

impl RejectionSampler {
    fn new(density: &SiteDensity, sys: &BoxSystem) -> Result<Self> {
        let model = sys.model();
        let periods: Vec<Option<f64>> = (0..sys.site_dim()).map(|c| model.period(c)).collect();
        let onsite = model.onsite().clone();
        let mut s = RejectionSampler {
            density: density.clone(),
            onsite,
            periods,
            sigma: 1.0,
            log_m: 0.0,
            min_w: 0.0,
        };
        if let SiteDensity::OnsiteBoltzmann { beta } = density {
            // grid scan for the minimum and a proposal scale
            let grid: Vec<f64> = (-4000..=4000).map(|k| k as f64 * 0.005).collect();
            if model.is_torus() {
                let l = s.periods[0].expect("torus period");
                s.min_w = (0..4000)
                    .map(|k| s.onsite.value1(l * k as f64 / 4000.0))
                    .fold(f64::INFINITY, f64::min);
            } else {
                // variance of the target by quadrature
                let logw: Vec<f64> = grid.iter().map(|&x| -beta * s.onsite.value1(x)).collect();
                let mx = logw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let w: Vec<f64> = logw.iter().map(|l| (l - mx).exp()).collect();
                let z: f64 = w.iter().sum();
                let var: f64 = grid.iter().zip(&w).map(|(x, w)| x * x * w).sum::<f64>() / z;
                s.sigma = 2.0 * var.sqrt().max(1e-3);
                // envelope: max of log target - log proposal on a wide grid
                let wide = 40.0 * s.sigma + 10.0;
                s.log_m = (-20000..=20000)
                    .map(|k| {
                        let x = wide * k as f64 / 20000.0;
                        -beta * s.onsite.value1(x) + x * x / (2.0 * s.sigma * s.sigma)
                    })
                    .fold(f64::NEG_INFINITY, f64::max)
                    + 1e-9;
                if !s.log_m.is_finite() {
                    return Err(Error::InvalidState("on-site Boltzmann weight is not normalisable".into()));
                }
            }
        }
        Ok(s)
    }

    fn draw(&self, rng: &mut ChaCha8Rng, component: usize) -> f64 {
        match &self.density {
            SiteDensity::Uniform { half_width } => rng.random_range(-half_width..*half_width),
            SiteDensity::Bimodal { center, width } => {
                let z: f64 = rng.sample(StandardNormal);
                let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
                sign * center + width * z
            }
            SiteDensity::OnsiteBoltzmann { beta } => match self.periods[component] {
                Some(l) => loop {
                    let x = rng.random_range(0.0..l);
                    let log_acc = -beta * (self.onsite.value1(x) - self.min_w);
                    if rng.random::<f64>().ln() < log_acc {
                        break x;
                    }
                },
                None => loop {
                    let x = self.sigma * rng.sample::<f64, _>(StandardNormal);
                    let log_acc =
                        -beta * self.onsite.value1(x) + x * x / (2.0 * self.sigma * self.sigma) - self.log_m;
                    if rng.random::<f64>().ln() < log_acc {
                        break x;
                    }
                },
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{box_sites, reference};
    use crate::stats::mean_stderr;

    fn chain_sys(a: i64) -> BoxSystem {
        BoxSystem::new(&reference::harmonic_chain(), &box_sites(1, a).unwrap()).unwrap()
    }

    #[test]
    fn mismatched_spec_has_no_covariance() {
        let sys = chain_sys(2);
        let spec = StateSpec::SiteVarying {
            sites: vec![SiteGaussian::new(1.0, 1.0); sys.n_sites() + 1],
        };
        assert!(spec.gaussian_covariance(&sys).is_none());
    }

    #[test]
    fn product_gaussian_energy_is_one() {
        let sys = BoxSystem::new(&reference::harmonic_sites(), &box_sites(1, 2).unwrap()).unwrap();
        let ens = sample(&StateSpec::product_gaussian(1.0, 1.0), &sys, 20_000, 3).unwrap();
        let e: Vec<f64> = ens.samples.iter().map(|c| sys.local_energy_ni(&c.q, &c.p, 1)).collect();
        let (m, se) = mean_stderr(&e);
        assert!((m - 1.0).abs() < 4.0 * se, "{m} ± {se}");
    }

    #[test]
    fn sampling_is_deterministic_and_thread_independent() {
        let sys = chain_sys(3);
        let spec = StateSpec::product_gaussian(0.5, 2.0);
        let a = sample(&spec, &sys, 500, 11).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let b = pool.install(|| sample(&spec, &sys, 500, 11).unwrap());
        assert_eq!(a.samples, b.samples);
        let c = sample(&spec, &sys, 500, 12).unwrap();
        assert_ne!(a.samples, c.samples);
    }

    #[test]
    fn correlated_site_law() {
        let sys = chain_sys(1);
        let g = SiteGaussian {
            q_var: 2.0,
            p_var: 1.0,
            qp_cov: 0.8,
        };
        let ens = sample(&StateSpec::ProductGaussian(g), &sys, 40_000, 5).unwrap();
        let qp: Vec<f64> = ens.samples.iter().map(|c| c.q[0] * c.p[0]).collect();
        let pp: Vec<f64> = ens.samples.iter().map(|c| c.p[0] * c.p[0]).collect();
        let (m, se) = mean_stderr(&qp);
        assert!((m - 0.8).abs() < 4.0 * se);
        let (m, se) = mean_stderr(&pp);
        assert!((m - 1.0).abs() < 4.0 * se);
    }

    #[test]
    fn rejection_sampler_matches_quadrature_moments() {
        let sys = BoxSystem::new(&reference::fpu_chain(), &box_sites(1, 1).unwrap()).unwrap();
        let spec = StateSpec::ProductCustom {
            q_density: SiteDensity::OnsiteBoltzmann { beta: 1.0 },
            p_var: 1.0,
        };
        let ens = sample(&spec, &sys, 40_000, 9).unwrap();
        let q2: Vec<f64> = ens.samples.iter().map(|c| c.q[0] * c.q[0]).collect();
        let (m, se) = mean_stderr(&q2);
        // <q^2> under exp(-q^2/2 - q^4/4) by trapezoid quadrature
        let (mut num, mut den) = (0.0, 0.0);
        for k in -20000..=20000 {
            let x = k as f64 * 5e-4;
            let w = (-(0.5 * x * x + 0.25 * x.powi(4))).exp();
            num += x * x * w;
            den += w;
        }
        assert!((m - num / den).abs() < 4.0 * se, "{m} vs {}", num / den);
    }

    #[test]
    fn torus_boltzmann_sites_stay_in_the_fundamental_domain() {
        let sys = BoxSystem::new(&reference::rotator_chain(), &box_sites(1, 2).unwrap()).unwrap();
        let spec = StateSpec::ProductCustom {
            q_density: SiteDensity::OnsiteBoltzmann { beta: 2.0 },
            p_var: 0.5,
        };
        let ens = sample(&spec, &sys, 5000, 1).unwrap();
        assert!(ens.samples.iter().flat_map(|c| &c.q).all(|&x| (0.0..std::f64::consts::TAU).contains(&x)));
        // <cos q> = I1(2)/I0(2)
        let c: Vec<f64> = ens.samples.iter().map(|c| c.q[0].cos()).collect();
        let (m, se) = mean_stderr(&c);
        let ratio = 1.590_636_854_637_329 / 2.279_585_302_336_067;
        assert!((m - ratio).abs() < 4.0 * se, "{m} vs {ratio}");
    }

    #[test]
    fn gaussian_gibbs_matches_inverse_hessian() {
        let sys = chain_sys(3);
        let ens = sample(&StateSpec::gibbs(2.0), &sys, 40_000, 4).unwrap();
        let cov = StateSpec::gibbs(2.0).gaussian_covariance(&sys).unwrap();
        let x: Vec<f64> = ens.samples.iter().map(|c| c.q[2] * c.q[3]).collect();
        let (m, se) = mean_stderr(&x);
        assert!((m - cov[(2, 3)]).abs() < 4.0 * se, "{m} vs {}", cov[(2, 3)]);
        let x: Vec<f64> = ens.samples.iter().map(|c| c.p[1] * c.p[1]).collect();
        let (m, se) = mean_stderr(&x);
        assert!((m - 0.5).abs() < 4.0 * se);
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let sys = chain_sys(2);
        assert!(sample(&StateSpec::product_gaussian(0.0, 1.0), &sys, 10, 0).is_err());
        assert!(sample(&StateSpec::gibbs(-1.0), &sys, 10, 0).is_err());
        let bad = StateSpec::BlockGaussian {
            cov: vec![vec![0.0; 16]; 16],
        };
        assert!(sample(&bad, &sys, 10, 0).is_err());
        assert!(sample(&StateSpec::product_gaussian(1.0, 1.0), &sys, 0, 0).is_err());
    }
}
