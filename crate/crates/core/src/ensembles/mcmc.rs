//! Metropolis-adjusted Langevin sampling of finite-volume Gibbs positions.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::BoxSystem;
use crate::stats::{integrated_autocorrelation, substream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McmcParams {
    #[serde(default = "default_chains")]
    pub n_chains: usize,
    /// Full-box MALA updates discarded per chain after tuning.
    #[serde(default = "default_burn_in")]
    pub burn_in: usize,
    #[serde(default = "default_pilot")]
    pub pilot: usize,
    #[serde(default = "default_max_thin")]
    pub max_thin: usize,
    /// Use exact Gaussian sampling when the model is quadratic.
    #[serde(default = "default_true")]
    pub exact_gaussian: bool,
}

fn default_chains() -> usize {
    64
}
fn default_burn_in() -> usize {
    10_000
}
fn default_pilot() -> usize {
    2_000
}
fn default_max_thin() -> usize {
    500
}
fn default_true() -> bool {
    true
}

impl Default for McmcParams {
    fn default() -> Self {
        McmcParams {
            n_chains: default_chains(),
            burn_in: default_burn_in(),
            pilot: default_pilot(),
            max_thin: default_max_thin(),
            exact_gaussian: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McmcReport {
    pub acceptance: f64,
    pub step: f64,
    pub burn_in: usize,
    pub thinning: usize,
    pub tau: f64,
    pub chains: usize,
}

const TARGET_LOW: f64 = 0.55;
const TARGET_HIGH: f64 = 0.60;

struct Chain {
    q: Vec<f64>,
    v: f64,
    f: Vec<f64>,
    rng: ChaCha8Rng,
    accepted: u64,
    proposed: u64,
}

struct Target<'a> {
    sys: &'a BoxSystem,
    beta: f64,
    periods: Vec<Option<f64>>,
}

impl Target<'_> {
    fn eval(&self, q: &[f64], f: &mut [f64]) -> f64 {
        self.sys.forces(q, f);
        self.sys.potential_energy(q)
    }

    /// Log proposal density (up to a constant) of landing on `to` from a
    /// Gaussian centred at `mean`; on a circle the Gaussian is wrapped, so
    /// every image within reach contributes.
    fn log_kernel(&self, k: usize, to: f64, mean: f64, eps: f64) -> f64 {
        let d = to - mean;
        match self.periods[k % self.periods.len()] {
            Some(l) => {
                let d = d - l * (d / l).round();
                let reach = (8.0 * eps / l).ceil() as i64 + 1;
                let terms = (-reach..=reach).map(|m| {
                    let x = (d + m as f64 * l) / eps;
                    -0.5 * x * x
                });
                let top = terms.clone().fold(f64::NEG_INFINITY, f64::max);
                top + terms.map(|t| (t - top).exp()).sum::<f64>().ln()
            }
            None => {
                let x = d / eps;
                -0.5 * x * x
            }
        }
    }

    fn step(&self, c: &mut Chain, eps: f64, scratch: &mut (Vec<f64>, Vec<f64>)) {
        let n = c.q.len();
        let (qn, fnew) = scratch;
        let drift = 0.5 * eps * eps * self.beta;
        let mut log_fwd = 0.0;
        for k in 0..n {
            let z: f64 = c.rng.sample(StandardNormal);
            let mean = c.q[k] + drift * c.f[k];
            qn[k] = mean + eps * z;
            if let Some(l) = self.periods[k % self.periods.len()] {
                qn[k] = qn[k].rem_euclid(l);
                log_fwd += self.log_kernel(k, qn[k], mean, eps);
            } else {
                log_fwd -= 0.5 * z * z;
            }
        }
        let vn = self.eval(qn, fnew);
        let mut log_bwd = 0.0;
        for k in 0..n {
            log_bwd += self.log_kernel(k, c.q[k], qn[k] + drift * fnew[k], eps);
        }
        let log_a = -self.beta * (vn - c.v) + log_bwd - log_fwd;
        c.proposed += 1;
        if log_a.is_finite() && c.rng.random::<f64>().ln() < log_a {
            c.q.copy_from_slice(qn);
            c.f.copy_from_slice(fnew);
            c.v = vn;
            c.accepted += 1;
        }
    }
}

/// `n` thinned position samples of `exp(-beta V_Λ)` from `params.n_chains`
/// parallel chains, each on its own random stream.
pub(crate) fn gibbs_positions(
    sys: &BoxSystem,
    beta: f64,
    params: &McmcParams,
    n: usize,
    seed: u64,
) -> Result<(Vec<Vec<f64>>, McmcReport)> {
    let ndof = sys.ndof();
    let model = sys.model();
    let target = Target {
        sys,
        beta,
        periods: (0..sys.site_dim()).map(|c| model.period(c)).collect(),
    };
    let n_chains = params.n_chains.max(1);
    let mut chains: Vec<Chain> = (0..n_chains)
        .map(|k| {
            let mut rng = substream(seed, (1 << 48) + k as u64);
            let q: Vec<f64> = (0..ndof)
                .map(|j| match target.periods[j % target.periods.len()] {
                    Some(l) => rng.random_range(0.0..l),
                    None => 0.1 * rng.sample::<f64, _>(StandardNormal),
                })
                .collect();
            let mut f = vec![0.0; ndof];
            let v = target.eval(&q, &mut f);
            Chain {
                q,
                v,
                f,
                rng,
                accepted: 0,
                proposed: 0,
            }
        })
        .collect();

    let run = |chains: &mut [Chain], steps: usize, eps: f64| {
        chains.par_iter_mut().for_each(|c| {
            let mut scratch = (vec![0.0; ndof], vec![0.0; ndof]);
            for _ in 0..steps {
                target.step(c, eps, &mut scratch);
            }
        });
    };
    let acceptance = |chains: &mut [Chain]| -> f64 {
        let (a, p) = chains
            .iter()
            .fold((0u64, 0u64), |(a, p), c| (a + c.accepted, p + c.proposed));
        for c in chains.iter_mut() {
            c.accepted = 0;
            c.proposed = 0;
        }
        if p == 0 {
            0.0
        } else {
            a as f64 / p as f64
        }
    };

    // tuning: Robbins–Monro on log(step) towards the middle of the window
    let mut eps = (1.0 / (beta * (ndof as f64).cbrt())).sqrt().min(1.0);
    let mut rate = 0.0;
    let mut in_window = 0;
    for round in 0..200 {
        run(&mut chains, 50, eps);
        rate = acceptance(&mut chains);
        if (TARGET_LOW..=TARGET_HIGH).contains(&rate) {
            in_window += 1;
            if in_window >= 3 {
                break;
            }
        } else {
            in_window = 0;
        }
        let gain = 2.0 / (1.0 + round as f64).sqrt();
        eps *= (gain * (rate - 0.575)).exp();
    }
    run(&mut chains, params.burn_in, eps);
    let burn_rate = acceptance(&mut chains);
    if params.burn_in > 0 {
        rate = burn_rate;
    }
    if rate < 0.10 {
        return Err(Error::PoorAcceptance { rate });
    }

    // pilot run for the integrated autocorrelation time of V and q_0
    let pilot = params.pilot.max(100);
    let traces: Vec<(Vec<f64>, Vec<f64>)> = chains
        .par_iter_mut()
        .map(|c| {
            let mut scratch = (vec![0.0; ndof], vec![0.0; ndof]);
            let mut tv = Vec::with_capacity(pilot);
            let mut tq = Vec::with_capacity(pilot);
            for _ in 0..pilot {
                target.step(c, eps, &mut scratch);
                tv.push(c.v);
                tq.push(c.q[0]);
            }
            (tv, tq)
        })
        .collect();
    let _ = acceptance(&mut chains);
    let tau = traces
        .iter()
        .map(|(tv, tq)| integrated_autocorrelation(tv).max(integrated_autocorrelation(tq)))
        .sum::<f64>()
        / traces.len() as f64;
    let thinning = ((2.0 * tau).ceil() as usize).clamp(1, params.max_thin.max(1));

    let per_chain = n.div_ceil(n_chains);
    let collected: Vec<Vec<Vec<f64>>> = chains
        .par_iter_mut()
        .map(|c| {
            let mut scratch = (vec![0.0; ndof], vec![0.0; ndof]);
            let mut out = Vec::with_capacity(per_chain);
            for _ in 0..per_chain {
                for _ in 0..thinning {
                    target.step(c, eps, &mut scratch);
                }
                out.push(c.q.clone());
            }
            out
        })
        .collect();
    let final_rate = acceptance(&mut chains);
    let samples: Vec<Vec<f64>> = collected.into_iter().flatten().take(n).collect();
    Ok((
        samples,
        McmcReport {
            acceptance: final_rate,
            step: eps,
            burn_in: params.burn_in,
            thinning,
            tau,
            chains: n_chains,
        },
    ))
}
