//! Finite-volume pressure `P_β(H_Λ) = ln ∫ e^{-β H_Λ}`, split into the
//! Gaussian momentum integral and a configurational part.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::quadrature::{gauss_legendre_on, integrate};
use super::{inputs_hash, Method, ThermoReport};
use crate::error::{Error, Result};
use crate::model::{box_sites, BoxSystem, LatticeModel};
use crate::stats::{mean, substream};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// `(n/2) ln(2π/β)` for `n` momentum coordinates.
pub fn kinetic_pressure(n_coords: usize, beta: f64) -> f64 {
    0.5 * n_coords as f64 * (LN_2PI - beta.ln())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PressureMethod {
    /// Importance sampling against a product reference law.
    MonteCarlo { samples: usize, seed: u64 },
    /// Transfer integral on a Gauss–Legendre grid (ν = 1, nearest neighbours).
    Quadrature1D { nodes: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PressureReport {
    pub beta: f64,
    pub sites: usize,
    /// `P_β(H_Λ)` of the whole box.
    pub total: ThermoReport,
    pub kinetic: f64,
    pub potential: ThermoReport,
    /// `P_β(H_Λ) / #Λ`.
    pub per_site: f64,
    pub per_site_stderr: f64,
    /// Infinite-chain value per site, when the method provides it.
    pub limit_per_site: Option<f64>,
    /// `ln Z_Λ − #Λ ln λ_max` for the transfer integral.
    pub boundary_correction: Option<f64>,
    pub ess: Option<f64>,
}

fn check_beta(beta: f64) -> Result<()> {
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(Error::InvalidState(format!("beta must be positive and finite, got {beta}")));
    }
    Ok(())
}

/// Pressure of the severed box `Λ(a)`.
pub fn pressure(model: &LatticeModel, beta: f64, a: i64, method: PressureMethod) -> Result<PressureReport> {
    check_beta(beta)?;
    let sys = BoxSystem::new(model, &box_sites(model.nu(), a)?)?;
    let n = sys.n_sites();
    let kinetic = kinetic_pressure(sys.ndof(), beta);
    let desc = format!("pressure {} beta={beta} a={a} {:?}", model.hash(), method);
    let (potential, limit, boundary, ess) = match method {
        PressureMethod::MonteCarlo { samples, seed } => {
            let (r, ess) = potential_mc(&sys, beta, samples, seed)?;
            (r, None, None, Some(ess))
        }
        PressureMethod::Quadrature1D { nodes } => {
            let ti = transfer_integral(model, beta, nodes)?;
            let lz = ti.log_z(n);
            let mut r = ThermoReport::analytic(lz, &desc);
            r.method = Method::Quadrature;
            r.n = nodes;
            let limit = 0.5 * model.site_dim() as f64 * (LN_2PI - beta.ln()) + ti.log_lambda;
            (r, Some(limit), Some(lz - n as f64 * ti.log_lambda), None)
        }
    };
    let total = ThermoReport {
        value: kinetic + potential.value,
        stderr: potential.stderr,
        method: potential.method,
        n: potential.n,
        seed: potential.seed,
        inputs_hash: inputs_hash(&desc),
        flags: potential.flags.clone(),
    };
    Ok(PressureReport {
        beta,
        sites: n,
        per_site: total.value / n as f64,
        per_site_stderr: total.stderr / n as f64,
        total,
        kinetic,
        potential,
        limit_per_site: limit,
        boundary_correction: boundary,
        ess,
    })
}

/// Product reference law for the configurational integral.
enum Reference {
    Gaussian { sd: f64 },
    Uniform { period: f64 },
}

impl Reference {
    fn for_model(model: &LatticeModel, beta: f64) -> Result<Self> {
        if let Some(l) = model.period(0) {
            return Ok(Reference::Uniform { period: l });
        }
        let c2 = model.onsite().quadratic_coefficient();
        if c2 > 0.0 {
            return Ok(Reference::Gaussian {
                sd: (1.0 / (2.0 * beta * c2)).sqrt(),
            });
        }
        // no quadratic term: match the variance of exp(-β W_0) instead
        let w0 = model.onsite();
        let mut l = 1.0;
        while beta * w0.value1(l).min(w0.value1(-l)) < 80.0 {
            l *= 1.5;
        }
        let z = integrate(|x| (-beta * w0.value1(x)).exp(), -l, l, 400);
        let m2 = integrate(|x| x * x * (-beta * w0.value1(x)).exp(), -l, l, 400);
        Ok(Reference::Gaussian { sd: (m2 / z).sqrt() })
    }

    /// Draw one coordinate and return it with its log density.
    fn draw(&self, rng: &mut impl Rng) -> (f64, f64) {
        match self {
            Reference::Gaussian { sd } => {
                let z: f64 = rng.sample(StandardNormal);
                (sd * z, -0.5 * z * z - sd.ln() - 0.5 * LN_2PI)
            }
            Reference::Uniform { period } => (rng.random_range(0.0..*period), -period.ln()),
        }
    }
}

/// `ln ∫ e^{-β V}` over the box by importance sampling; also returns the
/// effective sample size.
fn potential_mc(sys: &BoxSystem, beta: f64, samples: usize, seed: u64) -> Result<(ThermoReport, f64)> {
    if samples < 2 {
        return Err(Error::InsufficientSamples { have: samples, need: 2 });
    }
    let reference = Reference::for_model(sys.model(), beta)?;
    let ndof = sys.ndof();
    let logw: Vec<f64> = (0..samples)
        .into_par_iter()
        .map(|k| {
            let mut rng = substream(seed, k as u64);
            let mut q = Vec::with_capacity(ndof);
            let mut lg = 0.0;
            for _ in 0..ndof {
                let (x, l) = reference.draw(&mut rng);
                q.push(x);
                lg += l;
            }
            -beta * sys.potential_energy(&q) - lg
        })
        .collect();
    if logw.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidState("non-finite importance weight".into()));
    }
    let m = logw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = logw.iter().map(|l| (l - m).exp()).collect();
    let wbar = mean(&w);
    let w2bar = mean(&w.iter().map(|x| x * x).collect::<Vec<_>>());
    let nf = samples as f64;
    let ess = nf * wbar * wbar / w2bar;
    let var_rel = (w2bar / (wbar * wbar) - 1.0).max(0.0);
    let mut flags = Vec::new();
    if ess < 100.0 {
        flags.push("low_ess".to_string());
    }
    Ok((
        ThermoReport {
            value: m + wbar.ln(),
            stderr: (var_rel / nf).sqrt(),
            method: Method::MonteCarlo,
            n: samples,
            seed,
            inputs_hash: inputs_hash(&format!("potential_mc {} beta={beta} n={samples}", sys.model().hash())),
            flags,
        },
        ess,
    ))
}

/// Discretised transfer operator of a nearest-neighbour chain.
#[derive(Debug, Clone)]
pub struct TransferIntegral {
    pub beta: f64,
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    /// `ln λ_max`: the configurational pressure per site of the infinite chain.
    pub log_lambda: f64,
    kernel: DMatrix<f64>,
    end: DVector<f64>,
}

impl TransferIntegral {
    /// `ln ∫ e^{-β V}` for the open chain of `n` sites.
    pub fn log_z(&self, n: usize) -> f64 {
        let mut v = self.end.clone();
        let mut log_scale = 0.0;
        for _ in 1..n {
            v = &self.kernel * v;
            let s = v.amax();
            v /= s;
            log_scale += s.ln();
        }
        log_scale + v.dot(&self.end).ln()
    }
}

/// Build the symmetric kernel `K(x,y) = exp(-β[W_0(x)/2 + W_0(y)/2 + W(x,y)])`
/// on `nodes` quadrature points.
pub fn transfer_integral(model: &LatticeModel, beta: f64, nodes: usize) -> Result<TransferIntegral> {
    check_beta(beta)?;
    if model.nu() != 1 || model.site_dim() != 1 {
        return Err(Error::Unsupported("transfer integral needs a scalar chain".into()));
    }
    let terms: Vec<_> = model.terms().iter().map(|t| t.canonical(1)).collect();
    if terms.iter().any(|t| t.offsets != vec![vec![0], vec![1]]) {
        return Err(Error::Unsupported("transfer integral needs nearest-neighbour pair terms only".into()));
    }
    if nodes < 8 {
        return Err(Error::InvalidState("transfer integral needs at least 8 nodes".into()));
    }
    let w0 = model.onsite();
    let (x, w) = match model.period(0) {
        // periodic integrand: the trapezoid rule converges spectrally
        Some(l) => (
            (0..nodes).map(|k| l * k as f64 / nodes as f64).collect::<Vec<_>>(),
            vec![l / nodes as f64; nodes],
        ),
        None => {
            let mut l = 1.0;
            while beta * w0.value1(l).min(w0.value1(-l)) < 80.0 {
                l *= 1.25;
            }
            let panels = (nodes / 32).max(1);
            let per = nodes / panels;
            let step = 2.0 * l / panels as f64;
            let mut xs = Vec::with_capacity(nodes);
            let mut ws = Vec::with_capacity(nodes);
            for p in 0..panels {
                let lo = -l + p as f64 * step;
                let (px, pw) = gauss_legendre_on(per, lo, lo + step);
                xs.extend(px);
                ws.extend(pw);
            }
            (xs, ws)
        }
    };
    let m = x.len();
    let pair = |a: f64, b: f64| -> f64 { terms.iter().map(|t| t.body.value(&[a, b], 1)).sum() };
    // symmetrise the pair part too, in case a body is not symmetric
    let kernel = DMatrix::from_fn(m, m, |i, j| {
        let e = 0.5 * w0.value1(x[i]) + 0.5 * w0.value1(x[j]) + 0.5 * (pair(x[i], x[j]) + pair(x[j], x[i]));
        (w[i] * w[j]).sqrt() * (-beta * e).exp()
    });
    let asym = terms
        .iter()
        .any(|t| (t.body.value(&[0.3, -1.1], 1) - t.body.value(&[-1.1, 0.3], 1)).abs() > 1e-12);
    if asym {
        return Err(Error::Unsupported("transfer integral needs symmetric pair terms".into()));
    }
    let eig = SymmetricEigen::new(kernel.clone());
    let lambda = eig.eigenvalues.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(lambda > 0.0) {
        return Err(Error::LinearAlgebra("transfer kernel has no positive eigenvalue".into()));
    }
    let end = DVector::from_fn(m, |i, _| w[i].sqrt() * (-0.5 * beta * w0.value1(x[i])).exp());
    Ok(TransferIntegral {
        beta,
        nodes: x,
        weights: w,
        log_lambda: lambda.ln(),
        kernel,
        end,
    })
}

/// Coefficients `h_d = ∂²V/∂q_0∂q_d`, `d = 0..=R`, of a quadratic scalar chain.
pub fn chain_symbol(model: &LatticeModel) -> Result<Vec<f64>> {
    if model.nu() != 1 || model.site_dim() != 1 || !model.is_quadratic() || model.is_torus() {
        return Err(Error::Unsupported("spectral formulas need a quadratic euclidean scalar chain".into()));
    }
    let r = model.range().max(1);
    let a = 2 * r + 1;
    let sys = BoxSystem::new(model, &box_sites(1, a)?)?;
    let h = sys.hessian(&vec![0.0; sys.ndof()]);
    let c = sys.geometry().index_of(&[0]).expect("origin in box");
    Ok((0..=r as usize).map(|d| h[(c, c + d)]).collect())
}

fn dispersion(h: &[f64], theta: f64) -> f64 {
    h[0] + 2.0 * h[1..].iter().enumerate().map(|(k, v)| v * ((k + 1) as f64 * theta).cos()).sum::<f64>()
}

const SPECTRAL_POINTS: usize = 4096;

/// Per-site pressure of the infinite quadratic chain,
/// `ln(2π/β) − (1/4π) ∫ ln ω²(θ) dθ`.
pub fn spectral_chain_pressure(model: &LatticeModel, beta: f64) -> Result<f64> {
    check_beta(beta)?;
    let h = chain_symbol(model)?;
    let mut acc = 0.0;
    for k in 0..SPECTRAL_POINTS {
        let w2 = dispersion(&h, std::f64::consts::TAU * k as f64 / SPECTRAL_POINTS as f64);
        if !(w2 > 0.0) {
            return Err(Error::LinearAlgebra("dispersion relation is not positive".into()));
        }
        acc += w2.ln();
    }
    Ok(LN_2PI - beta.ln() - 0.5 * acc / SPECTRAL_POINTS as f64)
}

/// Phase-space covariance `(q, p)` of the infinite-chain Gibbs state restricted
/// to `n` consecutive sites.
pub fn stationary_chain_covariance(model: &LatticeModel, beta: f64, n: usize) -> Result<DMatrix<f64>> {
    check_beta(beta)?;
    let h = chain_symbol(model)?;
    let corr: Vec<f64> = (0..n)
        .map(|d| {
            let mut acc = 0.0;
            for k in 0..SPECTRAL_POINTS {
                let t = std::f64::consts::TAU * k as f64 / SPECTRAL_POINTS as f64;
                acc += (d as f64 * t).cos() / dispersion(&h, t);
            }
            acc / (beta * SPECTRAL_POINTS as f64)
        })
        .collect();
    let mut c = DMatrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        for j in 0..n {
            c[(i, j)] = corr[i.abs_diff(j)];
        }
        c[(n + i, n + i)] = 1.0 / beta;
    }
    Ok(c)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PressurePoint {
    pub beta: f64,
    /// Per site.
    pub p: f64,
    pub p_kin: f64,
    pub p_pot: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PressureCurve {
    pub model_hash: String,
    pub scale: i64,
    pub method: PressureMethod,
    pub points: Vec<PressurePoint>,
}

impl PressureCurve {
    /// Smallest second divided difference `p[β1,β2,β3]·2`; convexity means
    /// this is not negative.
    pub fn min_second_difference(&self) -> f64 {
        self.points
            .windows(3)
            .map(|w| {
                let d1 = (w[1].p - w[0].p) / (w[1].beta - w[0].beta);
                let d2 = (w[2].p - w[1].p) / (w[2].beta - w[1].beta);
                2.0 * (d2 - d1) / (w[2].beta - w[0].beta)
            })
            .fold(f64::INFINITY, f64::min)
    }

    pub fn is_convex(&self, tol: f64) -> bool {
        self.min_second_difference() >= -tol
    }

    /// `(β_mid, −Δp/Δβ)` per grid interval.
    pub fn mean_energies(&self) -> Vec<(f64, f64)> {
        self.points
            .windows(2)
            .map(|w| (0.5 * (w[0].beta + w[1].beta), -(w[1].p - w[0].p) / (w[1].beta - w[0].beta)))
            .collect()
    }

    /// Linear interpolation of the per-site pressure; `None` off the grid.
    pub fn at(&self, beta: f64) -> Option<f64> {
        for w in self.points.windows(2) {
            if beta >= w[0].beta && beta <= w[1].beta {
                let t = (beta - w[0].beta) / (w[1].beta - w[0].beta);
                return Some(w[0].p + t * (w[1].p - w[0].p));
            }
        }
        self.points.iter().find(|p| p.beta == beta).map(|p| p.p)
    }

    pub fn to_csv(&self) -> String {
        use std::fmt::Write as _;
        let mut out = String::new();
        let _ = writeln!(out, "# model_hash={} scale={} method={:?}", self.model_hash, self.scale, self.method);
        let _ = writeln!(out, "beta,p,p_kin,p_pot,stderr");
        for p in &self.points {
            let _ = writeln!(out, "{},{:e},{:e},{:e},{:e}", p.beta, p.p, p.p_kin, p.p_pot, p.stderr);
        }
        out
    }
}

/// Per-site pressure on a β grid. Monte-Carlo points share their random
/// numbers across β, which keeps the curve smooth.
pub fn pressure_curve(model: &LatticeModel, betas: &[f64], a: i64, method: PressureMethod) -> Result<PressureCurve> {
    if betas.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidState("beta grid must be strictly increasing".into()));
    }
    let mut points = Vec::with_capacity(betas.len());
    for &b in betas {
        let r = pressure(model, b, a, method)?;
        let n = r.sites as f64;
        points.push(PressurePoint {
            beta: b,
            p: r.per_site,
            p_kin: r.kinetic / n,
            p_pot: r.potential.value / n,
            stderr: r.per_site_stderr,
        });
    }
    Ok(PressureCurve {
        model_hash: model.hash(),
        scale: a,
        method,
        points,
    })
}

/// Where a target mean energy sits relative to `−p'` on the available range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Compatibility {
    Beta { beta: f64 },
    /// Needs a larger β than available (or none exists).
    EnergyTooLow,
    /// Needs a smaller β than available.
    EnergyTooHigh,
}

/// Solve `−p'(β) = e` on a tabulated curve, with `−p'` linear between
/// interval midpoints.
pub fn compatible_beta(curve: &PressureCurve, e: f64) -> Compatibility {
    let d = curve.mean_energies();
    if d.is_empty() {
        return Compatibility::EnergyTooLow;
    }
    if e > d[0].1 {
        return Compatibility::EnergyTooHigh;
    }
    if e < d[d.len() - 1].1 {
        return Compatibility::EnergyTooLow;
    }
    if d.len() == 1 {
        return Compatibility::Beta { beta: d[0].0 };
    }
    let f = |beta: f64| -> f64 {
        let k = d.iter().rposition(|(b, _)| *b <= beta).unwrap_or(0).min(d.len() - 2);
        let (b0, e0) = d[k];
        let (b1, e1) = d[k + 1];
        e0 + (beta - b0) / (b1 - b0) * (e1 - e0)
    };
    let (mut lo, mut hi) = (d[0].0, d[d.len() - 1].0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > e {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Compatibility::Beta { beta: 0.5 * (lo + hi) }
}

/// Solve `−p'(β) = e` for a pressure function on `[lo, hi]`, with central
/// differences and bisection in `ln β`.
pub fn compatible_beta_fn(p: impl Fn(f64) -> f64, e: f64, lo: f64, hi: f64) -> Compatibility {
    let energy = |b: f64| {
        let h = 1e-5 * b;
        -(p(b + h) - p(b - h)) / (2.0 * h)
    };
    if e > energy(lo) {
        return Compatibility::EnergyTooHigh;
    }
    if e < energy(hi) {
        return Compatibility::EnergyTooLow;
    }
    let (mut a, mut b) = (lo.ln(), hi.ln());
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if energy(m.exp()) > e {
            a = m;
        } else {
            b = m;
        }
    }
    Compatibility::Beta {
        beta: (0.5 * (a + b)).exp(),
    }
}
