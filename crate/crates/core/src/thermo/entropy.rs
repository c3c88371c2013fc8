//! Differential entropy: closed forms for Gaussian and product states, the
//! Kozachenko–Leonenko nearest-neighbour estimator, and the finite-volume
//! identities built on them.

use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::kdtree::KdTree;
use super::quadrature::integrate;
use super::{inputs_hash, Method, ThermoReport};
use crate::dynamics::{Configuration, IntegratorSchedule, Stepper};
use crate::ensembles::{Ensemble, SiteDensity, StateSpec};
use crate::error::{Error, Result};
use crate::model::{box_sites, BoxSystem, LatticeModel};
use crate::stats::{bootstrap_stderr, digamma, mean, substream, variance};

/// Per-site entropies below this many nats are reported as "below floor":
/// the estimator cannot tell them apart from minus infinity.
pub const BELOW_FLOOR: f64 = -50.0;

const HALF_LN_2PI_E: f64 = 1.418_938_533_204_672_8;

/// `½ ln((2πe)^n det Σ)`.
pub fn gaussian_entropy(cov: &DMatrix<f64>) -> Result<f64> {
    let n = cov.nrows();
    let chol = cov
        .clone()
        .cholesky()
        .ok_or_else(|| Error::LinearAlgebra("covariance is not positive definite".into()))?;
    let logdet: f64 = 2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    Ok(n as f64 * HALF_LN_2PI_E + 0.5 * logdet)
}

/// Exact finite-volume entropy of a Gaussian or product state on the box.
pub fn entropy_analytic(spec: &StateSpec, sys: &BoxSystem) -> Result<ThermoReport> {
    spec.check(sys)?;
    let desc = format!("entropy_analytic {} {:?} {:?}", sys.model().hash(), sys.geometry().scale(), spec);
    if let Some(cov) = spec.gaussian_covariance(sys) {
        return Ok(ThermoReport::analytic(gaussian_entropy(&cov)?, &desc));
    }
    let ndof = sys.ndof() as f64;
    match spec {
        StateSpec::ProductCustom { q_density, p_var } => {
            let sq = site_entropy_1d(q_density, sys.model())?;
            let sp = HALF_LN_2PI_E + 0.5 * p_var.ln();
            Ok(ThermoReport::analytic(ndof * (sq + sp), &desc))
        }
        StateSpec::Point { .. } => Err(Error::Unsupported(
            "a point state has no density; its entropy is minus infinity".into(),
        )),
        _ => Err(Error::Unsupported(format!(
            "no closed-form entropy for this state on `{}` space",
            if sys.model().is_torus() { "torus" } else { "euclidean" }
        ))),
    }
}

/// Entropy of one position coordinate under `density`, by quadrature.
fn site_entropy_1d(density: &SiteDensity, model: &LatticeModel) -> Result<f64> {
    match density {
        SiteDensity::Uniform { half_width } => {
            if let Some(l) = model.period(0) {
                if 2.0 * half_width > l {
                    return Err(Error::Unsupported("uniform law wider than the period".into()));
                }
            }
            Ok((2.0 * half_width).ln())
        }
        SiteDensity::Bimodal { center, width } => {
            if model.is_torus() {
                return Err(Error::Unsupported("wrapped bimodal law has no closed form".into()));
            }
            let (c, w) = (center.abs(), *width);
            let norm = 1.0 / (w * std::f64::consts::TAU.sqrt());
            let rho = |x: f64| {
                0.5 * norm * ((-0.5 * ((x - c) / w).powi(2)).exp() + (-0.5 * ((x + c) / w).powi(2)).exp())
            };
            let lo = -c - 14.0 * w;
            let panels = 16;
            let step = 2.0 * (c + 14.0 * w) / panels as f64;
            let mut s = 0.0;
            for k in 0..panels {
                let a = lo + k as f64 * step;
                s += integrate(
                    |x| {
                        let r = rho(x);
                        if r > 0.0 {
                            -r * r.ln()
                        } else {
                            0.0
                        }
                    },
                    a,
                    a + step,
                    64,
                );
            }
            Ok(s)
        }
        SiteDensity::OnsiteBoltzmann { beta } => {
            let w0 = model.onsite();
            let (lo, hi) = match model.period(0) {
                Some(l) => (0.0, l),
                None => {
                    let mut l = 1.0;
                    while beta * w0.value1(l).min(w0.value1(-l)) < 80.0 {
                        l *= 1.5;
                    }
                    (-l, l)
                }
            };
            let panels = 16;
            let step = (hi - lo) / panels as f64;
            let mut z = 0.0;
            let mut e = 0.0;
            for k in 0..panels {
                let a = lo + k as f64 * step;
                z += integrate(|x| (-beta * w0.value1(x)).exp(), a, a + step, 64);
                e += integrate(|x| w0.value1(x) * (-beta * w0.value1(x)).exp(), a, a + step, 64);
            }
            Ok(z.ln() + beta * e / z)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KnnOptions {
    pub k: usize,
    pub bootstrap: usize,
    pub min_samples: usize,
    /// Jitter amplitude relative to each coordinate's spread, used only when
    /// duplicate points make a neighbour distance vanish.
    pub jitter: f64,
    pub dim_cap: usize,
}

impl Default for KnnOptions {
    fn default() -> Self {
        KnnOptions {
            k: 4,
            bootstrap: 200,
            min_samples: 10_000,
            jitter: 1e-12,
            dim_cap: 12,
        }
    }
}

/// Which coordinates of the window enter the estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Coordinates {
    Phase,
    Positions,
    Momenta,
}

struct KnnTerms {
    /// `d ln(2 r_i)` per point.
    terms: Vec<f64>,
    /// `ψ(N) − ψ(k)`.
    offset: f64,
    jittered: bool,
}

fn knn_terms(points: &[f64], dim: usize, periods: &[Option<f64>], opts: &KnnOptions, seed: u64) -> Result<KnnTerms> {
    if dim == 0 || points.len() % dim != 0 {
        return Err(Error::InvalidState("point buffer does not match the dimension".into()));
    }
    if dim > opts.dim_cap {
        return Err(Error::DimensionCap { dim, cap: opts.dim_cap });
    }
    let n = points.len() / dim;
    let need = opts.min_samples.max(opts.k + 1);
    if n < need {
        return Err(Error::InsufficientSamples { have: n, need });
    }
    let distances = |pts: &[f64]| -> Vec<f64> {
        let tree = KdTree::new(pts, dim, periods.to_vec());
        (0..n).into_par_iter().map(|i| tree.kth_distance(i, opts.k)).collect()
    };
    let mut r = distances(points);
    let mut jittered = false;
    if has_duplicates(points, dim) || r.iter().any(|&x| x <= 0.0) {
        // ties: perturb deterministically at a tiny relative scale
        jittered = true;
        let mut pts = points.to_vec();
        let mut rng = substream(seed, u64::MAX - 7);
        for c in 0..dim {
            let col: Vec<f64> = (0..n).map(|i| points[i * dim + c]).collect();
            let scale = variance(&col).sqrt().max(f64::MIN_POSITIVE.sqrt());
            for i in 0..n {
                let v = &mut pts[i * dim + c];
                *v += opts.jitter * scale * rng.random_range(-1.0..1.0);
                if let Some(l) = periods[c] {
                    *v = v.rem_euclid(l);
                }
            }
        }
        r = distances(&pts);
        if r.iter().any(|&x| x <= 0.0) {
            return Err(Error::InvalidState("neighbour distances vanish even after jitter".into()));
        }
    }
    let d = dim as f64;
    Ok(KnnTerms {
        terms: r.iter().map(|x| d * (2.0 * x).ln()).collect(),
        offset: digamma(n as f64) - digamma(opts.k as f64),
        jittered,
    })
}

fn has_duplicates(points: &[f64], dim: usize) -> bool {
    let n = points.len() / dim;
    let row = |i: usize| &points[i * dim..(i + 1) * dim];
    let mut order: Vec<usize> = (0..n).collect();
    order.par_sort_unstable_by(|&a, &b| {
        row(a)
            .iter()
            .zip(row(b))
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    order.windows(2).any(|w| row(w[0]) == row(w[1]))
}

/// Kozachenko–Leonenko estimate (max norm) of the entropy of row-major
/// `points`. Periodic coordinates must already lie in `[0, L)`.
pub fn entropy_knn_points(
    points: &[f64],
    dim: usize,
    periods: &[Option<f64>],
    opts: &KnnOptions,
    seed: u64,
) -> Result<ThermoReport> {
    let t = knn_terms(points, dim, periods, opts, seed)?;
    let mut flags = Vec::new();
    if t.jittered {
        flags.push("jitter".to_string());
    }
    Ok(ThermoReport {
        value: t.offset + mean(&t.terms),
        stderr: bootstrap_stderr(&t.terms, opts.bootstrap, seed),
        method: Method::Knn,
        n: t.terms.len(),
        seed,
        inputs_hash: inputs_hash(&format!("knn dim={dim} n={} k={} seed={seed}", t.terms.len(), opts.k)),
        flags,
    })
}

/// Extract the chosen coordinates of `sites` from every sample, row-major,
/// with the period of each column.
fn window_points(ens: &Ensemble, sys: &BoxSystem, sites: &[usize], coords: Coordinates) -> (Vec<f64>, Vec<Option<f64>>) {
    let sd = sys.site_dim();
    let model = sys.model();
    let mut periods = Vec::new();
    let take_q = coords != Coordinates::Momenta;
    let take_p = coords != Coordinates::Positions;
    if take_q {
        for _ in sites {
            periods.extend((0..sd).map(|c| model.period(c)));
        }
    }
    if take_p {
        periods.extend(std::iter::repeat_n(None, sites.len() * sd));
    }
    let mut pts = Vec::with_capacity(ens.len() * periods.len());
    for cfg in &ens.samples {
        if take_q {
            for &s in sites {
                pts.extend((0..sd).map(|c| model.wrap(c, cfg.q[s * sd + c])));
            }
        }
        if take_p {
            for &s in sites {
                pts.extend_from_slice(&cfg.p[s * sd..(s + 1) * sd]);
            }
        }
    }
    (pts, periods)
}

/// Nearest-neighbour entropy of the marginal of `ens` on the window `sites`.
pub fn entropy_knn(
    ens: &Ensemble,
    sys: &BoxSystem,
    sites: &[usize],
    coords: Coordinates,
    opts: &KnnOptions,
) -> Result<ThermoReport> {
    ens.check_system(sys)?;
    if sites.is_empty() {
        return Err(Error::EmptyInterior("entropy window".into()));
    }
    let (pts, periods) = window_points(ens, sys, sites, coords);
    let mut r = entropy_knn_points(&pts, periods.len(), &periods, opts, ens.seed)?;
    r.inputs_hash = inputs_hash(&format!(
        "entropy_knn {} {} {:?} {:?} k={} n={}",
        ens.model_hash,
        ens.generator,
        sites,
        coords,
        opts.k,
        ens.len()
    ));
    if r.value / (sites.len() as f64) < BELOW_FLOOR {
        r.flags.push("below_floor".to_string());
    }
    Ok(r)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpecificEntropy {
    pub scales: Vec<i64>,
    pub sites: Vec<usize>,
    /// `S_{Λ(a)} / #Λ(a)` per scale.
    pub per_site: Vec<f64>,
    pub last: f64,
    /// Largest excess of an element over the running infimum before it.
    pub max_excess: f64,
    pub fekete_ok: bool,
}

/// Per-site sequence from box entropies and the near-monotone check.
pub fn specific_entropy(scales: &[i64], sites: &[usize], totals: &[f64], tol: f64) -> SpecificEntropy {
    let per_site: Vec<f64> = totals.iter().zip(sites).map(|(s, &n)| s / n as f64).collect();
    let mut inf = f64::INFINITY;
    let mut max_excess: f64 = 0.0;
    for &v in &per_site {
        if inf.is_finite() {
            max_excess = max_excess.max(v - inf);
        }
        inf = inf.min(v);
    }
    SpecificEntropy {
        scales: scales.to_vec(),
        sites: sites.to_vec(),
        last: per_site.last().copied().unwrap_or(f64::NAN),
        per_site,
        max_excess,
        fekete_ok: max_excess <= tol,
    }
}

/// Analytic specific-entropy sequence for a state family given per box.
pub fn specific_entropy_analytic<F>(
    model: &LatticeModel,
    scales: &[i64],
    make_spec: F,
    tol: f64,
) -> Result<(ThermoReport, SpecificEntropy)>
where
    F: Fn(&BoxSystem) -> Result<StateSpec>,
{
    let mut totals = Vec::with_capacity(scales.len());
    let mut sites = Vec::with_capacity(scales.len());
    for &a in scales {
        let sys = BoxSystem::new(model, &box_sites(model.nu(), a)?)?;
        let spec = make_spec(&sys)?;
        totals.push(entropy_analytic(&spec, &sys)?.value);
        sites.push(sys.n_sites());
    }
    let seq = specific_entropy(scales, &sites, &totals, tol);
    let mut report = ThermoReport::analytic(seq.last, &format!("specific_entropy {} {:?}", model.hash(), scales));
    if !seq.fekete_ok {
        report.flags.push("not_monotone".into());
    }
    if seq.last < BELOW_FLOOR {
        report.flags.push("below_floor".into());
    }
    Ok((report, seq))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubadditivityReport {
    pub joint: f64,
    pub part_a: f64,
    pub part_b: f64,
    /// `S_a + S_b − S_joint`.
    pub mutual_information: f64,
    pub stderr: f64,
    /// `S_joint <= S_a + S_b` within three standard errors.
    pub holds: bool,
    /// Mutual information indistinguishable from zero.
    pub independent: bool,
}

fn check_split(dim: usize, a: &[usize], b: &[usize]) -> Result<()> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::InvalidState("both parts of the split need coordinates".into()));
    }
    let mut seen = vec![false; dim];
    for &i in a.iter().chain(b) {
        if i >= dim || seen[i] {
            return Err(Error::InvalidState(format!("split index {i} repeated or out of range")));
        }
        seen[i] = true;
    }
    Ok(())
}

fn sub_cov(cov: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(idx.len(), idx.len(), |i, j| cov[(idx[i], idx[j])])
}

/// Exact check on a Gaussian law; `a` and `b` are disjoint coordinate sets.
pub fn subadditivity_analytic(cov: &DMatrix<f64>, a: &[usize], b: &[usize]) -> Result<SubadditivityReport> {
    check_split(cov.nrows(), a, b)?;
    let ab: Vec<usize> = a.iter().chain(b).copied().collect();
    let joint = gaussian_entropy(&sub_cov(cov, &ab))?;
    let sa = gaussian_entropy(&sub_cov(cov, a))?;
    let sb = gaussian_entropy(&sub_cov(cov, b))?;
    let independent = a.iter().all(|&i| b.iter().all(|&j| cov[(i, j)] == 0.0));
    let mi = sa + sb - joint;
    let slack = 1e-12 * (sa.abs() + sb.abs()).max(1.0);
    Ok(SubadditivityReport {
        joint,
        part_a: sa,
        part_b: sb,
        mutual_information: if independent { 0.0 } else { mi },
        stderr: 0.0,
        holds: mi >= -slack,
        independent,
    })
}

/// Nearest-neighbour check on samples. The error bar of the mutual
/// information comes from a bootstrap of the paired per-point terms.
pub fn subadditivity_knn(
    points: &[f64],
    dim: usize,
    a: &[usize],
    b: &[usize],
    opts: &KnnOptions,
    seed: u64,
) -> Result<SubadditivityReport> {
    check_split(dim, a, b)?;
    let n = points.len() / dim.max(1);
    let project = |idx: &[usize]| -> Vec<f64> {
        let mut out = Vec::with_capacity(n * idx.len());
        for r in 0..n {
            out.extend(idx.iter().map(|&c| points[r * dim + c]));
        }
        out
    };
    let ab: Vec<usize> = a.iter().chain(b).copied().collect();
    let tj = knn_terms(&project(&ab), ab.len(), &vec![None; ab.len()], opts, seed)?;
    let ta = knn_terms(&project(a), a.len(), &vec![None; a.len()], opts, seed)?;
    let tb = knn_terms(&project(b), b.len(), &vec![None; b.len()], opts, seed)?;
    let joint = tj.offset + mean(&tj.terms);
    let sa = ta.offset + mean(&ta.terms);
    let sb = tb.offset + mean(&tb.terms);
    let paired: Vec<f64> = (0..n).map(|i| ta.terms[i] + tb.terms[i] - tj.terms[i]).collect();
    let se = bootstrap_stderr(&paired, opts.bootstrap, seed);
    let mi = sa + sb - joint;
    Ok(SubadditivityReport {
        joint,
        part_a: sa,
        part_b: sb,
        mutual_information: mi,
        stderr: se,
        holds: mi >= -3.0 * se,
        independent: mi.abs() <= 3.0 * se,
    })
}

/// Transport a phase-space covariance `(q, p)` through the severed flow of a
/// quadratic model. One Störmer–Verlet step is linear there, so `Σ_t = M^N Σ
/// (M^N)^T` with `M` read off column by column.
pub fn covariance_transport(sys: &BoxSystem, cov: &DMatrix<f64>, schedule: &IntegratorSchedule) -> Result<DMatrix<f64>> {
    if !sys.model().is_quadratic() || sys.model().is_torus() {
        return Err(Error::Unsupported("covariance transport needs a quadratic euclidean model".into()));
    }
    let n = sys.ndof();
    if cov.nrows() != 2 * n || cov.ncols() != 2 * n {
        return Err(Error::InvalidState(format!("covariance must be {0} x {0}", 2 * n)));
    }
    let one_step = |x: &[f64]| -> Vec<f64> {
        let mut c = Configuration {
            q: x[..n].to_vec(),
            p: x[n..].to_vec(),
        };
        Stepper::new(sys).step(&mut c, schedule.h);
        c.q.into_iter().chain(c.p).collect()
    };
    let base = one_step(&vec![0.0; 2 * n]);
    let mut m = DMatrix::zeros(2 * n, 2 * n);
    for k in 0..2 * n {
        let mut e = vec![0.0; 2 * n];
        e[k] = 1.0;
        let col = one_step(&e);
        for r in 0..2 * n {
            m[(r, k)] = col[r] - base[r];
        }
    }
    let mut steps = schedule.steps()?;
    let mut power = DMatrix::identity(2 * n, 2 * n);
    let mut sq = m;
    while steps > 0 {
        if steps & 1 == 1 {
            power = &sq * &power;
        }
        sq = &sq * &sq;
        steps >>= 1;
    }
    Ok(&power * cov * power.transpose())
}

/// Per-site entropy of the periodized Gaussian block, from window entropies.
///
/// For a fixed shift the restriction of the periodic tiling to `Λ(a n)` is a
/// product of block marginals, so for odd `n` its entropy is a polynomial of
/// degree `ν` in `n` whose leading coefficient is `S_block` (per tile). The
/// `ν`-th difference with step 2 recovers it. Returns the mean over shifts
/// and the largest deviation of one shift from that mean.
pub fn periodized_entropy_rate(block_cov: &DMatrix<f64>, nu: usize, a: i64, site_dim: usize) -> Result<(f64, f64)> {
    let gb = box_sites(nu, a)?;
    let nb = gb.len() * site_dim;
    if block_cov.nrows() != 2 * nb || block_cov.ncols() != 2 * nb {
        return Err(Error::InvalidState(format!("block covariance must be {0} x {0}", 2 * nb)));
    }
    let side = 2 * a;
    let shift_rates: Vec<f64> = gb
        .sites()
        .par_iter()
        .map(|j| -> Result<f64> {
            let mut s = Vec::with_capacity(nu + 1);
            for k in 0..=nu {
                let m = a * (1 + 2 * k as i64);
                let gw = box_sites(nu, m)?;
                let nw = gw.len() * site_dim;
                let mut tile = Vec::with_capacity(gw.len());
                let mut local = Vec::with_capacity(gw.len());
                for x in gw.sites() {
                    let mut z = Vec::with_capacity(nu);
                    let mut l = Vec::with_capacity(nu);
                    for c in 0..nu {
                        let u = x[c] - j[c];
                        let zc = (u + a - 1).div_euclid(side);
                        z.push(zc);
                        l.push(u - side * zc);
                    }
                    tile.push(z);
                    local.push(gb.index_of(&l).expect("local site inside the block"));
                }
                let mut cov = DMatrix::zeros(2 * nw, 2 * nw);
                for x in 0..gw.len() {
                    for y in 0..gw.len() {
                        if tile[x] != tile[y] {
                            continue;
                        }
                        for c in 0..site_dim {
                            for d in 0..site_dim {
                                let (bx, by) = (local[x] * site_dim + c, local[y] * site_dim + d);
                                let (wx, wy) = (x * site_dim + c, y * site_dim + d);
                                cov[(wx, wy)] = block_cov[(bx, by)];
                                cov[(wx, nw + wy)] = block_cov[(bx, nb + by)];
                                cov[(nw + wx, wy)] = block_cov[(nb + bx, by)];
                                cov[(nw + wx, nw + wy)] = block_cov[(nb + bx, nb + by)];
                            }
                        }
                    }
                }
                s.push(gaussian_entropy(&cov)?);
            }
            // ν-th forward difference
            let mut diff = s;
            for _ in 0..nu {
                diff = diff.windows(2).map(|w| w[1] - w[0]).collect();
            }
            let fact: f64 = (1..=nu).map(|i| i as f64).product();
            Ok(diff[0] / (fact * 2f64.powi(nu as i32) * gb.len() as f64))
        })
        .collect::<Result<_>>()?;
    let rate = mean(&shift_rates);
    let spread = shift_rates.iter().map(|r| (r - rate).abs()).fold(0.0, f64::max);
    Ok((rate, spread))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensembles::{sample, SiteGaussian};
    use crate::model::reference;
    use rand_distr::StandardNormal;

    fn gaussian_points(n: usize, dim: usize, sd: f64, seed: u64) -> Vec<f64> {
        let mut rng = substream(seed, 0);
        (0..n * dim).map(|_| sd * rng.sample::<f64, _>(StandardNormal)).collect()
    }

    #[test]
    fn gaussian_closed_forms() {
        let one = DMatrix::from_element(1, 1, 1.0);
        assert!((gaussian_entropy(&one).unwrap() - 1.41894).abs() < 1e-5);
        let four = DMatrix::from_element(1, 1, 4.0);
        assert!((gaussian_entropy(&four).unwrap() - (HALF_LN_2PI_E + 2f64.ln())).abs() < 1e-14);
        let k = DMatrix::<f64>::identity(5, 5);
        assert!((gaussian_entropy(&k).unwrap() - 5.0 * HALF_LN_2PI_E).abs() < 1e-13);
        assert!(gaussian_entropy(&DMatrix::from_element(1, 1, -1.0)).is_err());
    }

    #[test]
    fn analytic_state_entropies() {
        let sys = BoxSystem::new(&reference::harmonic_chain(), &box_sites(1, 1).unwrap()).unwrap();
        let r = entropy_analytic(&StateSpec::product_gaussian(1.0, 1.0), &sys).unwrap();
        assert!((r.value - 4.0 * HALF_LN_2PI_E).abs() < 1e-13);
        assert_eq!(r.stderr, 0.0);
        // q ~ U[-1/2, 1/2]: entropy 0 per position
        let spec = StateSpec::ProductCustom {
            q_density: SiteDensity::Uniform { half_width: 0.5 },
            p_var: 1.0,
        };
        let r = entropy_analytic(&spec, &sys).unwrap();
        assert!((r.value - 2.0 * HALF_LN_2PI_E).abs() < 1e-13);
        assert!(entropy_analytic(&StateSpec::Point { q: vec![0.0; 2], p: vec![0.0; 2] }, &sys).is_err());
    }

    #[test]
    fn onsite_boltzmann_of_a_quadratic_site_is_gaussian() {
        // exp(-beta q^2/2) is N(0, 1/beta)
        let model = reference::harmonic_sites();
        for beta in [0.5, 1.0, 3.0] {
            let s = site_entropy_1d(&SiteDensity::OnsiteBoltzmann { beta }, &model).unwrap();
            assert!((s - (HALF_LN_2PI_E - 0.5 * f64::ln(beta))).abs() < 1e-12, "beta {beta}");
        }
        // narrow bimodal with far-apart peaks: one Gaussian plus ln 2
        let s = site_entropy_1d(&SiteDensity::Bimodal { center: 20.0, width: 1.0 }, &model).unwrap();
        assert!((s - (HALF_LN_2PI_E + 2f64.ln())).abs() < 1e-10);
    }

    #[test]
    fn knn_unit_gaussian_2d() {
        let pts = gaussian_points(100_000, 2, 1.0, 1);
        let r = entropy_knn_points(&pts, 2, &[None, None], &KnnOptions::default(), 1).unwrap();
        assert!((r.value - 2.8379).abs() < 0.05, "{r:?}");
        assert!(r.stderr > 0.0 && r.stderr < 0.02);
    }

    #[test]
    fn knn_uniform_square() {
        let mut rng = substream(2, 0);
        let pts: Vec<f64> = (0..200_000).map(|_| rng.random_range(0.0..1.0)).collect();
        let r = entropy_knn_points(&pts, 2, &[None, None], &KnnOptions::default(), 2).unwrap();
        assert!(r.value.abs() < 0.05, "{r:?}");
        // on the unit torus there is no boundary bias at all
        let r = entropy_knn_points(&pts, 2, &[Some(1.0), Some(1.0)], &KnnOptions::default(), 2).unwrap();
        assert!(r.value.abs() < 3.0 * r.stderr + 0.01, "{r:?}");
    }

    #[test]
    fn knn_error_shrinks_with_more_samples() {
        let exact = 4.0 * HALF_LN_2PI_E;
        let opts = KnnOptions {
            min_samples: 100,
            ..KnnOptions::default()
        };
        let err = |n: usize| {
            // average over a few seeds to compare biases rather than noise
            (0..4)
                .map(|s| {
                    let pts = gaussian_points(n, 4, 1.0, 10 + s);
                    entropy_knn_points(&pts, 4, &[None; 4], &opts, s).unwrap().value - exact
                })
                .sum::<f64>()
                .abs()
                / 4.0
        };
        assert!(err(100_000) < err(25_000));
    }

    #[test]
    fn knn_guards() {
        let pts = gaussian_points(100, 13, 1.0, 0);
        let opts = KnnOptions {
            min_samples: 10,
            ..KnnOptions::default()
        };
        assert!(matches!(
            entropy_knn_points(&pts, 13, &[None; 13], &opts, 0),
            Err(Error::DimensionCap { dim: 13, cap: 12 })
        ));
        let pts = gaussian_points(100, 2, 1.0, 0);
        assert!(matches!(
            entropy_knn_points(&pts, 2, &[None; 2], &KnnOptions::default(), 0),
            Err(Error::InsufficientSamples { .. })
        ));
    }

    #[test]
    fn duplicate_points_are_jittered() {
        let mut pts = gaussian_points(5_000, 2, 1.0, 3);
        let copy = pts[..200].to_vec();
        pts[200..400].copy_from_slice(&copy);
        let opts = KnnOptions {
            min_samples: 100,
            ..KnnOptions::default()
        };
        let r = entropy_knn_points(&pts, 2, &[None; 2], &opts, 0).unwrap();
        assert!(r.has_flag("jitter"));
        assert!(r.value.is_finite());
    }

    #[test]
    fn tiny_variance_is_below_floor() {
        let sys = BoxSystem::new(&reference::harmonic_sites(), &box_sites(1, 1).unwrap()).unwrap();
        let ens = sample(&StateSpec::product_gaussian(1e-50, 1e-50), &sys, 10_000, 0).unwrap();
        let r = entropy_knn(&ens, &sys, &[0, 1], Coordinates::Phase, &KnnOptions::default()).unwrap();
        assert!(r.has_flag("below_floor"), "{r:?}");
    }

    #[test]
    fn product_state_sequence_is_constant() {
        let model = reference::harmonic_chain();
        let (r, seq) = specific_entropy_analytic(&model, &[1, 2, 3, 4], |_| Ok(StateSpec::product_gaussian(2.0, 0.5)), 1e-3)
            .unwrap();
        let one = 2.0 * HALF_LN_2PI_E + 0.5 * (1.0f64).ln();
        for v in &seq.per_site {
            assert!((v - one).abs() < 1e-12);
        }
        assert!(seq.fekete_ok && (r.value - one).abs() < 1e-12);
    }

    #[test]
    fn fekete_flag_catches_increase() {
        let seq = specific_entropy(&[1, 2, 3], &[2, 4, 6], &[4.0, 7.0, 12.0], 1e-3);
        assert!(!seq.fekete_ok);
        assert!((seq.max_excess - 0.25).abs() < 1e-12);
    }

    #[test]
    fn subadditivity_closed_forms() {
        let rho: f64 = 0.5;
        let cov = DMatrix::from_row_slice(2, 2, &[1.0, rho, rho, 1.0]);
        let r = subadditivity_analytic(&cov, &[0], &[1]).unwrap();
        assert!((r.joint - (2.0 * HALF_LN_2PI_E + 0.5 * (1.0 - rho * rho).ln())).abs() < 1e-13);
        assert!(r.holds && !r.independent && r.mutual_information > 0.0);
        let r = subadditivity_analytic(&DMatrix::identity(3, 3), &[0, 2], &[1]).unwrap();
        assert!(r.independent && r.mutual_information == 0.0 && (r.joint - r.part_a - r.part_b).abs() < 1e-13);
        assert!(subadditivity_analytic(&cov, &[0], &[0]).is_err());
    }

    #[test]
    fn subadditivity_from_samples() {
        let rho: f64 = 0.5;
        let mut rng = substream(9, 0);
        let n = 100_000;
        let mut pts = Vec::with_capacity(2 * n);
        for _ in 0..n {
            let x: f64 = rng.sample(StandardNormal);
            let y: f64 = rng.sample(StandardNormal);
            pts.push(x);
            pts.push(rho * x + (1.0 - rho * rho).sqrt() * y);
        }
        let r = subadditivity_knn(&pts, 2, &[0], &[1], &KnnOptions::default(), 9).unwrap();
        let exact = -0.5 * (1.0 - rho * rho).ln();
        assert!(r.holds);
        assert!((r.mutual_information - exact).abs() < 3.0 * r.stderr + 0.01, "{r:?} vs {exact}");
    }

    #[test]
    fn harmonic_covariance_transport_keeps_entropy() {
        let sys = BoxSystem::new(&reference::harmonic_chain(), &box_sites(1, 4).unwrap()).unwrap();
        let cov = StateSpec::product_gaussian(0.7, 1.3).gaussian_covariance(&sys).unwrap();
        let s0 = gaussian_entropy(&cov).unwrap();
        let sched = IntegratorSchedule::new(1e-3, 2.0).unwrap();
        let ct = covariance_transport(&sys, &cov, &sched).unwrap();
        assert!((gaussian_entropy(&ct).unwrap() - s0).abs() < 1e-10);
        // the covariance itself does change
        assert!((&ct - &cov).abs().max() > 1e-3);
        assert!(covariance_transport(
            &BoxSystem::new(&reference::fpu_chain(), &box_sites(1, 2).unwrap()).unwrap(),
            &DMatrix::identity(8, 8),
            &sched
        )
        .is_err());
    }

    #[test]
    fn transported_covariance_matches_sampled_flow() {
        let sys = BoxSystem::new(&reference::harmonic_chain(), &box_sites(1, 1).unwrap()).unwrap();
        let spec = StateSpec::SiteVarying {
            sites: vec![SiteGaussian::new(0.5, 1.0), SiteGaussian::new(2.0, 0.3)],
        };
        let cov = spec.gaussian_covariance(&sys).unwrap();
        let sched = IntegratorSchedule::new(1e-2, 1.0).unwrap();
        let ct = covariance_transport(&sys, &cov, &sched).unwrap();
        let ens = sample(&spec, &sys, 40_000, 2).unwrap();
        let out = crate::ensembles::pushforward(&ens, &sys, &sched).unwrap();
        let q0: Vec<f64> = out.samples.iter().map(|c| c.q[0]).collect();
        let v = variance(&q0);
        let se = v * (2.0 / q0.len() as f64).sqrt();
        assert!((v - ct[(0, 0)]).abs() < 4.0 * se, "{v} vs {}", ct[(0, 0)]);
    }

    #[test]
    fn periodized_rate_equals_block_entropy_per_site() {
        for (nu, a) in [(1usize, 3i64), (2, 1)] {
            let sys = BoxSystem::new(
                &if nu == 1 { reference::harmonic_chain() } else { reference::quartic_lattice_2d() },
                &box_sites(nu, a).unwrap(),
            )
            .unwrap();
            // a correlated block: Gibbs of the harmonic chain, or a random SPD matrix in 2D
            let n = sys.ndof();
            let cov = if nu == 1 {
                StateSpec::gibbs(1.0).gaussian_covariance(&sys).unwrap()
            } else {
                let mut rng = substream(5, 0);
                let b = DMatrix::from_fn(2 * n, 2 * n, |_, _| rng.random_range(-1.0..1.0));
                &b * b.transpose() + DMatrix::identity(2 * n, 2 * n)
            };
            let s_block = gaussian_entropy(&cov).unwrap();
            let (rate, spread) = periodized_entropy_rate(&cov, nu, a, 1).unwrap();
            assert!((rate - s_block / sys.n_sites() as f64).abs() < 1e-9, "nu {nu}: {rate}");
            assert!(spread < 1e-9);
        }
    }
}
