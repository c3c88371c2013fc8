//! Sampled checks of the pinning and domination assumptions.
//!
//! Every constant reported here is the smallest one that works on the probe
//! points, hence only a lower bound on the true constant. The report says so
//! in `sampled_not_proven`.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{box_sites, Body, BoxSystem, LatticeModel, PotentialSpec, Space};
use crate::error::{Error, Result};
use crate::stats::substream;

/// Where to evaluate the potentials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbePoints {
    /// Regular grid on `[-extent, extent]` per coordinate (the fundamental
    /// domain on a torus). Neighbourhood checks fall back to a cloud of
    /// `per_axis^4` points when the neighbourhood has more than 4 coordinates.
    Grid { per_axis: usize, extent: f64 },
    /// Gaussian cloud whose width is log-uniform in `[scale/100, 10 scale]`,
    /// so both small and large amplitudes are visited.
    Cloud { n: usize, scale: f64, seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Probe {
    pub points: ProbePoints,
    /// Constant added to `W_{{i}}` for P3, D1–D3 and the ss-like condition.
    /// P1 is always checked on the raw potential.
    #[serde(default = "default_shift")]
    pub onsite_shift: f64,
}

fn default_shift() -> f64 {
    1.0
}

impl Probe {
    pub fn grid(per_axis: usize, extent: f64) -> Self {
        Probe {
            points: ProbePoints::Grid { per_axis, extent },
            onsite_shift: default_shift(),
        }
    }

    pub fn cloud(n: usize, scale: f64, seed: u64) -> Self {
        Probe {
            points: ProbePoints::Cloud { n, scale, seed },
            onsite_shift: default_shift(),
        }
    }

    pub fn with_shift(mut self, shift: f64) -> Self {
        self.onsite_shift = shift;
        self
    }
}

impl Default for Probe {
    fn default() -> Self {
        Probe::cloud(4000, 1.0, 17)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssumptionCheck {
    pub name: String,
    pub pass: bool,
    /// Smallest witnessing constant on the probe.
    pub constant: Option<f64>,
    pub note: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssumptionReport {
    pub checks: Vec<AssumptionCheck>,
    pub c0: Option<f64>,
    pub c1: Option<f64>,
    pub c2: Option<f64>,
    pub c3: Option<f64>,
    pub epsilon: Option<f64>,
    pub p2_a: Option<f64>,
    pub p2_b: Option<f64>,
    pub onsite_shift: f64,
    /// Degree comparison for the polynomial family (`None` if not polynomial).
    pub symbolic_polynomial: Option<bool>,
    pub sampled_not_proven: bool,
}

impl AssumptionReport {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass) && self.symbolic_polynomial != Some(false)
    }

    pub fn get(&self, name: &str) -> Option<&AssumptionCheck> {
        self.checks.iter().find(|c| c.name == name)
    }
}

pub fn validate_assumptions(model: &LatticeModel, probe: &Probe) -> Result<AssumptionReport> {
    let shift = probe.onsite_shift;
    let sd = model.site_dim();
    let onsite = model.onsite();
    let single = single_site_points(model, &probe.points);
    let mut w_values = Vec::with_capacity(single.len());
    for q in &single {
        let w = onsite.value(q);
        if !w.is_finite() {
            return Err(Error::NonFinitePotential(q.clone()));
        }
        w_values.push(w);
    }
    let mut checks = Vec::new();

    // P1
    let w_min = w_values.iter().copied().fold(f64::INFINITY, f64::min);
    checks.push(AssumptionCheck {
        name: "P1".into(),
        pass: w_min >= -1e-12,
        constant: Some(w_min),
        note: "minimum of the on-site potential on the probe".into(),
    });

    // P2
    let (p2_a, p2_b, p2) = check_p2(model, &single, &w_values);
    checks.push(p2);

    // P3
    let mut c0: f64 = 0.0;
    let mut p3_ok = true;
    for (q, &w) in single.iter().zip(&w_values) {
        let norm = q
            .iter()
            .enumerate()
            .map(|(c, &x)| match model.period(c) {
                Some(l) => {
                    let y = x.rem_euclid(l);
                    y.min(l - y)
                }
                None => x,
            })
            .map(|x| x * x)
            .sum::<f64>()
            .sqrt();
        let denom = w + shift;
        if denom <= 0.0 {
            if norm > 0.0 {
                p3_ok = false;
            }
            continue;
        }
        c0 = c0.max(norm / denom);
    }
    checks.push(AssumptionCheck {
        name: "P3".into(),
        pass: p3_ok,
        constant: p3_ok.then_some(c0),
        note: format!("|q| <= C0 (W + {shift})"),
    });

    // D1-D3 and ss-like on the neighbourhood of site 0
    let dom = check_domination(model, probe, shift)?;
    checks.extend(dom.checks);

    let symbolic_polynomial = symbolic_polynomial_check(model);
    if let Some(ok) = symbolic_polynomial {
        checks.push(AssumptionCheck {
            name: "polynomial-degrees".into(),
            pass: ok,
            constant: None,
            note: "interaction degree <= n + 1 for on-site degree 2n".into(),
        });
    }
    let _ = sd;
    Ok(AssumptionReport {
        checks,
        c0: p3_ok.then_some(c0),
        c1: dom.c1,
        c2: dom.c2,
        c3: dom.c3,
        epsilon: dom.epsilon,
        p2_a,
        p2_b,
        onsite_shift: shift,
        symbolic_polynomial,
        sampled_not_proven: true,
    })
}

fn symbolic_polynomial_check(model: &LatticeModel) -> Option<bool> {
    let deg = match model.onsite() {
        PotentialSpec::Polynomial { .. } => model.onsite().degree()?,
        PotentialSpec::Cosine { .. } => return None,
    };
    let n = deg / 2;
    let mut ok = model.onsite().degree().is_some_and(|d| d % 2 == 0);
    for t in model.terms() {
        match t.body.degree() {
            Some(d) => ok &= d <= n + 1,
            None => return None,
        }
    }
    Some(ok)
}

fn single_site_points(model: &LatticeModel, points: &ProbePoints) -> Vec<Vec<f64>> {
    let sd = model.site_dim();
    match points {
        ProbePoints::Grid { per_axis, extent } => {
            let per_axis = (*per_axis).max(2);
            let axis = |c: usize| -> Vec<f64> {
                match model.period(c) {
                    Some(l) => (0..per_axis).map(|k| l * k as f64 / per_axis as f64).collect(),
                    None => (0..per_axis)
                        .map(|k| -extent + 2.0 * extent * k as f64 / (per_axis - 1) as f64)
                        .collect(),
                }
            };
            let axes: Vec<Vec<f64>> = (0..sd).map(axis).collect();
            let total = per_axis.pow(sd as u32);
            (0..total)
                .map(|mut flat| {
                    (0..sd)
                        .map(|c| {
                            let k = flat % per_axis;
                            flat /= per_axis;
                            axes[c][k]
                        })
                        .collect()
                })
                .collect()
        }
        ProbePoints::Cloud { n, scale, seed } => {
            let mut rng = substream(*seed, 0);
            (0..*n).map(|_| cloud_point(model, sd, *scale, &mut rng)).collect()
        }
    }
}

fn cloud_point(model: &LatticeModel, dim: usize, scale: f64, rng: &mut impl Rng) -> Vec<f64> {
    let width = scale * 10f64.powf(rng.random_range(-2.0..1.0));
    (0..dim)
        .map(|k| match model.period(k % model.site_dim()) {
            Some(l) => rng.random_range(0.0..l),
            None => width * rng.sample::<f64, _>(StandardNormal),
        })
        .collect()
}

fn check_p2(
    model: &LatticeModel,
    points: &[Vec<f64>],
    w: &[f64],
) -> (Option<f64>, Option<f64>, AssumptionCheck) {
    if let Space::Torus { .. } = model.space() {
        // conv of any nonempty set is the whole torus
        let wmax = w.iter().copied().fold(0.0, f64::max);
        return (
            Some(1.0),
            Some(wmax),
            AssumptionCheck {
                name: "P2".into(),
                pass: true,
                constant: Some(1.0),
                note: "torus: conv is the full torus, holds with a = 1, b = max W".into(),
            },
        );
    }
    let sd = model.site_dim();
    let onsite = model.onsite();
    // sublevel sets must stay strictly inside the probe: only use levels below
    // the smallest value on the outer shell
    let norms: Vec<f64> = points.iter().map(|q| q.iter().map(|x| x * x).sum::<f64>().sqrt()).collect();
    let rmax = norms.iter().copied().fold(0.0, f64::max);
    let shell_min = points
        .iter()
        .zip(&norms)
        .zip(w)
        .filter(|((_, &r), _)| r >= 0.9 * rmax)
        .map(|(_, &wv)| wv)
        .fold(f64::INFINITY, f64::min);
    let mut levels: Vec<f64> = w.iter().copied().filter(|&v| v < shell_min && v > 0.0).collect();
    levels.sort_by(f64::total_cmp);
    levels.dedup();
    if levels.is_empty() {
        return (
            None,
            None,
            AssumptionCheck {
                name: "P2".into(),
                pass: false,
                constant: None,
                note: "no sublevel set strictly inside the probe".into(),
            },
        );
    }
    let stride = (levels.len() / 24).max(1);
    let picked: Vec<f64> = levels.iter().step_by(stride).copied().collect();
    let mut mz = Vec::with_capacity(picked.len());
    for &z in &picked {
        // bounding box of the sublevel set contains its convex hull; W is a
        // sum over components so its maximum over the box splits per axis
        let mut total = 0.0;
        for c in 0..sd {
            let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
            for (q, &wv) in points.iter().zip(w) {
                if wv <= z {
                    lo = lo.min(q[c]);
                    hi = hi.max(q[c]);
                }
            }
            let m = (0..=200)
                .map(|k| onsite.value1(lo + (hi - lo) * k as f64 / 200.0))
                .fold(f64::NEG_INFINITY, f64::max);
            total += m;
        }
        // other components sit at their minimum inside L(z)
        mz.push(total - (sd as f64 - 1.0) * 0.0);
    }
    let upper = picked.len() / 2;
    let a = picked[upper..]
        .iter()
        .zip(&mz[upper..])
        .map(|(&z, &m)| m / z)
        .fold(1.0, f64::max);
    let b = picked
        .iter()
        .zip(&mz)
        .map(|(&z, &m)| m - a * z)
        .fold(0.0, f64::max);
    let pass = a.is_finite() && b.is_finite();
    (
        Some(a),
        Some(b),
        AssumptionCheck {
            name: "P2".into(),
            pass,
            constant: Some(a),
            note: format!("conv L(z) within L(a z + b) with a = {a:.4}, b = {b:.4}"),
        },
    )
}

struct Domination {
    checks: Vec<AssumptionCheck>,
    c1: Option<f64>,
    c2: Option<f64>,
    c3: Option<f64>,
    epsilon: Option<f64>,
}

fn check_domination(model: &LatticeModel, probe: &Probe, shift: f64) -> Result<Domination> {
    let sd = model.site_dim();
    let a = model.range() + 1;
    let geom = box_sites(model.nu(), a)?;
    let sys = BoxSystem::new(model, &geom)?;
    let origin = geom.index_of(&vec![0; model.nu()]).expect("origin in box");
    let full = sys.full_instances_at(origin)?;
    let terms = model.terms();

    // neighbourhood N(0): sites co-appearing with 0
    let mut hood: Vec<usize> = full.iter().flat_map(|i| i.sites.iter().copied()).collect();
    hood.push(origin);
    hood.sort_unstable();
    hood.dedup();
    let others: Vec<usize> = hood.iter().copied().filter(|&s| s != origin).collect();
    // every Λ ⊆ N(0) containing 0 realises the subset of terms inside it
    let lambdas: Vec<Vec<usize>> = if others.len() <= 12 {
        (0..1usize << others.len())
            .map(|mask| {
                let mut l = vec![origin];
                l.extend(others.iter().enumerate().filter(|(k, _)| mask >> k & 1 == 1).map(|(_, &s)| s));
                l
            })
            .collect()
    } else {
        vec![hood.clone()]
    };

    let ndof = hood.len() * sd;
    let configs: Vec<Vec<f64>> = match &probe.points {
        ProbePoints::Grid { per_axis, extent } if ndof <= 4 => {
            let per_axis = (*per_axis).max(2);
            let total = per_axis.pow(ndof as u32);
            (0..total)
                .map(|mut flat| {
                    (0..ndof)
                        .map(|k| {
                            let i = flat % per_axis;
                            flat /= per_axis;
                            match model.period(k % sd) {
                                Some(l) => l * i as f64 / per_axis as f64,
                                None => -extent + 2.0 * extent * i as f64 / (per_axis - 1) as f64,
                            }
                        })
                        .collect()
                })
                .collect()
        }
        ProbePoints::Grid { per_axis, extent } => {
            let mut rng = substream(0, 1);
            (0..per_axis.pow(4)).map(|_| cloud_point(model, ndof, *extent / 3.0, &mut rng)).collect()
        }
        ProbePoints::Cloud { n, scale, seed } => {
            let mut rng = substream(*seed, 1);
            (0..*n).map(|_| cloud_point(model, ndof, *scale, &mut rng)).collect()
        }
    };

    let mut c1: f64 = 0.0;
    let mut c2: f64 = 0.0;
    let mut c3: f64 = 0.0;
    let mut worst_ss: f64 = 0.0;
    let mut finite = [true; 3];
    let mut q = vec![0.0; sys.ndof()];
    let mut buf = Vec::new();
    let mut g = vec![0.0; 3 * sd];
    let hood_pos = |s: usize| hood.iter().position(|&h| h == s).expect("site in neighbourhood");
    for cfg in &configs {
        q.iter_mut().for_each(|x| *x = 0.0);
        for (k, &s) in hood.iter().enumerate() {
            q[s * sd..(s + 1) * sd].copy_from_slice(&cfg[k * sd..(k + 1) * sd]);
        }
        let w_at = |s: usize| model.onsite().value(&q[s * sd..(s + 1) * sd]) + shift;
        for v in cfg {
            if !v.is_finite() {
                return Err(Error::NonFinitePotential(cfg.clone()));
            }
        }
        // per-term gradient at 0, value, and Hessian row of site 0
        let mut grads = Vec::with_capacity(full.len());
        let mut values = Vec::with_capacity(full.len());
        let mut hess_rows: Vec<Vec<f64>> = Vec::with_capacity(full.len());
        for inst in &full {
            let body = &terms[inst.term].body;
            sys.gather(&q, &inst.sites, &mut buf);
            let v = body.value(&buf, sd);
            if !v.is_finite() {
                return Err(Error::NonFinitePotential(cfg.clone()));
            }
            values.push(v);
            let gl = &mut g[..buf.len()];
            body.grad(&buf, sd, gl);
            let slot = inst.sites.iter().position(|&s| s == origin).expect("origin in term");
            grads.push(gl[slot * sd..(slot + 1) * sd].to_vec());
            let m = buf.len();
            let mut h = vec![0.0; m * m];
            body.hess_add(&buf, sd, &mut h);
            // row of d/dq_0 (all components summed in absolute value later)
            let mut row = vec![0.0; hood.len() * sd * sd];
            for c in 0..sd {
                for (k, &s) in inst.sites.iter().enumerate() {
                    for c2i in 0..sd {
                        let pos = hood_pos(s);
                        row[(pos * sd + c2i) * sd + c] += h[(slot * sd + c) * m + k * sd + c2i];
                    }
                }
            }
            hess_rows.push(row);
        }
        // ss-like
        for (inst, &v) in full.iter().zip(&values) {
            if v < 0.0 {
                let denom: f64 = inst.sites.iter().map(|&s| w_at(s)).sum();
                let ratio = (-v) * inst.sites.len() as f64 / denom;
                worst_ss = worst_ss.max(ratio);
            }
        }
        for lam in &lambdas {
            let inside: Vec<usize> = (0..full.len())
                .filter(|&k| full[k].sites.iter().all(|s| lam.contains(s)))
                .collect();
            let rhs: f64 = lam.iter().map(|&s| w_at(s)).sum();
            let mut gsum = vec![0.0; sd];
            let mut vsum = 0.0;
            let mut hsum = vec![0.0; hood.len() * sd * sd];
            for &k in &inside {
                for c in 0..sd {
                    gsum[c] += grads[k][c];
                }
                vsum += values[k];
                for (acc, x) in hsum.iter_mut().zip(&hess_rows[k]) {
                    *acc += x;
                }
            }
            // on-site Hessian enters D3 (Δ = {0})
            let pos0 = hood_pos(origin);
            for c in 0..sd {
                hsum[(pos0 * sd + c) * sd + c] += model.onsite().d2(q[origin * sd + c]);
            }
            let hmax = hsum.iter().map(|x| x.abs()).fold(0.0, f64::max);
            let g2: f64 = gsum.iter().map(|x| x * x).sum();
            let ratios = [g2, vsum.abs(), hmax];
            for (k, &num) in ratios.iter().enumerate() {
                if rhs <= 0.0 {
                    if num > 0.0 {
                        finite[k] = false;
                    }
                    continue;
                }
                let r = num / rhs;
                match k {
                    0 => c1 = c1.max(r),
                    1 => c2 = c2.max(r),
                    _ => c3 = c3.max(r),
                }
            }
        }
    }
    let has_terms = !full.is_empty() || terms.iter().any(|t| !matches!(t.body, Body::Cosine { .. }) || true);
    let _ = has_terms;
    let mk = |name: &str, ok: bool, c: f64, note: &str| AssumptionCheck {
        name: name.into(),
        pass: ok && c.is_finite(),
        constant: (ok && c.is_finite()).then_some(c),
        note: note.into(),
    };
    let epsilon = 1.0 - worst_ss;
    let checks = vec![
        mk("D1", finite[0], c1, "|sum grad_0 W_Δ|^2 <= C1 sum_{γ(0,j)<=1} W_j"),
        mk("D2", finite[1], c2, "|sum W_Δ| <= C2 sum_{γ(0,j)<=1} W_j"),
        mk("D3", finite[2], c3, "max_j |sum d_j d_0 W_Δ| <= C3 sum_{γ(0,j)<=1} W_j"),
        AssumptionCheck {
            name: "ss-like".into(),
            pass: epsilon > 0.0,
            constant: Some(epsilon.min(1.0)),
            note: "|min(0, W_Δ)| <= (1 - ε)/#Δ sum_{i in Δ} W_i".into(),
        },
    ];
    Ok(Domination {
        checks,
        c1: (finite[0] && c1.is_finite()).then_some(c1),
        c2: (finite[1] && c2.is_finite()).then_some(c2),
        c3: (finite[2] && c3.is_finite()).then_some(c3),
        epsilon: (epsilon > 0.0).then_some(epsilon.min(1.0)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::reference;

    #[test]
    fn harmonic_chain_passes_everything() {
        let r = validate_assumptions(&reference::harmonic_chain(), &Probe::default()).unwrap();
        assert!(r.all_pass(), "{r:#?}");
        // tight value of C1 for this chain is 3 (Cauchy-Schwarz with (2,-1,-1))
        let c1 = r.c1.unwrap();
        assert!(c1 > 0.5 && c1 <= 3.0 + 1e-9, "C1 = {c1}");
        assert_eq!(r.symbolic_polynomial, Some(true));
        assert!(r.sampled_not_proven);
    }

    #[test]
    fn harmonic_chain_c1_without_shift_is_bounded_by_three() {
        let r = validate_assumptions(&reference::harmonic_chain(), &Probe::default().with_shift(0.0)).unwrap();
        let c1 = r.c1.unwrap();
        assert!(c1 > 2.0 && c1 <= 3.0 + 1e-9, "C1 = {c1}");
    }

    #[test]
    fn negative_onsite_fails_p1() {
        let m = LatticeModel::new(
            1,
            1,
            Space::Euclidean,
            PotentialSpec::polynomial(&[-5.0, 0.0, 1.0]),
            vec![],
            1,
        )
        .unwrap();
        let r = validate_assumptions(&m, &Probe::grid(41, 4.0)).unwrap();
        let p1 = r.get("P1").unwrap();
        assert!(!p1.pass);
        assert_eq!(p1.constant, Some(-5.0));
    }

    #[test]
    fn rotator_passes_pinning_trivially() {
        let r = validate_assumptions(&reference::rotator_chain(), &Probe::default()).unwrap();
        assert!(r.get("P2").unwrap().pass);
        assert!(r.get("P3").unwrap().pass);
        assert!(r.all_pass(), "{r:#?}");
        assert_eq!(r.symbolic_polynomial, None);
    }

    #[test]
    fn shipped_models_pass() {
        for m in reference::all() {
            let r = validate_assumptions(&m, &Probe::default()).unwrap();
            assert!(r.all_pass(), "{}: {r:#?}", m.hash());
        }
    }

    #[test]
    fn double_well_needs_offset_in_p2() {
        // W = (q^2 - 1)^2 = 1 - 2 q^2 + q^4: sublevel sets split in two for z < 1
        let m = LatticeModel::new(
            1,
            1,
            Space::Euclidean,
            PotentialSpec::polynomial(&[1.0, 0.0, -2.0, 0.0, 1.0]),
            vec![],
            1,
        )
        .unwrap();
        let r = validate_assumptions(&m, &Probe::grid(801, 2.5)).unwrap();
        let b = r.p2_b.unwrap();
        assert!(b > 0.5, "b = {b}");
        assert!(r.get("P2").unwrap().pass);
    }

    #[test]
    fn excessive_degree_fails_symbolic_check() {
        use crate::model::InteractionTerm;
        let t = InteractionTerm::new(vec![vec![0], vec![1]], Body::difference(&[0.0, 0.0, 0.0, 0.0, 0.1]));
        let m = LatticeModel::new(1, 1, Space::Euclidean, PotentialSpec::polynomial(&[0.0, 0.0, 0.5]), vec![t], 1)
            .unwrap();
        let r = validate_assumptions(&m, &Probe::default()).unwrap();
        assert_eq!(r.symbolic_polynomial, Some(false));
        assert!(!r.all_pass());
    }
}
