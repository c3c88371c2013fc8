//! Convergence of the severed dynamics in the box scale.
//!
//! Two boxes `Λ(a) ⊂ Λ(b)` start from the same data. The observer's deviation
//! decays super-exponentially in `γ(i, Λ(a)^c)`, quickly dropping far below
//! the rounding error of either trajectory. Subtracting two trajectories would
//! therefore only measure roundoff; instead the big trajectory `x` and the
//! deviation `δ = x^a - x` are integrated jointly, with force differences
//! evaluated in a cancellation-free form. Both integrate the same Verlet
//! scheme, so `x + δ` is the small-box Verlet trajectory up to rounding
//! relative to `|δ|`.

use serde::{Deserialize, Serialize};

use super::{Configuration, IntegratorSchedule, Stepper};
use crate::error::{Error, Result};
use crate::model::{box_sites, BoxSystem, LatticeModel, TermInstance};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalityRow {
    pub a: i64,
    /// `γ(i, Λ(a)^c)`.
    pub gamma: u64,
    /// `|q_i^a - q_i^b| + |p_i^a - p_i^b|` from the joint integration.
    pub err: f64,
    /// The same quantity from subtracting two separate runs.
    pub err_direct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalityTable {
    pub b: i64,
    pub observer: Vec<i64>,
    pub t: f64,
    pub h: f64,
    pub rows: Vec<LocalityRow>,
}

impl LocalityTable {
    pub fn err_at(&self, gamma: u64) -> Option<f64> {
        self.rows.iter().find(|r| r.gamma == gamma).map(|r| r.err)
    }

    /// Strictly decreasing in γ over rows with `γ >= from`.
    pub fn strictly_decreasing_from(&self, from: u64) -> bool {
        let mut rows: Vec<&LocalityRow> = self.rows.iter().filter(|r| r.gamma >= from).collect();
        rows.sort_by_key(|r| r.gamma);
        rows.windows(2).all(|w| w[1].err < w[0].err)
    }

    /// Successive ratios `err(γ+1)/err(γ)`.
    pub fn ratios(&self) -> Vec<(u64, f64)> {
        let mut rows = self.rows.clone();
        rows.sort_by_key(|r| r.gamma);
        rows.windows(2)
            .filter(|w| w[1].gamma == w[0].gamma + 1)
            .map(|w| (w[0].gamma, w[1].err / w[0].err))
            .collect()
    }

    /// Decay shape check: on average the log-ratios over the upper half of
    /// the γ range are smaller than over the lower half, i.e. `log err` bends
    /// downward. Pointwise ratios fluctuate with the initial data.
    pub fn superexponential(&self) -> bool {
        let r: Vec<f64> = self.ratios().into_iter().map(|(_, x)| x.ln()).collect();
        if r.len() < 2 || r.iter().any(|x| !x.is_finite()) {
            return false;
        }
        let mid = r.len() / 2;
        let lower = r[..mid].iter().sum::<f64>() / mid as f64;
        let upper = r[mid..].iter().sum::<f64>() / (r.len() - mid) as f64;
        upper < lower && r.iter().all(|&x| x < 0.0)
    }
}

/// Run the severed dynamics in `Λ(a)` for every `a` in `scales` and in `Λ(b)`,
/// all from `cfg_b` (data on the big box, restricted to the small ones).
pub fn locality_experiment(
    model: &LatticeModel,
    cfg_b: &Configuration,
    b: i64,
    scales: &[i64],
    observer: &[i64],
    schedule: &IntegratorSchedule,
) -> Result<LocalityTable> {
    let gb = box_sites(model.nu(), b)?;
    let sys_b = BoxSystem::new(model, &gb)?;
    if cfg_b.q.len() != sys_b.ndof() || cfg_b.p.len() != sys_b.ndof() {
        return Err(Error::InvalidState("initial data does not match the large box".into()));
    }
    let obs_b = gb.index_of(observer).ok_or_else(|| Error::SiteOutsideBox(observer.to_vec()))?;
    let n = schedule.steps()?;
    let h = schedule.h;
    let sd = model.site_dim();

    // reference run in the big box, stored for the direct comparison
    let mut big = cfg_b.clone();
    let mut stepper = Stepper::new(&sys_b);
    for _ in 0..n {
        stepper.step(&mut big, h);
    }

    let mut rows = Vec::with_capacity(scales.len());
    for &a in scales {
        if a >= b {
            return Err(Error::BoxTooSmall(format!("scale {a} must be below the reference scale {b}")));
        }
        let ga = box_sites(model.nu(), a)?;
        let obs_a = ga.index_of(observer).ok_or_else(|| Error::SiteOutsideBox(observer.to_vec()))?;
        let gamma = model
            .gamma_to_complement(&ga, observer)
            .ok_or_else(|| Error::Unsupported("model without interactions has no boundary distance".into()))?;
        let sys_a = BoxSystem::new(model, &ga)?;
        let map: Vec<usize> = ga.sites().iter().map(|s| gb.index_of(s).expect("nested boxes")).collect();

        let (dq, dp) = joint_run(&sys_b, &ga, &map, cfg_b, n, h)?;
        let err = norm(&dq[obs_b * sd..(obs_b + 1) * sd]) + norm(&dp[obs_b * sd..(obs_b + 1) * sd]);

        // direct run in the small box
        let mut small = Configuration {
            q: map.iter().flat_map(|&j| cfg_b.q[j * sd..(j + 1) * sd].to_vec()).collect(),
            p: map.iter().flat_map(|&j| cfg_b.p[j * sd..(j + 1) * sd].to_vec()).collect(),
        };
        let mut st = Stepper::new(&sys_a);
        for _ in 0..n {
            st.step(&mut small, h);
        }
        let diff = |x: &[f64], y: &[f64], is_q: bool| -> f64 {
            let v: Vec<f64> = x
                .iter()
                .zip(y)
                .enumerate()
                .map(|(c, (u, w))| {
                    let d = u - w;
                    match (is_q, model.period(c)) {
                        (true, Some(l)) => {
                            let d = d.rem_euclid(l);
                            d.min(l - d)
                        }
                        _ => d,
                    }
                })
                .collect();
            norm(&v)
        };
        let err_direct = diff(
            &small.q[obs_a * sd..(obs_a + 1) * sd],
            &big.q[obs_b * sd..(obs_b + 1) * sd],
            true,
        ) + diff(
            &small.p[obs_a * sd..(obs_a + 1) * sd],
            &big.p[obs_b * sd..(obs_b + 1) * sd],
            false,
        );
        rows.push(LocalityRow {
            a,
            gamma,
            err,
            err_direct,
        });
    }
    Ok(LocalityTable {
        b,
        observer: observer.to_vec(),
        t: n as f64 * h,
        h,
        rows,
    })
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Integrate big-box data `x` and the small-box deviation `δ` together. `δ`
/// is stored on the big box and kept at zero outside `Λ(a)`.
fn joint_run(
    sys_b: &BoxSystem,
    ga: &crate::model::BoxGeometry,
    map: &[usize],
    cfg: &Configuration,
    n: u64,
    h: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let sd = sys_b.site_dim();
    let ndof = sys_b.ndof();
    let model = sys_b.model();
    let mut inside = vec![false; sys_b.n_sites()];
    for &j in map {
        inside[j] = true;
    }
    // big-box terms not contained in Λ(a) but touching it: they act in the big
    // box and are severed in the small one
    let straddling: Vec<TermInstance> = sys_b
        .instances()
        .iter()
        .filter(|inst| {
            let any = inst.sites.iter().any(|&s| inside[s]);
            let all = inst.sites.iter().all(|&s| inside[s]);
            any && !all
        })
        .cloned()
        .collect();
    let _ = ga;

    let mut x = cfg.clone();
    let mut dq = vec![0.0; ndof];
    let mut dp = vec![0.0; ndof];
    let mut f = vec![0.0; ndof];
    let mut df = vec![0.0; ndof];
    let mut tmp = vec![0.0; ndof];
    let mut buf = Vec::new();
    let mut g = vec![0.0; 3 * sd];

    // δF_i = [F^b(x + δ) - F^b(x)]_i + sum over straddling Δ ∋ i of ∂_i W_Δ(x + δ),
    // restricted to i ∈ Λ(a). The second piece removes the severed terms.
    let mut delta_force = |x: &Configuration, dq: &[f64], df: &mut [f64], tmp: &mut [f64]| {
        sys_b.force_diff(&x.q, dq, tmp);
        df.copy_from_slice(tmp);
        let xa: Vec<f64> = x.q.iter().zip(dq).map(|(a, b)| a + b).collect();
        for inst in &straddling {
            sys_b.gather(&xa, &inst.sites, &mut buf);
            let gl = &mut g[..buf.len()];
            model.terms()[inst.term].body.grad(&buf, sd, gl);
            for (k, &s) in inst.sites.iter().enumerate() {
                for c in 0..sd {
                    df[s * sd + c] += gl[k * sd + c];
                }
            }
        }
        for (s, &ins) in inside.iter().enumerate() {
            if !ins {
                df[s * sd..(s + 1) * sd].iter_mut().for_each(|v| *v = 0.0);
            }
        }
    };

    sys_b.forces(&x.q, &mut f);
    delta_force(&x, &dq, &mut df, &mut tmp);
    let half = 0.5 * h;
    for _ in 0..n {
        for k in 0..ndof {
            x.p[k] += half * f[k];
            dp[k] += half * df[k];
        }
        for k in 0..ndof {
            x.q[k] += h * x.p[k];
            dq[k] += h * dp[k];
        }
        sys_b.forces(&x.q, &mut f);
        delta_force(&x, &dq, &mut df, &mut tmp);
        for k in 0..ndof {
            x.p[k] += half * f[k];
            dp[k] += half * df[k];
        }
    }
    if dq.iter().chain(&dp).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            site: vec![],
            t: n as f64 * h,
        });
    }
    Ok((dq, dp))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::reference;

    fn smooth_data(sys: &BoxSystem) -> Configuration {
        let n = sys.ndof();
        Configuration {
            q: (0..n).map(|i| 0.8 * (0.9 * i as f64).sin()).collect(),
            p: (0..n).map(|i| 0.6 * (1.7 * i as f64 + 0.3).cos()).collect(),
        }
    }

    #[test]
    fn zero_time_gives_zero_error() {
        let m = reference::fpu_chain();
        let sys = BoxSystem::new(&m, &box_sites(1, 8).unwrap()).unwrap();
        let cfg = smooth_data(&sys);
        let sched = IntegratorSchedule::new(0.01, 0.0).unwrap();
        let t = locality_experiment(&m, &cfg, 8, &[2, 4], &[0], &sched).unwrap();
        assert!(t.rows.iter().all(|r| r.err == 0.0 && r.err_direct == 0.0));
    }

    #[test]
    fn joint_and_direct_agree_where_roundoff_is_negligible() {
        let m = reference::fpu_chain();
        let sys = BoxSystem::new(&m, &box_sites(1, 10).unwrap()).unwrap();
        let cfg = smooth_data(&sys);
        let sched = IntegratorSchedule::new(0.01, 1.0).unwrap();
        let t = locality_experiment(&m, &cfg, 10, &[1, 2, 3], &[0], &sched).unwrap();
        for r in &t.rows {
            if r.err > 1e-8 {
                assert!((r.err - r.err_direct).abs() <= 1e-6 * r.err, "{r:?}");
            }
        }
    }

    #[test]
    fn fpu_error_decays_superexponentially() {
        let m = reference::fpu_chain();
        let sys = BoxSystem::new(&m, &box_sites(1, 16).unwrap()).unwrap();
        let cfg = smooth_data(&sys);
        let sched = IntegratorSchedule::new(0.01, 1.0).unwrap();
        let scales: Vec<i64> = (2..=12).collect();
        let t = locality_experiment(&m, &cfg, 16, &scales, &[0], &sched).unwrap();
        assert!(t.strictly_decreasing_from(2), "{t:#?}");
        assert!(t.err_at(10).unwrap() < 1e-8 * t.err_at(2).unwrap());
        assert!(t.superexponential(), "{:?}", t.ratios());
    }

    #[test]
    fn rotator_chain_also_localises() {
        let m = reference::rotator_chain();
        let sys = BoxSystem::new(&m, &box_sites(1, 10).unwrap()).unwrap();
        let mut cfg = smooth_data(&sys);
        cfg.wrap(&sys);
        let sched = IntegratorSchedule::new(0.01, 1.0).unwrap();
        let t = locality_experiment(&m, &cfg, 10, &[2, 3, 4, 5, 6], &[0], &sched).unwrap();
        assert!(t.strictly_decreasing_from(2), "{t:#?}");
    }
}
