//! Severed Hamiltonian dynamics on a box.
//!
//! The equations of motion are `dq_i/dt = p_i`,
//! `dp_i/dt = -W'_{{i}}(q_i) - sum_{Δ ∋ i, Δ ⊆ Λ(a)} ∂_{q_i} W_Δ`, integrated with
//! Störmer–Verlet (half kick, drift, half kick).

mod bound;
mod bracket;
pub mod io;
mod locality;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::BoxSystem;

pub use bound::{a_priori_matrix, expm, BandMatrix, BoundReport};
pub use bracket::{poisson_bracket, poisson_bracket_e0_h};
pub use locality::{locality_experiment, LocalityRow, LocalityTable};

/// Default per-site tripwire on `K_i + W_{{i}}`.
pub const BLOWUP_CEILING: f64 = 1e12;

/// Canonical coordinates on a box, site-major (`q[i * site_dim + c]`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Configuration {
    pub q: Vec<f64>,
    pub p: Vec<f64>,
}

impl Configuration {
    pub fn zeros(sys: &BoxSystem) -> Self {
        Configuration {
            q: vec![0.0; sys.ndof()],
            p: vec![0.0; sys.ndof()],
        }
    }

    pub fn new(sys: &BoxSystem, q: Vec<f64>, p: Vec<f64>) -> Result<Self> {
        if q.len() != sys.ndof() || p.len() != sys.ndof() {
            return Err(Error::InvalidState(format!(
                "configuration needs {} coordinates, got q: {}, p: {}",
                sys.ndof(),
                q.len(),
                p.len()
            )));
        }
        let mut cfg = Configuration { q, p };
        cfg.wrap(sys);
        Ok(cfg)
    }

    /// Wrap torus coordinates into `[0, period)`.
    pub fn wrap(&mut self, sys: &BoxSystem) {
        let model = sys.model();
        if !model.is_torus() {
            return;
        }
        let sd = sys.site_dim();
        for (k, x) in self.q.iter_mut().enumerate() {
            *x = model.wrap(k % sd, *x);
        }
    }

    pub fn site_q<'a>(&'a self, sys: &BoxSystem, site: usize) -> &'a [f64] {
        let sd = sys.site_dim();
        &self.q[site * sd..(site + 1) * sd]
    }

    pub fn site_p<'a>(&'a self, sys: &BoxSystem, site: usize) -> &'a [f64] {
        let sd = sys.site_dim();
        &self.p[site * sd..(site + 1) * sd]
    }

    /// Per-site noninteracting energies `K_i + W_{{i}}`.
    pub fn local_energies_ni(&self, sys: &BoxSystem) -> Vec<f64> {
        (0..sys.n_sites())
            .map(|s| sys.local_energy_ni(&self.q, &self.p, s))
            .collect()
    }

    pub fn hamiltonian(&self, sys: &BoxSystem) -> f64 {
        sys.hamiltonian(&self.q, &self.p)
    }

    pub fn is_finite(&self) -> bool {
        self.q.iter().chain(&self.p).all(|x| x.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    #[default]
    StormerVerlet,
}

/// Fixed-step schedule. The number of steps is `round(t_end / h)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegratorSchedule {
    pub h: f64,
    pub t_end: f64,
    #[serde(default)]
    pub scheme: Scheme,
}

impl IntegratorSchedule {
    pub fn new(h: f64, t_end: f64) -> Result<Self> {
        let s = IntegratorSchedule {
            h,
            t_end,
            scheme: Scheme::StormerVerlet,
        };
        s.steps()?;
        Ok(s)
    }

    pub fn steps(&self) -> Result<u64> {
        if !(self.h > 0.0) || !self.h.is_finite() {
            return Err(Error::InvalidSchedule(format!("step must be positive, got {}", self.h)));
        }
        if !(self.t_end >= 0.0) || !self.t_end.is_finite() {
            return Err(Error::InvalidSchedule(format!(
                "end time must be finite and non-negative, got {}",
                self.t_end
            )));
        }
        let n = (self.t_end / self.h).round();
        if n > 1e15 {
            return Err(Error::InvalidSchedule(format!("{n} steps is too many")));
        }
        Ok(n as u64)
    }
}

/// Force on site `i` of the severed system.
pub fn force(sys: &BoxSystem, cfg: &Configuration, site: usize) -> Vec<f64> {
    sys.force_at(&cfg.q, site)
}

/// Reusable Störmer–Verlet stepper. Caches the force at the current
/// positions so each step costs one force evaluation.
#[derive(Debug, Clone)]
pub struct Stepper<'a> {
    sys: &'a BoxSystem,
    f: Vec<f64>,
    fresh: bool,
}

impl<'a> Stepper<'a> {
    pub fn new(sys: &'a BoxSystem) -> Self {
        Stepper {
            sys,
            f: vec![0.0; sys.ndof()],
            fresh: false,
        }
    }

    /// Forget the cached force (call after modifying `q` externally).
    pub fn invalidate(&mut self) {
        self.fresh = false;
    }

    pub fn step(&mut self, cfg: &mut Configuration, h: f64) {
        if !self.fresh {
            self.sys.forces(&cfg.q, &mut self.f);
        }
        let half = 0.5 * h;
        for (p, f) in cfg.p.iter_mut().zip(&self.f) {
            *p += half * f;
        }
        for (q, p) in cfg.q.iter_mut().zip(&cfg.p) {
            *q += h * p;
        }
        cfg.wrap(self.sys);
        self.sys.forces(&cfg.q, &mut self.f);
        for (p, f) in cfg.p.iter_mut().zip(&self.f) {
            *p += half * f;
        }
        self.fresh = true;
    }
}

/// One Störmer–Verlet step.
pub fn step(sys: &BoxSystem, cfg: &Configuration, h: f64) -> Result<Configuration> {
    if !(h > 0.0) {
        return Err(Error::InvalidSchedule(format!("step must be positive, got {h}")));
    }
    let mut out = cfg.clone();
    Stepper::new(sys).step(&mut out, h);
    check_finite(sys, &out, h)?;
    Ok(out)
}

fn check_finite(sys: &BoxSystem, cfg: &Configuration, t: f64) -> Result<()> {
    let sd = sys.site_dim();
    if let Some(k) = cfg.q.iter().chain(&cfg.p).position(|x| !x.is_finite()) {
        let site = (k % cfg.q.len()) / sd;
        return Err(Error::NonFinite {
            site: sys.geometry().site(site).to_vec(),
            t,
        });
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvolveOptions {
    pub ceiling: f64,
    /// Record a snapshot every this many steps (and at the end).
    pub snapshot_every: Option<u64>,
    /// Check the tripwire every this many steps.
    pub check_every: u64,
}

impl Default for EvolveOptions {
    fn default() -> Self {
        EvolveOptions {
            ceiling: BLOWUP_CEILING,
            snapshot_every: None,
            check_every: 16,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub t: f64,
    pub cfg: Configuration,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub schedule: IntegratorSchedule,
    pub steps: u64,
    pub initial_energy: f64,
    pub final_energy: f64,
    pub last: Configuration,
    pub snapshots: Vec<Snapshot>,
}

impl Trajectory {
    pub fn relative_energy_drift(&self) -> f64 {
        let scale = self.initial_energy.abs().max(f64::MIN_POSITIVE);
        (self.final_energy - self.initial_energy).abs() / scale
    }
}

pub fn evolve(sys: &BoxSystem, cfg: &Configuration, schedule: &IntegratorSchedule) -> Result<Trajectory> {
    evolve_with(sys, cfg, schedule, &EvolveOptions::default())
}

pub fn evolve_with(
    sys: &BoxSystem,
    cfg: &Configuration,
    schedule: &IntegratorSchedule,
    opts: &EvolveOptions,
) -> Result<Trajectory> {
    let n = schedule.steps()?;
    let h = schedule.h;
    let mut cur = cfg.clone();
    cur.wrap(sys);
    let initial_energy = cur.hamiltonian(sys);
    let mut snapshots = Vec::new();
    if opts.snapshot_every.is_some() {
        snapshots.push(Snapshot { t: 0.0, cfg: cur.clone() });
    }
    let mut stepper = Stepper::new(sys);
    let check_every = opts.check_every.max(1);
    for k in 1..=n {
        stepper.step(&mut cur, h);
        if k % check_every == 0 || k == n {
            tripwire(sys, &cur, k as f64 * h, opts.ceiling)?;
        }
        if let Some(every) = opts.snapshot_every {
            if every > 0 && (k % every == 0 || k == n) {
                snapshots.push(Snapshot {
                    t: k as f64 * h,
                    cfg: cur.clone(),
                });
            }
        }
    }
    let final_energy = cur.hamiltonian(sys);
    Ok(Trajectory {
        schedule: *schedule,
        steps: n,
        initial_energy,
        final_energy,
        last: cur,
        snapshots,
    })
}

fn tripwire(sys: &BoxSystem, cfg: &Configuration, t: f64, ceiling: f64) -> Result<()> {
    check_finite(sys, cfg, t)?;
    for s in 0..sys.n_sites() {
        let e = sys.local_energy_ni(&cfg.q, &cfg.p, s);
        if !e.is_finite() {
            return Err(Error::NonFinite {
                site: sys.geometry().site(s).to_vec(),
                t,
            });
        }
        if e > ceiling {
            return Err(Error::BlowUp {
                site: sys.geometry().site(s).to_vec(),
                energy: e,
                ceiling,
                t,
            });
        }
    }
    Ok(())
}

/// `ϑ(q, p) = (q, -p)`.
pub fn time_reverse(cfg: &Configuration) -> Configuration {
    Configuration {
        q: cfg.q.clone(),
        p: cfg.p.iter().map(|x| -x).collect(),
    }
}

/// Sup-norm distance between two configurations (minimum image on a torus).
pub fn sup_distance(sys: &BoxSystem, a: &Configuration, b: &Configuration) -> f64 {
    let model = sys.model();
    let sd = sys.site_dim();
    let dq = a.q.iter().zip(&b.q).enumerate().map(|(k, (x, y))| {
        let d = x - y;
        match model.period(k % sd) {
            Some(l) => {
                let d = d.rem_euclid(l);
                d.min(l - d)
            }
            None => d.abs(),
        }
    });
    let dp = a.p.iter().zip(&b.p).map(|(x, y)| (x - y).abs());
    dq.chain(dp).fold(0.0, f64::max)
}

/// `ϑ ∘ τ_t ∘ ϑ ∘ τ_t` applied to `cfg`, returned with its sup-norm distance to `cfg`.
pub fn reversal_roundtrip(
    sys: &BoxSystem,
    cfg: &Configuration,
    schedule: &IntegratorSchedule,
) -> Result<(Configuration, f64)> {
    let fwd = evolve(sys, cfg, schedule)?;
    let back = evolve(sys, &time_reverse(&fwd.last), schedule)?;
    let end = time_reverse(&back.last);
    let err = sup_distance(sys, cfg, &end);
    Ok((end, err))
}

/// Finite-difference Jacobian determinant of one step, central differences
/// with increment `eps`.
pub fn step_jacobian_det(sys: &BoxSystem, cfg: &Configuration, h: f64, eps: f64) -> Result<f64> {
    let n = sys.ndof();
    let mut jac = nalgebra::DMatrix::zeros(2 * n, 2 * n);
    let flat = |c: &Configuration| -> Vec<f64> { c.q.iter().chain(&c.p).copied().collect() };
    for col in 0..2 * n {
        let mut plus = cfg.clone();
        let mut minus = cfg.clone();
        if col < n {
            plus.q[col] += eps;
            minus.q[col] -= eps;
        } else {
            plus.p[col - n] += eps;
            minus.p[col - n] -= eps;
        }
        // no wrapping: differences must stay in the covering space
        let mut sp = Stepper::new(sys);
        let mut a = plus;
        let mut b = minus;
        step_unwrapped(&mut sp, &mut a, h);
        step_unwrapped(&mut sp, &mut b, h);
        let (fa, fb) = (flat(&a), flat(&b));
        for row in 0..2 * n {
            jac[(row, col)] = (fa[row] - fb[row]) / (2.0 * eps);
        }
    }
    Ok(jac.determinant())
}

fn step_unwrapped(sp: &mut Stepper<'_>, cfg: &mut Configuration, h: f64) {
    let sys = sp.sys;
    sys.forces(&cfg.q, &mut sp.f);
    for (p, f) in cfg.p.iter_mut().zip(&sp.f) {
        *p += 0.5 * h * f;
    }
    for (q, p) in cfg.q.iter_mut().zip(&cfg.p) {
        *q += h * p;
    }
    sys.forces(&cfg.q, &mut sp.f);
    for (p, f) in cfg.p.iter_mut().zip(&sp.f) {
        *p += 0.5 * h * f;
    }
    sp.fresh = false;
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{box_sites, reference, Body, InteractionTerm, LatticeModel, PotentialSpec, Space};

    fn single_site(onsite: &[f64]) -> BoxSystem {
        let m = LatticeModel::new(1, 1, Space::Euclidean, PotentialSpec::polynomial(onsite), vec![], 1).unwrap();
        // Λ(1) has 2 sites; uncoupled
        BoxSystem::new(&m, &box_sites(1, 1).unwrap()).unwrap()
    }

    #[test]
    fn onsite_force() {
        let sys = single_site(&[0.0, 0.0, 0.5]);
        let cfg = Configuration::new(&sys, vec![3.0, 0.0], vec![0.0; 2]).unwrap();
        assert_eq!(force(&sys, &cfg, 0), vec![-3.0]);
    }

    #[test]
    fn two_site_pair_force() {
        // pair (q0 - q1)^2 / 2 with on-site q^2/2: force at 0 for q = (1, 0) is -2
        let m = LatticeModel::new(
            1,
            1,
            Space::Euclidean,
            PotentialSpec::polynomial(&[0.0, 0.0, 0.5]),
            vec![InteractionTerm::new(vec![vec![0], vec![1]], Body::difference(&[0.0, 0.0, 0.5]))],
            1,
        )
        .unwrap();
        let sys = BoxSystem::new(&m, &box_sites(1, 1).unwrap()).unwrap();
        let cfg = Configuration::new(&sys, vec![1.0, 0.0], vec![0.0; 2]).unwrap();
        assert_eq!(force(&sys, &cfg, 0), vec![-2.0]);
        assert_eq!(force(&sys, &cfg, 1), vec![1.0]);
    }

    #[test]
    fn boundary_site_feels_no_outside_bond() {
        let sys = BoxSystem::new(&reference::harmonic_chain(), &box_sites(1, 2).unwrap()).unwrap();
        // only the last site displaced; its outside neighbour would pull, but is severed
        let cfg = Configuration::new(&sys, vec![0.0, 0.0, 0.0, 1.0], vec![0.0; 4]).unwrap();
        // on-site -1, bond to the left -(1/2)
        assert_eq!(force(&sys, &cfg, 3), vec![-1.5]);
    }

    #[test]
    fn one_verlet_step_of_an_oscillator() {
        let sys = single_site(&[0.0, 0.0, 0.5]);
        let h = 0.1;
        let cfg = Configuration::new(&sys, vec![1.0, 0.0], vec![0.0, 0.0]).unwrap();
        let next = step(&sys, &cfg, h).unwrap();
        assert!((next.q[0] - (1.0 - h * h / 2.0)).abs() < 1e-15);
    }

    #[test]
    fn drift_from_equilibrium() {
        // from q = 0 the first half-kick vanishes: q' = h p, p' = p - (h/2) q'
        let sys = single_site(&[0.0, 0.0, 0.5]);
        let cfg = Configuration::new(&sys, vec![0.0, 0.0], vec![0.5, -1.0]).unwrap();
        let next = step(&sys, &cfg, 0.25).unwrap();
        assert_eq!(next.q, vec![0.125, -0.25]);
        assert_eq!(next.p, vec![0.5 - 0.125 * 0.125, -1.0 + 0.125 * 0.25]);
    }

    #[test]
    fn oscillator_matches_cosine() {
        let sys = single_site(&[0.0, 0.0, 0.5]);
        let cfg = Configuration::new(&sys, vec![1.0, 0.0], vec![0.0, 0.0]).unwrap();
        let tr = evolve(&sys, &cfg, &IntegratorSchedule::new(1e-3, 10.0).unwrap()).unwrap();
        assert_eq!(tr.steps, 10_000);
        assert!((tr.last.q[0] - 10f64.cos()).abs() < 1e-4);
    }

    #[test]
    fn zero_time_is_identity() {
        let sys = BoxSystem::new(&reference::fpu_chain(), &box_sites(1, 3).unwrap()).unwrap();
        let cfg = Configuration::new(&sys, vec![0.1, -0.2, 0.3, 0.0, 1.0, -1.0], vec![0.5; 6]).unwrap();
        let tr = evolve(&sys, &cfg, &IntegratorSchedule::new(1e-3, 0.0).unwrap()).unwrap();
        assert_eq!(tr.last, cfg);
    }

    #[test]
    fn drift_scales_with_h_squared() {
        let sys = BoxSystem::new(&reference::fpu_chain(), &box_sites(1, 4).unwrap()).unwrap();
        let q: Vec<f64> = (0..8).map(|i| (i as f64 * 0.7).sin()).collect();
        let p: Vec<f64> = (0..8).map(|i| (i as f64 * 1.3).cos()).collect();
        let cfg = Configuration::new(&sys, q, p).unwrap();
        // maximum deviation over the run, sampled on a common time grid
        let max_dev = |h: f64| {
            let every = (0.1 / h).round() as u64;
            let opts = EvolveOptions {
                snapshot_every: Some(every),
                ..Default::default()
            };
            let tr = evolve_with(&sys, &cfg, &IntegratorSchedule::new(h, 2.0).unwrap(), &opts).unwrap();
            tr.snapshots
                .iter()
                .map(|s| (s.cfg.hamiltonian(&sys) - tr.initial_energy).abs())
                .fold(0.0, f64::max)
        };
        let ratio = max_dev(0.02) / max_dev(0.01);
        assert!((3.5..=4.5).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn reversal_is_an_involution_and_roundtrips() {
        let sys = BoxSystem::new(&reference::rotator_chain(), &box_sites(1, 3).unwrap()).unwrap();
        let cfg = Configuration::new(&sys, vec![0.1, 2.0, 3.0, 6.0, 1.0, 4.0], vec![0.3, -0.2, 1.0, 0.0, 0.5, -1.5])
            .unwrap();
        assert_eq!(time_reverse(&time_reverse(&cfg)), cfg);
        let (_, err) = reversal_roundtrip(&sys, &cfg, &IntegratorSchedule::new(1e-3, 1.0).unwrap()).unwrap();
        assert!(err < 1e-8, "{err}");
    }

    #[test]
    fn blow_up_is_detected() {
        // quartic well with a huge step diverges
        let sys = single_site(&[0.0, 0.0, 0.5, 0.0, 1.0]);
        let cfg = Configuration::new(&sys, vec![10.0, 0.0], vec![0.0, 0.0]).unwrap();
        let err = evolve(&sys, &cfg, &IntegratorSchedule::new(0.5, 50.0).unwrap()).unwrap_err();
        assert!(matches!(err, Error::BlowUp { .. } | Error::NonFinite { .. }), "{err:?}");
    }

    #[test]
    fn schedule_validation() {
        assert!(IntegratorSchedule::new(0.0, 1.0).is_err());
        assert!(IntegratorSchedule::new(-1.0, 1.0).is_err());
        assert!(IntegratorSchedule::new(0.1, f64::NAN).is_err());
        assert_eq!(IntegratorSchedule::new(0.1, 1.0).unwrap().steps().unwrap(), 10);
    }

    #[test]
    fn step_preserves_volume() {
        let m = reference::fpu_chain();
        let sys = BoxSystem::new(&m, &box_sites(1, 1).unwrap()).unwrap();
        let cfg = Configuration::new(&sys, vec![0.8, -0.3], vec![0.2, 0.9]).unwrap();
        let det = step_jacobian_det(&sys, &cfg, 0.05, 1e-5).unwrap();
        assert!((det - 1.0).abs() < 1e-6, "det {det}");
    }
}
