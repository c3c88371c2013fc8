//! Strictly local, bounded Lipschitz observables.

use serde::{Deserialize, Serialize};

use crate::dynamics::Configuration;
use crate::model::{add, BoxSystem};

/// Building blocks. Positions on a torus enter through `sin(2π q / L)` so
/// every observable is periodic there.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ObservableKind {
    Constant { value: f64 },
    TanhQ,
    TanhP,
    GaussQ,
    GaussP,
    CosQ,
    SinQPlusP,
    InverseEnergy,
    TanhBondQ,
    TanhBondP,
    GaussBondQ,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observable {
    pub name: String,
    pub kind: ObservableKind,
    /// Largest `|offset|_∞` the observable reads around its anchor site.
    pub support: i64,
    /// Lipschitz constant with respect to `max_{|i| <= s} |x_i - y_i|`.
    pub lipschitz: f64,
}

impl Observable {
    pub fn new(kind: ObservableKind) -> Self {
        let (name, support, lipschitz) = match &kind {
            ObservableKind::Constant { .. } => ("const", 0, 0.0),
            ObservableKind::TanhQ => ("tanh_q", 0, 1.0),
            ObservableKind::TanhP => ("tanh_p", 0, 1.0),
            ObservableKind::GaussQ => ("gauss_q", 0, 0.86),
            ObservableKind::GaussP => ("gauss_p", 0, 0.86),
            ObservableKind::CosQ => ("cos_q", 0, 1.0),
            ObservableKind::SinQPlusP => ("sin_q_plus_p", 0, 2.0),
            ObservableKind::InverseEnergy => ("inverse_energy", 0, 1.0),
            ObservableKind::TanhBondQ => ("tanh_bond_q", 1, 2.0),
            ObservableKind::TanhBondP => ("tanh_bond_p", 1, 2.0),
            ObservableKind::GaussBondQ => ("gauss_bond_q", 1, 1.72),
        };
        Observable {
            name: name.into(),
            kind,
            support,
            lipschitz,
        }
    }

    pub fn constant(value: f64) -> Self {
        Observable::new(ObservableKind::Constant { value })
    }

    /// Evaluate with anchor `site` (box index). The caller guarantees the
    /// support fits inside the box.
    pub fn eval(&self, sys: &BoxSystem, cfg: &Configuration, site: usize) -> f64 {
        let sd = sys.site_dim();
        let model = sys.model();
        let pos = |s: usize| -> f64 {
            let x = cfg.q[s * sd];
            match model.period(0) {
                Some(l) => (std::f64::consts::TAU * x / l).sin(),
                None => x,
            }
        };
        let mom = |s: usize| cfg.p[s * sd];
        let neighbour = || -> usize {
            let mut e = vec![0; model.nu()];
            e[0] = 1;
            let g = sys.geometry();
            g.index_of(&add(g.site(site), &e)).expect("observable support inside the box")
        };
        match &self.kind {
            ObservableKind::Constant { value } => *value,
            ObservableKind::TanhQ => pos(site).tanh(),
            ObservableKind::TanhP => mom(site).tanh(),
            ObservableKind::GaussQ => (-pos(site).powi(2)).exp(),
            ObservableKind::GaussP => (-mom(site).powi(2)).exp(),
            ObservableKind::CosQ => match model.period(0) {
                Some(l) => (std::f64::consts::TAU * cfg.q[site * sd] / l).cos(),
                None => pos(site).cos(),
            },
            ObservableKind::SinQPlusP => (pos(site) + mom(site)).sin(),
            ObservableKind::InverseEnergy => 1.0 / (1.0 + 0.5 * (pos(site).powi(2) + mom(site).powi(2))),
            ObservableKind::TanhBondQ => (pos(site) - pos(neighbour())).tanh(),
            ObservableKind::TanhBondP => (mom(site) + mom(neighbour())).tanh(),
            ObservableKind::GaussBondQ => (-(pos(site) - pos(neighbour())).powi(2)).exp(),
        }
    }

    /// Anchors in `candidates` whose support stays inside the box.
    pub fn admissible_anchors(&self, sys: &BoxSystem, candidates: &[usize]) -> Vec<usize> {
        let g = sys.geometry();
        let a = g.scale();
        candidates
            .iter()
            .copied()
            .filter(|&s| {
                let x = g.site(s);
                x.iter().all(|&c| c - self.support > -a && c + self.support <= a)
            })
            .collect()
    }
}

/// The standard panel of ten observables used by the equilibrium diagnostics.
pub fn standard_panel() -> Vec<Observable> {
    use ObservableKind::*;
    [
        TanhQ,
        TanhP,
        GaussQ,
        GaussP,
        CosQ,
        SinQPlusP,
        InverseEnergy,
        TanhBondQ,
        TanhBondP,
        GaussBondQ,
    ]
    .into_iter()
    .map(Observable::new)
    .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{box_sites, reference};

    #[test]
    fn panel_has_ten_bounded_entries() {
        let p = standard_panel();
        assert_eq!(p.len(), 10);
        let sys = BoxSystem::new(&reference::fpu_chain(), &box_sites(1, 3).unwrap()).unwrap();
        let cfg = Configuration {
            q: vec![100.0, -3.0, 0.5, 2.0, 1e6, -1e6],
            p: vec![-50.0, 1.0, 0.0, 3.0, 7.0, 0.1],
        };
        for o in &p {
            for s in o.admissible_anchors(&sys, &(0..6).collect::<Vec<_>>()) {
                assert!(o.eval(&sys, &cfg, s).abs() <= 1.0, "{}", o.name);
            }
        }
    }

    #[test]
    fn lipschitz_constants_hold_on_random_pairs() {
        let sys = BoxSystem::new(&reference::fpu_chain(), &box_sites(1, 3).unwrap()).unwrap();
        let mut rng = crate::stats::substream(0, 0);
        use rand::Rng;
        for o in standard_panel() {
            for _ in 0..2000 {
                let x = Configuration {
                    q: (0..6).map(|_| rng.random_range(-3.0..3.0)).collect(),
                    p: (0..6).map(|_| rng.random_range(-3.0..3.0)).collect(),
                };
                let mut y = x.clone();
                for v in y.q.iter_mut().chain(y.p.iter_mut()) {
                    *v += rng.random_range(-0.01..0.01);
                }
                let d = x.q.iter().zip(&y.q).chain(x.p.iter().zip(&y.p)).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                let diff = (o.eval(&sys, &x, 2) - o.eval(&sys, &y, 2)).abs();
                assert!(diff <= o.lipschitz * d * (1.0 + 1e-9) + 1e-15, "{}: {diff} > {} {d}", o.name, o.lipschitz);
            }
        }
    }

    #[test]
    fn bond_observables_need_room() {
        let sys = BoxSystem::new(&reference::fpu_chain(), &box_sites(1, 2).unwrap()).unwrap();
        let o = Observable::new(ObservableKind::TanhBondQ);
        // sites -1, 0, 1, 2: site 2 has no right neighbour, -1 no left one
        assert_eq!(o.admissible_anchors(&sys, &[0, 1, 2, 3]), vec![1, 2]);
    }
}
