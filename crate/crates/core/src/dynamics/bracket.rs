//! The Poisson bracket of a full local energy with the Hamiltonian.

use super::Configuration;
use crate::error::{Error, Result};
use crate::model::BoxSystem;

/// `{E_i, H} = sum_{Δ ∋ i, #Δ >= 2} ( -p_i ∂_i W_Δ + (1/#Δ) sum_{x ∈ Δ} p_x ∂_x W_Δ )`.
///
/// Every term through `site` must lie inside the box.
pub fn poisson_bracket(sys: &BoxSystem, cfg: &Configuration, site: usize) -> Result<f64> {
    let sd = sys.site_dim();
    let instances = sys.full_instances_at(site)?;
    let terms = sys.model().terms();
    let mut buf = Vec::with_capacity(3 * sd);
    let mut g = vec![0.0; 3 * sd];
    let mut total = 0.0;
    for inst in &instances {
        sys.gather(&cfg.q, &inst.sites, &mut buf);
        let g = &mut g[..buf.len()];
        terms[inst.term].body.grad(&buf, sd, g);
        let m = inst.sites.len() as f64;
        let mut avg = 0.0;
        let mut own = 0.0;
        for (k, &x) in inst.sites.iter().enumerate() {
            let px = &cfg.p[x * sd..(x + 1) * sd];
            let dot: f64 = px.iter().zip(&g[k * sd..(k + 1) * sd]).map(|(a, b)| a * b).sum();
            avg += dot;
            if x == site {
                own = dot;
            }
        }
        total += avg / m - own;
    }
    Ok(total)
}

/// The bracket at the lattice origin.
pub fn poisson_bracket_e0_h(sys: &BoxSystem, cfg: &Configuration) -> Result<f64> {
    let origin = vec![0; sys.model().nu()];
    let idx = sys
        .geometry()
        .index_of(&origin)
        .ok_or(Error::SiteOutsideBox(origin))?;
    poisson_bracket(sys, cfg, idx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{box_sites, reference, Body, InteractionTerm, LatticeModel, PotentialSpec, Space};

    fn full_energy(sys: &BoxSystem, q: &[f64], p: &[f64], site: usize) -> f64 {
        sys.local_energy_full(q, p, site).unwrap()
    }

    #[test]
    fn zero_momenta_give_zero() {
        let sys = BoxSystem::new(&reference::fpu_chain(), &box_sites(1, 2).unwrap()).unwrap();
        let mut cfg = Configuration::zeros(&sys);
        cfg.q = vec![0.3, -1.0, 2.0, 0.5];
        assert_eq!(poisson_bracket_e0_h(&sys, &cfg).unwrap(), 0.0);
    }

    #[test]
    fn no_interactions_give_zero() {
        let sys = BoxSystem::new(&reference::harmonic_sites(), &box_sites(1, 2).unwrap()).unwrap();
        let cfg = Configuration::new(&sys, vec![0.3, -1.0, 2.0, 0.5], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(poisson_bracket_e0_h(&sys, &cfg).unwrap(), 0.0);
    }

    #[test]
    fn pair_model_by_hand() {
        // on-site q^2/2, pair (q1 - q0)^2 / 2. Origin sits in the middle of a
        // 4-site box: terms through 0 are {-1, 0} and {0, 1}.
        let m = LatticeModel::new(
            1,
            1,
            Space::Euclidean,
            PotentialSpec::polynomial(&[0.0, 0.0, 0.5]),
            vec![InteractionTerm::new(vec![vec![0], vec![1]], Body::difference(&[0.0, 0.0, 0.5]))],
            1,
        )
        .unwrap();
        let sys = BoxSystem::new(&m, &box_sites(1, 2).unwrap()).unwrap();
        // sites -1, 0, 1, 2; origin has index 1
        let cfg = Configuration::new(&sys, vec![0.0, 1.0, 0.0, 0.0], vec![0.0, 0.0, 1.0, 0.0]).unwrap();
        // bond {0,1}: ∂_0 W = q0 - q1 = 1, ∂_1 W = -1; -p0*1 + (p0*1 + p1*(-1))/2 = -1/2
        // bond {-1,0}: ∂W involves p_{-1} = p0 = 0, contributes 0
        assert_eq!(poisson_bracket_e0_h(&sys, &cfg).unwrap(), -0.5);
    }

    #[test]
    fn matches_time_derivative_of_local_energy() {
        // {E_0, H} = dE_0/dt along the unsevered flow; compare with finite
        // differences of the full local energy along the exact vector field
        for model in reference::all() {
            let g = box_sites(model.nu(), 3).unwrap();
            let sys = BoxSystem::new(&model, &g).unwrap();
            let n = sys.ndof();
            let q: Vec<f64> = (0..n).map(|i| ((i * 13 % 7) as f64 - 3.0) * 0.21).collect();
            let p: Vec<f64> = (0..n).map(|i| ((i * 5 % 9) as f64 - 4.0) * 0.17).collect();
            let cfg = Configuration { q: q.clone(), p: p.clone() };
            let site = g.index_of(&vec![0; model.nu()]).unwrap();
            let bracket = poisson_bracket(&sys, &cfg, site).unwrap();
            // the box force equals the full force on sites whose neighbourhood is inside
            let mut f = vec![0.0; n];
            sys.forces(&q, &mut f);
            let eps = 1e-6;
            let shifted = |s: f64| {
                let qs: Vec<f64> = q.iter().zip(&p).map(|(x, v)| x + s * v).collect();
                let ps: Vec<f64> = p.iter().zip(&f).map(|(v, a)| v + s * a).collect();
                full_energy(&sys, &qs, &ps, site)
            };
            let fd = (shifted(eps) - shifted(-eps)) / (2.0 * eps);
            assert!((fd - bracket).abs() < 1e-6, "{}: {fd} vs {bracket}", model.hash());
        }
    }

    #[test]
    fn box_too_small_is_an_error() {
        let sys = BoxSystem::new(&reference::harmonic_chain(), &box_sites(1, 1).unwrap()).unwrap();
        let cfg = Configuration::zeros(&sys);
        // Λ(1) = {0, 1}; bond {-1, 0} leaves the box
        assert!(matches!(poisson_bracket_e0_h(&sys, &cfg), Err(Error::BoxTooSmall(_))));
    }
}
