use nalgebra::DMatrix;

use super::geometry::{add, sub, BoxGeometry, Site};
use super::LatticeModel;
use crate::error::{Error, Result};

/// One translate of an interaction term, given by the flat indices of its sites.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TermInstance {
    pub term: usize,
    pub sites: Vec<usize>,
}

/// A model bound to a box, with the severed term list precomputed.
///
/// Only translates `Δ ⊆ Λ(a)` are kept: terms straddling the boundary are
/// dropped, which is exactly the severing of the dynamics at the box edge.
#[derive(Debug, Clone)]
pub struct BoxSystem {
    model: LatticeModel,
    geom: BoxGeometry,
    instances: Vec<TermInstance>,
    by_site: Vec<Vec<usize>>,
}

impl BoxSystem {
    pub fn new(model: &LatticeModel, geom: &BoxGeometry) -> Result<Self> {
        if model.nu() != geom.nu() {
            return Err(Error::InvalidModel(format!(
                "model has nu = {} but the box has nu = {}",
                model.nu(),
                geom.nu()
            )));
        }
        let mut instances = Vec::new();
        for (t, term) in model.terms().iter().enumerate() {
            for base in geom.sites() {
                let idx: Option<Vec<usize>> = term.offsets.iter().map(|o| geom.index_of(&add(base, o))).collect();
                if let Some(sites) = idx {
                    instances.push(TermInstance { term: t, sites });
                }
            }
        }
        let mut by_site = vec![Vec::new(); geom.len()];
        for (k, inst) in instances.iter().enumerate() {
            for &s in &inst.sites {
                by_site[s].push(k);
            }
        }
        Ok(BoxSystem {
            model: model.clone(),
            geom: geom.clone(),
            instances,
            by_site,
        })
    }

    pub fn model(&self) -> &LatticeModel {
        &self.model
    }

    pub fn geometry(&self) -> &BoxGeometry {
        &self.geom
    }

    pub fn n_sites(&self) -> usize {
        self.geom.len()
    }

    pub fn site_dim(&self) -> usize {
        self.model.site_dim()
    }

    pub fn ndof(&self) -> usize {
        self.n_sites() * self.site_dim()
    }

    pub fn instances(&self) -> &[TermInstance] {
        &self.instances
    }

    /// Indices into [`Self::instances`] of the severed terms touching `site`.
    pub fn instances_at(&self, site: usize) -> &[usize] {
        &self.by_site[site]
    }

    pub(crate) fn gather(&self, q: &[f64], sites: &[usize], buf: &mut Vec<f64>) {
        let sd = self.site_dim();
        buf.clear();
        for &s in sites {
            buf.extend_from_slice(&q[s * sd..(s + 1) * sd]);
        }
    }

    /// `-grad V_Λ(q)` for the severed potential, written into `out`.
    pub fn forces(&self, q: &[f64], out: &mut [f64]) {
        let sd = self.site_dim();
        let onsite = self.model.onsite();
        for (o, &x) in out.iter_mut().zip(q) {
            *o = -onsite.d1(x);
        }
        let mut buf = Vec::with_capacity(3 * sd);
        let mut g = vec![0.0; 3 * sd];
        for inst in &self.instances {
            let body = &self.model.terms()[inst.term].body;
            self.gather(q, &inst.sites, &mut buf);
            let g = &mut g[..buf.len()];
            body.grad(&buf, sd, g);
            for (k, &s) in inst.sites.iter().enumerate() {
                for c in 0..sd {
                    out[s * sd + c] -= g[k * sd + c];
                }
            }
        }
    }

    /// `F(q + dq) - F(q)` evaluated without subtracting two nearby forces, so
    /// the result keeps full relative precision when `dq` is tiny.
    pub fn force_diff(&self, q: &[f64], dq: &[f64], out: &mut [f64]) {
        let sd = self.site_dim();
        let onsite = self.model.onsite();
        for ((o, &x), &d) in out.iter_mut().zip(q).zip(dq) {
            *o = -onsite.d1_diff(x, d);
        }
        let mut buf = Vec::with_capacity(3 * sd);
        let mut dbuf = Vec::with_capacity(3 * sd);
        let mut g = vec![0.0; 3 * sd];
        for inst in &self.instances {
            self.gather(dq, &inst.sites, &mut dbuf);
            if dbuf.iter().all(|&d| d == 0.0) {
                continue;
            }
            self.gather(q, &inst.sites, &mut buf);
            let g = &mut g[..buf.len()];
            self.model.terms()[inst.term].body.grad_diff(&buf, &dbuf, sd, g);
            for (k, &s) in inst.sites.iter().enumerate() {
                for c in 0..sd {
                    out[s * sd + c] -= g[k * sd + c];
                }
            }
        }
    }

    /// Force on a single site.
    pub fn force_at(&self, q: &[f64], site: usize) -> Vec<f64> {
        let sd = self.site_dim();
        let onsite = self.model.onsite();
        let mut f: Vec<f64> = q[site * sd..(site + 1) * sd].iter().map(|&x| -onsite.d1(x)).collect();
        let mut buf = Vec::new();
        let mut g = vec![0.0; 3 * sd];
        for &k in &self.by_site[site] {
            let inst = &self.instances[k];
            let body = &self.model.terms()[inst.term].body;
            self.gather(q, &inst.sites, &mut buf);
            let g = &mut g[..buf.len()];
            body.grad(&buf, sd, g);
            let slot = inst.sites.iter().position(|&s| s == site).expect("site in instance");
            for c in 0..sd {
                f[c] -= g[slot * sd + c];
            }
        }
        f
    }

    pub fn onsite_energy(&self, q: &[f64], site: usize) -> f64 {
        let sd = self.site_dim();
        self.model.onsite().value(&q[site * sd..(site + 1) * sd])
    }

    pub fn kinetic_energy(&self, p: &[f64], site: usize) -> f64 {
        let sd = self.site_dim();
        0.5 * p[site * sd..(site + 1) * sd].iter().map(|x| x * x).sum::<f64>()
    }

    /// Noninteracting local energy `K_i + W_{{i}}`.
    pub fn local_energy_ni(&self, q: &[f64], p: &[f64], site: usize) -> f64 {
        self.kinetic_energy(p, site) + self.onsite_energy(q, site)
    }

    pub fn instance_value(&self, q: &[f64], inst: &TermInstance) -> f64 {
        let mut buf = Vec::new();
        self.gather(q, &inst.sites, &mut buf);
        self.model.terms()[inst.term].body.value(&buf, self.site_dim())
    }

    /// Severed potential energy `sum W_{{i}} + sum_{Δ ⊆ Λ} W_Δ`.
    pub fn potential_energy(&self, q: &[f64]) -> f64 {
        let sd = self.site_dim();
        let onsite: f64 = (0..self.n_sites())
            .map(|s| self.model.onsite().value(&q[s * sd..(s + 1) * sd]))
            .sum();
        let inter: f64 = self.instances.iter().map(|i| self.instance_value(q, i)).sum();
        onsite + inter
    }

    /// Box Hamiltonian `H_Λ`.
    pub fn hamiltonian(&self, q: &[f64], p: &[f64]) -> f64 {
        0.5 * p.iter().map(|x| x * x).sum::<f64>() + self.potential_energy(q)
    }

    /// All translates of all terms containing `site`, unsevered. Errors if one
    /// of them leaves the box.
    pub fn full_instances_at(&self, site: usize) -> Result<Vec<TermInstance>> {
        let here = self.geom.site(site).to_vec();
        let mut out = Vec::new();
        for (t, term) in self.model.terms().iter().enumerate() {
            for o in &term.offsets {
                let base: Site = sub(&here, o);
                let mut sites = Vec::with_capacity(term.arity());
                for o2 in &term.offsets {
                    let s = add(&base, o2);
                    match self.geom.index_of(&s) {
                        Some(i) => sites.push(i),
                        None => {
                            return Err(Error::BoxTooSmall(format!(
                                "term {t} through site {here:?} reaches {s:?} outside the box"
                            )))
                        }
                    }
                }
                out.push(TermInstance { term: t, sites });
            }
        }
        Ok(out)
    }

    /// Full local energy `E_i = K_i + sum_{Δ ∋ i} W_Δ / #Δ`.
    pub fn local_energy_full(&self, q: &[f64], p: &[f64], site: usize) -> Result<f64> {
        let mut e = self.local_energy_ni(q, p, site);
        for inst in self.full_instances_at(site)? {
            e += self.instance_value(q, &inst) / inst.sites.len() as f64;
        }
        Ok(e)
    }

    /// Hessian of the severed potential.
    pub fn hessian(&self, q: &[f64]) -> DMatrix<f64> {
        let sd = self.site_dim();
        let n = self.ndof();
        let mut h = DMatrix::zeros(n, n);
        for (i, &x) in q.iter().enumerate() {
            h[(i, i)] += self.model.onsite().d2(x);
        }
        let mut buf = Vec::new();
        for inst in &self.instances {
            self.gather(q, &inst.sites, &mut buf);
            let m = buf.len();
            let mut local = vec![0.0; m * m];
            self.model.terms()[inst.term].body.hess_add(&buf, sd, &mut local);
            for a in 0..m {
                let ga = inst.sites[a / sd] * sd + a % sd;
                for b in 0..m {
                    let gb = inst.sites[b / sd] * sd + b % sd;
                    h[(ga, gb)] += local[a * m + b];
                }
            }
        }
        h
    }

    /// Sites whose distance to the complement exceeds `min_gamma`.
    pub fn sites_beyond(&self, min_gamma: u64) -> Vec<usize> {
        (0..self.n_sites())
            .filter(|&s| match self.model.gamma_to_complement(&self.geom, self.geom.site(s)) {
                None => true,
                Some(g) => g > min_gamma,
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{box_sites, reference};

    #[test]
    fn severed_instances_of_a_chain() {
        let m = reference::harmonic_chain();
        let sys = BoxSystem::new(&m, &box_sites(1, 2).unwrap()).unwrap();
        // 4 sites, 3 bonds inside
        assert_eq!(sys.instances().len(), 3);
    }

    #[test]
    fn three_site_energy() {
        let m = reference::harmonic_chain();
        // box of 4 sites; put q = (1, 0, 0, 0)
        let sys = BoxSystem::new(&m, &box_sites(1, 2).unwrap()).unwrap();
        let q = [1.0, 0.0, 0.0, 0.0];
        let p = [0.0; 4];
        assert!((sys.hamiltonian(&q, &p) - 0.75).abs() < 1e-15);
    }

    #[test]
    fn full_energies_sum_to_hamiltonian_without_boundary_terms() {
        let m = reference::harmonic_chain();
        let sys = BoxSystem::new(&m, &box_sites(1, 4).unwrap()).unwrap();
        // zero at the edges so boundary-crossing bonds vanish
        let q = [0.0, 0.0, 0.3, -1.2, 0.5, 0.9, 0.0, 0.0];
        let p = [0.0, 0.0, 0.2, 0.1, -0.4, 0.3, 0.0, 0.0];
        let total: f64 = (1..7).map(|s| sys.local_energy_full(&q, &p, s).unwrap()).sum();
        assert!((total - sys.hamiltonian(&q, &p)).abs() < 1e-12);
        assert!(sys.local_energy_full(&q, &p, 0).is_err());
    }

    #[test]
    fn forces_match_energy_gradient() {
        for m in reference::all() {
            let g = box_sites(m.nu(), 2).unwrap();
            let sys = BoxSystem::new(&m, &g).unwrap();
            let q: Vec<f64> = (0..sys.ndof()).map(|i| ((i * 37 % 11) as f64 - 5.0) * 0.17).collect();
            let mut f = vec![0.0; q.len()];
            sys.forces(&q, &mut f);
            let h = 1e-6;
            for i in 0..q.len() {
                let mut qp = q.clone();
                let mut qm = q.clone();
                qp[i] += h;
                qm[i] -= h;
                let fd = -(sys.potential_energy(&qp) - sys.potential_energy(&qm)) / (2.0 * h);
                assert!((f[i] - fd).abs() < 1e-6, "{}: {} vs {}", m.hash(), f[i], fd);
            }
            let s = sys.n_sites() / 2;
            let sd = sys.site_dim();
            assert_eq!(sys.force_at(&q, s), f[s * sd..(s + 1) * sd].to_vec());
        }
    }
}
