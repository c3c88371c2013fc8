//! Lattice geometry, interaction families and checks of the structural
//! assumptions (finite range, pinning, domination by the pinning potential).

mod geometry;
pub mod io;
mod potential;
pub mod reference;
mod system;
mod validate;

use std::collections::{HashMap, HashSet, VecDeque};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use geometry::{add, box_sites, linf_norm, sub, BoxGeometry, Site};
pub use potential::{Body, InteractionTerm, Monomial, PotentialSpec};
pub use system::{BoxSystem, TermInstance};
pub use validate::{validate_assumptions, AssumptionCheck, AssumptionReport, Probe, ProbePoints};

use crate::error::{Error, Result};

/// Configuration space of one site.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Space {
    Euclidean,
    /// Coordinates live in `[0, period[c])`.
    Torus { period: Vec<f64> },
}

/// A finite-range, translation-invariant lattice model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatticeModel {
    nu: usize,
    site_dim: usize,
    space: Space,
    onsite: PotentialSpec,
    terms: Vec<InteractionTerm>,
    range: i64,
}

impl LatticeModel {
    pub fn new(
        nu: usize,
        site_dim: usize,
        space: Space,
        onsite: PotentialSpec,
        terms: Vec<InteractionTerm>,
        range: i64,
    ) -> Result<Self> {
        if nu == 0 || site_dim == 0 {
            return Err(Error::InvalidModel("nu and site_dim must be positive".into()));
        }
        if range < 1 {
            return Err(Error::InvalidModel(format!("range must be positive, got {range}")));
        }
        onsite.check()?;
        match &space {
            Space::Euclidean => {
                if onsite.is_cosine() {
                    return Err(Error::InvalidModel(
                        "cosine on-site potentials require a torus".into(),
                    ));
                }
            }
            Space::Torus { period } => {
                if period.len() != site_dim || period.iter().any(|&l| !(l > 0.0 && l.is_finite())) {
                    return Err(Error::InvalidModel("torus needs one positive period per coordinate".into()));
                }
                if !onsite.is_cosine() {
                    return Err(Error::InvalidModel(
                        "polynomial potentials are not periodic; use the cosine family on a torus".into(),
                    ));
                }
                if terms.iter().any(|t| !matches!(t.body, Body::Cosine { .. })) {
                    return Err(Error::InvalidModel(
                        "only cosine pair bodies are periodic".into(),
                    ));
                }
            }
        }
        let mut canonical = Vec::with_capacity(terms.len());
        for term in &terms {
            term.check(nu, site_dim)?;
            let c = term.canonical(site_dim);
            if c.diameter() > range {
                let offset = c
                    .offsets
                    .iter()
                    .max_by_key(|o| linf_norm(o))
                    .cloned()
                    .unwrap_or_default();
                return Err(Error::OffsetOutOfRange { offset, range });
            }
            canonical.push(c);
        }
        Ok(LatticeModel {
            nu,
            site_dim,
            space,
            onsite,
            terms: canonical,
            range,
        })
    }

    pub fn nu(&self) -> usize {
        self.nu
    }

    pub fn site_dim(&self) -> usize {
        self.site_dim
    }

    pub fn space(&self) -> &Space {
        &self.space
    }

    pub fn onsite(&self) -> &PotentialSpec {
        &self.onsite
    }

    pub fn terms(&self) -> &[InteractionTerm] {
        &self.terms
    }

    pub fn range(&self) -> i64 {
        self.range
    }

    pub fn is_torus(&self) -> bool {
        matches!(self.space, Space::Torus { .. })
    }

    pub fn period(&self, component: usize) -> Option<f64> {
        match &self.space {
            Space::Euclidean => None,
            Space::Torus { period } => Some(period[component]),
        }
    }

    /// Wrap a coordinate into the fundamental domain (identity on Euclidean space).
    #[inline]
    pub fn wrap(&self, component: usize, x: f64) -> f64 {
        match &self.space {
            Space::Euclidean => x,
            Space::Torus { period } => x.rem_euclid(period[component]),
        }
    }

    /// True when every term is a polynomial of degree at most 2 and the
    /// on-site potential is quadratic, i.e. the dynamics are linear.
    pub fn is_quadratic(&self) -> bool {
        self.onsite.degree() == Some(2) && self.terms.iter().all(|t| matches!(t.body.degree(), Some(d) if d <= 2))
    }

    /// Offsets `j - i` with `gamma(i, j) == 1`.
    pub fn neighbor_offsets(&self) -> Vec<Site> {
        let mut set: HashSet<Site> = HashSet::new();
        for term in self.terms.iter().filter(|t| !t.body.is_identically_zero()) {
            for a in &term.offsets {
                for b in &term.offsets {
                    if a != b {
                        set.insert(geometry::sub(b, a));
                    }
                }
            }
        }
        let mut v: Vec<Site> = set.into_iter().collect();
        v.sort();
        v
    }

    /// Interaction distance γ(i, j); `None` stands for infinity.
    pub fn gamma_distance(&self, i: &[i64], j: &[i64]) -> Option<u64> {
        if i == j {
            return Some(0);
        }
        let neighbors = self.neighbor_offsets();
        if neighbors.is_empty() {
            return None;
        }
        // Shortest words in an abelian Cayley graph can be reordered to stay
        // within nu * D of the segment from i to j (Steinitz), so the search is
        // exact on this bounding box.
        let margin = self.nu as i64 * self.range;
        let lo: Vec<i64> = i.iter().zip(j).map(|(a, b)| a.min(b) - margin).collect();
        let hi: Vec<i64> = i.iter().zip(j).map(|(a, b)| a.max(b) + margin).collect();
        let inside = |s: &[i64]| s.iter().zip(&lo).zip(&hi).all(|((x, l), h)| x >= l && x <= h);
        let mut dist: HashMap<Site, u64> = HashMap::new();
        let mut queue = VecDeque::new();
        dist.insert(i.to_vec(), 0);
        queue.push_back(i.to_vec());
        while let Some(s) = queue.pop_front() {
            let d = dist[&s];
            for n in &neighbors {
                let t = geometry::add(&s, n);
                if !inside(&t) || dist.contains_key(&t) {
                    continue;
                }
                if t == j {
                    return Some(d + 1);
                }
                dist.insert(t.clone(), d + 1);
                queue.push_back(t);
            }
        }
        None
    }

    /// γ(i, Λ^c) for a site of the box; `None` when no path leaves the box.
    pub fn gamma_to_complement(&self, geom: &BoxGeometry, i: &[i64]) -> Option<u64> {
        let neighbors = self.neighbor_offsets();
        if neighbors.is_empty() {
            return None;
        }
        let mut seen: HashSet<Site> = HashSet::new();
        let mut frontier = vec![i.to_vec()];
        seen.insert(i.to_vec());
        let mut d = 0;
        while !frontier.is_empty() {
            d += 1;
            let mut next = Vec::new();
            for s in &frontier {
                for n in &neighbors {
                    let t = geometry::add(s, n);
                    if !geom.contains(&t) {
                        return Some(d);
                    }
                    if seen.insert(t.clone()) {
                        next.push(t);
                    }
                }
            }
            frontier = next;
        }
        None
    }

    /// The interaction boundary `{i in Λ : γ(i, Λ^c) = 1}`.
    pub fn interior_boundary(&self, geom: &BoxGeometry) -> Vec<Site> {
        let neighbors = self.neighbor_offsets();
        geom.sites()
            .iter()
            .filter(|s| neighbors.iter().any(|n| !geom.contains(&geometry::add(s, n))))
            .cloned()
            .collect()
    }

    /// Short content hash identifying the model in output headers.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("model serializes");
        let digest = Sha256::digest(&json);
        hex::encode(&digest[..8])
    }
}

/// Free-function form of [`LatticeModel::gamma_distance`].
pub fn gamma_distance(model: &LatticeModel, i: &[i64], j: &[i64]) -> Option<u64> {
    model.gamma_distance(i, j)
}

/// Free-function form of [`LatticeModel::interior_boundary`].
pub fn interior_boundary(model: &LatticeModel, geom: &BoxGeometry) -> Vec<Site> {
    model.interior_boundary(geom)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pair_chain(nu: usize, range: i64) -> LatticeModel {
        let mut terms = Vec::new();
        for c in 0..nu {
            for r in 1..=range {
                let mut e = vec![0; nu];
                e[c] = r;
                terms.push(InteractionTerm::new(vec![vec![0; nu], e], Body::difference(&[0.0, 0.0, 0.25])));
            }
        }
        LatticeModel::new(nu, 1, Space::Euclidean, PotentialSpec::polynomial(&[0.0, 0.0, 0.5]), terms, range)
            .unwrap()
    }

    fn uncoupled() -> LatticeModel {
        LatticeModel::new(1, 1, Space::Euclidean, PotentialSpec::polynomial(&[0.0, 0.0, 0.5]), vec![], 1).unwrap()
    }

    #[test]
    fn gamma_is_l1_for_nearest_neighbours() {
        let m = pair_chain(2, 1);
        assert_eq!(m.gamma_distance(&[0, 0], &[2, 1]), Some(3));
        assert_eq!(m.gamma_distance(&[1, -2], &[1, -2]), Some(0));
        assert_eq!(m.gamma_distance(&[-3, 4], &[2, 1]), Some(8));
    }

    #[test]
    fn gamma_is_infinite_without_interactions() {
        let m = uncoupled();
        assert_eq!(m.gamma_distance(&[0], &[1]), None);
        assert_eq!(m.gamma_distance(&[5], &[5]), Some(0));
    }

    #[test]
    fn gamma_unreachable_sublattice() {
        // only even hops: odd sites are never reached
        let t = InteractionTerm::new(vec![vec![0], vec![2]], Body::difference(&[0.0, 0.0, 0.25]));
        let m = LatticeModel::new(1, 1, Space::Euclidean, PotentialSpec::polynomial(&[0.0, 0.0, 0.5]), vec![t], 2)
            .unwrap();
        assert_eq!(m.gamma_distance(&[0], &[1]), None);
        assert_eq!(m.gamma_distance(&[0], &[6]), Some(3));
    }

    #[test]
    fn interior_boundary_examples() {
        let g = box_sites(1, 3).unwrap();
        let b1: Vec<i64> = pair_chain(1, 1).interior_boundary(&g).iter().map(|s| s[0]).collect();
        assert_eq!(b1, vec![-2, 3]);
        let b2: Vec<i64> = pair_chain(1, 2).interior_boundary(&g).iter().map(|s| s[0]).collect();
        assert_eq!(b2, vec![-2, -1, 2, 3]);
        assert!(uncoupled().interior_boundary(&g).is_empty());
    }

    #[test]
    fn interior_boundary_matches_gamma_enumeration() {
        // oracle: brute-force γ(i, complement) through gamma_distance
        let m = pair_chain(2, 1);
        let g = box_sites(2, 2).unwrap();
        let boundary = m.interior_boundary(&g);
        for s in g.sites() {
            let mut best = u64::MAX;
            for x in -4..=5 {
                for y in -4..=5 {
                    let t = vec![x, y];
                    if !g.contains(&t) {
                        if let Some(d) = m.gamma_distance(s, &t) {
                            best = best.min(d);
                        }
                    }
                }
            }
            assert_eq!(boundary.contains(s), best == 1, "site {s:?}");
            assert_eq!(m.gamma_to_complement(&g, s), Some(best));
        }
    }

    #[test]
    fn boundary_fraction_shrinks() {
        for nu in 1..=2 {
            let m = pair_chain(nu, 1);
            let frac = |a| {
                let g = box_sites(nu, a).unwrap();
                m.interior_boundary(&g).len() as f64 / g.len() as f64
            };
            assert!(frac(4) < frac(2));
        }
    }

    #[test]
    fn rejects_offsets_beyond_range() {
        let t = InteractionTerm::new(vec![vec![0], vec![3]], Body::difference(&[0.0, 0.0, 0.25]));
        let err = LatticeModel::new(1, 1, Space::Euclidean, PotentialSpec::polynomial(&[0.0, 0.0, 0.5]), vec![t], 2)
            .unwrap_err();
        assert!(matches!(err, Error::OffsetOutOfRange { range: 2, .. }));
    }

    #[test]
    fn cosine_requires_torus() {
        let err = LatticeModel::new(1, 1, Space::Euclidean, PotentialSpec::cosine(&[1.0]), vec![], 1);
        assert!(err.is_err());
    }

    proptest! {
        #[test]
        fn gamma_symmetric_and_triangle(
            a in proptest::collection::vec(-4i64..4, 2),
            b in proptest::collection::vec(-4i64..4, 2),
            c in proptest::collection::vec(-4i64..4, 2),
        ) {
            let m = pair_chain(2, 2);
            let ab = m.gamma_distance(&a, &b).unwrap();
            let ba = m.gamma_distance(&b, &a).unwrap();
            prop_assert_eq!(ab, ba);
            let bc = m.gamma_distance(&b, &c).unwrap();
            let ac = m.gamma_distance(&a, &c).unwrap();
            prop_assert!(ac <= ab + bc);
            let linf = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).max().unwrap();
            if linf > m.range() {
                prop_assert!(ab > 1);
            }
        }
    }
}
