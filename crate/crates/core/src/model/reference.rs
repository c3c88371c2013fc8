//! The four shipped reference models.

use std::f64::consts::TAU;

use super::{Body, InteractionTerm, LatticeModel, Monomial, PotentialSpec, Space};

/// `W_0 = q^2/2`, nearest-neighbour pair `(q_i - q_j)^2 / 4`.
pub fn harmonic_chain() -> LatticeModel {
    LatticeModel::new(
        1,
        1,
        Space::Euclidean,
        PotentialSpec::polynomial(&[0.0, 0.0, 0.5]),
        vec![InteractionTerm::new(vec![vec![0], vec![1]], Body::difference(&[0.0, 0.0, 0.25]))],
        1,
    )
    .expect("harmonic chain is valid")
}

/// FPU-type chain: `W_0 = q^2/2 + q^4/4`, nearest-neighbour pair `(q_i - q_j)^2 / 4`.
pub fn fpu_chain() -> LatticeModel {
    LatticeModel::new(
        1,
        1,
        Space::Euclidean,
        PotentialSpec::polynomial(&[0.0, 0.0, 0.5, 0.0, 0.25]),
        vec![InteractionTerm::new(vec![vec![0], vec![1]], Body::difference(&[0.0, 0.0, 0.25]))],
        1,
    )
    .expect("FPU chain is valid")
}

/// Square lattice with quartic pinning, nearest-neighbour pairs and a weak
/// three-body corner term `0.1 q_0 q_{e1} q_{e2}`.
pub fn quartic_lattice_2d() -> LatticeModel {
    let pair = || Body::difference(&[0.0, 0.0, 0.25]);
    LatticeModel::new(
        2,
        1,
        Space::Euclidean,
        PotentialSpec::polynomial(&[0.0, 0.0, 0.5, 0.0, 0.25]),
        vec![
            InteractionTerm::new(vec![vec![0, 0], vec![1, 0]], pair()),
            InteractionTerm::new(vec![vec![0, 0], vec![0, 1]], pair()),
            InteractionTerm::new(
                vec![vec![0, 0], vec![0, 1], vec![1, 0]],
                Body::Multinomial {
                    monomials: vec![Monomial {
                        coef: 0.1,
                        powers: vec![1, 1, 1],
                    }],
                },
            ),
        ],
        1,
    )
    .expect("2D lattice is valid")
}

/// Rotator chain on the circle: `W_0 = 1 - cos q`, pair `0.5 (1 - cos(q_i - q_j))`.
pub fn rotator_chain() -> LatticeModel {
    LatticeModel::new(
        1,
        1,
        Space::Torus { period: vec![TAU] },
        PotentialSpec::cosine(&[1.0]),
        vec![InteractionTerm::new(vec![vec![0], vec![1]], Body::cosine(&[0.5]))],
        1,
    )
    .expect("rotator chain is valid")
}

/// Uncoupled harmonic sites, `W_0 = q^2/2` and no multi-body terms.
pub fn harmonic_sites() -> LatticeModel {
    LatticeModel::new(1, 1, Space::Euclidean, PotentialSpec::polynomial(&[0.0, 0.0, 0.5]), vec![], 1)
        .expect("uncoupled sites are valid")
}

pub fn all() -> Vec<LatticeModel> {
    vec![harmonic_chain(), fpu_chain(), quartic_lattice_2d(), rotator_chain()]
}

/// Look a shipped model up by name.
pub fn by_name(name: &str) -> Option<LatticeModel> {
    match name {
        "harmonic_chain" => Some(harmonic_chain()),
        "fpu_chain" => Some(fpu_chain()),
        "quartic_lattice_2d" => Some(quartic_lattice_2d()),
        "rotator_chain" => Some(rotator_chain()),
        "harmonic_sites" => Some(harmonic_sites()),
        _ => None,
    }
}

pub const NAMES: [&str; 4] = ["harmonic_chain", "fpu_chain", "quartic_lattice_2d", "rotator_chain"];
