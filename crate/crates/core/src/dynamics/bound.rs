//! The band-matrix a-priori bound on noninteracting local energies.
//!
//! With `A_ij = max{1, C1}` whenever `γ(i, j) <= 1`, every solution of the
//! severed dynamics satisfies `E_i(t) <= sum_j [exp(tA)]_ij E_j(0)` for the
//! noninteracting energies `E_i = K_i + W_{{i}} + shift`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{add, linf_norm, BoxGeometry, LatticeModel};

/// Matrix exponential by scaling and squaring of a truncated Taylor series.
/// `tol` is the relative truncation tolerance of the scaled series.
pub fn expm(m: &DMatrix<f64>, tol: f64) -> DMatrix<f64> {
    let n = m.nrows();
    assert_eq!(n, m.ncols(), "expm needs a square matrix");
    let norm = m.column_iter().map(|c| c.abs().sum()).fold(0.0, f64::max);
    let mut squarings = 0u32;
    let mut scale = 1.0;
    while norm * scale > 0.5 {
        scale *= 0.5;
        squarings += 1;
    }
    let x = m * scale;
    let mut sum = DMatrix::identity(n, n);
    let mut term = DMatrix::identity(n, n);
    for k in 1..64 {
        term = &term * &x / k as f64;
        sum += &term;
        // squaring amplifies the relative error by about 2^squarings
        let target = (0.1 * tol / f64::powi(2.0, squarings as i32)).max(0.5 * f64::EPSILON);
        if term.abs().max() <= target * sum.abs().max() {
            break;
        }
    }
    for _ in 0..squarings {
        sum = &sum * &sum;
    }
    sum
}

#[derive(Debug, Clone, PartialEq)]
pub struct BandMatrix {
    pub matrix: DMatrix<f64>,
    /// Entry on the band, `max{1, C1}`.
    pub value: f64,
    /// Constant added to the on-site potential when `C1` was measured.
    pub shift: f64,
    geom: BoxGeometry,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub t: f64,
    /// Largest `E_i(t) / bound_i` over the box.
    pub max_ratio: f64,
    /// Box indices where the bound fails beyond the tolerance.
    pub violations: Vec<usize>,
    pub holds: bool,
}

/// Assemble `A` on the box for a model whose domination constant is `c1`
/// (measured with on-site shift `shift`).
pub fn a_priori_matrix(model: &LatticeModel, geom: &BoxGeometry, c1: f64, shift: f64) -> Result<BandMatrix> {
    if !c1.is_finite() || c1 < 0.0 {
        return Err(Error::InvalidModel(format!("domination constant must be finite, got {c1}")));
    }
    if model.nu() != geom.nu() {
        return Err(Error::InvalidModel("model and box dimensions differ".into()));
    }
    let value = c1.max(1.0);
    let n = geom.len();
    let mut matrix = DMatrix::zeros(n, n);
    let mut offsets = model.neighbor_offsets();
    offsets.push(vec![0; model.nu()]);
    for (i, s) in geom.sites().iter().enumerate() {
        for o in &offsets {
            if let Some(j) = geom.index_of(&add(s, o)) {
                matrix[(i, j)] = value;
            }
        }
    }
    Ok(BandMatrix {
        matrix,
        value,
        shift,
        geom: geom.clone(),
    })
}

impl BandMatrix {
    pub fn len(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_symmetric(&self) -> bool {
        self.matrix == self.matrix.transpose()
    }

    /// `max_i sum_j |A_ij| (1+|j|)^r / (1+|i|)^r` with the ℓ∞ norm on sites.
    pub fn op_norm(&self, r: f64) -> f64 {
        let w: Vec<f64> = self
            .geom
            .sites()
            .iter()
            .map(|s| (1.0 + linf_norm(s) as f64).powf(r))
            .collect();
        (0..self.len())
            .map(|i| (0..self.len()).map(|j| self.matrix[(i, j)].abs() * w[j] / w[i]).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// `exp(tA) e0` for shifted energies `e0`.
    pub fn propagate(&self, e0: &[f64], t: f64, tol: f64) -> Vec<f64> {
        let et = expm(&(&self.matrix * t), tol);
        let v = nalgebra::DVector::from_column_slice(e0);
        (et * v).iter().copied().collect()
    }

    /// Compare raw noninteracting energies at `0` and `t` against the bound.
    /// Energies are shifted by `self.shift` before comparison; `tol` is both
    /// the expm tolerance and the relative slack allowed.
    pub fn bound_check(&self, e0_raw: &[f64], et_raw: &[f64], t: f64, tol: f64) -> BoundReport {
        let e0: Vec<f64> = e0_raw.iter().map(|e| e + self.shift).collect();
        let bound = self.propagate(&e0, t, tol);
        let mut max_ratio: f64 = 0.0;
        let mut violations = Vec::new();
        for (i, (&b, &e)) in bound.iter().zip(et_raw).enumerate() {
            let e = e + self.shift;
            let ratio = if b > 0.0 { e / b } else if e <= 0.0 { 0.0 } else { f64::INFINITY };
            max_ratio = max_ratio.max(ratio);
            if e > b * (1.0 + tol) + tol {
                violations.push(i);
            }
        }
        BoundReport {
            t,
            max_ratio,
            holds: violations.is_empty(),
            violations,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{evolve, Configuration, IntegratorSchedule};
    use crate::model::{box_sites, reference, validate_assumptions, BoxSystem, Probe};
    use approx::assert_relative_eq;

    #[test]
    fn expm_matches_nalgebra() {
        let m = DMatrix::from_fn(6, 6, |i, j| ((i * 3 + j * 7) % 5) as f64 * 0.4 - 0.6);
        for t in [0.1, 1.0, 3.0] {
            let mine = expm(&(&m * t), 1e-12);
            let reference = (&m * t).exp();
            let scale = reference.abs().max();
            assert!((mine - reference).abs().max() <= 1e-10 * scale);
        }
    }

    #[test]
    fn expm_of_zero_and_diagonal() {
        assert_eq!(expm(&DMatrix::zeros(3, 3), 1e-10), DMatrix::identity(3, 3));
        let d = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, -2.0, 0.5]));
        let e = expm(&d, 1e-12);
        assert_relative_eq!(e[(0, 0)], 1f64.exp(), max_relative = 1e-12);
        assert_relative_eq!(e[(1, 1)], (-2f64).exp(), max_relative = 1e-12);
        assert_relative_eq!(e[(2, 2)], 0.5f64.exp(), max_relative = 1e-12);
    }

    #[test]
    fn uncoupled_sites_give_identity_band() {
        let m = reference::harmonic_sites();
        let g = box_sites(1, 3).unwrap();
        let a = a_priori_matrix(&m, &g, 0.0, 0.0).unwrap();
        assert_eq!(a.matrix, DMatrix::identity(6, 6));
        let e = a.propagate(&[1.0; 6], 2.0, 1e-12);
        for x in e {
            assert_relative_eq!(x, 2f64.exp(), max_relative = 1e-12);
        }
    }

    #[test]
    fn chain_band_is_tridiagonal_and_symmetric() {
        let g = box_sites(1, 3).unwrap();
        let a = a_priori_matrix(&reference::harmonic_chain(), &g, 2.5, 1.0).unwrap();
        assert!(a.is_symmetric());
        for i in 0..6usize {
            for j in 0..6 {
                let expect = if i.abs_diff(j) <= 1 { 2.5 } else { 0.0 };
                assert_eq!(a.matrix[(i, j)], expect);
            }
        }
        // weights make the norm exceed the plain row sum only mildly
        let r0 = a.op_norm(0.0);
        assert_relative_eq!(r0, 7.5);
        assert!(a.op_norm(1.0) >= r0);
    }

    #[test]
    fn bound_at_time_zero_is_equality() {
        let g = box_sites(1, 2).unwrap();
        let a = a_priori_matrix(&reference::harmonic_chain(), &g, 3.0, 1.0).unwrap();
        let e = [0.5, 1.0, 2.0, 0.1];
        let rep = a.bound_check(&e, &e, 0.0, 1e-10);
        assert!(rep.holds);
        assert_relative_eq!(rep.max_ratio, 1.0, max_relative = 1e-12);
    }

    #[test]
    fn harmonic_chain_run_respects_bound() {
        let m = reference::harmonic_chain();
        let rep = validate_assumptions(&m, &Probe::default()).unwrap();
        let g = box_sites(1, 6).unwrap();
        let sys = BoxSystem::new(&m, &g).unwrap();
        let a = a_priori_matrix(&m, &g, rep.c1.unwrap(), rep.onsite_shift).unwrap();
        // energy concentrated on one site: the bound is tightest there
        let mut cfg = Configuration::zeros(&sys);
        cfg.q[6] = 2.0;
        cfg.p[5] = -1.0;
        let e0 = cfg.local_energies_ni(&sys);
        for t in [1.0, 2.0, 5.0] {
            let tr = evolve(&sys, &cfg, &IntegratorSchedule::new(1e-3, t).unwrap()).unwrap();
            let et = tr.last.local_energies_ni(&sys);
            let r = a.bound_check(&e0, &et, t, 1e-8);
            assert!(r.holds, "t = {t}: {r:?}");
        }
    }
}
