//! On-site potentials and multi-body interaction bodies.
//!
//! Everything here is a polynomial or a trigonometric polynomial, so values,
//! gradients and Hessians are available in closed form. The `*_diff` methods
//! return `f(x + dx) - f(x)` without forming both terms, which keeps tiny
//! differences between nearby trajectories accurate to relative precision.

use serde::{Deserialize, Serialize};

use super::geometry::Site;
use crate::error::{Error, Result};

/// The on-site potential `W_{{i}}`, applied componentwise to `q_i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PotentialSpec {
    /// `sum_c sum_k coeffs[k] * q_c^k`; even degree with positive leading coefficient.
    Polynomial { coeffs: Vec<f64> },
    /// `sum_c sum_h amplitudes[h-1] * (1 - cos(h q_c))`; torus only.
    Cosine { amplitudes: Vec<f64> },
}

impl PotentialSpec {
    pub fn polynomial(coeffs: &[f64]) -> Self {
        PotentialSpec::Polynomial {
            coeffs: coeffs.to_vec(),
        }
    }

    pub fn cosine(amplitudes: &[f64]) -> Self {
        PotentialSpec::Cosine {
            amplitudes: amplitudes.to_vec(),
        }
    }

    pub(crate) fn check(&self) -> Result<()> {
        match self {
            PotentialSpec::Polynomial { coeffs } => {
                let deg = poly_degree(coeffs)
                    .ok_or_else(|| Error::InvalidModel("on-site polynomial is identically zero".into()))?;
                if deg % 2 != 0 || deg == 0 {
                    return Err(Error::InvalidModel(format!(
                        "on-site polynomial must have positive even degree, got {deg}"
                    )));
                }
                if coeffs[deg] <= 0.0 {
                    return Err(Error::InvalidModel(
                        "on-site polynomial needs a positive leading coefficient".into(),
                    ));
                }
            }
            PotentialSpec::Cosine { amplitudes } => {
                if amplitudes.is_empty() {
                    return Err(Error::InvalidModel("cosine potential without harmonics".into()));
                }
            }
        }
        if self.coefficients().iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidModel("non-finite potential coefficient".into()));
        }
        Ok(())
    }

    fn coefficients(&self) -> &[f64] {
        match self {
            PotentialSpec::Polynomial { coeffs } => coeffs,
            PotentialSpec::Cosine { amplitudes } => amplitudes,
        }
    }

    pub fn is_cosine(&self) -> bool {
        matches!(self, PotentialSpec::Cosine { .. })
    }

    /// Degree of the polynomial family, `None` for the cosine family.
    pub fn degree(&self) -> Option<usize> {
        match self {
            PotentialSpec::Polynomial { coeffs } => poly_degree(coeffs),
            PotentialSpec::Cosine { .. } => None,
        }
    }

    /// Coefficient of `q^2` (zero for the cosine family).
    pub fn quadratic_coefficient(&self) -> f64 {
        match self {
            PotentialSpec::Polynomial { coeffs } => coeffs.get(2).copied().unwrap_or(0.0),
            PotentialSpec::Cosine { .. } => 0.0,
        }
    }

    pub fn value1(&self, x: f64) -> f64 {
        match self {
            PotentialSpec::Polynomial { coeffs } => poly_value(coeffs, x),
            PotentialSpec::Cosine { amplitudes } => cos_value(amplitudes, x),
        }
    }

    pub fn d1(&self, x: f64) -> f64 {
        match self {
            PotentialSpec::Polynomial { coeffs } => poly_d1(coeffs, x),
            PotentialSpec::Cosine { amplitudes } => cos_d1(amplitudes, x),
        }
    }

    pub fn d2(&self, x: f64) -> f64 {
        match self {
            PotentialSpec::Polynomial { coeffs } => poly_d2(coeffs, x),
            PotentialSpec::Cosine { amplitudes } => cos_d2(amplitudes, x),
        }
    }

    /// `W'(x + dx) - W'(x)` computed stably.
    pub fn d1_diff(&self, x: f64, dx: f64) -> f64 {
        match self {
            PotentialSpec::Polynomial { coeffs } => poly_d1_diff(coeffs, x, dx),
            PotentialSpec::Cosine { amplitudes } => cos_d1_diff(amplitudes, x, dx),
        }
    }

    /// Value on a site's coordinate vector.
    pub fn value(&self, q: &[f64]) -> f64 {
        q.iter().map(|&x| self.value1(x)).sum()
    }
}

/// One monomial `coef * prod_s x_s^{powers[s]}` over the flattened slot
/// coordinates (slot-major: slot `k`, component `c` sits at `k * site_dim + c`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Monomial {
    pub coef: f64,
    pub powers: Vec<u32>,
}

/// The body `W_Δ` of a multi-body term.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Body {
    /// Pair body `sum_c sum_k coeffs[k] * (q_{1,c} - q_{0,c})^k`.
    Difference { coeffs: Vec<f64> },
    /// Pair body `sum_c sum_h amplitudes[h-1] * (1 - cos(h (q_{1,c} - q_{0,c})))`.
    Cosine { amplitudes: Vec<f64> },
    /// General multinomial in the coordinates of all slots.
    Multinomial { monomials: Vec<Monomial> },
}

impl Body {
    pub fn difference(coeffs: &[f64]) -> Self {
        Body::Difference {
            coeffs: coeffs.to_vec(),
        }
    }

    pub fn cosine(amplitudes: &[f64]) -> Self {
        Body::Cosine {
            amplitudes: amplitudes.to_vec(),
        }
    }

    /// Total degree for polynomial bodies, `None` for trigonometric ones.
    pub fn degree(&self) -> Option<usize> {
        match self {
            Body::Difference { coeffs } => Some(poly_degree(coeffs).unwrap_or(0)),
            Body::Cosine { .. } => None,
            Body::Multinomial { monomials } => Some(
                monomials
                    .iter()
                    .filter(|m| m.coef != 0.0)
                    .map(|m| m.powers.iter().sum::<u32>() as usize)
                    .max()
                    .unwrap_or(0),
            ),
        }
    }

    pub fn is_identically_zero(&self) -> bool {
        match self {
            Body::Difference { coeffs } => coeffs.iter().all(|&c| c == 0.0),
            Body::Cosine { amplitudes } => amplitudes.iter().all(|&a| a == 0.0),
            Body::Multinomial { monomials } => monomials.iter().all(|m| m.coef == 0.0),
        }
    }

    fn check(&self, arity: usize, site_dim: usize) -> Result<()> {
        match self {
            Body::Difference { .. } | Body::Cosine { .. } if arity != 2 => Err(Error::InvalidModel(
                format!("difference/cosine bodies need arity 2, got {arity}"),
            )),
            Body::Multinomial { monomials } => {
                for m in monomials {
                    if m.powers.len() != arity * site_dim {
                        return Err(Error::InvalidModel(format!(
                            "monomial has {} powers, expected {}",
                            m.powers.len(),
                            arity * site_dim
                        )));
                    }
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    /// Reorder the slots: new slot `k` is old slot `perm[k]`.
    fn permute_slots(&self, perm: &[usize], site_dim: usize) -> Body {
        match self {
            Body::Difference { coeffs } if perm == [1, 0] => Body::Difference {
                coeffs: coeffs
                    .iter()
                    .enumerate()
                    .map(|(k, &c)| if k % 2 == 1 { -c } else { c })
                    .collect(),
            },
            Body::Multinomial { monomials } => Body::Multinomial {
                monomials: monomials
                    .iter()
                    .map(|m| {
                        let mut powers = vec![0u32; m.powers.len()];
                        for (new, &old) in perm.iter().enumerate() {
                            for c in 0..site_dim {
                                powers[new * site_dim + c] = m.powers[old * site_dim + c];
                            }
                        }
                        Monomial { coef: m.coef, powers }
                    })
                    .collect(),
            },
            other => other.clone(),
        }
    }

    pub fn value(&self, x: &[f64], site_dim: usize) -> f64 {
        match self {
            Body::Difference { coeffs } => (0..site_dim)
                .map(|c| poly_value(coeffs, x[site_dim + c] - x[c]))
                .sum(),
            Body::Cosine { amplitudes } => (0..site_dim)
                .map(|c| cos_value(amplitudes, x[site_dim + c] - x[c]))
                .sum(),
            Body::Multinomial { monomials } => monomials.iter().map(|m| monomial_value(m, x)).sum(),
        }
    }

    /// Gradient with respect to all slot coordinates, written into `out`.
    pub fn grad(&self, x: &[f64], site_dim: usize, out: &mut [f64]) {
        out.iter_mut().for_each(|g| *g = 0.0);
        match self {
            Body::Difference { coeffs } => {
                for c in 0..site_dim {
                    let g = poly_d1(coeffs, x[site_dim + c] - x[c]);
                    out[c] = -g;
                    out[site_dim + c] = g;
                }
            }
            Body::Cosine { amplitudes } => {
                for c in 0..site_dim {
                    let g = cos_d1(amplitudes, x[site_dim + c] - x[c]);
                    out[c] = -g;
                    out[site_dim + c] = g;
                }
            }
            Body::Multinomial { monomials } => {
                for m in monomials {
                    for (s, slot) in out.iter_mut().enumerate() {
                        if m.powers[s] > 0 {
                            *slot += monomial_partial(m, x, s);
                        }
                    }
                }
            }
        }
    }

    /// Stable `grad W(x + dx) - grad W(x)`.
    pub fn grad_diff(&self, x: &[f64], dx: &[f64], site_dim: usize, out: &mut [f64]) {
        out.iter_mut().for_each(|g| *g = 0.0);
        match self {
            Body::Difference { coeffs } => {
                for c in 0..site_dim {
                    let u = x[site_dim + c] - x[c];
                    let du = dx[site_dim + c] - dx[c];
                    let g = poly_d1_diff(coeffs, u, du);
                    out[c] = -g;
                    out[site_dim + c] = g;
                }
            }
            Body::Cosine { amplitudes } => {
                for c in 0..site_dim {
                    let u = x[site_dim + c] - x[c];
                    let du = dx[site_dim + c] - dx[c];
                    let g = cos_d1_diff(amplitudes, u, du);
                    out[c] = -g;
                    out[site_dim + c] = g;
                }
            }
            Body::Multinomial { monomials } => {
                for m in monomials {
                    for (s, slot) in out.iter_mut().enumerate() {
                        if m.powers[s] > 0 {
                            let mut dm = m.clone();
                            dm.coef *= m.powers[s] as f64;
                            dm.powers[s] -= 1;
                            *slot += monomial_diff(&dm, x, dx);
                        }
                    }
                }
            }
        }
    }

    /// Dense Hessian (row-major, `n x n` with `n = x.len()`), accumulated into `out`.
    pub fn hess_add(&self, x: &[f64], site_dim: usize, out: &mut [f64]) {
        let n = x.len();
        match self {
            Body::Difference { coeffs } => {
                for c in 0..site_dim {
                    let h = poly_d2(coeffs, x[site_dim + c] - x[c]);
                    add_pair_hess(out, n, c, site_dim + c, h);
                }
            }
            Body::Cosine { amplitudes } => {
                for c in 0..site_dim {
                    let h = cos_d2(amplitudes, x[site_dim + c] - x[c]);
                    add_pair_hess(out, n, c, site_dim + c, h);
                }
            }
            Body::Multinomial { monomials } => {
                for m in monomials {
                    for s in 0..n {
                        if m.powers[s] == 0 {
                            continue;
                        }
                        let mut dm = m.clone();
                        dm.coef *= m.powers[s] as f64;
                        dm.powers[s] -= 1;
                        for t in 0..n {
                            if dm.powers[t] > 0 {
                                out[s * n + t] += monomial_partial(&dm, x, t);
                            }
                        }
                    }
                }
            }
        }
    }
}

fn add_pair_hess(out: &mut [f64], n: usize, i: usize, j: usize, h: f64) {
    out[i * n + i] += h;
    out[j * n + j] += h;
    out[i * n + j] -= h;
    out[j * n + i] -= h;
}

/// A finite-range multi-body term `W_Δ`, stored relative to its base site.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractionTerm {
    pub offsets: Vec<Site>,
    pub body: Body,
}

impl InteractionTerm {
    pub fn new(offsets: Vec<Site>, body: Body) -> Self {
        InteractionTerm { offsets, body }
    }

    pub fn arity(&self) -> usize {
        self.offsets.len()
    }

    pub(crate) fn check(&self, nu: usize, site_dim: usize) -> Result<()> {
        if self.arity() < 2 {
            return Err(Error::InvalidModel(
                "multi-body terms need at least two sites; on-site terms belong to the on-site potential".into(),
            ));
        }
        if self.arity() > 3 {
            return Err(Error::InvalidModel(format!(
                "only arities 2 and 3 are supported, got {}",
                self.arity()
            )));
        }
        if self.offsets.iter().any(|o| o.len() != nu) {
            return Err(Error::InvalidModel("offset dimension does not match nu".into()));
        }
        let mut sorted = self.offsets.clone();
        sorted.sort();
        sorted.dedup();
        if sorted.len() != self.offsets.len() {
            return Err(Error::InvalidModel("repeated offset in a term".into()));
        }
        self.body.check(self.arity(), site_dim)
    }

    /// Sort the offsets lexicographically and translate the minimum to zero,
    /// permuting the body's slots to match.
    pub fn canonical(&self, site_dim: usize) -> InteractionTerm {
        let mut order: Vec<usize> = (0..self.arity()).collect();
        order.sort_by(|&i, &j| self.offsets[i].cmp(&self.offsets[j]));
        let base = self.offsets[order[0]].clone();
        let offsets = order
            .iter()
            .map(|&k| self.offsets[k].iter().zip(&base).map(|(x, b)| x - b).collect())
            .collect();
        InteractionTerm {
            offsets,
            body: self.body.permute_slots(&order, site_dim),
        }
    }

    /// ℓ∞ diameter of the offset set.
    pub fn diameter(&self) -> i64 {
        let mut d = 0;
        for a in &self.offsets {
            for b in &self.offsets {
                let m = a.iter().zip(b).map(|(x, y)| (x - y).abs()).max().unwrap_or(0);
                d = d.max(m);
            }
        }
        d
    }
}

// ---------------------------------------------------------------------------
// scalar kernels

pub(crate) fn poly_degree(coeffs: &[f64]) -> Option<usize> {
    coeffs.iter().rposition(|&c| c != 0.0)
}

pub(crate) fn poly_value(coeffs: &[f64], x: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c)
}

pub(crate) fn poly_d1(coeffs: &[f64], x: f64) -> f64 {
    let mut acc = 0.0;
    for k in (1..coeffs.len()).rev() {
        acc = acc * x + k as f64 * coeffs[k];
    }
    acc
}

pub(crate) fn poly_d2(coeffs: &[f64], x: f64) -> f64 {
    let mut acc = 0.0;
    for k in (2..coeffs.len()).rev() {
        acc = acc * x + (k * (k - 1)) as f64 * coeffs[k];
    }
    acc
}

/// `(x + d)^m - x^m = d * sum_{l<m} (x + d)^l x^(m-1-l)`.
pub(crate) fn pow_diff(x: f64, d: f64, m: u32) -> f64 {
    if m == 0 || d == 0.0 {
        return 0.0;
    }
    let y = x + d;
    let mut s = 0.0;
    let mut yl = 1.0;
    for l in 0..m {
        s += yl * x.powi((m - 1 - l) as i32);
        yl *= y;
    }
    d * s
}

pub(crate) fn poly_d1_diff(coeffs: &[f64], x: f64, d: f64) -> f64 {
    (2..coeffs.len())
        .map(|k| k as f64 * coeffs[k] * pow_diff(x, d, (k - 1) as u32))
        .sum()
}

fn cos_value(amps: &[f64], x: f64) -> f64 {
    amps.iter()
        .enumerate()
        .map(|(h, &a)| a * (1.0 - ((h + 1) as f64 * x).cos()))
        .sum()
}

fn cos_d1(amps: &[f64], x: f64) -> f64 {
    amps.iter()
        .enumerate()
        .map(|(h, &a)| {
            let k = (h + 1) as f64;
            a * k * (k * x).sin()
        })
        .sum()
}

fn cos_d2(amps: &[f64], x: f64) -> f64 {
    amps.iter()
        .enumerate()
        .map(|(h, &a)| {
            let k = (h + 1) as f64;
            a * k * k * (k * x).cos()
        })
        .sum()
}

/// `sin(k(x+d)) - sin(kx) = 2 cos(k(x + d/2)) sin(k d / 2)`.
fn cos_d1_diff(amps: &[f64], x: f64, d: f64) -> f64 {
    amps.iter()
        .enumerate()
        .map(|(h, &a)| {
            let k = (h + 1) as f64;
            a * k * 2.0 * (k * (x + 0.5 * d)).cos() * (0.5 * k * d).sin()
        })
        .sum()
}

fn monomial_value(m: &Monomial, x: &[f64]) -> f64 {
    m.powers
        .iter()
        .zip(x)
        .fold(m.coef, |acc, (&e, &xi)| acc * xi.powi(e as i32))
}

fn monomial_partial(m: &Monomial, x: &[f64], s: usize) -> f64 {
    let e = m.powers[s];
    let mut v = m.coef * e as f64;
    for (t, (&et, &xt)) in m.powers.iter().zip(x).enumerate() {
        let p = if t == s { et - 1 } else { et };
        v *= xt.powi(p as i32);
    }
    v
}

/// Telescoping `m(x + dx) - m(x)`.
fn monomial_diff(m: &Monomial, x: &[f64], dx: &[f64]) -> f64 {
    let n = x.len();
    let mut total = 0.0;
    for k in 0..n {
        if m.powers[k] == 0 || dx[k] == 0.0 {
            continue;
        }
        let mut term = m.coef * pow_diff(x[k], dx[k], m.powers[k]);
        for l in 0..n {
            if l == k {
                continue;
            }
            let base = if l < k { x[l] + dx[l] } else { x[l] };
            term *= base.powi(m.powers[l] as i32);
        }
        total += term;
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fd_grad(body: &Body, x: &[f64], sd: usize) -> Vec<f64> {
        let h = 1e-6;
        (0..x.len())
            .map(|i| {
                let mut xp = x.to_vec();
                let mut xm = x.to_vec();
                xp[i] += h;
                xm[i] -= h;
                (body.value(&xp, sd) - body.value(&xm, sd)) / (2.0 * h)
            })
            .collect()
    }

    fn bodies() -> Vec<Body> {
        vec![
            Body::difference(&[0.0, 0.3, 0.25, -0.1, 0.05]),
            Body::cosine(&[0.5, 0.2]),
            Body::Multinomial {
                monomials: vec![
                    Monomial { coef: 0.1, powers: vec![1, 1, 1] },
                    Monomial { coef: -0.3, powers: vec![2, 0, 1] },
                ],
            },
        ]
    }

    #[test]
    fn gradients_match_finite_differences() {
        let xs2 = [0.7, -0.4];
        let xs3 = [0.7, -0.4, 1.3];
        for body in bodies() {
            let x: &[f64] = if matches!(body, Body::Multinomial { .. }) { &xs3 } else { &xs2 };
            let mut g = vec![0.0; x.len()];
            body.grad(x, 1, &mut g);
            let fd = fd_grad(&body, x, 1);
            for (a, b) in g.iter().zip(&fd) {
                assert!((a - b).abs() < 1e-7, "{body:?}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn hessian_matches_gradient_differences() {
        let x = [0.7, -0.4, 1.3];
        for body in bodies() {
            let x: &[f64] = if matches!(body, Body::Multinomial { .. }) { &x } else { &x[..2] };
            let n = x.len();
            let mut hmat = vec![0.0; n * n];
            body.hess_add(x, 1, &mut hmat);
            let h = 1e-6;
            for j in 0..n {
                let mut xp = x.to_vec();
                let mut xm = x.to_vec();
                xp[j] += h;
                xm[j] -= h;
                let mut gp = vec![0.0; n];
                let mut gm = vec![0.0; n];
                body.grad(&xp, 1, &mut gp);
                body.grad(&xm, 1, &mut gm);
                for i in 0..n {
                    let fd = (gp[i] - gm[i]) / (2.0 * h);
                    assert!((hmat[i * n + j] - fd).abs() < 1e-6);
                }
            }
        }
    }

    #[test]
    fn grad_diff_is_accurate_for_tiny_perturbations() {
        let x = [0.7, -0.4, 1.3];
        let dx = [3e-19, -1e-20, 2e-19];
        for body in bodies() {
            let n = if matches!(body, Body::Multinomial { .. }) { 3 } else { 2 };
            let mut d = vec![0.0; n];
            body.grad_diff(&x[..n], &dx[..n], 1, &mut d);
            // first-order oracle: Hessian times dx
            let mut hmat = vec![0.0; n * n];
            body.hess_add(&x[..n], 1, &mut hmat);
            for i in 0..n {
                let lin: f64 = (0..n).map(|j| hmat[i * n + j] * dx[j]).sum();
                assert!((d[i] - lin).abs() <= 1e-10 * lin.abs().max(1e-30), "{d:?} vs {lin}");
            }
        }
    }

    #[test]
    fn onsite_diff_matches_direct_for_large_steps() {
        let w = PotentialSpec::polynomial(&[0.0, 0.0, 0.5, 0.0, 0.25]);
        let (x, d) = (0.8, 0.3);
        assert!((w.d1_diff(x, d) - (w.d1(x + d) - w.d1(x))).abs() < 1e-14);
        let c = PotentialSpec::cosine(&[1.0, 0.3]);
        assert!((c.d1_diff(x, d) - (c.d1(x + d) - c.d1(x))).abs() < 1e-14);
    }

    #[test]
    fn canonical_form_preserves_values() {
        let term = InteractionTerm::new(
            vec![vec![1], vec![0]],
            Body::difference(&[0.0, 0.4, 0.25, 0.1]),
        );
        let canon = term.canonical(1);
        assert_eq!(canon.offsets, vec![vec![0], vec![1]]);
        // old slot 0 sits at offset 1: x_old = [q1, q0]
        let (q0, q1) = (0.3, -0.9);
        let v_old = term.body.value(&[q1, q0], 1);
        let v_new = canon.body.value(&[q0, q1], 1);
        assert!((v_old - v_new).abs() < 1e-14);
    }

    #[test]
    fn rejects_odd_or_negative_leading_onsite() {
        assert!(PotentialSpec::polynomial(&[0.0, 0.0, 0.0, 1.0]).check().is_err());
        assert!(PotentialSpec::polynomial(&[0.0, 0.0, -1.0]).check().is_err());
        assert!(PotentialSpec::polynomial(&[0.0, 0.0, 0.5]).check().is_ok());
    }
}
