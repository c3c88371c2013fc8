use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A lattice site, an integer vector of length `nu`.
pub type Site = Vec<i64>;

/// The a-elementary box `(-a, a]^nu` with its sites in lexicographic order.
///
/// Site `x` has flat index `sum_c (x_c + a - 1) * (2a)^(nu - 1 - c)`, so the
/// first coordinate is the most significant one.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoxGeometry {
    nu: usize,
    a: i64,
    sites: Vec<Site>,
}

impl BoxGeometry {
    pub fn new(nu: usize, a: i64) -> Result<Self> {
        if a < 1 {
            return Err(Error::InvalidScale(a));
        }
        if nu == 0 {
            return Err(Error::InvalidModel("lattice dimension must be positive".into()));
        }
        let side = (2 * a) as usize;
        let count = side.pow(nu as u32);
        let mut sites = Vec::with_capacity(count);
        for flat in 0..count {
            let mut rest = flat;
            let mut site = vec![0i64; nu];
            for c in (0..nu).rev() {
                site[c] = (rest % side) as i64 - a + 1;
                rest /= side;
            }
            sites.push(site);
        }
        Ok(BoxGeometry { nu, a, sites })
    }

    pub fn nu(&self) -> usize {
        self.nu
    }

    pub fn scale(&self) -> i64 {
        self.a
    }

    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    pub fn sites(&self) -> &[Site] {
        &self.sites
    }

    pub fn site(&self, idx: usize) -> &[i64] {
        &self.sites[idx]
    }

    pub fn contains(&self, site: &[i64]) -> bool {
        site.len() == self.nu && site.iter().all(|&x| x > -self.a && x <= self.a)
    }

    pub fn index_of(&self, site: &[i64]) -> Option<usize> {
        if !self.contains(site) {
            return None;
        }
        let side = 2 * self.a;
        let mut idx = 0i64;
        for &x in site {
            idx = idx * side + (x + self.a - 1);
        }
        Some(idx as usize)
    }
}

/// `box_sites(nu, a)`: enumerate Λ(a) = (-a, a]^nu.
pub fn box_sites(nu: usize, a: i64) -> Result<BoxGeometry> {
    BoxGeometry::new(nu, a)
}

pub fn linf_norm(site: &[i64]) -> i64 {
    site.iter().map(|x| x.abs()).max().unwrap_or(0)
}

pub fn add(a: &[i64], b: &[i64]) -> Site {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

pub fn sub(a: &[i64], b: &[i64]) -> Site {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}
