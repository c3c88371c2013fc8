//! Periodic extension of a block state, averaged over lattice shifts.

use rand::Rng;
use rayon::prelude::*;

use super::Ensemble;
use crate::dynamics::Configuration;
use crate::error::{Error, Result};
use crate::model::box_sites;
use crate::stats::substream;

/// Realise `(1/#Λ(a)) sum_j μ_{Λ(a)}^{⊗Z^ν} ∘ T_{-j}` on the window `Λ(m)`.
///
/// For each output sample a shift `j ∈ Λ(a)` is drawn; the lattice is tiled
/// by `j + 2a z + Λ(a)`, every tile meeting the window receives an
/// independent block sample (drawn with replacement from `block`), and the
/// result is restricted to `Λ(m)`.
pub fn periodize(block: &Ensemble, m: i64, n_out: usize, seed: u64) -> Result<Ensemble> {
    let a = block.scale;
    if m < a {
        return Err(Error::BoxTooSmall(format!("window scale {m} is below the block scale {a}")));
    }
    if block.samples.is_empty() {
        return Err(Error::InsufficientSamples { have: 0, need: 1 });
    }
    let nu = block.nu;
    let sd = block.site_dim;
    let gb = box_sites(nu, a)?;
    let gw = box_sites(nu, m)?;
    let side = 2 * a;
    let samples: Vec<Configuration> = (0..n_out)
        .into_par_iter()
        .map(|k| {
            let mut rng = substream(seed, k as u64);
            let j = gb.site(rng.random_range(0..gb.len())).to_vec();
            let mut tiles: std::collections::HashMap<Vec<i64>, usize> = std::collections::HashMap::new();
            let mut q = Vec::with_capacity(gw.len() * sd);
            let mut p = Vec::with_capacity(gw.len() * sd);
            for x in gw.sites() {
                let mut z = Vec::with_capacity(nu);
                let mut local = Vec::with_capacity(nu);
                for c in 0..nu {
                    let u = x[c] - j[c];
                    let zc = (u + a - 1).div_euclid(side);
                    z.push(zc);
                    local.push(u - side * zc);
                }
                let pick = *tiles
                    .entry(z)
                    .or_insert_with(|| rng.random_range(0..block.samples.len()));
                let li = gb.index_of(&local).expect("local coordinate inside the block");
                let s = &block.samples[pick];
                q.extend_from_slice(&s.q[li * sd..(li + 1) * sd]);
                p.extend_from_slice(&s.p[li * sd..(li + 1) * sd]);
            }
            Configuration { q, p }
        })
        .collect();
    Ok(Ensemble {
        model_hash: block.model_hash.clone(),
        nu,
        scale: m,
        site_dim: sd,
        seed,
        generator: format!("periodized({})", block.generator),
        samples,
        mcmc: None,
    })
}
