//! Ensemble files.
//!
//! Binary layout (little endian): the magic `ANHENS01`, a `u64` header
//! length, a JSON header (`model_hash`, `nu`, `scale`, `site_dim`, `n`,
//! `seed`, `generator`), then for each sample the `q` block followed by the
//! `p` block as `f64`.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::Ensemble;
use crate::dynamics::Configuration;
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"ANHENS01";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleHeader {
    pub model_hash: String,
    pub nu: usize,
    pub scale: i64,
    pub site_dim: usize,
    pub n: usize,
    pub seed: u64,
    pub generator: String,
}

impl EnsembleHeader {
    fn ndof(&self) -> usize {
        (2 * self.scale as usize).pow(self.nu as u32) * self.site_dim
    }
}

pub fn write_binary(mut w: impl Write, ens: &Ensemble) -> Result<()> {
    let header = EnsembleHeader {
        model_hash: ens.model_hash.clone(),
        nu: ens.nu,
        scale: ens.scale,
        site_dim: ens.site_dim,
        n: ens.samples.len(),
        seed: ens.seed,
        generator: ens.generator.clone(),
    };
    let json = serde_json::to_vec(&header)?;
    w.write_all(MAGIC)?;
    w.write_all(&(json.len() as u64).to_le_bytes())?;
    w.write_all(&json)?;
    let ndof = header.ndof();
    let mut buf = Vec::with_capacity(16 * ndof);
    for s in &ens.samples {
        if s.q.len() != ndof || s.p.len() != ndof {
            return Err(Error::Format("sample size does not match the header".into()));
        }
        buf.clear();
        for x in s.q.iter().chain(&s.p) {
            buf.extend_from_slice(&x.to_le_bytes());
        }
        w.write_all(&buf)?;
    }
    Ok(())
}

pub fn read_binary(mut r: impl Read) -> Result<Ensemble> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format("not an ensemble file".into()));
    }
    let mut len = [0u8; 8];
    r.read_exact(&mut len)?;
    let len = u64::from_le_bytes(len) as usize;
    if len > 1 << 20 {
        return Err(Error::Format(format!("header of {len} bytes is implausible")));
    }
    let mut json = vec![0u8; len];
    r.read_exact(&mut json)?;
    let header: EnsembleHeader = serde_json::from_slice(&json)?;
    let ndof = header.ndof();
    let mut samples = Vec::with_capacity(header.n);
    let mut raw = vec![0u8; 16 * ndof];
    for _ in 0..header.n {
        r.read_exact(&mut raw)?;
        let vals: Vec<f64> = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        samples.push(Configuration {
            q: vals[..ndof].to_vec(),
            p: vals[ndof..].to_vec(),
        });
    }
    Ok(Ensemble {
        model_hash: header.model_hash,
        nu: header.nu,
        scale: header.scale,
        site_dim: header.site_dim,
        seed: header.seed,
        generator: header.generator,
        samples,
        mcmc: None,
    })
}

pub fn save(path: impl AsRef<Path>, ens: &Ensemble) -> Result<()> {
    let f = std::fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(f);
    write_binary(&mut w, ens)?;
    w.flush()?;
    Ok(())
}

pub fn load(path: impl AsRef<Path>) -> Result<Ensemble> {
    let f = std::fs::File::open(path)?;
    read_binary(std::io::BufReader::new(f))
}

/// Long-format CSV: `sample,site,x1..xν,q1..qd,p1..pd`, preceded by
/// `#`-prefixed header lines.
pub fn to_csv(ens: &Ensemble) -> String {
    use std::fmt::Write as _;
    let g = ens.geometry();
    let sd = ens.site_dim;
    let mut out = String::new();
    let _ = writeln!(out, "# model_hash={}", ens.model_hash);
    let _ = writeln!(out, "# nu={} scale={} site_dim={}", ens.nu, ens.scale, sd);
    let _ = writeln!(out, "# n={} seed={} generator={}", ens.samples.len(), ens.seed, ens.generator);
    let mut cols = vec!["sample".to_string(), "site".to_string()];
    cols.extend((1..=ens.nu).map(|k| format!("x{k}")));
    cols.extend((1..=sd).map(|k| format!("q{k}")));
    cols.extend((1..=sd).map(|k| format!("p{k}")));
    let _ = writeln!(out, "{}", cols.join(","));
    for (k, s) in ens.samples.iter().enumerate() {
        for (i, x) in g.sites().iter().enumerate() {
            let mut row = vec![k.to_string(), i.to_string()];
            row.extend(x.iter().map(|c| c.to_string()));
            row.extend(s.q[i * sd..(i + 1) * sd].iter().map(|v| format!("{v:e}")));
            row.extend(s.p[i * sd..(i + 1) * sd].iter().map(|v| format!("{v:e}")));
            let _ = writeln!(out, "{}", row.join(","));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensembles::{sample, StateSpec};
    use crate::model::{box_sites, reference, BoxSystem};

    #[test]
    fn binary_roundtrip() {
        let sys = BoxSystem::new(&reference::quartic_lattice_2d(), &box_sites(2, 1).unwrap()).unwrap();
        let ens = sample(&StateSpec::product_gaussian(1.0, 0.5), &sys, 37, 4).unwrap();
        let mut bytes = Vec::new();
        write_binary(&mut bytes, &ens).unwrap();
        let back = read_binary(bytes.as_slice()).unwrap();
        assert_eq!(back, ens);
    }

    #[test]
    fn file_roundtrip_and_bad_magic() {
        let dir = tempfile::tempdir().unwrap();
        let sys = BoxSystem::new(&reference::harmonic_chain(), &box_sites(1, 2).unwrap()).unwrap();
        let ens = sample(&StateSpec::product_gaussian(1.0, 1.0), &sys, 5, 1).unwrap();
        let path = dir.path().join("e.bin");
        save(&path, &ens).unwrap();
        assert_eq!(load(&path).unwrap(), ens);
        assert!(read_binary(&b"NOTANENSEMBLE..."[..]).is_err());
    }

    #[test]
    fn csv_has_one_row_per_site_and_sample() {
        let sys = BoxSystem::new(&reference::harmonic_chain(), &box_sites(1, 2).unwrap()).unwrap();
        let ens = sample(&StateSpec::product_gaussian(1.0, 1.0), &sys, 3, 1).unwrap();
        let csv = to_csv(&ens);
        let rows = csv.lines().filter(|l| !l.starts_with('#')).count();
        assert_eq!(rows, 1 + 3 * 4);
        assert!(csv.contains("sample,site,x1,q1,p1"));
    }
}
