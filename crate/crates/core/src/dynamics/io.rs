//! Snapshot CSV files and trajectory manifests.
//!
//! A snapshot starts with `#`-prefixed header lines (`model_hash`, `t`, `h`,
//! `seed`), then one row per site: `site,x1..xν,q1..qd,p1..pd`.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Configuration, Trajectory};
use crate::error::{Error, Result};
use crate::model::BoxSystem;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotHeader {
    pub model_hash: String,
    pub t: f64,
    pub h: f64,
    pub seed: u64,
}

pub fn snapshot_csv(sys: &BoxSystem, cfg: &Configuration, header: &SnapshotHeader) -> String {
    let nu = sys.model().nu();
    let sd = sys.site_dim();
    let mut out = String::new();
    let _ = writeln!(out, "# model_hash={}", header.model_hash);
    let _ = writeln!(out, "# t={}", header.t);
    let _ = writeln!(out, "# h={}", header.h);
    let _ = writeln!(out, "# seed={}", header.seed);
    let mut cols = vec!["site".to_string()];
    cols.extend((1..=nu).map(|k| format!("x{k}")));
    cols.extend((1..=sd).map(|k| format!("q{k}")));
    cols.extend((1..=sd).map(|k| format!("p{k}")));
    let _ = writeln!(out, "{}", cols.join(","));
    for s in 0..sys.n_sites() {
        let mut row = vec![s.to_string()];
        row.extend(sys.geometry().site(s).iter().map(|x| x.to_string()));
        row.extend(cfg.q[s * sd..(s + 1) * sd].iter().map(|x| format!("{x:e}")));
        row.extend(cfg.p[s * sd..(s + 1) * sd].iter().map(|x| format!("{x:e}")));
        let _ = writeln!(out, "{}", row.join(","));
    }
    out
}

pub fn write_snapshot(
    path: impl AsRef<Path>,
    sys: &BoxSystem,
    cfg: &Configuration,
    header: &SnapshotHeader,
) -> Result<()> {
    std::fs::write(path, snapshot_csv(sys, cfg, header))?;
    Ok(())
}

pub fn parse_snapshot(text: &str, nu: usize, site_dim: usize) -> Result<(SnapshotHeader, Configuration)> {
    let mut fields = std::collections::HashMap::new();
    let mut q = Vec::new();
    let mut p = Vec::new();
    let mut seen_columns = false;
    for line in text.lines() {
        if let Some(rest) = line.strip_prefix('#') {
            if let Some((k, v)) = rest.trim().split_once('=') {
                fields.insert(k.trim().to_string(), v.trim().to_string());
            }
            continue;
        }
        if !seen_columns {
            seen_columns = true;
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let vals: Vec<&str> = line.split(',').collect();
        if vals.len() != 1 + nu + 2 * site_dim {
            return Err(Error::Format(format!("snapshot row has {} fields", vals.len())));
        }
        let num = |s: &str| s.trim().parse::<f64>().map_err(|e| Error::Format(format!("{s}: {e}")));
        for v in &vals[1 + nu..1 + nu + site_dim] {
            q.push(num(v)?);
        }
        for v in &vals[1 + nu + site_dim..] {
            p.push(num(v)?);
        }
    }
    let get = |k: &str| fields.get(k).cloned().ok_or_else(|| Error::Format(format!("missing header `{k}`")));
    let parse_f = |k: &str| -> Result<f64> {
        get(k)?.parse().map_err(|e| Error::Format(format!("header {k}: {e}")))
    };
    let header = SnapshotHeader {
        model_hash: get("model_hash")?,
        t: parse_f("t")?,
        h: parse_f("h")?,
        seed: get("seed")?.parse().map_err(|e| Error::Format(format!("header seed: {e}")))?,
    };
    Ok((header, Configuration { q, p }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryManifest {
    pub model_hash: String,
    pub box_scale: i64,
    pub h: f64,
    pub t_end: f64,
    pub steps: u64,
    pub seed: u64,
    pub initial_energy: f64,
    pub final_energy: f64,
    pub relative_drift: f64,
    pub snapshots: Vec<SnapshotEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotEntry {
    pub t: f64,
    pub file: String,
}

/// Write every snapshot of `traj` plus `manifest.json` into `dir`.
pub fn write_trajectory(
    dir: impl AsRef<Path>,
    sys: &BoxSystem,
    traj: &Trajectory,
    seed: u64,
) -> Result<TrajectoryManifest> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let hash = sys.model().hash();
    let mut entries = Vec::new();
    let snaps: Vec<(f64, &Configuration)> = if traj.snapshots.is_empty() {
        vec![(traj.steps as f64 * traj.schedule.h, &traj.last)]
    } else {
        traj.snapshots.iter().map(|s| (s.t, &s.cfg)).collect()
    };
    for (k, (t, cfg)) in snaps.into_iter().enumerate() {
        let file = format!("snapshot_{k:05}.csv");
        let header = SnapshotHeader {
            model_hash: hash.clone(),
            t,
            h: traj.schedule.h,
            seed,
        };
        write_snapshot(dir.join(&file), sys, cfg, &header)?;
        entries.push(SnapshotEntry { t, file });
    }
    let manifest = TrajectoryManifest {
        model_hash: hash,
        box_scale: sys.geometry().scale(),
        h: traj.schedule.h,
        t_end: traj.schedule.t_end,
        steps: traj.steps,
        seed,
        initial_energy: traj.initial_energy,
        final_energy: traj.final_energy,
        relative_drift: traj.relative_energy_drift(),
        snapshots: entries,
    };
    std::fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
    Ok(manifest)
}
