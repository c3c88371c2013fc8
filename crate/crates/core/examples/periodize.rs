//! Build a shift-invariant state from a block state and compare entropy rates.

use anharmonic::ensembles::{periodize, sample, SiteGaussian, StateSpec};
use anharmonic::model::{box_sites, reference, BoxSystem};
use anharmonic::thermo::{gaussian_entropy, periodized_entropy_rate};

fn main() -> anharmonic::Result<()> {
    let model = reference::harmonic_chain();
    let block = BoxSystem::new(&model, &box_sites(1, 2)?)?;
    let vars = [0.2, 1.0, 3.0, 0.5];
    let spec = StateSpec::SiteVarying {
        sites: vars.iter().map(|&v| SiteGaussian::new(v, 1.0)).collect(),
    };
    let cov = spec.gaussian_covariance(&block).expect("gaussian state");
    let (rate, spread) = periodized_entropy_rate(&cov, 1, 2, 1)?;
    println!("block entropy per site {:.6}", gaussian_entropy(&cov)? / block.n_sites() as f64);
    println!("periodized entropy rate {rate:.6} (spread over shifts {spread:.1e})");

    let ens = sample(&spec, &block, 2_000, 4)?;
    let per = periodize(&ens, 6, 5_000, 5)?;
    let var = |i: usize| per.samples.iter().map(|s| s.q[i] * s.q[i]).sum::<f64>() / per.len() as f64;
    let v: Vec<String> = (0..per.geometry().len()).map(|i| format!("{:.2}", var(i))).collect();
    println!("site variances of q after periodizing: {}", v.join(" "));
    Ok(())
}
