//! Time averages of a non-equilibrium ensemble keep the specific energy.

use anharmonic::ensembles::{interior_sites, sample, site_averages, time_average, estimate, StateSpec};
use anharmonic::model::{box_sites, reference, BoxSystem};

fn main() -> anharmonic::Result<()> {
    let model = reference::fpu_chain();
    let sys = BoxSystem::new(&model, &box_sites(1, 8)?)?;
    let ens = sample(&StateSpec::product_gaussian(0.3, 2.0), &sys, 4_000, 9)?;
    let sites = interior_sites(&sys, 4.0);
    let e0 = |v: &[anharmonic::dynamics::Configuration]| -> Vec<f64> {
        v.iter()
            .map(|c| sites.iter().map(|&s| sys.local_energy_full(&c.q, &c.p, s).expect("interior")).sum::<f64>() / sites.len() as f64)
            .collect()
    };
    let start = e0(&ens.samples);
    println!("T = 0: ⟨E_0⟩ = {:.4}", estimate(&start, 1).value);
    for t in [1.0, 2.0, 4.0] {
        let avg = time_average(&ens, &sys, t, 16, 1e-2, 2)?;
        let q2 = site_averages(&avg, &sites, |c, s| c.q[s] * c.q[s])?;
        println!(
            "T = {t}: ⟨E_0⟩ = {:.4}, ⟨q_0²⟩ = {:.4}",
            estimate(&e0(&avg.samples), 1).value,
            estimate(&q2, 1).value
        );
    }
    Ok(())
}
