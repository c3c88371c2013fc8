//! Dependence of a site's trajectory on the box size.

use anharmonic::dynamics::{locality_experiment, IntegratorSchedule};
use anharmonic::ensembles::{sample, StateSpec};
use anharmonic::model::{box_sites, reference, BoxSystem};

fn main() -> anharmonic::Result<()> {
    let model = reference::fpu_chain();
    let b = 16;
    let sys = BoxSystem::new(&model, &box_sites(1, b)?)?;
    let cfg = sample(&StateSpec::product_gaussian(1.0, 1.0), &sys, 1, 11)?.samples.remove(0);
    let scales: Vec<i64> = (2..=12).collect();
    let table = locality_experiment(&model, &cfg, b, &scales, &[0], &IntegratorSchedule::new(1e-2, 1.0)?)?;
    println!("{:>3} {:>6} {:>12}", "a", "gamma", "error");
    for row in &table.rows {
        println!("{:>3} {:>6} {:>12.3e}", row.a, row.gamma, row.err);
    }
    println!("superexponential decay: {}", table.superexponential());
    Ok(())
}
