//! Velocity Verlet on a box: exact oscillator, energy drift, reversibility
//! and volume preservation.

use anharmonic::dynamics::{evolve, reversal_roundtrip, step_jacobian_det, Configuration, IntegratorSchedule};
use anharmonic::ensembles::{sample, StateSpec};
use anharmonic::model::{box_sites, reference, BoxSystem};

fn main() -> anharmonic::Result<()> {
    // uncoupled harmonic sites, q(t) = cos t
    let sites = reference::harmonic_sites();
    let sys = BoxSystem::new(&sites, &box_sites(1, 1)?)?;
    let start = Configuration::new(&sys, vec![1.0; 2], vec![0.0; 2])?;
    for h in [1e-1, 1e-2, 1e-3] {
        let tr = evolve(&sys, &start, &IntegratorSchedule::new(h, 10.0)?)?;
        println!("h = {h:e}: |q(10) - cos 10| = {:.3e}", (tr.last.q[0] - 10f64.cos()).abs());
    }

    let fpu = reference::fpu_chain();
    let sys = BoxSystem::new(&fpu, &box_sites(1, 8)?)?;
    let cfg = sample(&StateSpec::product_gaussian(1.0, 1.0), &sys, 1, 5)?.samples.remove(0);
    let sched = IntegratorSchedule::new(1e-3, 5.0)?;
    let tr = evolve(&sys, &cfg, &sched)?;
    println!("FPU, 17 sites, t = 5: relative energy drift {:.3e}", tr.relative_energy_drift());
    let (_, err) = reversal_roundtrip(&sys, &cfg, &sched)?;
    println!("forward, flip momenta, forward: distance to start {err:.3e}");
    println!("one step Jacobian: det - 1 = {:.3e}", step_jacobian_det(&sys, &cfg, 1e-2, 1e-5)? - 1.0);
    Ok(())
}
