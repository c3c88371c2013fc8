//! Local energies against the matrix-exponential bound.

use anharmonic::dynamics::{a_priori_matrix, evolve, IntegratorSchedule};
use anharmonic::ensembles::{sample, StateSpec};
use anharmonic::model::{box_sites, reference, validate_assumptions, BoxSystem, Probe};

fn main() -> anharmonic::Result<()> {
    let model = reference::fpu_chain();
    let report = validate_assumptions(&model, &Probe::default())?;
    let c1 = report.c1.expect("FPU chain satisfies the assumptions");
    let sys = BoxSystem::new(&model, &box_sites(1, 6)?)?;
    let cfg = sample(&StateSpec::product_gaussian(1.0, 1.0), &sys, 1, 3)?.samples.remove(0);
    let band = a_priori_matrix(&model, sys.geometry(), c1, report.onsite_shift)?;
    let e0 = cfg.local_energies_ni(&sys);
    for t in [0.5, 1.0, 2.0, 5.0] {
        let tr = evolve(&sys, &cfg, &IntegratorSchedule::new(1e-3, t)?)?;
        let r = band.bound_check(&e0, &tr.last.local_energies_ni(&sys), t, 1e-8);
        println!("t = {t}: bound holds = {}, worst E_i(t) / bound_i = {:.3e}", r.holds, r.max_ratio);
    }
    Ok(())
}
