//! Check the structural assumptions of every reference model.

use anharmonic::model::{reference, validate_assumptions, Probe};

fn main() -> anharmonic::Result<()> {
    for name in ["harmonic_chain", "fpu_chain", "quartic_lattice_2d", "rotator_chain", "harmonic_sites"] {
        let model = reference::by_name(name).expect("reference model");
        let report = validate_assumptions(&model, &Probe::default())?;
        println!("{name} ({}): all pass = {}", model.hash(), report.all_pass());
        for c in &report.checks {
            let k = c.constant.map(|x| format!("{x:.4}")).unwrap_or_default();
            println!("  {:<5} {:<28} {k:>10}  {}", if c.pass { "ok" } else { "FAIL" }, c.name, c.note);
        }
        if let Some(c1) = report.c1 {
            println!("  domination constant C1 = {c1:.4}");
        }
    }
    Ok(())
}
