//! Entropy, energy and pressure of a finite-volume Gibbs state.

use anharmonic::ensembles::McmcParams;
use anharmonic::model::reference;
use anharmonic::thermo::{gibbs_identity_check, GibbsIdentityOptions};

fn main() -> anharmonic::Result<()> {
    let opts = GibbsIdentityOptions::default();
    for (name, a) in [("harmonic_sites", 1), ("harmonic_chain", 1), ("fpu_chain", 1), ("rotator_chain", 1)] {
        let model = reference::by_name(name).expect("reference model");
        let gi = gibbs_identity_check(&model, 1.0, a, &opts, &McmcParams::default())?;
        println!(
            "{name:<15} S = {:.4}  β⟨H⟩ = {:.4}  P = {:.4}  S − β⟨H⟩ − P = {:+.4} ± {:.4}",
            gi.entropy.value, gi.mean_h.value, gi.pressure.value, gi.residual, gi.stderr
        );
    }
    Ok(())
}
