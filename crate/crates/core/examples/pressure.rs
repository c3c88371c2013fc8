//! Finite-volume pressure by Monte Carlo and by quadrature, and the
//! infinite-chain value from the transfer integral.

use anharmonic::model::reference;
use anharmonic::thermo::{kinetic_pressure, pressure, transfer_integral, PressureMethod};

fn main() -> anharmonic::Result<()> {
    let model = reference::fpu_chain();
    let a = 2;
    println!("{:>5} {:>22} {:>12} {:>12}", "beta", "Monte Carlo", "quadrature", "infinite");
    for beta in [0.5, 1.0, 2.0] {
        let mc = pressure(&model, beta, a, PressureMethod::MonteCarlo { samples: 200_000, seed: 1 })?;
        let q = pressure(&model, beta, a, PressureMethod::Quadrature1D { nodes: 192 })?;
        let inf = transfer_integral(&model, beta, 192)?.log_lambda + kinetic_pressure(1, beta);
        println!(
            "{beta:>5} {:>12.6} ± {:.6} {:>12.6} {inf:>12.6}",
            mc.per_site, mc.per_site_stderr, q.per_site
        );
    }
    Ok(())
}
