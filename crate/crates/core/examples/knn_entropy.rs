//! Nearest-neighbour entropy of an ensemble against the Gaussian formula.

use anharmonic::ensembles::{sample, StateSpec};
use anharmonic::model::{box_sites, reference, BoxSystem};
use anharmonic::thermo::{entropy_analytic, entropy_knn, Coordinates, KnnOptions};

fn main() -> anharmonic::Result<()> {
    let model = reference::harmonic_chain();
    let spec = StateSpec::product_gaussian(0.5, 2.0);
    let opts = KnnOptions::default();
    for a in [1, 2] {
        let sys = BoxSystem::new(&model, &box_sites(1, a)?)?;
        let ens = sample(&spec, &sys, 50_000, 7)?;
        let all: Vec<usize> = (0..sys.n_sites()).collect();
        let knn = entropy_knn(&ens, &sys, &all, Coordinates::Phase, &opts)?;
        let exact = entropy_analytic(&spec, &sys)?;
        println!(
            "{} sites: KNN {:.4} ± {:.4}, exact {:.4}",
            sys.n_sites(),
            knn.value,
            knn.stderr,
            exact.value
        );
    }
    Ok(())
}
