use anharmonic::dynamics::{io as traj_io, Configuration};
use anharmonic::ensembles::{io as ens_io, sample, StateSpec};
use anharmonic::model::io::{load_model, model_to_json, parse_model};
use anharmonic::model::{box_sites, reference, BoxSystem};

#[test]
fn reference_models_roundtrip_through_json() {
    for model in reference::all() {
        let back = parse_model(&model_to_json(&model)).unwrap();
        assert_eq!(back.hash(), model.hash());
    }
}

#[test]
fn shipped_model_files_match_the_reference_models() {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../models");
    for name in ["harmonic_chain", "fpu_chain", "quartic_lattice_2d", "rotator_chain", "harmonic_sites"] {
        let loaded = load_model(dir.join(format!("{name}.json"))).unwrap();
        assert_eq!(loaded.hash(), reference::by_name(name).unwrap().hash(), "{name}");
    }
}

#[test]
fn ensemble_binary_roundtrip_is_exact() {
    let tmp = tempfile::tempdir().unwrap();
    let model = reference::quartic_lattice_2d();
    let sys = BoxSystem::new(&model, &box_sites(2, 2).unwrap()).unwrap();
    let ens = sample(&StateSpec::product_gaussian(0.7, 1.3), &sys, 64, 3).unwrap();
    let path = tmp.path().join("ens.bin");
    ens_io::save(&path, &ens).unwrap();
    assert_eq!(ens_io::load(&path).unwrap(), ens);
}

#[test]
fn snapshot_roundtrip_is_exact() {
    let model = reference::rotator_chain();
    let sys = BoxSystem::new(&model, &box_sites(1, 3).unwrap()).unwrap();
    let cfg: Configuration = sample(&StateSpec::product_gaussian(1.0, 1.0), &sys, 1, 8).unwrap().samples.remove(0);
    let header = traj_io::SnapshotHeader {
        model_hash: model.hash(),
        t: 0.25,
        h: 1e-3,
        seed: 8,
    };
    let text = traj_io::snapshot_csv(&sys, &cfg, &header);
    let (h, back) = traj_io::parse_snapshot(&text, 1, 1).unwrap();
    assert_eq!(back, cfg);
    assert_eq!(h, header);
}
