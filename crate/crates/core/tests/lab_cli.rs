use std::path::{Path, PathBuf};
use std::process::Command;

use anharmonic::lab::{self, Experiment, LoadedConfig, RunManifest, RunOptions, RunStatus};

fn configs() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn models() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../models")
}

fn lab_bin(args: &[&str]) -> i32 {
    Command::new(env!("CARGO_BIN_EXE_lab"))
        .args(args)
        .output()
        .expect("lab binary runs")
        .status
        .code()
        .expect("exit code")
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let path = dir.join("config.json");
    std::fs::write(&path, body).unwrap();
    path
}

fn read_manifest(dir: &Path) -> RunManifest {
    serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

#[test]
fn periodize_run_writes_its_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let loaded = LoadedConfig::load(configs().join("periodize-harmonic.json")).unwrap();
    let out = tmp.path().join("run");
    let m = lab::run(Experiment::Periodize, &loaded, &RunOptions { seed: Some(5), out: Some(out.clone()) }).unwrap();
    assert!(m.all_pass, "{:?}", m.failures().collect::<Vec<_>>());
    assert_eq!(m.seed, 5);
    for f in ["manifest.json", "series.csv", "estimates.json", "periodized.bin"] {
        assert!(out.join(f).is_file(), "{f} missing");
    }
    let on_disk = read_manifest(&out);
    assert_eq!(on_disk.status, RunStatus::Complete);
    assert_eq!(on_disk.checks, m.checks);
    let csv = std::fs::read_to_string(out.join("series.csv")).unwrap();
    assert!(csv.starts_with("experiment,series,x,y,stderr\n"));
    let ens = anharmonic::ensembles::io::load(out.join("periodized.bin")).unwrap();
    assert!(!ens.is_empty());
}

#[test]
fn same_seed_same_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let loaded = LoadedConfig::load(configs().join("bracket-fpu.json")).unwrap();
    let run = |name: &str| {
        let out = tmp.path().join(name);
        lab::run(Experiment::Bracket, &loaded, &RunOptions { seed: None, out: Some(out.clone()) }).unwrap();
        (
            std::fs::read(out.join("series.csv")).unwrap(),
            std::fs::read(out.join("estimates.json")).unwrap(),
        )
    };
    assert_eq!(run("a"), run("b"));
}

#[test]
fn thread_count_does_not_change_results() {
    let tmp = tempfile::tempdir().unwrap();
    let config = configs().join("conserve-entropy-fpu.json");
    let mut outputs = Vec::new();
    for threads in ["1", "4"] {
        let out = tmp.path().join(threads);
        let code = lab_bin(&[
            "conserve-entropy",
            "--config",
            config.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "--threads",
            threads,
        ]);
        assert_eq!(code, 0);
        let m = read_manifest(&out);
        outputs.push((
            std::fs::read(out.join("series.csv")).unwrap(),
            std::fs::read(out.join("estimates.json")).unwrap(),
            m.checks,
        ));
    }
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn usage_and_config_errors_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let out = out.to_str().unwrap();
    let good = configs().join("periodize-harmonic.json");
    let good = good.to_str().unwrap();

    assert_eq!(lab_bin(&["no-such-experiment", "--config", good]), 2);
    assert_eq!(lab_bin(&["periodize"]), 2);
    assert_eq!(lab_bin(&["validate", "--config", good, "--out", out]), 2);
    assert_eq!(lab_bin(&["periodize", "--config", good, "--out", out, "--threads", "0"]), 2);
    assert_eq!(lab_bin(&["periodize", "--config", "/nonexistent/config.json", "--out", out]), 2);

    let model = models().join("harmonic_chain.json");
    let unknown_field = write_config(
        tmp.path(),
        &format!(r#"{{"model": {:?}, "seed": 1, "params": {{"scael": 3}}}}"#, model.to_str().unwrap()),
    );
    assert_eq!(lab_bin(&["periodize", "--config", unknown_field.to_str().unwrap(), "--out", out]), 2);

    let no_seed = write_config(tmp.path(), &format!(r#"{{"model": {:?}}}"#, model.to_str().unwrap()));
    assert_eq!(lab_bin(&["periodize", "--config", no_seed.to_str().unwrap(), "--out", out]), 2);

    let missing_model = write_config(tmp.path(), r#"{"model": "nowhere.json", "seed": 1}"#);
    assert_eq!(lab_bin(&["periodize", "--config", missing_model.to_str().unwrap(), "--out", out]), 2);
}

#[test]
fn failed_check_exits_1() {
    let tmp = tempfile::tempdir().unwrap();
    let model = models().join("harmonic_chain.json");
    // rounding alone exceeds a zero tolerance on the entropy rate
    let cfg = write_config(
        tmp.path(),
        &format!(
            r#"{{"model": {:?}, "seed": 2, "params": {{"n": 500, "mc_samples": 500}}, "tolerances": {{"periodization": 0.0}}}}"#,
            model.to_str().unwrap()
        ),
    );
    let out = tmp.path().join("out");
    let code = lab_bin(&["periodize", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    let m = read_manifest(&out);
    assert_eq!(code, 1);
    assert!(!m.all_pass);
    assert!(!m.check("entropy-rate").unwrap().pass);
}

#[test]
fn seed_flag_overrides_config() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let config = configs().join("validate-fpu.json");
    assert_eq!(
        lab_bin(&["validate", "--config", config.to_str().unwrap(), "--seed", "77", "--out", out.to_str().unwrap()]),
        0
    );
    assert_eq!(read_manifest(&out).seed, 77);
}
