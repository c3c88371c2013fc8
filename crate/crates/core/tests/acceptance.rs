//! Acceptance suite: one entry per criterion, each printed as PASS/FAIL with
//! its wall time. Run with `cargo test --test acceptance`.

use std::path::PathBuf;
use std::time::Instant;

use anharmonic::dynamics::{
    a_priori_matrix, evolve, reversal_roundtrip, step_jacobian_det, Configuration, IntegratorSchedule,
};
use anharmonic::ensembles::{sample, McmcParams, StateSpec};
use anharmonic::lab::{self, Experiment, LoadedConfig, RunManifest, RunOptions};
use anharmonic::model::{box_sites, reference, validate_assumptions, BoxSystem, LatticeModel, Probe};
use anharmonic::thermo::{
    entropy_knn_points, gibbs_identity_check, kinetic_pressure, subadditivity_knn, GibbsIdentityOptions, KnnOptions,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

struct Outcome {
    pass: bool,
    lines: Vec<String>,
}

impl Outcome {
    fn new() -> Self {
        Outcome {
            pass: true,
            lines: Vec::new(),
        }
    }

    fn require(&mut self, ok: bool, line: String) {
        self.pass &= ok;
        self.lines.push(format!("{} {line}", if ok { "ok  " } else { "FAIL" }));
    }

    /// Fold in a lab run: every check of the manifest must pass, or only the
    /// named ones when `only` is non-empty.
    fn lab(&mut self, config: &str, only: &[&str]) {
        match run_config(config) {
            Ok(m) => {
                let mut seen = 0;
                for c in &m.checks {
                    if !only.is_empty() && !only.iter().any(|p| c.name.starts_with(p)) {
                        continue;
                    }
                    seen += 1;
                    let measured = c.measured.map(|x| format!("{x:.3e}")).unwrap_or_else(|| "-".into());
                    let threshold = c.threshold.map(|x| format!("{x:.3e}")).unwrap_or_else(|| "-".into());
                    self.require(c.pass, format!("{config}: {} measured {measured} threshold {threshold}", c.name));
                }
                self.require(seen > 0, format!("{config}: {seen} checks matched"));
            }
            Err(e) => self.require(false, format!("{config}: run failed: {e}")),
        }
    }
}

fn workspace() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn run_config(name: &str) -> anharmonic::Result<RunManifest> {
    let loaded = LoadedConfig::load(workspace().join("configs").join(format!("{name}.json")))?;
    let experiment: Experiment = loaded.config.experiment.expect("shipped configs name their experiment");
    let dir = tempfile::tempdir()?;
    lab::run(
        experiment,
        &loaded,
        &RunOptions {
            seed: None,
            out: Some(dir.path().join("run")),
        },
    )
}

fn product_cfg(model: &LatticeModel, a: i64, seed: u64) -> (BoxSystem, Configuration) {
    let sys = BoxSystem::new(model, &box_sites(model.nu(), a).unwrap()).unwrap();
    let cfg = sample(&StateSpec::product_gaussian(1.0, 1.0), &sys, 1, seed).unwrap().samples.remove(0);
    (sys, cfg)
}

fn integrator_fidelity() -> Outcome {
    let mut o = Outcome::new();
    let clock = Instant::now();
    let model = reference::harmonic_sites();
    let sys = BoxSystem::new(&model, &box_sites(1, 1).unwrap()).unwrap();
    let cfg = Configuration::new(&sys, vec![1.0; 2], vec![0.0; 2]).unwrap();
    let tr = evolve(&sys, &cfg, &IntegratorSchedule::new(1e-3, 10.0).unwrap()).unwrap();
    let err = (tr.last.q[0] - 10f64.cos()).abs();
    o.require(err < 1e-4, format!("oscillator |q(10) - cos 10| = {err:.3e} < 1e-4"));
    o.lab("evolve-harmonic", &["energy-drift"]);
    let secs = clock.elapsed().as_secs_f64();
    o.require(secs < 5.0, format!("runtime {secs:.2} s < 5 s"));
    o
}

fn liouville() -> Outcome {
    let mut o = Outcome::new();
    for (name, model) in [
        ("harmonic chain", reference::harmonic_chain()),
        ("FPU chain", reference::fpu_chain()),
        ("rotator chain", reference::rotator_chain()),
    ] {
        let (sys, cfg) = product_cfg(&model, 1, 21);
        let det = step_jacobian_det(&sys, &cfg, 1e-2, 1e-5).unwrap();
        o.require((det - 1.0).abs() < 1e-6, format!("{name}, 2 sites: |det - 1| = {:.3e}", (det - 1.0).abs()));
    }
    o
}

fn time_reversal() -> Outcome {
    let mut o = Outcome::new();
    let sched = IntegratorSchedule::new(1e-3, 1.0).unwrap();
    for model in reference::all() {
        let a = if model.nu() == 1 { 8 } else { 3 };
        let (sys, cfg) = product_cfg(&model, a, 31);
        let (_, err) = reversal_roundtrip(&sys, &cfg, &sched).unwrap();
        o.require(err < 1e-8, format!("model {}: round trip {err:.3e} < 1e-8", model.hash()));
    }
    o
}

fn a_priori_bound() -> Outcome {
    let mut o = Outcome::new();
    for model in reference::all() {
        let report = validate_assumptions(&model, &Probe::default()).unwrap();
        if !report.all_pass() {
            o.lines.push(format!("skip model {}: assumptions not validated", model.hash()));
            continue;
        }
        let c1 = report.c1.expect("validated models have C1");
        let a = if model.nu() == 1 { 6 } else { 3 };
        let (sys, cfg) = product_cfg(&model, a, 41);
        let band = a_priori_matrix(&model, sys.geometry(), c1, report.onsite_shift).unwrap();
        let e0 = cfg.local_energies_ni(&sys);
        for t in [1.0, 2.0, 5.0] {
            let tr = evolve(&sys, &cfg, &IntegratorSchedule::new(1e-3, t).unwrap()).unwrap();
            let r = band.bound_check(&e0, &tr.last.local_energies_ni(&sys), t, 1e-8);
            o.require(
                r.holds,
                format!("model {} t = {t}: max E_i(t)/bound_i = {:.3e}", model.hash(), r.max_ratio),
            );
        }
    }
    o
}

fn locality() -> Outcome {
    let mut o = Outcome::new();
    let clock = Instant::now();
    o.lab("locality-fpu", &[]);
    let secs = clock.elapsed().as_secs_f64();
    o.require(secs < 60.0, format!("runtime {secs:.2} s < 60 s"));
    o
}

fn energy_conservation() -> Outcome {
    let mut o = Outcome::new();
    let clock = Instant::now();
    o.lab("conserve-energy-fpu", &[]);
    let secs = clock.elapsed().as_secs_f64();
    o.require(secs < 300.0, format!("runtime {secs:.2} s < 300 s"));
    o
}

fn bracket() -> Outcome {
    let mut o = Outcome::new();
    o.lab("bracket-fpu", &[]);
    o
}

/// AR(1) Gaussian vectors with covariance `rho^|i-j|`.
fn ar1_points(dim: usize, rho: f64, n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let c = (1.0 - rho * rho).sqrt();
    let mut pts = Vec::with_capacity(n * dim);
    for _ in 0..n {
        let mut x: f64 = rng.sample(StandardNormal);
        pts.push(x);
        for _ in 1..dim {
            let z: f64 = rng.sample(StandardNormal);
            x = rho * x + c * z;
            pts.push(x);
        }
    }
    pts
}

fn entropy_machinery() -> Outcome {
    let mut o = Outcome::new();
    let n = 100_000;
    let rho = 0.5;
    let opts = KnnOptions::default();
    for dim in [2, 4, 6, 8] {
        let pts = ar1_points(dim, rho, n, dim as u64);
        let est = entropy_knn_points(&pts, dim, &vec![None; dim], &opts, 7).unwrap();
        let d = dim as f64;
        let exact = 0.5 * d * (std::f64::consts::TAU * std::f64::consts::E).ln() + 0.5 * (d - 1.0) * (1.0 - rho * rho).ln();
        let rel = (est.value - exact).abs() / exact.abs();
        o.require(rel < 0.05, format!("dim {dim}: KNN {:.4} vs exact {exact:.4}, relative {rel:.2e} < 5%", est.value));
    }
    let rho = 0.6;
    let pts = ar1_points(2, rho, n, 99);
    let sub = subadditivity_knn(&pts, 2, &[0], &[1], &opts, 8).unwrap();
    let exact_mi = -0.5 * (1.0 - rho * rho).ln();
    let dev = (sub.mutual_information - exact_mi).abs();
    o.require(
        dev <= 3.0 * sub.stderr,
        format!(
            "pair rho = {rho}: S1 + S2 - S12 = {:.4} ± {:.4} vs -ln(1 - rho^2)/2 = {exact_mi:.4}",
            sub.mutual_information, sub.stderr
        ),
    );
    o.require(sub.holds, "subadditivity holds".into());
    o
}

fn entropy_conservation() -> Outcome {
    let mut o = Outcome::new();
    o.lab("conserve-entropy-harmonic", &["entropy-exact"]);
    o.lab("conserve-entropy-fpu", &["entropy-knn"]);
    o
}

fn pressure_and_equilibrium() -> Outcome {
    let mut o = Outcome::new();
    o.lab("pressure-harmonic", &["mc-vs-quadrature", "kinetic-split", "ess"]);
    let mut split: f64 = 0.0;
    for beta in [0.1f64, 0.5, 1.0, 3.0, 10.0] {
        split = split.max((kinetic_pressure(1, beta) - 0.5 * (std::f64::consts::TAU.ln() - beta.ln())).abs());
    }
    o.require(split < 1e-12, format!("kinetic part minus ln(2π/β)/2: {split:.3e} < 1e-12"));
    for cfg in ["equilibrium-harmonic", "equilibrium-fpu", "equilibrium-quartic-2d", "equilibrium-rotator"] {
        o.lab(cfg, &["gibbs-identity"]);
    }
    let gi = gibbs_identity_check(
        &reference::harmonic_sites(),
        1.0,
        1,
        &GibbsIdentityOptions::default(),
        &McmcParams::default(),
    )
    .unwrap();
    let s = gi.entropy.value / 2.0;
    let exact = 1.0 + std::f64::consts::TAU.ln();
    o.require(
        (s - exact).abs() < 1e-12 && (s - 2.8379).abs() < 1e-4,
        format!("single harmonic site S = {s:.6}, 1 + ln 2π = {exact:.6}"),
    );
    o
}

fn variational() -> Outcome {
    let mut o = Outcome::new();
    for cfg in ["variational-fpu", "variational-harmonic", "variational-sites"] {
        o.lab(cfg, &[]);
    }
    o
}

fn periodization() -> Outcome {
    let mut o = Outcome::new();
    o.lab("periodize-harmonic", &[]);
    o
}

fn time_averages() -> Outcome {
    let mut o = Outcome::new();
    o.lab("des-diagnostic-fpu", &["E0-flat"]);
    o.lab("des-diagnostic-gibbs", &["E0-flat", "gibbs-noise-floor"]);
    o
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 13] = [
        ("1 integrator fidelity", integrator_fidelity),
        ("2 volume preservation", liouville),
        ("3 time reversal", time_reversal),
        ("4 a-priori energy bound", a_priori_bound),
        ("5 locality", locality),
        ("6 specific energy conservation", energy_conservation),
        ("7 bracket cancellation", bracket),
        ("8 entropy estimators", entropy_machinery),
        ("9 entropy conservation", entropy_conservation),
        ("10 pressure and Gibbs identity", pressure_and_equilibrium),
        ("11 variational inequality", variational),
        ("12 periodization", periodization),
        ("13 time averages", time_averages),
    ];
    let total = Instant::now();
    let mut failed = Vec::new();
    for (name, f) in criteria {
        let clock = Instant::now();
        let outcome = std::panic::catch_unwind(f).unwrap_or_else(|_| Outcome {
            pass: false,
            lines: vec!["FAIL panicked".into()],
        });
        let secs = clock.elapsed().as_secs_f64();
        println!("{} {name} ({secs:.2} s)", if outcome.pass { "PASS" } else { "FAIL" });
        for l in &outcome.lines {
            println!("       {l}");
        }
        if !outcome.pass {
            failed.push(name);
        }
    }
    println!(
        "\n{} of 13 criteria passed in {:.1} s",
        13 - failed.len(),
        total.elapsed().as_secs_f64()
    );
    if !failed.is_empty() {
        println!("failed: {}", failed.join(", "));
        std::process::exit(1);
    }
}
