//! Bodies of the individual experiments.

use super::Run;
use crate::dynamics::{
    a_priori_matrix, evolve_with, io::write_trajectory, locality_experiment, reversal_roundtrip, step_jacobian_det,
    EvolveOptions, IntegratorSchedule,
};
use crate::ensembles::{
    self, estimate, interior_sites, observable_distance, periodize, pushforward, sample, site_averages, standard_panel,
    time_average, Ensemble, SiteDensity, SiteGaussian, StateSpec,
};
use crate::error::{Error, Result};
use crate::model::{validate_assumptions, BoxSystem, Probe};
use crate::stats::{ks_critical, ks_statistic, Estimate};
use crate::thermo::{
    chain_symbol, compatible_beta_fn, covariance_transport, energy_mean, entropy_analytic, entropy_knn,
    gaussian_entropy, gibbs_identity_check, kinetic_pressure, periodized_entropy_rate, pressure, stationary_chain_covariance,
    transfer_integral, variational_gap, BracketReport, Compatibility, Coordinates, EnergyFunctional,
    GibbsIdentityOptions, KnnOptions, PressureCurve, PressureMethod, PressurePoint, StateThermo,
};
use super::Experiment;

pub(super) fn dispatch(r: &mut Run) -> Result<()> {
    match r.experiment {
        Experiment::Validate => validate(r),
        Experiment::Evolve => evolve(r),
        Experiment::ConserveEnergy => conserve_energy(r),
        Experiment::ConserveEntropy => conserve_entropy(r),
        Experiment::Locality => locality(r),
        Experiment::Bracket => bracket(r),
        Experiment::Pressure => pressure_exp(r),
        Experiment::Equilibrium => equilibrium(r),
        Experiment::Variational => variational(r),
        Experiment::DesDiagnostic => des_diagnostic(r),
        Experiment::Periodize => periodize_exp(r),
    }
}

const DEFAULT_NODES: usize = 192;

fn origin(sys: &BoxSystem) -> usize {
    sys.geometry().index_of(&vec![0; sys.model().nu()]).expect("origin lies in every box")
}

fn knn_opts(r: &Run) -> KnnOptions {
    KnnOptions {
        k: r.params.knn_k.unwrap_or(KnnOptions::default().k),
        ..KnnOptions::default()
    }
}

/// Per-site pressure of the infinite chain, when the transfer integral applies.
fn infinite_chain_pressure(r: &Run, beta: f64) -> Result<f64> {
    chain_pressure_fn(r)(beta)
}

fn chain_pressure_fn(r: &Run) -> impl Fn(f64) -> Result<f64> {
    let model = r.model.clone();
    let nodes = r.params.quadrature_nodes.unwrap_or(DEFAULT_NODES);
    move |beta| {
        let ti = transfer_integral(&model, beta, nodes)?;
        let p = kinetic_pressure(model.site_dim(), beta) + ti.log_lambda;
        if !p.is_finite() {
            return Err(Error::Unsupported(format!("transfer integral overflows at beta = {beta}")));
        }
        Ok(p)
    }
}

fn supports_transfer(r: &Run) -> bool {
    transfer_integral(&r.model, 1.0, 8).is_ok()
}

fn validate(r: &mut Run) -> Result<()> {
    let report = validate_assumptions(&r.model, &Probe::default())?;
    for c in &report.checks {
        r.check(
            format!("assumption/{}", c.name),
            c.pass,
            c.constant.unwrap_or(f64::NAN),
            f64::NAN,
            c.note.clone(),
        );
    }
    if let (Some(sym), None) = (report.symbolic_polynomial, report.get("polynomial-degrees")) {
        r.check("assumption/polynomial-degrees", sym, f64::NAN, f64::NAN, "interaction degree below on-site degree");
    }
    r.artifact_json("assumptions.json", &report)
}

fn evolve(r: &mut Run) -> Result<()> {
    let a = r.params.scale.unwrap_or(8);
    let h = r.params.h.unwrap_or(1e-3);
    let t = r.params.t.unwrap_or(10.0);
    let sys = r.system(a)?;
    let spec = r.state_or(StateSpec::product_gaussian(1.0, 1.0));
    let cfg0 = sample(&spec, &sys, 1, r.seed)?.samples.remove(0);
    let sched = IntegratorSchedule::new(h, t)?;
    let steps = sched.steps()?;
    let every = r.params.snapshot_every.unwrap_or((steps / 10).max(1));
    let traj = evolve_with(
        &sys,
        &cfg0,
        &sched,
        &EvolveOptions {
            snapshot_every: Some(every),
            ..EvolveOptions::default()
        },
    )?;
    let man = write_trajectory(r.out.join("trajectory"), &sys, &traj, r.seed)?;
    r.register("trajectory/manifest.json");
    for s in &man.snapshots {
        r.register(&format!("trajectory/{}", s.file));
    }

    let h0 = traj.initial_energy;
    let mut drift: f64 = 0.0;
    for s in &traj.snapshots {
        let e = s.cfg.hamiltonian(&sys);
        drift = drift.max((e - h0).abs() / h0.abs().max(f64::MIN_POSITIVE));
        r.point("energy", s.t, e, 0.0);
    }
    r.check(
        "energy-drift",
        drift < r.tol.energy_drift,
        drift,
        r.tol.energy_drift,
        format!("max relative drift over {} snapshots, h = {h}", traj.snapshots.len()),
    );

    let (_, rev) = reversal_roundtrip(&sys, &cfg0, &sched)?;
    r.check("time-reversal", rev < r.tol.reversal, rev, r.tol.reversal, "sup-norm distance after forward, flip, forward, flip");

    let det = step_jacobian_det(&sys, &cfg0, h, 1e-5)?;
    r.check(
        "volume-preservation",
        (det - 1.0).abs() < r.tol.jacobian,
        (det - 1.0).abs(),
        r.tol.jacobian,
        "finite-difference Jacobian determinant of one step",
    );

    let report = validate_assumptions(&r.model, &Probe::default())?;
    if let Some(c1) = report.c1 {
        let band = a_priori_matrix(&r.model, sys.geometry(), c1, report.onsite_shift)?;
        let e0 = cfg0.local_energies_ni(&sys);
        let et = traj.last.local_energies_ni(&sys);
        let b = band.bound_check(&e0, &et, traj.steps as f64 * h, r.tol.expm);
        r.check(
            "a-priori-bound",
            b.holds,
            b.max_ratio,
            1.0,
            format!("largest E_i(t)/bound_i, C1 = {c1:.4}, shift = {}", report.onsite_shift),
        );
    }
    Ok(())
}

fn conserve_energy(r: &mut Run) -> Result<()> {
    let a = r.params.scale.unwrap_or(8);
    let h = r.params.h.unwrap_or(5e-3);
    let n = r.params.n.unwrap_or(10_000);
    let grid = r.params.t_grid.clone().unwrap_or_else(|| vec![0.0, 0.5, 1.0, 2.0]);
    let sys = r.system(a)?;
    let spec = r.state_or(StateSpec::product_gaussian(1.0, 1.0));
    let t_max = *grid.last().expect("grid is non-empty");
    let sites = interior_sites(&sys, t_max);
    if sites.is_empty() {
        return Err(Error::Config(format!("box scale {a} has no interior sites for t = {t_max}")));
    }
    let e0 = |ens: &Ensemble| site_averages(ens, &sites, |c, s| sys.local_energy_full(&c.q, &c.p, s).expect("interior"));
    let mut ens = sample(&spec, &sys, n, r.seed)?;
    let base = e0(&ens)?;
    let mut t_now = 0.0;
    for &t in &grid {
        if t > t_now {
            let dt = t - t_now;
            let steps = (dt / h).round().max(1.0);
            ens = pushforward(&ens, &sys, &IntegratorSchedule::new(dt / steps, dt)?)?;
            t_now = t;
        }
        let v = e0(&ens)?;
        let e = estimate(&v, r.seed);
        r.point("E0", t, e.value, e.stderr);
        r.estimate(format!("E0/t={t}"), e);
        if t == 0.0 {
            continue;
        }
        let diff: Vec<f64> = v.iter().zip(&base).map(|(x, y)| x - y).collect();
        let d = estimate(&diff, r.seed);
        r.point("E0-minus-initial", t, d.value, d.stderr);
        let z = d.value.abs() / d.stderr.max(f64::MIN_POSITIVE);
        r.check(
            format!("E0-conserved/t={t}"),
            z <= r.tol.sigmas,
            z,
            r.tol.sigmas,
            format!("paired difference {:.3e} ± {:.1e} over {} interior sites", d.value, d.stderr, sites.len()),
        );
    }
    Ok(())
}

fn conserve_entropy(r: &mut Run) -> Result<()> {
    let t = r.params.t.unwrap_or(1.0);
    let h = r.params.h.unwrap_or(1e-2);
    let spec = r.state_or(StateSpec::product_gaussian(1.0, 1.0));
    let sched = IntegratorSchedule::new(h, t)?;
    let mut channels = 0;

    // exact channel: Gaussian covariance moved by the linear flow
    if r.model.is_quadratic() && !r.model.is_torus() {
        let sys = r.system(r.params.scale.unwrap_or(4))?;
        if let Some(cov) = spec.gaussian_covariance(&sys) {
            let s0 = gaussian_entropy(&cov)?;
            let st = gaussian_entropy(&covariance_transport(&sys, &cov, &sched)?)?;
            let rel = (st - s0).abs() / s0.abs().max(1.0);
            r.point("entropy-exact", 0.0, s0, 0.0);
            r.point("entropy-exact", t, st, 0.0);
            r.estimate("S_exact/t=0", Estimate::exact(s0));
            r.estimate(format!("S_exact/t={t}"), Estimate::exact(st));
            r.check("entropy-exact", rel <= r.tol.covariance_entropy, rel, r.tol.covariance_entropy, "relative change of the Gaussian entropy");
            channels += 1;
        }
    }

    // sampled channel on the smallest box
    let sys = r.system(1)?;
    let opts = knn_opts(r);
    let dim = 2 * sys.ndof();
    if dim <= opts.dim_cap {
        let n = r.params.n.unwrap_or(100_000);
        let all: Vec<usize> = (0..sys.n_sites()).collect();
        let ens0 = sample(&spec, &sys, n, r.seed)?;
        let enst = pushforward(&ens0, &sys, &sched)?;
        let s0 = entropy_knn(&ens0, &sys, &all, Coordinates::Phase, &opts)?;
        let st = entropy_knn(&enst, &sys, &all, Coordinates::Phase, &opts)?;
        r.point("entropy-knn", 0.0, s0.value, s0.stderr);
        r.point("entropy-knn", t, st.value, st.stderr);
        r.estimate("S_knn/t=0", Estimate { value: s0.value, stderr: s0.stderr, n: s0.n, seed: s0.seed });
        r.estimate(format!("S_knn/t={t}"), Estimate { value: st.value, stderr: st.stderr, n: st.n, seed: st.seed });
        let se = s0.stderr.hypot(st.stderr);
        let z = (st.value - s0.value).abs() / se.max(f64::MIN_POSITIVE);
        r.check(
            "entropy-knn",
            z <= r.tol.sigmas,
            z,
            r.tol.sigmas,
            format!("phase dimension {dim}, N = {n}, change {:.4} ± {:.4}", st.value - s0.value, se),
        );
        if let Ok(exact) = entropy_analytic(&spec, &sys) {
            let rel = (s0.value - exact.value).abs() / exact.value.abs().max(1.0);
            r.check("entropy-knn-accuracy", rel <= r.tol.knn_relative, rel, r.tol.knn_relative, format!("closed form {:.5}", exact.value));
        }
        channels += 1;
    }
    if channels == 0 {
        return Err(Error::Config(
            "no entropy channel applies: need a quadratic model with a Gaussian state or a small enough box".into(),
        ));
    }
    Ok(())
}

fn locality(r: &mut Run) -> Result<()> {
    let b = r.params.reference_scale.unwrap_or(16);
    let scales = r.params.scales.clone().unwrap_or_else(|| (2..=12).collect());
    let observer = r.params.observer.clone().unwrap_or_else(|| vec![0; r.model.nu()]);
    let h = r.params.h.unwrap_or(1e-2);
    let t = r.params.t.unwrap_or(1.0);
    let sys_b = r.system(b)?;
    let spec = r.state_or(StateSpec::product_gaussian(1.0, 1.0));
    let cfg_b = sample(&spec, &sys_b, 1, r.seed)?.samples.remove(0);
    let table = locality_experiment(&r.model, &cfg_b, b, &scales, &observer, &IntegratorSchedule::new(h, t)?)?;
    let mut csv = String::from("a,gamma,err,err_direct\n");
    for row in &table.rows {
        csv.push_str(&format!("{},{},{:e},{:e}\n", row.a, row.gamma, row.err, row.err_direct));
        r.point("log10-err", row.gamma as f64, row.err.log10(), 0.0);
    }
    r.artifact("locality.csv", csv)?;
    r.check("strictly-decreasing", table.strictly_decreasing_from(2), f64::NAN, f64::NAN, "err(γ) over γ >= 2");
    match (table.err_at(2), table.err_at(10)) {
        (Some(e2), Some(e10)) => {
            let ratio = e10 / e2;
            r.check("ratio-10-to-2", ratio < r.tol.locality_ratio, ratio, r.tol.locality_ratio, "err(10) / err(2)");
        }
        _ => r.check("ratio-10-to-2", false, f64::NAN, r.tol.locality_ratio, "scales do not cover γ = 2 and γ = 10"),
    }
    let ratios = table.ratios();
    r.check(
        "superexponential",
        table.superexponential(),
        ratios.last().map(|x| x.1).unwrap_or(f64::NAN),
        f64::NAN,
        "successive ratios shrink on average",
    );
    r.artifact_json("locality.json", &table)
}

fn bracket_detail(rep: &BracketReport) -> String {
    format!("mean {:.3e} ± {:.1e} over {} sites", rep.estimate.value, rep.estimate.stderr, rep.sites.len())
}

fn bracket(r: &mut Run) -> Result<()> {
    let a = r.params.scale.unwrap_or(4);
    let bs = r.params.block_scale.unwrap_or(2);
    let n = r.params.n.unwrap_or(20_000);
    if bs > a {
        return Err(Error::Config(format!("block scale {bs} exceeds the box scale {a}")));
    }
    let sys = r.system(a)?;
    let sites = interior_sites(&sys, 0.0);
    let record = |r: &mut Run, k: usize, name: &str, rep: &BracketReport| {
        r.estimate(format!("bracket/{name}"), rep.estimate);
        r.point("bracket-z", k as f64, rep.z, 0.0);
    };

    let spec = r.state_or(StateSpec::product_gaussian(1.0, 1.0));
    let ens = sample(&spec, &sys, n, r.seed)?;
    let rep = crate::thermo::bracket_mean_zero(&ens, &sys, &sites)?;
    record(r, 0, "invariant", &rep);
    r.check("bracket-zero/invariant", rep.is_zero(r.tol.sigmas), rep.z, r.tol.sigmas, bracket_detail(&rep));

    // a block with q-p correlations that vary inside it, made invariant by periodizing
    let block_sys = r.system(bs)?;
    let nb = block_sys.n_sites();
    let laws = (0..nb)
        .map(|i| SiteGaussian {
            q_var: 1.0,
            p_var: 1.0,
            qp_cov: 0.4 * i as f64 / (nb - 1).max(1) as f64 - 0.2,
        })
        .collect();
    let block = sample(&StateSpec::SiteVarying { sites: laws }, &block_sys, n, r.sub_seed(1))?;
    let per = periodize(&block, a, 2 * n, r.sub_seed(2))?;
    let rep = crate::thermo::bracket_mean_zero(&per, &sys, &sites)?;
    record(r, 1, "periodized", &rep);
    r.check("bracket-zero/periodized", rep.is_zero(r.tol.sigmas), rep.z, r.tol.sigmas, bracket_detail(&rep));

    // negative control: correlation curving across the box
    let ns = sys.n_sites();
    let laws = (0..ns)
        .map(|i| SiteGaussian {
            q_var: 1.0,
            p_var: 1.0,
            qp_cov: 0.9 * (i as f64 / (ns - 1).max(1) as f64).powi(2),
        })
        .collect();
    let ctrl = sample(&StateSpec::SiteVarying { sites: laws }, &sys, n, r.sub_seed(3))?;
    let rep = crate::thermo::bracket_mean_zero(&ctrl, &sys, &sites)?;
    record(r, 2, "negative-control", &rep);
    r.check(
        "bracket-nonzero/negative-control",
        rep.z > r.tol.negative_sigmas,
        rep.z,
        r.tol.negative_sigmas,
        bracket_detail(&rep),
    );
    Ok(())
}

fn pressure_exp(r: &mut Run) -> Result<()> {
    let betas = r.params.betas.clone().unwrap_or_else(|| vec![0.25, 0.5, 1.0, 2.0, 4.0]);
    let a = r.params.scale.unwrap_or(2);
    let samples = r.params.mc_samples.unwrap_or(200_000);
    let nodes = r.params.quadrature_nodes.unwrap_or(DEFAULT_NODES);
    let mc_method = PressureMethod::MonteCarlo { samples, seed: r.seed };
    let sd = r.model.site_dim() as f64;

    let mut mc = PressureCurve {
        model_hash: r.model.hash(),
        scale: a,
        method: mc_method,
        points: Vec::new(),
    };
    let mut min_ess = f64::INFINITY;
    let mut split_err: f64 = 0.0;
    for &b in &betas {
        let rep = pressure(&r.model, b, a, mc_method)?;
        let n = rep.sites as f64;
        let pt = PressurePoint {
            beta: b,
            p: rep.per_site,
            p_kin: rep.kinetic / n,
            p_pot: rep.potential.value / n,
            stderr: rep.per_site_stderr,
        };
        split_err = split_err
            .max((pt.p_kin - 0.5 * sd * ((std::f64::consts::TAU).ln() - b.ln())).abs())
            .max((pt.p - pt.p_kin - pt.p_pot).abs());
        min_ess = min_ess.min(rep.ess.unwrap_or(f64::INFINITY));
        r.point("p-mc", b, pt.p, pt.stderr);
        r.estimate(format!("p_mc/beta={b}"), Estimate { value: pt.p, stderr: pt.stderr, n: samples, seed: r.seed });
        mc.points.push(pt);
    }
    r.check("ess", min_ess >= r.tol.min_ess, min_ess, r.tol.min_ess, "smallest effective sample size on the grid");
    r.check("kinetic-split", split_err <= 1e-12, split_err, 1e-12, "p = p_kin + p_pot with p_kin in closed form");
    let m2 = mc.min_second_difference();
    if betas.len() >= 3 {
        r.check("convexity/mc", mc.is_convex(r.tol.convexity), m2, -r.tol.convexity, "smallest second divided difference");
    }

    if supports_transfer(r) {
        let q_method = PressureMethod::Quadrature1D { nodes };
        let mut q = PressureCurve {
            model_hash: r.model.hash(),
            scale: a,
            method: q_method,
            points: Vec::new(),
        };
        let mut worst: f64 = 0.0;
        for (k, &b) in betas.iter().enumerate() {
            let rep = pressure(&r.model, b, a, q_method)?;
            let n = rep.sites as f64;
            let pt = PressurePoint {
                beta: b,
                p: rep.per_site,
                p_kin: rep.kinetic / n,
                p_pot: rep.potential.value / n,
                stderr: 0.0,
            };
            worst = worst.max((mc.points[k].p - pt.p).abs() / pt.p.abs());
            r.point("p-quadrature", b, pt.p, 0.0);
            if let Some(lim) = rep.limit_per_site {
                r.point("p-infinite-chain", b, lim, 0.0);
                r.estimate(format!("p_infinite/beta={b}"), Estimate::exact(lim));
            }
            r.estimate(format!("p_quadrature/beta={b}"), Estimate::exact(pt.p));
            q.points.push(pt);
        }
        r.check(
            "mc-vs-quadrature",
            worst <= r.tol.pressure_relative,
            worst,
            r.tol.pressure_relative,
            format!("largest relative difference of the per-site pressure on Λ({a})"),
        );
        if betas.len() >= 3 {
            r.check(
                "convexity/quadrature",
                q.is_convex(r.tol.convexity),
                q.min_second_difference(),
                -r.tol.convexity,
                "smallest second divided difference",
            );
        }
        r.artifact("pressure.csv", q.to_csv())?;
        r.artifact("pressure_mc.csv", mc.to_csv())?;
    } else {
        r.artifact("pressure.csv", mc.to_csv())?;
    }
    Ok(())
}

fn equilibrium(r: &mut Run) -> Result<()> {
    let betas = r.params.betas.clone().unwrap_or_else(|| vec![r.params.beta.unwrap_or(1.0)]);
    let a = r.params.scale.unwrap_or(1);
    let opts = GibbsIdentityOptions {
        samples: r.params.n.unwrap_or(100_000),
        pressure_samples: r.params.mc_samples.unwrap_or(400_000),
        seed: r.seed,
        knn: knn_opts(r),
    };
    let mcmc = r.params.mcmc.clone().unwrap_or_default();
    for &b in &betas {
        let gi = gibbs_identity_check(&r.model, b, a, &opts, &mcmc)?;
        let pass = if gi.stderr == 0.0 {
            gi.holds
        } else {
            gi.residual.abs() <= r.tol.sigmas * gi.stderr
        };
        r.point("gibbs-residual", b, gi.residual, gi.stderr);
        r.estimate(format!("S/beta={b}"), estimate_of(&gi.entropy));
        r.estimate(format!("H/beta={b}"), estimate_of(&gi.mean_h));
        r.estimate(format!("P/beta={b}"), estimate_of(&gi.pressure));
        r.check(
            format!("gibbs-identity/beta={b}"),
            pass,
            gi.residual,
            if gi.stderr == 0.0 { 1e-9 } else { r.tol.sigmas * gi.stderr },
            format!("S − β⟨H⟩ − P on Λ({a}), S by {:?}", gi.entropy.method),
        );
    }

    // the energy −p'(β) of the infinite chain must lead back to β
    if supports_transfer(r) {
        let pf = chain_pressure_fn(r);
        let p = |b: f64| pf(b).unwrap_or(f64::NAN);
        for &b in &betas {
            let dh = 1e-4 * b;
            let e = -(p(b + dh) - p(b - dh)) / (2.0 * dh);
            let back = match compatible_beta_fn(p, e, b / 20.0, b * 20.0) {
                Compatibility::Beta { beta } => beta,
                _ => f64::NAN,
            };
            let rel = (back - b).abs() / b;
            r.check(format!("compatible-beta/beta={b}"), rel < 1e-4, rel, 1e-4, format!("energy per site {e:.6}"));
        }
    }
    Ok(())
}

fn estimate_of(t: &crate::thermo::ThermoReport) -> Estimate {
    Estimate {
        value: t.value,
        stderr: t.stderr,
        n: t.n,
        seed: t.seed,
    }
}

/// Specific entropy of a product state from its one-site entropy.
fn product_entropy_per_site(r: &Run, spec: &StateSpec) -> Result<f64> {
    let sys = r.system(1)?;
    Ok(entropy_analytic(spec, &sys)?.value / sys.n_sites() as f64)
}

fn variational(r: &mut Run) -> Result<()> {
    if !supports_transfer(r) {
        return Err(Error::Config(
            "variational experiment needs a scalar chain with nearest-neighbour pair terms (or none)".into(),
        ));
    }
    let betas = r.params.betas.clone().unwrap_or_else(|| vec![0.5, 1.0, 2.0]);
    let n = r.params.n.unwrap_or(50_000);
    let mut curve = PressureCurve {
        model_hash: r.model.hash(),
        scale: 0,
        method: PressureMethod::Quadrature1D {
            nodes: r.params.quadrature_nodes.unwrap_or(DEFAULT_NODES),
        },
        points: Vec::new(),
    };
    for &b in &betas {
        let p = infinite_chain_pressure(r, b)?;
        r.point("p-infinite-chain", b, p, 0.0);
        curve.points.push(PressurePoint {
            beta: b,
            p,
            p_kin: kinetic_pressure(1, b),
            p_pot: p - kinetic_pressure(1, b),
            stderr: 0.0,
        });
    }
    r.artifact("pressure.csv", curve.to_csv())?;

    let sys = r.system(3)?;
    let o = origin(&sys);
    let states = r.params.states.clone().unwrap_or_else(|| {
        vec![
            StateSpec::product_gaussian(0.3, 1.0),
            StateSpec::product_gaussian(1.0, 1.0),
            StateSpec::product_gaussian(2.0, 0.5),
            StateSpec::ProductCustom {
                q_density: SiteDensity::OnsiteBoltzmann { beta: 1.0 },
                p_var: 1.0,
            },
        ]
    });
    for (k, spec) in states.iter().enumerate() {
        if !spec.is_product() {
            return Err(Error::Config(format!("state {k} is not a product state")));
        }
        let s = product_entropy_per_site(r, spec)?;
        let ens = sample(spec, &sys, n, r.sub_seed(k as u64))?;
        let e = energy_mean(&ens, &sys, EnergyFunctional::Full, &[o])?;
        let st = StateThermo {
            s,
            s_err: 0.0,
            e0: e.value,
            e0_err: e.stderr,
        };
        r.estimate(format!("state{k}/E0"), estimate_of(&e));
        r.estimate(format!("state{k}/s"), Estimate::exact(s));
        for &b in &betas {
            let g = variational_gap(&st, &curve, b)?;
            r.point(&format!("gap/state{k}"), b, g.gap, g.stderr);
            r.check(
                format!("gap-nonnegative/state{k}/beta={b}"),
                g.gap >= -r.tol.sigmas * g.stderr - 1e-9,
                g.gap,
                -r.tol.sigmas * g.stderr,
                format!("p + β⟨E_0⟩ − s for {spec:?}"),
            );
        }
    }

    // states at which the inequality is an equality
    let symbol = chain_symbol(&r.model);
    for (k, &b) in betas.iter().enumerate() {
        let matched = if r.model.terms().is_empty() {
            let spec = StateSpec::ProductCustom {
                q_density: SiteDensity::OnsiteBoltzmann { beta: b },
                p_var: 1.0 / b,
            };
            let s = product_entropy_per_site(r, &spec)?;
            let ens = sample(&spec, &sys, n, r.sub_seed(100 + k as u64))?;
            let e = energy_mean(&ens, &sys, EnergyFunctional::Full, &[o])?;
            Some((
                StateThermo {
                    s,
                    s_err: 0.0,
                    e0: e.value,
                    e0_err: e.stderr,
                },
                "product of one-site Gibbs laws",
            ))
        } else if let Ok(h) = &symbol {
            // infinite-chain Gibbs state: s from conditional entropies, ⟨E_0⟩ from correlations
            let m = 32;
            let c_big = stationary_chain_covariance(&r.model, b, m + 1)?;
            let c_small = stationary_chain_covariance(&r.model, b, m)?;
            let s = gaussian_entropy(&c_big)? - gaussian_entropy(&c_small)?;
            let corr = |d: usize| c_big[(0, d)];
            let pot = 0.5 * (h[0] * corr(0) + 2.0 * h.iter().enumerate().skip(1).map(|(d, v)| v * corr(d)).sum::<f64>());
            Some((
                StateThermo {
                    s,
                    s_err: 0.0,
                    e0: 0.5 / b + pot,
                    e0_err: 0.0,
                },
                "infinite-chain Gibbs state",
            ))
        } else {
            None
        };
        if let Some((st, what)) = matched {
            let g = variational_gap(&st, &curve, b)?;
            let bound = r.tol.sigmas * g.stderr + 1e-6;
            r.point("gap/matched", b, g.gap, g.stderr);
            r.check(format!("gap-zero/beta={b}"), g.gap.abs() <= bound, g.gap, bound, what);
        }
    }
    Ok(())
}

fn des_diagnostic(r: &mut Run) -> Result<()> {
    let a = r.params.scale.unwrap_or(8);
    let n = r.params.n.unwrap_or(10_000);
    let h = r.params.h.unwrap_or(1e-2);
    let n_times = r.params.n_times.unwrap_or(16);
    let grid = r.params.time_average_grid.clone().unwrap_or_else(|| vec![1.0, 2.0, 4.0]);
    let sys = r.system(a)?;
    let spec = r.state_or(StateSpec::product_gaussian(1.0, 1.0));
    let t_max = *grid.last().expect("grid is non-empty");
    let sites = interior_sites(&sys, t_max);
    if sites.is_empty() {
        return Err(Error::Config(format!("box scale {a} has no interior sites for T = {t_max}")));
    }
    let e0 = |ens: &Ensemble| site_averages(ens, &sites, |c, s| sys.local_energy_full(&c.q, &c.p, s).expect("interior"));
    let ens = sample(&spec, &sys, n, r.seed)?;
    let base = e0(&ens)?;
    let e_init = estimate(&base, r.seed);
    r.estimate("E0/initial", e_init);
    let panel = standard_panel();
    let gibbs = matches!(spec, StateSpec::GibbsFiniteVolume { .. });

    // entropy window bounds, available for product states on transfer-integral chains
    let window = if spec.is_product() && supports_transfer(r) {
        let s_mu = product_entropy_per_site(r, &spec)?;
        let pf = chain_pressure_fn(r);
        let p = |b: f64| pf(b).unwrap_or(f64::NAN);
        match compatible_beta_fn(p, e_init.value, 1e-2, 1e2) {
            Compatibility::Beta { beta } => Some((s_mu, beta * e_init.value + p(beta), beta)),
            _ => None,
        }
    } else {
        None
    };
    let opts = KnnOptions {
        min_samples: n.min(KnnOptions::default().min_samples),
        ..knn_opts(r)
    };
    // two adjacent interior sites, the smallest window that sees the coupling
    let pair: Vec<usize> = {
        let first = sites[0];
        let next = sites.iter().copied().find(|&s| s != first && {
            let d = crate::model::sub(sys.geometry().site(s), sys.geometry().site(first));
            crate::model::linf_norm(&d) == 1
        });
        match next {
            Some(s) => vec![first, s],
            None => vec![first],
        }
    };

    let mut prev: Option<Ensemble> = None;
    for (k, &t) in grid.iter().enumerate() {
        let avg = time_average(&ens, &sys, t, n_times, h, r.sub_seed(k as u64 + 1))?;
        let v = e0(&avg)?;
        let diff: Vec<f64> = v.iter().zip(&base).map(|(x, y)| x - y).collect();
        let d = estimate(&diff, r.seed);
        let z = d.value.abs() / d.stderr.max(f64::MIN_POSITIVE);
        r.point("E0-minus-initial", t, d.value, d.stderr);
        r.estimate(format!("E0/T={t}"), estimate(&v, r.seed));
        r.check(format!("E0-flat/T={t}"), z <= r.tol.sigmas, z, r.tol.sigmas, "paired difference to the initial state");

        let dist = observable_distance(&avg, &ens, &sys, &panel, &sites)?;
        r.point("panel-distance-to-initial", t, dist.distance, 0.0);
        if gibbs {
            r.check(
                format!("gibbs-noise-floor/T={t}"),
                dist.max_z <= r.tol.noise_floor_z,
                dist.max_z,
                r.tol.noise_floor_z,
                "time average of a Gibbs state stays within sampling noise",
            );
        }
        if let Some(p) = &prev {
            let c = observable_distance(&avg, p, &sys, &panel, &sites)?;
            r.point("panel-distance-to-previous", t, c.distance, 0.0);
        }

        if let Some((lo, hi, beta)) = window {
            let s = entropy_knn(&avg, &sys, &pair, Coordinates::Phase, &opts)?;
            let per = s.value / pair.len() as f64;
            let se = s.stderr / pair.len() as f64;
            r.point("entropy-window-estimate", t, per, se);
            let slack = r.tol.sigmas * se + r.tol.entropy_window;
            let inside = per >= lo - slack && per <= hi + slack;
            r.check(
                format!("entropy-window/T={t}"),
                inside,
                per,
                hi + slack,
                format!("window [{lo:.4}, {hi:.4}] at compatible β = {beta:.4}, {}-site marginal", pair.len()),
            );
        }
        prev = Some(avg);
    }
    Ok(())
}

fn periodize_exp(r: &mut Run) -> Result<()> {
    let bs = r.params.block_scale.unwrap_or(2);
    let m = r.params.window_scale.unwrap_or(4);
    let n = r.params.n.unwrap_or(4_000);
    let n_out = r.params.mc_samples.unwrap_or(10_000);
    if m < bs {
        return Err(Error::Config(format!("window scale {m} is below the block scale {bs}")));
    }
    let block_sys = r.system(bs)?;
    let spec = match r.params.state.clone() {
        Some(s) => s,
        None => {
            let vars = [0.2, 1.0, 3.0, 0.5];
            StateSpec::SiteVarying {
                sites: (0..block_sys.n_sites())
                    .map(|i| SiteGaussian::new(vars[i % vars.len()], 1.0))
                    .collect(),
            }
        }
    };
    spec.check(&block_sys)?;

    if let Some(cov) = spec.gaussian_covariance(&block_sys) {
        let (rate, spread) = periodized_entropy_rate(&cov, r.model.nu(), bs, r.model.site_dim())?;
        let target = gaussian_entropy(&cov)? / block_sys.n_sites() as f64;
        let err = (rate - target).abs();
        r.estimate("entropy-rate", Estimate::exact(rate));
        r.estimate("block-entropy-per-site", Estimate::exact(target));
        r.check("entropy-rate", err <= r.tol.periodization, err, r.tol.periodization, "rate of the periodized state against S_block / #Λ");
        r.check("entropy-rate-shift-spread", spread <= r.tol.periodization, spread, r.tol.periodization, "spread over block shifts");
    }

    let block = sample(&spec, &block_sys, n, r.seed)?;
    let out = periodize(&block, m, n_out, r.sub_seed(1))?;
    let sd = r.model.site_dim();
    let n_sites = out.geometry().len();
    let (i, j) = (0, n_sites / 2 + 1);
    let x: Vec<f64> = out.samples.iter().map(|s| s.q[i * sd]).collect();
    let y: Vec<f64> = out.samples.iter().map(|s| s.q[j.min(n_sites - 1) * sd]).collect();
    let d = ks_statistic(&x, &y);
    let crit = ks_critical(r.tol.ks_alpha, x.len(), y.len());
    r.check(
        "marginal-invariance",
        d < crit,
        d,
        crit,
        format!("two-sample KS between window sites {i} and {} at α = {}", j.min(n_sites - 1), r.tol.ks_alpha),
    );

    ensembles::io::save(r.out.join("periodized.bin"), &out)?;
    r.register("periodized.bin");
    if out.len() * n_sites <= 2_000_000 {
        let csv = ensembles::io::to_csv(&out);
        r.artifact("periodized.csv", csv)?;
    }
    Ok(())
}
