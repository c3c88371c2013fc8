use std::path::PathBuf;
use std::process::ExitCode;

use anharmonic::lab::{self, Experiment, LoadedConfig, RunOptions};
use anharmonic::Error;
use clap::Parser;

/// Run one experiment from a JSON config.
///
/// Exit status: 0 when every check passes, 1 when a check fails or the run
/// aborts, 2 on usage or config errors.
#[derive(Debug, Parser)]
#[command(name = "lab", version)]
struct Cli {
    experiment: Experiment,
    #[arg(long)]
    config: PathBuf,
    /// Overrides the seed in the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (default `runs/<experiment>-seed<S>`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; results do not depend on this.
    #[arg(long)]
    threads: Option<usize>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(k) = cli.threads {
        if k == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(k).build_global() {
            eprintln!("error: cannot start {k} threads: {e}");
            return ExitCode::from(2);
        }
    }
    let result = LoadedConfig::load(&cli.config).and_then(|cfg| {
        lab::run(
            cli.experiment,
            &cfg,
            &RunOptions {
                seed: cli.seed,
                out: cli.out.clone(),
            },
        )
    });
    match &result {
        Ok(m) => {
            for c in &m.checks {
                let measured = c.measured.map(|x| format!("{x:.4e}")).unwrap_or_else(|| "-".into());
                let threshold = c.threshold.map(|x| format!("{x:.4e}")).unwrap_or_else(|| "-".into());
                println!(
                    "{} {:<44} measured {measured:>12} threshold {threshold:>12}",
                    if c.pass { "PASS" } else { "FAIL" },
                    c.name
                );
            }
            println!(
                "{}: {} of {} checks passed",
                m.experiment,
                m.checks.iter().filter(|c| c.pass).count(),
                m.checks.len()
            );
        }
        Err(Error::Config(msg)) => eprintln!("config error: {msg}"),
        Err(e) => eprintln!("{} failed: {e}", cli.experiment),
    }
    ExitCode::from(lab::exit_code(&result) as u8)
}
