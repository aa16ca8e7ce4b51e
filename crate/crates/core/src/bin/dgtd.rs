//! Command-line experiment runner for distributed GTD policy evaluation.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use dgtd::harness::{
    load_spec, oracle_verification, resolve_scenario, run_experiment, sample_complexity_table,
    ExperimentSpec, ReportSection, RunSection, ScenarioSpec, VerificationOutcome, OUT_DIR_ENV,
};

#[derive(Parser)]
#[command(
    name = "dgtd",
    about = "Distributed gradient temporal-difference policy evaluation simulator",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a multi-seed experiment from a spec file and/or a named preset.
    Run {
        /// Experiment spec (TOML). Optional when --preset is given.
        spec: Option<PathBuf>,
        /// Output directory (default: $DGTD_OUT_DIR or ./out).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override the seed list, e.g. --seeds 1,2,3.
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        /// Override the iteration count T.
        #[arg(long)]
        iterations: Option<usize>,
        /// Use a named preset scenario (chain4, gridworld, single-agent,
        /// toy2x2), overriding the scenario in the spec file.
        #[arg(long)]
        preset: Option<String>,
    },
    /// Run the oracle verification suite on a scenario (no stochastic runs).
    Verify {
        /// Experiment spec (TOML). Optional when --preset is given.
        spec: Option<PathBuf>,
        #[arg(long)]
        preset: Option<String>,
    },
    /// Evaluate the finite-time sample-complexity formulas.
    Complexity {
        #[arg(long)]
        epsilon: f64,
        #[arg(long)]
        delta: f64,
        #[arg(long)]
        alpha0: f64,
        /// The gradient bound C.
        #[arg(long)]
        c: f64,
        /// Also report the consensus-penalty requirement for this kappa.
        #[arg(long)]
        kappa: Option<f64>,
    },
}

fn load_or_synthesize(
    spec: Option<PathBuf>,
    preset: Option<String>,
) -> Result<(ExperimentSpec, PathBuf), dgtd::Error> {
    match (spec, preset) {
        (Some(path), preset) => {
            let mut spec = load_spec(&path)?;
            if let Some(name) = preset {
                spec.scenario = ScenarioSpec::from_preset(&name);
            }
            let base = path
                .parent()
                .map(|p| p.to_path_buf())
                .unwrap_or_else(|| PathBuf::from("."));
            Ok((spec, base))
        }
        (None, Some(name)) => Ok((
            ExperimentSpec {
                scenario: ScenarioSpec::from_preset(&name),
                run: RunSection::default(),
                seeds: vec![0],
                report: ReportSection::default(),
                thresholds: None,
            },
            PathBuf::from("."),
        )),
        (None, None) => Err(dgtd::Error::Config(
            "give a spec file, a --preset name, or both".into(),
        )),
    }
}

fn main() -> ExitCode {
    // Die quietly when stdout is closed early (e.g. piped into `head`).
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
    match run_cli(Cli::parse()) {
        Ok(ok) => {
            if ok {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn run_cli(cli: Cli) -> Result<bool, dgtd::Error> {
    match cli.command {
        Command::Run {
            spec,
            out,
            seeds,
            iterations,
            preset,
        } => {
            let (mut spec, base) = load_or_synthesize(spec, preset)?;
            if let Some(seeds) = seeds {
                spec.seeds = seeds;
            }
            if let Some(t) = iterations {
                spec.run.iterations = Some(t);
            }
            let out_dir = out
                .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
                .unwrap_or_else(|| PathBuf::from("out"));
            let summary = run_experiment(&spec, &base, &out_dir)?;
            println!(
                "ran {} seed(s) x {} iterations ({} agents, q = {})",
                summary.per_seed.len(),
                summary.iterations,
                summary.num_agents,
                summary.feature_dim
            );
            println!(
                "median consensus penalty {:.6e}, median gap proxy {:.6e}",
                summary.median_consensus_penalty, summary.median_gap_proxy
            );
            for outcome in &summary.per_seed {
                println!(
                    "seed {}: consensus {:.4e}, w error {:.4e}, empirical C {:.4e}",
                    outcome.seed,
                    outcome.max_pairwise_w,
                    outcome.w_block_error,
                    outcome.empirical_c
                );
            }
            if let Some(c) = &summary.complexity {
                println!(
                    "complexity(eps = {}, delta = {}): omega1 = {:.4e}, omega2 = {:.4e}, T >= {:.4e}",
                    c.epsilon, c.delta, c.omega1, c.omega2, c.t_required
                );
            }
            if let Some(t) = &summary.thresholds {
                println!(
                    "thresholds: {}",
                    if t.passed { "PASS" } else { "FAIL" }
                );
            }
            println!("artifacts written to {}", out_dir.display());
            Ok(summary.passed())
        }
        Command::Verify { spec, preset } => {
            let (spec, base) = load_or_synthesize(spec, preset)?;
            let resolved = resolve_scenario(&spec, &base)?;
            let lines = oracle_verification(&resolved)?;
            let mut ok = true;
            for line in &lines {
                let tag = match line.outcome {
                    VerificationOutcome::Pass => "PASS",
                    VerificationOutcome::Fail => {
                        ok = false;
                        "FAIL"
                    }
                    VerificationOutcome::Skipped => "SKIP",
                };
                println!("[{tag}] {}: {}", line.name, line.detail);
            }
            Ok(ok)
        }
        Command::Complexity {
            epsilon,
            delta,
            alpha0,
            c,
            kappa,
        } => {
            let table = sample_complexity_table(epsilon, delta, alpha0, c, kappa)?;
            println!("{table}");
            Ok(true)
        }
    }
}
