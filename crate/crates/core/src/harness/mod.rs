//! CLI experiment harness: scenario presets, the TOML spec document,
//! multi-seed orchestration, metric/complexity reporting, and CSV/JSON
//! export.

mod config;
mod export;
mod presets;

pub use config::{
    load_spec, parse_graph_file, parse_spec, resolve_scenario, spec_to_toml, ComplexityRequest,
    ExperimentSpec, FeaturesSpec, GraphSpec, ModelSpec, ReportSection, ResolvedScenario,
    RunSection, ScenarioSpec, ThresholdSection,
};
pub use export::{export_trace, export_value_heatmap, parse_trace_csv};
pub use presets::{preset, PresetDefaults, GRID_SIDE, PRESET_NAMES};

use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use crate::engine::{run, OutputSelect, RewardNoise, RunConfig, RunTrace};
use crate::error::{Error, Result};
use crate::mdp::exact_global_solution;
use crate::oracle::{brute_force_kkt, deterministic_primal_dual, finite_difference_gradient};
use crate::saddle::{
    exact_gradients, kkt_mu_residual, kkt_point, lagrangian_value, sample_complexity,
    solution_bounds, SaddleProblem, StackedIterate,
};

/// Environment variable holding the default output directory for `run`.
pub const OUT_DIR_ENV: &str = "DGTD_OUT_DIR";

/// Per-seed outcome written into the summary document.
#[derive(Debug, Clone, Serialize)]
pub struct SeedOutcome {
    pub seed: u64,
    /// Consensus penalty w-hatT Lbar w-hat of the averaged iterate.
    pub consensus_penalty: f64,
    /// |theta-hat - theta*|^2 + |v-hat|^2.
    pub theta_v_error: f64,
    /// Max pairwise infinity distance between averaged w blocks.
    pub max_pairwise_w: f64,
    /// Max over agents of |w-hat_i - w*|_inf.
    pub w_block_error: f64,
    /// Gap proxy L(x-hat, w*) - L(x*, w-hat) at the final iteration.
    pub gap_proxy: f64,
    /// Max observed stochastic gradient norm.
    pub empirical_c: f64,
    /// Averaged consensus penalty at T undercuts its value at T/10.
    pub penalty_decreased: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct ComplexityReport {
    pub epsilon: f64,
    pub delta: f64,
    pub alpha0: f64,
    /// Median empirical C across seeds.
    pub c: f64,
    pub omega1: f64,
    pub omega2: f64,
    pub t_required: f64,
    pub consensus_t_required: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ThresholdReport {
    pub consensus_pass_fraction: Option<f64>,
    pub solution_pass_fraction: Option<f64>,
    pub penalty_decreased_all: bool,
    pub passed: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentSummary {
    pub preset: Option<String>,
    pub iterations: usize,
    pub num_agents: usize,
    pub feature_dim: usize,
    pub w_star: Vec<f64>,
    pub w_star_inf: f64,
    pub per_seed: Vec<SeedOutcome>,
    pub median_consensus_penalty: f64,
    pub median_gap_proxy: f64,
    pub complexity: Option<ComplexityReport>,
    pub thresholds: Option<ThresholdReport>,
}

impl ExperimentSummary {
    pub fn passed(&self) -> bool {
        self.thresholds.as_ref().is_none_or(|t| t.passed)
    }
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(|a, b| a.total_cmp(b));
    let n = xs.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

/// Builds the per-seed run configuration from a resolved scenario.
pub fn run_config_for_seed(resolved: &ResolvedScenario, spec: &ExperimentSpec, seed: u64) -> RunConfig {
    RunConfig {
        total_iterations: resolved.defaults.iterations,
        kappa: resolved.defaults.kappa,
        rho: resolved.defaults.rho,
        schedule: resolved.defaults.schedule,
        seed,
        reward_noise: spec.run.reward_noise.unwrap_or(RewardNoise::None),
        output: spec.run.output.unwrap_or(OutputSelect::Both),
        independent_chains: spec.run.independent_chains.unwrap_or(false),
        stride: spec.run.stride,
    }
}

fn seed_outcome(
    problem: &SaddleProblem,
    star: &StackedIterate,
    rewards: &nalgebra::DVector<f64>,
    w_star: &nalgebra::DVector<f64>,
    trace: &RunTrace,
) -> Result<SeedOutcome> {
    let q = problem.feature_dim();
    let avg = &trace.averaged;
    let consensus_penalty = problem.mean_block().quadratic_form(&avg.w);
    let theta_v_error = (&avg.theta - &star.theta).norm_squared() + avg.v.norm_squared();
    let max_pairwise_w = avg.max_pairwise_w_distance(q);
    let w_block_error = (0..problem.num_agents())
        .map(|i| (avg.w_block(i, q) - w_star).amax())
        .fold(0.0f64, f64::max);

    let x_at_w_star = StackedIterate {
        theta: avg.theta.clone(),
        v: avg.v.clone(),
        mu: avg.mu.clone(),
        w: star.w.clone(),
    };
    let star_at_w = StackedIterate {
        theta: star.theta.clone(),
        v: star.v.clone(),
        mu: star.mu.clone(),
        w: avg.w.clone(),
    };
    let gap_proxy = lagrangian_value(problem, &x_at_w_star, rewards)?
        - lagrangian_value(problem, &star_at_w, rewards)?;

    let t = trace.iterations;
    let early = trace
        .record_at_or_before(t / 10)
        .map(|r| r.avg_consensus_penalty)
        .unwrap_or(f64::INFINITY);
    let late = trace
        .records
        .last()
        .map(|r| r.avg_consensus_penalty)
        .unwrap_or(f64::INFINITY);
    Ok(SeedOutcome {
        seed: trace.seed,
        consensus_penalty,
        theta_v_error,
        max_pairwise_w,
        w_block_error,
        gap_proxy,
        empirical_c: trace.empirical_c,
        penalty_decreased: late < early,
    })
}

/// Runs every seed of the experiment (in parallel), writes the requested
/// artifacts under `out_dir`, and returns the aggregate summary. Exit-code
/// policy: callers should fail iff `summary.passed()` is false or an error
/// is returned.
pub fn run_experiment(spec: &ExperimentSpec, base_dir: &Path, out_dir: &Path) -> Result<ExperimentSummary> {
    let resolved = resolve_scenario(spec, base_dir)?;
    let problem = SaddleProblem::assemble(
        &resolved.model,
        &resolved.features,
        &resolved.graph,
        resolved.defaults.kappa,
        resolved.defaults.rho,
        resolved.box_safety,
    )?;
    let star = kkt_point(&problem, &resolved.model)?;
    let rewards = resolved.model.stacked_rewards();
    let w_star = exact_global_solution(problem.mats(), &resolved.model)?;

    std::fs::create_dir_all(out_dir)?;
    // Echo the resolved spec for reproducibility.
    std::fs::write(out_dir.join("spec.toml"), spec_to_toml(spec)?)?;

    let traces: Vec<Result<RunTrace>> = spec
        .seeds
        .par_iter()
        .map(|&seed| {
            let cfg = run_config_for_seed(&resolved, spec, seed);
            run(
                &problem,
                &resolved.model,
                &resolved.features,
                &resolved.graph,
                &cfg,
            )
        })
        .collect();

    let mut per_seed = Vec::with_capacity(spec.seeds.len());
    for traced in traces {
        let trace = traced?;
        if spec.report.trace_csv {
            let path = out_dir.join(format!("trace_seed{}.csv", trace.seed));
            export_trace(&trace, resolved.model.num_agents(), &path)?;
        }
        if let Some((rows, cols)) = resolved.defaults.heatmap {
            let q = problem.feature_dim();
            for i in 0..resolved.model.num_agents() {
                let path = out_dir.join(format!("heatmap_agent{}_seed{}.csv", i + 1, trace.seed));
                export_value_heatmap(
                    &resolved.features,
                    &trace.averaged.w_block(i, q),
                    rows,
                    cols,
                    &path,
                )?;
            }
        }
        per_seed.push(seed_outcome(&problem, &star, &rewards, &w_star, &trace)?);
    }

    let complexity = match &spec.report.complexity {
        Some(req) => {
            let alpha0 = req.alpha0.unwrap_or(resolved.defaults.schedule.alpha0);
            let c = median(per_seed.iter().map(|o| o.empirical_c).collect());
            let sc = sample_complexity(req.epsilon, req.delta, alpha0, c)?;
            let consensus = problem
                .consensus_complexity(req.epsilon, req.delta, alpha0, c)
                .ok()
                .map(|s| s.t_required);
            Some(ComplexityReport {
                epsilon: req.epsilon,
                delta: req.delta,
                alpha0,
                c,
                omega1: sc.omega1,
                omega2: sc.omega2,
                t_required: sc.t_required,
                consensus_t_required: consensus,
            })
        }
        None => None,
    };

    let w_star_inf = w_star.amax();
    let thresholds = spec.thresholds.as_ref().map(|t| {
        let scale = 1.0 + w_star_inf;
        let frac = |pass: &dyn Fn(&SeedOutcome) -> bool| {
            per_seed.iter().filter(|o| pass(o)).count() as f64 / per_seed.len() as f64
        };
        let consensus_pass_fraction = t
            .consensus_rel
            .map(|c| frac(&|o: &SeedOutcome| o.max_pairwise_w <= c * scale));
        let solution_pass_fraction = t
            .solution_rel
            .map(|c| frac(&|o: &SeedOutcome| o.w_block_error <= c * scale));
        let penalty_decreased_all = per_seed.iter().all(|o| o.penalty_decreased);
        let mut passed = true;
        if let Some(f) = consensus_pass_fraction {
            passed &= f >= t.min_pass_fraction;
        }
        if let Some(f) = solution_pass_fraction {
            passed &= f >= t.min_pass_fraction;
        }
        if t.require_penalty_decrease {
            passed &= penalty_decreased_all;
        }
        ThresholdReport {
            consensus_pass_fraction,
            solution_pass_fraction,
            penalty_decreased_all,
            passed,
        }
    });

    let median_consensus_penalty = median(per_seed.iter().map(|o| o.consensus_penalty).collect());
    let median_gap_proxy = median(per_seed.iter().map(|o| o.gap_proxy).collect());
    let summary = ExperimentSummary {
        preset: resolved.preset_name.clone(),
        iterations: resolved.defaults.iterations,
        num_agents: resolved.model.num_agents(),
        feature_dim: problem.feature_dim(),
        w_star: w_star.iter().copied().collect(),
        w_star_inf,
        per_seed,
        median_consensus_penalty,
        median_gap_proxy,
        complexity,
        thresholds,
    };

    if spec.report.summary_json {
        let json = serde_json::to_string_pretty(&summary)
            .map_err(|e| Error::Config(format!("summary serialization failed: {e}")))?;
        std::fs::write(out_dir.join("summary.json"), json)?;
    }
    Ok(summary)
}

/// Renders the sample-complexity formulas as a JSON document, optionally
/// with the consensus-penalty rescaling for a given kappa.
pub fn sample_complexity_table(
    epsilon: f64,
    delta: f64,
    alpha0: f64,
    c: f64,
    kappa: Option<f64>,
) -> Result<String> {
    let base = sample_complexity(epsilon, delta, alpha0, c)?;
    let consensus = match kappa {
        Some(k) => {
            if !(k > 0.0) {
                return Err(Error::DomainError(format!("kappa = {k} must be > 0")));
            }
            Some(sample_complexity(0.5 * k * epsilon, delta, alpha0, c)?)
        }
        None => None,
    };
    let mut doc = serde_json::json!({
        "epsilon": epsilon,
        "delta": delta,
        "alpha0": alpha0,
        "c": c,
        "omega1": base.omega1,
        "omega2": base.omega2,
        "t_required": base.t_required,
    });
    if let Some(cons) = consensus {
        doc["consensus_t_required"] = serde_json::json!(cons.t_required);
    }
    serde_json::to_string_pretty(&doc).map_err(|e| Error::Config(e.to_string()))
}

/// One line of the `verify` oracle suite.
#[derive(Debug, Clone)]
pub struct VerificationLine {
    pub name: String,
    pub outcome: VerificationOutcome,
    pub detail: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VerificationOutcome {
    Pass,
    Fail,
    Skipped,
}

/// Runs the oracle verification suite on a resolved scenario: closed-form /
/// brute-force / deterministic-oracle agreement on w*, the KKT gradient
/// certificate, the solution-bound audit, and a finite-difference gradient
/// spot check. Dense oracles are skipped above desk scale.
pub fn oracle_verification(resolved: &ResolvedScenario) -> Result<Vec<VerificationLine>> {
    let problem = SaddleProblem::assemble(
        &resolved.model,
        &resolved.features,
        &resolved.graph,
        resolved.defaults.kappa,
        resolved.defaults.rho,
        resolved.box_safety,
    )?;
    let model = &resolved.model;
    let rewards = model.stacked_rewards();
    let q = problem.feature_dim();
    let m = problem.stacked_len();
    let mut lines = Vec::new();
    let mut push = |name: &str, outcome: VerificationOutcome, detail: String| {
        lines.push(VerificationLine {
            name: name.to_string(),
            outcome,
            detail,
        });
    };

    let w_formula = exact_global_solution(problem.mats(), model)?;

    // KKT certificate.
    let star = kkt_point(&problem, model)?;
    let grads = exact_gradients(&problem, &star, &rewards)?;
    let worst = grads
        .theta
        .amax()
        .max(grads.v.amax())
        .max(grads.mu.amax())
        .max(grads.w.amax());
    let mu_res = kkt_mu_residual(&problem, &star)?;
    let kkt_ok = worst <= 1e-8 && star.v.amax() == 0.0 && mu_res <= 1e-8;
    push(
        "kkt-certificate",
        if kkt_ok {
            VerificationOutcome::Pass
        } else {
            VerificationOutcome::Fail
        },
        format!("max gradient {worst:.3e}, mu residual {mu_res:.3e}"),
    );

    // Solution-bound audit.
    let bounds = solution_bounds(&problem, model)?;
    let bounds_ok = star.theta.amax() <= bounds.theta
        && star.v.amax() <= bounds.v
        && star.mu.amax() <= bounds.mu
        && star.w.amax() <= bounds.w
        && problem.boxes().audit(&star);
    push(
        "solution-bounds",
        if bounds_ok {
            VerificationOutcome::Pass
        } else {
            VerificationOutcome::Fail
        },
        format!(
            "theta {:.3e}<={:.3e}, w {:.3e}<={:.3e}",
            star.theta.amax(),
            bounds.theta,
            star.w.amax(),
            bounds.w
        ),
    );

    // Brute-force KKT agreement (desk scale only).
    if m <= 64 {
        let brute = brute_force_kkt(&problem, model)?;
        let mut worst_block: f64 = 0.0;
        for i in 0..problem.num_agents() {
            worst_block = worst_block.max((brute.w_block(i, q) - &w_formula).amax());
        }
        push(
            "brute-force-kkt",
            if worst_block <= 1e-5 {
                VerificationOutcome::Pass
            } else {
                VerificationOutcome::Fail
            },
            format!("max w block deviation {worst_block:.3e}"),
        );
    } else {
        push(
            "brute-force-kkt",
            VerificationOutcome::Skipped,
            format!("N*q = {m} above dense limit 64"),
        );
    }

    // Deterministic primal-dual agreement (desk scale only).
    if m <= 64 {
        match deterministic_primal_dual(&problem, &rewards, 0.05, 200_000, 1e-6, None) {
            Ok(run) => {
                let mut worst_block: f64 = 0.0;
                for i in 0..problem.num_agents() {
                    worst_block = worst_block.max((run.last.w_block(i, q) - &w_formula).amax());
                }
                push(
                    "deterministic-oracle",
                    if worst_block <= 1e-5 {
                        VerificationOutcome::Pass
                    } else {
                        VerificationOutcome::Fail
                    },
                    format!(
                        "final gap {:.3e}, max w block deviation {worst_block:.3e}",
                        run.final_gap
                    ),
                );
            }
            Err(e) => push("deterministic-oracle", VerificationOutcome::Fail, e.to_string()),
        }
    } else {
        push(
            "deterministic-oracle",
            VerificationOutcome::Skipped,
            format!("N*q = {m} above dense limit 64"),
        );
    }

    // Finite-difference gradient spot check along random directions.
    {
        use rand::RngExt;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2024);
        let boxes = problem.boxes();
        let mut worst_rel: f64 = 0.0;
        for _ in 0..5 {
            let it = StackedIterate {
                theta: nalgebra::DVector::from_fn(m, |_, _| {
                    rng.random_range(-0.01..0.01) * boxes.radius_theta
                }),
                v: nalgebra::DVector::from_fn(m, |_, _| {
                    rng.random_range(-0.01..0.01) * boxes.radius_v
                }),
                mu: nalgebra::DVector::from_fn(m, |_, _| {
                    rng.random_range(-0.01..0.01) * boxes.radius_mu
                }),
                w: nalgebra::DVector::from_fn(m, |_, _| {
                    rng.random_range(-0.01..0.01) * boxes.radius_w
                }),
            };
            let grads = exact_gradients(&problem, &it, &rewards)?;
            let dir = StackedIterate {
                theta: nalgebra::DVector::from_fn(m, |_, _| rng.random_range(-1.0..1.0)),
                v: nalgebra::DVector::from_fn(m, |_, _| rng.random_range(-1.0..1.0)),
                mu: nalgebra::DVector::from_fn(m, |_, _| rng.random_range(-1.0..1.0)),
                w: nalgebra::DVector::from_fn(m, |_, _| rng.random_range(-1.0..1.0)),
            };
            let analytic = grads.theta.dot(&dir.theta)
                + grads.v.dot(&dir.v)
                + grads.mu.dot(&dir.mu)
                + grads.w.dot(&dir.w);
            let f = |t: f64| -> f64 {
                let probe = StackedIterate {
                    theta: &it.theta + t * &dir.theta,
                    v: &it.v + t * &dir.v,
                    mu: &it.mu + t * &dir.mu,
                    w: &it.w + t * &dir.w,
                };
                lagrangian_value(&problem, &probe, &rewards).unwrap()
            };
            let packed = nalgebra::DVector::from_row_slice(&[0.0]);
            let fd = finite_difference_gradient(&|z| f(z[0]), &packed, 1e-6)[0];
            let rel = (fd - analytic).abs() / analytic.abs().max(1.0);
            worst_rel = worst_rel.max(rel);
        }
        push(
            "gradient-spot-check",
            if worst_rel <= 1e-5 {
                VerificationOutcome::Pass
            } else {
                VerificationOutcome::Fail
            },
            format!("max relative directional error {worst_rel:.3e}"),
        );
    }

    Ok(lines)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn preset_spec(name: &str, seeds: Vec<u64>, iterations: usize) -> ExperimentSpec {
        ExperimentSpec {
            scenario: ScenarioSpec::from_preset(name),
            run: RunSection {
                iterations: Some(iterations),
                ..Default::default()
            },
            seeds,
            report: ReportSection::default(),
            thresholds: None,
        }
    }

    #[test]
    fn run_experiment_writes_artifacts() {
        let dir = tempfile::tempdir().unwrap();
        let mut spec = preset_spec("toy2x2", vec![1, 2], 500);
        spec.report.complexity = Some(ComplexityRequest {
            epsilon: 0.1,
            delta: 0.1,
            alpha0: None,
        });
        let summary = run_experiment(&spec, dir.path(), dir.path()).unwrap();
        assert_eq!(summary.per_seed.len(), 2);
        assert!(summary.passed());
        assert!(dir.path().join("trace_seed1.csv").is_file());
        assert!(dir.path().join("trace_seed2.csv").is_file());
        assert!(dir.path().join("summary.json").is_file());
        assert!(dir.path().join("spec.toml").is_file());
        let c = summary.complexity.as_ref().unwrap();
        let direct = sample_complexity(0.1, 0.1, c.alpha0, c.c).unwrap();
        assert_eq!(c.t_required, direct.t_required);
        // Echoed spec re-parses to the same document.
        let echoed = load_spec(&dir.path().join("spec.toml")).unwrap();
        assert_eq!(echoed, spec);
    }

    #[test]
    fn identical_seed_runs_are_byte_identical() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let spec = preset_spec("toy2x2", vec![42], 300);
        run_experiment(&spec, a.path(), a.path()).unwrap();
        run_experiment(&spec, b.path(), b.path()).unwrap();
        let ta = std::fs::read(a.path().join("trace_seed42.csv")).unwrap();
        let tb = std::fs::read(b.path().join("trace_seed42.csv")).unwrap();
        assert!(!ta.is_empty());
        assert_eq!(ta, tb);
    }

    #[test]
    fn thresholds_gate_the_exit_status() {
        let dir = tempfile::tempdir().unwrap();
        let mut spec = preset_spec("toy2x2", vec![1, 2, 3], 2000);
        spec.thresholds = Some(ThresholdSection {
            consensus_rel: Some(0.5),
            solution_rel: Some(0.5),
            min_pass_fraction: 1.0,
            require_penalty_decrease: false,
        });
        let summary = run_experiment(&spec, dir.path(), dir.path()).unwrap();
        assert!(summary.passed(), "loose thresholds should pass");

        let mut strict = spec.clone();
        strict.thresholds = Some(ThresholdSection {
            consensus_rel: Some(1e-12),
            solution_rel: Some(1e-12),
            min_pass_fraction: 1.0,
            require_penalty_decrease: false,
        });
        let summary = run_experiment(&strict, dir.path(), dir.path()).unwrap();
        assert!(!summary.passed(), "absurd thresholds must fail");
    }

    #[test]
    fn gridworld_run_exports_heatmaps() {
        let dir = tempfile::tempdir().unwrap();
        let mut spec = preset_spec("gridworld", vec![4], 50);
        spec.run.stride = Some(10);
        let summary = run_experiment(&spec, dir.path(), dir.path()).unwrap();
        assert_eq!(summary.feature_dim, 400);
        for agent in 1..=3 {
            let path = dir.path().join(format!("heatmap_agent{agent}_seed4.csv"));
            let text = std::fs::read_to_string(&path).unwrap();
            let rows: Vec<&str> = text.lines().collect();
            assert_eq!(rows.len(), 20);
            assert_eq!(rows[0].split(',').count(), 20);
        }
        // Large stacked dimension: per-agent w columns are omitted from the
        // trace rows.
        let trace = std::fs::read_to_string(dir.path().join("trace_seed4.csv")).unwrap();
        assert_eq!(
            trace.lines().next().unwrap(),
            "k,consensus_penalty,theta_err,v_norm,w_err,gap_proxy"
        );
    }

    #[test]
    fn verification_suite_passes_on_toy() {
        let spec = preset_spec("toy2x2", vec![1], 10);
        let resolved = resolve_scenario(&spec, std::path::Path::new(".")).unwrap();
        let lines = oracle_verification(&resolved).unwrap();
        assert!(lines.len() >= 4);
        for line in &lines {
            assert_ne!(
                line.outcome,
                VerificationOutcome::Fail,
                "{}: {}",
                line.name,
                line.detail
            );
        }
    }
}
