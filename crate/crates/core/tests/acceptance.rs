//! Acceptance suite: one test per release criterion, each printing a
//! pass/fail line (visible with `cargo test -- --nocapture`).

use std::sync::OnceLock;
use std::time::Instant;

use nalgebra::DVector;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use dgtd::engine::{
    run, sample_transition, stochastic_direction, OutputSelect, RewardNoise, RunConfig, RunTrace,
};
use dgtd::graph::{sample_graph, GraphDistribution};
use dgtd::harness::{preset, run_experiment, ExperimentSpec, ReportSection, RunSection, ScenarioSpec};
use dgtd::mdp::{assemble_bellman, exact_global_solution, FeatureMap, MdpModel};
use dgtd::oracle::{brute_force_kkt, deterministic_primal_dual, finite_difference_gradient};
use dgtd::saddle::{
    exact_gradients, kkt_mu_residual, kkt_point, lagrangian_value, sample_complexity,
    solution_bounds, SaddleProblem, StackedIterate,
};
use dgtd::testutil;

const PRESETS: [&str; 4] = ["chain4", "gridworld", "single-agent", "toy2x2"];

fn assembled(name: &str) -> (SaddleProblem, MdpModel, FeatureMap, GraphDistribution) {
    let (model, feats, dist, defaults) = preset(name).expect(name);
    let problem = SaddleProblem::assemble(&model, &feats, &dist, defaults.kappa, defaults.rho, 2.0)
        .expect(name);
    (problem, model, feats, dist)
}

fn report(criterion: &str, passed: bool, started: Instant, detail: &str) {
    println!(
        "[{}] {criterion}: {detail} ({:.2}s)",
        if passed { "PASS" } else { "FAIL" },
        started.elapsed().as_secs_f64()
    );
    assert!(passed, "{criterion}: {detail}");
}

/// Ten chain4 runs at the preset settings (alpha_k = 10/sqrt(k+100),
/// kappa = 1, T = 50000), shared by the reproduction and rate criteria.
fn chain4_runs() -> &'static Vec<RunTrace> {
    static RUNS: OnceLock<Vec<RunTrace>> = OnceLock::new();
    RUNS.get_or_init(|| {
        let (problem, model, feats, dist) = assembled("chain4");
        let (_, _, _, defaults) = preset("chain4").unwrap();
        (1..=10u64)
            .collect::<Vec<_>>()
            .par_iter()
            .map(|&seed| {
                let cfg = RunConfig {
                    total_iterations: 50_000,
                    kappa: defaults.kappa,
                    rho: defaults.rho,
                    schedule: defaults.schedule,
                    seed,
                    reward_noise: RewardNoise::None,
                    output: OutputSelect::Both,
                    independent_chains: false,
                    stride: None,
                };
                run(&problem, &model, &feats, &dist, &cfg).expect("chain4 run")
            })
            .collect()
    })
}

#[test]
fn criterion_01_exact_solution_triple_agreement() {
    let started = Instant::now();
    let mut worst: f64 = 0.0;
    for name in ["chain4", "toy2x2"] {
        let (problem, model, _, _) = assembled(name);
        let q = problem.feature_dim();
        let rewards = model.stacked_rewards();
        let w_formula = exact_global_solution(problem.mats(), &model).unwrap();
        let brute = brute_force_kkt(&problem, &model).unwrap();
        let oracle =
            deterministic_primal_dual(&problem, &rewards, 0.05, 200_000, 1e-6, None).unwrap();
        for i in 0..problem.num_agents() {
            worst = worst
                .max((brute.w_block(i, q) - &w_formula).amax())
                .max((oracle.last.w_block(i, q) - &w_formula).amax());
        }
    }
    report(
        "criterion 1 exact-solution triple agreement",
        worst <= 1e-5,
        started,
        &format!("max deviation across routes {worst:.3e}"),
    );
}

#[test]
fn criterion_02_kkt_certificate_on_every_preset() {
    let started = Instant::now();
    let mut passed = true;
    let mut details = Vec::new();
    for name in PRESETS {
        let (problem, model, _, _) = assembled(name);
        let star = kkt_point(&problem, &model).unwrap();
        let grads = exact_gradients(&problem, &star, &model.stacked_rewards()).unwrap();
        let worst = grads
            .theta
            .amax()
            .max(grads.v.amax())
            .max(grads.mu.amax())
            .max(grads.w.amax());
        let mu_res = kkt_mu_residual(&problem, &star).unwrap();
        let ok = worst <= 1e-8 && star.v.amax() == 0.0 && mu_res <= 1e-8;
        passed &= ok;
        details.push(format!("{name}: grad {worst:.2e}, mu {mu_res:.2e}"));
    }
    report(
        "criterion 2 KKT certificate",
        passed,
        started,
        &details.join("; "),
    );
}

#[test]
fn criterion_03_solution_bound_audit() {
    let started = Instant::now();
    let audit = |problem: &SaddleProblem, model: &MdpModel| -> (bool, f64) {
        let bounds = solution_bounds(problem, model).unwrap();
        let star = kkt_point(problem, model).unwrap();
        let margins = [
            bounds.theta - star.theta.amax(),
            bounds.v - star.v.amax(),
            bounds.mu - star.mu.amax(),
            bounds.w - star.w.amax(),
        ];
        let worst = margins.iter().copied().fold(f64::INFINITY, f64::min);
        (worst >= 0.0, worst)
    };

    let (problem, model, _, _) = assembled("chain4");
    let (mut passed, mut min_margin) = audit(&problem, &model);

    let mut rng = ChaCha8Rng::seed_from_u64(3001);
    for _ in 0..20 {
        let s = rng.random_range(2..=6);
        let q = rng.random_range(1..=3.min(s));
        let n = rng.random_range(1..=4);
        let sigma = rng.random_range(0.5..10.0);
        let model = testutil::random_model(&mut rng, s, n, sigma);
        let feats = testutil::random_features(&mut rng, s, q);
        let dist = testutil::random_connected_graph(&mut rng, n);
        let problem = SaddleProblem::assemble(&model, &feats, &dist, 1.0, 0.0, 2.0).unwrap();
        let (ok, margin) = audit(&problem, &model);
        passed &= ok;
        min_margin = min_margin.min(margin);
    }
    report(
        "criterion 3 solution-bound audit",
        passed,
        started,
        &format!("min bound-minus-component margin {min_margin:.3e}"),
    );
}

fn pack(it: &StackedIterate) -> DVector<f64> {
    let m = it.len();
    let mut z = DVector::zeros(4 * m);
    z.rows_mut(0, m).copy_from(&it.theta);
    z.rows_mut(m, m).copy_from(&it.v);
    z.rows_mut(2 * m, m).copy_from(&it.mu);
    z.rows_mut(3 * m, m).copy_from(&it.w);
    z
}

fn unpack(z: &DVector<f64>, m: usize) -> StackedIterate {
    StackedIterate {
        theta: z.rows(0, m).into_owned(),
        v: z.rows(m, m).into_owned(),
        mu: z.rows(2 * m, m).into_owned(),
        w: z.rows(3 * m, m).into_owned(),
    }
}

fn random_interior(
    problem: &SaddleProblem,
    rng: &mut ChaCha8Rng,
    scale: f64,
) -> StackedIterate {
    let m = problem.stacked_len();
    let b = problem.boxes();
    StackedIterate {
        theta: DVector::from_fn(m, |_, _| rng.random_range(-scale..scale) * b.radius_theta),
        v: DVector::from_fn(m, |_, _| rng.random_range(-scale..scale) * b.radius_v),
        mu: DVector::from_fn(m, |_, _| rng.random_range(-scale..scale) * b.radius_mu),
        w: DVector::from_fn(m, |_, _| rng.random_range(-scale..scale) * b.radius_w),
    }
}

#[test]
fn criterion_04_gradient_correctness() {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(4001);
    let mut worst_rel: f64 = 0.0;
    for name in PRESETS {
        let (problem, model, _, _) = assembled(name);
        let rewards = model.stacked_rewards();
        let m = problem.stacked_len();
        let full = 4 * m <= 256;
        for _ in 0..20 {
            let it = random_interior(&problem, &mut rng, 0.01);
            let grads = exact_gradients(&problem, &it, &rewards).unwrap();
            let analytic = pack(&StackedIterate {
                theta: grads.theta.clone(),
                v: grads.v.clone(),
                mu: grads.mu.clone(),
                w: grads.w.clone(),
            });
            let point = pack(&it);
            let f = |z: &DVector<f64>| lagrangian_value(&problem, &unpack(z, m), &rewards).unwrap();

            if full {
                let fd = finite_difference_gradient(&f, &point, 1e-6);
                let rel = (&fd - &analytic).norm() / analytic.norm().max(1.0);
                worst_rel = worst_rel.max(rel);
            } else {
                // Large problems: per-coordinate differences on a random
                // subset (30 per block) plus random directional probes.
                let h = 1e-6;
                let mut probe = point.clone();
                for block in 0..4 {
                    for _ in 0..30 {
                        let j = block * m + rng.random_range(0..m);
                        let orig = probe[j];
                        probe[j] = orig + h;
                        let plus = f(&probe);
                        probe[j] = orig - h;
                        let minus = f(&probe);
                        probe[j] = orig;
                        let fd = (plus - minus) / (2.0 * h);
                        let rel =
                            (fd - analytic[j]).abs() / analytic.norm().max(1.0);
                        worst_rel = worst_rel.max(rel);
                    }
                }
                for _ in 0..10 {
                    let dir = DVector::from_fn(4 * m, |_, _| rng.random_range(-1.0..1.0));
                    let dir = &dir / dir.norm();
                    let fp = f(&(&point + h * &dir));
                    let fm = f(&(&point - h * &dir));
                    let fd = (fp - fm) / (2.0 * h);
                    let an = analytic.dot(&dir);
                    let rel = (fd - an).abs() / analytic.norm().max(1.0);
                    worst_rel = worst_rel.max(rel);
                }
            }
        }
    }
    report(
        "criterion 4 gradient correctness",
        worst_rel <= 1e-5,
        started,
        &format!("max relative FD deviation {worst_rel:.3e}"),
    );
}

#[test]
fn criterion_05_unbiasedness() {
    let started = Instant::now();
    let (problem, model, feats, dist) = assembled("chain4");
    let rewards = model.stacked_rewards();
    let mats = assemble_bellman(&model, &feats).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5001);
    let samples = 100_000;
    let m = problem.stacked_len();
    let mut passed = true;
    let mut worst_sigma: f64 = 0.0;

    for trial in 0..5 {
        let it = random_interior(&problem, &mut rng, 0.02);
        let exact = exact_gradients(&problem, &it, &rewards).unwrap();
        let exact_packed = pack(&StackedIterate {
            theta: exact.theta.clone(),
            v: exact.v.clone(),
            mu: exact.mu.clone(),
            w: exact.w.clone(),
        });
        let mut sum = DVector::<f64>::zeros(4 * m);
        let mut sumsq = DVector::<f64>::zeros(4 * m);
        for _ in 0..samples {
            let graph = sample_graph(&dist, &mut rng);
            let sample = sample_transition(&model, &mats, RewardNoise::None, false, &mut rng);
            let dir = stochastic_direction(
                &it,
                &sample,
                &graph,
                &feats,
                model.gamma(),
                problem.kappa(),
                problem.rho(),
            )
            .unwrap();
            let packed = pack(&StackedIterate {
                theta: dir.theta,
                v: dir.v,
                mu: dir.mu,
                w: dir.w,
            });
            sum += &packed;
            sumsq += packed.component_mul(&packed);
        }
        for j in 0..4 * m {
            let mean = sum[j] / samples as f64;
            let var = (sumsq[j] / samples as f64 - mean * mean).max(0.0);
            let se = (var / samples as f64).sqrt();
            let diff = (mean - exact_packed[j]).abs();
            // Absolute slack covers sequential-summation roundoff,
            // n * eps * |exact|, for components with zero sampling variance.
            let slack = f64::EPSILON * samples as f64 * (1.0 + exact_packed[j].abs());
            if diff > 3.0 * se + slack {
                passed = false;
            }
            if se > 0.0 {
                worst_sigma = worst_sigma.max(diff / se);
            }
        }
        let _ = trial;
    }
    report(
        "criterion 5 unbiasedness",
        passed,
        started,
        &format!("worst |mean-exact|/SE {worst_sigma:.2} over 5 iterates x {samples} draws"),
    );
}

#[test]
fn criterion_06_example_reproduction() {
    let started = Instant::now();
    let (problem, model, _, _) = assembled("chain4");
    let q = problem.feature_dim();
    let w_star = exact_global_solution(problem.mats(), &model).unwrap();
    let scale = 1.0 + w_star.amax();
    let runs = chain4_runs();

    let mut consensus_pass = 0;
    let mut solution_pass = 0;
    let mut penalty_decrease_all = true;
    for trace in runs.iter() {
        let avg = &trace.averaged;
        if avg.max_pairwise_w_distance(q) <= 0.05 * scale {
            consensus_pass += 1;
        }
        let block_err = (0..problem.num_agents())
            .map(|i| (avg.w_block(i, q) - &w_star).amax())
            .fold(0.0f64, f64::max);
        if block_err <= 0.1 * scale {
            solution_pass += 1;
        }
        let early = trace
            .record_at_or_before(trace.iterations / 10)
            .unwrap()
            .avg_consensus_penalty;
        let late = trace.records.last().unwrap().avg_consensus_penalty;
        penalty_decrease_all &= late < early;
    }
    let passed = consensus_pass >= 8 && solution_pass >= 8 && penalty_decrease_all;
    report(
        "criterion 6 example reproduction",
        passed,
        started,
        &format!(
            "consensus {consensus_pass}/10, solution {solution_pass}/10, penalty decrease in all seeds: {penalty_decrease_all}"
        ),
    );
}

#[test]
fn criterion_07_rate_trend() {
    let started = Instant::now();
    let runs = chain4_runs();
    let gap_at = |trace: &RunTrace, k: usize| -> f64 {
        trace.record_at_or_before(k).unwrap().avg_gap_proxy
    };
    let mut early: Vec<f64> = runs.iter().map(|t| gap_at(t, 9_999)).collect();
    let mut late: Vec<f64> = runs.iter().map(|t| gap_at(t, 39_999)).collect();
    early.sort_by(|a, b| a.total_cmp(b));
    late.sort_by(|a, b| a.total_cmp(b));
    let med = |v: &Vec<f64>| 0.5 * (v[4] + v[5]);
    let (m_early, m_late) = (med(&early), med(&late));
    let passed = m_late <= 0.75 * m_early;
    report(
        "criterion 7 rate trend",
        passed,
        started,
        &format!("median gap proxy {m_early:.4e} @10k -> {m_late:.4e} @40k (ratio {:.3})", m_late / m_early),
    );
}

#[test]
fn criterion_08_sample_complexity_calculator() {
    let started = Instant::now();
    // Independent evaluation, written as an expanded expression with -ln.
    let reference = |eps: f64, delta: f64, a0: f64, c: f64| -> (f64, f64) {
        let o1 = (8.0 * c * c * (a0 + 2.0) * (a0 + 2.0) * c * c
            + 8.0 * c * c * (a0 + 4.0) * eps / 6.0)
            / (eps * eps)
            * (-delta.ln());
        let two_over = 2.0 / a0 + a0;
        let o2 = 4.0 * c * c * c * c * two_over * two_over / (eps * eps);
        (o1, o2)
    };
    let mut rng = ChaCha8Rng::seed_from_u64(8001);
    let mut worst_rel: f64 = 0.0;
    let mut scaling_ok = true;
    for _ in 0..100 {
        let eps = rng.random_range(1e-3..1.0);
        let delta = rng.random_range(1e-4..0.5);
        let a0 = rng.random_range(0.1..10.0);
        let c = rng.random_range(0.1..100.0);
        let got = sample_complexity(eps, delta, a0, c).unwrap();
        let (o1, o2) = reference(eps, delta, a0, c);
        worst_rel = worst_rel
            .max((got.omega1 - o1).abs() / o1)
            .max((got.omega2 - o2).abs() / o2);
        let halved = sample_complexity(eps / 2.0, delta, a0, c).unwrap();
        if (halved.omega2 / got.omega2 - 4.0).abs() > 1e-13 {
            scaling_ok = false;
        }
    }
    let passed = worst_rel <= 1e-12 && scaling_ok;
    report(
        "criterion 8 sample-complexity calculator",
        passed,
        started,
        &format!("max relative deviation {worst_rel:.3e}, quadratic scaling exact: {scaling_ok}"),
    );
}

#[test]
fn criterion_09_single_agent_reduction() {
    let started = Instant::now();
    let (problem, model, feats, dist) = assembled("single-agent");
    let (_, _, _, defaults) = preset("single-agent").unwrap();
    let w_star = exact_global_solution(problem.mats(), &model).unwrap();
    let scale = 1.0 + w_star.amax();
    let errors: Vec<f64> = (1..=10u64)
        .collect::<Vec<_>>()
        .par_iter()
        .map(|&seed| {
            let cfg = RunConfig {
                total_iterations: 50_000,
                kappa: defaults.kappa,
                rho: defaults.rho,
                schedule: defaults.schedule,
                seed,
                reward_noise: RewardNoise::None,
                output: OutputSelect::Both,
                independent_chains: false,
                stride: None,
            };
            let trace = run(&problem, &model, &feats, &dist, &cfg).unwrap();
            (trace.averaged.w_block(0, problem.feature_dim()) - &w_star).amax()
        })
        .collect();
    let worst = errors.iter().copied().fold(0.0f64, f64::max);
    let passed = worst <= 0.05 * scale;
    report(
        "criterion 9 single-agent reduction",
        passed,
        started,
        &format!("max |w-hat - w*| over 10 seeds: {worst:.4e} (allowance {:.4e})", 0.05 * scale),
    );
}

#[test]
fn criterion_10_determinism() {
    let started = Instant::now();
    let spec = ExperimentSpec {
        scenario: ScenarioSpec::from_preset("chain4"),
        run: RunSection {
            iterations: Some(2_000),
            ..Default::default()
        },
        seeds: vec![42],
        report: ReportSection::default(),
        thresholds: None,
    };
    let dir_a = tempfile::tempdir().unwrap();
    let dir_b = tempfile::tempdir().unwrap();
    run_experiment(&spec, dir_a.path(), dir_a.path()).unwrap();
    run_experiment(&spec, dir_b.path(), dir_b.path()).unwrap();
    let a = std::fs::read(dir_a.path().join("trace_seed42.csv")).unwrap();
    let b = std::fs::read(dir_b.path().join("trace_seed42.csv")).unwrap();
    let passed = !a.is_empty() && a == b;
    report(
        "criterion 10 determinism",
        passed,
        started,
        &format!("trace files byte-identical across invocations ({} bytes)", a.len()),
    );
}
