//! Independent verification oracles: the noise-free projected primal-dual
//! recursion on the mean Laplacian, a dense minimum-norm solve of the stacked
//! stationarity system, and finite-difference gradients.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::mdp::MdpModel;
use crate::saddle::{
    exact_gradients, project_boxes, saddle_gap, SaddleProblem, StackedIterate,
};

/// Central-difference gradient estimate; O(step^2) accurate on smooth fields.
pub fn finite_difference_gradient<F>(f: &F, point: &DVector<f64>, step: f64) -> DVector<f64>
where
    F: Fn(&DVector<f64>) -> f64,
{
    assert!(step > 0.0, "finite-difference step must be positive");
    let mut grad = DVector::zeros(point.len());
    let mut probe = point.clone();
    for j in 0..point.len() {
        let orig = point[j];
        probe[j] = orig + step;
        let plus = f(&probe);
        probe[j] = orig - step;
        let minus = f(&probe);
        probe[j] = orig;
        grad[j] = (plus - minus) / (2.0 * step);
    }
    grad
}

/// Trace of the deterministic oracle run.
#[derive(Debug, Clone)]
pub struct DeterministicRun {
    pub last: StackedIterate,
    pub averaged: StackedIterate,
    /// (iteration, saddle gap of the iterate at that point).
    pub checkpoint_gaps: Vec<(usize, f64)>,
    pub final_gap: f64,
}

/// Runs the noise-free projected primal-dual recursion with a constant step
/// on the mean Laplacian, evaluating the saddle gap on a logarithmic
/// checkpoint grid.
///
/// The reference solution is the final iterate, which the deterministic
/// recursion drives to the saddle; the running average of the whole history
/// is also reported but converges only at O(1/T) and is not used for the
/// convergence check.
pub fn deterministic_primal_dual(
    problem: &SaddleProblem,
    rewards: &DVector<f64>,
    step: f64,
    iterations: usize,
    gap_tolerance: f64,
    initial: Option<&StackedIterate>,
) -> Result<DeterministicRun> {
    if !(step > 0.0) {
        return Err(Error::DomainError(format!("step {step} must be > 0")));
    }
    if iterations == 0 {
        return Err(Error::DomainError("iterations must be >= 1".into()));
    }
    let m = problem.stacked_len();
    let mut state = match initial {
        Some(it) => {
            if it.len() != m {
                return Err(Error::DimensionMismatch(format!(
                    "initial iterate has length {}, expected {m}",
                    it.len()
                )));
            }
            project_boxes(problem.boxes(), it)
        }
        None => StackedIterate::zeros(m),
    };
    let mut avg = StackedIterate::zeros(m);

    let base = (iterations / 128).max(1);
    let mut checkpoints: Vec<usize> = Vec::new();
    let mut c = base;
    while c < iterations {
        checkpoints.push(c);
        c *= 2;
    }
    checkpoints.push(iterations);

    let mut checkpoint_gaps = Vec::with_capacity(checkpoints.len());
    let mut next_checkpoint = 0;
    for k in 0..iterations {
        let g = exact_gradients(problem, &state, rewards)?;
        let raw = StackedIterate {
            theta: &state.theta - step * &g.theta,
            v: &state.v - step * &g.v,
            mu: &state.mu - step * &g.mu,
            w: &state.w + step * &g.w,
        };
        state = project_boxes(problem.boxes(), &raw);

        let weight = 1.0 / (k + 1) as f64;
        avg.theta.axpy(weight, &(&state.theta - &avg.theta), 1.0);
        avg.v.axpy(weight, &(&state.v - &avg.v), 1.0);
        avg.mu.axpy(weight, &(&state.mu - &avg.mu), 1.0);
        avg.w.axpy(weight, &(&state.w - &avg.w), 1.0);

        if next_checkpoint < checkpoints.len() && k + 1 == checkpoints[next_checkpoint] {
            let gap = saddle_gap(problem, &state, rewards)?;
            checkpoint_gaps.push((k + 1, gap));
            next_checkpoint += 1;
        }
    }

    let final_gap = checkpoint_gaps
        .last()
        .map(|&(_, g)| g)
        .expect("at least one checkpoint");
    if final_gap > gap_tolerance {
        return Err(Error::NoConvergence(format!(
            "saddle gap {final_gap:.3e} above tolerance {gap_tolerance:.3e} after {iterations} iterations"
        )));
    }
    Ok(DeterministicRun {
        last: state,
        averaged: avg,
        checkpoint_gaps,
        final_gap,
    })
}

/// Solves the stacked stationarity system directly as one dense linear
/// system, using a minimum-norm least-squares solve for the rank-deficient
/// mu block. Restricted to desk-scale problems (N q <= 64).
pub fn brute_force_kkt(problem: &SaddleProblem, model: &MdpModel) -> Result<StackedIterate> {
    let m = problem.stacked_len();
    if m > 64 {
        return Err(Error::DomainError(format!(
            "brute-force KKT assembles a dense {0}x{0} system; N*q = {m} exceeds 64",
            4 * m
        )));
    }
    let n = problem.num_agents();
    let eye_n = DMatrix::<f64>::identity(n, n);
    let gbar = eye_n.kronecker(problem.mats().gram());
    let bbar = eye_n.kronecker(problem.mats().b());
    let lbar = problem.mean_block().to_dense();
    let eye = DMatrix::<f64>::identity(m, m);
    let kappa = problem.kappa();
    let rho = problem.rho();

    let mut sys = DMatrix::<f64>::zeros(4 * m, 4 * m);
    sys.view_mut((0, 0), (m, m)).copy_from(&gbar);
    sys.view_mut((0, 3 * m), (m, m)).copy_from(&bbar);
    sys.view_mut((m, m), (m, m)).copy_from(&eye);
    sys.view_mut((m, 3 * m), (m, m)).copy_from(&(-&lbar));
    sys.view_mut((2 * m, 2 * m), (m, m)).copy_from(&(rho * &eye));
    sys.view_mut((2 * m, 3 * m), (m, m)).copy_from(&(-&lbar));
    sys.view_mut((3 * m, 0), (m, m)).copy_from(&bbar.transpose());
    sys.view_mut((3 * m, m), (m, m)).copy_from(&(-&lbar));
    sys.view_mut((3 * m, 2 * m), (m, m)).copy_from(&(-&lbar));
    sys.view_mut((3 * m, 3 * m), (m, m))
        .copy_from(&(-kappa * &lbar - rho * &eye));

    let mut rhs = DVector::zeros(4 * m);
    rhs.rows_mut(0, m)
        .copy_from(&problem.stacked_reward_projection(&model.stacked_rewards())?);

    let svd = sys.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let sol = svd
        .solve(&rhs, 1e-12 * smax)
        .map_err(|_| Error::SingularSystem)?;
    let sol = DVector::from_iterator(4 * m, sol.iter().copied());

    let residual = (&sys * &sol - &rhs).amax();
    let scale = rhs.amax().max(1.0);
    if residual > 1e-8 * scale {
        return Err(Error::SingularSystem);
    }

    StackedIterate::new(
        sol.rows(0, m).into_owned(),
        sol.rows(m, m).into_owned(),
        sol.rows(2 * m, m).into_owned(),
        sol.rows(3 * m, m).into_owned(),
    )
}
