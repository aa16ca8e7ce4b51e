//! Box-constrained convex quadratic minimization for the saddle-gap inner
//! problems: min 0.5 zT A z + bT z over the infinity-norm ball of a given
//! radius, with A symmetric positive semidefinite.

use nalgebra::DVector;

pub(crate) struct QpSolution {
    pub z: DVector<f64>,
    pub value: f64,
    pub converged: bool,
}

fn clamp_into(z: &mut DVector<f64>, radius: f64) {
    for x in z.iter_mut() {
        *x = x.clamp(-radius, radius);
    }
}

/// Closed-form minimizer when A = 0: each coordinate runs to the box face
/// opposing its linear coefficient.
fn solve_linear(b: &DVector<f64>, radius: f64) -> QpSolution {
    let z = DVector::from_iterator(
        b.len(),
        b.iter().map(|&bi| if bi > 0.0 { -radius } else { radius }),
    );
    let value = b.dot(&z);
    QpSolution {
        z,
        value,
        converged: true,
    }
}

/// Projected gradient with Nesterov momentum and function-value restarts,
/// optionally warm-started.
///
/// `lipschitz` must upper-bound the largest eigenvalue of A. Convergence is
/// declared when the full-step fixed-point residual drops below `tol` in the
/// infinity norm.
pub(crate) fn solve_box_qp<F>(
    apply_a: F,
    b: &DVector<f64>,
    radius: f64,
    lipschitz: f64,
    tol: f64,
    max_iter: usize,
    start: Option<&DVector<f64>>,
) -> QpSolution
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    let n = b.len();
    if lipschitz <= 0.0 {
        return solve_linear(b, radius);
    }
    let step = 1.0 / lipschitz;
    let objective = |z: &DVector<f64>| -> f64 { 0.5 * apply_a(z).dot(z) + b.dot(z) };

    let mut z = match start {
        Some(z0) => {
            let mut z0 = z0.clone();
            clamp_into(&mut z0, radius);
            z0
        }
        None => DVector::zeros(n),
    };
    let mut y = z.clone();
    let mut t = 1.0f64;
    let mut f_prev = objective(&z);
    let mut converged = false;

    for _ in 0..max_iter {
        let grad_y = apply_a(&y) + b;
        let mut z_next = &y - step * &grad_y;
        clamp_into(&mut z_next, radius);

        let f_next = objective(&z_next);
        if f_next > f_prev {
            // Momentum overshoot: restart from the last good point.
            y = z.clone();
            t = 1.0;
            let grad = apply_a(&y) + b;
            let mut retry = &y - step * &grad;
            clamp_into(&mut retry, radius);
            let f_retry = objective(&retry);
            let moved = (&retry - &z).amax();
            z = retry;
            f_prev = f_retry;
            y = z.clone();
            if moved <= tol {
                converged = true;
                break;
            }
            continue;
        }

        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let momentum = (t - 1.0) / t_next;
        y = &z_next + momentum * (&z_next - &z);
        clamp_into(&mut y, radius);
        let moved = (&z_next - &z).amax();
        z = z_next;
        t = t_next;
        f_prev = f_next;

        if moved <= tol {
            // Confirm with the non-accelerated fixed-point residual.
            let grad = apply_a(&z) + b;
            let mut probe = &z - step * &grad;
            clamp_into(&mut probe, radius);
            if (&probe - &z).amax() <= tol {
                converged = true;
                break;
            }
            y = z.clone();
            t = 1.0;
        }
    }

    let value = objective(&z);
    QpSolution {
        z,
        value,
        converged,
    }
}
