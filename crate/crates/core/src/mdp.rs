//! Finite MDP policy-evaluation algebra: the policy-induced chain, linear
//! feature maps, the projected-Bellman operator matrices, and the closed-form
//! global solution of the multi-agent evaluation problem.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

const ROW_SUM_TOL: f64 = 1e-12;
const POWER_ITER_CAP: usize = 1_000_000;
const POWER_ITER_TOL: f64 = 1e-12;
const POSITIVITY_FLOOR: f64 = 1e-12;

/// A finite Markov chain induced by a fixed joint policy, together with the
/// per-agent expected reward vectors.
///
/// Rewards are stored state-indexed (the expected reward collected on entering
/// a state); per-transition realizations are drawn by the simulation engine.
#[derive(Debug, Clone)]
pub struct MdpModel {
    transition: DMatrix<f64>,
    agent_rewards: Vec<DVector<f64>>,
    sigma: f64,
    gamma: f64,
}

impl MdpModel {
    pub fn new(
        transition: DMatrix<f64>,
        agent_rewards: Vec<DVector<f64>>,
        sigma: f64,
        gamma: f64,
    ) -> Result<Self> {
        let n = transition.nrows();
        if n == 0 || transition.ncols() != n {
            return Err(Error::DimensionMismatch(format!(
                "transition matrix must be square and nonempty, got {}x{}",
                transition.nrows(),
                transition.ncols()
            )));
        }
        for s in 0..n {
            let mut sum = 0.0;
            for s2 in 0..n {
                let p = transition[(s, s2)];
                if p < 0.0 {
                    return Err(Error::DomainError(format!(
                        "transition[{s},{s2}] = {p} is negative"
                    )));
                }
                sum += p;
            }
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::DomainError(format!(
                    "transition row {s} sums to {sum}, expected 1 within {ROW_SUM_TOL}"
                )));
            }
        }
        if !(sigma > 0.0) {
            return Err(Error::DomainError(format!("sigma = {sigma} must be > 0")));
        }
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(Error::DomainError(format!(
                "gamma = {gamma} must lie in (0,1)"
            )));
        }
        if agent_rewards.is_empty() {
            return Err(Error::DimensionMismatch(
                "at least one agent reward vector is required".into(),
            ));
        }
        for (i, r) in agent_rewards.iter().enumerate() {
            if r.len() != n {
                return Err(Error::DimensionMismatch(format!(
                    "reward vector of agent {i} has length {}, expected {n}",
                    r.len()
                )));
            }
            for s in 0..n {
                if r[s] < 0.0 || r[s] > sigma {
                    return Err(Error::DomainError(format!(
                        "reward of agent {i} at state {s} is {}, outside [0, {sigma}]",
                        r[s]
                    )));
                }
            }
        }
        Ok(Self {
            transition,
            agent_rewards,
            sigma,
            gamma,
        })
    }

    pub fn num_states(&self) -> usize {
        self.transition.nrows()
    }

    pub fn num_agents(&self) -> usize {
        self.agent_rewards.len()
    }

    pub fn transition(&self) -> &DMatrix<f64> {
        &self.transition
    }

    pub fn agent_reward(&self, agent: usize) -> &DVector<f64> {
        &self.agent_rewards[agent]
    }

    pub fn agent_rewards(&self) -> &[DVector<f64>] {
        &self.agent_rewards
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// (1/N) sum of the per-agent expected reward vectors.
    pub fn average_reward(&self) -> DVector<f64> {
        let mut avg = DVector::zeros(self.num_states());
        for r in &self.agent_rewards {
            avg += r;
        }
        avg / self.num_agents() as f64
    }

    /// All agent reward vectors stacked into one N*|S| vector.
    pub fn stacked_rewards(&self) -> DVector<f64> {
        let n = self.num_states();
        let mut out = DVector::zeros(n * self.num_agents());
        for (i, r) in self.agent_rewards.iter().enumerate() {
            out.rows_mut(i * n, n).copy_from(r);
        }
        out
    }

    /// Rescale every agent reward by `c > 0` (and sigma with it).
    pub fn scale_rewards(&self, c: f64) -> Result<Self> {
        if !(c > 0.0) {
            return Err(Error::DomainError(format!("scale factor {c} must be > 0")));
        }
        Self::new(
            self.transition.clone(),
            self.agent_rewards.iter().map(|r| r * c).collect(),
            self.sigma * c,
            self.gamma,
        )
    }
}

/// Full-column-rank feature matrix Phi (one row per state).
#[derive(Debug, Clone)]
pub struct FeatureMap {
    phi: DMatrix<f64>,
}

impl FeatureMap {
    /// Validates full column rank: smallest singular value must exceed
    /// 1e-10 times the largest.
    pub fn new(phi: DMatrix<f64>) -> Result<Self> {
        if phi.nrows() == 0 || phi.ncols() == 0 || phi.ncols() > phi.nrows() {
            return Err(Error::DimensionMismatch(format!(
                "feature matrix must be |S| x q with 1 <= q <= |S|, got {}x{}",
                phi.nrows(),
                phi.ncols()
            )));
        }
        let svals = phi.clone().singular_values();
        let smax = svals.max();
        let smin = svals.min();
        if !(smin > 1e-10 * smax) {
            return Err(Error::RankDeficient(smin / smax));
        }
        Ok(Self { phi })
    }

    /// Skips the rank check. Downstream assembly still rejects a singular
    /// Gram matrix.
    pub fn from_matrix_unchecked(phi: DMatrix<f64>) -> Self {
        Self { phi }
    }

    pub fn identity(num_states: usize) -> Self {
        Self {
            phi: DMatrix::identity(num_states, num_states),
        }
    }

    pub fn phi(&self) -> &DMatrix<f64> {
        &self.phi
    }

    pub fn dim(&self) -> usize {
        self.phi.ncols()
    }

    pub fn num_states(&self) -> usize {
        self.phi.nrows()
    }

    /// phi(s) as a column vector.
    pub fn feature(&self, state: usize) -> DVector<f64> {
        self.phi.row(state).transpose()
    }
}

/// Matrices derived from a chain and a feature map: stationary distribution,
/// D-weighted projector onto range(Phi), and B = PhiT D (I - gamma P) Phi.
#[derive(Debug, Clone)]
pub struct BellmanMatrices {
    d: DVector<f64>,
    xi: f64,
    projector: DMatrix<f64>,
    b: DMatrix<f64>,
    gram: DMatrix<f64>,
    gram_inv: DMatrix<f64>,
    phi: DMatrix<f64>,
    phi_t_d: DMatrix<f64>,
}

impl BellmanMatrices {
    pub fn stationary(&self) -> &DVector<f64> {
        &self.d
    }

    pub fn d_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&self.d)
    }

    pub fn xi(&self) -> f64 {
        self.xi
    }

    pub fn projector(&self) -> &DMatrix<f64> {
        &self.projector
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }

    /// PhiT D Phi (q x q, positive definite).
    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    pub fn gram_inv(&self) -> &DMatrix<f64> {
        &self.gram_inv
    }

    pub fn phi(&self) -> &DMatrix<f64> {
        &self.phi
    }

    /// PhiT D (q x |S|).
    pub fn phi_t_d(&self) -> &DMatrix<f64> {
        &self.phi_t_d
    }

    pub fn feature_dim(&self) -> usize {
        self.phi.ncols()
    }

    /// D-weighted norm sqrt(xT D x).
    pub fn d_norm(&self, x: &DVector<f64>) -> f64 {
        x.iter()
            .zip(self.d.iter())
            .map(|(xi, di)| di * xi * xi)
            .sum::<f64>()
            .sqrt()
    }
}

/// Whether the directed support graph of `p` is strongly connected.
fn strongly_connected(p: &DMatrix<f64>) -> bool {
    let n = p.nrows();
    let reach = |forward: bool| -> usize {
        let mut seen = vec![false; n];
        let mut stack = vec![0usize];
        seen[0] = true;
        let mut count = 1;
        while let Some(u) = stack.pop() {
            for v in 0..n {
                let w = if forward { p[(u, v)] } else { p[(v, u)] };
                if w > 0.0 && !seen[v] {
                    seen[v] = true;
                    count += 1;
                    stack.push(v);
                }
            }
        }
        count
    };
    reach(true) == n && reach(false) == n
}

/// Stationary distribution of the policy-induced chain.
///
/// Runs a damped power iteration on PT (iterating the chain (P + I)/2, which
/// shares the stationary distribution and is aperiodic), with a direct
/// eigenproblem solve as fallback when the iteration stalls.
pub fn stationary_distribution(model: &MdpModel) -> Result<DVector<f64>> {
    let p = model.transition();
    let n = p.nrows();
    if !strongly_connected(p) {
        return Err(Error::NonErgodic(
            "transition support graph is not strongly connected".into(),
        ));
    }

    let mut x = DVector::from_element(n, 1.0 / n as f64);
    let mut converged = false;
    for _ in 0..POWER_ITER_CAP {
        // y = 0.5 * PT x + 0.5 * x, renormalized in l1.
        let mut y = p.transpose() * &x;
        y.scale_mut(0.5);
        y.axpy(0.5, &x, 1.0);
        let total: f64 = y.iter().sum();
        y /= total;
        let diff = (&y - &x).amax();
        x = y;
        if diff <= POWER_ITER_TOL {
            converged = true;
            break;
        }
    }

    if !converged {
        x = stationary_by_direct_solve(p)?;
    }

    if x.iter().any(|&v| v <= POSITIVITY_FLOOR) {
        return Err(Error::NonErgodic(format!(
            "limiting distribution has an entry <= {POSITIVITY_FLOOR}"
        )));
    }
    let total: f64 = x.iter().sum();
    Ok(x / total)
}

/// Solves dT P = dT, sum(d) = 1 as an overdetermined linear system.
fn stationary_by_direct_solve(p: &DMatrix<f64>) -> Result<DVector<f64>> {
    let n = p.nrows();
    let mut a = DMatrix::zeros(n + 1, n);
    a.view_mut((0, 0), (n, n))
        .copy_from(&(p.transpose() - DMatrix::identity(n, n)));
    for j in 0..n {
        a[(n, j)] = 1.0;
    }
    let mut rhs = DVector::zeros(n + 1);
    rhs[n] = 1.0;
    let sol = a
        .svd(true, true)
        .solve(&rhs, 1e-14)
        .map_err(|e| Error::NonErgodic(format!("direct stationary solve failed: {e}")))?;
    let d = DVector::from_iterator(n, sol.iter().copied());
    let residual = (p.transpose() * &d - &d).amax();
    if residual > 1e-9 {
        return Err(Error::NonErgodic(format!(
            "direct stationary solve residual {residual:.3e}"
        )));
    }
    Ok(d)
}

/// Assembles the projector and Bellman matrices for a model/feature pair.
pub fn assemble_bellman(model: &MdpModel, features: &FeatureMap) -> Result<BellmanMatrices> {
    let n = model.num_states();
    if features.num_states() != n {
        return Err(Error::DimensionMismatch(format!(
            "feature matrix has {} rows, model has {n} states",
            features.num_states()
        )));
    }
    let d = stationary_distribution(model)?;
    let xi = d.min();
    let phi = features.phi().clone();

    // PhiT D without materializing diag(d).
    let mut phi_t_d = phi.transpose();
    for (s, mut col) in phi_t_d.column_iter_mut().enumerate() {
        col *= d[s];
    }

    let gram = &phi_t_d * &phi;
    let gram_inv = match gram.clone().try_inverse() {
        Some(inv) => inv,
        None => return Err(Error::SingularGram),
    };
    // Guard against near-singular Grams that LU still inverts.
    let svals = gram.clone().singular_values();
    if !(svals.min() > 1e-14 * svals.max()) {
        return Err(Error::SingularGram);
    }

    let projector = &phi * &gram_inv * &phi_t_d;
    let b = &phi_t_d * (DMatrix::identity(n, n) - model.gamma() * model.transition()) * &phi;

    Ok(BellmanMatrices {
        d,
        xi,
        projector,
        b,
        gram,
        gram_inv,
        phi,
        phi_t_d,
    })
}

/// Mean-square projected Bellman error of agent `agent` at weight `w`:
/// 0.5 * || Pi (r_i + gamma P Phi w) - Phi w ||_D^2.
pub fn mspbe(
    w: &DVector<f64>,
    agent: usize,
    mats: &BellmanMatrices,
    model: &MdpModel,
) -> Result<f64> {
    if w.len() != mats.feature_dim() {
        return Err(Error::DimensionMismatch(format!(
            "weight vector has length {}, expected {}",
            w.len(),
            mats.feature_dim()
        )));
    }
    if agent >= model.num_agents() {
        return Err(Error::DimensionMismatch(format!(
            "agent index {agent} out of range for {} agents",
            model.num_agents()
        )));
    }
    let phi_w = mats.phi() * w;
    let backup = model.agent_reward(agent) + model.gamma() * model.transition() * &phi_w;
    let residual = mats.projector() * backup - phi_w;
    Ok(0.5 * mats.d_norm(&residual).powi(2))
}

/// The unique solution of the projected Bellman equation for the averaged
/// reward: w* = B^{-1} PhiT D (1/N) sum_i r_i.
pub fn exact_global_solution(mats: &BellmanMatrices, model: &MdpModel) -> Result<DVector<f64>> {
    let rhs = mats.phi_t_d() * model.average_reward();
    mats.b()
        .clone()
        .lu()
        .solve(&rhs)
        .map(|m| DVector::from_iterator(m.nrows(), m.iter().copied()))
        .ok_or(Error::SingularB)
}
