//! Lagrangian saddle-point machinery for the distributed evaluation problem:
//! Lagrangian value and exact gradients, the KKT closed form, solution
//! bounds, box constraints, the epsilon-saddle gap, and the sample-complexity
//! calculator.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::graph::{
    assert_mean_connectivity, laplacian_pseudoinverse, mean_laplacian, stacked_laplacian,
    BlockLaplacian, GraphDistribution, LaplacianView, DENSE_BLOCK_LIMIT,
};
use crate::mdp::{assemble_bellman, exact_global_solution, BellmanMatrices, FeatureMap, MdpModel};
use crate::qp::solve_box_qp;

const GAP_TOL: f64 = 1e-9;
const GAP_ITER_CAP: usize = 100_000;

/// The stacked primal/dual quadruple (theta, v, mu, w), each N blocks of
/// dimension q.
#[derive(Debug, Clone, PartialEq)]
pub struct StackedIterate {
    pub theta: DVector<f64>,
    pub v: DVector<f64>,
    pub mu: DVector<f64>,
    pub w: DVector<f64>,
}

impl StackedIterate {
    pub fn new(
        theta: DVector<f64>,
        v: DVector<f64>,
        mu: DVector<f64>,
        w: DVector<f64>,
    ) -> Result<Self> {
        let n = theta.len();
        if v.len() != n || mu.len() != n || w.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "stacked blocks must share a length, got {}/{}/{}/{}",
                n,
                v.len(),
                mu.len(),
                w.len()
            )));
        }
        Ok(Self { theta, v, mu, w })
    }

    pub fn zeros(len: usize) -> Self {
        Self {
            theta: DVector::zeros(len),
            v: DVector::zeros(len),
            mu: DVector::zeros(len),
            w: DVector::zeros(len),
        }
    }

    pub fn len(&self) -> usize {
        self.theta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theta.is_empty()
    }

    /// Agent i's w block.
    pub fn w_block(&self, agent: usize, q: usize) -> DVector<f64> {
        self.w.rows(agent * q, q).into_owned()
    }

    /// Max over agent pairs of the infinity distance between w blocks.
    pub fn max_pairwise_w_distance(&self, q: usize) -> f64 {
        let n = self.w.len() / q;
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                let d = (self.w.rows(i * q, q) - self.w.rows(j * q, q)).amax();
                worst = worst.max(d);
            }
        }
        worst
    }
}

/// The four exact Lagrangian gradients at an iterate.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub theta: DVector<f64>,
    pub v: DVector<f64>,
    pub mu: DVector<f64>,
    pub w: DVector<f64>,
}

impl Gradients {
    pub fn max_norm(&self) -> f64 {
        self.theta
            .norm()
            .max(self.v.norm())
            .max(self.mu.norm())
            .max(self.w.norm())
    }
}

/// Infinity-norm box radii for the four variable classes.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxConstraints {
    pub radius_theta: f64,
    pub radius_v: f64,
    pub radius_mu: f64,
    pub radius_w: f64,
}

impl BoxConstraints {
    pub fn new(radius_theta: f64, radius_v: f64, radius_mu: f64, radius_w: f64) -> Result<Self> {
        for (name, r) in [
            ("theta", radius_theta),
            ("v", radius_v),
            ("mu", radius_mu),
            ("w", radius_w),
        ] {
            if !(r > 0.0 && r.is_finite()) {
                return Err(Error::DomainError(format!(
                    "box radius for {name} must be positive and finite, got {r}"
                )));
            }
        }
        Ok(Self {
            radius_theta,
            radius_v,
            radius_mu,
            radius_w,
        })
    }

    /// Boxes scaled from the analytic solution bounds; `safety` >= 1 keeps
    /// the saddle point in the interior.
    pub fn from_bounds(bounds: &SolutionBounds, safety: f64) -> Result<Self> {
        if !(safety >= 1.0) {
            return Err(Error::DomainError(format!(
                "box safety factor must be >= 1, got {safety}"
            )));
        }
        // Degenerate zero-reward problems still need a nonempty box.
        let pad = |b: f64| safety * b.max(1.0);
        Self::new(
            pad(bounds.theta),
            pad(bounds.v),
            pad(bounds.mu),
            pad(bounds.w),
        )
    }

    /// Uniform boxes sized from the computed saddle point: every radius is
    /// `safety` times the largest component magnitude (floored at 1), so the
    /// saddle point sits strictly inside and all classes share one scale.
    pub fn from_solution(star: &StackedIterate, safety: f64) -> Result<Self> {
        if !(safety > 1.0) {
            return Err(Error::DomainError(format!(
                "box safety factor must be > 1, got {safety}"
            )));
        }
        let scale = star
            .theta
            .amax()
            .max(star.v.amax())
            .max(star.mu.amax())
            .max(star.w.amax())
            .max(1.0);
        let r = safety * scale;
        Self::new(r, r, r, r)
    }

    /// The feasibility audit: the saddle point lies inside the boxes.
    pub fn audit(&self, star: &StackedIterate) -> bool {
        self.contains(star)
    }

    /// Whether every radius also dominates its analytic solution bound (the
    /// conservative sizing).
    pub fn dominates(&self, bounds: &SolutionBounds) -> bool {
        self.radius_theta >= bounds.theta
            && self.radius_v >= bounds.v
            && self.radius_mu >= bounds.mu
            && self.radius_w >= bounds.w
    }

    pub fn contains(&self, it: &StackedIterate) -> bool {
        it.theta.amax() <= self.radius_theta
            && it.v.amax() <= self.radius_v
            && it.mu.amax() <= self.radius_mu
            && it.w.amax() <= self.radius_w
    }
}

/// Componentwise clamp of each block onto its box. Idempotent and
/// nonexpansive.
pub fn project_boxes(boxes: &BoxConstraints, it: &StackedIterate) -> StackedIterate {
    let clamp = |v: &DVector<f64>, r: f64| v.map(|x| x.clamp(-r, r));
    StackedIterate {
        theta: clamp(&it.theta, boxes.radius_theta),
        v: clamp(&it.v, boxes.radius_v),
        mu: clamp(&it.mu, boxes.radius_mu),
        w: clamp(&it.w, boxes.radius_w),
    }
}

/// Analytic infinity-norm bounds on the saddle-point components.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolutionBounds {
    pub theta: f64,
    pub v: f64,
    pub mu: f64,
    pub w: f64,
}

/// Induced infinity norm (max absolute row sum).
fn matrix_inf_norm(m: &DMatrix<f64>) -> f64 {
    (0..m.nrows())
        .map(|i| m.row(i).iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Apply I_N (x) M to a stacked vector.
fn block_diag_apply(m: &DMatrix<f64>, x: &DVector<f64>, out: &mut DVector<f64>) {
    let q = m.ncols();
    let n = x.len() / q;
    debug_assert_eq!(x.len(), n * q);
    for i in 0..n {
        let src = x.rows(i * q, q);
        let mut dst = out.rows_mut(i * q, q);
        m.mul_to(&src, &mut dst);
    }
}

fn block_diag_apply_new(m: &DMatrix<f64>, x: &DVector<f64>) -> DVector<f64> {
    let mut out = DVector::zeros(x.len());
    block_diag_apply(m, x, &mut out);
    out
}

/// The assembled saddle problem: shared per-agent Bellman matrices, the mean
/// Laplacian block operator, the augmentation weights, and the constraint
/// boxes.
#[derive(Debug, Clone)]
pub struct SaddleProblem {
    mats: BellmanMatrices,
    num_agents: usize,
    mean_laplacian: LaplacianView,
    mean_block: BlockLaplacian,
    kappa: f64,
    rho: f64,
    boxes: BoxConstraints,
    gram_eig_min: f64,
    gram_eig_max: f64,
    laplacian_eig_max: f64,
}

impl SaddleProblem {
    /// Assembles matrices, audits mean connectivity, and sizes the boxes at
    /// `box_safety` times the analytic bounds (2.0 is the default choice).
    pub fn assemble(
        model: &MdpModel,
        feats: &FeatureMap,
        dist: &GraphDistribution,
        kappa: f64,
        rho: f64,
        box_safety: f64,
    ) -> Result<Self> {
        if !(kappa >= 0.0) || !(rho >= 0.0) {
            return Err(Error::DomainError(format!(
                "kappa and rho must be nonnegative, got {kappa}, {rho}"
            )));
        }
        if dist.num_agents() != model.num_agents() {
            return Err(Error::DimensionMismatch(format!(
                "graph has {} agents, model has {}",
                dist.num_agents(),
                model.num_agents()
            )));
        }
        assert_mean_connectivity(dist)?;
        let mats = assemble_bellman(model, feats)?;
        let mean = mean_laplacian(dist);
        let mean_block = stacked_laplacian(&mean, mats.feature_dim())?;
        let bounds = compute_solution_bounds(&mats, &mean, model)?;
        // Provisional conservative boxes, replaced by solution-anchored ones
        // once the saddle point is known. The analytic bounds exceed the
        // actual components by orders of magnitude, and search boxes on that
        // scale let the early iterates thrash far from the solution.
        let provisional = BoxConstraints::from_bounds(&bounds, box_safety.max(1.0 + 1e-9))?;
        let mut problem =
            Self::with_boxes(model, mats, mean, mean_block, kappa, rho, provisional)?;
        let star = kkt_point(&problem, model)?;
        problem.boxes = BoxConstraints::from_solution(&star, box_safety)?;
        Ok(problem)
    }

    /// As `assemble` but with explicitly chosen boxes (callers own the
    /// saddle-containment audit in that case).
    fn with_boxes(
        model: &MdpModel,
        mats: BellmanMatrices,
        mean_laplacian: LaplacianView,
        mean_block: BlockLaplacian,
        kappa: f64,
        rho: f64,
        boxes: BoxConstraints,
    ) -> Result<Self> {
        let gram_eigs = mats.gram().clone().symmetric_eigen().eigenvalues;
        let lap_eigs = mean_laplacian
            .matrix()
            .clone()
            .symmetric_eigen()
            .eigenvalues;
        Ok(Self {
            mats,
            num_agents: model.num_agents(),
            mean_laplacian,
            mean_block,
            kappa,
            rho,
            boxes,
            gram_eig_min: gram_eigs.min(),
            gram_eig_max: gram_eigs.max(),
            laplacian_eig_max: lap_eigs.max(),
        })
    }

    pub fn mats(&self) -> &BellmanMatrices {
        &self.mats
    }

    pub fn num_agents(&self) -> usize {
        self.num_agents
    }

    pub fn feature_dim(&self) -> usize {
        self.mats.feature_dim()
    }

    pub fn stacked_len(&self) -> usize {
        self.num_agents * self.feature_dim()
    }

    pub fn mean_laplacian(&self) -> &LaplacianView {
        &self.mean_laplacian
    }

    /// The mean Laplacian Kronecker block **L** (x) I_q.
    pub fn mean_block(&self) -> &BlockLaplacian {
        &self.mean_block
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn boxes(&self) -> &BoxConstraints {
        &self.boxes
    }

    pub fn set_boxes(&mut self, boxes: BoxConstraints) {
        self.boxes = boxes;
    }

    /// Per-agent blocks PhiT D r_i stacked into one Nq vector.
    pub fn stacked_reward_projection(&self, rewards: &DVector<f64>) -> Result<DVector<f64>> {
        let s = self.mats.phi().nrows();
        let q = self.feature_dim();
        if rewards.len() != s * self.num_agents {
            return Err(Error::DimensionMismatch(format!(
                "stacked rewards have length {}, expected {}",
                rewards.len(),
                s * self.num_agents
            )));
        }
        let mut out = DVector::zeros(self.stacked_len());
        for i in 0..self.num_agents {
            let r = rewards.rows(i * s, s);
            let mut dst = out.rows_mut(i * q, q);
            self.mats.phi_t_d().mul_to(&r, &mut dst);
        }
        Ok(out)
    }

    fn check_iterate(&self, it: &StackedIterate) -> Result<()> {
        if it.len() != self.stacked_len() {
            return Err(Error::DimensionMismatch(format!(
                "iterate blocks have length {}, expected {}",
                it.len(),
                self.stacked_len()
            )));
        }
        Ok(())
    }

    /// T >= omega((kappa/2) eps, delta): iterations after which the averaged
    /// iterate's consensus penalty is below eps with probability 1 - delta.
    pub fn consensus_complexity(
        &self,
        epsilon: f64,
        delta: f64,
        alpha0: f64,
        c: f64,
    ) -> Result<SampleComplexity> {
        if self.kappa <= 0.0 {
            return Err(Error::DomainError(
                "consensus complexity needs kappa > 0".into(),
            ));
        }
        sample_complexity(0.5 * self.kappa * epsilon, delta, alpha0, c)
    }

    /// T >= omega(min(lmin,1)/(2 sqrt(lmax + 1)) eps, delta) for the squared
    /// (theta, v) error, where lmin/lmax come from the square of the q x q
    /// Gram matrix (its nonzero spectrum).
    pub fn error_complexity(
        &self,
        epsilon: f64,
        delta: f64,
        alpha0: f64,
        c: f64,
    ) -> Result<SampleComplexity> {
        let lmin = self.gram_eig_min * self.gram_eig_min;
        let lmax = self.gram_eig_max * self.gram_eig_max;
        let factor = lmin.min(1.0) / (2.0 * (lmax + 1.0).sqrt());
        sample_complexity(factor * epsilon, delta, alpha0, c)
    }
}

/// Value of the augmented Lagrangian at an iterate.
pub fn lagrangian_value(
    p: &SaddleProblem,
    it: &StackedIterate,
    rewards: &DVector<f64>,
) -> Result<f64> {
    p.check_iterate(it)?;
    let c_r = p.stacked_reward_projection(rewards)?;
    let g_theta = block_diag_apply_new(p.mats().gram(), &it.theta);
    let b_w = block_diag_apply_new(p.mats().b(), &it.w);
    let l_w = p.mean_block().apply(&it.w);

    let psi = 0.5 * g_theta.dot(&it.theta) - c_r.dot(&it.theta) + 0.5 * it.v.dot(&it.v);
    let coupling = it.theta.dot(&b_w) - it.v.dot(&l_w) - it.mu.dot(&l_w);
    let augmentation = -0.5 * p.kappa() * it.w.dot(&l_w);
    let regularization = 0.5 * p.rho() * (it.mu.dot(&it.mu) - it.w.dot(&it.w));
    Ok(psi + coupling + augmentation + regularization)
}

/// The four analytic gradients of the augmented Lagrangian.
pub fn exact_gradients(
    p: &SaddleProblem,
    it: &StackedIterate,
    rewards: &DVector<f64>,
) -> Result<Gradients> {
    p.check_iterate(it)?;
    let c_r = p.stacked_reward_projection(rewards)?;
    let l_w = p.mean_block().apply(&it.w);
    let l_v = p.mean_block().apply(&it.v);
    let l_mu = p.mean_block().apply(&it.mu);

    let mut theta = block_diag_apply_new(p.mats().gram(), &it.theta);
    theta -= &c_r;
    theta += block_diag_apply_new(p.mats().b(), &it.w);

    let v = &it.v - &l_w;
    let mu = p.rho() * &it.mu - &l_w;

    let bt = p.mats().b().transpose();
    let mut w = block_diag_apply_new(&bt, &it.theta);
    w -= &l_v;
    w -= &l_mu;
    w.axpy(-p.kappa(), &l_w, 1.0);
    w.axpy(-p.rho(), &it.w, 1.0);

    Ok(Gradients { theta, v, mu, w })
}

/// Residual of the mu stationarity equation L-bar mu = B-barT theta,
/// measuring membership of mu in the solution set of the KKT mu equation.
pub fn kkt_mu_residual(p: &SaddleProblem, it: &StackedIterate) -> Result<f64> {
    p.check_iterate(it)?;
    let bt = p.mats().b().transpose();
    let rhs = block_diag_apply_new(&bt, &it.theta);
    let lhs = p.mean_block().apply(&it.mu);
    Ok((lhs - rhs).amax())
}

/// The KKT point of the saddle problem.
///
/// With rho = 0 this is the closed form: w-bar = 1 (x) w*, v-bar = 0,
/// theta blocks G^{-1} PhiT D (r_avg - r_i), and the pseudo-inverse member of
/// the mu solution set. With rho > 0 the perturbed stationarity system is
/// assembled densely and solved directly.
pub fn kkt_point(p: &SaddleProblem, model: &MdpModel) -> Result<StackedIterate> {
    let q = p.feature_dim();
    let n = p.num_agents();
    if model.num_agents() != n {
        return Err(Error::DimensionMismatch(format!(
            "model has {} agents, problem has {n}",
            model.num_agents()
        )));
    }
    if p.rho() > 0.0 {
        return kkt_point_perturbed(p, model);
    }

    let w_star = exact_global_solution(p.mats(), model)?;
    let mut w = DVector::zeros(n * q);
    for i in 0..n {
        w.rows_mut(i * q, q).copy_from(&w_star);
    }

    // Stationarity in theta: G theta_i = PhiT D r_i - B w*, which after
    // substituting the projected Bellman equation collapses to
    // theta_i = G^{-1} PhiT D (r_i - r_avg).
    let avg = model.average_reward();
    let mut theta = DVector::zeros(n * q);
    for i in 0..n {
        let diff = model.agent_reward(i) - &avg;
        let rhs = p.mats().phi_t_d() * diff;
        let block = p.mats().gram_inv() * rhs;
        theta.rows_mut(i * q, q).copy_from(&block);
    }

    let pinv = laplacian_pseudoinverse(p.mean_laplacian())?;
    let pinv_block = BlockLaplacian::new(pinv, q)?;
    let bt = p.mats().b().transpose();
    let mu = pinv_block.apply(&block_diag_apply_new(&bt, &theta));

    StackedIterate::new(theta, DVector::zeros(n * q), mu, w)
}

fn kkt_point_perturbed(p: &SaddleProblem, model: &MdpModel) -> Result<StackedIterate> {
    let m = p.stacked_len();
    if m > DENSE_BLOCK_LIMIT {
        return Err(Error::DomainError(format!(
            "perturbed KKT solve assembles a dense {0}x{0} system; N*q must be <= {DENSE_BLOCK_LIMIT}",
            4 * m
        )));
    }
    let n = p.num_agents();
    let eye_n = DMatrix::<f64>::identity(n, n);
    let gbar = eye_n.kronecker(p.mats().gram());
    let bbar = eye_n.kronecker(p.mats().b());
    let lbar = p.mean_block().to_dense();
    let eye = DMatrix::<f64>::identity(m, m);

    let mut sys = DMatrix::<f64>::zeros(4 * m, 4 * m);
    sys.view_mut((0, 0), (m, m)).copy_from(&gbar);
    sys.view_mut((0, 3 * m), (m, m)).copy_from(&bbar);
    sys.view_mut((m, m), (m, m)).copy_from(&eye);
    sys.view_mut((m, 3 * m), (m, m)).copy_from(&(-&lbar));
    sys.view_mut((2 * m, 2 * m), (m, m))
        .copy_from(&(p.rho() * &eye));
    sys.view_mut((2 * m, 3 * m), (m, m)).copy_from(&(-&lbar));
    sys.view_mut((3 * m, 0), (m, m)).copy_from(&bbar.transpose());
    sys.view_mut((3 * m, m), (m, m)).copy_from(&(-&lbar));
    sys.view_mut((3 * m, 2 * m), (m, m)).copy_from(&(-&lbar));
    sys.view_mut((3 * m, 3 * m), (m, m))
        .copy_from(&(-p.kappa() * &lbar - p.rho() * &eye));

    let mut rhs = DVector::zeros(4 * m);
    rhs.rows_mut(0, m)
        .copy_from(&p.stacked_reward_projection(&model.stacked_rewards())?);

    let sol = sys.lu().solve(&rhs).ok_or(Error::SingularSystem)?;
    StackedIterate::new(
        sol.rows(0, m).into_owned(),
        sol.rows(m, m).into_owned(),
        sol.rows(2 * m, m).into_owned(),
        sol.rows(3 * m, m).into_owned(),
    )
}

/// Computes the analytic infinity-norm bounds on the saddle components from
/// sigma, xi, |S|, N, the feature spectrum, the projected Bellman residual of
/// the value function, and the mean Laplacian pseudo-inverse.
fn compute_solution_bounds(
    mats: &BellmanMatrices,
    mean: &LaplacianView,
    model: &MdpModel,
) -> Result<SolutionBounds> {
    let s = model.num_states() as f64;
    let n = model.num_agents() as f64;
    let sigma = model.sigma();
    let gamma = model.gamma();
    let xi = mats.xi();

    let phi = mats.phi();
    let phi_gram = phi.transpose() * phi;
    let lambda_min = phi_gram.symmetric_eigen().eigenvalues.min();
    if !(lambda_min > 0.0) {
        return Err(Error::SingularGram);
    }

    // J = (I - gamma P)^{-1} r_avg, the value function of the averaged reward.
    let sdim = model.num_states();
    let j = (DMatrix::identity(sdim, sdim) - gamma * model.transition())
        .lu()
        .solve(&model.average_reward())
        .ok_or(Error::SingularB)?;
    let proj_residual = mats.d_norm(&(mats.projector() * &j - &j));

    let w = (1.0 / (1.0 - gamma))
        * (s / lambda_min).sqrt()
        * (proj_residual / xi.sqrt() + sigma);
    let theta = 2.0 * sigma * s * (n / (xi * lambda_min)).sqrt();
    let pinv = laplacian_pseudoinverse(mean)?;
    let mu = matrix_inf_norm(&pinv) * matrix_inf_norm(phi).powi(2) * 2.0 * sigma * s * s
        * (n / (xi * lambda_min)).sqrt();
    // v* = 0; any nonnegative radius works. Matching the theta bound keeps
    // the boxes on one scale.
    let v = theta;

    Ok(SolutionBounds { theta, v, mu, w })
}

/// Public entry point mirroring the assembly-time bound computation.
pub fn solution_bounds(p: &SaddleProblem, model: &MdpModel) -> Result<SolutionBounds> {
    compute_solution_bounds(p.mats(), p.mean_laplacian(), model)
}

/// One inner box-QP solve, warm-restarted once from the achieved point when
/// the iteration cap is hit before the fixed-point tolerance.
fn solve_with_restart<F>(apply_a: &F, b: &DVector<f64>, radius: f64, lipschitz: f64) -> crate::qp::QpSolution
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    let first = solve_box_qp(apply_a, b, radius, lipschitz, GAP_TOL, GAP_ITER_CAP, None);
    if first.converged {
        return first;
    }
    solve_box_qp(
        apply_a,
        b,
        radius,
        lipschitz,
        GAP_TOL,
        GAP_ITER_CAP,
        Some(&first.z),
    )
}

/// The epsilon-saddle gap sup_w L(x-hat, w) - inf_x L(x, w-hat) over the
/// constraint boxes.
///
/// The v and mu inner problems are coordinate-separable and solved in closed
/// form; the theta block and (when kappa or rho is positive) the w block are
/// box QPs solved by projected gradient with Nesterov restarts.
pub fn saddle_gap(
    p: &SaddleProblem,
    candidate: &StackedIterate,
    rewards: &DVector<f64>,
) -> Result<f64> {
    p.check_iterate(candidate)?;
    if !p.boxes().contains(candidate) {
        return Err(Error::DomainError(
            "saddle-gap candidate lies outside the constraint boxes".into(),
        ));
    }
    let c_r = p.stacked_reward_projection(rewards)?;
    let boxes = p.boxes();
    let kappa = p.kappa();
    let rho = p.rho();

    // sup over w of L(x-hat, w) = psi(x-hat) + rho/2 |mu|^2
    //   + max_w [c_wT w - 0.5 wT (kappa Lbar + rho I) w].
    let g_theta = block_diag_apply_new(p.mats().gram(), &candidate.theta);
    let psi = 0.5 * g_theta.dot(&candidate.theta) - c_r.dot(&candidate.theta)
        + 0.5 * candidate.v.dot(&candidate.v);
    let x_const = psi + 0.5 * rho * candidate.mu.dot(&candidate.mu);

    let bt = p.mats().b().transpose();
    let mut c_w = block_diag_apply_new(&bt, &candidate.theta);
    c_w -= p.mean_block().apply(&candidate.v);
    c_w -= p.mean_block().apply(&candidate.mu);

    let w_lipschitz = kappa * p.laplacian_eig_max + rho;
    let w_apply = |z: &DVector<f64>| {
        let mut az = p.mean_block().apply(z);
        az.scale_mut(kappa);
        az.axpy(rho, z, 1.0);
        az
    };
    let w_neg = solve_with_restart(&w_apply, &(-&c_w), boxes.radius_w, w_lipschitz);
    let sup_w = x_const - w_neg.value;

    // inf over x of L(x, w-hat), separable across the three blocks.
    let l_w = p.mean_block().apply(&candidate.w);
    let w_const = -0.5 * kappa * candidate.w.dot(&l_w) - 0.5 * rho * candidate.w.dot(&candidate.w);

    // theta block: 0.5 thetaT Gbar theta + thetaT (Bbar w - c_r).
    let mut c_theta = block_diag_apply_new(p.mats().b(), &candidate.w);
    c_theta -= &c_r;
    let theta_apply = |z: &DVector<f64>| block_diag_apply_new(p.mats().gram(), z);
    let theta_sol = solve_with_restart(&theta_apply, &c_theta, boxes.radius_theta, p.gram_eig_max);

    // v block: sum_j [0.5 v_j^2 - (Lbar w)_j v_j], clamped coordinatewise.
    let mut v_min = 0.0;
    for &c in l_w.iter() {
        let v = c.clamp(-boxes.radius_v, boxes.radius_v);
        v_min += 0.5 * v * v - c * v;
    }

    // mu block: sum_j [rho/2 mu_j^2 - (Lbar w)_j mu_j].
    let mut mu_min = 0.0;
    for &c in l_w.iter() {
        let m = if rho > 0.0 {
            (c / rho).clamp(-boxes.radius_mu, boxes.radius_mu)
        } else if c > 0.0 {
            boxes.radius_mu
        } else {
            -boxes.radius_mu
        };
        mu_min += 0.5 * rho * m * m - c * m;
    }

    let inf_x = theta_sol.value + v_min + mu_min + w_const;
    // The true gap is nonnegative by construction; inner-solver roundoff can
    // leave a tiny negative residue at the exact saddle.
    Ok((sup_w - inf_x).max(0.0))
}

/// The Bernstein-based iteration requirements of the finite-time analysis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleComplexity {
    pub omega1: f64,
    pub omega2: f64,
    pub t_required: f64,
}

/// Omega_1 = 8 C^2 ((a0+2)^2 C^2 + (a0+4) eps / 6) / eps^2 * ln(1/delta),
/// Omega_2 = 4 C^4 (2/a0 + a0)^2 / eps^2, and their maximum.
pub fn sample_complexity(
    epsilon: f64,
    delta: f64,
    alpha0: f64,
    c: f64,
) -> Result<SampleComplexity> {
    if !(epsilon > 0.0) {
        return Err(Error::DomainError(format!("epsilon = {epsilon} must be > 0")));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::DomainError(format!(
            "delta = {delta} must lie in (0,1)"
        )));
    }
    if !(alpha0 > 0.0) {
        return Err(Error::DomainError(format!("alpha0 = {alpha0} must be > 0")));
    }
    if !(c > 0.0) {
        return Err(Error::DomainError(format!("C = {c} must be > 0")));
    }
    let c2 = c * c;
    let omega1 = 8.0 * c2 * ((alpha0 + 2.0).powi(2) * c2 + (alpha0 + 4.0) * epsilon / 6.0)
        / (epsilon * epsilon)
        * (1.0 / delta).ln();
    let omega2 = 4.0 * c2 * c2 * (2.0 / alpha0 + alpha0).powi(2) / (epsilon * epsilon);
    Ok(SampleComplexity {
        omega1,
        omega2,
        t_required: omega1.max(omega2),
    })
}
