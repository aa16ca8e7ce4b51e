//! The stochastic engine: per-iteration transition and graph sampling,
//! synchronous per-agent primal/dual half-steps with projection, step-size
//! schedules, and recursive iterate averaging.

use nalgebra::DVector;
use rand::{Rng, RngExt};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{sample_graph, GraphDistribution, LaplacianView};
use crate::mdp::{BellmanMatrices, FeatureMap, MdpModel};
use crate::saddle::{
    kkt_point, lagrangian_value, project_boxes, BoxConstraints, Gradients, SaddleProblem,
    StackedIterate,
};

/// Records full per-iteration traces up to this many rows; longer runs are
/// strided.
const FULL_TRACE_LIMIT: usize = 100_000;
/// Per-agent w blocks are embedded in trace rows only for stacked dimensions
/// up to this size.
const W_TRACE_LIMIT: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScheduleKind {
    /// alpha_k = alpha0 / sqrt(k + beta), the rate analyzed for the averaged
    /// iterates.
    InverseSqrt,
    /// alpha_k = alpha0 / (k + beta), square-summable for last-iterate
    /// stochastic approximation.
    RobbinsMonro,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepSizeSchedule {
    pub kind: ScheduleKind,
    pub alpha0: f64,
    pub beta: f64,
}

impl StepSizeSchedule {
    pub fn inverse_sqrt(alpha0: f64, beta: f64) -> Result<Self> {
        Self::new(ScheduleKind::InverseSqrt, alpha0, beta)
    }

    pub fn robbins_monro(alpha0: f64, beta: f64) -> Result<Self> {
        Self::new(ScheduleKind::RobbinsMonro, alpha0, beta)
    }

    pub fn new(kind: ScheduleKind, alpha0: f64, beta: f64) -> Result<Self> {
        if !(alpha0 > 0.0) {
            return Err(Error::DomainError(format!("alpha0 = {alpha0} must be > 0")));
        }
        if !(beta > 0.0) {
            return Err(Error::DomainError(format!("beta = {beta} must be > 0")));
        }
        Ok(Self { kind, alpha0, beta })
    }

    pub fn alpha(&self, k: usize) -> f64 {
        match self.kind {
            ScheduleKind::InverseSqrt => self.alpha0 / (k as f64 + self.beta).sqrt(),
            ScheduleKind::RobbinsMonro => self.alpha0 / (k as f64 + self.beta),
        }
    }
}

/// Reward realization noise. Realizations are clamped into [0, sigma], so the
/// conditional mean is exact whenever the noise support fits inside the
/// reward range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RewardNoise {
    None,
    BoundedUniform { half_width: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutputSelect {
    Averaged,
    Last,
    Both,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub total_iterations: usize,
    pub kappa: f64,
    pub rho: f64,
    pub schedule: StepSizeSchedule,
    pub seed: u64,
    pub reward_noise: RewardNoise,
    pub output: OutputSelect,
    /// Scenario 2: every agent samples its own chain independently.
    pub independent_chains: bool,
    /// Explicit trace stride; `None` strides automatically past the full
    /// trace limit.
    pub stride: Option<usize>,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.total_iterations == 0 {
            return Err(Error::DomainError("total_iterations must be >= 1".into()));
        }
        if !(self.kappa >= 0.0) || !(self.rho >= 0.0) {
            return Err(Error::DomainError(
                "kappa and rho must be nonnegative".into(),
            ));
        }
        if let RewardNoise::BoundedUniform { half_width } = self.reward_noise {
            if !(half_width >= 0.0) {
                return Err(Error::DomainError(format!(
                    "reward noise half-width {half_width} must be >= 0"
                )));
            }
        }
        if self.stride == Some(0) {
            return Err(Error::DomainError("trace stride must be >= 1".into()));
        }
        Ok(())
    }

    pub fn effective_stride(&self) -> usize {
        self.stride
            .unwrap_or_else(|| self.total_iterations.div_ceil(FULL_TRACE_LIMIT).max(1))
    }
}

/// One synchronous draw: per-agent (s, s') pairs and reward realizations.
/// Under the shared-chain scenario all agents carry the same pair.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionSample {
    pub states: Vec<(usize, usize)>,
    pub rewards: Vec<f64>,
}

fn draw_categorical<R: Rng>(weights: impl Iterator<Item = f64>, rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = 0;
    for (idx, w) in weights.enumerate() {
        acc += w;
        last = idx;
        if u < acc {
            return idx;
        }
    }
    last
}

fn realize_reward<R: Rng>(expected: f64, sigma: f64, noise: RewardNoise, rng: &mut R) -> f64 {
    match noise {
        RewardNoise::None => expected,
        RewardNoise::BoundedUniform { half_width } => {
            let u: f64 = rng.random_range(-half_width..=half_width);
            (expected + u).clamp(0.0, sigma)
        }
    }
}

/// Samples s from the stationary distribution, s' from row s of the chain,
/// and a reward realization per agent with conditional mean equal to the
/// stored expected reward of the sampled current state.
///
/// Draw order is fixed (s, then s', then agent rewards in index order; under
/// independent chains the whole triple is drawn agent by agent), so equal
/// seeds reproduce bit-identical streams.
pub fn sample_transition<R: Rng>(
    model: &MdpModel,
    mats: &BellmanMatrices,
    noise: RewardNoise,
    independent_chains: bool,
    rng: &mut R,
) -> TransitionSample {
    let n_agents = model.num_agents();
    let d = mats.stationary();
    let p = model.transition();
    let mut states = Vec::with_capacity(n_agents);
    let mut rewards = Vec::with_capacity(n_agents);
    if independent_chains {
        for i in 0..n_agents {
            let s = draw_categorical(d.iter().copied(), rng);
            let s_next = draw_categorical(p.row(s).iter().copied(), rng);
            states.push((s, s_next));
            rewards.push(realize_reward(
                model.agent_reward(i)[s],
                model.sigma(),
                noise,
                rng,
            ));
        }
    } else {
        let s = draw_categorical(d.iter().copied(), rng);
        let s_next = draw_categorical(p.row(s).iter().copied(), rng);
        for i in 0..n_agents {
            states.push((s, s_next));
            rewards.push(realize_reward(
                model.agent_reward(i)[s],
                model.sigma(),
                noise,
                rng,
            ));
        }
    }
    TransitionSample { states, rewards }
}

/// The unbiased stochastic estimates of the four Lagrangian gradients at
/// `state`, built from one transition sample and one sampled graph. Oriented
/// like `exact_gradients` (the w component is the ascent direction's
/// gradient, not its negation).
pub fn stochastic_direction(
    state: &StackedIterate,
    sample: &TransitionSample,
    graph: &LaplacianView,
    feats: &FeatureMap,
    gamma: f64,
    kappa: f64,
    rho: f64,
) -> Result<Gradients> {
    let n_agents = sample.states.len();
    let q = feats.dim();
    if state.len() != n_agents * q {
        return Err(Error::DimensionMismatch(format!(
            "iterate length {} does not match {n_agents} agents x {q} features",
            state.len()
        )));
    }
    if graph.num_agents() != n_agents || sample.rewards.len() != n_agents {
        return Err(Error::DimensionMismatch(
            "sample/graph agent counts disagree".into(),
        ));
    }

    let m = n_agents * q;
    let mut l_w = DVector::zeros(m);
    let mut l_v = DVector::zeros(m);
    let mut l_mu = DVector::zeros(m);
    graph.block_row_apply(&state.w, q, &mut l_w);
    graph.block_row_apply(&state.v, q, &mut l_v);
    graph.block_row_apply(&state.mu, q, &mut l_mu);

    let mut theta = DVector::zeros(m);
    let mut v = DVector::zeros(m);
    let mut mu = DVector::zeros(m);
    let mut w = DVector::zeros(m);

    for i in 0..n_agents {
        let (s, s_next) = sample.states[i];
        let phi = feats.feature(s);
        let phi_next = feats.feature(s_next);
        let th_i = state.theta.rows(i * q, q);
        let w_i = state.w.rows(i * q, q);

        let phi_th = phi.dot(&th_i);
        let phi_w = phi.dot(&w_i);
        let phi_next_w = phi_next.dot(&w_i);
        let td_scale = phi_th + phi_w - gamma * phi_next_w - sample.rewards[i];

        // theta: phi (phiT theta + phiT w - gamma phi'T w - r-hat)
        let mut th_out = theta.rows_mut(i * q, q);
        th_out.axpy(td_scale, &phi, 0.0);

        // w: (phi - gamma phi') phiT theta - (L v)_i - (L mu)_i
        //    - kappa (L w)_i - rho w_i
        let mut w_out = w.rows_mut(i * q, q);
        w_out.axpy(phi_th, &phi, 0.0);
        w_out.axpy(-gamma * phi_th, &phi_next, 1.0);
        w_out.axpy(-1.0, &l_v.rows(i * q, q), 1.0);
        w_out.axpy(-1.0, &l_mu.rows(i * q, q), 1.0);
        w_out.axpy(-kappa, &l_w.rows(i * q, q), 1.0);
        w_out.axpy(-rho, &w_i, 1.0);

        // v: v_i - (L w)_i
        let mut v_out = v.rows_mut(i * q, q);
        v_out.axpy(1.0, &state.v.rows(i * q, q), 0.0);
        v_out.axpy(-1.0, &l_w.rows(i * q, q), 1.0);

        // mu: rho mu_i - (L w)_i
        let mut mu_out = mu.rows_mut(i * q, q);
        mu_out.axpy(rho, &state.mu.rows(i * q, q), 0.0);
        mu_out.axpy(-1.0, &l_w.rows(i * q, q), 1.0);
    }

    Ok(Gradients { theta, v, mu, w })
}

/// One synchronous Jacobi-style update of all agents from the pre-step
/// values: descent in (theta, v, mu), ascent in w, then projection onto the
/// boxes.
#[allow(clippy::too_many_arguments)]
pub fn dgtd_step(
    state: &StackedIterate,
    sample: &TransitionSample,
    graph: &LaplacianView,
    feats: &FeatureMap,
    gamma: f64,
    alpha: f64,
    kappa: f64,
    rho: f64,
    boxes: &BoxConstraints,
) -> Result<StackedIterate> {
    if !(alpha > 0.0) {
        return Err(Error::DomainError(format!("step size {alpha} must be > 0")));
    }
    let dir = stochastic_direction(state, sample, graph, feats, gamma, kappa, rho)?;
    let raw = StackedIterate {
        theta: &state.theta - alpha * &dir.theta,
        v: &state.v - alpha * &dir.v,
        mu: &state.mu - alpha * &dir.mu,
        w: &state.w + alpha * &dir.w,
    };
    Ok(project_boxes(boxes, &raw))
}

/// One per-iteration metric row. The iterate columns refer to the post-update
/// iterate of iteration k; the `avg_` fields track the running average.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub k: usize,
    pub consensus_penalty: f64,
    pub theta_err: f64,
    pub v_norm: f64,
    pub w_err: f64,
    pub gap_proxy: f64,
    pub w_agents: Vec<f64>,
    pub avg_consensus_penalty: f64,
    pub avg_gap_proxy: f64,
}

/// Full output of one engine run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunTrace {
    pub records: Vec<TraceRecord>,
    pub averaged: StackedIterate,
    pub last: StackedIterate,
    /// Max observed stochastic gradient norm (the constant C of the
    /// finite-time analysis, measured empirically).
    pub empirical_c: f64,
    pub iterations: usize,
    pub stride: usize,
    pub seed: u64,
    pub output: OutputSelect,
}

impl RunTrace {
    pub fn record_at_or_before(&self, k: usize) -> Option<&TraceRecord> {
        self.records.iter().rev().find(|r| r.k <= k)
    }
}

/// Executes T iterations of the stochastic primal-dual recursion: sample a
/// graph, sample transitions, step all agents synchronously, project, and
/// fold the iterate into the running average. Identical seeds produce
/// bit-identical traces.
pub fn run(
    problem: &SaddleProblem,
    model: &MdpModel,
    feats: &FeatureMap,
    dist: &GraphDistribution,
    cfg: &RunConfig,
) -> Result<RunTrace> {
    cfg.validate()?;
    if feats.dim() != problem.feature_dim() || dist.num_agents() != problem.num_agents() {
        return Err(Error::DimensionMismatch(
            "problem, features, and graph disagree on dimensions".into(),
        ));
    }
    if cfg.kappa != problem.kappa() || cfg.rho != problem.rho() {
        return Err(Error::DomainError(format!(
            "run config (kappa = {}, rho = {}) disagrees with the assembled problem (kappa = {}, rho = {})",
            cfg.kappa,
            cfg.rho,
            problem.kappa(),
            problem.rho()
        )));
    }
    let star = kkt_point(problem, model)?;
    if !problem.boxes().audit(&star) {
        return Err(Error::DomainError(
            "constraint boxes fail the saddle-containment audit".into(),
        ));
    }
    let rewards = model.stacked_rewards();
    let boxes = problem.boxes();
    let gamma = model.gamma();
    let m = problem.stacked_len();
    let stride = cfg.effective_stride();
    let record_w = m <= W_TRACE_LIMIT;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut state = StackedIterate::zeros(m);
    let mut avg = StackedIterate::zeros(m);
    let mut empirical_c: f64 = 0.0;
    let mut records = Vec::new();

    let gap_proxy = |point: &StackedIterate| -> Result<f64> {
        let x_at_w_star = StackedIterate {
            theta: point.theta.clone(),
            v: point.v.clone(),
            mu: point.mu.clone(),
            w: star.w.clone(),
        };
        let star_at_w = StackedIterate {
            theta: star.theta.clone(),
            v: star.v.clone(),
            mu: star.mu.clone(),
            w: point.w.clone(),
        };
        Ok(lagrangian_value(problem, &x_at_w_star, &rewards)?
            - lagrangian_value(problem, &star_at_w, &rewards)?)
    };

    for k in 0..cfg.total_iterations {
        let graph = sample_graph(dist, &mut rng);
        let sample = sample_transition(
            model,
            problem.mats(),
            cfg.reward_noise,
            cfg.independent_chains,
            &mut rng,
        );
        let dir = stochastic_direction(&state, &sample, &graph, feats, gamma, cfg.kappa, cfg.rho)?;

        let x_norm = (dir.theta.norm_squared() + dir.v.norm_squared() + dir.mu.norm_squared())
            .sqrt();
        empirical_c = empirical_c.max(x_norm).max(dir.w.norm());

        let alpha = cfg.schedule.alpha(k);
        let raw = StackedIterate {
            theta: &state.theta - alpha * &dir.theta,
            v: &state.v - alpha * &dir.v,
            mu: &state.mu - alpha * &dir.mu,
            w: &state.w + alpha * &dir.w,
        };
        state = project_boxes(boxes, &raw);

        // Recursive average of the post-update iterates x_1 .. x_T.
        let weight = 1.0 / (k + 1) as f64;
        avg.theta.axpy(weight, &(&state.theta - &avg.theta), 1.0);
        avg.v.axpy(weight, &(&state.v - &avg.v), 1.0);
        avg.mu.axpy(weight, &(&state.mu - &avg.mu), 1.0);
        avg.w.axpy(weight, &(&state.w - &avg.w), 1.0);

        if k % stride == 0 || k + 1 == cfg.total_iterations {
            let w_agents = if record_w {
                state.w.iter().copied().collect()
            } else {
                Vec::new()
            };
            records.push(TraceRecord {
                k,
                consensus_penalty: problem.mean_block().quadratic_form(&state.w),
                theta_err: (&state.theta - &star.theta).norm_squared(),
                v_norm: state.v.norm_squared(),
                w_err: (&state.w - &star.w).norm_squared(),
                gap_proxy: gap_proxy(&state)?,
                w_agents,
                avg_consensus_penalty: problem.mean_block().quadratic_form(&avg.w),
                avg_gap_proxy: gap_proxy(&avg)?,
            });
        }
    }

    Ok(RunTrace {
        records,
        averaged: avg,
        last: state,
        empirical_c,
        iterations: cfg.total_iterations,
        stride,
        seed: cfg.seed,
        output: cfg.output,
    })
}
