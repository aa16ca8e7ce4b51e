//! Distributed gradient temporal-difference (DGTD) policy evaluation for
//! multi-agent MDPs, formulated as a stochastic primal-dual saddle-point
//! method over random communication graphs.
//!
//! The crate is organized around the pipeline:
//!
//! - [`mdp`]: the policy-induced chain, feature maps, the projected Bellman
//!   operator, and the closed-form global solution w*.
//! - [`graph`]: i.i.d. random undirected communication graphs, Laplacians,
//!   the mean-connectivity audit, and the Laplacian pseudo-inverse.
//! - [`saddle`]: the augmented Lagrangian, its exact gradients and KKT
//!   point, solution bounds, constraint boxes, the epsilon-saddle gap, and
//!   the sample-complexity calculator.
//! - [`engine`]: the stochastic primal-dual recursion itself (per-agent
//!   sampling, synchronous half-steps, projections, iterate averaging).
//! - [`oracle`]: independent verification paths (deterministic primal-dual
//!   iteration, dense minimum-norm KKT solve, finite differences).
//! - [`harness`]: scenario presets, the TOML experiment spec, multi-seed
//!   orchestration, and CSV/JSON export.

// Validation guards use `!(x > 0.0)` so NaN inputs are rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![forbid(unsafe_code)]

pub mod engine;
pub mod error;
pub mod graph;
pub mod harness;
pub mod mdp;
pub mod oracle;
mod qp;
pub mod saddle;

pub use error::{Error, Result};

/// Deterministic random instance generators shared by the test suites.
#[doc(hidden)]
pub mod testutil {
    use nalgebra::{DMatrix, DVector};
    use rand::{Rng, RngExt};

    use crate::graph::GraphDistribution;
    use crate::mdp::{FeatureMap, MdpModel};

    /// Random ergodic chain (all transition entries positive) with rewards
    /// uniform in [0, sigma] and a discount drawn from [0.4, 0.9].
    pub fn random_model<R: Rng>(
        rng: &mut R,
        num_states: usize,
        num_agents: usize,
        sigma: f64,
    ) -> MdpModel {
        let mut p = DMatrix::zeros(num_states, num_states);
        for s in 0..num_states {
            let mut row: Vec<f64> = (0..num_states)
                .map(|_| rng.random_range(0.05..1.0))
                .collect();
            let total: f64 = row.iter().sum();
            for x in row.iter_mut() {
                *x /= total;
            }
            // Renormalize exactly so the row-sum validation cannot trip.
            let correction: f64 = 1.0 - row.iter().sum::<f64>();
            row[num_states - 1] += correction;
            for (s2, x) in row.iter().enumerate() {
                p[(s, s2)] = *x;
            }
        }
        let rewards = (0..num_agents)
            .map(|_| DVector::from_fn(num_states, |_, _| rng.random_range(0.0..sigma)))
            .collect();
        let gamma = rng.random_range(0.4..0.9);
        MdpModel::new(p, rewards, sigma, gamma).expect("random model is valid")
    }

    /// Random full-column-rank feature matrix with entries in [-1, 1].
    pub fn random_features<R: Rng>(rng: &mut R, num_states: usize, q: usize) -> FeatureMap {
        loop {
            let phi = DMatrix::from_fn(num_states, q, |_, _| rng.random_range(-1.0..1.0));
            if let Ok(f) = FeatureMap::new(phi) {
                return f;
            }
        }
    }

    /// Random connected Bernoulli graph: a spanning path plus random extra
    /// edges, each with activation probability in [0.5, 1].
    pub fn random_connected_graph<R: Rng>(rng: &mut R, num_agents: usize) -> GraphDistribution {
        let mut edges: Vec<(usize, usize, f64)> = Vec::new();
        for i in 1..num_agents {
            edges.push((i - 1, i, 1.0));
        }
        for i in 0..num_agents {
            for j in (i + 2)..num_agents {
                if rng.random::<f64>() < 0.4 {
                    edges.push((i, j, rng.random_range(0.5..1.0)));
                }
            }
        }
        GraphDistribution::bernoulli(num_agents, edges).expect("valid random graph")
    }
}
