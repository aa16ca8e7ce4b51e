//! Built-in scenario presets.

use nalgebra::{DMatrix, DVector};

use crate::engine::StepSizeSchedule;
use crate::error::{Error, Result};
use crate::graph::GraphDistribution;
use crate::mdp::{FeatureMap, MdpModel};

/// Per-preset run defaults, overridable from the experiment spec.
#[derive(Debug, Clone, PartialEq)]
pub struct PresetDefaults {
    pub kappa: f64,
    pub rho: f64,
    pub iterations: usize,
    pub schedule: StepSizeSchedule,
    /// Grid dimensions for the per-agent value heatmap export, when the
    /// state space is a grid.
    pub heatmap: Option<(usize, usize)>,
}

pub const PRESET_NAMES: [&str; 4] = ["chain4", "gridworld", "single-agent", "toy2x2"];

type Preset = (MdpModel, FeatureMap, GraphDistribution, PresetDefaults);

/// Resolves a named preset into its model, features, communication graph,
/// and defaults.
pub fn preset(name: &str) -> Result<Preset> {
    match name {
        "chain4" => chain4(),
        "gridworld" => gridworld(),
        "single-agent" => single_agent(),
        "toy2x2" => toy2x2(),
        other => Err(Error::UnknownPreset(other.to_string())),
    }
}

fn chain4_transition() -> DMatrix<f64> {
    DMatrix::from_row_slice(
        4,
        4,
        &[
            0.1, 0.5, 0.2, 0.2, //
            0.5, 0.0, 0.1, 0.4, //
            0.0, 0.9, 0.1, 0.0, //
            0.2, 0.1, 0.1, 0.6,
        ],
    )
}

/// phi(s) = [exp(-s^2), exp(-(s-4)^2)] with states numbered 1..4.
fn chain4_features() -> Result<FeatureMap> {
    let phi = DMatrix::from_fn(4, 2, |s, j| {
        let x = (s + 1) as f64;
        if j == 0 {
            (-x * x).exp()
        } else {
            (-(x - 4.0) * (x - 4.0)).exp()
        }
    });
    FeatureMap::new(phi)
}

fn chain4_defaults() -> Result<PresetDefaults> {
    Ok(PresetDefaults {
        kappa: 1.0,
        rho: 0.0,
        iterations: 50_000,
        schedule: StepSizeSchedule::inverse_sqrt(10.0, 100.0)?,
        heatmap: None,
    })
}

/// Four-state chain with five agents; only agent 1 observes a reward, at the
/// last state. Gaussian bump features centered at the chain ends. The
/// five-node communication graph is a ring with one chord whose edges
/// activate independently with probability 1/2 each step; edge set and
/// activation probability are config choices.
fn chain4() -> Result<Preset> {
    let mut rewards = vec![DVector::zeros(4); 5];
    rewards[0] = DVector::from_row_slice(&[0.0, 0.0, 0.0, 50.0]);
    let model = MdpModel::new(chain4_transition(), rewards, 50.0, 0.8)?;
    let feats = chain4_features()?;
    let dist = GraphDistribution::uniform(
        5,
        &[(0, 1), (1, 2), (2, 3), (3, 4), (4, 0), (0, 2)],
        0.5,
    )?;
    Ok((model, feats, dist, chain4_defaults()?))
}

/// chain4 reduced to one agent (plain GTD, no communication).
fn single_agent() -> Result<Preset> {
    let rewards = vec![DVector::from_row_slice(&[0.0, 0.0, 0.0, 50.0])];
    let model = MdpModel::new(chain4_transition(), rewards, 50.0, 0.8)?;
    let feats = chain4_features()?;
    let dist = GraphDistribution::bernoulli(1, vec![])?;
    Ok((model, feats, dist, chain4_defaults()?))
}

/// Hand-checkable 2-state, 2-agent, one-feature instance used by the
/// worksheet tests.
fn toy2x2() -> Result<Preset> {
    let transition = DMatrix::from_row_slice(2, 2, &[0.5, 0.5, 0.5, 0.5]);
    let rewards = vec![
        DVector::from_row_slice(&[1.0, 0.0]),
        DVector::from_row_slice(&[0.0, 1.0]),
    ];
    let model = MdpModel::new(transition, rewards, 1.0, 0.5)?;
    let feats = FeatureMap::new(DMatrix::from_row_slice(2, 1, &[1.0, 2.0]))?;
    let dist = GraphDistribution::uniform(2, &[(0, 1)], 1.0)?;
    Ok((
        model,
        feats,
        dist,
        PresetDefaults {
            kappa: 1.0,
            rho: 0.0,
            iterations: 10_000,
            schedule: StepSizeSchedule::inverse_sqrt(1.0, 1.0)?,
            heatmap: None,
        },
    ))
}

pub const GRID_SIDE: usize = 20;

/// Lazy random walk on the 20x20 grid: stay and the four compass moves each
/// carry probability 1/5, with off-grid moves folded into staying. The
/// kernel is symmetric, so the stationary distribution is exactly uniform.
fn grid_transition() -> DMatrix<f64> {
    let n = GRID_SIDE * GRID_SIDE;
    let mut p = DMatrix::zeros(n, n);
    let idx = |r: usize, c: usize| r * GRID_SIDE + c;
    for r in 0..GRID_SIDE {
        for c in 0..GRID_SIDE {
            let s = idx(r, c);
            let mut stay = 1.0 / 5.0;
            let mut neighbors = Vec::with_capacity(4);
            if r > 0 {
                neighbors.push(idx(r - 1, c));
            }
            if r + 1 < GRID_SIDE {
                neighbors.push(idx(r + 1, c));
            }
            if c > 0 {
                neighbors.push(idx(r, c - 1));
            }
            if c + 1 < GRID_SIDE {
                neighbors.push(idx(r, c + 1));
            }
            stay += (4 - neighbors.len()) as f64 / 5.0;
            p[(s, s)] = stay;
            for t in neighbors {
                p[(s, t)] = 1.0 / 5.0;
            }
        }
    }
    p
}

/// Three-agent grid-world patrol: tabular features, gamma = 0.5, reward 100
/// on three disjoint 3x3 regions (one per agent), and a complete three-node
/// communication graph whose edges activate with probability 1/2 (a stand-in
/// for intermittent proximity between patrolling robots).
fn gridworld() -> Result<Preset> {
    let n = GRID_SIDE * GRID_SIDE;
    let idx = |r: usize, c: usize| r * GRID_SIDE + c;
    let region = |rows: std::ops::Range<usize>, cols: std::ops::Range<usize>| {
        let mut r = DVector::zeros(n);
        for row in rows {
            for col in cols.clone() {
                r[idx(row, col)] = 100.0;
            }
        }
        r
    };
    let rewards = vec![
        region(3..6, 3..6),
        region(3..6, 14..17),
        region(14..17, 8..11),
    ];
    let model = MdpModel::new(grid_transition(), rewards, 100.0, 0.5)?;
    let feats = FeatureMap::identity(n);
    let dist = GraphDistribution::uniform(3, &[(0, 1), (1, 2), (0, 2)], 0.5)?;
    Ok((
        model,
        feats,
        dist,
        PresetDefaults {
            kappa: 1.0,
            rho: 0.0,
            iterations: 50_000,
            schedule: StepSizeSchedule::inverse_sqrt(10.0, 100.0)?,
            heatmap: Some((GRID_SIDE, GRID_SIDE)),
        },
    ))
}
