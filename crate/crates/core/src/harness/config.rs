//! The experiment spec document: a TOML file with a scenario (preset name or
//! inline matrices, row-major), run overrides, seeds, report requests, and
//! optional pass/fail thresholds.

use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::engine::{OutputSelect, RewardNoise, StepSizeSchedule};
use crate::error::{Error, Result};
use crate::graph::GraphDistribution;
use crate::mdp::{FeatureMap, MdpModel};

use super::presets::{preset, PresetDefaults};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub scenario: ScenarioSpec,
    #[serde(default, skip_serializing_if = "RunSection::is_empty")]
    pub run: RunSection,
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub report: ReportSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub thresholds: Option<ThresholdSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub features: Option<FeaturesSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub graph: Option<GraphSpec>,
}

impl ScenarioSpec {
    pub fn from_preset(name: &str) -> Self {
        Self {
            preset: Some(name.to_string()),
            model: None,
            features: None,
            graph: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    /// Row-major transition matrix.
    pub transition: Vec<Vec<f64>>,
    /// One expected-reward row per agent.
    pub rewards: Vec<Vec<f64>>,
    pub sigma: f64,
    pub gamma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeaturesSpec {
    /// Row-major |S| x q feature matrix.
    pub phi: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphSpec {
    pub agents: usize,
    /// Inline weighted edge list `[i, j, p]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edges: Option<Vec<(usize, usize, f64)>>,
    /// Adjacency list file with one `i j p` line per edge.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub iterations: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kappa: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub schedule: Option<StepSizeSchedule>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reward_noise: Option<RewardNoise>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output: Option<OutputSelect>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub independent_chains: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stride: Option<usize>,
    /// Box radii as a multiple of the analytic solution bounds.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub box_safety: Option<f64>,
}

impl RunSection {
    pub fn is_empty(&self) -> bool {
        self == &Self::default()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportSection {
    pub trace_csv: bool,
    pub summary_json: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub complexity: Option<ComplexityRequest>,
    /// Overrides the preset's heatmap grid, e.g. `[20, 20]`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub heatmap: Option<(usize, usize)>,
}

impl Default for ReportSection {
    fn default() -> Self {
        Self {
            trace_csv: true,
            summary_json: true,
            complexity: None,
            heatmap: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComplexityRequest {
    pub epsilon: f64,
    pub delta: f64,
    /// Defaults to the run schedule's alpha0.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha0: Option<f64>,
}

/// Pass/fail gates evaluated over the per-seed outcomes; the process exit
/// code reflects them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ThresholdSection {
    /// Max pairwise distance of averaged w blocks, relative to 1 + |w*|_inf.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub consensus_rel: Option<f64>,
    /// Max block error |w_i - w*|_inf, relative to 1 + |w*|_inf.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub solution_rel: Option<f64>,
    /// Fraction of seeds that must pass each relative gate.
    pub min_pass_fraction: f64,
    /// Require the averaged consensus penalty at T to undercut its value at
    /// T/10, in every seed.
    pub require_penalty_decrease: bool,
}

impl Default for ThresholdSection {
    fn default() -> Self {
        Self {
            consensus_rel: None,
            solution_rel: None,
            min_pass_fraction: 0.8,
            require_penalty_decrease: false,
        }
    }
}

/// A fully resolved scenario: concrete model, features, graph, and run
/// defaults after preset lookup and overrides.
#[derive(Debug, Clone)]
pub struct ResolvedScenario {
    pub preset_name: Option<String>,
    pub model: MdpModel,
    pub features: FeatureMap,
    pub graph: GraphDistribution,
    pub defaults: PresetDefaults,
    pub box_safety: f64,
}

pub fn load_spec(path: &Path) -> Result<ExperimentSpec> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    parse_spec(&text)
}

pub fn parse_spec(text: &str) -> Result<ExperimentSpec> {
    let spec: ExperimentSpec =
        toml::from_str(text).map_err(|e| Error::Config(format!("TOML parse error: {e}")))?;
    if spec.seeds.is_empty() {
        return Err(Error::Config("at least one seed is required".into()));
    }
    Ok(spec)
}

pub fn spec_to_toml(spec: &ExperimentSpec) -> Result<String> {
    toml::to_string_pretty(spec).map_err(|e| Error::Config(format!("TOML serialize error: {e}")))
}

fn matrix_from_rows(rows: &[Vec<f64>], what: &str) -> Result<DMatrix<f64>> {
    if rows.is_empty() {
        return Err(Error::Config(format!("{what}: no rows")));
    }
    let cols = rows[0].len();
    if cols == 0 || rows.iter().any(|r| r.len() != cols) {
        return Err(Error::Config(format!("{what}: ragged or empty rows")));
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    Ok(DMatrix::from_row_slice(rows.len(), cols, &flat))
}

/// Parses the `i j p` adjacency list format; blank lines and `#` comments
/// are skipped.
pub fn parse_graph_file(path: &Path) -> Result<Vec<(usize, usize, f64)>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    let mut edges = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let parts: Vec<&str> = line.split_whitespace().collect();
        if parts.len() != 3 {
            return Err(Error::Config(format!(
                "{}:{}: expected `i j p`, got '{line}'",
                path.display(),
                lineno + 1
            )));
        }
        let i = parts[0]
            .parse::<usize>()
            .map_err(|e| Error::Config(format!("line {}: {e}", lineno + 1)))?;
        let j = parts[1]
            .parse::<usize>()
            .map_err(|e| Error::Config(format!("line {}: {e}", lineno + 1)))?;
        let p = parts[2]
            .parse::<f64>()
            .map_err(|e| Error::Config(format!("line {}: {e}", lineno + 1)))?;
        edges.push((i, j, p));
    }
    Ok(edges)
}

/// Resolves the scenario section, relative paths interpreted against
/// `base_dir`.
pub fn resolve_scenario(spec: &ExperimentSpec, base_dir: &Path) -> Result<ResolvedScenario> {
    let scenario = &spec.scenario;
    let (preset_name, model, features, graph, mut defaults) = match (&scenario.preset, &scenario.model) {
        (Some(name), None) => {
            if scenario.features.is_some() || scenario.graph.is_some() {
                return Err(Error::Config(
                    "scenario: a preset cannot be mixed with inline sections".into(),
                ));
            }
            let (m, f, g, d) = preset(name)?;
            (Some(name.clone()), m, f, g, d)
        }
        (None, Some(model_spec)) => {
            let features_spec = scenario.features.as_ref().ok_or_else(|| {
                Error::Config("scenario: inline model needs a [scenario.features] table".into())
            })?;
            let graph_spec = scenario.graph.as_ref().ok_or_else(|| {
                Error::Config("scenario: inline model needs a [scenario.graph] table".into())
            })?;
            let transition = matrix_from_rows(&model_spec.transition, "transition")?;
            let rewards: Vec<DVector<f64>> = model_spec
                .rewards
                .iter()
                .map(|r| DVector::from_row_slice(r))
                .collect();
            let model = MdpModel::new(transition, rewards, model_spec.sigma, model_spec.gamma)?;
            let features = FeatureMap::new(matrix_from_rows(&features_spec.phi, "phi")?)?;
            let edges = match (&graph_spec.edges, &graph_spec.file) {
                (Some(edges), None) => edges.clone(),
                (None, Some(file)) => {
                    let path = if file.is_absolute() {
                        file.clone()
                    } else {
                        base_dir.join(file)
                    };
                    parse_graph_file(&path)?
                }
                _ => {
                    return Err(Error::Config(
                        "scenario.graph: exactly one of `edges` or `file` is required".into(),
                    ))
                }
            };
            let graph = GraphDistribution::bernoulli(graph_spec.agents, edges)?;
            let defaults = PresetDefaults {
                kappa: 1.0,
                rho: 0.0,
                iterations: 10_000,
                schedule: StepSizeSchedule::inverse_sqrt(1.0, 1.0)?,
                heatmap: None,
            };
            (None, model, features, graph, defaults)
        }
        (Some(_), Some(_)) => {
            return Err(Error::Config(
                "scenario: give either a preset or an inline model, not both".into(),
            ))
        }
        (None, None) => {
            return Err(Error::Config(
                "scenario: needs a preset name or an inline model".into(),
            ))
        }
    };

    // Apply run overrides onto the defaults.
    let run = &spec.run;
    if let Some(t) = run.iterations {
        defaults.iterations = t;
    }
    if let Some(k) = run.kappa {
        defaults.kappa = k;
    }
    if let Some(r) = run.rho {
        defaults.rho = r;
    }
    if let Some(s) = run.schedule {
        defaults.schedule = StepSizeSchedule::new(s.kind, s.alpha0, s.beta)?;
    }
    if let Some(h) = spec.report.heatmap {
        defaults.heatmap = Some(h);
    }

    Ok(ResolvedScenario {
        preset_name,
        model,
        features,
        graph,
        defaults,
        box_safety: run.box_safety.unwrap_or(2.0),
    })
}
