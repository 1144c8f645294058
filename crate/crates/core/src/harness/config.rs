//! Experiment manifests: a JSON tree checked into the repo next to results.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::Metric;
use crate::problems::{LeastSquaresSpec, LogisticSpec, Sampling};
use crate::registry::{Registry, Role};
use crate::schedule::StepSchedule;
use crate::weights::Kind;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_name")]
    pub name: String,
    pub problem: ProblemConfig,
    pub graph: GraphConfig,
    #[serde(default)]
    pub weights: WeightsConfig,
    #[serde(default)]
    pub algorithms: Vec<AlgorithmConfig>,
    pub rounds: usize,
    #[serde(default = "default_log_every")]
    pub log_every: usize,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_metrics")]
    pub metrics: Vec<Metric>,
    #[serde(default)]
    pub init: InitConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub speedup: Option<SpeedupConfig>,
}

fn default_name() -> String {
    "experiment".into()
}
fn default_log_every() -> usize {
    1
}
fn default_seeds() -> Vec<u64> {
    vec![0]
}
fn default_metrics() -> Vec<Metric> {
    vec![Metric::MseOpt]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProblemConfig {
    /// Synthetic sensor network. `nodes` may be omitted (or 0) to follow the
    /// graph; a nonzero value fixes the pooled data for speedup studies.
    LeastSquares(LeastSquaresConfig),
    Logistic(LogisticSpec),
    /// Binary MNIST subset read from IDX files.
    Mnist {
        images: PathBuf,
        labels: PathBuf,
        #[serde(default = "default_digits")]
        digits: [u8; 2],
        /// Defaults to one over the number of retained samples.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        lambda: Option<f64>,
    },
    /// `½‖x − υ_i‖²` with Gaussian targets.
    Consensus {
        dim: usize,
        #[serde(default = "default_spread")]
        spread: f64,
        #[serde(default)]
        seed: u64,
    },
}

fn default_digits() -> [u8; 2] {
    [3, 8]
}
fn default_spread() -> f64 {
    1.0
}

/// [`LeastSquaresSpec`] with the node count optional.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LeastSquaresConfig {
    #[serde(default)]
    pub nodes: usize,
    pub dim: usize,
    #[serde(default = "default_rows")]
    pub rows_per_node: usize,
    #[serde(default = "default_std")]
    pub data_std: f64,
    #[serde(default = "default_std")]
    pub state_std: f64,
    #[serde(default = "default_noise")]
    pub noise_std: f64,
    #[serde(default)]
    pub heterogeneity: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_rows() -> usize {
    LeastSquaresSpec::new(1, 1, 0).rows_per_node
}
fn default_std() -> f64 {
    LeastSquaresSpec::new(1, 1, 0).data_std
}
fn default_noise() -> f64 {
    LeastSquaresSpec::new(1, 1, 0).noise_std
}

impl LeastSquaresConfig {
    pub fn spec(&self, nodes: usize) -> LeastSquaresSpec {
        LeastSquaresSpec {
            nodes,
            dim: self.dim,
            rows_per_node: self.rows_per_node,
            data_std: self.data_std,
            state_std: self.state_std,
            noise_std: self.noise_std,
            heterogeneity: self.heterogeneity,
            seed: self.seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GraphConfig {
    /// Nearest-neighbour graph in the unit square; a fraction of the links
    /// can be made one-way.
    Geometric {
        nodes: usize,
        #[serde(default = "default_radius")]
        radius: f64,
        #[serde(default)]
        one_way_fraction: f64,
        #[serde(default)]
        seed: u64,
    },
    Exponential {
        nodes: usize,
    },
    Ring {
        nodes: usize,
    },
    Complete {
        nodes: usize,
    },
    Path {
        nodes: usize,
    },
    /// 1-based `receiver sender` pairs, one per line.
    EdgeList {
        path: PathBuf,
    },
}

fn default_radius() -> f64 {
    0.3
}

/// How a weight matrix is formed from the graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightRule {
    Metropolis,
    /// Uniform weights averaged with the identity on a weight-balanced digraph.
    LazyUniform,
    RowUniform,
    RowRooted,
    ColumnUniform,
    ColumnRooted,
    /// `Π_A A Π_A⁻¹` for the uniform row-stochastic `A`.
    ColumnFromRow,
    /// `Π_B⁻¹ B Π_B` for the uniform column-stochastic `B`.
    RowFromColumn,
}

impl WeightRule {
    pub fn kind(self) -> Kind {
        match self {
            WeightRule::Metropolis | WeightRule::LazyUniform => Kind::Doubly,
            WeightRule::RowUniform | WeightRule::RowRooted | WeightRule::RowFromColumn => Kind::Row,
            WeightRule::ColumnUniform | WeightRule::ColumnRooted | WeightRule::ColumnFromRow => Kind::Column,
        }
    }

    fn fits(self, role: Role) -> bool {
        match role.kind() {
            Kind::Doubly => self.kind() == Kind::Doubly,
            Kind::Row => self.kind().is_row(),
            Kind::Column => self.kind().is_column(),
        }
    }
}

/// One rule per matrix role. Unset tilde roles reuse the plain role's rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightsConfig {
    #[serde(default = "default_w")]
    pub w: WeightRule,
    #[serde(default = "default_a")]
    pub a: WeightRule,
    #[serde(default = "default_b")]
    pub b: WeightRule,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a_tilde: Option<WeightRule>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b_tilde: Option<WeightRule>,
}

fn default_w() -> WeightRule {
    WeightRule::Metropolis
}
fn default_a() -> WeightRule {
    WeightRule::RowUniform
}
fn default_b() -> WeightRule {
    WeightRule::ColumnUniform
}

impl Default for WeightsConfig {
    fn default() -> Self {
        WeightsConfig {
            w: default_w(),
            a: default_a(),
            b: default_b(),
            a_tilde: None,
            b_tilde: None,
        }
    }
}

impl WeightsConfig {
    pub fn rule(&self, role: Role) -> WeightRule {
        match role {
            Role::W => self.w,
            Role::A => self.a,
            Role::B => self.b,
            Role::ATilde => self.a_tilde.unwrap_or(self.a),
            Role::BTilde => self.b_tilde.unwrap_or(self.b),
        }
    }

    fn overlay(&self, o: &WeightOverrides) -> WeightsConfig {
        WeightsConfig {
            w: o.w.unwrap_or(self.w),
            a: o.a.unwrap_or(self.a),
            b: o.b.unwrap_or(self.b),
            a_tilde: o.a_tilde.or(self.a_tilde),
            b_tilde: o.b_tilde.or(self.b_tilde),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightOverrides {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub w: Option<WeightRule>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<WeightRule>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<WeightRule>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a_tilde: Option<WeightRule>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b_tilde: Option<WeightRule>,
}

impl WeightOverrides {
    fn is_empty(&self) -> bool {
        *self == WeightOverrides::default()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlgorithmConfig {
    pub name: String,
    /// Output name; defaults to `name`. Must be unique within a config.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    pub schedule: StepSchedule,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default)]
    pub sampling: Sampling,
    #[serde(default, skip_serializing_if = "WeightOverrides::is_empty")]
    pub weights: WeightOverrides,
}

impl AlgorithmConfig {
    pub fn label(&self) -> &str {
        self.label.as_deref().unwrap_or(&self.name)
    }

    /// The weight rules this algorithm sees.
    pub fn weights(&self, global: &WeightsConfig) -> WeightsConfig {
        global.overlay(&self.weights)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitConfig {
    #[default]
    Zeros,
    /// Independent N(0, std²) entries.
    Gaussian {
        std: f64,
        #[serde(default)]
        seed: u64,
    },
}

/// Iterations-to-target of a centralized baseline over a decentralized
/// method on directed exponential graphs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpeedupConfig {
    pub baseline: String,
    pub baseline_schedule: StepSchedule,
    pub method: String,
    /// Node counts; each must be a power of two.
    pub nodes: Vec<usize>,
    /// One schedule for all node counts, or one per entry of `nodes`.
    pub schedules: Vec<StepSchedule>,
    pub target: f64,
    pub budget: usize,
    #[serde(default = "default_speedup_metric")]
    pub metric: Metric,
    #[serde(default)]
    pub sampling: Sampling,
}

fn default_speedup_metric() -> Metric {
    Metric::MseOpt
}

impl SpeedupConfig {
    pub fn schedule(&self, idx: usize) -> &StepSchedule {
        if self.schedules.len() == 1 {
            &self.schedules[0]
        } else {
            &self.schedules[idx]
        }
    }
}

impl GraphConfig {
    pub fn nodes(&self) -> Option<usize> {
        match self {
            GraphConfig::Geometric { nodes, .. }
            | GraphConfig::Exponential { nodes }
            | GraphConfig::Ring { nodes }
            | GraphConfig::Complete { nodes }
            | GraphConfig::Path { nodes } => Some(*nodes),
            GraphConfig::EdgeList { .. } => None,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            Error::config(path, e.into_inner().to_string())
        })?;
        cfg.validate(&Registry::with_builtin())?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Checks everything that can be checked without building data.
    pub fn validate(&self, registry: &Registry) -> Result<()> {
        if self.rounds == 0 {
            return Err(Error::config("rounds", "must be positive"));
        }
        if self.log_every == 0 {
            return Err(Error::config("log_every", "must be positive"));
        }
        if self.seeds.is_empty() {
            return Err(Error::config("seeds", "needs at least one seed"));
        }
        let distinct: BTreeSet<u64> = self.seeds.iter().copied().collect();
        if distinct.len() != self.seeds.len() {
            return Err(Error::config("seeds", "seeds must be distinct"));
        }
        if self.metrics.is_empty() {
            return Err(Error::config("metrics", "needs at least one metric"));
        }
        if let ProblemConfig::Mnist { digits, .. } = &self.problem {
            if digits[0] == digits[1] || digits.iter().any(|&d| d > 9) {
                return Err(Error::config("problem.digits", "needs two different digits in 0..=9"));
            }
        }
        if let (ProblemConfig::LeastSquares(ls), Some(n)) = (&self.problem, self.graph.nodes()) {
            if ls.nodes != 0 && ls.nodes != n {
                return Err(Error::config(
                    "problem.nodes",
                    format!("{} nodes but the graph has {n}", ls.nodes),
                ));
            }
        }
        let mut labels = BTreeMap::new();
        for (k, alg) in self.algorithms.iter().enumerate() {
            let at = |field: &str| format!("algorithms[{k}].{field}");
            let factory = registry
                .get(&alg.name)
                .map_err(|e| Error::config(at("name"), e.to_string()))?;
            if labels.insert(alg.label().to_string(), k).is_some() {
                return Err(Error::config(at("label"), format!("duplicate label `{}`", alg.label())));
            }
            let rules = alg.weights(&self.weights);
            for &role in factory.roles() {
                let rule = rules.rule(role);
                if !rule.fits(role) {
                    return Err(Error::config(
                        at(&format!("weights.{}", role.name())),
                        format!(
                            "`{}` needs {:?} stochastic weights for `{}`, but `{:?}` gives {:?} stochastic",
                            alg.name,
                            role.kind(),
                            role.name(),
                            rule,
                            rule.kind()
                        ),
                    ));
                }
            }
            if let Some(b) = alg.beta {
                if !(0.0..1.0).contains(&b) {
                    return Err(Error::config(at("beta"), "must lie in [0, 1)"));
                }
            }
        }
        if let Some(s) = &self.speedup {
            for (field, name) in [("speedup.baseline", &s.baseline), ("speedup.method", &s.method)] {
                registry.get(name).map_err(|e| Error::config(field, e.to_string()))?;
            }
            if s.nodes.is_empty() || s.nodes.iter().any(|n| !n.is_power_of_two()) {
                return Err(Error::config("speedup.nodes", "needs powers of two"));
            }
            if s.schedules.len() != 1 && s.schedules.len() != s.nodes.len() {
                return Err(Error::config("speedup.schedules", "give one schedule or one per node count"));
            }
            if let ProblemConfig::LeastSquares(ls) = &self.problem {
                if ls.nodes == 0 {
                    return Err(Error::config(
                        "problem.nodes",
                        "speedup studies need the pooled data fixed by `nodes`",
                    ));
                }
            }
        }
        Ok(())
    }
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::config(path.display().to_string(), e.to_string()))?;
    ExperimentConfig::from_json(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "problem": {"kind": "least_squares", "dim": 4},
        "graph": {"kind": "ring", "nodes": 5},
        "algorithms": [{"name": "dgd", "schedule": {"kind": "constant", "alpha": 0.001}}],
        "rounds": 10
    }"#;

    #[test]
    fn minimal_config_gets_defaults() {
        let c = ExperimentConfig::from_json(MINIMAL).unwrap();
        assert_eq!(c.seeds, vec![0]);
        assert_eq!(c.log_every, 1);
        assert_eq!(c.metrics, vec![Metric::MseOpt]);
        assert_eq!(c.weights, WeightsConfig::default());
        let ProblemConfig::LeastSquares(ls) = &c.problem else {
            panic!()
        };
        assert_eq!((ls.rows_per_node, ls.noise_std), (20, 1.0));
    }

    #[test]
    fn round_trip() {
        let c = ExperimentConfig::from_json(MINIMAL).unwrap();
        assert_eq!(ExperimentConfig::from_json(&c.to_json()).unwrap(), c);
    }

    #[test]
    fn dgd_with_column_weights_is_rejected() {
        let text = MINIMAL.replace(r#""schedule""#, r#""weights": {"w": "column_uniform"}, "schedule""#);
        let err = ExperimentConfig::from_json(&text).unwrap_err();
        assert!(err.to_string().contains("algorithms[0].weights.w"), "{err}");
    }

    #[test]
    fn unknown_keys_report_their_path() {
        let text = MINIMAL.replace(r#""dim": 4"#, r#""dim": 4, "rank": 3"#);
        let err = ExperimentConfig::from_json(&text).unwrap_err();
        let Error::Config { path, message } = err else { panic!() };
        assert!(path.starts_with("problem"), "{path}");
        assert!(message.contains("rank"), "{message}");
    }

    #[test]
    fn repeated_seeds_are_rejected() {
        let text = MINIMAL.replace(r#""rounds": 10"#, r#""rounds": 10, "seeds": [1, 2, 1]"#);
        assert!(ExperimentConfig::from_json(&text).is_err());
    }

    #[test]
    fn unknown_method_is_rejected() {
        let text = MINIMAL.replace(r#""name": "dgd""#, r#""name": "extra""#);
        let err = ExperimentConfig::from_json(&text).unwrap_err();
        assert!(err.to_string().contains("algorithms[0].name"), "{err}");
    }
}
