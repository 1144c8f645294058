//! Builds problems, graphs and weights from a config and runs every
//! (algorithm × seed) cell.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use super::config::{AlgorithmConfig, ExperimentConfig, GraphConfig, InitConfig, ProblemConfig, SpeedupConfig, WeightRule};
use super::mnist;
use crate::error::{Error, Result};
use crate::graph::{self, Graph};
use crate::method::{run, Evaluator, Method, Trace};
use crate::metrics::Metric;
use crate::problems::{ConsensusCost, LeastSquares, Objective};
use crate::registry::{BuildContext, Registry, Role};
use crate::rng;
use crate::stochastic::{speedup_study, Arm, SpeedupCell};
use crate::weights::{self, MixingMatrix};

pub fn build_graph(cfg: &GraphConfig) -> Result<Graph> {
    match cfg {
        GraphConfig::Geometric {
            nodes,
            radius,
            one_way_fraction,
            seed,
        } => {
            let g = graph::geometric(*nodes, *radius, *one_way_fraction, *seed)?;
            if g.attempts > 1 {
                log::info!("geometric graph accepted on placement {}", g.attempts);
            }
            Ok(g.graph)
        }
        GraphConfig::Exponential { nodes } => graph::directed_exponential(*nodes),
        GraphConfig::Ring { nodes } => graph::directed_ring(*nodes),
        GraphConfig::Complete { nodes } => graph::complete(*nodes),
        GraphConfig::Path { nodes } => graph::path(*nodes),
        GraphConfig::EdgeList { path } => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::Graph(format!("{}: {e}", path.display())))?;
            Graph::parse_edge_list(&text)
        }
    }
}

pub fn build_weights(rule: WeightRule, g: &Graph) -> Result<MixingMatrix> {
    match rule {
        WeightRule::Metropolis => weights::metropolis(g),
        WeightRule::LazyUniform => weights::lazy_uniform_doubly(g),
        WeightRule::RowUniform => weights::row_stochastic_uniform(g),
        WeightRule::RowRooted => weights::row_stochastic_rooted(g),
        WeightRule::ColumnUniform => weights::column_stochastic_uniform(g),
        WeightRule::ColumnRooted => weights::column_stochastic_rooted(g),
        WeightRule::ColumnFromRow => weights::row_to_column(&weights::row_stochastic_uniform(g)?),
        WeightRule::RowFromColumn => weights::column_to_row(&weights::column_stochastic_uniform(g)?),
    }
}

/// The objective split across `nodes` nodes.
pub fn build_problem(cfg: &ProblemConfig, nodes: usize) -> Result<Arc<dyn Objective>> {
    Ok(match cfg {
        ProblemConfig::LeastSquares(ls) => {
            // A fixed node count pins the pooled data; otherwise it follows the graph.
            let total = if ls.nodes == 0 { nodes } else { ls.nodes };
            let (h, y) = ls.spec(total).pooled();
            Arc::new(LeastSquares::partition(&h, &y, nodes)?)
        }
        ProblemConfig::Logistic(spec) => Arc::new(spec.build(nodes)?),
        ProblemConfig::Mnist {
            images,
            labels,
            digits,
            lambda,
        } => {
            let subset = mnist::load_mnist_idx(images, labels, *digits, nodes)?;
            let lambda = lambda.unwrap_or(1.0 / subset.samples() as f64);
            Arc::new(subset.logistic(lambda)?)
        }
        ProblemConfig::Consensus { dim, spread, seed } => {
            let targets = (0..nodes)
                .map(|i| {
                    let mut r = rng::stream(&[*seed, 0xC0, i as u64]);
                    DVector::from_fn(*dim, |_, _| spread * Distribution::<f64>::sample(&StandardNormal, &mut r))
                })
                .collect();
            Arc::new(ConsensusCost::new(targets)?)
        }
    })
}

pub fn initial_state(init: &InitConfig, dim: usize, nodes: usize) -> DMatrix<f64> {
    match init {
        InitConfig::Zeros => DMatrix::zeros(dim, nodes),
        InitConfig::Gaussian { std, seed } => {
            let mut x = DMatrix::zeros(dim, nodes);
            for (i, mut col) in x.column_iter_mut().enumerate() {
                let mut r = rng::stream(&[*seed, 0x1417, i as u64]);
                col.iter_mut()
                    .for_each(|v| *v = std * Distribution::<f64>::sample(&StandardNormal, &mut r));
            }
            x
        }
    }
}

/// One (algorithm, seed) run. Deterministic methods run once with no seed.
#[derive(Debug, Clone)]
pub struct CellResult {
    pub label: String,
    pub method: String,
    pub seed: Option<u64>,
    pub outcome: std::result::Result<Trace, String>,
}

/// Per-label view: the seed-averaged trace over the cells that finished.
#[derive(Debug, Clone)]
pub struct LabelSummary {
    pub label: String,
    pub method: String,
    pub stochastic: bool,
    pub completed: usize,
    pub total: usize,
    pub mean: Option<Trace>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Completion {
    Complete,
    Partial,
    Failed,
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub metrics: Vec<Metric>,
    pub cells: Vec<CellResult>,
    pub labels: Vec<LabelSummary>,
}

impl ExperimentResult {
    pub fn completion(&self) -> Completion {
        let ok = self.cells.iter().filter(|c| c.outcome.is_ok()).count();
        if ok == self.cells.len() {
            Completion::Complete
        } else if ok == 0 {
            Completion::Failed
        } else {
            Completion::Partial
        }
    }

    pub fn mean(&self, label: &str) -> Option<&Trace> {
        self.labels.iter().find(|l| l.label == label).and_then(|l| l.mean.as_ref())
    }
}

struct Prepared {
    ctx: BuildContext,
    stochastic: bool,
}

fn prepare(
    alg: &AlgorithmConfig,
    cfg: &ExperimentConfig,
    registry: &Registry,
    obj: &Arc<dyn Objective>,
    x0: &DMatrix<f64>,
    g: &Graph,
    cache: &mut BTreeMap<WeightRule, std::result::Result<Arc<MixingMatrix>, String>>,
) -> std::result::Result<Prepared, String> {
    let factory = registry.get(&alg.name).map_err(|e| e.to_string())?;
    let rules = alg.weights(&cfg.weights);
    let mut ctx = BuildContext::new(obj.clone(), alg.schedule.clone());
    ctx.x0 = x0.clone();
    ctx.sampling = alg.sampling;
    ctx.beta = alg.beta;
    for &role in factory.roles() {
        let rule = rules.rule(role);
        let m = cache
            .entry(rule)
            .or_insert_with(|| build_weights(rule, g).map(Arc::new).map_err(|e| e.to_string()))
            .clone()
            .map_err(|e| format!("weights.{}: {e}", role.name()))?;
        ctx = ctx.with_matrix(role, m);
    }
    Ok(Prepared {
        ctx,
        stochastic: factory.stochastic(),
    })
}

/// Runs every cell. Setup failures (graph, problem) are errors; failures of
/// individual cells are recorded in the result.
pub fn run_experiment(cfg: &ExperimentConfig, registry: &Registry) -> Result<ExperimentResult> {
    cfg.validate(registry)?;
    let g = build_graph(&cfg.graph)?;
    let n = g.n();
    let obj = build_problem(&cfg.problem, n)?;
    let x0 = initial_state(&cfg.init, obj.dim(), n);
    let evaluator = Evaluator::new(obj.clone());

    let mut cache = BTreeMap::new();
    let prepared: Vec<std::result::Result<Prepared, String>> = cfg
        .algorithms
        .iter()
        .map(|alg| prepare(alg, cfg, registry, &obj, &x0, &g, &mut cache))
        .collect();

    struct Job<'a> {
        alg: &'a AlgorithmConfig,
        prep: &'a std::result::Result<Prepared, String>,
        seed: Option<u64>,
    }
    let mut jobs = Vec::new();
    for (alg, prep) in cfg.algorithms.iter().zip(&prepared) {
        match prep {
            Ok(p) if p.stochastic => jobs.extend(cfg.seeds.iter().map(|&s| Job {
                alg,
                prep,
                seed: Some(s),
            })),
            _ => jobs.push(Job { alg, prep, seed: None }),
        }
    }

    let cells: Vec<CellResult> = jobs
        .par_iter()
        .map(|job| {
            let outcome = match job.prep {
                Err(e) => Err(e.clone()),
                Ok(p) => {
                    let mut ctx = p.ctx.clone();
                    ctx.seed = job.seed.unwrap_or(0);
                    registry
                        .build(&job.alg.name, &ctx)
                        .and_then(|mut m| run(m.as_mut(), &evaluator, &cfg.metrics, cfg.rounds, cfg.log_every))
                        .map(|mut t| {
                            t.method = job.alg.label().to_string();
                            t
                        })
                        .map_err(|e| e.to_string())
                }
            };
            if let Err(e) = &outcome {
                log::warn!("{} (seed {:?}) failed: {e}", job.alg.label(), job.seed);
            }
            CellResult {
                label: job.alg.label().to_string(),
                method: job.alg.name.clone(),
                seed: job.seed,
                outcome,
            }
        })
        .collect();

    let labels = cfg
        .algorithms
        .iter()
        .zip(&prepared)
        .map(|(alg, prep)| {
            let mine: Vec<&CellResult> = cells.iter().filter(|c| c.label == alg.label()).collect();
            let done: Vec<Trace> = mine.iter().filter_map(|c| c.outcome.as_ref().ok().cloned()).collect();
            let mean = match done.len() {
                0 => None,
                1 => done.into_iter().next(),
                _ => Trace::average(&done).ok(),
            };
            LabelSummary {
                label: alg.label().to_string(),
                method: alg.name.clone(),
                stochastic: prep.as_ref().is_ok_and(|p| p.stochastic),
                completed: mine.iter().filter(|c| c.outcome.is_ok()).count(),
                total: mine.len(),
                mean,
            }
        })
        .collect();

    Ok(ExperimentResult {
        metrics: cfg.metrics.clone(),
        cells,
        labels,
    })
}

/// Speedup of a decentralized method over a centralized baseline on
/// directed exponential graphs. Each arm averages over the config seeds.
pub fn run_speedup(cfg: &ExperimentConfig, registry: &Registry) -> Result<Vec<SpeedupCell>> {
    cfg.validate(registry)?;
    let s: &SpeedupConfig = cfg
        .speedup
        .as_ref()
        .ok_or_else(|| Error::config("speedup", "config has no speedup section"))?;

    let arm = |name: &str, n: usize, schedule: &crate::schedule::StepSchedule| -> Result<Arm> {
        let obj = build_problem(&cfg.problem, n)?;
        let g = graph::directed_exponential(n)?;
        let mut ctx = BuildContext::new(obj.clone(), schedule.clone());
        ctx.x0 = initial_state(&cfg.init, obj.dim(), n);
        ctx.sampling = s.sampling;
        let factory = registry.get(name)?;
        for &role in factory.roles() {
            let rule = match role {
                Role::W => WeightRule::LazyUniform,
                Role::A | Role::ATilde => WeightRule::RowUniform,
                Role::B | Role::BTilde => WeightRule::ColumnUniform,
            };
            ctx = ctx.with_matrix(role, Arc::new(build_weights(rule, &g)?));
        }
        let runs = cfg
            .seeds
            .iter()
            .map(|&seed| {
                let mut c = ctx.clone();
                c.seed = seed;
                factory.build(&c)
            })
            .collect::<Result<Vec<Box<dyn Method>>>>()?;
        Ok(Arm {
            evaluator: Evaluator::new(obj),
            runs,
        })
    };

    let baseline = arm(&s.baseline, 1, &s.baseline_schedule)?;
    speedup_study(&s.nodes, s.metric, s.target, s.budget, baseline, |n| {
        let idx = s.nodes.iter().position(|&m| m == n).unwrap_or(0);
        arm(&s.method, n, s.schedule(idx))
    })
}

/// Resolves dataset and edge-list paths relative to `base`.
pub fn resolve_paths(cfg: &mut ExperimentConfig, base: &Path) {
    let fix = |p: &mut std::path::PathBuf| {
        if p.is_relative() {
            *p = base.join(&*p);
        }
    };
    if let ProblemConfig::Mnist { images, labels, .. } = &mut cfg.problem {
        fix(images);
        fix(labels);
    }
    if let GraphConfig::EdgeList { path } = &mut cfg.graph {
        fix(path);
    }
}
