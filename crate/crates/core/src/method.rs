//! The round-by-round interface shared by every algorithm, and the driver
//! that turns a run into a [`Trace`].

use std::borrow::Cow;
use std::collections::BTreeMap;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::metrics::{self, Metric};
use crate::problems::Objective;

/// Stationary vectors used by the weighted error metrics.
#[derive(Debug, Clone, Default)]
pub struct Stationary {
    /// Left stationary vector of the row-stochastic mixing, if any.
    pub row: Option<DVector<f64>>,
    /// Right stationary vector of the column-stochastic mixing, if any.
    pub column: Option<DVector<f64>>,
}

/// A synchronous-round algorithm instance. States are `p × n` matrices with
/// one column per node.
pub trait Method: Send {
    fn name(&self) -> &str;

    /// Rounds completed so far.
    fn round(&self) -> usize;

    /// Advances every node by one round from the current snapshot.
    fn step(&mut self) -> Result<()>;

    /// The primal iterates the metrics are evaluated on (`x/z` for push-sum
    /// style methods, `x` otherwise).
    fn estimates(&self) -> Cow<'_, DMatrix<f64>>;

    /// Raw primal state before any de-biasing.
    fn states(&self) -> &DMatrix<f64>;

    fn tracker(&self) -> Option<&DMatrix<f64>> {
        None
    }

    /// Push-sum weights `z`.
    fn mass(&self) -> Option<&DVector<f64>> {
        None
    }

    /// Eigenvector estimates; row `i` is node `i`'s estimate.
    fn eigen_estimates(&self) -> Option<&DMatrix<f64>> {
        None
    }

    fn stationary(&self) -> Stationary {
        Stationary::default()
    }

    /// Component-gradient evaluations per node divided by the local sample count.
    fn epochs(&self) -> f64;

    fn metadata(&self) -> BTreeMap<String, String> {
        BTreeMap::new()
    }
}

/// Per-round metric records of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub method: String,
    pub metrics: Vec<Metric>,
    pub rounds: Vec<usize>,
    /// `values[r][m]` is metric `m` at `rounds[r]`.
    pub values: Vec<Vec<f64>>,
    pub metadata: BTreeMap<String, String>,
}

impl Trace {
    pub fn column(&self, metric: Metric) -> Option<Vec<f64>> {
        let idx = self.metrics.iter().position(|&m| m == metric)?;
        Some(self.values.iter().map(|row| row[idx]).collect())
    }

    pub fn last(&self, metric: Metric) -> Option<f64> {
        self.column(metric).and_then(|c| c.last().copied())
    }

    pub fn rounds_f64(&self) -> Vec<f64> {
        self.rounds.iter().map(|&r| r as f64).collect()
    }

    /// First logged round at which `metric ≤ target`.
    pub fn first_below(&self, metric: Metric, target: f64) -> Option<usize> {
        let col = self.column(metric)?;
        col.iter().position(|&v| v <= target).map(|i| self.rounds[i])
    }

    /// Entry-wise mean of traces that share rounds and metrics.
    pub fn average(traces: &[Trace]) -> Result<Trace> {
        let first = traces
            .first()
            .ok_or_else(|| Error::Metric("cannot average an empty set of traces".into()))?;
        if traces.iter().any(|t| t.rounds != first.rounds || t.metrics != first.metrics) {
            return Err(Error::Metric("traces disagree on rounds or metrics".into()));
        }
        let k = traces.len() as f64;
        let values = (0..first.values.len())
            .map(|r| {
                (0..first.metrics.len())
                    .map(|m| traces.iter().map(|t| t.values[r][m]).sum::<f64>() / k)
                    .collect()
            })
            .collect();
        let mut metadata = first.metadata.clone();
        metadata.insert("seeds_averaged".into(), traces.len().to_string());
        Ok(Trace {
            method: first.method.clone(),
            metrics: first.metrics.clone(),
            rounds: first.rounds.clone(),
            values,
            metadata,
        })
    }
}

/// Evaluates metrics on snapshots of a method.
#[derive(Debug, Clone)]
pub struct Evaluator {
    obj: Arc<dyn Objective>,
    x_star: Option<DVector<f64>>,
    f_star: Option<f64>,
}

impl Evaluator {
    pub fn new(obj: Arc<dyn Objective>) -> Self {
        let x_star = obj.minimizer().cloned();
        let f_star = x_star.as_ref().map(|x| obj.value(x.as_slice()));
        Evaluator { obj, x_star, f_star }
    }

    pub fn x_star(&self) -> Option<&DVector<f64>> {
        self.x_star.as_ref()
    }

    pub fn evaluate(&self, method: &dyn Method, metric: Metric) -> Result<f64> {
        let need_opt = || {
            self.x_star
                .as_ref()
                .ok_or_else(|| Error::Metric(format!("{metric} needs a known minimizer")))
        };
        let uniform = |n: usize| DVector::from_element(n, 1.0 / n as f64);
        Ok(match metric {
            Metric::MseOpt => metrics::mse_to_opt(&method.estimates(), need_opt()?),
            Metric::AvgResidual => {
                need_opt()?;
                metrics::avg_residual(&method.estimates(), self.obj.as_ref(), self.f_star.unwrap_or(0.0))
            }
            Metric::ConsensusErr | Metric::OptGap => {
                let x = method.estimates();
                let pi = method.stationary().row.unwrap_or_else(|| uniform(x.ncols()));
                if metric == Metric::ConsensusErr {
                    metrics::consensus_error(&x, &pi)?
                } else {
                    metrics::optimality_gap(&x, &pi, need_opt()?)
                }
            }
            Metric::TrackingErr => match method.tracker() {
                Some(y) => {
                    let pi = method.stationary().column.unwrap_or_else(|| uniform(y.ncols()));
                    metrics::tracking_error(y, &pi)?
                }
                None => f64::NAN,
            },
            Metric::Epoch => method.epochs(),
        })
    }
}

/// Runs `rounds` rounds, logging at round 0, every `log_every` rounds, and
/// at the final round.
pub fn run(method: &mut dyn Method, evaluator: &Evaluator, metrics: &[Metric], rounds: usize, log_every: usize) -> Result<Trace> {
    let log_every = log_every.max(1);
    let mut trace = Trace {
        method: method.name().to_string(),
        metrics: metrics.to_vec(),
        rounds: Vec::new(),
        values: Vec::new(),
        metadata: method.metadata(),
    };
    let record = |method: &dyn Method, trace: &mut Trace| -> Result<()> {
        let row = metrics
            .iter()
            .map(|&m| evaluator.evaluate(method, m))
            .collect::<Result<Vec<f64>>>()?;
        trace.rounds.push(method.round());
        trace.values.push(row);
        Ok(())
    };
    record(method, &mut trace)?;
    for _ in 0..rounds {
        method.step()?;
        let k = method.round();
        if k.is_multiple_of(log_every) || k == rounds {
            check_finite(method)?;
            record(method, &mut trace)?;
        }
    }
    Ok(trace)
}

fn check_finite(method: &dyn Method) -> Result<()> {
    if method.states().iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Breakdown {
            method: method.name().to_string(),
            round: method.round(),
            detail: "non-finite state (step size too large?)".into(),
        })
    }
}
