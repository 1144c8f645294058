//! Error measures and rate estimates over node-per-column state matrices.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problems::Objective;

/// Values below this (subnormals) are clamped before taking logarithms.
pub const LOG_FLOOR: f64 = f64::MIN_POSITIVE;
/// Per-round log-slope below which a curve counts as flat.
pub const PLATEAU_SLOPE: f64 = 1e-4;
/// Fraction of the tail averaged by [`plateau`].
pub const PLATEAU_TAIL: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    #[serde(rename = "mse_opt")]
    MseOpt,
    AvgResidual,
    ConsensusErr,
    OptGap,
    TrackingErr,
    Epoch,
}

impl Metric {
    pub const ALL: [Metric; 6] = [
        Metric::MseOpt,
        Metric::AvgResidual,
        Metric::ConsensusErr,
        Metric::OptGap,
        Metric::TrackingErr,
        Metric::Epoch,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Metric::MseOpt => "mse_opt",
            Metric::AvgResidual => "avg_residual",
            Metric::ConsensusErr => "consensus_err",
            Metric::OptGap => "opt_gap",
            Metric::TrackingErr => "tracking_err",
            Metric::Epoch => "epoch",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Metric::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Metric(format!("unknown metric `{s}`")))
    }
}

/// `(1/n) Σ_i ‖x_i − x*‖²`.
pub fn mse_to_opt(states: &DMatrix<f64>, x_star: &DVector<f64>) -> f64 {
    let n = states.ncols();
    let mut total = 0.0;
    for col in states.column_iter() {
        total += col.iter().zip(x_star.iter()).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
    }
    total / n as f64
}

/// `(1/n) Σ_i (F(x_i) − F*)`.
pub fn avg_residual(states: &DMatrix<f64>, obj: &dyn Objective, f_star: f64) -> f64 {
    let n = states.ncols();
    states.column_iter().map(|c| obj.value(c.as_slice()) - f_star).sum::<f64>() / n as f64
}

/// Consensus, optimality and tracking errors in the stationary-vector norms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorVector {
    pub consensus: f64,
    pub optimality: f64,
    pub tracking: Option<f64>,
}

fn require_positive(pi: &DVector<f64>, which: &str) -> Result<()> {
    if pi.iter().all(|&v| v > 0.0) {
        Ok(())
    } else {
        Err(Error::Metric(format!("{which} stationary vector has zero entries")))
    }
}

/// `sqrt(Σ_i π_i ‖x_i − x̂‖²)` with `x̂ = Σ_i π_i x_i`.
pub fn consensus_error(x: &DMatrix<f64>, pi_a: &DVector<f64>) -> Result<f64> {
    require_positive(pi_a, "row")?;
    let avg = x * pi_a;
    Ok(x.column_iter()
        .zip(pi_a.iter())
        .map(|(c, &p)| p * (c - &avg).norm_squared())
        .sum::<f64>()
        .sqrt())
}

/// `√n ‖x̂ − x*‖` with `x̂ = Σ_i π_i x_i`.
pub fn optimality_gap(x: &DMatrix<f64>, pi_a: &DVector<f64>, x_star: &DVector<f64>) -> f64 {
    let avg = x * pi_a;
    (x.ncols() as f64).sqrt() * (avg - x_star).norm()
}

/// `sqrt(Σ_i ‖y_i − π_i Σ_r y_r‖² / π_i)`.
pub fn tracking_error(y: &DMatrix<f64>, pi_b: &DVector<f64>) -> Result<f64> {
    require_positive(pi_b, "column")?;
    let total = y.column_sum();
    Ok(y.column_iter()
        .zip(pi_b.iter())
        .map(|(c, &p)| (c - &total * p).norm_squared() / p)
        .sum::<f64>()
        .sqrt())
}

pub fn error_vector(
    x: &DMatrix<f64>,
    y: Option<&DMatrix<f64>>,
    pi_a: &DVector<f64>,
    pi_b: &DVector<f64>,
    x_star: &DVector<f64>,
) -> Result<ErrorVector> {
    Ok(ErrorVector {
        consensus: consensus_error(x, pi_a)?,
        optimality: optimality_gap(x, pi_a, x_star),
        tracking: y.map(|y| tracking_error(y, pi_b)).transpose()?,
    })
}

/// `b = (1/n) Σ_i ‖∇f_i(x*)‖²`.
pub fn heterogeneity(obj: &dyn Objective, x_star: &DVector<f64>) -> f64 {
    let n = obj.nodes();
    let mut g = vec![0.0; obj.dim()];
    let mut total = 0.0;
    for i in 0..n {
        obj.local_gradient(i, x_star.as_slice(), &mut g);
        total += g.iter().map(|v| v * v).sum::<f64>();
    }
    total / n as f64
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateFit {
    /// Least-squares slope of `ln(metric)` per unit of the abscissa.
    pub slope: f64,
    pub r_squared: f64,
    pub points: usize,
}

impl RateFit {
    pub fn is_plateau(&self) -> bool {
        self.slope.abs() < PLATEAU_SLOPE
    }
}

/// Line fit of `ln(value)` against `x`. Nonpositive values are skipped;
/// positive values are clamped at [`LOG_FLOOR`].
pub fn rate_fit(xs: &[f64], values: &[f64]) -> Result<RateFit> {
    let pts: Vec<(f64, f64)> = xs
        .iter()
        .zip(values)
        .filter(|(_, &v)| v > 0.0 && v.is_finite())
        .map(|(&x, &v)| (x, v.max(LOG_FLOOR).ln()))
        .collect();
    linear_fit(&pts)
}

/// Fit of `ln(value)` against `ln(x)`.
pub fn loglog_fit(xs: &[f64], values: &[f64]) -> Result<RateFit> {
    let pts: Vec<(f64, f64)> = xs
        .iter()
        .zip(values)
        .filter(|(&x, &v)| x > 0.0 && v > 0.0 && v.is_finite())
        .map(|(&x, &v)| (x.ln(), v.max(LOG_FLOOR).ln()))
        .collect();
    linear_fit(&pts)
}

fn linear_fit(pts: &[(f64, f64)]) -> Result<RateFit> {
    if pts.len() < 2 {
        return Err(Error::Metric(format!("rate fit needs two points, got {}", pts.len())));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::Metric("rate fit abscissae are all equal".into()));
    }
    let slope = sxy / sxx;
    let r_squared = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Ok(RateFit {
        slope,
        r_squared,
        points: pts.len(),
    })
}

/// Mean of the last [`PLATEAU_TAIL`] fraction of `values`.
pub fn plateau(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Metric("plateau of an empty series".into()));
    }
    let k = ((values.len() as f64 * PLATEAU_TAIL).ceil() as usize).max(1);
    let tail = &values[values.len() - k..];
    Ok(tail.iter().sum::<f64>() / k as f64)
}
