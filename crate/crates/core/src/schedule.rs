use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Step-size rule `α_k` (or `α_{k,i}` for uncoordinated steps).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum StepSchedule {
    Constant {
        alpha: f64,
    },
    /// `α_k = alpha0 / (k + 1)`.
    Decaying {
        alpha0: f64,
    },
    /// A constant step per node; zeros make a node a pure follower.
    PerNode {
        alphas: Vec<f64>,
    },
}

impl StepSchedule {
    pub fn constant(alpha: f64) -> Self {
        StepSchedule::Constant { alpha }
    }

    pub fn decaying(alpha0: f64) -> Self {
        StepSchedule::Decaying { alpha0 }
    }

    pub fn validate(&self, nodes: usize) -> Result<()> {
        let bad = |msg: String| {
            Err(Error::Method {
                method: "schedule".into(),
                reason: msg,
            })
        };
        match self {
            StepSchedule::Constant { alpha } if !(*alpha >= 0.0) || !alpha.is_finite() => {
                bad(format!("step size must be finite and nonnegative, got {alpha}"))
            }
            StepSchedule::Decaying { alpha0 } if !(*alpha0 > 0.0) || !alpha0.is_finite() => {
                bad(format!("initial step size must be positive, got {alpha0}"))
            }
            StepSchedule::PerNode { alphas } => {
                if alphas.len() != nodes {
                    return bad(format!("{} per-node steps for {nodes} nodes", alphas.len()));
                }
                if alphas.iter().any(|a| !(*a >= 0.0) || !a.is_finite()) {
                    return bad("per-node steps must be finite and nonnegative".into());
                }
                if !alphas.iter().any(|&a| a > 0.0) {
                    return bad("at least one per-node step must be positive".into());
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    /// Step used by node `i` at round `k`.
    pub fn alpha(&self, k: usize, i: usize) -> f64 {
        match self {
            StepSchedule::Constant { alpha } => *alpha,
            StepSchedule::Decaying { alpha0 } => alpha0 / (k as f64 + 1.0),
            StepSchedule::PerNode { alphas } => alphas[i],
        }
    }

    pub fn alphas(&self, k: usize, n: usize) -> Vec<f64> {
        (0..n).map(|i| self.alpha(k, i)).collect()
    }

    pub fn describe(&self) -> String {
        match self {
            StepSchedule::Constant { alpha } => format!("constant({alpha:e})"),
            StepSchedule::Decaying { alpha0 } => format!("decaying({alpha0:e}/(k+1))"),
            StepSchedule::PerNode { alphas } => {
                let parts: Vec<String> = alphas.iter().map(|a| format!("{a:e}")).collect();
                format!("per_node([{}])", parts.join(","))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decaying_values() {
        let s = StepSchedule::decaying(2.0);
        assert_eq!(s.alpha(0, 0), 2.0);
        assert_eq!(s.alpha(3, 5), 0.5);
    }

    #[test]
    fn per_node_validation() {
        assert!(StepSchedule::PerNode { alphas: vec![0.0, 0.0] }.validate(2).is_err());
        assert!(StepSchedule::PerNode { alphas: vec![0.1, 0.0] }.validate(2).is_ok());
        assert!(StepSchedule::PerNode { alphas: vec![0.1] }.validate(2).is_err());
        assert!(StepSchedule::constant(-1.0).validate(1).is_err());
        assert!(StepSchedule::decaying(0.0).validate(1).is_err());
    }
}
