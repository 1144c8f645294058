use std::borrow::Cow;
use std::collections::BTreeMap;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use super::{base_metadata, check_matrix, check_root, mix};
use crate::error::{Error, Result};
use crate::method::{Method, Stationary};
use crate::problems::{ConsensusCost, GradientSource, Objective};
use crate::schedule::StepSchedule;
use crate::weights::{Kind, MixingMatrix};

/// Push-pull tracking on `½‖x − υ_i‖²`, where the gradient difference is the
/// state difference, so no gradients are evaluated:
///
/// ```text
/// x_{k+1} = A x_k − α y_k
/// y_{k+1} = B y_k + x_{k+1} − x_k,   x_0 = υ, y_0 = 0
/// ```
pub struct Surplus {
    a: Arc<MixingMatrix>,
    b: Arc<MixingMatrix>,
    alpha: f64,
    x: DMatrix<f64>,
    y: DMatrix<f64>,
    round: usize,
    metadata: BTreeMap<String, String>,
}

impl Surplus {
    pub fn surplus_consensus(
        values: &[DVector<f64>],
        a: Arc<MixingMatrix>,
        b: Arc<MixingMatrix>,
        alpha: f64,
    ) -> Result<(Self, Arc<dyn Objective>)> {
        let name = "surplus_consensus";
        let cost: Arc<dyn Objective> = Arc::new(ConsensusCost::new(values.to_vec())?);
        let n = values.len();
        check_matrix(name, "a", &a, Kind::Row, n)?;
        check_matrix(name, "b", &b, Kind::Column, n)?;
        check_root(name, &a, &b)?;
        if !(alpha.is_finite() && alpha >= 0.0) {
            return Err(Error::method(
                name,
                format!("step must be finite and nonnegative, got {alpha}"),
            ));
        }
        let schedule = StepSchedule::constant(alpha);
        let metadata = base_metadata(&schedule, &[("a", &a), ("b", &b)], &GradientSource::Full);
        let x = DMatrix::from_columns(values);
        let y = DMatrix::zeros(x.nrows(), n);
        Ok((
            Surplus {
                a,
                b,
                alpha,
                x,
                y,
                round: 0,
                metadata,
            },
            cost,
        ))
    }
}

impl Method for Surplus {
    fn name(&self) -> &str {
        "surplus_consensus"
    }

    fn round(&self) -> usize {
        self.round
    }

    fn step(&mut self) -> Result<()> {
        let mut x_next = mix(&self.x, &self.a);
        x_next -= &self.y * self.alpha;
        let mut y_next = mix(&self.y, &self.b);
        y_next += &x_next - &self.x;
        self.x = x_next;
        self.y = y_next;
        self.round += 1;
        Ok(())
    }

    fn estimates(&self) -> Cow<'_, DMatrix<f64>> {
        Cow::Borrowed(&self.x)
    }

    fn states(&self) -> &DMatrix<f64> {
        &self.x
    }

    fn tracker(&self) -> Option<&DMatrix<f64>> {
        Some(&self.y)
    }

    fn stationary(&self) -> Stationary {
        Stationary {
            row: Some(self.a.pi().clone()),
            column: Some(self.b.pi().clone()),
        }
    }

    fn epochs(&self) -> f64 {
        0.0
    }

    fn metadata(&self) -> BTreeMap<String, String> {
        self.metadata.clone()
    }
}
