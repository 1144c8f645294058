use std::borrow::Cow;
use std::collections::BTreeMap;
use std::sync::Arc;

use nalgebra::DMatrix;

use super::{base_metadata, check_matrix, check_setup, descend, gradients, mean_epochs, mix, scale_columns, Setup};
use crate::error::Result;
use crate::method::{Method, Stationary};
use crate::problems::{GradientSource, Objective};
use crate::schedule::StepSchedule;
use crate::weights::{Kind, MixingMatrix};

/// DGD over a row-stochastic `A` with each local gradient divided by the
/// node's running estimate of its own stationary weight.
pub struct RowScaled {
    obj: Arc<dyn Objective>,
    a: Arc<MixingMatrix>,
    schedule: StepSchedule,
    source: GradientSource,
    x: DMatrix<f64>,
    e: DMatrix<f64>,
    round: usize,
    evals: f64,
    metadata: BTreeMap<String, String>,
}

impl RowScaled {
    pub fn dgd_rs(setup: Setup, a: Arc<MixingMatrix>) -> Result<Self> {
        let name = "dgd_rs";
        check_setup(name, setup.obj.as_ref(), &setup.x0, &setup.schedule)?;
        let n = setup.obj.nodes();
        check_matrix(name, "a", &a, Kind::Row, n)?;
        let metadata = base_metadata(&setup.schedule, &[("a", &a)], &setup.source);
        Ok(RowScaled {
            obj: setup.obj,
            a,
            schedule: setup.schedule,
            source: setup.source,
            x: setup.x0,
            e: DMatrix::identity(n, n),
            round: 0,
            evals: 0.0,
            metadata,
        })
    }
}

impl Method for RowScaled {
    fn name(&self) -> &str {
        "dgd_rs"
    }

    fn round(&self) -> usize {
        self.round
    }

    fn step(&mut self) -> Result<()> {
        let k = self.round;
        let mut g = gradients(self.obj.as_ref(), &self.source, &self.x, k);
        scale_columns(&mut g, |i| self.e[(i, i)]);
        let mut next = mix(&self.x, &self.a);
        descend(&mut next, &g, &self.schedule, k);
        self.x = next;
        self.e = self.a.weights() * &self.e;
        self.round += 1;
        self.evals += mean_epochs(self.obj.as_ref(), &self.source);
        Ok(())
    }

    fn estimates(&self) -> Cow<'_, DMatrix<f64>> {
        Cow::Borrowed(&self.x)
    }

    fn states(&self) -> &DMatrix<f64> {
        &self.x
    }

    fn eigen_estimates(&self) -> Option<&DMatrix<f64>> {
        Some(&self.e)
    }

    fn stationary(&self) -> Stationary {
        Stationary {
            row: Some(self.a.pi().clone()),
            column: None,
        }
    }

    fn epochs(&self) -> f64 {
        self.evals
    }

    fn metadata(&self) -> BTreeMap<String, String> {
        self.metadata.clone()
    }
}
