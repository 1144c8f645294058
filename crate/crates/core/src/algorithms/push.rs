use std::borrow::Cow;
use std::collections::BTreeMap;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use super::{base_metadata, check_matrix, check_setup, descend, divide_columns, gradients, mean_epochs, mix, Setup};
use crate::error::{Error, Result};
use crate::method::{Method, Stationary};
use crate::problems::{ConsensusCost, GradientSource, Objective};
use crate::schedule::StepSchedule;
use crate::weights::{Kind, MixingMatrix};

/// Gradient-Push over a column-stochastic `B`: mass `z` de-biases the
/// consensus so that `w = x / z` reaches agreement.
pub struct Push {
    name: &'static str,
    obj: Arc<dyn Objective>,
    b: Arc<MixingMatrix>,
    schedule: StepSchedule,
    source: GradientSource,
    x: DMatrix<f64>,
    z: DVector<f64>,
    w: DMatrix<f64>,
    round: usize,
    evals: f64,
    metadata: BTreeMap<String, String>,
}

impl Push {
    pub fn gradient_push(setup: Setup, b: Arc<MixingMatrix>) -> Result<Self> {
        Self::build("gradient_push", setup.with_source(GradientSource::Full), b)
    }

    /// Stochastic Gradient Push.
    pub fn sgp(setup: Setup, b: Arc<MixingMatrix>) -> Result<Self> {
        Self::build("sgp", setup, b)
    }

    /// Push-sum averaging of the node values (no gradient steps).
    pub fn push_sum(values: &[DVector<f64>], b: Arc<MixingMatrix>) -> Result<(Self, Arc<dyn Objective>)> {
        let cost: Arc<dyn Objective> = Arc::new(ConsensusCost::new(values.to_vec())?);
        let x0 = DMatrix::from_columns(values);
        let setup = Setup::new(cost.clone(), StepSchedule::constant(0.0), x0);
        Ok((Self::build("push_sum", setup, b)?, cost))
    }

    fn build(name: &'static str, setup: Setup, b: Arc<MixingMatrix>) -> Result<Self> {
        check_setup(name, setup.obj.as_ref(), &setup.x0, &setup.schedule)?;
        check_matrix(name, "b", &b, Kind::Column, setup.obj.nodes())?;
        let metadata = base_metadata(&setup.schedule, &[("b", &b)], &setup.source);
        let n = setup.obj.nodes();
        Ok(Push {
            name,
            obj: setup.obj,
            b,
            schedule: setup.schedule,
            source: setup.source,
            w: setup.x0.clone(),
            x: setup.x0,
            z: DVector::from_element(n, 1.0),
            round: 0,
            evals: 0.0,
            metadata,
        })
    }

    fn idle(&self, k: usize) -> bool {
        (0..self.x.ncols()).all(|i| self.schedule.alpha(k, i) == 0.0)
    }
}

impl Method for Push {
    fn name(&self) -> &str {
        self.name
    }

    fn round(&self) -> usize {
        self.round
    }

    fn step(&mut self) -> Result<()> {
        let k = self.round;
        let z_next = self.b.weights() * &self.z;
        if let Some(i) = z_next.iter().position(|&v| !(v > 0.0)) {
            return Err(Error::Breakdown {
                method: self.name.into(),
                round: k + 1,
                detail: format!("mass at node {} is {}", i + 1, z_next[i]),
            });
        }
        let mut x_next = mix(&self.x, &self.b);
        if !self.idle(k) {
            let g = gradients(self.obj.as_ref(), &self.source, &self.w, k);
            descend(&mut x_next, &g, &self.schedule, k);
            self.evals += mean_epochs(self.obj.as_ref(), &self.source);
        }
        self.w = divide_columns(&x_next, &z_next);
        self.x = x_next;
        self.z = z_next;
        self.round += 1;
        Ok(())
    }

    fn estimates(&self) -> Cow<'_, DMatrix<f64>> {
        Cow::Borrowed(&self.w)
    }

    fn states(&self) -> &DMatrix<f64> {
        &self.x
    }

    fn mass(&self) -> Option<&DVector<f64>> {
        Some(&self.z)
    }

    fn stationary(&self) -> Stationary {
        Stationary {
            row: None,
            column: Some(self.b.pi().clone()),
        }
    }

    fn epochs(&self) -> f64 {
        self.evals
    }

    fn metadata(&self) -> BTreeMap<String, String> {
        self.metadata.clone()
    }
}
