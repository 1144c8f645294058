use std::borrow::Cow;
use std::collections::BTreeMap;
use std::sync::Arc;

use nalgebra::DMatrix;

use super::{base_metadata, check_setup, descend, Setup};
use crate::error::Result;
use crate::method::Method;
use crate::problems::{GradientSource, Objective};
use crate::schedule::StepSchedule;

/// Gradient descent (or SGD with a stochastic source) on `F` by one machine
/// holding every component.
pub struct Centralized {
    name: &'static str,
    obj: Arc<dyn Objective>,
    schedule: StepSchedule,
    source: GradientSource,
    x: DMatrix<f64>,
    round: usize,
    evals: f64,
    metadata: BTreeMap<String, String>,
}

impl Centralized {
    /// `x_{k+1} = x_k − α_k ∇F(x_k)`, started from the mean of the node states.
    pub fn cgd(setup: Setup) -> Result<Self> {
        Self::build("cgd", setup.with_source(GradientSource::Full))
    }

    /// `x_{k+1} = x_k − α_k ∇f_τ(x_k)` with `τ` drawn over the pooled components.
    pub fn sgd(setup: Setup) -> Result<Self> {
        Self::build("sgd", setup)
    }

    fn build(name: &'static str, setup: Setup) -> Result<Self> {
        check_setup(name, setup.obj.as_ref(), &setup.x0, &StepSchedule::constant(0.0))?;
        if let StepSchedule::PerNode { .. } = setup.schedule {
            return Err(crate::Error::method(name, "a single machine has no per-node steps"));
        }
        setup.schedule.validate(1)?;
        let x = DMatrix::from_column_slice(setup.x0.nrows(), 1, setup.x0.column_mean().as_slice());
        let metadata = base_metadata(&setup.schedule, &[], &setup.source);
        Ok(Centralized {
            name,
            obj: setup.obj,
            schedule: setup.schedule,
            source: setup.source,
            x,
            round: 0,
            evals: 0.0,
            metadata,
        })
    }

    fn epochs_per_round(&self) -> f64 {
        match &self.source {
            GradientSource::Full => 1.0,
            GradientSource::Stochastic(o) => match o.sampling {
                crate::problems::Sampling::Component { batch } => batch.max(1) as f64 / self.obj.total_components() as f64,
                crate::problems::Sampling::AdditiveNoise { .. } => 1.0,
            },
        }
    }
}

impl Method for Centralized {
    fn name(&self) -> &str {
        self.name
    }

    fn round(&self) -> usize {
        self.round
    }

    fn step(&mut self) -> Result<()> {
        let k = self.round;
        let mut g = DMatrix::zeros(self.x.nrows(), 1);
        self.source.pooled(self.obj.as_ref(), self.x.as_slice(), k, g.as_mut_slice());
        descend(&mut self.x, &g, &self.schedule, k);
        self.round += 1;
        self.evals += self.epochs_per_round();
        Ok(())
    }

    fn estimates(&self) -> Cow<'_, DMatrix<f64>> {
        Cow::Borrowed(&self.x)
    }

    fn states(&self) -> &DMatrix<f64> {
        &self.x
    }

    fn epochs(&self) -> f64 {
        self.evals
    }

    fn metadata(&self) -> BTreeMap<String, String> {
        self.metadata.clone()
    }
}
