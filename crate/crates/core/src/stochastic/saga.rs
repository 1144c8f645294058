use std::borrow::Cow;
use std::collections::BTreeMap;
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::Rng;

use crate::algorithms::{base_metadata, check_setup, descend, Setup};
use crate::error::{Error, Result};
use crate::method::Method;
use crate::problems::{GradientSource, GradientTable, Objective};
use crate::rng;
use crate::schedule::StepSchedule;

/// SAGA on the pooled components of every node, run by one machine.
///
/// Round 0 steps along the table average (the full gradient at `x_0`).
/// Round `k ≥ 1` draws `τ` from stream `(seed, 0, k)` and steps along
/// `∇f_τ(x_k) − stored_τ + average`, then stores `∇f_τ(x_k)`.
pub struct Saga {
    obj: Arc<dyn Objective>,
    schedule: StepSchedule,
    seed: u64,
    table: GradientTable,
    locate: Vec<(usize, usize)>,
    x: DMatrix<f64>,
    round: usize,
    evals: f64,
    metadata: BTreeMap<String, String>,
}

impl Saga {
    pub fn new(setup: Setup, seed: u64) -> Result<Self> {
        let name = "saga";
        check_setup(name, setup.obj.as_ref(), &setup.x0, &StepSchedule::constant(0.0))?;
        if let StepSchedule::PerNode { .. } = setup.schedule {
            return Err(Error::method(name, "a single machine has no per-node steps"));
        }
        setup.schedule.validate(1)?;
        let obj = setup.obj;
        let x = DMatrix::from_column_slice(setup.x0.nrows(), 1, setup.x0.column_mean().as_slice());
        let table = GradientTable::pooled(obj.as_ref(), x.as_slice());
        let locate = (0..obj.nodes())
            .flat_map(|i| (0..obj.components(i)).map(move |j| (i, j)))
            .collect();
        let mut metadata = base_metadata(&setup.schedule, &[], &GradientSource::Full);
        metadata.insert("oracle_seed".into(), seed.to_string());
        Ok(Saga {
            obj,
            schedule: setup.schedule,
            seed,
            table,
            locate,
            x,
            round: 0,
            evals: 1.0,
            metadata,
        })
    }

    pub fn table(&self) -> &GradientTable {
        &self.table
    }

    /// The estimator for component `flat` at the current state, without
    /// updating the table.
    pub fn estimator(&self, flat: usize) -> Vec<f64> {
        let p = self.x.nrows();
        let (i, j) = self.locate[flat];
        let mut fresh = vec![0.0; p];
        self.obj.component_gradient(i, j, self.x.as_slice(), &mut fresh);
        let mut out = vec![0.0; p];
        self.table.estimate(flat, &fresh, &mut out);
        out
    }
}

impl Method for Saga {
    fn name(&self) -> &str {
        "saga"
    }

    fn round(&self) -> usize {
        self.round
    }

    fn step(&mut self) -> Result<()> {
        let k = self.round;
        let p = self.x.nrows();
        let mut g = DMatrix::zeros(p, 1);
        if k == 0 {
            g.copy_from_slice(self.table.average().as_slice());
        } else {
            let flat = rng::node_round_stream(self.seed, 0, k).random_range(0..self.table.len());
            let (i, j) = self.locate[flat];
            let mut fresh = vec![0.0; p];
            self.obj.component_gradient(i, j, self.x.as_slice(), &mut fresh);
            self.table.estimate(flat, &fresh, g.as_mut_slice());
            self.table.replace(flat, &fresh);
            self.evals += 1.0 / self.table.len() as f64;
        }
        descend(&mut self.x, &g, &self.schedule, k);
        self.round += 1;
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
