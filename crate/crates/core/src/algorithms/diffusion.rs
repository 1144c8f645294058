use std::borrow::Cow;
use std::collections::BTreeMap;
use std::sync::Arc;

use nalgebra::DMatrix;

use super::{base_metadata, check_matrix, check_setup, descend, gradients, mean_epochs, mix, Setup};
use crate::error::Result;
use crate::method::{Method, Stationary};
use crate::problems::{GradientSource, Objective};
use crate::schedule::StepSchedule;
use crate::weights::{Kind, MixingMatrix};

/// `x_{k+1}^i = Σ_r w_ir x_k^r − α_k g_i(x_k^i)` with a doubly stochastic `W`.
pub struct Diffusion {
    name: &'static str,
    obj: Arc<dyn Objective>,
    w: Arc<MixingMatrix>,
    schedule: StepSchedule,
    source: GradientSource,
    x: DMatrix<f64>,
    round: usize,
    evals: f64,
    metadata: BTreeMap<String, String>,
}

impl Diffusion {
    pub fn dgd(setup: Setup, w: Arc<MixingMatrix>) -> Result<Self> {
        Self::build("dgd", setup.with_source(GradientSource::Full), w)
    }

    pub fn dsgd(setup: Setup, w: Arc<MixingMatrix>) -> Result<Self> {
        Self::build("dsgd", setup, w)
    }

    fn build(name: &'static str, setup: Setup, w: Arc<MixingMatrix>) -> Result<Self> {
        check_setup(name, setup.obj.as_ref(), &setup.x0, &setup.schedule)?;
        check_matrix(name, "w", &w, Kind::Doubly, setup.obj.nodes())?;
        let metadata = base_metadata(&setup.schedule, &[("w", &w)], &setup.source);
        Ok(Diffusion {
            name,
            obj: setup.obj,
            w,
            schedule: setup.schedule,
            source: setup.source,
            x: setup.x0,
            round: 0,
            evals: 0.0,
            metadata,
        })
    }
}

impl Method for Diffusion {
    fn name(&self) -> &str {
        self.name
    }

    fn round(&self) -> usize {
        self.round
    }

    fn step(&mut self) -> Result<()> {
        let k = self.round;
        let g = gradients(self.obj.as_ref(), &self.source, &self.x, k);
        let mut next = mix(&self.x, &self.w);
        descend(&mut next, &g, &self.schedule, k);
        self.x = next;
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

    fn stationary(&self) -> Stationary {
        Stationary {
            row: Some(self.w.pi().clone()),
            column: Some(self.w.pi().clone()),
        }
    }

    fn epochs(&self) -> f64 {
        self.evals
    }

    fn metadata(&self) -> BTreeMap<String, String> {
        self.metadata.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::super::testing::*;
    use super::*;
    use crate::method::{run, Evaluator};
    use crate::metrics::{mse_to_opt, Metric};
    use crate::problems::ConsensusCost;
    use nalgebra::DVector;

    #[test]
    fn zero_step_is_average_consensus() {
        let n = 8;
        let vals: Vec<DVector<f64>> = (0..n).map(|i| DVector::from_vec(vec![i as f64, -(i as f64) * 0.5])).collect();
        let obj: Arc<dyn Objective> = Arc::new(ConsensusCost::new(vals.clone()).unwrap());
        let x0 = DMatrix::from_columns(&vals);
        let mut m = Diffusion::dgd(Setup::new(obj.clone(), StepSchedule::constant(0.0), x0), doubly(n, 3)).unwrap();
        for _ in 0..2000 {
            m.step().unwrap();
        }
        assert!(mse_to_opt(m.states(), obj.minimizer().unwrap()) < 1e-20);
    }

    #[test]
    fn rejects_non_doubly() {
        let (a, _) = directed_pair(5, 1);
        assert!(Diffusion::dgd(Setup::zeros(small_ls(5, 1), StepSchedule::constant(0.1)), a).is_err());
    }

    #[test]
    fn constant_step_plateau_shrinks_with_alpha() {
        let n = 6;
        let obj = small_ls(n, 4);
        let ev = Evaluator::new(obj.clone());
        let w = doubly(n, 4);
        let ell = obj.constants().ell;
        let mut last = Vec::new();
        for alpha in [0.2 / ell, 0.1 / ell] {
            let mut m = Diffusion::dgd(Setup::zeros(obj.clone(), StepSchedule::constant(alpha)), w.clone()).unwrap();
            let t = run(&mut m, &ev, &[Metric::MseOpt], 20000, 1000).unwrap();
            last.push(t.last(Metric::MseOpt).unwrap());
        }
        assert!(last[0] > 1e-8, "DGD should be inexact, got {}", last[0]);
        assert!(last[1] < last[0]);
    }

    #[test]
    fn leaves_optimum_under_heterogeneity() {
        let n = 5;
        let obj = small_ls(n, 6);
        let xs = obj.minimizer().unwrap().clone();
        let x0 = DMatrix::from_fn(4, n, |r, _| xs[r]);
        let mut m = Diffusion::dgd(Setup::new(obj.clone(), StepSchedule::constant(0.01), x0), doubly(n, 6)).unwrap();
        m.step().unwrap();
        assert!(mse_to_opt(m.states(), &xs) > 1e-12);
    }

    #[test]
    fn decaying_step_is_exact() {
        let n = 5;
        let obj = small_ls(n, 8);
        let ev = Evaluator::new(obj.clone());
        let alpha0 = 2.0 / obj.constants().mu;
        let mut m = Diffusion::dgd(Setup::zeros(obj.clone(), StepSchedule::decaying(alpha0)), doubly(n, 8)).unwrap();
        let t = run(&mut m, &ev, &[Metric::MseOpt], 200_000, 10_000).unwrap();
        assert!(t.last(Metric::MseOpt).unwrap() < 1e-4);
    }
}
