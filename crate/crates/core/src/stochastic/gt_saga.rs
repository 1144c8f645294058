use std::borrow::Cow;
use std::collections::BTreeMap;
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::Rng;

use crate::algorithms::{base_metadata, check_matrix, check_setup, descend, mix, track, Setup};
use crate::error::Result;
use crate::method::{Method, Stationary};
use crate::problems::{GradientSource, GradientTable, Objective};
use crate::rng;
use crate::schedule::StepSchedule;
use crate::weights::{Kind, MixingMatrix};

/// Gradient tracking over a doubly stochastic `W` with a SAGA estimator at
/// each node:
///
/// ```text
/// x_{k+1} = W x_k − α y_k
/// g_{k+1} = ∇f_{i,τ}(x_{k+1}) − stored_τ + average     (τ from stream (seed, i, k+1))
/// y_{k+1} = W y_k + g_{k+1} − g_k,   y_0 = g_0 = ∇f_i(x_0)
/// ```
pub struct GtSaga {
    obj: Arc<dyn Objective>,
    w: Arc<MixingMatrix>,
    schedule: StepSchedule,
    seed: u64,
    tables: Vec<GradientTable>,
    x: DMatrix<f64>,
    y: DMatrix<f64>,
    g: DMatrix<f64>,
    round: usize,
    evals: f64,
    metadata: BTreeMap<String, String>,
}

impl GtSaga {
    pub fn new(setup: Setup, w: Arc<MixingMatrix>, seed: u64) -> Result<Self> {
        let name = "gt_saga";
        check_setup(name, setup.obj.as_ref(), &setup.x0, &setup.schedule)?;
        let n = setup.obj.nodes();
        check_matrix(name, "w", &w, Kind::Doubly, n)?;
        let mut metadata = base_metadata(&setup.schedule, &[("w", &w)], &GradientSource::Full);
        metadata.insert("oracle_seed".into(), seed.to_string());
        let tables: Vec<GradientTable> = (0..n)
            .map(|i| GradientTable::for_node(setup.obj.as_ref(), i, setup.x0.column(i).as_slice()))
            .collect();
        let mut g = DMatrix::zeros(setup.obj.dim(), n);
        for (i, t) in tables.iter().enumerate() {
            g.set_column(i, t.average());
        }
        Ok(GtSaga {
            obj: setup.obj,
            w,
            schedule: setup.schedule,
            seed,
            tables,
            x: setup.x0,
            y: g.clone(),
            g,
            round: 0,
            evals: 1.0,
            metadata,
        })
    }

    pub fn table(&self, i: usize) -> &GradientTable {
        &self.tables[i]
    }

    /// Node `i`'s estimator for component `j` at its current state, without
    /// updating the table.
    pub fn estimator(&self, i: usize, j: usize) -> Vec<f64> {
        let p = self.x.nrows();
        let mut fresh = vec![0.0; p];
        self.obj.component_gradient(i, j, self.x.column(i).as_slice(), &mut fresh);
        let mut out = vec![0.0; p];
        self.tables[i].estimate(j, &fresh, &mut out);
        out
    }

    /// Last estimator values `g_k`.
    pub fn last_estimates(&self) -> &DMatrix<f64> {
        &self.g
    }
}

impl Method for GtSaga {
    fn name(&self) -> &str {
        "gt_saga"
    }

    fn round(&self) -> usize {
        self.round
    }

    fn step(&mut self) -> Result<()> {
        let k = self.round;
        let (p, n) = self.x.shape();
        let mut x_next = mix(&self.x, &self.w);
        descend(&mut x_next, &self.y, &self.schedule, k);
        let mut g_next = DMatrix::zeros(p, n);
        let mut fresh = vec![0.0; p];
        for i in 0..n {
            let table = &mut self.tables[i];
            let j = rng::node_round_stream(self.seed, i, k + 1).random_range(0..table.len());
            self.obj.component_gradient(i, j, x_next.column(i).as_slice(), &mut fresh);
            table.estimate(j, &fresh, g_next.column_mut(i).as_mut_slice());
            table.replace(j, &fresh);
        }
        let mut y_next = mix(&self.y, &self.w);
        track(&mut y_next, &self.g, &g_next);
        self.x = x_next;
        self.y = y_next;
        self.g = g_next;
        self.round += 1;
        self.evals += self.tables.iter().map(|t| 1.0 / t.len() as f64).sum::<f64>() / n as f64;
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
    use super::*;
    use crate::algorithms::testing::*;
    use crate::algorithms::Tracking;
    use crate::method::{run, Evaluator};
    use crate::metrics::Metric;
    use crate::problems::{local_gradient_vec, LeastSquaresSpec};
    use crate::stochastic::Saga;
    use nalgebra::DVector;

    #[test]
    fn single_node_is_saga() {
        let obj = small_ls(1, 50);
        let alpha = StepSchedule::constant(0.01 / obj.constants().ell);
        let s = || Setup::zeros(obj.clone(), alpha.clone());
        let mut gt = GtSaga::new(s(), trivial(), 8).unwrap();
        let mut saga = Saga::new(s(), 8).unwrap();
        for _ in 0..300 {
            gt.step().unwrap();
            saga.step().unwrap();
            assert_eq!(gt.states(), saga.states());
        }
    }

    #[test]
    fn one_component_per_node_is_gt_dgd() {
        let n = 5;
        let mut spec = LeastSquaresSpec::new(n, 1, 51);
        spec.rows_per_node = 1;
        let obj: Arc<dyn Objective> = Arc::new(spec.build().unwrap());
        let w = doubly(n, 51);
        let alpha = StepSchedule::constant(0.05 / obj.constants().ell);
        let s = || Setup::zeros(obj.clone(), alpha.clone());
        let mut gt = GtSaga::new(s(), w.clone(), 3).unwrap();
        let mut gd = Tracking::gt_dgd(s(), w).unwrap();
        for _ in 0..200 {
            gt.step().unwrap();
            gd.step().unwrap();
            assert_eq!(gt.states(), gd.states());
        }
    }

    #[test]
    fn estimators_are_unbiased_and_tracker_is_conserved() {
        let n = 4;
        let obj = small_ls(n, 52);
        let mut m = GtSaga::new(
            Setup::zeros(obj.clone(), StepSchedule::constant(0.01 / obj.constants().ell)),
            doubly(n, 52),
            2,
        )
        .unwrap();
        for checkpoint in [0, 9, 120] {
            while m.round() < checkpoint {
                m.step().unwrap();
            }
            for i in 0..n {
                let mi = m.table(i).len();
                let mut mean = DVector::zeros(4);
                for j in 0..mi {
                    mean += DVector::from_vec(m.estimator(i, j));
                }
                mean /= mi as f64;
                let full = local_gradient_vec(obj.as_ref(), i, m.states().column(i).as_slice());
                assert!((mean - &full).amax() <= 1e-12 * full.amax().max(1.0));
            }
            let diff = m.tracker().unwrap().column_sum() - m.last_estimates().column_sum();
            assert!(diff.amax() < 1e-10);
        }
    }

    #[test]
    fn converges_linearly_to_the_exact_optimum() {
        let n = 6;
        let obj = small_ls(n, 53);
        let ev = Evaluator::new(obj.clone());
        let mut m = GtSaga::new(
            Setup::zeros(obj.clone(), StepSchedule::constant(0.02 / obj.constants().ell)),
            doubly(n, 53),
            4,
        )
        .unwrap();
        let t = run(&mut m, &ev, &[Metric::MseOpt], 30_000, 1000).unwrap();
        assert!(t.last(Metric::MseOpt).unwrap() < 1e-20, "{:?}", t.column(Metric::MseOpt));
    }
}
