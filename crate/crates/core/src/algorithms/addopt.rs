use std::borrow::Cow;
use std::collections::BTreeMap;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use super::{base_metadata, check_matrix, check_setup, descend, divide_columns, gradients, mean_epochs, mix, track, Setup};
use crate::error::{Error, Result};
use crate::method::{Method, Stationary};
use crate::problems::{GradientSource, Objective};
use crate::weights::{Kind, MixingMatrix};

/// Gradient tracking with only column-stochastic weights:
///
/// ```text
/// x_{k+1} = B̃ x_k − α y_k
/// z_{k+1} = B̃ z_k
/// y_{k+1} = B y_k + g(x_{k+1}/z_{k+1}) − g(x_k/z_k)
/// ```
pub struct Addopt {
    obj: Arc<dyn Objective>,
    state_mix: Arc<MixingMatrix>,
    b: Arc<MixingMatrix>,
    schedule: crate::schedule::StepSchedule,
    source: GradientSource,
    x: DMatrix<f64>,
    z: DVector<f64>,
    w: DMatrix<f64>,
    y: DMatrix<f64>,
    g: DMatrix<f64>,
    pinned: bool,
    round: usize,
    evals: f64,
    metadata: BTreeMap<String, String>,
}

impl Addopt {
    /// `state_mix` is `B̃`, used for the states and the mass; `b` mixes the tracker.
    pub fn new(setup: Setup, state_mix: Arc<MixingMatrix>, b: Arc<MixingMatrix>) -> Result<Self> {
        let n = setup.obj.nodes();
        Self::build(setup, state_mix, b, DVector::from_element(n, 1.0), false)
    }

    /// Replaces the mass iterate by the fixed vector `z` (for instance the
    /// exact `n π`). The states are de-biased by `z` from round 0.
    pub fn with_pinned_mass(setup: Setup, state_mix: Arc<MixingMatrix>, b: Arc<MixingMatrix>, z: DVector<f64>) -> Result<Self> {
        if z.len() != setup.obj.nodes() || z.iter().any(|&v| !(v > 0.0)) {
            return Err(Error::method(
                "addopt",
                "pinned mass must be positive with one entry per node",
            ));
        }
        Self::build(setup, state_mix, b, z, true)
    }

    fn build(setup: Setup, state_mix: Arc<MixingMatrix>, b: Arc<MixingMatrix>, z: DVector<f64>, pinned: bool) -> Result<Self> {
        let name = "addopt";
        check_setup(name, setup.obj.as_ref(), &setup.x0, &setup.schedule)?;
        let n = setup.obj.nodes();
        check_matrix(name, "b_tilde", &state_mix, Kind::Column, n)?;
        check_matrix(name, "b", &b, Kind::Column, n)?;
        let mut metadata = base_metadata(&setup.schedule, &[("b_tilde", &state_mix), ("b", &b)], &setup.source);
        if pinned {
            metadata.insert("mass".into(), "pinned".into());
        }
        let w = divide_columns(&setup.x0, &z);
        let g = gradients(setup.obj.as_ref(), &setup.source, &w, 0);
        let evals = mean_epochs(setup.obj.as_ref(), &setup.source);
        Ok(Addopt {
            obj: setup.obj,
            state_mix,
            b,
            schedule: setup.schedule,
            source: setup.source,
            x: setup.x0,
            z,
            w,
            y: g.clone(),
            g,
            pinned,
            round: 0,
            evals,
            metadata,
        })
    }
}

impl Method for Addopt {
    fn name(&self) -> &str {
        "addopt"
    }

    fn round(&self) -> usize {
        self.round
    }

    fn step(&mut self) -> Result<()> {
        let k = self.round;
        let mut x_next = mix(&self.x, &self.state_mix);
        descend(&mut x_next, &self.y, &self.schedule, k);
        if !self.pinned {
            let z_next = self.state_mix.weights() * &self.z;
            if let Some(i) = z_next.iter().position(|&v| !(v > 0.0)) {
                return Err(Error::Breakdown {
                    method: "addopt".into(),
                    round: k + 1,
                    detail: format!("mass at node {} is {}", i + 1, z_next[i]),
                });
            }
            self.z = z_next;
        }
        let w_next = divide_columns(&x_next, &self.z);
        let g_next = gradients(self.obj.as_ref(), &self.source, &w_next, k + 1);
        let mut y_next = mix(&self.y, &self.b);
        track(&mut y_next, &self.g, &g_next);
        self.x = x_next;
        self.w = w_next;
        self.y = y_next;
        self.g = g_next;
        self.round += 1;
        self.evals += mean_epochs(self.obj.as_ref(), &self.source);
        Ok(())
    }

    fn estimates(&self) -> Cow<'_, DMatrix<f64>> {
        Cow::Borrowed(&self.w)
    }

    fn states(&self) -> &DMatrix<f64> {
        &self.x
    }

    fn tracker(&self) -> Option<&DMatrix<f64>> {
        Some(&self.y)
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

#[cfg(test)]
mod tests {
    use super::super::testing::*;
    use super::super::{Centralized, Tracking};
    use super::*;
    use crate::method::{run, Evaluator};
    use crate::metrics::Metric;
    use crate::schedule::StepSchedule;
    use crate::weights;

    #[test]
    fn single_node_is_gradient_descent() {
        let obj = small_ls(1, 2);
        let alpha = StepSchedule::constant(0.1 / obj.constants().ell);
        let mut m = Addopt::new(Setup::zeros(obj.clone(), alpha.clone()), trivial(), trivial()).unwrap();
        let mut gd = Centralized::cgd(Setup::zeros(obj, alpha)).unwrap();
        for _ in 0..200 {
            m.step().unwrap();
            gd.step().unwrap();
            assert_eq!(m.estimates().as_ref(), gd.states());
        }
    }

    #[test]
    fn tracker_sum_is_conserved_and_converges() {
        let n = 8;
        let obj = small_ls(n, 12);
        let (_, b) = directed_pair(n, 12);
        let ev = Evaluator::new(obj.clone());
        let mut m = Addopt::new(
            Setup::zeros(obj.clone(), StepSchedule::constant(0.05 / obj.constants().ell)),
            b.clone(),
            b,
        )
        .unwrap();
        let t = run(&mut m, &ev, &[Metric::MseOpt], 8000, 100).unwrap();
        let ysum = m.tracker().unwrap().column_sum();
        let gsum = m.g.column_sum();
        assert!((ysum - gsum).amax() < 1e-10);
        assert!(t.last(Metric::MseOpt).unwrap() < 1e-20, "{:?}", t.column(Metric::MseOpt));
    }

    #[test]
    fn pinned_mass_matches_transformed_ab() {
        let n = 7;
        let obj = small_ls(n, 13);
        let (a, b) = directed_pair(n, 13);
        let b_tilde = Arc::new(weights::row_to_column(&a).unwrap());
        let alpha = 0.05 / obj.constants().ell;
        let pi = a.pi().clone();
        let x0 = DMatrix::from_fn(4, n, |r, c| (r + 2 * c) as f64 * 0.1);
        let mut ab = Tracking::ab(
            Setup::new(obj.clone(), StepSchedule::constant(alpha), x0.clone()),
            a,
            b.clone(),
        )
        .unwrap();
        let scaled = DMatrix::from_fn(4, n, |r, c| n as f64 * pi[c] * x0[(r, c)]);
        let per_node = StepSchedule::PerNode {
            alphas: (0..n).map(|i| n as f64 * alpha * pi[i]).collect(),
        };
        let mut ad = Addopt::with_pinned_mass(Setup::new(obj, per_node, scaled), b_tilde, b, pi * n as f64).unwrap();
        for _ in 0..200 {
            ab.step().unwrap();
            ad.step().unwrap();
            assert!((ad.estimates().as_ref() - ab.states()).amax() < 1e-10);
        }
    }
}
