use std::borrow::Cow;
use std::collections::BTreeMap;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use super::{base_metadata, check_matrix, check_setup, descend, gradients, mean_epochs, mix, scale_columns, track, Setup};
use crate::error::{Error, Result};
use crate::method::{Method, Stationary};
use crate::problems::{GradientSource, Objective};
use crate::schedule::StepSchedule;
use crate::weights::{Kind, MixingMatrix};

/// Gradient tracking with only row-stochastic weights:
///
/// ```text
/// x_{k+1} = A x_k − α ỹ_k
/// E_{k+1} = Ã E_k,   E_0 = I
/// ỹ_{k+1} = Ã ỹ_k + g(x_{k+1}) / diag(E_{k+1}) − g(x_k) / diag(E_k)
/// ```
pub struct Frost {
    obj: Arc<dyn Objective>,
    a: Arc<MixingMatrix>,
    a_track: Arc<MixingMatrix>,
    schedule: StepSchedule,
    source: GradientSource,
    x: DMatrix<f64>,
    e: DMatrix<f64>,
    // Fixed divisors replacing diag(E) when pinned.
    pinned: Option<DVector<f64>>,
    y: DMatrix<f64>,
    // Last scaled gradients g(x_k) / diag(E_k).
    d: DMatrix<f64>,
    round: usize,
    evals: f64,
    metadata: BTreeMap<String, String>,
}

impl Frost {
    /// `a` mixes the states; `a_track` mixes the tracker and the eigenvector estimates.
    pub fn new(setup: Setup, a: Arc<MixingMatrix>, a_track: Arc<MixingMatrix>) -> Result<Self> {
        Self::build(setup, a, a_track, None)
    }

    /// Divides node `i`'s gradients by `divisors[i]` instead of its running
    /// estimate, e.g. the exact stationary weight.
    pub fn with_pinned_divisors(
        setup: Setup,
        a: Arc<MixingMatrix>,
        a_track: Arc<MixingMatrix>,
        divisors: DVector<f64>,
    ) -> Result<Self> {
        if divisors.len() != setup.obj.nodes() || divisors.iter().any(|&v| !(v > 0.0)) {
            return Err(Error::method(
                "frost",
                "pinned divisors must be positive with one entry per node",
            ));
        }
        Self::build(setup, a, a_track, Some(divisors))
    }

    fn build(setup: Setup, a: Arc<MixingMatrix>, a_track: Arc<MixingMatrix>, pinned: Option<DVector<f64>>) -> Result<Self> {
        let name = "frost";
        check_setup(name, setup.obj.as_ref(), &setup.x0, &setup.schedule)?;
        let n = setup.obj.nodes();
        check_matrix(name, "a", &a, Kind::Row, n)?;
        check_matrix(name, "a_tilde", &a_track, Kind::Row, n)?;
        let mut metadata = base_metadata(&setup.schedule, &[("a", &a), ("a_tilde", &a_track)], &setup.source);
        if pinned.is_some() {
            metadata.insert("divisors".into(), "pinned".into());
        }
        let e = DMatrix::identity(n, n);
        let mut d = gradients(setup.obj.as_ref(), &setup.source, &setup.x0, 0);
        divide(&mut d, &e, pinned.as_ref());
        let evals = mean_epochs(setup.obj.as_ref(), &setup.source);
        Ok(Frost {
            obj: setup.obj,
            a,
            a_track,
            schedule: setup.schedule,
            source: setup.source,
            x: setup.x0,
            e,
            pinned,
            y: d.clone(),
            d,
            round: 0,
            evals,
            metadata,
        })
    }

    /// The tracker `ỹ`, which follows the gradient average only after
    /// rescaling by the stationary weights.
    pub fn scaled_tracker(&self) -> &DMatrix<f64> {
        &self.y
    }
}

fn divide(g: &mut DMatrix<f64>, e: &DMatrix<f64>, pinned: Option<&DVector<f64>>) {
    match pinned {
        Some(p) => scale_columns(g, |i| p[i]),
        None => scale_columns(g, |i| e[(i, i)]),
    }
}

impl Method for Frost {
    fn name(&self) -> &str {
        "frost"
    }

    fn round(&self) -> usize {
        self.round
    }

    fn step(&mut self) -> Result<()> {
        let k = self.round;
        let mut x_next = mix(&self.x, &self.a);
        descend(&mut x_next, &self.y, &self.schedule, k);
        let e_next = self.a_track.weights() * &self.e;
        let mut d_next = gradients(self.obj.as_ref(), &self.source, &x_next, k + 1);
        divide(&mut d_next, &e_next, self.pinned.as_ref());
        let mut y_next = mix(&self.y, &self.a_track);
        track(&mut y_next, &self.d, &d_next);
        self.x = x_next;
        self.e = e_next;
        self.y = y_next;
        self.d = d_next;
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

#[cfg(test)]
mod tests {
    use super::super::testing::*;
    use super::super::{Centralized, Tracking};
    use super::*;
    use crate::method::{run, Evaluator};
    use crate::metrics::Metric;
    use crate::weights;

    #[test]
    fn single_node_is_gradient_descent() {
        let obj = small_ls(1, 3);
        let alpha = StepSchedule::constant(0.1 / obj.constants().ell);
        let mut m = Frost::new(Setup::zeros(obj.clone(), alpha.clone()), trivial(), trivial()).unwrap();
        let mut gd = Centralized::cgd(Setup::zeros(obj, alpha)).unwrap();
        for _ in 0..200 {
            m.step().unwrap();
            gd.step().unwrap();
            assert_eq!(m.states(), gd.states());
        }
    }

    #[test]
    fn eigen_estimates_converge_and_method_is_exact() {
        let n = 8;
        let obj = small_ls(n, 14);
        let (a, _) = directed_pair(n, 14);
        let ev = Evaluator::new(obj.clone());
        let mut m = Frost::new(
            Setup::zeros(obj.clone(), StepSchedule::constant(0.01 / obj.constants().ell)),
            a.clone(),
            a.clone(),
        )
        .unwrap();
        let t = run(&mut m, &ev, &[Metric::MseOpt], 8000, 100).unwrap();
        for row in m.eigen_estimates().unwrap().row_iter() {
            assert!((row.sum() - 1.0).abs() < 1e-12);
            assert!((row.transpose() - a.pi()).amax() < 1e-8);
        }
        assert!(t.last(Metric::MseOpt).unwrap() < 1e-20, "{:?}", t.column(Metric::MseOpt));
    }

    #[test]
    fn pinned_divisors_match_transformed_ab() {
        let n = 7;
        let obj = small_ls(n, 15);
        let (a, b) = directed_pair(n, 15);
        let a_track = Arc::new(weights::column_to_row(&b).unwrap());
        let alpha = 0.05 / obj.constants().ell;
        let pi = b.pi().clone();
        let mut ab = Tracking::ab(Setup::zeros(obj.clone(), StepSchedule::constant(alpha)), a.clone(), b).unwrap();
        let per_node = StepSchedule::PerNode {
            alphas: (0..n).map(|i| alpha * pi[i]).collect(),
        };
        let mut fr = Frost::with_pinned_divisors(Setup::zeros(obj, per_node), a, a_track, pi.clone()).unwrap();
        for _ in 0..200 {
            ab.step().unwrap();
            fr.step().unwrap();
            assert!((fr.states() - ab.states()).amax() < 1e-10);
            let y = ab.tracker().unwrap();
            let scaled = DMatrix::from_fn(y.nrows(), n, |r, c| y[(r, c)] / pi[c]);
            let tol = 1e-10 * scaled.amax().max(1.0);
            assert!((fr.scaled_tracker() - scaled).amax() < tol);
        }
    }
}
