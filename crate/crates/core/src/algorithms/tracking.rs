use std::borrow::Cow;
use std::collections::BTreeMap;
use std::sync::Arc;

use nalgebra::DMatrix;

use super::{base_metadata, check_matrix, check_root, check_setup, descend, gradients, mean_epochs, mix, track, Setup};
use crate::error::{Error, Result};
use crate::method::{Method, Stationary};
use crate::problems::{GradientSource, Objective};
use crate::schedule::StepSchedule;
use crate::weights::{Kind, MixingMatrix};

/// Acceleration added to the state update of the push-pull recursion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Momentum {
    None,
    /// `+ β (x_k − x_{k−1})`, with `x_{−1} = x_0`.
    HeavyBall(f64),
    /// Extrapolate `x = s_{k+1} + β (s_{k+1} − s_k)`, with `s_0 = x_0`.
    Nesterov(f64),
}

impl Momentum {
    fn beta(self) -> Option<f64> {
        match self {
            Momentum::None => None,
            Momentum::HeavyBall(b) | Momentum::Nesterov(b) => Some(b),
        }
    }
}

/// Gradient tracking with a row-stochastic pull matrix `A` and a
/// column-stochastic push matrix `B`:
///
/// ```text
/// x_{k+1} = A x_k − α y_k
/// y_{k+1} = B y_k + g(x_{k+1}) − g(x_k),   y_0 = g(x_0)
/// ```
///
/// With `A = B = W` doubly stochastic this is GT-DGD.
pub struct Tracking {
    name: &'static str,
    obj: Arc<dyn Objective>,
    a: Arc<MixingMatrix>,
    b: Arc<MixingMatrix>,
    schedule: StepSchedule,
    source: GradientSource,
    momentum: Momentum,
    x: DMatrix<f64>,
    y: DMatrix<f64>,
    g: DMatrix<f64>,
    // x_{k−1} for heavy ball, s_k for Nesterov.
    prev: DMatrix<f64>,
    round: usize,
    evals: f64,
    metadata: BTreeMap<String, String>,
}

impl Tracking {
    pub fn gt_dgd(setup: Setup, w: Arc<MixingMatrix>) -> Result<Self> {
        Self::doubly("gt_dgd", setup.with_source(GradientSource::Full), w)
    }

    pub fn gt_dsgd(setup: Setup, w: Arc<MixingMatrix>) -> Result<Self> {
        Self::doubly("gt_dsgd", setup, w)
    }

    pub fn ab(setup: Setup, a: Arc<MixingMatrix>, b: Arc<MixingMatrix>) -> Result<Self> {
        Self::build("ab", setup.with_source(GradientSource::Full), a, b, Momentum::None)
    }

    pub fn sab(setup: Setup, a: Arc<MixingMatrix>, b: Arc<MixingMatrix>) -> Result<Self> {
        Self::build("sab", setup, a, b, Momentum::None)
    }

    pub fn abm(setup: Setup, a: Arc<MixingMatrix>, b: Arc<MixingMatrix>, beta: f64) -> Result<Self> {
        Self::build(
            "abm",
            setup.with_source(GradientSource::Full),
            a,
            b,
            Momentum::HeavyBall(beta),
        )
    }

    pub fn abn(setup: Setup, a: Arc<MixingMatrix>, b: Arc<MixingMatrix>, beta: f64) -> Result<Self> {
        Self::build("abn", setup.with_source(GradientSource::Full), a, b, Momentum::Nesterov(beta))
    }

    fn doubly(name: &'static str, setup: Setup, w: Arc<MixingMatrix>) -> Result<Self> {
        check_matrix(name, "w", &w, Kind::Doubly, setup.obj.nodes())?;
        Self::build(name, setup, w.clone(), w, Momentum::None)
    }

    fn build(name: &'static str, setup: Setup, a: Arc<MixingMatrix>, b: Arc<MixingMatrix>, momentum: Momentum) -> Result<Self> {
        check_setup(name, setup.obj.as_ref(), &setup.x0, &setup.schedule)?;
        let n = setup.obj.nodes();
        check_matrix(name, "a", &a, Kind::Row, n)?;
        check_matrix(name, "b", &b, Kind::Column, n)?;
        check_root(name, &a, &b)?;
        if let Some(beta) = momentum.beta() {
            if !(0.0..1.0).contains(&beta) {
                return Err(Error::method(name, format!("momentum must lie in [0, 1), got {beta}")));
            }
        }
        let momentum = if momentum.beta() == Some(0.0) {
            Momentum::None
        } else {
            momentum
        };
        let mut metadata = base_metadata(&setup.schedule, &[("a", &a), ("b", &b)], &setup.source);
        if let Some(beta) = momentum.beta() {
            metadata.insert("beta".into(), format!("{beta:e}"));
        }
        let g = gradients(setup.obj.as_ref(), &setup.source, &setup.x0, 0);
        let evals = mean_epochs(setup.obj.as_ref(), &setup.source);
        Ok(Tracking {
            name,
            obj: setup.obj,
            a,
            b,
            schedule: setup.schedule,
            source: setup.source,
            momentum,
            y: g.clone(),
            g,
            prev: setup.x0.clone(),
            x: setup.x0,
            round: 0,
            evals,
            metadata,
        })
    }

    /// Overrides the initial tracker, e.g. to start from an exact `y_0`.
    pub fn set_tracker(&mut self, y: DMatrix<f64>) {
        self.y = y;
    }

    /// Last gradients `g(x_k)` fed into the tracker.
    pub fn last_gradients(&self) -> &DMatrix<f64> {
        &self.g
    }
}

impl Method for Tracking {
    fn name(&self) -> &str {
        self.name
    }

    fn round(&self) -> usize {
        self.round
    }

    fn step(&mut self) -> Result<()> {
        let k = self.round;
        let mut next = mix(&self.x, &self.a);
        descend(&mut next, &self.y, &self.schedule, k);
        match self.momentum {
            Momentum::None => {}
            Momentum::HeavyBall(beta) => {
                for ((nv, xv), pv) in next.iter_mut().zip(self.x.iter()).zip(self.prev.iter()) {
                    *nv += beta * (xv - pv);
                }
                self.prev.copy_from(&self.x);
            }
            Momentum::Nesterov(beta) => {
                let s_next = next.clone();
                for (nv, sv) in next.iter_mut().zip(self.prev.iter()) {
                    *nv += beta * (*nv - sv);
                }
                self.prev = s_next;
            }
        }
        let g_next = gradients(self.obj.as_ref(), &self.source, &next, k + 1);
        let mut y_next = mix(&self.y, &self.b);
        track(&mut y_next, &self.g, &g_next);
        self.x = next;
        self.y = y_next;
        self.g = g_next;
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
        self.evals
    }

    fn metadata(&self) -> BTreeMap<String, String> {
        self.metadata.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::super::testing::*;
    use super::super::Centralized;
    use super::*;
    use crate::graph::Graph;
    use crate::method::{run, Evaluator};
    use crate::metrics::{self, Metric};
    use crate::problems::ConsensusCost;
    use crate::weights;
    use nalgebra::DVector;

    fn tracker_sum_matches(m: &Tracking) {
        let ysum = m.tracker().unwrap().column_sum();
        let gsum = m.last_gradients().column_sum();
        let scale = gsum.amax().max(1.0);
        assert!((ysum - gsum).amax() <= 1e-10 * scale);
    }

    #[test]
    fn conservation_for_every_variant() {
        let n = 7;
        let obj = small_ls(n, 3);
        let (a, b) = directed_pair(n, 3);
        let w = doubly(n, 3);
        let alpha = StepSchedule::constant(0.02 / obj.constants().ell);
        let s = || Setup::zeros(obj.clone(), alpha.clone());
        let mut all: Vec<Tracking> = vec![
            Tracking::gt_dgd(s(), w).unwrap(),
            Tracking::ab(s(), a.clone(), b.clone()).unwrap(),
            Tracking::abm(s(), a.clone(), b.clone(), 0.3).unwrap(),
            Tracking::abn(s(), a, b, 0.3).unwrap(),
        ];
        for m in &mut all {
            for _ in 0..300 {
                m.step().unwrap();
                tracker_sum_matches(m);
            }
        }
    }

    #[test]
    fn zero_momentum_is_ab() {
        let n = 5;
        let obj = small_ls(n, 4);
        let (a, b) = directed_pair(n, 4);
        let alpha = StepSchedule::constant(0.05 / obj.constants().ell);
        let s = || Setup::zeros(obj.clone(), alpha.clone());
        let mut ab = Tracking::ab(s(), a.clone(), b.clone()).unwrap();
        let mut abm = Tracking::abm(s(), a.clone(), b.clone(), 0.0).unwrap();
        let mut abn = Tracking::abn(s(), a, b, 0.0).unwrap();
        for _ in 0..100 {
            ab.step().unwrap();
            abm.step().unwrap();
            abn.step().unwrap();
            assert_eq!(ab.states(), abm.states());
            assert_eq!(ab.states(), abn.states());
        }
    }

    #[test]
    fn fixed_point_at_optimum() {
        let n = 6;
        let obj = small_ls(n, 5);
        let (a, b) = directed_pair(n, 5);
        let xs = obj.minimizer().unwrap().clone();
        let x0 = DMatrix::from_fn(4, n, |r, _| xs[r]);
        for alpha in [0.01, 0.05, 0.1] {
            let sched = StepSchedule::constant(alpha / obj.constants().ell);
            let mut m = Tracking::ab(Setup::new(obj.clone(), sched, x0.clone()), a.clone(), b.clone()).unwrap();
            // At the optimum the tracker's fixed point is zero.
            m.set_tracker(DMatrix::zeros(4, n));
            for _ in 0..100 {
                m.step().unwrap();
            }
            assert!(metrics::mse_to_opt(m.states(), &xs).sqrt() < 1e-9);
        }
    }

    #[test]
    fn single_node_heavy_ball_and_nesterov() {
        let obj = scalar_quadratic();
        let one = trivial();
        let (alpha, beta) = (0.3, 0.4);
        let setup = || Setup::zeros(obj.clone(), StepSchedule::constant(alpha));
        let mut hb = Tracking::abm(setup(), one.clone(), one.clone(), beta).unwrap();
        let mut nv = Tracking::abn(setup(), one.clone(), one, beta).unwrap();
        let grad = |x: f64| x - 3.0;
        let (mut x, mut xp) = (0.0f64, 0.0f64);
        let (mut s, mut xn) = (0.0f64, 0.0f64);
        for _ in 0..30 {
            let next = x - alpha * grad(x) + beta * (x - xp);
            xp = x;
            x = next;
            let s_next = xn - alpha * grad(xn);
            xn = s_next + beta * (s_next - s);
            s = s_next;
            hb.step().unwrap();
            nv.step().unwrap();
            assert!((hb.states()[0] - x).abs() < 1e-13);
            assert!((nv.states()[0] - xn).abs() < 1e-13);
        }
    }

    #[test]
    fn gt_dgd_single_node_is_gradient_descent() {
        let obj = small_ls(1, 7);
        let alpha = StepSchedule::constant(0.1 / obj.constants().ell);
        let mut gt = Tracking::gt_dgd(Setup::zeros(obj.clone(), alpha.clone()), trivial()).unwrap();
        let mut gd = Centralized::cgd(Setup::zeros(obj, alpha)).unwrap();
        for _ in 0..200 {
            gt.step().unwrap();
            gd.step().unwrap();
            assert_eq!(gt.states(), gd.states());
        }
    }

    #[test]
    fn leader_follower_star() {
        // Node 0 has a zero cost and is the only node taking steps.
        let ga = Graph::new(4, [(1, 0), (2, 0), (3, 0)], true).unwrap();
        let gb = Graph::new(4, [(0, 1), (0, 2), (0, 3)], true).unwrap();
        let a = Arc::new(weights::row_stochastic_rooted(&ga).unwrap());
        let b = Arc::new(weights::column_stochastic_rooted(&gb).unwrap());
        #[derive(Debug)]
        struct LeaderFollower(ConsensusCost);
        impl Objective for LeaderFollower {
            fn kind(&self) -> &'static str {
                "leader_follower"
            }
            fn nodes(&self) -> usize {
                4
            }
            fn dim(&self) -> usize {
                1
            }
            fn components(&self, _i: usize) -> usize {
                1
            }
            fn component_value(&self, i: usize, j: usize, x: &[f64]) -> f64 {
                if i == 0 {
                    0.0
                } else {
                    self.0.component_value(i, j, x)
                }
            }
            fn component_gradient(&self, i: usize, j: usize, x: &[f64], out: &mut [f64]) {
                if i == 0 {
                    out.fill(0.0)
                } else {
                    self.0.component_gradient(i, j, x, out)
                }
            }
            fn minimizer(&self) -> Option<&DVector<f64>> {
                None
            }
            fn constants(&self) -> crate::problems::Constants {
                self.0.constants()
            }
        }
        let targets = [0.0, 1.0, 2.0, 6.0].map(|v| DVector::from_element(1, v)).to_vec();
        let obj: Arc<dyn Objective> = Arc::new(LeaderFollower(ConsensusCost::new(targets).unwrap()));
        let sched = StepSchedule::PerNode {
            alphas: vec![0.05, 0.0, 0.0, 0.0],
        };
        let mut m = Tracking::ab(Setup::zeros(obj, sched), a, b).unwrap();
        for _ in 0..500 {
            m.step().unwrap();
        }
        // argmin of Σ_{i≥1} ½(x − υ_i)² is the mean of 1, 2, 6.
        assert!(m.states().iter().all(|&v| (v - 3.0).abs() < 1e-9), "{}", m.states());
    }

    #[test]
    fn exact_linear_convergence() {
        let n = 8;
        let obj = small_ls(n, 11);
        let (a, b) = directed_pair(n, 11);
        let ev = Evaluator::new(obj.clone());
        let mut m = Tracking::ab(
            Setup::zeros(obj.clone(), StepSchedule::constant(0.05 / obj.constants().ell)),
            a,
            b,
        )
        .unwrap();
        let t = run(
            &mut m,
            &ev,
            &[Metric::MseOpt, Metric::ConsensusErr, Metric::OptGap, Metric::TrackingErr],
            6000,
            20,
        )
        .unwrap();
        assert!(t.last(Metric::MseOpt).unwrap() < 1e-20);
        let ks = t.rounds_f64();
        let col = t.column(Metric::MseOpt).unwrap();
        let window: Vec<usize> = (0..ks.len()).filter(|&i| col[i] < 1e-3 && col[i] > 1e-22).collect();
        let xs: Vec<f64> = window.iter().map(|&i| ks[i]).collect();
        let vs: Vec<f64> = window.iter().map(|&i| col[i]).collect();
        let fit = metrics::rate_fit(&xs, &vs).unwrap();
        assert!(fit.slope < 0.0 && fit.r_squared > 0.99, "{fit:?} {vs:?}");
    }

    #[test]
    fn rejects_missing_root() {
        let ga = Graph::undirected(4, [(0, 1), (2, 3)]).unwrap();
        let a = Arc::new(
            weights::MixingMatrix::from_dense(
                DMatrix::from_row_slice(
                    4,
                    4,
                    &[0.5, 0.5, 0.0, 0.0, 0.5, 0.5, 0.0, 0.0, 0.0, 0.0, 0.5, 0.5, 0.0, 0.0, 0.5, 0.5],
                ),
                Kind::Doubly,
            )
            .unwrap(),
        );
        let _ = ga;
        assert!(Tracking::ab(Setup::zeros(small_ls(4, 1), StepSchedule::constant(0.01)), a.clone(), a).is_err());
    }
}
