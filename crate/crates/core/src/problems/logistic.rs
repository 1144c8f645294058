use log::{debug, warn};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{Constants, Objective};
use crate::error::{Error, Result};
use crate::rng;

const SOLVER_TOL: f64 = 1e-12;
const SOLVER_MAX_ITER: usize = 200;

/// Ridge-regularized logistic loss over `(w, b)`, one component per sample.
///
/// The parameter vector stacks the weights `w` (length `p`) and the bias `b`.
/// The ridge term sits inside every component and leaves the bias free.
#[derive(Debug, Clone)]
pub struct Logistic {
    features: usize,
    // Samples of node `i` are the columns of `z[i]`.
    z: Vec<DMatrix<f64>>,
    labels: Vec<Vec<f64>>,
    lambda: f64,
    x_star: DVector<f64>,
    constants: Constants,
}

/// Synthetic binary classification data from a random linear teacher.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LogisticSpec {
    pub samples: usize,
    pub features: usize,
    pub lambda: f64,
    /// Probability of flipping a teacher label.
    #[serde(default = "default_flip")]
    pub label_noise: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_flip() -> f64 {
    0.1
}

impl LogisticSpec {
    /// Features as columns of a `features × samples` matrix, labels in {+1, −1}.
    pub fn pooled(&self) -> (DMatrix<f64>, Vec<f64>) {
        let mut r = rng::stream(&[self.seed, 0x106]);
        let p = self.features;
        let teacher: Vec<f64> = (0..p).map(|_| StandardNormal.sample(&mut r)).collect();
        let bias: f64 = StandardNormal.sample(&mut r);
        let mut z = DMatrix::zeros(p, self.samples);
        let mut y = Vec::with_capacity(self.samples);
        for s in 0..self.samples {
            let mut t = bias * 0.5;
            for k in 0..p {
                let v: f64 = StandardNormal.sample(&mut r);
                z[(k, s)] = v;
                t += teacher[k] * v;
            }
            let mut label = if t >= 0.0 { 1.0 } else { -1.0 };
            if r.random::<f64>() < self.label_noise {
                label = -label;
            }
            y.push(label);
        }
        (z, y)
    }

    pub fn build(&self, nodes: usize) -> Result<Logistic> {
        let (z, y) = self.pooled();
        Logistic::partition(&z, &y, nodes, self.lambda)
    }
}

fn softplus(u: f64) -> f64 {
    if u > 0.0 {
        u + (-u).exp().ln_1p()
    } else {
        u.exp().ln_1p()
    }
}

/// `1 / (1 + exp(u))` without overflow.
fn sigmoid_neg(u: f64) -> f64 {
    if u >= 0.0 {
        let e = (-u).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + u.exp())
    }
}

impl Logistic {
    pub fn new(z: Vec<DMatrix<f64>>, labels: Vec<Vec<f64>>, lambda: f64) -> Result<Self> {
        if !(lambda > 0.0) {
            return Err(Error::Problem(format!("ridge coefficient must be positive, got {lambda}")));
        }
        if z.is_empty() || z.len() != labels.len() {
            return Err(Error::Problem("need one feature block per node".into()));
        }
        let p = z[0].nrows();
        for (zi, yi) in z.iter().zip(&labels) {
            if zi.nrows() != p || zi.ncols() != yi.len() || zi.ncols() == 0 {
                return Err(Error::Problem("feature and label shapes disagree".into()));
            }
            if yi.iter().any(|&v| v != 1.0 && v != -1.0) {
                return Err(Error::Problem("labels must be +1 or -1".into()));
            }
        }
        let n = z.len() as f64;
        let mut ell = lambda;
        for zi in &z {
            let m = zi.ncols() as f64;
            let sq: f64 = zi.column_iter().map(|c| c.norm_squared() + 1.0).sum();
            ell += sq / (4.0 * n * m);
        }
        let mut obj = Logistic {
            features: p,
            z,
            labels,
            lambda,
            x_star: DVector::zeros(p + 1),
            constants: Constants { mu: lambda, ell },
        };
        obj.x_star = obj.solve()?;
        Ok(obj)
    }

    pub fn partition(z: &DMatrix<f64>, y: &[f64], n: usize, lambda: f64) -> Result<Self> {
        if n == 0 || z.ncols() < n {
            return Err(Error::Problem(format!("cannot split {} samples across {n} nodes", z.ncols())));
        }
        let parts = super::even_partition(z.ncols(), n);
        let zs = parts.iter().map(|r| z.columns(r.start, r.len()).into_owned()).collect();
        let ys = parts.iter().map(|r| y[r.clone()].to_vec()).collect();
        Logistic::new(zs, ys, lambda)
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    fn margin(&self, i: usize, j: usize, x: &[f64]) -> f64 {
        let z = self.z[i].column(j);
        let mut t = x[self.features];
        for (a, b) in z.iter().zip(x) {
            t += a * b;
        }
        self.labels[i][j] * t
    }

    /// Per-component smoothness `‖(z, 1)‖² / 4 + λ`.
    pub fn component_smoothness(&self, i: usize, j: usize) -> f64 {
        (self.z[i].column(j).norm_squared() + 1.0) / 4.0 + self.lambda
    }

    fn hessian(&self, x: &[f64]) -> DMatrix<f64> {
        let d = self.features + 1;
        let n = self.z.len() as f64;
        let mut h = DMatrix::zeros(d, d);
        for (i, zi) in self.z.iter().enumerate() {
            let m = zi.ncols();
            let mut scaled = DMatrix::zeros(d, m);
            let mut plain = DMatrix::zeros(d, m);
            for j in 0..m {
                let s = sigmoid_neg(self.margin(i, j, x));
                let c = s * (1.0 - s) / (n * m as f64);
                for k in 0..self.features {
                    plain[(k, j)] = zi[(k, j)];
                    scaled[(k, j)] = c * zi[(k, j)];
                }
                plain[(self.features, j)] = 1.0;
                scaled[(self.features, j)] = c;
            }
            h.gemm(1.0, &scaled, &plain.transpose(), 1.0);
        }
        for k in 0..self.features {
            h[(k, k)] += self.lambda;
        }
        h
    }

    /// Damped Newton to `‖∇F‖ ≤ 1e-12`.
    fn solve(&self) -> Result<DVector<f64>> {
        let d = self.features + 1;
        let mut x = DVector::zeros(d);
        let mut g = DVector::zeros(d);
        let mut best = f64::INFINITY;
        for it in 0..SOLVER_MAX_ITER {
            self.gradient(x.as_slice(), g.as_mut_slice());
            let gnorm = g.norm();
            best = best.min(gnorm);
            if gnorm <= SOLVER_TOL {
                debug!("logistic solver converged in {it} Newton steps");
                return Ok(x);
            }
            let h = self.hessian(x.as_slice());
            let step = h
                .cholesky()
                .ok_or_else(|| Error::Problem("logistic Hessian not positive definite".into()))?
                .solve(&(-&g));
            let f0 = self.value(x.as_slice());
            let slope = g.dot(&step);
            let mut t = 1.0;
            let mut accepted = false;
            for _ in 0..60 {
                let cand = &x + &step * t;
                if self.value(cand.as_slice()) <= f0 + 1e-4 * t * slope {
                    x = cand;
                    accepted = true;
                    break;
                }
                t *= 0.5;
            }
            if !accepted {
                // Near the optimum the objective decrease drowns in rounding;
                // the undamped step still shrinks the gradient.
                let cand = &x + &step;
                let mut gc = DVector::zeros(d);
                self.gradient(cand.as_slice(), gc.as_mut_slice());
                if gc.norm() < gnorm {
                    x = cand;
                } else {
                    break;
                }
            }
        }
        if best <= 1e3 * SOLVER_TOL {
            warn!("logistic solver stopped at gradient norm {best:e}");
            return Ok(x);
        }
        Err(Error::NoConvergence {
            iterations: SOLVER_MAX_ITER,
            residual: best,
        })
    }
}

impl Objective for Logistic {
    fn kind(&self) -> &'static str {
        "logistic"
    }

    fn nodes(&self) -> usize {
        self.z.len()
    }

    fn dim(&self) -> usize {
        self.features + 1
    }

    fn components(&self, i: usize) -> usize {
        self.z[i].ncols()
    }

    fn component_value(&self, i: usize, j: usize, x: &[f64]) -> f64 {
        let w = &x[..self.features];
        let ridge: f64 = w.iter().map(|v| v * v).sum::<f64>() * self.lambda / 2.0;
        softplus(-self.margin(i, j, x)) + ridge
    }

    fn component_gradient(&self, i: usize, j: usize, x: &[f64], out: &mut [f64]) {
        let y = self.labels[i][j];
        let c = -y * sigmoid_neg(self.margin(i, j, x));
        let z = self.z[i].column(j);
        for k in 0..self.features {
            out[k] = c * z[k] + self.lambda * x[k];
        }
        out[self.features] = c;
    }

    fn minimizer(&self) -> Option<&DVector<f64>> {
        Some(&self.x_star)
    }

    fn constants(&self) -> Constants {
        self.constants
    }
}

#[cfg(test)]
mod tests {
    use super::super::gradient_vec;
    use super::super::testing::*;
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn single_sample_at_origin() {
        let obj = Logistic::new(vec![DMatrix::zeros(1, 1)], vec![vec![1.0]], 1.0).unwrap();
        assert_abs_diff_eq!(
            obj.component_value(0, 0, &[0.0, 0.0]),
            std::f64::consts::LN_2,
            epsilon = 1e-15
        );
        let mut g = [0.0; 2];
        obj.component_gradient(0, 0, &[0.0, 0.0], &mut g);
        assert_eq!(g, [0.0, -0.5]);
    }

    #[test]
    fn extreme_margins_are_finite() {
        let z = DMatrix::from_element(1, 1, 1.0);
        let obj = Logistic::new(vec![z], vec![vec![1.0]], 1.0).unwrap();
        for t in [-800.0, 800.0] {
            assert!(obj.component_value(0, 0, &[t, 0.0]).is_finite());
            let mut g = [0.0; 2];
            obj.component_gradient(0, 0, &[t, 0.0], &mut g);
            assert!(g.iter().all(|v| v.is_finite()));
        }
    }

    #[test]
    fn synthetic_gradients_and_solver() {
        let spec = LogisticSpec {
            samples: 120,
            features: 5,
            lambda: 0.05,
            label_noise: 0.1,
            seed: 4,
        };
        let obj = spec.build(4).unwrap();
        let xs = obj.minimizer().unwrap();
        assert!(gradient_vec(&obj, xs.as_slice()).norm() <= 1e-12);
        let mut r = rng::stream(&[2]);
        let points: Vec<DVector<f64>> = (0..10)
            .map(|_| DVector::from_fn(6, |_, _| r.random_range(-2.0..2.0)))
            .collect();
        check_gradients(&obj, &points);
        for x in &points {
            check_local_average(&obj, x);
        }
        assert_eq!(obj.constants().mu, 0.05);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(Logistic::new(vec![DMatrix::zeros(1, 1)], vec![vec![1.0]], 0.0).is_err());
        assert!(Logistic::new(vec![DMatrix::zeros(1, 1)], vec![vec![0.5]], 1.0).is_err());
    }
}
