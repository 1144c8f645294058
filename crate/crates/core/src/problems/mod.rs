//! Finite-sum objectives `F(x) = (1/n) Σ_i f_i(x)` with
//! `f_i = (1/m_i) Σ_j f_ij`.

mod consensus;
mod least_squares;
mod logistic;
mod oracle;

pub use consensus::ConsensusCost;
pub use least_squares::{LeastSquares, LeastSquaresSpec};
pub use logistic::{Logistic, LogisticSpec};
pub use oracle::{GradientSource, GradientTable, Sampling, StochasticOracle};

use std::fmt;

use nalgebra::DVector;

/// Strong convexity and smoothness of `F`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Constants {
    pub mu: f64,
    pub ell: f64,
}

impl Constants {
    pub fn kappa(&self) -> f64 {
        self.ell / self.mu
    }
}

pub trait Objective: Send + Sync + fmt::Debug {
    fn kind(&self) -> &'static str;

    fn nodes(&self) -> usize;

    fn dim(&self) -> usize;

    /// Number of components `m_i` held by node `i`.
    fn components(&self, i: usize) -> usize;

    fn component_value(&self, i: usize, j: usize, x: &[f64]) -> f64;

    /// Writes `∇f_ij(x)` into `out`.
    fn component_gradient(&self, i: usize, j: usize, x: &[f64], out: &mut [f64]);

    /// `∇f_i(x)`, accumulated in component order and divided by `m_i`.
    fn local_gradient(&self, i: usize, x: &[f64], out: &mut [f64]) {
        let m = self.components(i);
        if m == 1 {
            self.component_gradient(i, 0, x, out);
            return;
        }
        let mut buf = vec![0.0; out.len()];
        out.fill(0.0);
        for j in 0..m {
            self.component_gradient(i, j, x, &mut buf);
            for (o, b) in out.iter_mut().zip(&buf) {
                *o += b;
            }
        }
        let mf = m as f64;
        out.iter_mut().for_each(|o| *o /= mf);
    }

    fn local_value(&self, i: usize, x: &[f64]) -> f64 {
        let m = self.components(i);
        (0..m).map(|j| self.component_value(i, j, x)).sum::<f64>() / m as f64
    }

    fn value(&self, x: &[f64]) -> f64 {
        let n = self.nodes();
        (0..n).map(|i| self.local_value(i, x)).sum::<f64>() / n as f64
    }

    fn gradient(&self, x: &[f64], out: &mut [f64]) {
        let n = self.nodes();
        let mut buf = vec![0.0; out.len()];
        out.fill(0.0);
        for i in 0..n {
            self.local_gradient(i, x, &mut buf);
            for (o, b) in out.iter_mut().zip(&buf) {
                *o += b;
            }
        }
        let nf = n as f64;
        out.iter_mut().for_each(|o| *o /= nf);
    }

    fn total_components(&self) -> usize {
        (0..self.nodes()).map(|i| self.components(i)).sum()
    }

    /// Global minimizer, when known in closed form or precomputed.
    fn minimizer(&self) -> Option<&DVector<f64>>;

    fn constants(&self) -> Constants;

    /// Per-node targets when the objective is a consensus cost.
    fn consensus_targets(&self) -> Option<Vec<DVector<f64>>> {
        None
    }
}

/// `∇f_i(x)` as an owned vector.
pub fn local_gradient_vec(obj: &dyn Objective, i: usize, x: &[f64]) -> DVector<f64> {
    let mut out = DVector::zeros(obj.dim());
    obj.local_gradient(i, x, out.as_mut_slice());
    out
}

pub fn gradient_vec(obj: &dyn Objective, x: &[f64]) -> DVector<f64> {
    let mut out = DVector::zeros(obj.dim());
    obj.gradient(x, out.as_mut_slice());
    out
}

/// Splits `total` items into `n` contiguous blocks whose sizes differ by at most one.
pub fn even_partition(total: usize, n: usize) -> Vec<std::ops::Range<usize>> {
    let base = total / n;
    let extra = total % n;
    let mut start = 0;
    (0..n)
        .map(|i| {
            let len = base + usize::from(i < extra);
            let r = start..start + len;
            start += len;
            r
        })
        .collect()
}

#[cfg(test)]
pub(crate) mod testing {
    use super::*;

    /// Central finite-difference check of the component and local gradients.
    pub fn check_gradients(obj: &dyn Objective, points: &[DVector<f64>]) {
        let p = obj.dim();
        let h = 1e-6;
        for x in points {
            for i in 0..obj.nodes() {
                for j in 0..obj.components(i).min(3) {
                    let mut g = vec![0.0; p];
                    obj.component_gradient(i, j, x.as_slice(), &mut g);
                    let mut fd = vec![0.0; p];
                    for (k, v) in fd.iter_mut().enumerate() {
                        let mut xp = x.clone();
                        let mut xm = x.clone();
                        xp[k] += h;
                        xm[k] -= h;
                        *v = (obj.component_value(i, j, xp.as_slice()) - obj.component_value(i, j, xm.as_slice())) / (2.0 * h);
                    }
                    let diff: f64 = g.iter().zip(&fd).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
                    let scale: f64 = g.iter().map(|a| a * a).sum::<f64>().sqrt().max(1.0);
                    assert!(diff / scale < 1e-6, "node {i} comp {j}: rel err {}", diff / scale);
                }
            }
        }
    }

    /// Local gradient equals the mean of component gradients.
    pub fn check_local_average(obj: &dyn Objective, x: &DVector<f64>) {
        let p = obj.dim();
        for i in 0..obj.nodes() {
            let m = obj.components(i);
            let mut sum = vec![0.0; p];
            let mut g = vec![0.0; p];
            for j in 0..m {
                obj.component_gradient(i, j, x.as_slice(), &mut g);
                sum.iter_mut().zip(&g).for_each(|(s, v)| *s += v);
            }
            let local = local_gradient_vec(obj, i, x.as_slice());
            for k in 0..p {
                let want = sum[k] / m as f64;
                assert!((local[k] - want).abs() <= 1e-12 * want.abs().max(1.0));
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partition_is_even() {
        let parts = even_partition(11, 4);
        let lens: Vec<usize> = parts.iter().map(|r| r.len()).collect();
        assert_eq!(lens, vec![3, 3, 3, 2]);
        assert_eq!(parts.last().unwrap().end, 11);
    }
}
