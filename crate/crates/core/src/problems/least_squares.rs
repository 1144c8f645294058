use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{Constants, Objective};
use crate::error::{Error, Result};
use crate::rng;

/// `f_i(x) = ‖y_i − H_i x‖²`, one component per measurement row.
#[derive(Debug, Clone)]
pub struct LeastSquares {
    dim: usize,
    // Row `j` of `H_i` is stored as column `j` of `ht[i]`.
    ht: Vec<DMatrix<f64>>,
    y: Vec<DVector<f64>>,
    x_star: DVector<f64>,
    constants: Constants,
}

/// Synthetic sensor-network instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LeastSquaresSpec {
    pub nodes: usize,
    pub dim: usize,
    #[serde(default = "default_rows")]
    pub rows_per_node: usize,
    #[serde(default = "default_std")]
    pub data_std: f64,
    #[serde(default = "default_std")]
    pub state_std: f64,
    #[serde(default = "default_noise")]
    pub noise_std: f64,
    /// Std of a per-node shift of the measured state; moves local minimizers apart.
    #[serde(default)]
    pub heterogeneity: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_rows() -> usize {
    20
}
fn default_std() -> f64 {
    10.0
}
fn default_noise() -> f64 {
    1.0
}

impl LeastSquaresSpec {
    pub fn new(nodes: usize, dim: usize, seed: u64) -> Self {
        LeastSquaresSpec {
            nodes,
            dim,
            rows_per_node: default_rows(),
            data_std: default_std(),
            state_std: default_std(),
            noise_std: default_noise(),
            heterogeneity: 0.0,
            seed,
        }
    }

    /// Draws sensing matrices and measurements node by node.
    pub fn pooled(&self) -> (DMatrix<f64>, DVector<f64>) {
        let p = self.dim;
        let mut r = rng::stream(&[self.seed, 0x15]);
        let x_true = DVector::from_fn(p, |_, _| self.state_std * gauss(&mut r));
        let rows = self.nodes * self.rows_per_node;
        let mut h = DMatrix::zeros(rows, p);
        let mut y = DVector::zeros(rows);
        for i in 0..self.nodes {
            let mut r = rng::stream(&[self.seed, 0x15, i as u64 + 1]);
            let shift = DVector::from_fn(p, |_, _| self.heterogeneity * gauss(&mut r));
            let local = &x_true + shift;
            for j in 0..self.rows_per_node {
                let row = i * self.rows_per_node + j;
                for c in 0..p {
                    h[(row, c)] = self.data_std * gauss(&mut r);
                }
                y[row] = h.row(row).dot(&local.transpose()) + self.noise_std * gauss(&mut r);
            }
        }
        (h, y)
    }

    pub fn build(&self) -> Result<LeastSquares> {
        let (h, y) = self.pooled();
        LeastSquares::partition(&h, &y, self.nodes)
    }
}

fn gauss(r: &mut rng::StreamRng) -> f64 {
    StandardNormal.sample(r)
}

impl LeastSquares {
    /// One sensing matrix and measurement vector per node.
    pub fn new(h: Vec<DMatrix<f64>>, y: Vec<DVector<f64>>) -> Result<Self> {
        if h.is_empty() || h.len() != y.len() {
            return Err(Error::Problem("need one (H_i, y_i) pair per node".into()));
        }
        let p = h[0].ncols();
        let mut gram = DMatrix::zeros(p, p);
        let mut rhs = DVector::zeros(p);
        for (hi, yi) in h.iter().zip(&y) {
            if hi.ncols() != p || hi.nrows() != yi.len() || hi.nrows() == 0 {
                return Err(Error::Problem("sensing matrix and measurement shapes disagree".into()));
            }
            gram += hi.transpose() * hi;
            rhs += hi.transpose() * yi;
        }
        let chol = gram
            .clone()
            .cholesky()
            .ok_or_else(|| Error::Problem("global Gram matrix is singular".into()))?;
        let x_star = chol.solve(&rhs);
        let n = h.len() as f64;
        let eig = (gram * (2.0 / n)).symmetric_eigenvalues();
        let constants = Constants {
            mu: eig.min(),
            ell: eig.max(),
        };
        if !(constants.mu > 0.0) {
            return Err(Error::Problem("global Gram matrix is singular".into()));
        }
        Ok(LeastSquares {
            dim: p,
            ht: h.iter().map(|m| m.transpose()).collect(),
            y,
            x_star,
            constants,
        })
    }

    /// Splits stacked rows evenly across `n` nodes in order.
    pub fn partition(h: &DMatrix<f64>, y: &DVector<f64>, n: usize) -> Result<Self> {
        if n == 0 || h.nrows() < n {
            return Err(Error::Problem(format!("cannot split {} rows across {n} nodes", h.nrows())));
        }
        let parts = super::even_partition(h.nrows(), n);
        let hs = parts.iter().map(|r| h.rows(r.start, r.len()).into_owned()).collect();
        let ys = parts.iter().map(|r| y.rows(r.start, r.len()).into_owned()).collect();
        LeastSquares::new(hs, ys)
    }

    pub fn sensing(&self, i: usize) -> DMatrix<f64> {
        self.ht[i].transpose()
    }

    pub fn measurements(&self, i: usize) -> &DVector<f64> {
        &self.y[i]
    }

    /// Smoothness of component `(i, j)`: `2 m_i ‖h_ij‖²`.
    pub fn component_smoothness(&self, i: usize, j: usize) -> f64 {
        2.0 * self.components(i) as f64 * self.ht[i].column(j).norm_squared()
    }

    fn residual(&self, i: usize, j: usize, x: &[f64]) -> f64 {
        let h = self.ht[i].column(j);
        let mut dot = 0.0;
        for (a, b) in h.iter().zip(x) {
            dot += a * b;
        }
        dot - self.y[i][j]
    }
}

impl Objective for LeastSquares {
    fn kind(&self) -> &'static str {
        "least_squares"
    }

    fn nodes(&self) -> usize {
        self.ht.len()
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn components(&self, i: usize) -> usize {
        self.ht[i].ncols()
    }

    fn component_value(&self, i: usize, j: usize, x: &[f64]) -> f64 {
        let r = self.residual(i, j, x);
        self.components(i) as f64 * r * r
    }

    fn component_gradient(&self, i: usize, j: usize, x: &[f64], out: &mut [f64]) {
        let c = 2.0 * self.components(i) as f64 * self.residual(i, j, x);
        for (o, h) in out.iter_mut().zip(self.ht[i].column(j).iter()) {
            *o = c * h;
        }
    }

    /// `2 H_iᵀ(H_i x − y_i)`; one component falls back to the component path.
    fn local_gradient(&self, i: usize, x: &[f64], out: &mut [f64]) {
        if self.components(i) == 1 {
            self.component_gradient(i, 0, x, out);
            return;
        }
        let ht = &self.ht[i];
        let xv = nalgebra::DVectorView::from_slice(x, self.dim);
        let mut r = ht.tr_mul(&xv);
        r -= &self.y[i];
        let mut g = nalgebra::DVectorViewMut::from_slice(out, self.dim);
        g.gemv(2.0, ht, &r, 0.0);
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
    use super::super::testing::*;
    use super::super::{gradient_vec, local_gradient_vec};
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::Rng;

    fn scalar(h: f64, y: f64) -> (DMatrix<f64>, DVector<f64>) {
        (DMatrix::from_element(1, 1, h), DVector::from_element(1, y))
    }

    #[test]
    fn scalar_problem() {
        let (h, y) = scalar(1.0, 3.0);
        let ls = LeastSquares::new(vec![h], vec![y]).unwrap();
        assert_eq!(ls.minimizer().unwrap()[0], 3.0);
        assert_abs_diff_eq!(ls.value(&[1.0]), 4.0);
        assert_eq!(ls.constants(), Constants { mu: 2.0, ell: 2.0 });
    }

    #[test]
    fn two_axis_nodes() {
        let h1 = DMatrix::from_row_slice(1, 2, &[1.0, 0.0]);
        let h2 = DMatrix::from_row_slice(1, 2, &[0.0, 1.0]);
        let ls = LeastSquares::new(
            vec![h1, h2],
            vec![DVector::from_element(1, -1.5), DVector::from_element(1, 4.0)],
        )
        .unwrap();
        let xs = ls.minimizer().unwrap();
        assert_abs_diff_eq!(xs[0], -1.5, epsilon = 1e-14);
        assert_abs_diff_eq!(xs[1], 4.0, epsilon = 1e-14);
    }

    #[test]
    fn singular_rejected() {
        let h = DMatrix::from_row_slice(1, 2, &[1.0, 1.0]);
        assert!(LeastSquares::new(vec![h], vec![DVector::from_element(1, 0.0)]).is_err());
    }

    #[test]
    fn synthetic_matches_oracles() {
        let spec = LeastSquaresSpec::new(50, 100, 3);
        let ls = spec.build().unwrap();
        assert_eq!(ls.nodes(), 50);
        assert_eq!(ls.components(7), 20);
        let (h, y) = spec.pooled();
        let oracle = h.clone().svd(true, true).solve(&y, 1e-14).unwrap();
        let xs = ls.minimizer().unwrap();
        assert!((xs - &oracle).norm() <= 1e-8 * oracle.norm());
        let g = gradient_vec(&ls, xs.as_slice());
        assert!(g.norm() <= 1e-8);
        let eig = (h.transpose() * &h * (2.0 / 50.0)).symmetric_eigen().eigenvalues;
        assert_abs_diff_eq!(ls.constants().mu, eig.min(), epsilon = 1e-8 * eig.max());
        assert_abs_diff_eq!(ls.constants().ell, eig.max(), epsilon = 1e-8 * eig.max());
    }

    #[test]
    fn gradients_and_averages() {
        let mut spec = LeastSquaresSpec::new(4, 6, 9);
        spec.rows_per_node = 5;
        spec.data_std = 1.0;
        spec.heterogeneity = 2.0;
        let ls = spec.build().unwrap();
        let mut r = rng::stream(&[1]);
        let points: Vec<DVector<f64>> = (0..10)
            .map(|_| DVector::from_fn(6, |_, _| r.random_range(-3.0..3.0)))
            .collect();
        check_gradients(&ls, &points);
        for x in &points {
            check_local_average(&ls, x);
            // Direct formula 2Hᵀ(Hx − y).
            for i in 0..4 {
                let h = ls.sensing(i);
                let direct = h.transpose() * (&h * x - ls.measurements(i)) * 2.0;
                let got = local_gradient_vec(&ls, i, x.as_slice());
                assert!((direct - got).norm() < 1e-10);
            }
        }
    }
}
