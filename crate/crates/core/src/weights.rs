//! Stochastic mixing matrices and their spectral objects.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::graph::{is_strongly_connected, Graph};
use crate::linalg::{self, POWER_MAX_ITER, POWER_TOL};

pub const SUM_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Row,
    Column,
    Doubly,
}

impl Kind {
    pub fn is_row(self) -> bool {
        matches!(self, Kind::Row | Kind::Doubly)
    }

    pub fn is_column(self) -> bool {
        matches!(self, Kind::Column | Kind::Doubly)
    }
}

/// Stationary distribution of a stochastic matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Perron {
    pub vector: DVector<f64>,
    /// False when some entry of the limit vector is zero (e.g. the star
    /// matrices, where only the root carries weight).
    pub positive: bool,
}

#[derive(Debug, Clone)]
pub struct MixingMatrix {
    w: DMatrix<f64>,
    wt: DMatrix<f64>,
    kind: Kind,
    perron: Perron,
    sigma: Option<f64>,
    lambda_w: Option<f64>,
}

impl MixingMatrix {
    /// Wraps a dense matrix after checking nonnegativity, positive diagonal
    /// and the stochasticity implied by `kind`.
    pub fn from_dense(w: DMatrix<f64>, kind: Kind) -> Result<Self> {
        if !w.is_square() || w.nrows() == 0 {
            return Err(Error::Weights("matrix must be square and nonempty".into()));
        }
        let n = w.nrows();
        if w.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
            return Err(Error::Weights("entries must be finite and nonnegative".into()));
        }
        if (0..n).any(|i| w[(i, i)] <= 0.0) {
            return Err(Error::Weights("every self-weight must be positive".into()));
        }
        if kind.is_row() {
            for i in 0..n {
                let s = w.row(i).sum();
                if (s - 1.0).abs() > SUM_TOL {
                    return Err(Error::Weights(format!("row {} sums to {s}", i + 1)));
                }
            }
        }
        if kind.is_column() {
            for r in 0..n {
                let s = w.column(r).sum();
                if (s - 1.0).abs() > SUM_TOL {
                    return Err(Error::Weights(format!("column {} sums to {s}", r + 1)));
                }
            }
        }
        let perron = perron_of(&w, kind)?;
        let sigma = if perron.positive {
            Some(contraction_of(&w, kind, &perron.vector)?)
        } else {
            None
        };
        let lambda_w = if kind == Kind::Doubly {
            let centered = w.map(|v| v - 1.0 / n as f64);
            Some(linalg::spectral_norm(&centered)?)
        } else {
            None
        };
        Ok(MixingMatrix {
            wt: w.transpose(),
            w,
            kind,
            perron,
            sigma,
            lambda_w,
        })
    }

    pub fn n(&self) -> usize {
        self.w.nrows()
    }

    pub fn kind(&self) -> Kind {
        self.kind
    }

    pub fn weights(&self) -> &DMatrix<f64> {
        &self.w
    }

    /// Transpose, used to mix node-per-column state matrices as `X Wᵀ`.
    pub fn transposed(&self) -> &DMatrix<f64> {
        &self.wt
    }

    pub fn perron(&self) -> &Perron {
        &self.perron
    }

    pub fn pi(&self) -> &DVector<f64> {
        &self.perron.vector
    }

    /// Weighted-norm distance from the rank-one limit; `None` when the
    /// stationary vector has zero entries.
    pub fn contraction_factor(&self) -> Result<f64> {
        self.sigma
            .ok_or_else(|| Error::Weights("contraction factor undefined: stationary vector has zero entries".into()))
    }

    pub fn second_singular_value(&self) -> Result<f64> {
        self.lambda_w
            .ok_or_else(|| Error::Weights("second singular value needs a doubly stochastic matrix".into()))
    }

    /// Graph induced by the positive entries.
    pub fn graph(&self) -> Result<Graph> {
        Graph::from_pattern(&self.w)
    }

    /// Row-major CSV with 17 significant digits.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for i in 0..self.n() {
            let row: Vec<String> = (0..self.n()).map(|r| format!("{:.16e}", self.w[(i, r)])).collect();
            let _ = writeln!(out, "{}", row.join(","));
        }
        out
    }

    /// SHA-256 of the CSV dump.
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.to_csv().as_bytes()))
    }
}

fn perron_of(w: &DMatrix<f64>, kind: Kind) -> Result<Perron> {
    let n = w.nrows();
    if kind == Kind::Doubly {
        return Ok(Perron {
            vector: DVector::from_element(n, 1.0 / n as f64),
            positive: true,
        });
    }
    // Left eigenvector of a row-stochastic A is the right eigenvector of Aᵀ.
    let op = if kind == Kind::Row { w.transpose() } else { w.clone() };
    let mut v = DVector::from_element(n, 1.0 / n as f64);
    let mut residual = f64::INFINITY;
    for _ in 0..POWER_MAX_ITER {
        let mut next = &op * &v;
        let s = next.sum();
        next /= s;
        residual = (&next - &v).amax();
        v = next;
        if residual <= POWER_TOL {
            let positive = v.iter().all(|&x| x > POWER_TOL.sqrt());
            if !positive {
                v.iter_mut().filter(|x| x.abs() <= POWER_TOL.sqrt()).for_each(|x| *x = 0.0);
            }
            return Ok(Perron { vector: v, positive });
        }
    }
    Err(Error::NoConvergence {
        iterations: POWER_MAX_ITER,
        residual,
    })
}

fn contraction_of(w: &DMatrix<f64>, kind: Kind, pi: &DVector<f64>) -> Result<f64> {
    let n = w.nrows();
    let sq = pi.map(f64::sqrt);
    let inv = sq.map(|v| 1.0 / v);
    let scaled = if kind.is_row() {
        let limit = DMatrix::from_fn(n, n, |_, r| pi[r]);
        linalg::scale_rows_cols(&(w - limit), &sq, &inv)
    } else {
        let limit = DMatrix::from_fn(n, n, |i, _| pi[i]);
        linalg::scale_rows_cols(&(w - limit), &inv, &sq)
    };
    linalg::spectral_norm(&scaled)
}

fn require_connected(g: &Graph) -> Result<()> {
    if is_strongly_connected(g) {
        Ok(())
    } else {
        Err(Error::Weights("graph is not strongly connected".into()))
    }
}

/// `a[i][r] = 1 / |in-neighbours of i|`.
pub fn row_stochastic_uniform(g: &Graph) -> Result<MixingMatrix> {
    require_connected(g)?;
    row_uniform_unchecked(g)
}

/// Row-uniform weights on a graph where some node reaches every other node
/// but which need not be strongly connected, such as a pull star.
pub fn row_stochastic_rooted(g: &Graph) -> Result<MixingMatrix> {
    if !(0..g.n()).any(|v| g.reachable_from(v).iter().all(|&b| b)) {
        return Err(Error::Weights("no node reaches every other node".into()));
    }
    row_uniform_unchecked(g)
}

fn row_uniform_unchecked(g: &Graph) -> Result<MixingMatrix> {
    let n = g.n();
    let mut w = DMatrix::zeros(n, n);
    for i in 0..n {
        let nbrs = g.in_neighbors(i);
        for &r in nbrs {
            w[(i, r)] = 1.0 / nbrs.len() as f64;
        }
    }
    MixingMatrix::from_dense(w, Kind::Row)
}

/// `b[i][r] = 1 / |out-neighbours of r|`, so each sender splits its mass
/// evenly among its receivers.
pub fn column_stochastic_uniform(g: &Graph) -> Result<MixingMatrix> {
    require_connected(g)?;
    column_uniform_unchecked(g)
}

/// Column-uniform weights on a graph where every node reaches some common
/// node, such as a push star.
pub fn column_stochastic_rooted(g: &Graph) -> Result<MixingMatrix> {
    if !(0..g.n()).any(|v| g.reaching(v).iter().all(|&b| b)) {
        return Err(Error::Weights("no node is reached by every other node".into()));
    }
    column_uniform_unchecked(g)
}

fn column_uniform_unchecked(g: &Graph) -> Result<MixingMatrix> {
    let n = g.n();
    let mut w = DMatrix::zeros(n, n);
    for r in 0..n {
        let nbrs = g.out_neighbors(r);
        for &i in nbrs {
            w[(i, r)] = 1.0 / nbrs.len() as f64;
        }
    }
    MixingMatrix::from_dense(w, Kind::Column)
}

/// Metropolis weights on an undirected graph.
pub fn metropolis(g: &Graph) -> Result<MixingMatrix> {
    if g.is_directed() || !g.is_symmetric() {
        return Err(Error::Weights("metropolis weights need an undirected graph".into()));
    }
    require_connected(g)?;
    let n = g.n();
    let deg: Vec<usize> = (0..n).map(|i| g.in_neighbors(i).len() - 1).collect();
    let mut w = DMatrix::zeros(n, n);
    for i in 0..n {
        let mut off = 0.0;
        for &r in g.in_neighbors(i) {
            if r != i {
                let v = 1.0 / (1 + deg[i].max(deg[r])) as f64;
                w[(i, r)] = v;
                off += v;
            }
        }
        w[(i, i)] = 1.0 - off;
    }
    MixingMatrix::from_dense(w, Kind::Doubly)
}

/// Row-uniform weights averaged with the identity, for weight-balanced
/// digraphs whose uniform weights are also column stochastic.
pub fn lazy_uniform_doubly(g: &Graph) -> Result<MixingMatrix> {
    if !g.is_weight_balanced() {
        return Err(Error::Weights("lazy uniform weights need a weight-balanced graph".into()));
    }
    let n = g.n();
    let mut w = DMatrix::zeros(n, n);
    for i in 0..n {
        let nbrs = g.in_neighbors(i);
        let share = 1.0 / (2 * nbrs.len()) as f64;
        let mut off = 0.0;
        for &r in nbrs {
            if r != i {
                w[(i, r)] = share;
                off += share;
            }
        }
        w[(i, i)] = 1.0 - off;
    }
    MixingMatrix::from_dense(w, Kind::Doubly)
}

/// `Π W Π⁻¹` for `Π = diag(π)` of a row-stochastic matrix: column stochastic
/// with the same sparsity.
pub fn row_to_column(a: &MixingMatrix) -> Result<MixingMatrix> {
    let pi = a.pi();
    if !a.kind().is_row() || !a.perron().positive {
        return Err(Error::Weights(
            "transform needs a row-stochastic matrix with positive π".into(),
        ));
    }
    let inv = pi.map(|v| 1.0 / v);
    let w = linalg::scale_rows_cols(a.weights(), pi, &inv);
    MixingMatrix::from_dense(renormalize_columns(w), Kind::Column)
}

/// `Π⁻¹ B Π` for `Π = diag(π)` of a column-stochastic matrix: row stochastic.
pub fn column_to_row(b: &MixingMatrix) -> Result<MixingMatrix> {
    let pi = b.pi();
    if !b.kind().is_column() || !b.perron().positive {
        return Err(Error::Weights(
            "transform needs a column-stochastic matrix with positive π".into(),
        ));
    }
    let inv = pi.map(|v| 1.0 / v);
    let w = linalg::scale_rows_cols(b.weights(), &inv, pi);
    MixingMatrix::from_dense(renormalize_rows(w), Kind::Row)
}

// The transformed sums are 1 only up to the accuracy of π; push the rounding
// into the diagonal so the stochasticity check sees exact sums.
fn renormalize_columns(mut w: DMatrix<f64>) -> DMatrix<f64> {
    for r in 0..w.ncols() {
        let off: f64 = (0..w.nrows()).filter(|&i| i != r).map(|i| w[(i, r)]).sum();
        w[(r, r)] = 1.0 - off;
    }
    w
}

fn renormalize_rows(mut w: DMatrix<f64>) -> DMatrix<f64> {
    for i in 0..w.nrows() {
        let off: f64 = (0..w.ncols()).filter(|&r| r != i).map(|r| w[(i, r)]).sum();
        w[(i, i)] = 1.0 - off;
    }
    w
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{self, directed_exponential, directed_ring, geometric};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn star() -> (Graph, Graph) {
        let ga = Graph::new(4, [(1, 0), (2, 0), (3, 0)], true).unwrap();
        let gb = Graph::new(4, [(0, 1), (0, 2), (0, 3)], true).unwrap();
        (ga, gb)
    }

    fn two_node() -> Graph {
        Graph::undirected(2, [(0, 1)]).unwrap()
    }

    fn dense(rows: &[&[f64]]) -> DMatrix<f64> {
        DMatrix::from_fn(rows.len(), rows.len(), |i, j| rows[i][j])
    }

    fn eigen_oracle(m: &DMatrix<f64>) -> DVector<f64> {
        // Null vector of (M - I) from the SVD.
        let n = m.nrows();
        let svd = (m - DMatrix::identity(n, n)).svd(false, true);
        let vt = svd.v_t.unwrap();
        let idx = svd.singular_values.imin();
        let v = vt.row(idx).transpose();
        &v / v.sum()
    }

    #[test]
    fn single_node() {
        let g = Graph::new(1, [], false).unwrap();
        for m in [
            row_stochastic_uniform(&g).unwrap(),
            column_stochastic_uniform(&g).unwrap(),
            lazy_uniform_doubly(&g).unwrap(),
        ] {
            assert_eq!(m.weights(), &DMatrix::from_element(1, 1, 1.0));
        }
    }

    #[test]
    fn two_node_uniform() {
        let half = DMatrix::from_element(2, 2, 0.5);
        assert_eq!(row_stochastic_uniform(&two_node()).unwrap().weights(), &half);
        assert_eq!(column_stochastic_uniform(&two_node()).unwrap().weights(), &half);
        let lazy = lazy_uniform_doubly(&two_node()).unwrap();
        assert_eq!(lazy.weights(), &dense(&[&[0.75, 0.25], &[0.25, 0.75]]));
        assert_eq!(
            row_stochastic_uniform(&two_node()).unwrap().contraction_factor().unwrap(),
            0.0
        );
    }

    #[test]
    fn star_matrices() {
        let (ga, gb) = star();
        let a = row_stochastic_rooted(&ga).unwrap();
        let b = column_stochastic_rooted(&gb).unwrap();
        let want_a = dense(&[
            &[1.0, 0.0, 0.0, 0.0],
            &[0.5, 0.5, 0.0, 0.0],
            &[0.5, 0.0, 0.5, 0.0],
            &[0.5, 0.0, 0.0, 0.5],
        ]);
        assert_eq!(a.weights(), &want_a);
        assert_eq!(b.weights(), &want_a.transpose());
        // Non-strongly-connected: limit vector has zeros and σ is undefined.
        assert!(!a.perron().positive);
        assert_abs_diff_eq!(a.pi()[0], 1.0, epsilon = 1e-12);
        assert!(a.contraction_factor().is_err());
        let mut lim = a.weights().clone();
        for _ in 0..60 {
            lim = &lim * &lim;
        }
        for i in 0..4 {
            assert_abs_diff_eq!(lim[(i, 0)], 1.0, epsilon = 1e-12);
        }
        assert!(row_stochastic_uniform(&ga).is_err());
    }

    #[test]
    fn metropolis_small() {
        let p = metropolis(&graph::path(3).unwrap()).unwrap();
        assert_abs_diff_eq!(p.weights()[(0, 1)], 1.0 / 3.0);
        assert_abs_diff_eq!(p.weights()[(0, 0)], 2.0 / 3.0);
        let c = metropolis(&graph::complete(3).unwrap()).unwrap();
        assert!(c.weights().iter().all(|&v| (v - 1.0 / 3.0).abs() < 1e-15));
        assert!(c.second_singular_value().unwrap() < 1e-12);
        assert!(metropolis(&directed_ring(4).unwrap()).is_err());
    }

    #[test]
    fn lazy_on_exponential() {
        let m = lazy_uniform_doubly(&directed_exponential(4).unwrap()).unwrap();
        assert_eq!(m.kind(), Kind::Doubly);
        assert!(lazy_uniform_doubly(&star().0).is_err());
    }

    #[test]
    fn perron_of_cycle_column() {
        let b = column_stochastic_uniform(&directed_ring(3).unwrap()).unwrap();
        for v in b.pi().iter() {
            assert_abs_diff_eq!(*v, 1.0 / 3.0, epsilon = 1e-12);
        }
        let d = lazy_uniform_doubly(&directed_exponential(4).unwrap()).unwrap();
        assert_eq!(d.pi(), &DVector::from_element(4, 0.25));
    }

    #[test]
    fn second_singular_value_cases() {
        let n = 4;
        let avg = MixingMatrix::from_dense(DMatrix::from_element(n, n, 0.25), Kind::Doubly).unwrap();
        assert!(avg.second_singular_value().unwrap() < 1e-12);
        let id = MixingMatrix::from_dense(DMatrix::identity(n, n), Kind::Doubly).unwrap();
        assert_abs_diff_eq!(id.second_singular_value().unwrap(), 1.0, epsilon = 1e-12);
        let row = row_stochastic_uniform(&two_node()).unwrap();
        assert!(row.second_singular_value().is_err());
    }

    #[test]
    fn lazy_ring_contracts() {
        let m = lazy_uniform_doubly(&directed_ring(5).unwrap()).unwrap();
        let sigma = m.contraction_factor().unwrap();
        let centered = m.weights().map(|v| v - 0.2);
        let oracle = centered.svd(false, false).singular_values.max();
        assert_abs_diff_eq!(sigma, oracle, epsilon = 1e-10);
        assert!(sigma < 1.0);
    }

    #[test]
    fn geometric_metropolis_contracts() {
        let g = geometric(50, 0.3, 0.0, 5).unwrap().graph;
        let m = metropolis(&g).unwrap();
        let sigma = m.contraction_factor().unwrap();
        let oracle = m.weights().map(|v| v - 0.02).svd(false, false).singular_values.max();
        assert_abs_diff_eq!(sigma, oracle, epsilon = 1e-10);
        assert!(sigma < 1.0);
    }

    #[test]
    fn csv_has_seventeen_digits() {
        let m = metropolis(&graph::path(3).unwrap()).unwrap();
        let csv = m.to_csv();
        let first = csv.lines().next().unwrap().split(',').next().unwrap();
        let back: f64 = first.parse().unwrap();
        assert_eq!(back, m.weights()[(0, 0)]);
        assert_eq!(m.digest().len(), 64);
    }

    fn check_matrix(g: &Graph, m: &MixingMatrix) {
        let n = g.n();
        for i in 0..n {
            for r in 0..n {
                assert_eq!(m.weights()[(i, r)] > 0.0, g.has_edge(i, r), "pattern at ({i},{r})");
            }
        }
        let pi = m.pi();
        assert_abs_diff_eq!(pi.sum(), 1.0, epsilon = 1e-12);
        assert!(pi.iter().all(|&v| v > 0.0));
        let resid = if m.kind() == Kind::Column {
            (m.weights() * pi - pi).norm()
        } else {
            (m.weights().transpose() * pi - pi).norm()
        };
        assert!(resid <= 1e-10, "perron residual {resid}");
        let oracle = if m.kind() == Kind::Column {
            eigen_oracle(m.weights())
        } else {
            eigen_oracle(&m.weights().transpose())
        };
        assert!((pi - oracle).amax() < 1e-9);
        // Each squaring doubles the accumulated row-sum rounding, so stop at 2^20.
        let mut lim = m.weights().clone();
        for _ in 0..20 {
            lim = &lim * &lim;
        }
        for i in 0..n {
            for r in 0..n {
                let want = if m.kind() == Kind::Column { pi[i] } else { pi[r] };
                assert!((lim[(i, r)] - want).abs() < 1e-8);
            }
        }
        assert!(m.contraction_factor().unwrap() < 1.0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn constructed_matrices_are_consistent(n in 4usize..14, frac in 0.0f64..0.4, seed in 0u64..1000) {
            let g = geometric(n, 0.7, frac, seed).unwrap().graph;
            let a = row_stochastic_uniform(&g).unwrap();
            let b = column_stochastic_uniform(&g).unwrap();
            check_matrix(&g, &a);
            check_matrix(&g, &b);
            let col = row_to_column(&a).unwrap();
            for r in 0..n {
                prop_assert!((col.weights().column(r).sum() - 1.0).abs() < 1e-12);
            }
            let row = column_to_row(&b).unwrap();
            for i in 0..n {
                prop_assert!((row.weights().row(i).sum() - 1.0).abs() < 1e-12);
            }
            prop_assert!((col.pi() - a.pi()).amax() < 1e-9);
            prop_assert!((row.pi() - b.pi()).amax() < 1e-9);
            if !g.is_directed() {
                let w = metropolis(&g).unwrap();
                check_matrix(&g, &w);
            }
        }
    }
}
