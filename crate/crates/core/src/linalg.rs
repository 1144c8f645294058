//! Small dense helpers shared by the weight and problem modules.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub const POWER_TOL: f64 = 1e-13;
pub const POWER_MAX_ITER: usize = 1_000_000;

/// Largest singular value of `m`, by power iteration on `mᵀm`.
pub fn spectral_norm(m: &DMatrix<f64>) -> Result<f64> {
    let gram = m.transpose() * m;
    let n = gram.nrows();
    if n == 0 || gram.amax() == 0.0 {
        return Ok(0.0);
    }
    // A fixed, non-symmetric start vector avoids being orthogonal to the top
    // singular direction for the structured matrices we feed in.
    let mut v = DVector::from_fn(n, |i, _| 1.0 + (i as f64 + 1.0).sqrt().fract());
    v /= v.norm();
    let mut prev = 0.0;
    for it in 0..POWER_MAX_ITER {
        let w = &gram * &v;
        let lambda = w.norm();
        if lambda == 0.0 {
            return Ok(0.0);
        }
        v = w / lambda;
        if it > 0 && (lambda - prev).abs() <= POWER_TOL * lambda {
            return Ok(lambda.sqrt());
        }
        prev = lambda;
    }
    Err(Error::NoConvergence {
        iterations: POWER_MAX_ITER,
        residual: f64::NAN,
    })
}

/// `diag(d) * m * diag(e)`.
pub fn scale_rows_cols(m: &DMatrix<f64>, d: &DVector<f64>, e: &DVector<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| d[i] * m[(i, j)] * e[j])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_svd() {
        let m = DMatrix::from_fn(6, 4, |i, j| ((i * 7 + j * 3) % 5) as f64 - 1.7);
        let want = m.clone().svd(false, false).singular_values.max();
        let got = spectral_norm(&m).unwrap();
        assert!((got - want).abs() < 1e-10 * want);
    }

    #[test]
    fn zero_matrix() {
        assert_eq!(spectral_norm(&DMatrix::zeros(3, 3)).unwrap(), 0.0);
    }
}
