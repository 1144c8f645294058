use nalgebra::DVector;

use super::{Constants, Objective};
use crate::error::{Error, Result};

/// `f_i(x) = ½‖x − υ_i‖²`; its minimizer is the average of the `υ_i`.
#[derive(Debug, Clone)]
pub struct ConsensusCost {
    targets: Vec<DVector<f64>>,
    mean: DVector<f64>,
}

impl ConsensusCost {
    pub fn new(targets: Vec<DVector<f64>>) -> Result<Self> {
        let first = targets
            .first()
            .ok_or_else(|| Error::Problem("consensus cost needs at least one node".into()))?;
        let p = first.len();
        if targets.iter().any(|t| t.len() != p) {
            return Err(Error::Problem("all consensus targets must share a dimension".into()));
        }
        let mut mean = DVector::zeros(p);
        for t in &targets {
            mean += t;
        }
        mean /= targets.len() as f64;
        Ok(ConsensusCost { targets, mean })
    }

    pub fn targets(&self) -> &[DVector<f64>] {
        &self.targets
    }
}

impl Objective for ConsensusCost {
    fn kind(&self) -> &'static str {
        "consensus"
    }

    fn nodes(&self) -> usize {
        self.targets.len()
    }

    fn dim(&self) -> usize {
        self.mean.len()
    }

    fn components(&self, _i: usize) -> usize {
        1
    }

    fn component_value(&self, i: usize, _j: usize, x: &[f64]) -> f64 {
        0.5 * x
            .iter()
            .zip(self.targets[i].iter())
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
    }

    fn component_gradient(&self, i: usize, _j: usize, x: &[f64], out: &mut [f64]) {
        for ((o, a), b) in out.iter_mut().zip(x).zip(self.targets[i].iter()) {
            *o = a - b;
        }
    }

    fn minimizer(&self) -> Option<&DVector<f64>> {
        Some(&self.mean)
    }

    fn constants(&self) -> Constants {
        Constants { mu: 1.0, ell: 1.0 }
    }

    fn consensus_targets(&self) -> Option<Vec<DVector<f64>>> {
        Some(self.targets.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::super::local_gradient_vec;
    use super::super::testing::*;
    use super::*;
    use proptest::prelude::*;

    fn scalars(v: &[f64]) -> ConsensusCost {
        ConsensusCost::new(v.iter().map(|&a| DVector::from_element(1, a)).collect()).unwrap()
    }

    #[test]
    fn mean_is_minimizer() {
        assert_eq!(scalars(&[1.0, 2.0, 3.0]).minimizer().unwrap()[0], 2.0);
        assert_eq!(scalars(&[4.5, 4.5]).minimizer().unwrap()[0], 4.5);
        assert_eq!(scalars(&[1.0]).constants(), Constants { mu: 1.0, ell: 1.0 });
    }

    #[test]
    fn gradients() {
        let obj = ConsensusCost::new(
            (0..10)
                .map(|i| DVector::from_fn(3, |k, _| (i * 3 + k) as f64 * 0.37 - 2.0))
                .collect(),
        )
        .unwrap();
        let pts: Vec<DVector<f64>> = (0..10).map(|s| DVector::from_fn(3, |k, _| (s + k) as f64 * 0.5)).collect();
        check_gradients(&obj, &pts);
        let mean = obj.minimizer().unwrap();
        let manual = obj.targets().iter().fold(DVector::zeros(3), |acc, t| acc + t) / 10.0;
        assert!((mean - manual).amax() < 1e-15);
    }

    proptest! {
        #[test]
        fn gradient_difference_is_state_difference(
            a in prop::collection::vec(-10.0f64..10.0, 3),
            b in prop::collection::vec(-10.0f64..10.0, 3),
            t in prop::collection::vec(-10.0f64..10.0, 3),
        ) {
            let obj = ConsensusCost::new(vec![DVector::from_vec(t)]).unwrap();
            let ga = local_gradient_vec(&obj, 0, &a);
            let gb = local_gradient_vec(&obj, 0, &b);
            for k in 0..3 {
                prop_assert!(((gb[k] - ga[k]) - (b[k] - a[k])).abs() < 1e-12);
            }
        }
    }
}
