//! Stochastic and variance-reduced methods.
//!
//! SGD, DSGD, GT-DSGD, SGP and SAB are the deterministic recursions of
//! [`crate::algorithms`] fed by a [`StochasticOracle`]; the constructors
//! below only attach the oracle. SAGA and GT-SAGA keep gradient tables.

mod gt_saga;
mod saga;
mod speedup;

pub use gt_saga::GtSaga;
pub use saga::Saga;
pub use speedup::{iterations_to_target, speedup_study, Arm, SpeedupCell};

use std::sync::Arc;

use crate::algorithms::{Centralized, Diffusion, Push, Setup, Tracking};
use crate::error::Result;
use crate::problems::{GradientSource, StochasticOracle};
use crate::weights::MixingMatrix;

fn attach(setup: Setup, oracle: StochasticOracle) -> Setup {
    setup.with_source(GradientSource::Stochastic(oracle))
}

pub fn sgd(setup: Setup, oracle: StochasticOracle) -> Result<Centralized> {
    Centralized::sgd(attach(setup, oracle))
}

pub fn dsgd(setup: Setup, w: Arc<MixingMatrix>, oracle: StochasticOracle) -> Result<Diffusion> {
    Diffusion::dsgd(attach(setup, oracle), w)
}

pub fn gt_dsgd(setup: Setup, w: Arc<MixingMatrix>, oracle: StochasticOracle) -> Result<Tracking> {
    Tracking::gt_dsgd(attach(setup, oracle), w)
}

pub fn sgp(setup: Setup, b: Arc<MixingMatrix>, oracle: StochasticOracle) -> Result<Push> {
    Push::sgp(attach(setup, oracle), b)
}

pub fn sab(setup: Setup, a: Arc<MixingMatrix>, b: Arc<MixingMatrix>, oracle: StochasticOracle) -> Result<Tracking> {
    Tracking::sab(attach(setup, oracle), a, b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algorithms::testing::*;
    use crate::method::Method;
    use crate::problems::Sampling;
    use crate::schedule::StepSchedule;

    fn silent(seed: u64) -> StochasticOracle {
        StochasticOracle::new(Sampling::AdditiveNoise { sigma2: 0.0 }, seed)
    }

    fn lockstep(a: &mut dyn Method, b: &mut dyn Method, rounds: usize) {
        for _ in 0..rounds {
            a.step().unwrap();
            b.step().unwrap();
            assert_eq!(a.estimates().as_ref(), b.estimates().as_ref());
        }
    }

    #[test]
    fn zero_variance_matches_deterministic() {
        let n = 6;
        let obj = small_ls(n, 31);
        let w = doubly(n, 31);
        let (a, b) = directed_pair(n, 31);
        let alpha = StepSchedule::constant(0.05 / obj.constants().ell);
        let s = || Setup::zeros(obj.clone(), alpha.clone());
        lockstep(&mut sgd(s(), silent(1)).unwrap(), &mut Centralized::cgd(s()).unwrap(), 100);
        lockstep(
            &mut dsgd(s(), w.clone(), silent(2)).unwrap(),
            &mut Diffusion::dgd(s(), w.clone()).unwrap(),
            100,
        );
        lockstep(
            &mut gt_dsgd(s(), w.clone(), silent(3)).unwrap(),
            &mut Tracking::gt_dgd(s(), w).unwrap(),
            100,
        );
        lockstep(
            &mut sgp(s(), b.clone(), silent(4)).unwrap(),
            &mut Push::gradient_push(s(), b.clone()).unwrap(),
            100,
        );
        lockstep(
            &mut sab(s(), a.clone(), b.clone(), silent(5)).unwrap(),
            &mut Tracking::ab(s(), a, b).unwrap(),
            100,
        );
    }

    #[test]
    fn single_node_sab_is_sgd() {
        let obj = small_ls(1, 32);
        let alpha = StepSchedule::constant(0.05 / obj.constants().ell);
        let oracle = StochasticOracle::new(Sampling::Component { batch: 1 }, 9);
        let s = || Setup::zeros(obj.clone(), alpha.clone());
        let mut m = sab(s(), trivial(), trivial(), oracle).unwrap();
        let mut c = sgd(s(), oracle).unwrap();
        // SAB samples x_{k+1} with round k+1 and SGD samples x_k with round k.
        lockstep(&mut m, &mut c, 200);
    }
}
