use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::method::{Evaluator, Method};
use crate::metrics::Metric;

/// Independent runs (one per seed) of one method on one problem.
pub struct Arm {
    pub evaluator: Evaluator,
    pub runs: Vec<Box<dyn Method>>,
}

/// One row of a speedup table. Counts are `None` when the target was not
/// reached within the budget.
#[derive(Debug, Clone, PartialEq)]
pub struct SpeedupCell {
    pub nodes: usize,
    pub baseline_iterations: Option<usize>,
    pub method_iterations: Option<usize>,
    pub speedup: Option<f64>,
}

/// Steps every run in lockstep and returns the first round at which the
/// run-averaged `metric` is at or below `target`.
pub fn iterations_to_target(arm: &mut Arm, metric: Metric, target: f64, budget: usize) -> Result<Option<usize>> {
    if arm.runs.is_empty() {
        return Err(Error::Metric("speedup arm has no runs".into()));
    }
    let evaluator = &arm.evaluator;
    let average = |runs: &[Box<dyn Method>]| -> Result<f64> {
        let sum = runs
            .iter()
            .map(|m| evaluator.evaluate(m.as_ref(), metric))
            .sum::<Result<f64>>()?;
        Ok(sum / runs.len() as f64)
    };
    if average(&arm.runs)? <= target {
        return Ok(Some(0));
    }
    for k in 1..=budget {
        arm.runs.par_iter_mut().try_for_each(|m| m.step())?;
        let v = average(&arm.runs)?;
        if !v.is_finite() {
            return Err(Error::Breakdown {
                method: arm.runs[0].name().to_string(),
                round: k,
                detail: format!("{metric} became {v}"),
            });
        }
        if v <= target {
            return Ok(Some(k));
        }
    }
    Ok(None)
}

/// Iterations-to-target of `baseline` divided by those of `method(n)` for
/// each node count. Cells run in parallel and come back in input order.
pub fn speedup_study<F>(
    nodes: &[usize],
    metric: Metric,
    target: f64,
    budget: usize,
    mut baseline: Arm,
    method: F,
) -> Result<Vec<SpeedupCell>>
where
    F: Fn(usize) -> Result<Arm> + Sync,
{
    let base = iterations_to_target(&mut baseline, metric, target, budget)?;
    nodes
        .par_iter()
        .map(|&n| {
            let mut arm = method(n)?;
            let its = iterations_to_target(&mut arm, metric, target, budget)?;
            if its.is_none() {
                log::warn!("n = {n}: target {target:e} not reached within {budget} rounds");
            }
            let speedup = match (base, its) {
                (Some(b), Some(m)) if m > 0 => Some(b as f64 / m as f64),
                _ => None,
            };
            Ok(SpeedupCell {
                nodes: n,
                baseline_iterations: base,
                method_iterations: its,
                speedup,
            })
        })
        .collect()
}
