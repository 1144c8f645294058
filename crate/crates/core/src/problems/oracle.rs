use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::Objective;
use crate::rng::{self, StreamRng};

/// How a stochastic gradient is formed at a node.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum Sampling {
    /// Average of `batch` component gradients drawn uniformly with replacement.
    Component {
        #[serde(default = "default_batch")]
        batch: usize,
    },
    /// Full local gradient plus Gaussian noise of total variance `sigma2`.
    AdditiveNoise { sigma2: f64 },
}

fn default_batch() -> usize {
    1
}

impl Default for Sampling {
    fn default() -> Self {
        Sampling::Component { batch: 1 }
    }
}

/// Stochastic first-order oracle. Draws at node `i` and round `k` come from
/// the stream keyed by `(seed, i, k)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StochasticOracle {
    pub sampling: Sampling,
    pub seed: u64,
}

impl StochasticOracle {
    pub fn new(sampling: Sampling, seed: u64) -> Self {
        StochasticOracle { sampling, seed }
    }

    /// Writes a stochastic estimate of `∇f_i(x)`. Returns the component
    /// index when a single component was drawn.
    pub fn sample(&self, obj: &dyn Objective, i: usize, x: &[f64], round: usize, out: &mut [f64]) -> Option<usize> {
        let mut r = rng::node_round_stream(self.seed, i, round);
        match self.sampling {
            Sampling::Component { batch } => {
                let m = obj.components(i);
                let first = r.random_range(0..m);
                obj.component_gradient(i, first, x, out);
                if batch <= 1 {
                    return Some(first);
                }
                let mut buf = vec![0.0; out.len()];
                for _ in 1..batch {
                    obj.component_gradient(i, r.random_range(0..m), x, &mut buf);
                    out.iter_mut().zip(&buf).for_each(|(o, b)| *o += b);
                }
                let bf = batch as f64;
                out.iter_mut().for_each(|o| *o /= bf);
                None
            }
            Sampling::AdditiveNoise { sigma2 } => {
                obj.local_gradient(i, x, out);
                add_noise(&mut r, sigma2, out);
                None
            }
        }
    }

    /// Estimate of `∇F(x)` for a single machine holding all components.
    /// Uses node 0's stream so that a one-node run draws the same indices.
    pub fn sample_pooled(&self, obj: &dyn Objective, x: &[f64], round: usize, out: &mut [f64]) {
        let mut r = rng::node_round_stream(self.seed, 0, round);
        match self.sampling {
            Sampling::Component { batch } => {
                let pool = Pool::new(obj);
                let mut buf = vec![0.0; out.len()];
                for b in 0..batch.max(1) {
                    let (i, j) = pool.locate(r.random_range(0..pool.total));
                    let target: &mut [f64] = if b == 0 { &mut *out } else { &mut buf[..] };
                    obj.component_gradient(i, j, x, target);
                    let w = pool.weight(i);
                    if w != 1.0 {
                        target.iter_mut().for_each(|v| *v *= w);
                    }
                    if b > 0 {
                        out.iter_mut().zip(&buf).for_each(|(o, v)| *o += v);
                    }
                }
                if batch > 1 {
                    let bf = batch as f64;
                    out.iter_mut().for_each(|o| *o /= bf);
                }
            }
            Sampling::AdditiveNoise { sigma2 } => {
                obj.gradient(x, out);
                add_noise(&mut r, sigma2, out);
            }
        }
    }

    /// Component evaluations per call, in units of node `i`'s local epoch.
    pub fn epochs_per_call(&self, obj: &dyn Objective, i: usize) -> f64 {
        match self.sampling {
            Sampling::Component { batch } => batch.max(1) as f64 / obj.components(i) as f64,
            Sampling::AdditiveNoise { .. } => 1.0,
        }
    }
}

fn add_noise(r: &mut StreamRng, sigma2: f64, out: &mut [f64]) {
    if sigma2 == 0.0 {
        return;
    }
    let sd = (sigma2 / out.len() as f64).sqrt();
    let normal = Normal::new(0.0, sd).expect("finite noise level");
    for o in out.iter_mut() {
        *o += normal.sample(r);
    }
}

/// Flat indexing of all components across nodes. A pooled sample `(i, j)` is
/// scaled by `M / (n m_i)` so that its mean is `∇F`.
#[derive(Debug, Clone)]
pub(crate) struct Pool {
    offsets: Vec<usize>,
    counts: Vec<usize>,
    pub(crate) total: usize,
}

impl Pool {
    pub(crate) fn new(obj: &dyn Objective) -> Self {
        let counts: Vec<usize> = (0..obj.nodes()).map(|i| obj.components(i)).collect();
        let mut offsets = Vec::with_capacity(counts.len());
        let mut total = 0;
        for &c in &counts {
            offsets.push(total);
            total += c;
        }
        Pool { offsets, counts, total }
    }

    pub(crate) fn locate(&self, flat: usize) -> (usize, usize) {
        let i = self.offsets.partition_point(|&o| o <= flat) - 1;
        (i, flat - self.offsets[i])
    }

    pub(crate) fn weight(&self, i: usize) -> f64 {
        let n = self.counts.len();
        if self.counts.iter().all(|&c| c == self.counts[0]) {
            1.0
        } else {
            self.total as f64 / (n * self.counts[i]) as f64
        }
    }
}

/// Where a method gets its gradients from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GradientSource {
    Full,
    Stochastic(StochasticOracle),
}

impl GradientSource {
    pub fn local(&self, obj: &dyn Objective, i: usize, x: &[f64], round: usize, out: &mut [f64]) {
        match self {
            GradientSource::Full => obj.local_gradient(i, x, out),
            GradientSource::Stochastic(o) => {
                o.sample(obj, i, x, round, out);
            }
        }
    }

    pub fn pooled(&self, obj: &dyn Objective, x: &[f64], round: usize, out: &mut [f64]) {
        match self {
            GradientSource::Full => obj.gradient(x, out),
            GradientSource::Stochastic(o) => o.sample_pooled(obj, x, round, out),
        }
    }

    pub fn epochs_per_call(&self, obj: &dyn Objective, i: usize) -> f64 {
        match self {
            GradientSource::Full => 1.0,
            GradientSource::Stochastic(o) => o.epochs_per_call(obj, i),
        }
    }
}

/// Interval between full recomputations of a table's running average.
pub const TABLE_AUDIT_EVERY: usize = 1000;

/// Stored component gradients and their (weighted) average.
#[derive(Debug, Clone)]
pub struct GradientTable {
    entries: DMatrix<f64>,
    weights: Option<Vec<f64>>,
    average: DVector<f64>,
    updates: usize,
}

impl GradientTable {
    /// Table of node `i`'s components evaluated at `x`.
    pub fn for_node(obj: &dyn Objective, i: usize, x: &[f64]) -> Self {
        let m = obj.components(i);
        let mut entries = DMatrix::zeros(obj.dim(), m);
        for j in 0..m {
            obj.component_gradient(i, j, x, entries.column_mut(j).as_mut_slice());
        }
        let mut t = GradientTable {
            entries,
            weights: None,
            average: DVector::zeros(obj.dim()),
            updates: 0,
        };
        t.recompute();
        t
    }

    /// Table over every component of every node, weighted as in [`Pool`].
    pub fn pooled(obj: &dyn Objective, x: &[f64]) -> Self {
        let pool = Pool::new(obj);
        let mut entries = DMatrix::zeros(obj.dim(), pool.total);
        let mut weights = Vec::with_capacity(pool.total);
        let mut uniform = true;
        for flat in 0..pool.total {
            let (i, j) = pool.locate(flat);
            obj.component_gradient(i, j, x, entries.column_mut(flat).as_mut_slice());
            let w = pool.weight(i);
            uniform &= w == 1.0;
            weights.push(w);
        }
        let mut t = GradientTable {
            entries,
            weights: if uniform { None } else { Some(weights) },
            average: DVector::zeros(obj.dim()),
            updates: 0,
        };
        t.recompute();
        t
    }

    pub fn len(&self) -> usize {
        self.entries.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn average(&self) -> &DVector<f64> {
        &self.average
    }

    pub fn entry(&self, j: usize) -> nalgebra::DVectorView<'_, f64> {
        self.entries.column(j)
    }

    fn weight(&self, j: usize) -> f64 {
        self.weights.as_ref().map_or(1.0, |w| w[j])
    }

    /// Variance-reduced estimate `w_j (fresh − stored_j) + average`, written
    /// as `w_j fresh + (average − w_j stored_j)`.
    pub fn estimate(&self, j: usize, fresh: &[f64], out: &mut [f64]) {
        let w = self.weight(j);
        for (k, o) in out.iter_mut().enumerate() {
            let stored = self.entries[(k, j)];
            *o = if w == 1.0 {
                fresh[k] + (self.average[k] - stored)
            } else {
                w * fresh[k] + (self.average[k] - w * stored)
            };
        }
    }

    /// Replaces entry `j` and updates the running average.
    pub fn replace(&mut self, j: usize, fresh: &[f64]) {
        let m = self.len();
        if m == 1 {
            self.entries.column_mut(0).copy_from_slice(fresh);
            self.average.copy_from_slice(fresh);
            if let Some(w) = &self.weights {
                self.average *= w[0];
            }
        } else {
            let scale = self.weight(j) / m as f64;
            for (k, &f) in fresh.iter().enumerate() {
                self.average[k] += scale * (f - self.entries[(k, j)]);
                self.entries[(k, j)] = f;
            }
        }
        self.updates += 1;
        if self.updates.is_multiple_of(TABLE_AUDIT_EVERY) {
            let drift = self.drift();
            if drift > 1e-10 {
                log::warn!("gradient table average drifted by {drift:e}; recomputing");
            }
            self.recompute();
        }
    }

    /// Max deviation between the running average and a fresh recomputation.
    pub fn drift(&self) -> f64 {
        (&self.average - self.exact_average()).amax()
    }

    fn exact_average(&self) -> DVector<f64> {
        let mut sum = DVector::zeros(self.entries.nrows());
        for j in 0..self.len() {
            let w = self.weight(j);
            if w == 1.0 {
                sum += self.entries.column(j);
            } else {
                sum += self.entries.column(j) * w;
            }
        }
        sum / self.len() as f64
    }

    fn recompute(&mut self) {
        self.average = self.exact_average();
    }
}
