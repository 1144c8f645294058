//! Synchronous-round decentralized methods.
//!
//! Each node owns one column of the state matrices. A round reads only the
//! round-`k` snapshot and commits every node's round-`k+1` state at once, so
//! mixing is a single product `X Wᵀ`.

mod addopt;
mod centralized;
mod diffusion;
mod frost;
mod push;
mod row_scaled;
mod surplus;
mod tracking;

pub use addopt::Addopt;
pub use centralized::Centralized;
pub use diffusion::Diffusion;
pub use frost::Frost;
pub use push::Push;
pub use row_scaled::RowScaled;
pub use surplus::Surplus;
pub use tracking::{Momentum, Tracking};

use std::collections::BTreeMap;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::graph::has_common_root;
use crate::problems::{GradientSource, Objective};
use crate::schedule::StepSchedule;
use crate::weights::{Kind, MixingMatrix};

/// Estimates of `[e]_i` below this skip the gradient term.
pub const DIVISION_GUARD: f64 = 1e-14;

pub(crate) fn mix(x: &DMatrix<f64>, m: &MixingMatrix) -> DMatrix<f64> {
    x * m.transposed()
}

/// `x_i ← x_i − α_i d_i` column by column; zero steps leave `x_i` untouched.
pub(crate) fn descend(x: &mut DMatrix<f64>, dir: &DMatrix<f64>, schedule: &StepSchedule, k: usize) {
    for i in 0..x.ncols() {
        let a = schedule.alpha(k, i);
        if a == 0.0 {
            continue;
        }
        for (xv, dv) in x.column_mut(i).iter_mut().zip(dir.column(i).iter()) {
            *xv -= a * dv;
        }
    }
}

/// `y ← (y − old) + new`, the tracking correction. Grouping the difference
/// this way keeps `y = g` exact whenever it held before.
pub(crate) fn track(y: &mut DMatrix<f64>, old: &DMatrix<f64>, new: &DMatrix<f64>) {
    for ((yv, o), n) in y.iter_mut().zip(old.iter()).zip(new.iter()) {
        *yv = (*yv - o) + n;
    }
}

/// Column `i` holds node `i`'s gradient at column `i` of `x`.
pub(crate) fn gradients(obj: &dyn Objective, src: &GradientSource, x: &DMatrix<f64>, round: usize) -> DMatrix<f64> {
    let mut g = DMatrix::zeros(x.nrows(), x.ncols());
    for i in 0..x.ncols() {
        src.local(obj, i, x.column(i).as_slice(), round, g.column_mut(i).as_mut_slice());
    }
    g
}

pub(crate) fn mean_epochs(obj: &dyn Objective, src: &GradientSource) -> f64 {
    let n = obj.nodes();
    (0..n).map(|i| src.epochs_per_call(obj, i)).sum::<f64>() / n as f64
}

/// Divides each column by the matching divisor, or zeroes it when the divisor
/// is below [`DIVISION_GUARD`].
pub(crate) fn scale_columns(g: &mut DMatrix<f64>, div: impl Fn(usize) -> f64) {
    for i in 0..g.ncols() {
        let d = div(i);
        if d < DIVISION_GUARD {
            g.column_mut(i).fill(0.0);
        } else {
            g.column_mut(i).iter_mut().for_each(|v| *v /= d);
        }
    }
}

pub(crate) fn divide_columns(x: &DMatrix<f64>, z: &DVector<f64>) -> DMatrix<f64> {
    let mut w = x.clone();
    for i in 0..w.ncols() {
        let zi = z[i];
        w.column_mut(i).iter_mut().for_each(|v| *v /= zi);
    }
    w
}

pub(crate) fn check_setup(name: &str, obj: &dyn Objective, x0: &DMatrix<f64>, schedule: &StepSchedule) -> Result<()> {
    if x0.nrows() != obj.dim() || x0.ncols() != obj.nodes() {
        return Err(Error::method(
            name,
            format!(
                "initial state is {}x{}, expected {}x{}",
                x0.nrows(),
                x0.ncols(),
                obj.dim(),
                obj.nodes()
            ),
        ));
    }
    schedule.validate(obj.nodes()).map_err(|e| Error::method(name, e.to_string()))
}

pub(crate) fn check_matrix(name: &str, role: &str, m: &MixingMatrix, want: Kind, n: usize) -> Result<()> {
    if m.n() != n {
        return Err(Error::method(
            name,
            format!("matrix `{role}` is {}x{0}, expected {n} nodes", m.n()),
        ));
    }
    let ok = match want {
        Kind::Row => m.kind().is_row(),
        Kind::Column => m.kind().is_column(),
        Kind::Doubly => m.kind() == Kind::Doubly,
    };
    if ok {
        Ok(())
    } else {
        Err(Error::method(
            name,
            format!("matrix `{role}` must be {want:?} stochastic, got {:?}", m.kind()),
        ))
    }
}

pub(crate) fn check_root(name: &str, a: &MixingMatrix, b: &MixingMatrix) -> Result<()> {
    if has_common_root(&a.graph()?, &b.graph()?) {
        Ok(())
    } else {
        Err(Error::method(
            name,
            "no node roots a spanning tree of both the pull and the reversed push graph",
        ))
    }
}

pub(crate) fn base_metadata(
    schedule: &StepSchedule,
    mats: &[(&str, &MixingMatrix)],
    src: &GradientSource,
) -> BTreeMap<String, String> {
    let mut md = BTreeMap::new();
    md.insert("schedule".into(), schedule.describe());
    for (role, m) in mats {
        md.insert(format!("matrix_{role}_sha256"), m.digest());
    }
    if let GradientSource::Stochastic(o) = src {
        md.insert("oracle_seed".into(), o.seed.to_string());
        md.insert("oracle".into(), format!("{:?}", o.sampling));
    }
    md
}

/// Handles shared by every constructor.
#[derive(Clone)]
pub struct Setup {
    pub obj: Arc<dyn Objective>,
    pub schedule: StepSchedule,
    pub x0: DMatrix<f64>,
    pub source: GradientSource,
}

impl Setup {
    pub fn new(obj: Arc<dyn Objective>, schedule: StepSchedule, x0: DMatrix<f64>) -> Self {
        Setup {
            obj,
            schedule,
            x0,
            source: GradientSource::Full,
        }
    }

    pub fn with_source(mut self, source: GradientSource) -> Self {
        self.source = source;
        self
    }

    /// All-zero initial states.
    pub fn zeros(obj: Arc<dyn Objective>, schedule: StepSchedule) -> Self {
        let x0 = DMatrix::zeros(obj.dim(), obj.nodes());
        Setup::new(obj, schedule, x0)
    }
}
