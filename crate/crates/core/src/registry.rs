//! Name-keyed constructors for every method, so configs can select them.

use std::collections::BTreeMap;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::algorithms::{Addopt, Centralized, Diffusion, Frost, Push, RowScaled, Setup, Surplus, Tracking};
use crate::error::{Error, Result};
use crate::method::Method;
use crate::problems::{Objective, Sampling, StochasticOracle};
use crate::schedule::StepSchedule;
use crate::stochastic::{self, GtSaga, Saga};
use crate::weights::{Kind, MixingMatrix};

/// The part a mixing matrix plays in a method.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    /// Doubly stochastic weights.
    W,
    /// Row-stochastic pull weights for the states.
    A,
    /// Column-stochastic push weights for the tracker or the mass.
    B,
    /// Row-stochastic weights for the tracker and eigenvector estimates.
    ATilde,
    /// Column-stochastic weights for the states and mass.
    BTilde,
}

impl Role {
    pub fn kind(self) -> Kind {
        match self {
            Role::W => Kind::Doubly,
            Role::A | Role::ATilde => Kind::Row,
            Role::B | Role::BTilde => Kind::Column,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Role::W => "w",
            Role::A => "a",
            Role::B => "b",
            Role::ATilde => "a_tilde",
            Role::BTilde => "b_tilde",
        }
    }
}

/// Everything a factory may draw on.
#[derive(Clone)]
pub struct BuildContext {
    pub obj: Arc<dyn Objective>,
    pub schedule: StepSchedule,
    pub x0: DMatrix<f64>,
    pub matrices: BTreeMap<Role, Arc<MixingMatrix>>,
    pub sampling: Sampling,
    pub seed: u64,
    pub beta: Option<f64>,
}

impl BuildContext {
    pub fn new(obj: Arc<dyn Objective>, schedule: StepSchedule) -> Self {
        let x0 = DMatrix::zeros(obj.dim(), obj.nodes());
        BuildContext {
            obj,
            schedule,
            x0,
            matrices: BTreeMap::new(),
            sampling: Sampling::default(),
            seed: 0,
            beta: None,
        }
    }

    pub fn with_matrix(mut self, role: Role, m: Arc<MixingMatrix>) -> Self {
        self.matrices.insert(role, m);
        self
    }

    pub fn matrix(&self, role: Role) -> Result<Arc<MixingMatrix>> {
        self.matrices
            .get(&role)
            .cloned()
            .ok_or_else(|| Error::config(format!("weights.{}", role.name()), "matrix not provided"))
    }

    pub fn setup(&self) -> Setup {
        Setup::new(self.obj.clone(), self.schedule.clone(), self.x0.clone())
    }

    pub fn oracle(&self) -> StochasticOracle {
        StochasticOracle::new(self.sampling, self.seed)
    }

    fn beta(&self, method: &str) -> Result<f64> {
        self.beta.ok_or_else(|| Error::method(method, "momentum `beta` is required"))
    }

    fn targets(&self, method: &str) -> Result<Vec<nalgebra::DVector<f64>>> {
        self.obj
            .consensus_targets()
            .ok_or_else(|| Error::method(method, "needs a consensus problem"))
    }
}

/// Builds one method from a [`BuildContext`].
pub trait MethodFactory: Send + Sync {
    fn name(&self) -> &'static str;

    /// Matrix roles the method reads.
    fn roles(&self) -> &'static [Role];

    /// Whether runs depend on the oracle seed.
    fn stochastic(&self) -> bool {
        false
    }

    /// Whether the method runs on one machine holding all data.
    fn centralized(&self) -> bool {
        false
    }

    fn build(&self, ctx: &BuildContext) -> Result<Box<dyn Method>>;
}

type BuildFn = fn(&BuildContext) -> Result<Box<dyn Method>>;

struct Builtin {
    name: &'static str,
    roles: &'static [Role],
    stochastic: bool,
    centralized: bool,
    build: BuildFn,
}

impl MethodFactory for Builtin {
    fn name(&self) -> &'static str {
        self.name
    }

    fn roles(&self) -> &'static [Role] {
        self.roles
    }

    fn stochastic(&self) -> bool {
        self.stochastic
    }

    fn centralized(&self) -> bool {
        self.centralized
    }

    fn build(&self, ctx: &BuildContext) -> Result<Box<dyn Method>> {
        (self.build)(ctx)
    }
}

fn boxed<M: Method + 'static>(m: Result<M>) -> Result<Box<dyn Method>> {
    m.map(|m| Box::new(m) as Box<dyn Method>)
}

const BUILTIN: &[Builtin] = &[
    Builtin {
        name: "cgd",
        roles: &[],
        stochastic: false,
        centralized: true,
        build: |c| boxed(Centralized::cgd(c.setup())),
    },
    Builtin {
        name: "dgd",
        roles: &[Role::W],
        stochastic: false,
        centralized: false,
        build: |c| boxed(Diffusion::dgd(c.setup(), c.matrix(Role::W)?)),
    },
    Builtin {
        name: "gradient_push",
        roles: &[Role::B],
        stochastic: false,
        centralized: false,
        build: |c| boxed(Push::gradient_push(c.setup(), c.matrix(Role::B)?)),
    },
    Builtin {
        name: "push_sum",
        roles: &[Role::B],
        stochastic: false,
        centralized: false,
        build: |c| boxed(Push::push_sum(&c.targets("push_sum")?, c.matrix(Role::B)?).map(|(m, _)| m)),
    },
    Builtin {
        name: "dgd_rs",
        roles: &[Role::A],
        stochastic: false,
        centralized: false,
        build: |c| boxed(RowScaled::dgd_rs(c.setup(), c.matrix(Role::A)?)),
    },
    Builtin {
        name: "gt_dgd",
        roles: &[Role::W],
        stochastic: false,
        centralized: false,
        build: |c| boxed(Tracking::gt_dgd(c.setup(), c.matrix(Role::W)?)),
    },
    Builtin {
        name: "ab",
        roles: &[Role::A, Role::B],
        stochastic: false,
        centralized: false,
        build: |c| boxed(Tracking::ab(c.setup(), c.matrix(Role::A)?, c.matrix(Role::B)?)),
    },
    Builtin {
        name: "abm",
        roles: &[Role::A, Role::B],
        stochastic: false,
        centralized: false,
        build: |c| {
            boxed(Tracking::abm(
                c.setup(),
                c.matrix(Role::A)?,
                c.matrix(Role::B)?,
                c.beta("abm")?,
            ))
        },
    },
    Builtin {
        name: "abn",
        roles: &[Role::A, Role::B],
        stochastic: false,
        centralized: false,
        build: |c| {
            boxed(Tracking::abn(
                c.setup(),
                c.matrix(Role::A)?,
                c.matrix(Role::B)?,
                c.beta("abn")?,
            ))
        },
    },
    Builtin {
        name: "addopt",
        roles: &[Role::BTilde, Role::B],
        stochastic: false,
        centralized: false,
        build: |c| boxed(Addopt::new(c.setup(), c.matrix(Role::BTilde)?, c.matrix(Role::B)?)),
    },
    Builtin {
        name: "frost",
        roles: &[Role::A, Role::ATilde],
        stochastic: false,
        centralized: false,
        build: |c| boxed(Frost::new(c.setup(), c.matrix(Role::A)?, c.matrix(Role::ATilde)?)),
    },
    Builtin {
        name: "surplus_consensus",
        roles: &[Role::A, Role::B],
        stochastic: false,
        centralized: false,
        build: |c| {
            let StepSchedule::Constant { alpha } = c.schedule else {
                return Err(Error::method("surplus_consensus", "needs a constant step"));
            };
            boxed(
                Surplus::surplus_consensus(
                    &c.targets("surplus_consensus")?,
                    c.matrix(Role::A)?,
                    c.matrix(Role::B)?,
                    alpha,
                )
                .map(|(m, _)| m),
            )
        },
    },
    Builtin {
        name: "sgd",
        roles: &[],
        stochastic: true,
        centralized: true,
        build: |c| boxed(stochastic::sgd(c.setup(), c.oracle())),
    },
    Builtin {
        name: "dsgd",
        roles: &[Role::W],
        stochastic: true,
        centralized: false,
        build: |c| boxed(stochastic::dsgd(c.setup(), c.matrix(Role::W)?, c.oracle())),
    },
    Builtin {
        name: "gt_dsgd",
        roles: &[Role::W],
        stochastic: true,
        centralized: false,
        build: |c| boxed(stochastic::gt_dsgd(c.setup(), c.matrix(Role::W)?, c.oracle())),
    },
    Builtin {
        name: "sgp",
        roles: &[Role::B],
        stochastic: true,
        centralized: false,
        build: |c| boxed(stochastic::sgp(c.setup(), c.matrix(Role::B)?, c.oracle())),
    },
    Builtin {
        name: "sab",
        roles: &[Role::A, Role::B],
        stochastic: true,
        centralized: false,
        build: |c| boxed(stochastic::sab(c.setup(), c.matrix(Role::A)?, c.matrix(Role::B)?, c.oracle())),
    },
    Builtin {
        name: "saga",
        roles: &[],
        stochastic: true,
        centralized: true,
        build: |c| boxed(Saga::new(c.setup(), c.seed)),
    },
    Builtin {
        name: "gt_saga",
        roles: &[Role::W],
        stochastic: true,
        centralized: false,
        build: |c| boxed(GtSaga::new(c.setup(), c.matrix(Role::W)?, c.seed)),
    },
];

/// Factories keyed by method name.
pub struct Registry {
    factories: BTreeMap<&'static str, Arc<dyn MethodFactory>>,
}

impl Registry {
    pub fn empty() -> Self {
        Registry {
            factories: BTreeMap::new(),
        }
    }

    /// Every method shipped with the crate.
    pub fn with_builtin() -> Self {
        let mut r = Registry::empty();
        for b in BUILTIN {
            let f: Arc<dyn MethodFactory> = Arc::new(Builtin { ..*b });
            r.factories.insert(b.name, f);
        }
        r
    }

    /// Adds a factory; a name can only be registered once.
    pub fn register(&mut self, factory: Arc<dyn MethodFactory>) -> Result<()> {
        let name = factory.name();
        if self.factories.contains_key(name) {
            return Err(Error::method(name, "already registered"));
        }
        self.factories.insert(name, factory);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<&Arc<dyn MethodFactory>> {
        self.factories.get(name).ok_or_else(|| Error::UnknownMethod(name.to_string()))
    }

    pub fn names(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.factories.keys().copied()
    }

    pub fn build(&self, name: &str, ctx: &BuildContext) -> Result<Box<dyn Method>> {
        self.get(name)?.build(ctx)
    }
}

impl Default for Registry {
    fn default() -> Self {
        Registry::with_builtin()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algorithms::testing::*;
    use crate::problems::ConsensusCost;
    use nalgebra::DVector;

    #[test]
    fn every_builtin_builds_and_steps() {
        let n = 5;
        let obj = small_ls(n, 70);
        let (a, b) = directed_pair(n, 70);
        let ctx = BuildContext::new(obj.clone(), StepSchedule::constant(0.01 / obj.constants().ell))
            .with_matrix(Role::W, doubly(n, 70))
            .with_matrix(Role::A, a.clone())
            .with_matrix(Role::ATilde, a)
            .with_matrix(Role::B, b.clone())
            .with_matrix(Role::BTilde, b);
        let ctx = BuildContext { beta: Some(0.2), ..ctx };
        let consensus: Arc<dyn Objective> =
            Arc::new(ConsensusCost::new((0..n).map(|i| DVector::from_element(2, i as f64)).collect()).unwrap());
        let reg = Registry::with_builtin();
        assert_eq!(reg.names().count(), 19);
        for name in reg.names() {
            let c = if name == "push_sum" || name == "surplus_consensus" {
                BuildContext {
                    obj: consensus.clone(),
                    x0: DMatrix::zeros(2, n),
                    ..ctx.clone()
                }
            } else {
                ctx.clone()
            };
            let mut m = reg.build(name, &c).unwrap_or_else(|e| panic!("{name}: {e}"));
            assert_eq!(m.name(), name);
            for _ in 0..3 {
                m.step().unwrap();
            }
        }
    }

    #[test]
    fn unknown_and_duplicate_names() {
        let mut reg = Registry::with_builtin();
        assert!(matches!(reg.get("extra"), Err(Error::UnknownMethod(_))));
        let dup = reg.get("dgd").unwrap().clone();
        assert!(reg.register(dup).is_err());
    }

    #[test]
    fn missing_matrix_is_reported() {
        let obj = small_ls(3, 71);
        let ctx = BuildContext::new(obj, StepSchedule::constant(0.01));
        let err = Registry::with_builtin().build("dgd", &ctx).err().unwrap();
        assert!(err.to_string().contains("weights.w"));
    }
}
