//! Sweep cells: an instance recipe, a policy recipe and a horizon, run for a
//! number of seeded replications.

use crate::basedb::BaseDb;
use crate::baselines::{FixedArm, OnlineBse, Oracle};
use crate::engine::{
    replicate, run_episode, splitmix64, summarize, CellStats, CleanEventParams, EngineError, EpisodeOptions,
    EpisodeResult, Execution,
};
use crate::instance::{Arm, BanditInstance, DeclaredParams, InstanceError};
use crate::instances::{
    make_cz_instance, make_experiment_instance, make_multiscale_instance, make_static_failure_instance, Signs,
};
use crate::plan::BatchPlan;
use crate::policy::Policy;

/// Sign source of an instance recipe.
#[derive(Debug, Clone, PartialEq)]
pub enum SignChoice {
    Explicit(Vec<i8>),
    Seed(u64),
    /// Fresh signs for every replication, derived from its seed.
    PerReplication,
}

impl SignChoice {
    fn resolve(&self, replication_seed: u64) -> Signs {
        match self {
            SignChoice::Explicit(v) => Signs::Explicit(v.clone()),
            SignChoice::Seed(s) => Signs::Seed(*s),
            SignChoice::PerReplication => Signs::Seed(splitmix64(replication_seed ^ 0x5349_474e)),
        }
    }
}

/// Replacement values for the declared `(alpha, beta, L)` of an instance.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct DeclaredOverride {
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub lipschitz: Option<f64>,
}

impl DeclaredOverride {
    fn apply(&self, instance: BanditInstance) -> BanditInstance {
        let d = instance.declared();
        let declared = DeclaredParams {
            alpha: self.alpha.unwrap_or(d.alpha),
            beta: self.beta.unwrap_or(d.beta),
            lipschitz: self.lipschitz.unwrap_or(d.lipschitz),
            margin: d.margin,
        };
        instance.with_declared(declared)
    }
}

/// How to build the instance of a cell.
#[derive(Debug, Clone, PartialEq)]
pub enum InstanceSpec {
    Experiment {
        signs: SignChoice,
        declared: DeclaredOverride,
    },
    Cz {
        z: u64,
        alpha: f64,
        beta: f64,
        lipschitz: f64,
        dim: usize,
        signs: SignChoice,
    },
    Multiscale {
        batches: usize,
        alpha: f64,
        beta: f64,
        lipschitz: f64,
        dim: usize,
        horizon: u64,
        signs: SignChoice,
    },
    StaticFailure {
        z: u64,
        lipschitz: f64,
    },
    Constant {
        plus: f64,
        minus: f64,
        dim: usize,
        declared: DeclaredParams,
    },
}

impl InstanceSpec {
    pub fn name(&self) -> &'static str {
        match self {
            InstanceSpec::Experiment { .. } => "experiment",
            InstanceSpec::Cz { .. } => "cz",
            InstanceSpec::Multiscale { .. } => "multiscale",
            InstanceSpec::StaticFailure { .. } => "static_failure",
            InstanceSpec::Constant { .. } => "constant",
        }
    }

    pub fn build(&self, replication_seed: u64) -> Result<BanditInstance, InstanceError> {
        match self {
            InstanceSpec::Experiment { signs, declared } => {
                make_experiment_instance(&signs.resolve(replication_seed)).map(|i| declared.apply(i))
            }
            InstanceSpec::Cz {
                z,
                alpha,
                beta,
                lipschitz,
                dim,
                signs,
            } => make_cz_instance(*z, *alpha, *beta, *lipschitz, *dim, &signs.resolve(replication_seed)),
            InstanceSpec::Multiscale {
                batches,
                alpha,
                beta,
                lipschitz,
                dim,
                horizon,
                signs,
            } => make_multiscale_instance(
                *batches,
                *alpha,
                *beta,
                *lipschitz,
                *dim,
                *horizon,
                &signs.resolve(replication_seed),
            ),
            InstanceSpec::StaticFailure { z, lipschitz } => make_static_failure_instance(*z, *lipschitz),
            InstanceSpec::Constant {
                plus,
                minus,
                dim,
                declared,
            } => BanditInstance::constant(*plus, *minus, *dim, *declared),
        }
    }
}

/// How to build the policy of a cell.
#[derive(Debug, Clone, PartialEq)]
pub enum PolicySpec {
    BaseDb {
        plan: BatchPlan,
    },
    /// Static binning with `g` bins per axis on `plan`'s grid.
    StaticSe {
        plan: BatchPlan,
        g: u64,
    },
    OnlineBse {
        g: u64,
        c_thresh: f64,
    },
    Oracle,
    FixedArm {
        arm: Arm,
    },
}

impl PolicySpec {
    pub fn name(&self) -> &'static str {
        match self {
            PolicySpec::BaseDb { .. } => "basedb",
            PolicySpec::StaticSe { .. } => "static_se",
            PolicySpec::OnlineBse { .. } => "online_bse",
            PolicySpec::Oracle => "oracle",
            PolicySpec::FixedArm { .. } => "fixed_arm",
        }
    }

    /// Plan actually followed by the policy, if it is a binning policy.
    pub fn effective_plan(&self) -> Option<BatchPlan> {
        match self {
            PolicySpec::BaseDb { plan } => Some(plan.clone()),
            PolicySpec::StaticSe { plan, g } => plan.static_binning(*g).ok(),
            _ => None,
        }
    }

    /// `M` of the plan, or 1 for policies without one.
    pub fn batches(&self) -> usize {
        self.effective_plan().map_or(1, |p| p.batches())
    }

    /// Split factors (`10-4-1`) for binning policies, `g` for BSE, the arm for fixed-arm.
    pub fn label(&self) -> String {
        match self {
            PolicySpec::BaseDb { .. } | PolicySpec::StaticSe { .. } => {
                self.effective_plan().map(|p| p.splits_label()).unwrap_or_default()
            }
            PolicySpec::OnlineBse { g, .. } => g.to_string(),
            PolicySpec::Oracle => String::new(),
            PolicySpec::FixedArm { arm } => arm.to_string(),
        }
    }

    pub fn build(&self, instance: &BanditInstance, horizon: u64) -> Box<dyn Policy + Send> {
        match self {
            PolicySpec::BaseDb { plan } => Box::new(BaseDb::new(plan.clone())),
            PolicySpec::StaticSe { plan, g } => {
                Box::new(BaseDb::static_se(plan, *g).expect("static plan validated when the cell was built"))
            }
            PolicySpec::OnlineBse { g, c_thresh } => Box::new(OnlineBse::new(*g, horizon, instance.dim(), *c_thresh)),
            PolicySpec::Oracle => Box::new(Oracle::new(instance.clone(), horizon)),
            PolicySpec::FixedArm { arm } => Box::new(FixedArm::new(*arm, horizon)),
        }
    }

    fn monitor(&self) -> Option<CleanEventParams> {
        self.effective_plan().map(|p| CleanEventParams::from_plan(&p))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub id: String,
    /// Cells sharing a group differ only in `T`; slope fits run per group.
    pub group: String,
    pub instance: InstanceSpec,
    pub policy: PolicySpec,
    pub horizon: u64,
}

#[derive(Debug, Clone)]
pub struct CellOutput {
    pub cell: Cell,
    pub results: Vec<EpisodeResult>,
    pub stats: CellStats,
}

#[derive(Debug, thiserror::Error)]
pub enum CellError {
    #[error("cell {cell}: {source}")]
    Instance { cell: String, source: InstanceError },
    #[error("cell {cell}: {source}")]
    Engine { cell: String, source: EngineError },
}

/// Runs `reps` replications of `cell`.
pub fn run_cell(
    cell: &Cell,
    reps: usize,
    master_seed: u64,
    checkpoints: &[u64],
    keep_summaries: bool,
    execution: Execution,
) -> Result<CellOutput, CellError> {
    let options = EpisodeOptions {
        checkpoints: checkpoints.to_vec(),
        monitor: cell.policy.monitor(),
        keep_summaries,
    };
    let results = replicate(reps, master_seed, &cell.id, execution, |_, seed| {
        let instance = cell.instance.build(seed).map_err(|source| CellError::Instance {
            cell: cell.id.clone(),
            source,
        })?;
        let mut policy = cell.policy.build(&instance, cell.horizon);
        run_episode(&instance, &mut policy, cell.horizon, seed, &options).map_err(|source| CellError::Engine {
            cell: cell.id.clone(),
            source,
        })
    })
    .into_iter()
    .collect::<Result<Vec<_>, _>>()?;
    let stats = summarize(&results).map_err(|source| CellError::Engine {
        cell: cell.id.clone(),
        source,
    })?;
    Ok(CellOutput {
        cell: cell.clone(),
        results,
        stats,
    })
}
