//! Experiment configuration files.
//!
//! A config is a TOML document with top-level run keys and four tables:
//!
//! ```toml
//! name = "fig3"
//! master_seed = 20240917
//! replications = 200
//! output = "fig3.csv"      # optional, overridden by --out
//! checkpoints = 64         # log-spaced regret-curve points, 0 disables
//!
//! [instance]
//! name = "experiment"      # experiment | cz | multiscale | static_failure | constant
//! signs = "per_replication" # or an explicit list such as [1, -1, 1, 1]
//! # sign_seed = 7          # Rademacher signs from a fixed seed
//!
//! [plan]
//! T = 50000
//! M = 3
//! alpha = 0.2
//! beta = 1.0
//! d = 1
//! L = 2.0
//! c_batch = 1.0
//! c_thresh = 0.15
//! D1 = 10.0
//! # grid = [0, 500, 5000, 50000] and splits = [8, 4, 1] pin an explicit plan
//!
//! [policy]
//! name = "basedb"          # basedb | static_se | online_bse | oracle | fixed_arm
//! # g = 37                 # bins per axis for static_se / online_bse
//! # arm = -1               # fixed_arm
//!
//! [sweep]
//! M = [2, 3, 4, 5, 6]      # any of T, M, g, g_factor, policy
//! policy = ["basedb", "online_bse"]
//! ```
//!
//! Instance keys: `z`, `alpha`, `beta`, `L`, `d` (cz), `M`, `T` (multiscale),
//! `z`, `L` (static_failure), `plus`, `minus`, `d` (constant). Missing
//! exponents default to the plan's. A missing `z` defaults to
//! `ceil(t_1^(1/(2 beta + d)))` for cz and `ceil(T^(1/4))` for
//! static_failure. For the experiment instance `alpha`, `beta`, `L` override
//! the declared parameters.
//!
//! Sweep axes expand as a Cartesian product. `M` only applies to basedb and
//! static_se, `g` and `g_factor` only to static_se and online_bse; duplicate
//! cells are dropped. `g_factor` scales the default `g` (the plan's `g_0` for
//! static_se, `ceil(T^(1/(2 beta + d)))` for online_bse).

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::instance::{Arm, DeclaredParams};
use crate::plan::{solve_plan, BatchPlan, PlanError, PlanParams};
use crate::sweep::{Cell, DeclaredOverride, InstanceSpec, PolicySpec, SignChoice};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config: {0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid `{key}`: {reason}")]
    Invalid { key: String, reason: String },
    #[error("infeasible plan for T = {horizon}, M = {batches}: {source}")]
    Infeasible {
        horizon: u64,
        batches: usize,
        source: PlanError,
    },
}

impl ConfigError {
    fn invalid(key: impl Into<String>, reason: impl Into<String>) -> ConfigError {
        ConfigError::Invalid {
            key: key.into(),
            reason: reason.into(),
        }
    }

    /// Process exit code for this error: 3 for planner rejections, 2 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            ConfigError::Infeasible { .. } => 3,
            _ => 2,
        }
    }
}

fn default_replications() -> usize {
    100
}

fn default_checkpoints() -> usize {
    64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default = "default_replications")]
    pub replications: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
    #[serde(default = "default_checkpoints")]
    pub checkpoints: usize,
    pub instance: InstanceConfig,
    pub plan: PlanConfig,
    #[serde(default)]
    pub policy: PolicyConfig,
    #[serde(default)]
    pub sweep: SweepConfig,
}

/// Explicit signs or the `"per_replication"` mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SignsConfig {
    List(Vec<i64>),
    Mode(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceConfig {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub signs: Option<SignsConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sign_seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub z: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(rename = "L", default, skip_serializing_if = "Option::is_none")]
    pub lipschitz: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d: Option<usize>,
    #[serde(rename = "M", default, skip_serializing_if = "Option::is_none")]
    pub batches: Option<usize>,
    #[serde(rename = "T", default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plus: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub minus: Option<f64>,
}

impl InstanceConfig {
    pub fn named(name: &str) -> InstanceConfig {
        InstanceConfig {
            name: name.to_string(),
            signs: None,
            sign_seed: None,
            z: None,
            alpha: None,
            beta: None,
            lipschitz: None,
            d: None,
            batches: None,
            horizon: None,
            plus: None,
            minus: None,
        }
    }
}

fn one() -> f64 {
    1.0
}

fn one_usize() -> usize {
    1
}

fn default_d1() -> f64 {
    10.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanConfig {
    #[serde(rename = "T")]
    pub horizon: u64,
    #[serde(rename = "M", default = "one_usize")]
    pub batches: usize,
    pub alpha: f64,
    #[serde(default = "one")]
    pub beta: f64,
    #[serde(default = "one_usize")]
    pub d: usize,
    #[serde(rename = "L", default = "one")]
    pub lipschitz: f64,
    #[serde(default = "one")]
    pub c_batch: f64,
    #[serde(default = "one")]
    pub c_thresh: f64,
    #[serde(rename = "D1", default = "default_d1")]
    pub d1: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<Vec<u64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub splits: Option<Vec<u64>>,
}

fn default_policy() -> String {
    "basedb".to_string()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyConfig {
    #[serde(default = "default_policy")]
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub arm: Option<i64>,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        PolicyConfig {
            name: default_policy(),
            g: None,
            arm: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    #[serde(rename = "T", default, skip_serializing_if = "Vec::is_empty")]
    pub horizons: Vec<u64>,
    #[serde(rename = "M", default, skip_serializing_if = "Vec::is_empty")]
    pub batches: Vec<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub g: Vec<u64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub g_factor: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub policy: Vec<String>,
}

const INSTANCES: [&str; 5] = ["experiment", "cz", "multiscale", "static_failure", "constant"];
const POLICIES: [&str; 5] = ["basedb", "static_se", "online_bse", "oracle", "fixed_arm"];

/// A validated config expanded into sweep cells.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub hash: String,
    pub cells: Vec<Cell>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<ExperimentConfig, ConfigError> {
        Ok(toml::from_str(text)?)
    }

    pub fn from_path(path: &std::path::Path) -> Result<ExperimentConfig, ConfigError> {
        ExperimentConfig::from_toml(&std::fs::read_to_string(path)?)
    }

    /// Canonical TOML rendering (defaults filled in, comments dropped).
    pub fn canonical(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// First 16 hex digits of the SHA-256 of [`canonical`](Self::canonical).
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.canonical().as_bytes());
        hex::encode(digest)[..16].to_string()
    }

    /// Validates and expands the sweep.
    pub fn resolve(&self) -> Result<Experiment, ConfigError> {
        self.check_names()?;
        if self.replications < 2 {
            return Err(ConfigError::invalid(
                "replications",
                format!("{} given, need at least 2 for a standard error", self.replications),
            ));
        }
        let p = &self.plan;
        if p.alpha * p.beta > 1.0 {
            return Err(ConfigError::invalid(
                "plan.alpha",
                format!(
                    "alpha * beta = {} violates the requirement alpha * beta <= 1 \
                     (larger products reduce to a static two-armed bandit)",
                    p.alpha * p.beta
                ),
            ));
        }
        let horizons = axis(&self.sweep.horizons, p.horizon);
        let batch_axis = axis(&self.sweep.batches, p.batches);
        let policies = if self.sweep.policy.is_empty() {
            vec![self.policy.name.clone()]
        } else {
            self.sweep.policy.clone()
        };
        let mut cells: Vec<Cell> = Vec::new();
        for policy in &policies {
            for &t in &horizons {
                let uses_plan = matches!(policy.as_str(), "basedb" | "static_se");
                let ms = if uses_plan { batch_axis.clone() } else { vec![p.batches] };
                for &m in &ms {
                    let plan = self.plan_for(t, m)?;
                    let instance = self.instance_spec(t, m, plan.as_ref())?;
                    for (k, g) in self.g_axis(policy, t, plan.as_ref())?.into_iter().enumerate() {
                        let spec = self.policy_spec(policy, plan.as_ref(), g, t, m)?;
                        let id = cell_id(policy, t, uses_plan.then_some(m), g);
                        let group = self.group_id(policy, uses_plan.then_some(m), g, k);
                        if cells.iter().any(|c| c.id == id) {
                            continue;
                        }
                        cells.push(Cell {
                            id,
                            group,
                            instance: instance.clone(),
                            policy: spec,
                            horizon: t,
                        });
                    }
                }
            }
        }
        Ok(Experiment {
            config: self.clone(),
            hash: self.hash(),
            cells,
        })
    }

    fn check_names(&self) -> Result<(), ConfigError> {
        if !INSTANCES.contains(&self.instance.name.as_str()) {
            return Err(ConfigError::invalid(
                "instance.name",
                format!(
                    "unknown instance `{}`, expected one of {}",
                    self.instance.name,
                    INSTANCES.join(", ")
                ),
            ));
        }
        let policies = std::iter::once(("policy.name", &self.policy.name))
            .chain(self.sweep.policy.iter().map(|p| ("sweep.policy", p)));
        for (key, name) in policies {
            if !POLICIES.contains(&name.as_str()) {
                return Err(ConfigError::invalid(
                    key,
                    format!("unknown policy `{name}`, expected one of {}", POLICIES.join(", ")),
                ));
            }
        }
        if let Some(f) = self.sweep.g_factor.iter().find(|f| !(**f > 0.0 && f.is_finite())) {
            return Err(ConfigError::invalid("sweep.g_factor", format!("{f} must be positive")));
        }
        if !self.sweep.g.is_empty() && !self.sweep.g_factor.is_empty() {
            return Err(ConfigError::invalid(
                "sweep.g_factor",
                "cannot be combined with sweep.g",
            ));
        }
        Ok(())
    }

    fn plan_params(&self, horizon: u64, batches: usize) -> PlanParams {
        let p = &self.plan;
        let mut params = PlanParams::new(horizon, batches, p.alpha, p.beta, p.d)
            .lipschitz(p.lipschitz)
            .c_batch(p.c_batch)
            .c_thresh(p.c_thresh);
        params.d1 = p.d1;
        params
    }

    /// The plan at `(T, M)`, or `None` for `M = 1` single-batch sweeps of
    /// non-binning policies.
    fn plan_for(&self, horizon: u64, batches: usize) -> Result<Option<BatchPlan>, ConfigError> {
        let params = self.plan_params(horizon, batches);
        params.validate().map_err(plan_key_error)?;
        let explicit = (&self.plan.grid, &self.plan.splits);
        let plan = match explicit {
            (Some(grid), Some(splits)) => {
                if horizon != self.plan.horizon || batches != self.plan.batches {
                    return Err(ConfigError::invalid(
                        "plan.grid",
                        "an explicit grid cannot be combined with T or M sweeps",
                    ));
                }
                BatchPlan::with_split_factors(params, grid.clone(), splits.clone()).map_err(plan_key_error)?
            }
            (Some(_), None) => return Err(ConfigError::invalid("plan.splits", "required with plan.grid")),
            (None, Some(_)) => return Err(ConfigError::invalid("plan.grid", "required with plan.splits")),
            (None, None) => solve_plan(&params).map_err(|source| match source {
                PlanError::Infeasible { .. } => ConfigError::Infeasible {
                    horizon,
                    batches,
                    source,
                },
                other => plan_key_error(other),
            })?,
        };
        Ok(Some(plan))
    }

    fn signs(&self) -> Result<SignChoice, ConfigError> {
        let inst = &self.instance;
        match (&inst.signs, inst.sign_seed) {
            (Some(_), Some(_)) => Err(ConfigError::invalid(
                "instance.sign_seed",
                "cannot be combined with instance.signs",
            )),
            (None, Some(seed)) => Ok(SignChoice::Seed(seed)),
            (None, None) => Ok(SignChoice::PerReplication),
            (Some(SignsConfig::Mode(m)), None) if m == "per_replication" => Ok(SignChoice::PerReplication),
            (Some(SignsConfig::Mode(m)), None) => Err(ConfigError::invalid(
                "instance.signs",
                format!("expected a list of +1/-1 or \"per_replication\", got \"{m}\""),
            )),
            (Some(SignsConfig::List(v)), None) => {
                let signs = v
                    .iter()
                    .map(|&s| match s {
                        1 => Ok(1i8),
                        -1 => Ok(-1i8),
                        other => Err(ConfigError::invalid(
                            "instance.signs",
                            format!("entry {other} is not +1 or -1"),
                        )),
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                Ok(SignChoice::Explicit(signs))
            }
        }
    }

    fn instance_spec(
        &self,
        horizon: u64,
        batches: usize,
        plan: Option<&BatchPlan>,
    ) -> Result<InstanceSpec, ConfigError> {
        let inst = &self.instance;
        let p = &self.plan;
        let alpha = inst.alpha.unwrap_or(p.alpha);
        let beta = inst.beta.unwrap_or(p.beta);
        let lipschitz = inst.lipschitz.unwrap_or(p.lipschitz);
        let dim = inst.d.unwrap_or(p.d);
        if dim != p.d {
            return Err(ConfigError::invalid(
                "instance.d",
                format!("instance dimension {dim} differs from plan.d = {}", p.d),
            ));
        }
        let spec = match inst.name.as_str() {
            "experiment" => {
                if dim != 1 {
                    return Err(ConfigError::invalid(
                        "plan.d",
                        "the experiment instance is one-dimensional",
                    ));
                }
                InstanceSpec::Experiment {
                    signs: self.signs()?,
                    declared: DeclaredOverride {
                        alpha: inst.alpha,
                        beta: inst.beta,
                        lipschitz: inst.lipschitz,
                    },
                }
            }
            "cz" => {
                let z = match inst.z {
                    Some(z) => z,
                    None => {
                        let t1 = plan
                            .map(|pl| pl.grid[1])
                            .ok_or_else(|| ConfigError::invalid("instance.z", "required when no plan is available"))?;
                        ((t1 as f64).powf(1.0 / (2.0 * beta + dim as f64)) - 1e-9)
                            .ceil()
                            .max(1.0) as u64
                    }
                };
                InstanceSpec::Cz {
                    z,
                    alpha,
                    beta,
                    lipschitz,
                    dim,
                    signs: self.signs()?,
                }
            }
            "multiscale" => InstanceSpec::Multiscale {
                batches: inst.batches.unwrap_or(batches),
                alpha,
                beta,
                lipschitz,
                dim,
                horizon: inst.horizon.unwrap_or(horizon),
                signs: self.signs()?,
            },
            "static_failure" => {
                if dim != 1 {
                    return Err(ConfigError::invalid(
                        "plan.d",
                        "the static_failure instance is one-dimensional",
                    ));
                }
                let z = inst
                    .z
                    .unwrap_or_else(|| ((horizon as f64).powf(0.25) - 1e-9).ceil() as u64);
                InstanceSpec::StaticFailure { z, lipschitz }
            }
            "constant" => {
                let plus = inst
                    .plus
                    .ok_or_else(|| ConfigError::invalid("instance.plus", "required for constant"))?;
                let minus = inst
                    .minus
                    .ok_or_else(|| ConfigError::invalid("instance.minus", "required for constant"))?;
                InstanceSpec::Constant {
                    plus,
                    minus,
                    dim,
                    declared: DeclaredParams {
                        alpha,
                        beta,
                        lipschitz,
                        margin: None,
                    },
                }
            }
            other => unreachable!("instance name {other} checked"),
        };
        // Build once so construction errors surface as config errors.
        spec.build(0)
            .map_err(|e| ConfigError::invalid("instance", e.to_string()))?;
        Ok(spec)
    }

    fn default_g(&self, policy: &str, horizon: u64, plan: Option<&BatchPlan>) -> Option<u64> {
        match policy {
            "static_se" => plan.map(|p| p.split_factors[0]),
            "online_bse" => {
                let e = 1.0 / (2.0 * self.plan.beta + self.plan.d as f64);
                Some(((horizon as f64).powf(e) - 1e-9).ceil().max(1.0) as u64)
            }
            _ => None,
        }
    }

    fn g_axis(&self, policy: &str, horizon: u64, plan: Option<&BatchPlan>) -> Result<Vec<Option<u64>>, ConfigError> {
        if !matches!(policy, "static_se" | "online_bse") {
            return Ok(vec![None]);
        }
        if !self.sweep.g.is_empty() {
            if let Some(bad) = self.sweep.g.iter().find(|g| **g == 0) {
                return Err(ConfigError::invalid("sweep.g", format!("{bad} must be at least 1")));
            }
            return Ok(self.sweep.g.iter().map(|&g| Some(g)).collect());
        }
        let base = match self.policy.g {
            Some(0) => return Err(ConfigError::invalid("policy.g", "must be at least 1")),
            Some(g) if self.policy.name == policy => g,
            _ => self
                .default_g(policy, horizon, plan)
                .ok_or_else(|| ConfigError::invalid("policy.g", format!("required for {policy}")))?,
        };
        if self.sweep.g_factor.is_empty() {
            return Ok(vec![Some(base)]);
        }
        Ok(self
            .sweep
            .g_factor
            .iter()
            .map(|f| Some((base as f64 * f).round().max(1.0) as u64))
            .collect())
    }

    /// Like [`cell_id`] without `T`; a `g` derived from `T` is replaced by its regime.
    fn group_id(&self, policy: &str, batches: Option<usize>, g: Option<u64>, regime: usize) -> String {
        let mut id = policy.to_string();
        if let Some(m) = batches {
            id.push_str(&format!("-M{m}"));
        }
        let explicit = !self.sweep.g.is_empty() || (self.policy.g.is_some() && self.policy.name == policy);
        match (g, self.sweep.g_factor.get(regime)) {
            (Some(g), _) if explicit && self.sweep.g_factor.is_empty() => id.push_str(&format!("-g{g}")),
            (Some(_), Some(f)) => id.push_str(&format!("-gx{f}")),
            _ => {}
        }
        id
    }

    fn policy_spec(
        &self,
        policy: &str,
        plan: Option<&BatchPlan>,
        g: Option<u64>,
        horizon: u64,
        batches: usize,
    ) -> Result<PolicySpec, ConfigError> {
        let need_plan = || {
            plan.cloned()
                .ok_or_else(|| ConfigError::invalid("plan", format!("no plan for T = {horizon}, M = {batches}")))
        };
        Ok(match policy {
            "basedb" => PolicySpec::BaseDb { plan: need_plan()? },
            "static_se" => {
                let plan = need_plan()?;
                let g = g.expect("g resolved for static_se");
                plan.static_binning(g)
                    .map_err(|e| ConfigError::invalid("policy.g", e.to_string()))?;
                PolicySpec::StaticSe { plan, g }
            }
            "online_bse" => PolicySpec::OnlineBse {
                g: g.expect("g resolved for online_bse"),
                c_thresh: self.plan.c_thresh,
            },
            "oracle" => PolicySpec::Oracle,
            "fixed_arm" => {
                let v = self
                    .policy
                    .arm
                    .ok_or_else(|| ConfigError::invalid("policy.arm", "required for fixed_arm"))?;
                let arm = Arm::from_value(v)
                    .ok_or_else(|| ConfigError::invalid("policy.arm", format!("{v} is not +1 or -1")))?;
                PolicySpec::FixedArm { arm }
            }
            other => unreachable!("policy name {other} checked"),
        })
    }
}

fn axis<T: Copy>(values: &[T], base: T) -> Vec<T> {
    if values.is_empty() {
        vec![base]
    } else {
        values.to_vec()
    }
}

fn plan_key_error(e: PlanError) -> ConfigError {
    let key = match &e {
        PlanError::MarginTooLarge(_) => "plan.alpha".to_string(),
        PlanError::InvalidParameter { name, .. } => format!("plan.{name}"),
        PlanError::TooManyBatches { .. } => "plan.M".to_string(),
        PlanError::Infeasible { .. } => "plan".to_string(),
        PlanError::LayerOutOfRange { .. } => "plan.splits".to_string(),
    };
    ConfigError::invalid(key, e.to_string())
}

/// `policy-T<T>[-M<M>][-g<g>]`.
pub fn cell_id(policy: &str, horizon: u64, batches: Option<usize>, g: Option<u64>) -> String {
    let mut id = format!("{policy}-T{horizon}");
    if let Some(m) = batches {
        id.push_str(&format!("-M{m}"));
    }
    if let Some(g) = g {
        id.push_str(&format!("-g{g}"));
    }
    id
}
