//! The episode interface shared by every policy.
//!
//! A policy sees a context, returns an arm, and learns rewards only when the
//! engine hands it the observations of a finished batch. The engine decides
//! where batches end from [`Policy::schedule`], so a batch policy has no way
//! to peek at rewards inside a batch.

use crate::instance::{Arm, ArmSet};

/// When the engine delivers observations to the policy.
#[derive(Debug, Clone, PartialEq)]
pub enum UpdateSchedule {
    /// Batch ends at the given grid `0 = t_0 < ... < t_M = T`.
    Grid(Vec<u64>),
    /// After every round.
    EveryRound,
    /// Once, at the horizon.
    Never,
}

impl UpdateSchedule {
    /// Batch end points `t_1, ..., t_M` for horizon `horizon`.
    pub fn boundaries(&self, horizon: u64) -> Vec<u64> {
        match self {
            UpdateSchedule::Grid(grid) => grid[1..].to_vec(),
            UpdateSchedule::EveryRound => (1..=horizon).collect(),
            UpdateSchedule::Never => vec![horizon],
        }
    }
}

/// Observations of one batch in arrival order, stored flat.
#[derive(Debug, Clone, Default)]
pub struct ObservationBuffer {
    dim: usize,
    contexts: Vec<f64>,
    arms: Vec<Arm>,
    rewards: Vec<f64>,
}

impl ObservationBuffer {
    pub fn new(dim: usize) -> ObservationBuffer {
        ObservationBuffer {
            dim,
            ..Default::default()
        }
    }

    pub fn push(&mut self, x: &[f64], arm: Arm, reward: f64) {
        debug_assert_eq!(x.len(), self.dim);
        self.contexts.extend_from_slice(x);
        self.arms.push(arm);
        self.rewards.push(reward);
    }

    pub fn clear(&mut self) {
        self.contexts.clear();
        self.arms.clear();
        self.rewards.clear();
    }

    pub fn len(&self) -> usize {
        self.arms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.arms.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn context(&self, i: usize) -> &[f64] {
        &self.contexts[i * self.dim..(i + 1) * self.dim]
    }

    pub fn arm(&self, i: usize) -> Arm {
        self.arms[i]
    }

    pub fn reward(&self, i: usize) -> f64 {
        self.rewards[i]
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[f64], Arm, f64)> + '_ {
        (0..self.len()).map(move |i| (self.context(i), self.arms[i], self.rewards[i]))
    }
}

/// State of one leaf during a finished batch.
#[derive(Debug, Clone, PartialEq)]
pub struct LeafRecord {
    pub layer: usize,
    /// 1-based lattice index at resolution `cells` per axis.
    pub index: Vec<u64>,
    /// Cells per axis at this resolution; the width is `1 / cells`.
    pub cells: u64,
    pub arms_before: ArmSet,
    pub arms_after: ArmSet,
    /// Pulls of `+1` and `-1` (slot order).
    pub pulls: [u64; 2],
    pub reward_sums: [f64; 2],
}

impl LeafRecord {
    pub fn width(&self) -> f64 {
        1.0 / self.cells as f64
    }

    pub fn lower_corner(&self) -> Vec<f64> {
        self.index.iter().map(|&v| (v - 1) as f64 / self.cells as f64).collect()
    }

    pub fn total_pulls(&self) -> u64 {
        self.pulls[0] + self.pulls[1]
    }

    pub fn mean(&self, arm: Arm) -> Option<f64> {
        let n = self.pulls[arm.slot()];
        (n > 0).then(|| self.reward_sums[arm.slot()] / n as f64)
    }

    pub fn eliminated(&self) -> Option<Arm> {
        Arm::ALL
            .into_iter()
            .find(|&a| self.arms_before.contains(a) && !self.arms_after.contains(a))
    }
}

/// What a binning policy did at the end of batch `batch`.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchSummary {
    /// 1-based batch index.
    pub batch: usize,
    pub batch_len: u64,
    pub leaves: Vec<LeafRecord>,
}

pub trait Policy {
    fn name(&self) -> &str;

    /// Horizon the policy was planned for.
    fn horizon(&self) -> u64;

    fn schedule(&self) -> UpdateSchedule;

    /// Chooses an arm for context `x`. Rewards of the current batch are not available.
    fn select(&mut self, x: &[f64]) -> Arm;

    /// Receives every observation of the batch that just ended.
    fn end_batch(&mut self, observations: &ObservationBuffer) -> Option<BatchSummary>;
}

impl<P: Policy + ?Sized> Policy for Box<P> {
    fn name(&self) -> &str {
        (**self).name()
    }

    fn horizon(&self) -> u64 {
        (**self).horizon()
    }

    fn schedule(&self) -> UpdateSchedule {
        (**self).schedule()
    }

    fn select(&mut self, x: &[f64]) -> Arm {
        (**self).select(x)
    }

    fn end_batch(&mut self, observations: &ObservationBuffer) -> Option<BatchSummary> {
        (**self).end_batch(observations)
    }
}
