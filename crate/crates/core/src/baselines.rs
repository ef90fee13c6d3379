//! Comparison policies: fully online binned successive elimination, the
//! oracle, and a fixed arm. Static binning is [`BaseDb::static_se`].
//!
//! [`BaseDb::static_se`]: crate::basedb::BaseDb::static_se

use crate::instance::{Arm, ArmSet, BanditInstance};
use crate::plan::threshold_u;
use crate::policy::{BatchSummary, ObservationBuffer, Policy, UpdateSchedule};

#[derive(Debug, Clone, Copy)]
struct Bin {
    arms: ArmSet,
    pulls: [u64; 2],
    sums: [f64; 2],
    rr: u64,
}

/// Binned successive elimination updated after every round.
///
/// `[0,1]^d` is cut into `g^d` fixed bins. Each bin alternates its surviving
/// arms and drops an arm once its running mean trails the best by more than
/// `U(m, T, C)`, where `m` counts every pull made in the bin so far.
#[derive(Debug, Clone)]
pub struct OnlineBse {
    horizon: u64,
    dim: usize,
    g: u64,
    c_thresh: f64,
    bins: Vec<Bin>,
}

impl OnlineBse {
    pub fn new(g: u64, horizon: u64, dim: usize, c_thresh: f64) -> OnlineBse {
        assert!(g >= 1, "need at least one bin per axis");
        let count = g.pow(dim as u32) as usize;
        OnlineBse {
            horizon,
            dim,
            g,
            c_thresh,
            bins: vec![
                Bin {
                    arms: ArmSet::BOTH,
                    pulls: [0; 2],
                    sums: [0.0; 2],
                    rr: 0,
                };
                count
            ],
        }
    }

    pub fn bins_per_axis(&self) -> u64 {
        self.g
    }

    fn bin_of(&self, x: &[f64]) -> usize {
        let n = self.g;
        x.iter().fold(0u64, |acc, &xi| {
            let c = ((xi * n as f64).floor().max(0.0) as u64).min(n - 1);
            acc * n + c
        }) as usize
    }

    /// Active arms in the bin containing `x`.
    pub fn active_arms(&self, x: &[f64]) -> ArmSet {
        self.bins[self.bin_of(x)].arms
    }
}

impl Policy for OnlineBse {
    fn name(&self) -> &str {
        "online_bse"
    }

    fn horizon(&self) -> u64 {
        self.horizon
    }

    fn schedule(&self) -> UpdateSchedule {
        UpdateSchedule::EveryRound
    }

    fn select(&mut self, x: &[f64]) -> Arm {
        let k = self.bin_of(x);
        let bin = &mut self.bins[k];
        if bin.arms.len() == 2 {
            let arm = if bin.rr.is_multiple_of(2) {
                Arm::Plus
            } else {
                Arm::Minus
            };
            bin.rr += 1;
            arm
        } else {
            bin.arms.smallest().expect("nonempty arm set")
        }
    }

    fn end_batch(&mut self, observations: &ObservationBuffer) -> Option<BatchSummary> {
        let width = 1.0 / self.g as f64;
        for (x, arm, reward) in observations.iter() {
            let k = self.bin_of(x);
            let bin = &mut self.bins[k];
            bin.pulls[arm.slot()] += 1;
            bin.sums[arm.slot()] += reward;
            let [np, nm] = bin.pulls;
            if bin.arms.len() == 2 && np > 0 && nm > 0 {
                let means = [bin.sums[0] / np as f64, bin.sums[1] / nm as f64];
                let best = means[0].max(means[1]);
                let u = threshold_u(np + nm, self.horizon, width, self.dim, self.c_thresh).unwrap_or(f64::INFINITY);
                for a in Arm::ALL {
                    if best - means[a.slot()] > u {
                        bin.arms = bin.arms.without(a);
                    }
                }
            }
        }
        None
    }
}

/// Pulls the truly optimal arm at every context.
#[derive(Debug, Clone)]
pub struct Oracle {
    instance: BanditInstance,
    horizon: u64,
}

impl Oracle {
    pub fn new(instance: BanditInstance, horizon: u64) -> Oracle {
        Oracle { instance, horizon }
    }
}

impl Policy for Oracle {
    fn name(&self) -> &str {
        "oracle"
    }

    fn horizon(&self) -> u64 {
        self.horizon
    }

    fn schedule(&self) -> UpdateSchedule {
        UpdateSchedule::Never
    }

    fn select(&mut self, x: &[f64]) -> Arm {
        self.instance.optimal_arm_and_gap(x).0
    }

    fn end_batch(&mut self, _: &ObservationBuffer) -> Option<BatchSummary> {
        None
    }
}

/// Always pulls one arm.
#[derive(Debug, Clone, Copy)]
pub struct FixedArm {
    arm: Arm,
    horizon: u64,
}

impl FixedArm {
    pub fn new(arm: Arm, horizon: u64) -> FixedArm {
        FixedArm { arm, horizon }
    }
}

impl Policy for FixedArm {
    fn name(&self) -> &str {
        "fixed_arm"
    }

    fn horizon(&self) -> u64 {
        self.horizon
    }

    fn schedule(&self) -> UpdateSchedule {
        UpdateSchedule::Never
    }

    fn select(&mut self, _: &[f64]) -> Arm {
        self.arm
    }

    fn end_batch(&mut self, _: &ObservationBuffer) -> Option<BatchSummary> {
        None
    }
}
