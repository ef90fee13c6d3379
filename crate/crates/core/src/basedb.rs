//! Batched successive elimination with dynamic binning.
//!
//! The policy keeps a tree of axis-aligned bins. During a batch every leaf
//! pulls its active arms round-robin. At the end of batch `i` each two-armed
//! leaf compares per-arm means over the batch; an arm trailing the best by
//! more than `U(m, T, C)` is dropped. Leaves that keep both arms are split
//! into `g_i^d` children. In the last batch a leaf with both arms left pulls
//! arm `-1`, the smallest label.
//!
//! Bin membership is decided on the integer lattice: a point `x` lies in cell
//! `v` (1-based) at resolution `n` cells per axis when `floor(x_j n) = v_j - 1`,
//! with `x_j = 1` mapped to the last cell.

use crate::instance::{Arm, ArmSet};
use crate::plan::BatchPlan;
use crate::policy::{BatchSummary, LeafRecord, ObservationBuffer, Policy, UpdateSchedule};

#[derive(Debug, Clone)]
struct Node {
    layer: usize,
    /// 1-based lattice index at resolution `cells`.
    index: Vec<u64>,
    cells: u64,
    arms: ArmSet,
    pulls: [u64; 2],
    sums: [f64; 2],
    rr: u64,
    /// First child id and children per axis.
    children: Option<(usize, u64)>,
}

impl Node {
    fn reset_stats(&mut self) {
        self.pulls = [0; 2];
        self.sums = [0.0; 2];
    }
}

/// Snapshot of one leaf for diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct LeafView {
    pub layer: usize,
    pub index: Vec<u64>,
    pub width: f64,
    pub arms: ArmSet,
}

#[derive(Debug, Clone)]
pub struct BaseDb {
    name: String,
    plan: BatchPlan,
    nodes: Vec<Node>,
    leaves: Vec<usize>,
    /// 1-based index of the running batch; `M + 1` once the horizon is reached.
    batch: usize,
    /// Leaf chosen at each round of the running batch.
    pending: Vec<usize>,
}

fn axis_cell(x: f64, cells: u64) -> u64 {
    ((x * cells as f64).floor().max(0.0) as u64).min(cells - 1)
}

impl BaseDb {
    pub fn new(plan: BatchPlan) -> BaseDb {
        BaseDb::named("basedb", plan)
    }

    /// Static binning: split factors `(g, 1, ..., 1)` on `plan`'s grid.
    pub fn static_se(plan: &BatchPlan, g: u64) -> Result<BaseDb, crate::plan::PlanError> {
        Ok(BaseDb::named("static_se", plan.static_binning(g)?))
    }

    pub fn named(name: impl Into<String>, plan: BatchPlan) -> BaseDb {
        let d = plan.dim();
        let root = Node {
            layer: 0,
            index: vec![1; d],
            cells: 1,
            arms: ArmSet::BOTH,
            pulls: [0; 2],
            sums: [0.0; 2],
            rr: 0,
            children: None,
        };
        let mut policy = BaseDb {
            name: name.into(),
            plan,
            nodes: vec![root],
            leaves: Vec::new(),
            batch: 1,
            pending: Vec::new(),
        };
        let g0 = policy.plan.split_factors[0];
        policy.leaves = policy.split(0, g0, 1);
        policy
    }

    pub fn plan(&self) -> &BatchPlan {
        &self.plan
    }

    /// 1-based index of the running batch.
    pub fn batch_index(&self) -> usize {
        self.batch
    }

    /// Splits node `id` into `g^d` children at `layer`; returns their ids.
    fn split(&mut self, id: usize, g: u64, layer: usize) -> Vec<usize> {
        let d = self.plan.dim();
        let parent = self.nodes[id].clone();
        let cells = parent.cells * g;
        let first = self.nodes.len();
        let count = g.pow(d as u32);
        let mut ids = Vec::with_capacity(count as usize);
        for k in 0..count {
            let mut rem = k;
            let mut index = vec![0u64; d];
            for axis in (0..d).rev() {
                index[axis] = (parent.index[axis] - 1) * g + rem % g + 1;
                rem /= g;
            }
            ids.push(self.nodes.len());
            self.nodes.push(Node {
                layer,
                index,
                cells,
                arms: parent.arms,
                pulls: [0; 2],
                sums: [0.0; 2],
                rr: 0,
                children: None,
            });
        }
        self.nodes[id].children = Some((first, g));
        ids
    }

    /// Id of the leaf containing `x`.
    fn locate_id(&self, x: &[f64]) -> usize {
        let mut id = 0;
        while let Some((first, g)) = self.nodes[id].children {
            let node = &self.nodes[id];
            let cells = node.cells * g;
            let mut offset = 0u64;
            for (&v, &xi) in node.index.iter().zip(x) {
                let base = (v - 1) * g;
                let c = axis_cell(xi, cells).clamp(base, base + g - 1) - base;
                offset = offset * g + c;
            }
            id = first + offset as usize;
        }
        id
    }

    /// The leaf containing `x`.
    pub fn locate(&self, x: &[f64]) -> LeafView {
        let id = self.locate_id(x);
        self.view(id)
    }

    fn view(&self, id: usize) -> LeafView {
        let n = &self.nodes[id];
        LeafView {
            layer: n.layer,
            index: n.index.clone(),
            width: 1.0 / n.cells as f64,
            arms: n.arms,
        }
    }

    /// Current leaves in creation order.
    pub fn leaves(&self) -> Vec<LeafView> {
        self.leaves.iter().map(|&id| self.view(id)).collect()
    }

    fn record(&mut self, observations: &ObservationBuffer) {
        assert_eq!(
            observations.len(),
            self.pending.len(),
            "batch observations do not match the rounds played"
        );
        for (i, &id) in self.pending.iter().enumerate() {
            let arm = observations.arm(i);
            let node = &mut self.nodes[id];
            assert!(node.arms.contains(arm), "recorded arm {arm} is not active in its bin");
            node.pulls[arm.slot()] += 1;
            node.sums[arm.slot()] += observations.reward(i);
        }
        self.pending.clear();
    }

    fn summary_record(&self, id: usize, arms_before: ArmSet) -> LeafRecord {
        let n = &self.nodes[id];
        LeafRecord {
            layer: n.layer,
            index: n.index.clone(),
            cells: n.cells,
            arms_before,
            arms_after: n.arms,
            pulls: n.pulls,
            reward_sums: n.sums,
        }
    }

    /// Elimination and tree growth after batch `i` with split factor `g`.
    fn grow(&mut self, i: usize, g: u64) -> Vec<LeafRecord> {
        let m = self.plan.batches();
        let horizon = self.plan.horizon();
        let dim = self.plan.dim();
        let c_thresh = self.plan.params.c_thresh;
        let mut records = Vec::with_capacity(self.leaves.len());
        let mut next = Vec::with_capacity(self.leaves.len());
        let leaves = std::mem::take(&mut self.leaves);
        for id in leaves {
            let before = self.nodes[id].arms;
            if before.len() == 2 {
                let node = &mut self.nodes[id];
                let [np, nm] = node.pulls;
                if np > 0 && nm > 0 {
                    let means = [node.sums[0] / np as f64, node.sums[1] / nm as f64];
                    let best = means[0].max(means[1]);
                    let width = 1.0 / node.cells as f64;
                    let u = crate::plan::threshold_u(np + nm, horizon, width, dim, c_thresh).unwrap_or(f64::INFINITY);
                    for arm in Arm::ALL {
                        if best - means[arm.slot()] > u {
                            node.arms = node.arms.without(arm);
                        }
                    }
                }
            }
            records.push(self.summary_record(id, before));
            self.nodes[id].reset_stats();
            if self.nodes[id].arms.len() == 2 {
                if g > 1 {
                    next.extend(self.split(id, g, i + 1));
                } else {
                    self.nodes[id].layer = (i + 1).min(m - 1);
                    next.push(id);
                }
            } else {
                next.push(id);
            }
        }
        self.leaves = next;
        records
    }
}

impl Policy for BaseDb {
    fn name(&self) -> &str {
        &self.name
    }

    fn horizon(&self) -> u64 {
        self.plan.horizon()
    }

    fn schedule(&self) -> UpdateSchedule {
        UpdateSchedule::Grid(self.plan.grid.clone())
    }

    fn select(&mut self, x: &[f64]) -> Arm {
        let id = self.locate_id(x);
        self.pending.push(id);
        let last = self.batch >= self.plan.batches();
        let node = &mut self.nodes[id];
        if node.arms.len() == 2 {
            if last {
                return node.arms.smallest().expect("nonempty arm set");
            }
            let arm = if node.rr.is_multiple_of(2) {
                Arm::Plus
            } else {
                Arm::Minus
            };
            node.rr += 1;
            arm
        } else {
            node.arms.smallest().expect("nonempty arm set")
        }
    }

    fn end_batch(&mut self, observations: &ObservationBuffer) -> Option<BatchSummary> {
        let i = self.batch;
        let m = self.plan.batches();
        if i > m {
            return None;
        }
        self.record(observations);
        let batch_len = self.plan.batch_len(i);
        let leaves = if i < m {
            let g = self.plan.split_factors[i];
            self.grow(i, g)
        } else {
            let records = self
                .leaves
                .iter()
                .map(|&id| self.summary_record(id, self.nodes[id].arms))
                .collect();
            for &id in &self.leaves {
                self.nodes[id].reset_stats();
            }
            records
        };
        self.batch += 1;
        Some(BatchSummary {
            batch: i,
            batch_len,
            leaves,
        })
    }
}
