//! Trajectory identities and the information-flow invariant.

use basedb::basedb::BaseDb;
use basedb::engine::{run_episode, EpisodeOptions};
use basedb::instance::Arm;
use basedb::instances::{make_experiment_instance, make_static_failure_instance, Signs};
use basedb::plan::{solve_plan, BatchPlan, PlanParams};
use basedb::policy::{BatchSummary, ObservationBuffer, Policy, UpdateSchedule};

fn options() -> EpisodeOptions {
    EpisodeOptions {
        checkpoints: vec![100, 1000, 8192],
        monitor: None,
        keep_summaries: true,
    }
}

#[test]
fn static_se_matches_basedb_with_unit_later_splits() {
    let params = PlanParams::new(8192, 3, 1.0, 1.0, 1).c_thresh(0.15);
    let plan = solve_plan(&params).unwrap();
    let inst = make_static_failure_instance(10, 1.0).unwrap();
    for g in [1, 3, 7] {
        let stat = BaseDb::static_se(&plan, g).unwrap();
        let pinned = BatchPlan::with_split_factors(params, plan.grid.clone(), vec![g, 1, 1]).unwrap();
        let dynm = BaseDb::new(pinned);
        assert_eq!(stat.leaves(), dynm.leaves());
        for seed in 0..5 {
            let a = run_episode(&inst, &mut stat.clone(), 8192, seed, &options()).unwrap();
            let b = run_episode(&inst, &mut dynm.clone(), 8192, seed, &options()).unwrap();
            assert_eq!(a.regret, b.regret);
            assert_eq!(a.regret_curve, b.regret_curve);
            assert_eq!(a.pulls, b.pulls);
            assert_eq!(a.summaries, b.summaries);
        }
    }
}

/// Wraps a policy and checks that it only ever learns whole batches.
struct Spy<P> {
    inner: P,
    boundaries: Vec<u64>,
    rounds: u64,
    batches_seen: usize,
}

impl<P: Policy> Policy for Spy<P> {
    fn name(&self) -> &str {
        self.inner.name()
    }

    fn horizon(&self) -> u64 {
        self.inner.horizon()
    }

    fn schedule(&self) -> UpdateSchedule {
        self.inner.schedule()
    }

    fn select(&mut self, x: &[f64]) -> Arm {
        self.rounds += 1;
        self.inner.select(x)
    }

    fn end_batch(&mut self, observations: &ObservationBuffer) -> Option<BatchSummary> {
        let end = self.boundaries[self.batches_seen];
        let start = if self.batches_seen == 0 {
            0
        } else {
            self.boundaries[self.batches_seen - 1]
        };
        assert_eq!(self.rounds, end, "update delivered off the grid");
        assert_eq!(observations.len() as u64, end - start, "batch delivered partially");
        self.batches_seen += 1;
        self.inner.end_batch(observations)
    }
}

#[test]
fn batch_policy_learns_only_at_grid_points() {
    let plan = solve_plan(&PlanParams::new(50_000, 4, 0.2, 1.0, 1).lipschitz(2.0).c_thresh(0.15)).unwrap();
    let inst = make_experiment_instance(&Signs::Explicit(vec![1, -1, 1, -1])).unwrap();
    let inner = BaseDb::new(plan.clone());
    let mut spy = Spy {
        boundaries: inner.schedule().boundaries(50_000),
        inner,
        rounds: 0,
        batches_seen: 0,
    };
    run_episode(&inst, &mut spy, 50_000, 11, &options()).unwrap();
    assert_eq!(spy.batches_seen, plan.batches());
}

#[test]
fn regret_curve_is_nondecreasing_and_ends_at_total() {
    let plan = solve_plan(&PlanParams::new(8192, 3, 0.2, 1.0, 1).lipschitz(2.0)).unwrap();
    let inst = make_experiment_instance(&Signs::Seed(3)).unwrap();
    let r = run_episode(&inst, &mut BaseDb::new(plan), 8192, 5, &options()).unwrap();
    assert!(r.regret_curve.windows(2).all(|w| w[0].1 <= w[1].1));
    assert_eq!(r.regret_curve.last().unwrap(), &(8192, r.regret));
}
