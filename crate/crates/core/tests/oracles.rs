//! Module-level oracles: closed-form regrets, margin probabilities, Hoeffding
//! and Chernoff bounds on the baselines and the clean-event monitor.

use basedb::baselines::OnlineBse;
use basedb::engine::Execution;
use basedb::instance::{Arm, ArmSet, BanditInstance, DeclaredParams};
use basedb::instances::{make_experiment_instance, Signs};
use basedb::plan::{BatchPlan, PlanParams};
use basedb::policy::{ObservationBuffer, Policy};
use basedb::sweep::{run_cell, Cell, InstanceSpec, PolicySpec, SignChoice};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn declared() -> DeclaredParams {
    DeclaredParams {
        alpha: 1.0,
        beta: 1.0,
        lipschitz: 1.0,
        margin: None,
    }
}

fn cell(id: &str, instance: InstanceSpec, policy: PolicySpec, horizon: u64) -> Cell {
    Cell {
        id: id.into(),
        group: id.into(),
        instance,
        policy,
        horizon,
    }
}

fn all_plus() -> InstanceSpec {
    InstanceSpec::Experiment {
        signs: SignChoice::Explicit(vec![1, 1, 1, 1]),
        declared: Default::default(),
    }
}

fn constant(plus: f64, minus: f64) -> InstanceSpec {
    InstanceSpec::Constant {
        plus,
        minus,
        dim: 1,
        declared: declared(),
    }
}

#[test]
fn experiment_smoothness_depends_on_declared_lipschitz() {
    let inst = make_experiment_instance(&Signs::Explicit(vec![1, -1, 1, -1])).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    assert!(inst.verify_smoothness(20_000, &mut rng).holds);
    let mut d = inst.declared();
    d.lipschitz = 1.0;
    let strict = inst.with_declared(d);
    assert!(!strict.verify_smoothness(20_000, &mut rng).holds);
}

#[test]
fn fixed_minus_arm_pays_an_eighth_of_the_horizon() {
    let c = cell("fixed", all_plus(), PolicySpec::FixedArm { arm: Arm::Minus }, 1000);
    let s = run_cell(&c, 400, 9, &[], false, Execution::Parallel).unwrap().stats;
    assert!(
        (s.mean_regret - 125.0).abs() <= 3.0 * s.std_err,
        "{} +/- {}",
        s.mean_regret,
        s.std_err
    );
}

#[test]
fn oracle_has_zero_regret() {
    let c = cell("oracle", all_plus(), PolicySpec::Oracle, 1000);
    let s = run_cell(&c, 50, 9, &[], false, Execution::Parallel).unwrap().stats;
    assert_eq!((s.mean_regret, s.std_err), (0.0, 0.0));
}

#[test]
fn doubling_replications_shrinks_se_by_root_two() {
    let c = cell("fixed", all_plus(), PolicySpec::FixedArm { arm: Arm::Minus }, 1000);
    let small = run_cell(&c, 400, 1, &[], false, Execution::Parallel).unwrap().stats;
    let big = run_cell(&c, 800, 2, &[], false, Execution::Parallel).unwrap().stats;
    let ratio = small.std_err / big.std_err;
    assert!((ratio / 2f64.sqrt() - 1.0).abs() < 0.2, "ratio {ratio}");
}

/// Feeds `rounds` single-round updates to a one-bin online BSE and returns its active arms.
fn drive_bse(inst: &BanditInstance, horizon: u64, rounds: u64, seed: u64) -> ArmSet {
    let mut policy = OnlineBse::new(1, horizon, 1, 1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut buf = ObservationBuffer::new(1);
    for _ in 0..rounds {
        let x = [rng.random::<f64>()];
        let arm = policy.select(&x);
        let r = inst.draw_reward(arm, &x, &mut rng);
        buf.clear();
        buf.push(&x, arm, r);
        policy.end_batch(&buf);
    }
    policy.active_arms(&[0.5])
}

#[test]
fn bse_drops_a_half_gap_arm_within_a_thousand_pulls() {
    let inst = BanditInstance::constant(0.75, 0.25, 1, declared()).unwrap();
    let hits = (0..300)
        .filter(|&s| drive_bse(&inst, 50_000, 1000, s) == ArmSet::single(Arm::Plus))
        .count();
    assert!(hits as f64 >= 0.99 * 300.0, "{hits}/300");
}

#[test]
fn bse_keeps_equal_arms() {
    let inst = BanditInstance::constant(0.5, 0.5, 1, declared()).unwrap();
    let kept = (0..100)
        .filter(|&s| drive_bse(&inst, 50_000, 50_000, s) == ArmSet::BOTH)
        .count();
    assert!(kept >= 95, "{kept}/100");
}

#[test]
fn large_constant_gap_triggers_no_bad_elimination() {
    let params = PlanParams::new(50_000, 3, 1.0, 1.0, 1);
    let plan = basedb::plan::solve_plan(&params).unwrap();
    let c = cell("gap", constant(0.8, 0.2), PolicySpec::BaseDb { plan }, 50_000);
    let s = run_cell(&c, 200, 3, &[], false, Execution::Parallel).unwrap().stats;
    assert!(s.ac_rate <= 0.05, "A_C rate {}", s.ac_rate);
    assert!(s.wrong_elimination_rate <= 0.05);
}

#[test]
fn well_filled_bins_keep_counts_near_expectation() {
    let params = PlanParams::new(50_000, 3, 0.2, 1.0, 1).lipschitz(2.0).c_thresh(0.15);
    let plan = BatchPlan::with_split_factors(params, vec![0, 1600, 8000, 50_000], vec![4, 2, 1]).unwrap();
    let inst = InstanceSpec::Experiment {
        signs: SignChoice::PerReplication,
        declared: Default::default(),
    };
    let c = cell("filled", inst, PolicySpec::BaseDb { plan }, 50_000);
    let s = run_cell(&c, 200, 4, &[], false, Execution::Parallel).unwrap().stats;
    assert!(s.e_rate <= 0.05, "E rate {}", s.e_rate);
}

#[test]
fn equal_arms_never_flag_wrong_eliminations() {
    let params = PlanParams::new(20_000, 3, 1.0, 1.0, 1).c_thresh(0.05);
    let plan = basedb::plan::solve_plan(&params).unwrap();
    let c = cell("equal", constant(0.5, 0.5), PolicySpec::BaseDb { plan }, 20_000);
    let s = run_cell(&c, 100, 5, &[], false, Execution::Parallel).unwrap().stats;
    assert_eq!(s.ac_rate, 0.0);
    assert_eq!(s.wrong_elimination_rate, 0.0);
}

#[test]
fn cz_optimal_arm_survives_in_resolved_bins() {
    let params = PlanParams::new(1 << 15, 3, 1.0, 1.0, 1);
    let plan = basedb::plan::solve_plan(&params).unwrap();
    let z = ((plan.grid[1] as f64).powf(1.0 / 3.0)).ceil() as u64;
    let inst = InstanceSpec::Cz {
        z,
        alpha: 1.0,
        beta: 1.0,
        lipschitz: 1.0,
        dim: 1,
        signs: SignChoice::PerReplication,
    };
    let c = cell("cz", inst, PolicySpec::BaseDb { plan }, 1 << 15);
    let s = run_cell(&c, 200, 6, &[], false, Execution::Parallel).unwrap().stats;
    assert!(s.ac_rate <= 0.05, "A_C rate {}", s.ac_rate);
}
