//! Randomized invariants: planner grids, bin tilings, instance ranges and smoothness.

use basedb::basedb::BaseDb;
use basedb::instance::{Arm, BanditInstance};
use basedb::instances::{make_cz_instance, make_experiment_instance, Signs};
use basedb::plan::{solve_plan, BatchPlan, PlanError, PlanParams};
use basedb::policy::{ObservationBuffer, Policy};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn plan_params() -> impl Strategy<Value = PlanParams> {
    (
        2.0f64..7.0,
        1usize..7,
        0.05f64..1.0,
        0.1f64..=1.0,
        1usize..4,
        0.25f64..4.0,
        0.1f64..8.0,
    )
        .prop_map(|(log_t, m, a, beta, d, l, cb)| {
            let alpha = a / beta;
            PlanParams::new(10f64.powf(log_t) as u64, m, alpha.min(1.0 / beta), beta, d)
                .lipschitz(l)
                .c_batch(cb)
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn solved_grids_are_well_formed(params in plan_params()) {
        match solve_plan(&params) {
            Ok(plan) => {
                let m = params.batches;
                prop_assert_eq!(plan.grid.len(), m + 1);
                prop_assert_eq!(plan.grid[0], 0);
                prop_assert_eq!(plan.grid[m], params.horizon);
                prop_assert!(plan.grid.windows(2).all(|w| w[0] < w[1]));
                prop_assert_eq!(plan.split_factors[m - 1], 1);
                let mut prod = 1.0;
                for (i, &w) in plan.widths.iter().enumerate() {
                    prop_assert!((w * prod - 1.0).abs() < 1e-12, "w_{} = {} with prod {}", i, w, prod);
                    prod *= plan.split_factors[i] as f64;
                }
            }
            Err(PlanError::Infeasible { .. }) | Err(PlanError::TooManyBatches { .. }) => {}
            Err(e) => prop_assert!(false, "unexpected error {e}"),
        }
    }

    #[test]
    fn leaves_tile_the_cube(
        seed in any::<u64>(),
        d in 1usize..3,
        g0 in 1u64..5,
        g1 in 1u64..4,
        c_thresh in 0.02f64..0.5,
    ) {
        let grid = vec![0, 400, 800, 1200];
        let params = PlanParams::new(1200, 3, 1.0 / 3.0, 1.0, d).c_thresh(c_thresh);
        let plan = BatchPlan::with_split_factors(params, grid.clone(), vec![g0, g1, 1]).unwrap();
        let mut policy = BaseDb::new(plan);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x = vec![0.0; d];
        for batch in 1..grid.len() {
            let mut buf = ObservationBuffer::new(d);
            for _ in grid[batch - 1]..grid[batch] {
                x.iter_mut().for_each(|v| *v = rng.random());
                let arm = policy.select(&x);
                let p = if arm == Arm::Plus { 0.5 + 0.4 * (x[0] - 0.5) } else { 0.5 };
                let r = if rng.random::<f64>() < p { 1.0 } else { 0.0 };
                buf.push(&x, arm, r);
            }
            policy.end_batch(&buf);
            let leaves = policy.leaves();
            let volume: f64 = leaves.iter().map(|l| l.width.powi(d as i32)).sum();
            prop_assert!((volume - 1.0).abs() < 1e-9);
            for _ in 0..50 {
                x.iter_mut().for_each(|v| *v = rng.random());
                let leaf = policy.locate(&x);
                for (j, &v) in leaf.index.iter().enumerate() {
                    let lo = (v - 1) as f64 * leaf.width;
                    prop_assert!(x[j] >= lo - 1e-12 && x[j] < lo + leaf.width + 1e-12);
                }
                prop_assert!(!leaf.arms.is_empty());
            }
        }
    }

    #[test]
    fn cz_with_beta_one_is_smooth(
        z in 1u64..12,
        d in 1usize..3,
        l in 0.2f64..3.0,
        seed in any::<u64>(),
    ) {
        let inst = make_cz_instance(z, 1.0 / d as f64, 1.0, l, d, &Signs::Seed(seed)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let report = inst.verify_smoothness(2000, &mut rng);
        prop_assert!(report.holds, "max violation {}", report.max_violation);
    }

    #[test]
    fn rewards_and_means_stay_in_unit_interval(seed in any::<u64>(), z in 1u64..10) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let insts: Vec<BanditInstance> = vec![
            make_cz_instance(z, 1.0, 1.0, 1.0, 1, &Signs::Seed(seed)).unwrap(),
            make_experiment_instance(&Signs::Seed(seed)).unwrap(),
        ];
        for inst in &insts {
            for _ in 0..200 {
                let x = inst.sample_context(&mut rng);
                for arm in Arm::ALL {
                    let m = inst.mean(arm, &x);
                    prop_assert!((0.0..=1.0).contains(&m));
                    let r = inst.draw_reward(arm, &x, &mut rng);
                    prop_assert!(r == 0.0 || r == 1.0);
                }
            }
        }
    }
}
