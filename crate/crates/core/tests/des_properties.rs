use proptest::prelude::*;

use fjsync::des::{run_simulation, run_with_times, time_average_occupancy, ScriptedTimes};
use fjsync::NetworkParams;

fn nondecreasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[0] <= w[1])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn every_counted_pair_departs(
        n_a in 1u32..5, n_b in 1u32..5,
        psi_a in 0.05f64..0.95, psi_b in 0.05f64..0.95,
        jobs in 20usize..800, seed in any::<u64>(), warmup in 0.0f64..0.5,
    ) {
        let p = NetworkParams::from_loads(1.0, n_a, psi_a, n_b, psi_b).unwrap();
        let o = run_simulation(&p, jobs, seed, warmup).unwrap();
        let counted = jobs - o.warmup_jobs;
        prop_assert_eq!(o.in_trace.len(), counted);
        prop_assert_eq!(o.out_trace.len(), counted);
        prop_assert_eq!(o.sojourns.len(), counted);
        prop_assert_eq!(o.final_occupancy(), 0);
        prop_assert!(o.first_from_a <= counted);
        prop_assert!(nondecreasing(&o.in_trace));
        prop_assert!(nondecreasing(&o.out_trace));
        prop_assert!(o.sojourns.iter().all(|&t| t >= 0.0));
        let held: f64 = o.occupancy_time.iter().sum();
        prop_assert!((held - o.total_time).abs() <= 1e-9 * o.total_time.max(1.0));
    }

    #[test]
    fn area_under_occupancy_is_total_sojourn(
        psi_a in 0.05f64..0.95, psi_b in 0.05f64..0.95,
        jobs in 2usize..500, seed in any::<u64>(),
    ) {
        // without warmup every stored job is counted, so the two must agree
        let p = NetworkParams::from_loads(0.7, 2, psi_a, 1, psi_b).unwrap();
        let o = run_simulation(&p, jobs, seed, 0.0).unwrap();
        let area = time_average_occupancy(&o).unwrap() * o.total_time;
        let total: f64 = o.sojourns.iter().sum();
        prop_assert!((area - total).abs() <= 1e-9 * total.max(1.0));
    }

    #[test]
    fn same_seed_same_run(seed in any::<u64>(), jobs in 1usize..300) {
        let p = NetworkParams::new(0.3, 1, 0.8, 2, 0.4).unwrap();
        prop_assert_eq!(run_simulation(&p, jobs, seed, 0.1).unwrap(), run_simulation(&p, jobs, seed, 0.1).unwrap());
    }
}

#[test]
fn instant_services_give_zero_sojourns() {
    let p = NetworkParams::new(1.0, 1, 2.0, 1, 2.0).unwrap();
    let mut times = ScriptedTimes::new(&[0.5, 0.5, 0.5], &[0.0; 3], &[0.0; 3]);
    let o = run_with_times(&p, 3, 0.0, &mut times).unwrap();
    assert_eq!(o.in_trace, vec![0.5, 1.0, 1.5]);
    assert_eq!(o.out_trace, o.in_trace);
    assert_eq!(o.sojourns, vec![0.0; 3]);
}
