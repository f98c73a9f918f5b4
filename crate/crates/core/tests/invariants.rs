mod common;

use common::*;
use proptest::prelude::*;
use rayon::ThreadPoolBuilder;
use sbm_twosample::bootstrap::{run_bootstrap_test, BootstrapConfig};
use sbm_twosample::community::{detect_pair, KMeansConfig};
use sbm_twosample::experiments::{report_json, run_experiment, ExperimentConfig, Scenario};
use sbm_twosample::rng::RngSeed;
use sbm_twosample::stat::{single_sample_statistic, two_sample_statistic};

fn instance() -> impl Strategy<Value = (usize, usize, f64, f64, u64)> {
    (1usize..=3).prop_flat_map(|k| {
        (
            2 * k.max(2)..=60usize,
            Just(k),
            0.05f64..0.7,
            0.05f64..0.7,
            any::<u64>(),
        )
    })
}

fn with_threads<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .unwrap()
        .install(f)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(120))]

    #[test]
    fn sample_swap_symmetry((n, k, p, q, seed) in instance()) {
        let x = random_graph(n, p, seed);
        let y = random_graph(n, q, seed ^ 1);
        let gx = random_label(n, k, seed ^ 2);
        let gy = random_label(n, k, seed ^ 3);
        let forward = two_sample_statistic(&x, &y, &gx, &gy, 0.05).unwrap();
        let backward = two_sample_statistic(&y, &x, &gy, &gx, 0.05).unwrap();
        prop_assert_eq!(forward, backward);
    }

    #[test]
    fn node_permutation_invariance((n, k, p, q, seed) in instance()) {
        let x = random_graph(n, p, seed);
        let y = random_graph(n, q, seed ^ 1);
        let gx = random_label(n, k, seed ^ 2);
        let gy = random_label(n, k, seed ^ 3);
        let perm = random_permutation(n, seed ^ 4);
        let before = two_sample_statistic(&x, &y, &gx, &gy, 0.05).unwrap();
        let after = two_sample_statistic(
            &x.permute(&perm), &y.permute(&perm), &gx.permute_nodes(&perm), &gy.permute_nodes(&perm), 0.05,
        ).unwrap();
        prop_assert_eq!(before.report().unwrap().t_n, after.report().unwrap().t_n);
        prop_assert_eq!(before, after);
        let single = single_sample_statistic(&x, k, &gx, 0.05).unwrap();
        let single_perm = single_sample_statistic(&x.permute(&perm), k, &gx.permute_nodes(&perm), 0.05).unwrap();
        prop_assert_eq!(single.t_n, single_perm.t_n);
    }

    #[test]
    fn label_permutation_invariance((n, k, p, q, seed) in instance()) {
        let x = random_graph(n, p, seed);
        let y = random_graph(n, q, seed ^ 1);
        let gx = random_label(n, k, seed ^ 2);
        let gy = random_label(n, k, seed ^ 3);
        let mapping = random_permutation(k, seed ^ 5);
        let before = two_sample_statistic(&x, &y, &gx, &gy, 0.05).unwrap();
        let after = two_sample_statistic(&x, &y, &gx.relabel(&mapping), &gy.relabel(&mapping), 0.05).unwrap();
        prop_assert_eq!(before.report().unwrap().l_n, after.report().unwrap().l_n);
        let single = single_sample_statistic(&x, k, &gx, 0.05).unwrap();
        let relabeled = single_sample_statistic(&x, k, &gx.relabel(&mapping), 0.05).unwrap();
        prop_assert_eq!(single.l_n, relabeled.l_n);
    }

    #[test]
    fn seeded_operations_are_deterministic((n, k, p, q, seed) in instance()) {
        let x = random_graph(n, p, seed);
        let y = random_graph(n, q, seed ^ 1);
        let detector = KMeansConfig { restarts: 3, ..KMeansConfig::with_seed(RngSeed::new(seed)) };
        let labels = |threads| with_threads(threads, || detect_pair(&x, &y, k, &detector).unwrap());
        let (gx, gy) = labels(1);
        prop_assert_eq!(labels(2), (gx.clone(), gy.clone()));
        let config = BootstrapConfig::new(8, RngSeed::new(seed ^ 6));
        let boot = |threads| with_threads(threads, || run_bootstrap_test(&x, &y, &gx, &gy, 0.05, &config));
        match (boot(1), boot(3)) {
            (Ok(a), Ok(b)) => prop_assert_eq!(a, b),
            (Err(a), Err(b)) => prop_assert_eq!(a.to_string(), b.to_string()),
            _ => prop_assert!(false, "outcome depends on thread count"),
        }
    }

    #[test]
    fn experiment_reports_are_byte_identical(seed in any::<u64>(), threads in 2usize..=4) {
        let config = ExperimentConfig {
            n: vec![40],
            replications: Some(3),
            bootstrap_replicates: 4,
            seed,
            kmeans_restarts: 2,
            ..ExperimentConfig::new(Scenario::NullCalibration, vec![2], vec![0.15])
        };
        let a = with_threads(1, || report_json(&run_experiment(&config).unwrap()));
        let b = with_threads(threads, || report_json(&run_experiment(&config).unwrap()));
        prop_assert_eq!(a, b);
    }
}
