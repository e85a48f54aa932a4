use difflim::sim::{evaluate_policy_mc_with, simulate_path_with};
use difflim::{
    evaluate_policy_mc, make_auction_model, AuctionParams, ConstantPolicy, FnPolicy, ModelSpec,
    NoiseSampling,
};
use proptest::prelude::*;

fn cases(n: u32) -> ProptestConfig {
    ProptestConfig {
        cases: n,
        failure_persistence: None,
        ..ProptestConfig::default()
    }
}

fn auction() -> ModelSpec {
    make_auction_model(&AuctionParams::default(), 41).unwrap()
}

fn on_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .unwrap()
        .install(f)
}

proptest! {
    #![proptest_config(cases(16))]

    #[test]
    fn estimates_are_reproducible_across_worker_counts(seed in any::<u64>(), x0 in -0.2f64..1.0, a in 0usize..301) {
        let model = auction();
        let policy = ConstantPolicy(a);
        let one = on_pool(1, || evaluate_policy_mc(&model, 0.1, &policy, x0, 0.0, 200, seed).unwrap());
        let four = on_pool(4, || evaluate_policy_mc(&model, 0.1, &policy, x0, 0.0, 200, seed).unwrap());
        prop_assert_eq!(one, four);
    }

    #[test]
    fn estimate_is_the_mean_of_its_paths(seed in any::<u64>(), sampling_cont in any::<bool>()) {
        let model = auction();
        let sampling = if sampling_cont { NoiseSampling::Continuous } else { NoiseSampling::Quadrature };
        let policy = FnPolicy(|_t: f64, x: f64| if x < 0.5 { 30 } else { 0 });
        let n = 50;
        let est = evaluate_policy_mc_with(&model, 0.1, &policy, 0.15, 0.0, n, seed, sampling).unwrap();
        let total: f64 = (0..n as u64)
            .map(|p| simulate_path_with(&model, 0.1, &policy, 0.15, 0.0, seed, p, sampling).unwrap().gain())
            .sum();
        prop_assert!((est.mean - total / n as f64).abs() < 1e-12);
    }
}

// Frozen state: the gain is ε·r times a Poisson(T/ε) count, so its mean is r·T.
#[test]
fn frozen_gain_has_known_mean() {
    let model = auction().without_dynamics();
    let eps = 0.05;
    let policy = ConstantPolicy(30);
    let r = model.reward(0.2, 0.3);
    let est = evaluate_policy_mc(&model, eps, &policy, 0.2, 0.0, 20_000, 5).unwrap();
    let z = (est.mean - r) / est.stderr;
    assert!(z.abs() < 4.0, "z = {z}");
    let exact_sd = r * eps.sqrt();
    assert!((est.stderr * (est.n_paths as f64).sqrt() / exact_sd - 1.0).abs() < 0.05);
}

#[test]
fn late_start_collects_less() {
    let model = auction();
    let early = evaluate_policy_mc(&model, 0.1, &ConstantPolicy(30), 0.15, 0.0, 4000, 1).unwrap();
    let late = evaluate_policy_mc(&model, 0.1, &ConstantPolicy(30), 0.15, 0.5, 4000, 1).unwrap();
    assert!(late.mean < early.mean);
    let done = evaluate_policy_mc(&model, 0.1, &ConstantPolicy(30), 0.15, 1.0, 10, 1).unwrap();
    assert_eq!(done.mean, 0.0);
}

#[test]
fn bad_arguments_are_rejected() {
    let model = auction();
    assert!(evaluate_policy_mc(&model, 0.0, &ConstantPolicy(0), 0.0, 0.0, 10, 0).is_err());
    assert!(evaluate_policy_mc(&model, 0.1, &ConstantPolicy(0), f64::NAN, 0.0, 10, 0).is_err());
    assert!(evaluate_policy_mc(&model, 0.1, &ConstantPolicy(0), 0.0, 1.5, 10, 0).is_err());
    assert!(evaluate_policy_mc(&model, 0.1, &ConstantPolicy(0), 0.0, 0.0, 0, 0).is_err());
}
