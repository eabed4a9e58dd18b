use proptest::prelude::*;
use toric_core::decoder::{decode, DecoderConfig};
use toric_core::lattice::{ErrorChain, ToricLattice};
use toric_core::montecarlo::{decoding_fails, exact_failure_probability, failure_probability_from_counts, failure_counts, run_batch, TrialConfig};

/// Exact L = 3 failure probabilities from a 40-digit evaluation of the
/// enumerated counts.
const EXACT_L3: [(f64, f64); 4] = [
    (0.01, 0.002_044_316_311_876_742),
    (0.03, 0.021_076_873_021_645_1),
    (0.05, 0.061_262_564_950_403_02),
    (0.10, 0.226_198_760_324_792_32),
];

#[test]
fn l3_oracle_matches_frozen_values() {
    let counts = failure_counts(3, 0.02, None).unwrap();
    // At p = 1/2 every class is equally likely: three quarters fail.
    assert_eq!(counts.iter().sum::<u64>(), 3 << 16);
    for (p, want) in EXACT_L3 {
        let got = failure_probability_from_counts(3, p, &counts);
        assert!((got - want).abs() < 1e-14, "p = {p}: {got} vs {want}");
    }
}

#[test]
fn monte_carlo_agrees_with_oracle_at_l3() {
    for (i, (p, exact)) in EXACT_L3.into_iter().enumerate() {
        let cfg = TrialConfig { size: 3, p, trials: 100_000, tau: 0.02, master_seed: 11 + i as u64 };
        let est = run_batch(&cfg).unwrap();
        let sigma = (exact * (1.0 - exact) / cfg.trials as f64).sqrt();
        let z = (est.p_fail - exact) / sigma;
        assert!(z.abs() < 4.0, "p = {p}: MC {} vs exact {exact}, z = {z}", est.p_fail);
    }
}

#[test]
fn truncated_oracle_brackets_the_full_sum() {
    let full = exact_failure_probability(3, 0.05, 0.02, None).unwrap();
    let cut = exact_failure_probability(3, 0.05, 0.02, Some(4)).unwrap();
    assert!(cut.p_fail <= full.p_fail);
    assert!(full.p_fail <= cut.p_fail + cut.truncation_bound);
}

fn chain_strategy(size: usize) -> impl Strategy<Value = Vec<usize>> {
    prop::collection::vec(0..2 * size * size, 0..3 * size)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn correction_clears_the_syndrome(edges in chain_strategy(7)) {
        let lattice = ToricLattice::new(7).unwrap();
        let error = ErrorChain::from_edges(&lattice, edges);
        let syndrome = lattice.syndrome(&error);
        let correction = decode(&syndrome, &lattice, &DecoderConfig::default());
        let residual = correction.sum(&error);
        prop_assert!(lattice.is_cycle(&residual));
        prop_assert!(correction.weight() <= syndrome.len() / 2 * 7);
    }

    #[test]
    fn stabilizer_equivalent_errors_fail_alike(edges in chain_strategy(5), vx in 0usize..5, vy in 0usize..5) {
        let lattice = ToricLattice::new(5).unwrap();
        let decoder = DecoderConfig::default();
        let error = ErrorChain::from_edges(&lattice, edges);
        let shifted = error.sum(&lattice.vertex_star(vx, vy));
        prop_assert_eq!(decoding_fails(&lattice, &decoder, &error), decoding_fails(&lattice, &decoder, &shifted));
    }

    #[test]
    fn low_weight_errors_never_fail(edges in prop::collection::vec(0usize..98, 0..4)) {
        // Fewer than ⌈L/2⌉ = 4 errors at L = 7 cannot cause a failure.
        let lattice = ToricLattice::new(7).unwrap();
        let error = ErrorChain::from_edges(&lattice, edges);
        prop_assert!(!decoding_fails(&lattice, &DecoderConfig::default(), &error));
    }
}
