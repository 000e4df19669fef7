mod common;

use common::{random_model, random_sequence, tokens};
use proptest::prelude::*;
use signdpo_policy::ModelConfig;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    /// The sequence likelihood is the sum of the per-step picks and each step
    /// is a normalised distribution.
    #[test]
    fn likelihood_is_a_sum_of_normalised_steps(
        seed in 0u64..1000,
        frames in 1usize..6,
        ids in prop::collection::vec(4u32..11, 1..5),
    ) {
        let model = random_model(ModelConfig::tiny(11), seed, 0.5);
        let x = random_sequence(frames, seed + 1);
        let trace = model.forward(&x, &tokens(&ids)).unwrap();
        let mut sum = 0.0;
        for (i, &t) in ids.iter().enumerate() {
            let row = trace.step_logprobs(i);
            let mass: f64 = row.iter().map(|l| l.exp()).sum();
            prop_assert!((mass - 1.0).abs() < 1e-9);
            sum += row[t as usize];
        }
        prop_assert!((sum - trace.log_likelihood()).abs() < 1e-9);
        prop_assert!(trace.log_likelihood() <= 0.0);
    }

    /// Appending a token never raises the likelihood of the prefix.
    #[test]
    fn longer_targets_are_no_more_likely(
        seed in 0u64..1000,
        ids in prop::collection::vec(4u32..11, 1..5),
        extra in 4u32..11,
    ) {
        let model = random_model(ModelConfig::tiny(11), seed, 0.5);
        let x = random_sequence(3, seed);
        let short = model.log_likelihood(&x, &tokens(&ids)).unwrap();
        let mut longer = ids.clone();
        longer.push(extra);
        let long = model.log_likelihood(&x, &tokens(&longer)).unwrap();
        prop_assert!(long <= short + 1e-12);
    }
}
