mod common;

use common::{random_model, random_sequence, tokens};
use signdpo_core::vocab::{BOS, EOS, PAD};
use signdpo_policy::generate::hypothesis_score;
use signdpo_policy::{beam_search, generate, ModelConfig, PolicyModel};

/// Stepwise argmax over emittable tokens, re-running the full teacher-forced
/// pass at every step.
fn greedy_oracle(model: &PolicyModel, x: &signdpo_core::SkeletonSequence, max_len: usize) -> Vec<u32> {
    let mut out: Vec<u32> = Vec::new();
    while out.len() < max_len {
        let mut probe = out.clone();
        probe.push(EOS);
        let trace = model.forward(x, &tokens(&probe)).unwrap();
        let row = trace.step_logprobs(out.len());
        let mut best = None;
        for (t, &l) in row.iter().enumerate() {
            if t == PAD as usize || t == BOS as usize {
                continue;
            }
            if best.is_none_or(|(_, b)| l > b) {
                best = Some((t, l));
            }
        }
        let tok = best.unwrap().0 as u32;
        if tok == EOS {
            break;
        }
        out.push(tok);
    }
    out
}

#[test]
fn width_one_is_greedy() {
    for seed in 0..20 {
        let model = random_model(ModelConfig::desk(12), seed, 0.4);
        let x = random_sequence(6 + seed as usize % 5, seed + 50);
        let got = generate(&model, &x, 1, 8).unwrap();
        assert_eq!(got.tokens, greedy_oracle(&model, &x, 8), "seed {seed}");
    }
}

#[test]
fn beam_respects_length_and_is_deterministic() {
    for seed in 0..10 {
        let model = random_model(ModelConfig::desk(12), seed, 0.4);
        let x = random_sequence(8, seed);
        let a = beam_search(&model, &x, 4, 6).unwrap();
        let b = beam_search(&model, &x, 4, 6).unwrap();
        assert_eq!(a, b);
        assert!(a.tokens.len() <= 6);
        assert!(a.tokens.iter().all(|&t| t != PAD && t != BOS && t != EOS));
    }
}

#[test]
fn beam_score_matches_rescoring_and_beats_greedy() {
    let mut rescored_cases = 0;
    for seed in 0..20 {
        let model = random_model(ModelConfig::desk(10), seed, 0.6);
        let x = random_sequence(7, seed + 7);
        let beam = beam_search(&model, &x, 4, 30).unwrap();
        let greedy = beam_search(&model, &x, 1, 30).unwrap();
        assert!(beam.score >= greedy.score - 1e-12, "seed {seed}");
        if beam.tokens.len() < 30 {
            let rescored = hypothesis_score(&model, &x, &beam.tokens).unwrap();
            assert!((rescored - beam.score).abs() < 1e-9);
            rescored_cases += 1;
        }
    }
    assert!(rescored_cases >= 5, "only {rescored_cases} hypotheses finished by EOS");
}

#[test]
fn uniform_model_stops_at_eos_tie_break() {
    // every token ties; the smallest emittable id is EOS
    let model = PolicyModel::new(ModelConfig::desk(12), 3).unwrap();
    let x = random_sequence(5, 1);
    let h = beam_search(&model, &x, 4, 10).unwrap();
    assert!(h.tokens.is_empty());
    assert!((h.score + (12f64).ln()).abs() < 1e-12);
}
