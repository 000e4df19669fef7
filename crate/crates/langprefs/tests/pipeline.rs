use rand::SeedableRng;
use signdpo_core::rng::seeded;
use signdpo_langprefs::*;
use signdpo_textmetrics::{LanguageMode, MetricConfig, ScoreTriple, SubMetric};

fn sample(reference: &str, candidate: &str, t: (f64, f64, f64)) -> ScoredSample {
    ScoredSample {
        id: "s".into(),
        reference: reference.into(),
        candidate: candidate.into(),
        scores: ScoreTriple::new(t.0, t.1, t.2).unwrap(),
    }
}

#[test]
fn system_prompt_is_fixed() {
    assert!(SYSTEM_PROMPT.starts_with("You are an assistant that generates text based on scoring conditions. Given a reference text (ref_text) and three scores:\n- adequacy_final: 0~1,"));
    assert!(SYSTEM_PROMPT.ends_with("Do not repeat the scores themselves \u{2014} only output the generated result."));
    assert_eq!(SYSTEM_PROMPT.lines().count(), 5);
}

#[test]
fn sft_records_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("sft.jsonl");
    let s = sample("the \"quoted\" ref\n", "a cand — ünï", (0.8123, 0.5, 0.25));
    build_sft_dataset(std::slice::from_ref(&s), &path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(text.lines().count(), 1);
    let back = read_sft_dataset(&path).unwrap();
    assert_eq!(back, vec![SftRecord::from_sample(&s)]);
    assert_eq!(back[0].system, SYSTEM_PROMPT);
    assert!(back[0].user.ends_with("adequacy_final: 0.812 faithfulness_final: 0.500 fluency_final: 0.250"));
    let v: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
    let roles: Vec<&str> = v["messages"].as_array().unwrap().iter().map(|m| m["role"].as_str().unwrap()).collect();
    assert_eq!(roles, ["system", "user", "assistant"]);
}

#[test]
fn empty_sft_input_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("sft.jsonl");
    assert!(build_sft_dataset(&[], &path).is_err());
    assert!(!path.exists());
}

#[test]
fn malformed_sft_line_names_its_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("sft.jsonl");
    let good = SftRecord::from_sample(&sample("r", "c", (1.0, 1.0, 1.0))).to_json_line();
    std::fs::write(&path, format!("{good}\n{{\"messages\":[]}}\n")).unwrap();
    let err = read_sft_dataset(&path).unwrap_err();
    assert!(matches!(err, PrefsError::Parse { line: 2, .. }), "{err}");
}

#[test]
fn survivor_scoring() {
    let cfg = MetricConfig::default();
    assert!(score_candidate("i", "a b c", "a b c", &cfg, None).unwrap().is_none());
    let s = score_candidate("i", "a b c", "a b", &cfg, None).unwrap().unwrap();
    let report = signdpo_textmetrics::score_translation("a b", "a b c", &cfg, None).unwrap();
    assert!((report.values[&SubMetric::LengthAdequacy] - 2.0 / 3.0).abs() < 1e-12);
    assert_eq!(s.scores, report.triple);
}

#[test]
fn single_triple_distribution_is_constant() {
    let t = ScoreTriple::new(0.1, 0.2, 0.3).unwrap();
    for mode in [SamplingMode::EmpiricalResample, SamplingMode::PerDimension] {
        let d = ScoreDistribution::new(vec![t], mode).unwrap();
        let mut rng = seeded(4);
        assert!((0..100).all(|_| d.sample(&mut rng) == t));
    }
    assert!(ScoreDistribution::new(vec![], SamplingMode::default()).is_err());
}

#[test]
fn empirical_resampling_is_uniform() {
    let triples: Vec<ScoreTriple> =
        (0..5).map(|i| ScoreTriple::new(i as f64 / 10.0, 0.5, 0.5).unwrap()).collect();
    let d = ScoreDistribution::new(triples.clone(), SamplingMode::EmpiricalResample).unwrap();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
    let mut counts = [0usize; 5];
    let n = 100_000;
    for _ in 0..n {
        let s = d.sample(&mut rng);
        counts[triples.iter().position(|t| *t == s).unwrap()] += 1;
    }
    for c in counts {
        assert!((c as f64 / n as f64 - 0.2).abs() < 0.02 * 0.2 + 0.005, "{counts:?}");
    }
    let again: Vec<_> = {
        let mut r = seeded(3);
        (0..10).map(|_| d.sample(&mut r)).collect()
    };
    let mut r = seeded(3);
    assert_eq!(again, (0..10).map(|_| d.sample(&mut r)).collect::<Vec<_>>());
}

#[test]
fn per_dimension_sampling_mixes_axes() {
    let a = ScoreTriple::new(0.0, 0.0, 0.0).unwrap();
    let b = ScoreTriple::new(1.0, 1.0, 1.0).unwrap();
    let d = ScoreDistribution::new(vec![a, b], SamplingMode::PerDimension).unwrap();
    let mut rng = seeded(9);
    let mixed = (0..200).map(|_| d.sample(&mut rng)).filter(|t| *t != a && *t != b).count();
    assert!(mixed > 100);
}

const TEN: &str = "the young farmer carried seven heavy baskets to the market.";

#[test]
fn rule_based_near_identity_target() {
    let g = RuleBasedGenerator::default();
    let t = ScoreTriple::new(1.0, 1.0, 1.0).unwrap();
    let (text, s) = g.generate_scored(TEN, &t, 3).unwrap();
    assert_ne!(text, TEN);
    assert!(s.as_array().iter().all(|v| *v > 0.8), "{text:?} {s:?}");
}

/// Lowering adequacy costs fluency, so the search settles between the two
/// targets; adequacy always moves well below the reference's 1.
#[test]
fn rule_based_moves_adequacy_towards_target() {
    let g = RuleBasedGenerator::default();
    let t = ScoreTriple::new(0.5, 0.9, 0.9).unwrap();
    for seed in 0..20 {
        let (_, s) = g.generate_scored(TEN, &t, seed).unwrap();
        assert!(s.adequacy < 0.8, "{s:?}");
    }
}

/// Accepted candidates never move away from the target.
#[test]
fn more_iterations_never_end_farther_from_target() {
    use signdpo_core::rng::stream;
    let cfg = MetricConfig::default();
    let t = ScoreTriple::new(0.5, 0.9, 0.9).unwrap();
    let l1 = |s: &ScoreTriple| s.as_array().iter().zip(t.as_array()).map(|(a, b)| (a - b).abs()).sum::<f64>();
    for seed in 0..10 {
        // same stream, so the longer run extends the shorter one
        let (_, short) = generate_negative_rule_based(TEN, &t, &mut stream(seed, &[]), &cfg, 10, 0.0).unwrap();
        let (_, long) = generate_negative_rule_based(TEN, &t, &mut stream(seed, &[]), &cfg, 40, 0.0).unwrap();
        assert!(l1(&long) <= l1(&short) + 1e-12);
    }
}

#[test]
fn rule_based_is_deterministic_and_never_returns_the_reference() {
    let g = RuleBasedGenerator { max_iters: 5, ..Default::default() };
    let t = ScoreTriple::new(0.9, 0.9, 0.9).unwrap();
    for seed in 0..1000 {
        let text = g.generate_negative("a cat.", &t, seed).unwrap();
        assert_ne!(text, "a cat.");
        assert!(!text.is_empty());
    }
    assert_eq!(g.generate_scored(TEN, &t, 7).unwrap(), g.generate_scored(TEN, &t, 7).unwrap());
    let single = g.generate_scored("word", &ScoreTriple::new(0.0, 0.0, 0.0).unwrap(), 1).unwrap();
    assert_ne!(single.0, "word");
}

#[test]
fn rule_based_char_mode() {
    let g = RuleBasedGenerator { metrics: MetricConfig::detailed(LanguageMode::Char), ..Default::default() };
    let t = ScoreTriple::new(0.6, 0.9, 0.8).unwrap();
    let (text, _) = g.generate_scored("今天北京下雨了。", &t, 1).unwrap();
    assert_ne!(text, "今天北京下雨了。");
    assert!(!text.contains(' '));
}
