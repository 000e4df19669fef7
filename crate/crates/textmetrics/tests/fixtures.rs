use signdpo_textmetrics::*;

const W: LanguageMode = LanguageMode::Word;
const TOL: f64 = 1e-4;

#[test]
fn published_fixtures_reproduce() {
    assert!((rouge_l_f("a c", "a b c", W) - 0.8).abs() < TOL);
    assert!((char_jaccard("abc", "abd") - 0.5).abs() < TOL);
    assert!((length_faithfulness("a b c", "a b", W, 1.2) - 0.6667).abs() < TOL);
    assert_eq!(length_adequacy("a b c", "a b", W), 1.0);
    assert_eq!(length_adequacy("a", "a b", W), 0.5);
    assert_eq!(length_faithfulness("a", "a b", W, 1.2), 1.0);
    assert_eq!(numerical_consistency("none", "none"), 1.0);
    assert_eq!(numerical_consistency("has 6", "has 5"), 0.0);
    assert_eq!(numerical_consistency("has 7", "none"), 0.8);
    assert_eq!(structural_completeness("Hello.", W), 1.0);
    assert!((structural_completeness("Hello,", W) - 0.85).abs() < TOL);
    assert!((structural_completeness("Hello (x", W) - 0.65).abs() < TOL);
    assert!((geometric_mean(&[0.5, 0.4, 0.3, 0.2]) - 0.33098).abs() < TOL);
}

#[test]
fn keyword_coverage_counts_forced_keywords() {
    let reference = "alpha bravo charlie delta";
    assert_eq!(keywords(reference, W).len(), 4);
    assert_eq!(keyword_coverage("alpha and bravo", reference, W), 0.5);
    assert_eq!(keyword_coverage(reference, reference, W), 1.0);
    assert_eq!(keyword_coverage("x", "the of and", W), 1.0);
}

#[test]
fn identity_pair_maximises_every_sub_metric() {
    let p = HashedNgramProvider::default();
    let s = "Maria bought 3 apples in Rome yesterday.";
    let r = score_translation(s, s, &MetricConfig::default(), Some(&p)).unwrap();
    for (m, v) in &r.values {
        assert_eq!(*v, 1.0, "{}", m.name());
    }
    assert_eq!(r.triple.as_array(), [1.0, 1.0, 1.0]);
}

#[test]
fn disabled_fluency_terms_renormalise() {
    let cfg = MetricConfig::default();
    let w = cfg.effective_weights(Dimension::Fluency, true).unwrap();
    let denom = 0.25 + 0.25 + 0.15 + 0.1;
    let expect = [
        (SubMetric::OverallBleu, 0.25 / denom),
        (SubMetric::RougeL, 0.25 / denom),
        (SubMetric::CharJaccard, 0.15 / denom),
        (SubMetric::Structure, 0.1 / denom),
    ];
    assert_eq!(w.len(), expect.len());
    for ((m, a), (n, b)) in w.iter().zip(expect) {
        assert_eq!(*m, n);
        assert!((a - b).abs() < 1e-15);
    }
}

#[test]
fn report_decomposes_into_weighted_sub_metrics() {
    let p = HashedNgramProvider::default();
    let cases = [
        ("the cat sat on a mat,", "The cat sat on the mat."),
        ("Paris has 4 bridges (old", "Paris has 5 old bridges."),
        ("", "something was said"),
    ];
    for (provider, cfg) in [
        (Some(&p as &dyn SimilarityProvider), MetricConfig::default()),
        (None, MetricConfig::default()),
        (Some(&p as &dyn SimilarityProvider), MetricConfig::summary(W)),
    ] {
        for (pred, reference) in cases {
            let r = score_translation(pred, reference, &cfg, provider).unwrap();
            for (ws, v) in [
                (&r.adequacy_weights, r.triple.adequacy),
                (&r.faithfulness_weights, r.triple.faithfulness),
                (&r.fluency_weights, r.triple.fluency),
            ] {
                let total: f64 = ws.iter().map(|(_, w)| w).sum();
                assert!((total - 1.0).abs() < 1e-12);
                let sum: f64 = ws.iter().map(|(m, w)| w * r.values[m]).sum();
                assert!((sum - v).abs() < 1e-12);
            }
            assert_eq!(provider.is_some(), r.values.contains_key(&SubMetric::SemanticRecall));
        }
    }
}

#[test]
fn summary_preset_uses_chrf_and_three_term_fluency() {
    let cfg = MetricConfig::summary(W);
    let f = cfg.effective_weights(Dimension::Fluency, true).unwrap();
    let expect = [(SubMetric::OverallBleu, 0.6), (SubMetric::RougeL, 0.3), (SubMetric::Structure, 0.1)];
    for ((m, a), (n, b)) in f.iter().zip(expect) {
        assert_eq!(*m, n);
        assert!((a - b).abs() < 1e-15);
    }
    assert_eq!(cfg.adequacy_weights[1].0, SubMetric::Chrf);
    assert!(MetricConfig::preset("other", W).is_err());
}

#[test]
fn invalid_inputs_and_configs() {
    let cfg = MetricConfig::default();
    assert!(matches!(score_translation("a", "  ", &cfg, None), Err(MetricError::Input(_))));
    let mut bad = cfg.clone();
    bad.enabled.insert(SubMetric::Comet);
    assert!(matches!(score_translation("a", "a", &bad, None), Err(MetricError::Config(_))));
    let mut empty = cfg.clone();
    empty.enabled.clear();
    assert!(score_translation("a", "a", &empty, None).is_err());
    assert!(ScoreTriple::new(0.5, 1.2, 0.0).is_err());
}

/// Brute-force pairwise cosine table, greedy max per reference token.
#[test]
fn semantic_recall_matches_pairwise_oracle() {
    let p = HashedNgramProvider::default();
    let pred = "quick brown foxes jump high";
    let reference = "the quick fox jumped";
    let pt: Vec<String> = pred.split(' ').map(String::from).collect();
    let rt: Vec<String> = reference.split(' ').map(String::from).collect();
    let mut total = 0.0;
    for r in &rt {
        let rv = p.embed(r).unwrap();
        let mut best = f64::NEG_INFINITY;
        for q in &pt {
            let qv = p.embed(q).unwrap();
            let dot: f64 = rv.iter().zip(&qv).map(|(a, b)| a * b).sum();
            best = best.max(if r == q { 1.0 } else { dot });
        }
        total += best;
    }
    let oracle = (total / rt.len() as f64).clamp(0.0, 1.0);
    assert!((semantic_recall(pred, reference, W, &p) - oracle).abs() < 1e-9);
}

#[test]
fn char_mode_scores() {
    let c = LanguageMode::Char;
    let p = HashedNgramProvider::default();
    let cfg = MetricConfig::detailed(c);
    let r = score_translation("今天北京下雨。", "今天北京下雨。", &cfg, Some(&p)).unwrap();
    assert_eq!(r.triple.as_array(), [1.0, 1.0, 1.0]);
    let r = score_translation("今天下雨", "今天北京下雨。", &cfg, Some(&p)).unwrap();
    assert!(r.triple.adequacy < 1.0 && r.triple.fluency < 1.0);
    assert!((r.values[&SubMetric::LengthAdequacy] - 4.0 / 7.0).abs() < 1e-12);
}
