use serde::{Deserialize, Serialize};
use signdpo_core::{SkeletonSequence, Vocabulary};
use signdpo_policy::{generate, PolicyModel};
use signdpo_textmetrics::{score_translation, MetricConfig, ScoreTriple, SimilarityProvider};

use crate::distribution::{SamplingMode, ScoreDistribution};
use crate::error::{PrefsError, Result};

/// A policy output that differs from its reference, with its scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredSample {
    pub id: String,
    pub reference: String,
    pub candidate: String,
    pub scores: ScoreTriple,
}

/// Scores `candidate` against `reference`; `None` when they are identical.
pub fn score_candidate(
    id: &str,
    reference: &str,
    candidate: &str,
    cfg: &MetricConfig,
    provider: Option<&dyn SimilarityProvider>,
) -> Result<Option<ScoredSample>> {
    if candidate == reference {
        return Ok(None);
    }
    let report = score_translation(candidate, reference, cfg, provider)?;
    Ok(Some(ScoredSample {
        id: id.to_string(),
        reference: reference.to_string(),
        candidate: candidate.to_string(),
        scores: report.triple,
    }))
}

/// Beam-decodes every clip, drops exact matches with the reference, and
/// scores the rest.
pub fn collect_and_score(
    model: &PolicyModel,
    vocab: &Vocabulary,
    corpus: &[SkeletonSequence],
    cfg: &MetricConfig,
    provider: Option<&dyn SimilarityProvider>,
    mode: SamplingMode,
) -> Result<(Vec<ScoredSample>, ScoreDistribution)> {
    if corpus.is_empty() {
        return Err(PrefsError::Input("corpus is empty".into()));
    }
    let mc = model.config();
    let mut samples = Vec::new();
    for x in corpus {
        let out = generate(model, x, mc.beam_width, mc.max_gen_len)?;
        let text = vocab.detokenize(&out.tokens);
        if let Some(s) = score_candidate(&x.id, &x.reference_text, &text, cfg, provider)? {
            samples.push(s);
        }
    }
    if samples.is_empty() {
        return Err(PrefsError::Pipeline(format!(
            "all {} outputs equal their references; score a held-out split or decode more diversely",
            corpus.len()
        )));
    }
    let dist = ScoreDistribution::new(samples.iter().map(|s| s.scores).collect(), mode)?;
    Ok((samples, dist))
}
