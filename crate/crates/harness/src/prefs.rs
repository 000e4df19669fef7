//! The `build-prefs` pipeline: decode, score, write SFT records, and
//! generate one language negative per sample.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use signdpo_core::rng::{derive_seed, stream};
use signdpo_core::{SkeletonSequence, Vocabulary};
use signdpo_langprefs::{
    build_sft_dataset, score_candidate, GeneratorClient, RuleBasedGenerator, SamplingMode, ScoreDistribution,
    ScoredSample,
};
use signdpo_policy::PolicyModel;
use signdpo_textmetrics::{score_translation, MetricConfig, ScoreTriple};

use crate::data::{write_negatives, NegativeRecord};
use crate::error::{HarnessError, Result};
use crate::eval::{corpus_mode, decode_corpus};

/// Where language negatives come from.
#[derive(Debug, Clone)]
pub enum NegativeSource {
    /// Offline edit search against the score target.
    RuleBased(RuleBasedGenerator),
    /// A hosted chat-completion endpoint.
    Remote(GeneratorClient),
}

#[derive(Debug, Clone)]
pub struct PrefsConfig {
    pub seed: u64,
    pub sampling: SamplingMode,
    pub source: NegativeSource,
}

#[derive(Debug, Clone)]
pub struct PrefsOutput {
    /// Policy outputs that differ from their references, with scores.
    pub scored: Vec<ScoredSample>,
    pub negatives: Vec<NegativeRecord>,
}

/// Scores the policy's outputs on `scored_split` to get the target
/// distribution, then generates a negative for every sample of `targets`.
/// Targets are drawn per sample from `stream(seed, [index])`.
pub fn build_prefs(
    model: &PolicyModel,
    vocab: &Vocabulary,
    scored_split: &[SkeletonSequence],
    targets: &[SkeletonSequence],
    cfg: &PrefsConfig,
) -> Result<PrefsOutput> {
    if scored_split.is_empty() || targets.is_empty() {
        return Err(HarnessError::Input("build-prefs needs non-empty corpora".into()));
    }
    let metrics = MetricConfig::detailed(corpus_mode(scored_split));
    let preds = decode_corpus(model, vocab, scored_split)?;
    let scored: Vec<ScoredSample> = scored_split
        .iter()
        .zip(&preds)
        .map(|(s, p)| score_candidate(&s.id, &s.reference_text, p, &metrics, None))
        .collect::<std::result::Result<Vec<_>, _>>()?
        .into_iter()
        .flatten()
        .collect();
    if scored.is_empty() {
        return Err(HarnessError::Input(format!(
            "all {} outputs equal their references; score a held-out split instead",
            scored_split.len()
        )));
    }
    let dist = ScoreDistribution::new(scored.iter().map(|s| s.scores).collect(), cfg.sampling)?;
    let wanted: Vec<ScoreTriple> = (0..targets.len())
        .map(|i| dist.sample(&mut stream(cfg.seed, &[i as u64])))
        .collect();

    let texts: Vec<String> = match &cfg.source {
        NegativeSource::RuleBased(g) => targets
            .par_iter()
            .zip(&wanted)
            .enumerate()
            .map(|(i, (s, t))| {
                g.generate_scored(&s.reference_text, t, derive_seed(cfg.seed, &[i as u64]))
                    .map(|(text, _)| text)
            })
            .collect::<std::result::Result<_, _>>()?,
        NegativeSource::Remote(client) => {
            let items: Vec<(String, ScoreTriple)> =
                targets.iter().zip(&wanted).map(|(s, t)| (s.reference_text.clone(), *t)).collect();
            client.generate_batch(&items).into_iter().collect::<std::result::Result<_, _>>()?
        }
    };

    let target_metrics = MetricConfig::detailed(corpus_mode(targets));
    let negatives = targets
        .iter()
        .zip(wanted.iter().zip(texts))
        .map(|(s, (t, text))| {
            let achieved = score_translation(&text, &s.reference_text, &target_metrics, None)?.triple;
            Ok(NegativeRecord {
                id: s.id.clone(),
                reference: s.reference_text.clone(),
                negative: text,
                target: *t,
                achieved: Some(achieved),
            })
        })
        .collect::<Result<_>>()?;
    Ok(PrefsOutput { scored, negatives })
}

#[derive(Serialize)]
struct ScoredRow<'a> {
    id: &'a str,
    reference: &'a str,
    candidate: &'a str,
    adequacy: f64,
    faithfulness: f64,
    fluency: f64,
}

/// Paths written by [`write_prefs`].
#[derive(Debug, Clone)]
pub struct PrefsFiles {
    pub scored: PathBuf,
    pub sft: PathBuf,
    pub negatives: PathBuf,
}

/// Writes `scored.csv`, `sft.jsonl` and `negatives.jsonl` into `dir`.
pub fn write_prefs(dir: &Path, out: &PrefsOutput) -> Result<PrefsFiles> {
    std::fs::create_dir_all(dir).map_err(HarnessError::io(dir))?;
    let files = PrefsFiles {
        scored: dir.join("scored.csv"),
        sft: dir.join("sft.jsonl"),
        negatives: dir.join("negatives.jsonl"),
    };
    let mut w = csv::Writer::from_path(&files.scored).map_err(HarnessError::csv(&files.scored))?;
    for s in &out.scored {
        w.serialize(ScoredRow {
            id: &s.id,
            reference: &s.reference,
            candidate: &s.candidate,
            adequacy: s.scores.adequacy,
            faithfulness: s.scores.faithfulness,
            fluency: s.scores.fluency,
        })
        .map_err(HarnessError::csv(&files.scored))?;
    }
    w.flush().map_err(HarnessError::io(&files.scored))?;
    build_sft_dataset(&out.scored, &files.sft)?;
    write_negatives(&files.negatives, &out.negatives)?;
    Ok(files)
}
