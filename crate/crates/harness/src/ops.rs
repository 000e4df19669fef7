//! Standalone perturbation and scoring used by the `perturb` and `score`
//! subcommands.

use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;
use signdpo_core::perturb::{build_preference_batch, PerturbConfig};
use signdpo_core::rng::stream;
use signdpo_core::saliency::AttentionStack;
use signdpo_core::{LanguageMode, SkeletonSequence, Vocabulary};
use signdpo_policy::PolicyModel;
use signdpo_textmetrics::{score_translation, MetricConfig, ScoreReport};

use crate::error::{HarnessError, Result};

/// Where the key frame of each local window comes from.
#[derive(Debug, Clone, Copy)]
pub enum KeySource<'a> {
    /// Cross-attention of a teacher-forced pass over the reference.
    Model { model: &'a PolicyModel, vocab: &'a Vocabulary },
    /// A fixed frame, clamped to each sequence.
    Frame(usize),
}

fn one_hot_stack(frames: usize, key: usize) -> Result<AttentionStack> {
    let mut data = vec![0.0; frames];
    data[key.min(frames - 1)] = 1.0;
    Ok(AttentionStack::unmasked(1, 1, 1, 0, frames, data)?)
}

/// The four input-level negatives of every sample, in the order spatial
/// global, spatial local, temporal global, temporal local. Ids get a
/// `/<kind>` suffix. Sample `i` draws from `stream(seed, [i])`.
pub fn perturb_corpus(
    corpus: &[SkeletonSequence],
    key: KeySource<'_>,
    seed: u64,
    cfg: &PerturbConfig,
) -> Result<Vec<SkeletonSequence>> {
    let per_sample: Vec<Vec<SkeletonSequence>> = corpus
        .par_iter()
        .enumerate()
        .map(|(i, x)| {
            let attention = match key {
                KeySource::Model { model, vocab } => model.forward(x, &vocab.encode_target(&x.reference_text))?.attention,
                KeySource::Frame(k) => one_hot_stack(x.len(), k)?,
            };
            let b = build_preference_batch(x, &attention, corpus, &mut stream(seed, &[i as u64]), cfg)?;
            let named = [
                ("spatial_global", b.spatial_global),
                ("spatial_local", b.spatial_local),
                ("temporal_global", b.temporal_global),
                ("temporal_local", b.temporal_local),
            ];
            Ok(named
                .into_iter()
                .map(|(kind, mut s)| {
                    s.id = format!("{}/{kind}", x.id);
                    s
                })
                .collect())
        })
        .collect::<Result<_>>()?;
    Ok(per_sample.into_iter().flatten().collect())
}

/// Scores line-aligned predictions against references.
pub fn score_pairs(preds: &[String], refs: &[String], cfg: &MetricConfig) -> Result<Vec<ScoreReport>> {
    if preds.len() != refs.len() {
        return Err(HarnessError::Input(format!(
            "{} predictions for {} references",
            preds.len(),
            refs.len()
        )));
    }
    preds
        .par_iter()
        .zip(refs)
        .map(|(p, r)| Ok(score_translation(p, r, cfg, None)?))
        .collect()
}

#[derive(Serialize)]
struct ScoreRow {
    line: usize,
    adequacy: f64,
    faithfulness: f64,
    fluency: f64,
}

pub fn write_scores(path: &Path, reports: &[ScoreReport]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(HarnessError::csv(path))?;
    for (i, r) in reports.iter().enumerate() {
        w.serialize(ScoreRow {
            line: i + 1,
            adequacy: r.triple.adequacy,
            faithfulness: r.triple.faithfulness,
            fluency: r.triple.fluency,
        })
        .map_err(HarnessError::csv(path))?;
    }
    w.flush().map_err(HarnessError::io(path))
}

/// Non-empty lines of a text file, trimmed of the line break only.
pub fn read_lines(path: &Path) -> Result<Vec<String>> {
    let text = std::fs::read_to_string(path).map_err(HarnessError::io(path))?;
    Ok(text.lines().map(str::to_string).collect())
}

pub fn metric_config(preset: &str, mode: LanguageMode) -> Result<MetricConfig> {
    Ok(MetricConfig::preset(preset, mode)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use signdpo_core::synth::generate_synthetic_corpus;

    #[test]
    fn fixed_key_frame_perturbs_four_ways() {
        let corpus = generate_synthetic_corpus(5, 20, 4, 8..=16).unwrap();
        let out = perturb_corpus(&corpus, KeySource::Frame(0), 1, &PerturbConfig::default()).unwrap();
        assert_eq!(out.len(), 16);
        assert_eq!(out[0].id, format!("{}/spatial_global", corpus[0].id));
        assert_eq!(out[7].id, format!("{}/temporal_local", corpus[1].id));
        let again = perturb_corpus(&corpus, KeySource::Frame(0), 1, &PerturbConfig::default()).unwrap();
        assert!(out.iter().zip(&again).all(|(a, b)| a.frames_bit_equal(b)));
    }

    #[test]
    fn key_frame_is_clamped() {
        let corpus = generate_synthetic_corpus(5, 20, 2, 8..=8).unwrap();
        assert!(perturb_corpus(&corpus, KeySource::Frame(1000), 1, &PerturbConfig::default()).is_ok());
    }

    #[test]
    fn score_pairs_checks_alignment() {
        let cfg = MetricConfig::default();
        assert!(score_pairs(&["a".into()], &[], &cfg).is_err());
        let r = score_pairs(&["the cat sat .".into()], &["the cat sat .".into()], &cfg).unwrap();
        assert!((r[0].triple.adequacy - 1.0).abs() < 1e-12);
    }
}
