//! Corpus evaluation, teacher-forced accuracy and preference margins.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use signdpo_core::objectives::NegativeKind;
use signdpo_core::perturb::{build_preference_batch, PerturbConfig};
use signdpo_core::rng::stream;
use signdpo_core::{LanguageMode, SkeletonSequence, TokenSequence, Vocabulary};
use signdpo_policy::{generate, PolicyModel};
use signdpo_textmetrics::corpus_scores;

use crate::error::{HarnessError, Result};

/// Stream index reserved for margin-probe perturbations, so they never
/// coincide with a training draw (which uses the epoch there).
const PROBE_STREAM: u64 = u64::MAX - 1;

/// Corpus scores of one split. Metrics lie in [0, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub split: String,
    pub checkpoint: Option<String>,
    pub samples: usize,
    /// Cumulative corpus BLEU-1..4.
    pub bleu: [f64; 4],
    pub overall_bleu: f64,
    pub rouge_l: f64,
}

impl EvalReport {
    pub const METRIC_COLUMNS: [&'static str; 6] = ["B@1", "B@2", "B@3", "B@4", "O_BLEU", "R@L"];

    pub fn b4(&self) -> f64 {
        self.bleu[3]
    }

    pub fn metrics(&self) -> [f64; 6] {
        let b = self.bleu;
        [b[0], b[1], b[2], b[3], self.overall_bleu, self.rouge_l]
    }
}

/// Writes reports as CSV with metrics scaled to percentages.
pub fn write_reports(path: impl AsRef<Path>, reports: &[EvalReport]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(HarnessError::csv(path))?;
    let mut header = vec!["split", "checkpoint", "samples"];
    header.extend(EvalReport::METRIC_COLUMNS);
    w.write_record(&header).map_err(HarnessError::csv(path))?;
    for r in reports {
        let mut row = vec![
            r.split.clone(),
            r.checkpoint.clone().unwrap_or_default(),
            r.samples.to_string(),
        ];
        row.extend(r.metrics().iter().map(|m| format!("{:.4}", 100.0 * m)));
        w.write_record(&row).map_err(HarnessError::csv(path))?;
    }
    w.flush().map_err(HarnessError::io(path))
}

/// Beam-decodes every sample; output order follows `corpus`.
pub fn decode_corpus(model: &PolicyModel, vocab: &Vocabulary, corpus: &[SkeletonSequence]) -> Result<Vec<String>> {
    let cfg = model.config();
    corpus
        .par_iter()
        .map(|x| {
            let out = generate(model, x, cfg.beam_width, cfg.max_gen_len)?;
            Ok(vocab.detokenize(&out.tokens))
        })
        .collect()
}

/// Scores `predictions` against the references of `corpus`.
pub fn score_predictions(split: &str, corpus: &[SkeletonSequence], predictions: &[String]) -> Result<EvalReport> {
    if corpus.is_empty() {
        return Err(HarnessError::Input(format!("split {split} is empty")));
    }
    if corpus.len() != predictions.len() {
        return Err(HarnessError::Input(format!(
            "{} predictions for {} samples",
            predictions.len(),
            corpus.len()
        )));
    }
    let mode = corpus[0].language_mode;
    let pairs: Vec<(&str, &str)> = predictions
        .iter()
        .zip(corpus)
        .map(|(p, s)| (p.as_str(), s.reference_text.as_str()))
        .collect();
    let s = corpus_scores(&pairs, mode);
    Ok(EvalReport {
        split: split.to_string(),
        checkpoint: None,
        samples: corpus.len(),
        bleu: s.bleu,
        overall_bleu: s.overall_bleu,
        rouge_l: s.rouge_l,
    })
}

pub fn evaluate(model: &PolicyModel, vocab: &Vocabulary, corpus: &[SkeletonSequence], split: &str) -> Result<EvalReport> {
    let preds = decode_corpus(model, vocab, corpus)?;
    score_predictions(split, corpus, &preds)
}

/// Share of target steps whose argmax under teacher forcing is the target.
pub fn token_accuracy(model: &PolicyModel, corpus: &[SkeletonSequence], targets: &[TokenSequence]) -> Result<f64> {
    let counts: Vec<(usize, usize)> = corpus
        .par_iter()
        .zip(targets)
        .map(|(x, y)| {
            let trace = model.forward(x, y)?;
            let hits = trace.argmax_tokens().iter().zip(&y.tokens).filter(|(a, b)| a == b).count();
            Ok((hits, y.tokens.len()))
        })
        .collect::<Result<_>>()?;
    let (hits, total) = counts.iter().fold((0, 0), |(h, t), (a, b)| (h + a, t + b));
    if total == 0 {
        return Err(HarnessError::Input("no target steps to score".into()));
    }
    Ok(hits as f64 / total as f64)
}

/// A clean pair with a fixed negative of each kind.
#[derive(Debug, Clone)]
pub struct ProbePair {
    pub x: SkeletonSequence,
    pub y: TokenSequence,
    /// Input-level negatives, indexed by [`NegativeKind::index`]; the
    /// language slot is unused.
    pub inputs: [Option<SkeletonSequence>; 5],
    pub language: Option<TokenSequence>,
}

/// Fixed evaluation pairs for preference margins. The negatives are drawn
/// once, with windows from `model`'s attention, so margins measured at
/// different points of training compare the same pairs.
#[derive(Debug, Clone)]
pub struct MarginProbe {
    pub pairs: Vec<ProbePair>,
}

impl MarginProbe {
    pub fn build(
        model: &PolicyModel,
        corpus: &[SkeletonSequence],
        targets: &[TokenSequence],
        language: Option<&[TokenSequence]>,
        seed: u64,
        perturb: &PerturbConfig,
    ) -> Result<Self> {
        let pairs = corpus
            .par_iter()
            .enumerate()
            .map(|(i, x)| {
                let y = &targets[i];
                let trace = model.forward(x, y)?;
                let mut rng = stream(seed, &[i as u64, PROBE_STREAM]);
                let b = build_preference_batch(x, &trace.attention, corpus, &mut rng, perturb)?;
                Ok(ProbePair {
                    x: x.clone(),
                    y: y.clone(),
                    inputs: [
                        None,
                        Some(b.spatial_global),
                        Some(b.spatial_local),
                        Some(b.temporal_global),
                        Some(b.temporal_local),
                    ],
                    language: language.map(|l| l[i].clone()),
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self { pairs })
    }

    /// Mean of `log π(Y|X) − log π(negative)` per kind. `None` for the
    /// language kind when the probe has no language negatives.
    pub fn margins(&self, model: &PolicyModel) -> Result<[Option<f64>; 5]> {
        let per_pair: Vec<[Option<f64>; 5]> = self
            .pairs
            .par_iter()
            .map(|p| {
                let pos = model.log_likelihood(&p.x, &p.y)?;
                let mut out = [None; 5];
                for kind in NegativeKind::ALL {
                    let neg = if kind.is_input_level() {
                        match &p.inputs[kind.index()] {
                            Some(xn) => Some(model.log_likelihood(xn, &p.y)?),
                            None => None,
                        }
                    } else {
                        match &p.language {
                            Some(yn) => Some(model.log_likelihood(&p.x, yn)?),
                            None => None,
                        }
                    };
                    out[kind.index()] = neg.map(|n| pos - n);
                }
                Ok(out)
            })
            .collect::<Result<_>>()?;
        let mut means = [None; 5];
        for (k, slot) in means.iter_mut().enumerate() {
            let vals: Vec<f64> = per_pair.iter().filter_map(|m| m[k]).collect();
            if !vals.is_empty() {
                *slot = Some(vals.iter().sum::<f64>() / vals.len() as f64);
            }
        }
        Ok(means)
    }
}

/// Language mode shared by every sample of `corpus`.
pub fn corpus_mode(corpus: &[SkeletonSequence]) -> LanguageMode {
    corpus.first().map(|s| s.language_mode).unwrap_or(LanguageMode::Word)
}
