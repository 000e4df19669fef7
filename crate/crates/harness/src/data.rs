//! Corpus, vocabulary and negatives-file plumbing.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use signdpo_core::skeleton::load_sequences;
use signdpo_core::{SkeletonSequence, TokenSequence, Vocabulary};
use signdpo_textmetrics::ScoreTriple;

use crate::error::{HarnessError, Result};

pub fn load_corpus(path: impl AsRef<Path>) -> Result<Vec<SkeletonSequence>> {
    let corpus = load_sequences(path.as_ref())?;
    if corpus.is_empty() {
        return Err(HarnessError::Input(format!("{} holds no sequences", path.as_ref().display())));
    }
    Ok(corpus)
}

/// Vocabulary over the reference texts of `corpus`, in first-seen order.
pub fn vocab_from_corpus(corpus: &[SkeletonSequence]) -> Result<Vocabulary> {
    let first = corpus
        .first()
        .ok_or_else(|| HarnessError::Input("cannot build a vocabulary from an empty corpus".into()))?;
    let mode = first.language_mode;
    if let Some(other) = corpus.iter().find(|s| s.language_mode != mode) {
        return Err(HarnessError::Input(format!(
            "corpus mixes language modes ({} is {}, {} is {})",
            first.id,
            mode.as_str(),
            other.id,
            other.language_mode.as_str()
        )));
    }
    Ok(Vocabulary::from_texts(mode, corpus.iter().map(|s| s.reference_text.as_str())))
}

/// EOS-terminated targets for every sample.
pub fn encode_targets(corpus: &[SkeletonSequence], vocab: &Vocabulary) -> Vec<TokenSequence> {
    corpus.iter().map(|s| vocab.encode_target(&s.reference_text)).collect()
}

/// One language negative `Y⁻` for the sample `id`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NegativeRecord {
    pub id: String,
    pub reference: String,
    pub negative: String,
    /// Score triple the generator aimed for.
    pub target: ScoreTriple,
    /// Scores of `negative` against `reference`, when the generator reports them.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub achieved: Option<ScoreTriple>,
}

/// Writes one JSON record per line.
pub fn write_negatives(path: impl AsRef<Path>, records: &[NegativeRecord]) -> Result<()> {
    let path = path.as_ref();
    let mut out = Vec::new();
    for r in records {
        serde_json::to_writer(&mut out, r).map_err(|e| HarnessError::Input(e.to_string()))?;
        out.push(b'\n');
    }
    let mut f = fs::File::create(path).map_err(HarnessError::io(path))?;
    f.write_all(&out).map_err(HarnessError::io(path))
}

pub fn read_negatives(path: impl AsRef<Path>) -> Result<Vec<NegativeRecord>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(HarnessError::io(path))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| HarnessError::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

/// Token sequences of the negatives, aligned with `corpus`. Every sample
/// needs a record with a matching id and reference, and a negative that
/// differs from the reference.
pub fn align_negatives(
    corpus: &[SkeletonSequence],
    records: &[NegativeRecord],
    vocab: &Vocabulary,
) -> Result<Vec<TokenSequence>> {
    let by_id: BTreeMap<&str, &NegativeRecord> = records.iter().map(|r| (r.id.as_str(), r)).collect();
    corpus
        .iter()
        .map(|s| {
            let r = by_id
                .get(s.id.as_str())
                .ok_or_else(|| HarnessError::Input(format!("no language negative for sample {}", s.id)))?;
            if r.reference != s.reference_text {
                return Err(HarnessError::Input(format!(
                    "negative for {} was built from a different reference ('{}' vs '{}')",
                    s.id, r.reference, s.reference_text
                )));
            }
            if r.negative == r.reference {
                return Err(HarnessError::Input(format!("negative for {} equals its reference", s.id)));
            }
            Ok(vocab.encode_target(&r.negative))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use signdpo_core::synth::generate_synthetic_corpus;

    fn record(id: &str, reference: &str, negative: &str) -> NegativeRecord {
        NegativeRecord {
            id: id.into(),
            reference: reference.into(),
            negative: negative.into(),
            target: ScoreTriple::new(0.5, 0.5, 0.5).unwrap(),
            achieved: None,
        }
    }

    #[test]
    fn negatives_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("neg.jsonl");
        let recs = vec![record("a", "x y", "y x"), record("b", "z", "z .")];
        write_negatives(&path, &recs).unwrap();
        assert_eq!(read_negatives(&path).unwrap(), recs);
    }

    #[test]
    fn alignment_needs_every_sample() {
        let corpus = generate_synthetic_corpus(1, 20, 3, 8..=16).unwrap();
        let vocab = vocab_from_corpus(&corpus).unwrap();
        let mut recs: Vec<_> = corpus
            .iter()
            .map(|s| record(&s.id, &s.reference_text, "something else"))
            .collect();
        let negs = align_negatives(&corpus, &recs, &vocab).unwrap();
        assert_eq!(negs.len(), 3);
        recs.pop();
        assert!(matches!(align_negatives(&corpus, &recs, &vocab), Err(HarnessError::Input(_))));
    }

    #[test]
    fn stale_negatives_are_rejected() {
        let corpus = generate_synthetic_corpus(1, 20, 1, 8..=16).unwrap();
        let vocab = vocab_from_corpus(&corpus).unwrap();
        let recs = vec![record(&corpus[0].id, "not the reference", "x")];
        assert!(align_negatives(&corpus, &recs, &vocab).is_err());
        let recs = vec![record(&corpus[0].id, &corpus[0].reference_text, &corpus[0].reference_text)];
        assert!(align_negatives(&corpus, &recs, &vocab).is_err());
    }

    #[test]
    fn vocab_covers_the_corpus() {
        let corpus = generate_synthetic_corpus(2, 50, 100, 8..=16).unwrap();
        let vocab = vocab_from_corpus(&corpus).unwrap();
        for t in encode_targets(&corpus, &vocab) {
            assert!(!t.tokens.contains(&signdpo_core::vocab::UNK));
        }
    }
}
