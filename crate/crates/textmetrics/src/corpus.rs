use serde::Serialize;
use signdpo_core::LanguageMode;

use crate::ngram::BleuStats;
use crate::rouge::rouge_l_f;

/// Corpus-level surface scores of a set of (prediction, reference) pairs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CorpusScores {
    /// Cumulative BLEU-1..4 from pooled `n`-gram counts.
    pub bleu: [f64; 4],
    /// Geometric mean of the pooled per-order `BLEU_n`.
    pub overall_bleu: f64,
    /// Mean sentence ROUGE-L F1.
    pub rouge_l: f64,
}

pub fn corpus_scores<P: AsRef<str>, R: AsRef<str>>(pairs: &[(P, R)], mode: LanguageMode) -> CorpusScores {
    let mut stats = BleuStats::default();
    let mut rouge = 0.0;
    for (p, r) in pairs {
        stats.add(&BleuStats::from_text(p.as_ref(), r.as_ref(), mode));
        rouge += rouge_l_f(p.as_ref(), r.as_ref(), mode);
    }
    if pairs.is_empty() {
        return CorpusScores {
            bleu: [0.0; 4],
            overall_bleu: 0.0,
            rouge_l: 0.0,
        };
    }
    CorpusScores {
        bleu: [1, 2, 3, 4].map(|n| stats.cumulative(n)),
        overall_bleu: stats.overall(),
        rouge_l: rouge / pairs.len() as f64,
    }
}
