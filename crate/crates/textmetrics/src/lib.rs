//! Sentence-level translation quality scoring.
//!
//! Three dimensions, each a weighted sum of sub-metrics in `[0, 1]`:
//! adequacy (semantic recall, character overlap, keyword coverage, length),
//! faithfulness (semantic precision, length, number and entity consistency)
//! and fluency (BLEU, ROUGE-L, character overlap, structure). See
//! [`score_translation`].

pub mod corpus;
pub mod error;
pub mod keywords;
pub mod lexical;
pub mod ngram;
pub mod rouge;
pub mod score;
pub mod similarity;
pub mod tokenize;

pub use corpus::{corpus_scores, CorpusScores};
pub use error::{MetricError, Result};
pub use keywords::{keyword_coverage, keywords};
pub use lexical::{
    char_jaccard, entities, entity_consistency, length_adequacy, length_faithfulness, numbers,
    numerical_consistency, structural_completeness,
};
pub use ngram::{bleu_n, chrf, geometric_mean, overall_bleu, BleuStats};
pub use rouge::{lcs_len, rouge_l_f};
pub use score::{score_translation, Dimension, MetricConfig, ScoreReport, ScoreTriple, SubMetric};
pub use similarity::{
    semantic_precision, semantic_recall, HashedNgramProvider, SimilarityProvider,
    VectorTableProvider,
};
pub use signdpo_core::LanguageMode;
pub use tokenize::{text_length, tokenize};
