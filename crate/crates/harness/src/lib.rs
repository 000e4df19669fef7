//! Training harness: configuration, the SFT / DPO / multi-level training
//! loop, evaluation with best-checkpoint selection, the language-negative
//! pipeline, and the `signdpo` command-line tool built on them.

pub mod cli;
pub mod config;
pub mod data;
pub mod error;
pub mod eval;
pub mod ops;
pub mod prefs;
pub mod train;

pub use config::{Ablation, Mode, TrainConfig};
pub use data::{align_negatives, load_corpus, read_negatives, vocab_from_corpus, write_negatives, NegativeRecord};
pub use error::{HarnessError, Result};
pub use eval::{evaluate, token_accuracy, write_reports, EvalReport, MarginProbe};
pub use prefs::{build_prefs, write_prefs, NegativeSource, PrefsConfig, PrefsOutput};
pub use train::{initial_model, run_training, train, StepRecord, TrainOutcome, TrainSet};
