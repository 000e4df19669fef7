//! Language-level negatives for preference training.
//!
//! The pipeline decodes a corpus with a trained policy, drops outputs equal to
//! their reference, scores the rest (adequacy, faithfulness, fluency), and
//! writes score-conditioned SFT records for a hosted generator. Negatives come
//! from that generator through [`GeneratorClient`] or offline from
//! [`RuleBasedGenerator`]; both implement [`NegativeGenerator`].

pub mod distribution;
pub mod error;
pub mod generator;
pub mod remote;
pub mod rule;
pub mod scored;
pub mod sft;

pub use distribution::{SamplingMode, ScoreDistribution};
pub use error::{PrefsError, Result};
pub use generator::NegativeGenerator;
pub use remote::GeneratorClient;
pub use rule::{generate_negative_rule_based, RuleBasedGenerator};
pub use scored::{collect_and_score, score_candidate, ScoredSample};
pub use sft::{build_sft_dataset, read_sft_dataset, user_message, SftRecord, SYSTEM_PROMPT};
