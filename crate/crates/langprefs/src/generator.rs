use signdpo_textmetrics::ScoreTriple;

use crate::error::Result;

/// Produces a non-preferred translation of `reference` whose quality should
/// land near `target`. Implementations never return the empty string or the
/// reference itself.
pub trait NegativeGenerator: Send + Sync {
    fn generate_negative(&self, reference: &str, target: &ScoreTriple, seed: u64) -> Result<String>;
}
