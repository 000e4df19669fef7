use rand::Rng;
use serde::{Deserialize, Serialize};
use signdpo_textmetrics::ScoreTriple;

use crate::error::{PrefsError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SamplingMode {
    /// A stored triple, uniformly.
    #[default]
    EmpiricalResample,
    /// Each axis drawn independently from its marginal.
    PerDimension,
}

/// Score triples observed on a scored corpus. Never empty.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreDistribution {
    triples: Vec<ScoreTriple>,
    pub mode: SamplingMode,
}

impl ScoreDistribution {
    pub fn new(triples: Vec<ScoreTriple>, mode: SamplingMode) -> Result<Self> {
        if triples.is_empty() {
            return Err(PrefsError::Input("score distribution is empty".into()));
        }
        Ok(Self { triples, mode })
    }

    pub fn triples(&self) -> &[ScoreTriple] {
        &self.triples
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> ScoreTriple {
        let n = self.triples.len();
        match self.mode {
            SamplingMode::EmpiricalResample => self.triples[rng.random_range(0..n)],
            SamplingMode::PerDimension => ScoreTriple {
                adequacy: self.triples[rng.random_range(0..n)].adequacy,
                faithfulness: self.triples[rng.random_range(0..n)].faithfulness,
                fluency: self.triples[rng.random_range(0..n)].fluency,
            },
        }
    }
}

