//! The adequacy / faithfulness / fluency triple.
//!
//! Each dimension is a weighted sum of sub-metrics. Weights of disabled
//! sub-metrics are dropped and the rest rescaled to sum to 1, so a dimension
//! always lies in `[0, 1]`. METEOR and COMET are never computed here and stay
//! disabled; the two semantic sub-metrics are disabled when no similarity
//! provider is given.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use signdpo_core::LanguageMode;

use crate::error::{MetricError, Result};
use crate::keywords::keyword_coverage;
use crate::lexical::{
    char_jaccard, entities, length_adequacy, length_faithfulness, numbers, set_consistency,
    structural_completeness, ABSENT_PENALTY, LENGTH_OVER_THRESHOLD,
};
use crate::ngram::{chrf, overall_bleu_with, BLEU_SMOOTHING};
use crate::rouge::rouge_l_f;
use crate::similarity::{semantic_precision, semantic_recall, SimilarityProvider};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreTriple {
    pub adequacy: f64,
    pub faithfulness: f64,
    pub fluency: f64,
}

impl ScoreTriple {
    pub fn new(adequacy: f64, faithfulness: f64, fluency: f64) -> Result<Self> {
        let t = Self {
            adequacy,
            faithfulness,
            fluency,
        };
        if t.as_array().iter().all(|v| (0.0..=1.0).contains(v)) {
            Ok(t)
        } else {
            Err(MetricError::Input(format!("score triple {t:?} leaves [0, 1]")))
        }
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.adequacy, self.faithfulness, self.fluency]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubMetric {
    SemanticRecall,
    SemanticPrecision,
    CharJaccard,
    Chrf,
    KeywordCoverage,
    LengthAdequacy,
    LengthFaithfulness,
    NumberConsistency,
    EntityConsistency,
    OverallBleu,
    RougeL,
    Meteor,
    Structure,
    Comet,
}

impl SubMetric {
    pub const ALL: [SubMetric; 14] = [
        SubMetric::SemanticRecall,
        SubMetric::SemanticPrecision,
        SubMetric::CharJaccard,
        SubMetric::Chrf,
        SubMetric::KeywordCoverage,
        SubMetric::LengthAdequacy,
        SubMetric::LengthFaithfulness,
        SubMetric::NumberConsistency,
        SubMetric::EntityConsistency,
        SubMetric::OverallBleu,
        SubMetric::RougeL,
        SubMetric::Meteor,
        SubMetric::Structure,
        SubMetric::Comet,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            SubMetric::SemanticRecall => "bs_r",
            SubMetric::SemanticPrecision => "bs_p",
            SubMetric::CharJaccard => "sim_char",
            SubMetric::Chrf => "chrf",
            SubMetric::KeywordCoverage => "cov_kw",
            SubMetric::LengthAdequacy => "len_a",
            SubMetric::LengthFaithfulness => "len_f",
            SubMetric::NumberConsistency => "cons_num",
            SubMetric::EntityConsistency => "cons_ent",
            SubMetric::OverallBleu => "o_bleu",
            SubMetric::RougeL => "rouge_l",
            SubMetric::Meteor => "meteor",
            SubMetric::Structure => "str",
            SubMetric::Comet => "comet",
        }
    }

    /// Sub-metrics that need a model this crate does not ship.
    pub fn unavailable(&self) -> bool {
        matches!(self, SubMetric::Meteor | SubMetric::Comet)
    }

    fn semantic(&self) -> bool {
        matches!(self, SubMetric::SemanticRecall | SubMetric::SemanticPrecision)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dimension {
    Adequacy,
    Faithfulness,
    Fluency,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricConfig {
    pub language_mode: LanguageMode,
    pub adequacy_weights: Vec<(SubMetric, f64)>,
    pub faithfulness_weights: Vec<(SubMetric, f64)>,
    pub fluency_weights: Vec<(SubMetric, f64)>,
    pub enabled: BTreeSet<SubMetric>,
    pub length_over_threshold: f64,
    pub absent_number_penalty: f64,
    pub absent_entity_penalty: f64,
    pub bleu_smoothing: f64,
}

impl Default for MetricConfig {
    fn default() -> Self {
        Self::detailed(LanguageMode::Word)
    }
}

impl MetricConfig {
    /// Six-term fluency and character Jaccard in adequacy.
    pub fn detailed(language_mode: LanguageMode) -> Self {
        use SubMetric::*;
        Self {
            language_mode,
            adequacy_weights: vec![
                (SemanticRecall, 0.4),
                (CharJaccard, 0.3),
                (KeywordCoverage, 0.2),
                (LengthAdequacy, 0.1),
            ],
            faithfulness_weights: vec![
                (SemanticPrecision, 0.4),
                (LengthFaithfulness, 0.2),
                (NumberConsistency, 0.2),
                (EntityConsistency, 0.2),
            ],
            fluency_weights: vec![
                (OverallBleu, 0.25),
                (RougeL, 0.25),
                (Meteor, 0.15),
                (CharJaccard, 0.15),
                (Structure, 0.1),
                (Comet, 0.1),
            ],
            enabled: SubMetric::ALL.into_iter().filter(|m| !m.unavailable()).collect(),
            length_over_threshold: LENGTH_OVER_THRESHOLD,
            absent_number_penalty: ABSENT_PENALTY,
            absent_entity_penalty: ABSENT_PENALTY,
            bleu_smoothing: BLEU_SMOOTHING,
        }
    }

    /// chrF in adequacy and the three-term fluency `0.6·O_BLEU + 0.3·R_L +
    /// 0.1·Str`.
    pub fn summary(language_mode: LanguageMode) -> Self {
        use SubMetric::*;
        let mut cfg = Self::detailed(language_mode);
        cfg.adequacy_weights[1].0 = Chrf;
        cfg.fluency_weights = vec![(OverallBleu, 0.6), (RougeL, 0.3), (Structure, 0.1)];
        cfg
    }

    pub fn preset(name: &str, language_mode: LanguageMode) -> Result<Self> {
        match name {
            "detailed" => Ok(Self::detailed(language_mode)),
            "summary" => Ok(Self::summary(language_mode)),
            other => Err(MetricError::Config(format!(
                "unknown metric preset {other:?} (expected detailed or summary)"
            ))),
        }
    }

    pub fn weights(&self, dim: Dimension) -> &[(SubMetric, f64)] {
        match dim {
            Dimension::Adequacy => &self.adequacy_weights,
            Dimension::Faithfulness => &self.faithfulness_weights,
            Dimension::Fluency => &self.fluency_weights,
        }
    }

    fn active(&self, m: SubMetric, has_provider: bool) -> bool {
        self.enabled.contains(&m) && (has_provider || !m.semantic())
    }

    /// Weights over the active sub-metrics of `dim`, rescaled to sum to 1.
    pub fn effective_weights(&self, dim: Dimension, has_provider: bool) -> Result<Vec<(SubMetric, f64)>> {
        let active: Vec<(SubMetric, f64)> = self
            .weights(dim)
            .iter()
            .copied()
            .filter(|&(m, _)| self.active(m, has_provider))
            .collect();
        let total: f64 = active.iter().map(|(_, w)| w).sum();
        if total <= 0.0 {
            return Err(MetricError::Config(format!("{dim:?} has no enabled sub-metric")));
        }
        Ok(active.into_iter().map(|(m, w)| (m, w / total)).collect())
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(m) = self.enabled.iter().find(|m| m.unavailable()) {
            return Err(MetricError::Config(format!(
                "{} needs an external model and cannot be enabled",
                m.name()
            )));
        }
        let all = [Dimension::Adequacy, Dimension::Faithfulness, Dimension::Fluency];
        if let Some((m, w)) = all
            .iter()
            .flat_map(|&d| self.weights(d).iter())
            .find(|(_, w)| !w.is_finite() || *w < 0.0)
        {
            return Err(MetricError::Config(format!("weight {w} for {}", m.name())));
        }
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        if !(self.length_over_threshold >= 1.0
            && unit(self.absent_number_penalty)
            && unit(self.absent_entity_penalty)
            && self.bleu_smoothing > 0.0
            && self.bleu_smoothing < 1.0)
        {
            return Err(MetricError::Config(format!("invalid metric constants in {self:?}")));
        }
        Ok(())
    }
}

/// Scores with every sub-metric value and the weights actually applied.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoreReport {
    pub triple: ScoreTriple,
    pub values: BTreeMap<SubMetric, f64>,
    pub adequacy_weights: Vec<(SubMetric, f64)>,
    pub faithfulness_weights: Vec<(SubMetric, f64)>,
    pub fluency_weights: Vec<(SubMetric, f64)>,
}

fn sub_metric(
    m: SubMetric,
    pred: &str,
    reference: &str,
    cfg: &MetricConfig,
    provider: Option<&dyn SimilarityProvider>,
) -> f64 {
    let mode = cfg.language_mode;
    match (m, provider) {
        (SubMetric::SemanticRecall, Some(p)) => semantic_recall(pred, reference, mode, p),
        (SubMetric::SemanticPrecision, Some(p)) => semantic_precision(pred, reference, mode, p),
        (SubMetric::CharJaccard, _) => char_jaccard(pred, reference),
        (SubMetric::Chrf, _) => chrf(pred, reference),
        (SubMetric::KeywordCoverage, _) => keyword_coverage(pred, reference, mode),
        (SubMetric::LengthAdequacy, _) => length_adequacy(pred, reference, mode),
        (SubMetric::LengthFaithfulness, _) => {
            length_faithfulness(pred, reference, mode, cfg.length_over_threshold)
        }
        (SubMetric::NumberConsistency, _) => {
            set_consistency(&numbers(reference), &numbers(pred), cfg.absent_number_penalty)
        }
        (SubMetric::EntityConsistency, _) => set_consistency(
            &entities(reference, mode),
            &entities(pred, mode),
            cfg.absent_entity_penalty,
        ),
        (SubMetric::OverallBleu, _) => overall_bleu_with(pred, reference, mode, cfg.bleu_smoothing),
        (SubMetric::RougeL, _) => rouge_l_f(pred, reference, mode),
        (SubMetric::Structure, _) => structural_completeness(pred, mode),
        (SubMetric::SemanticRecall | SubMetric::SemanticPrecision, None)
        | (SubMetric::Meteor | SubMetric::Comet, _) => {
            unreachable!("inactive sub-metric {m:?} requested")
        }
    }
}

/// Scores `pred` against a non-empty `reference`.
pub fn score_translation(
    pred: &str,
    reference: &str,
    cfg: &MetricConfig,
    provider: Option<&dyn SimilarityProvider>,
) -> Result<ScoreReport> {
    if reference.trim().is_empty() {
        return Err(MetricError::Input("reference is empty".into()));
    }
    cfg.validate()?;
    let has = provider.is_some();
    let adequacy_weights = cfg.effective_weights(Dimension::Adequacy, has)?;
    let faithfulness_weights = cfg.effective_weights(Dimension::Faithfulness, has)?;
    let fluency_weights = cfg.effective_weights(Dimension::Fluency, has)?;
    let mut values = BTreeMap::new();
    for &(m, _) in adequacy_weights.iter().chain(&faithfulness_weights).chain(&fluency_weights) {
        values
            .entry(m)
            .or_insert_with(|| sub_metric(m, pred, reference, cfg, provider).clamp(0.0, 1.0));
    }
    // divide by the rescaled total so all-ones sub-metrics give exactly 1
    // despite rounding in the weights
    let combine = |ws: &[(SubMetric, f64)]| {
        let total: f64 = ws.iter().map(|(_, w)| w).sum();
        (ws.iter().map(|(m, w)| w * values[m]).sum::<f64>() / total).clamp(0.0, 1.0)
    };
    let triple = ScoreTriple {
        adequacy: combine(&adequacy_weights),
        faithfulness: combine(&faithfulness_weights),
        fluency: combine(&fluency_weights),
    };
    Ok(ScoreReport {
        triple,
        values,
        adequacy_weights,
        faithfulness_weights,
        fluency_weights,
    })
}
