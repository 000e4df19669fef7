//! Offline negative generator: hill-climbing over small edits.
//!
//! Each iteration draws a few random edits of the current candidate and keeps
//! the one whose scores are closest (L1) to the target. It is accepted when it
//! is no farther than the current candidate, so accepted distances never
//! increase. The reference itself is never a candidate. Edits:
//!
//! - delete a unit (mostly lowers adequacy)
//! - insert a unit absent from the reference (mostly lowers faithfulness)
//! - swap a unit with one of its two right neighbours (lowers fluency)
//! - strip terminal punctuation (lowers fluency)
//!
//! Units are whitespace tokens in word mode and characters in char mode.

use rand::seq::IndexedRandom;
use rand::Rng;
use signdpo_core::rng::stream;
use signdpo_core::LanguageMode;
use signdpo_textmetrics::{
    score_translation, tokenize::is_punct, HashedNgramProvider, MetricConfig, ScoreTriple,
};

use crate::error::{PrefsError, Result};
use crate::generator::NegativeGenerator;

const WORD_FILLERS: &[&str] = &[
    "very", "quite", "maybe", "somehow", "really", "again", "often", "perhaps", "Smith", "Berlin",
    "12", "40",
];
const CHAR_FILLERS: &[&str] = &["很", "也", "就", "又", "还", "吧", "李", "京", "三", "七", "1", "8"];

/// Random edits tried per iteration.
const PROPOSALS: usize = 4;
const TRANSPOSE_WINDOW: usize = 2;

fn l1(a: &ScoreTriple, b: &ScoreTriple) -> f64 {
    a.as_array().iter().zip(b.as_array()).map(|(x, y)| (x - y).abs()).sum()
}

fn units(text: &str, mode: LanguageMode) -> Vec<String> {
    match mode {
        LanguageMode::Word => text.split_whitespace().map(String::from).collect(),
        LanguageMode::Char => text
            .chars()
            .filter(|c| !c.is_whitespace())
            .map(String::from)
            .collect(),
    }
}

fn join(units: &[String], mode: LanguageMode) -> String {
    match mode {
        LanguageMode::Word => units.join(" "),
        LanguageMode::Char => units.concat(),
    }
}

fn propose<R: Rng + ?Sized>(cur: &[String], fillers: &[&str], rng: &mut R) -> Option<Vec<String>> {
    let mut next = cur.to_vec();
    let n = next.len();
    match rng.random_range(0..4) {
        0 if n > 1 => {
            next.remove(rng.random_range(0..n));
        }
        1 if !fillers.is_empty() => {
            let f = fillers.choose(rng)?;
            next.insert(rng.random_range(0..=n), f.to_string());
        }
        2 if n > 1 => {
            let i = rng.random_range(0..n - 1);
            let j = (i + rng.random_range(1..=TRANSPOSE_WINDOW)).min(n - 1);
            next.swap(i, j);
        }
        3 => {
            let last = next.last_mut()?;
            let trimmed = last.trim_end_matches(is_punct).to_string();
            if trimmed.len() == last.len() {
                return None;
            }
            if trimmed.is_empty() {
                next.pop();
            } else {
                *last = trimmed;
            }
        }
        _ => return None,
    }
    Some(next)
}

/// Best candidate found and its achieved scores.
pub fn generate_negative_rule_based<R: Rng + ?Sized>(
    reference: &str,
    target: &ScoreTriple,
    rng: &mut R,
    cfg: &MetricConfig,
    max_iters: usize,
    tolerance: f64,
) -> Result<(String, ScoreTriple)> {
    if max_iters == 0 {
        return Err(PrefsError::Config("max_iters must be at least 1".into()));
    }
    if reference.trim().is_empty() {
        return Err(PrefsError::Input("reference is empty".into()));
    }
    ScoreTriple::new(target.adequacy, target.faithfulness, target.fluency)?;
    let mode = cfg.language_mode;
    let provider = HashedNgramProvider::default();
    let ref_units = units(reference, mode);
    let pool = match mode {
        LanguageMode::Word => WORD_FILLERS,
        LanguageMode::Char => CHAR_FILLERS,
    };
    let fillers: Vec<&str> = pool
        .iter()
        .copied()
        .filter(|f| !ref_units.iter().any(|u| u == f))
        .collect();

    let mut cur = ref_units.clone();
    let mut best: Option<(String, ScoreTriple, f64)> = None;
    for _ in 0..max_iters {
        let mut pick: Option<(Vec<String>, String, ScoreTriple, f64)> = None;
        for _ in 0..PROPOSALS {
            let Some(cand) = propose(&cur, &fillers, rng) else { continue };
            let text = join(&cand, mode);
            if text.is_empty() || text == reference {
                continue;
            }
            let s = score_translation(&text, reference, cfg, Some(&provider))?.triple;
            let d = l1(&s, target);
            if pick.as_ref().is_none_or(|p| d < p.3) {
                pick = Some((cand, text, s, d));
            }
        }
        let Some((cand, text, s, d)) = pick else { continue };
        if best.as_ref().is_none_or(|b| d <= b.2) {
            cur = cand;
            best = Some((text, s, d));
            if d <= tolerance {
                break;
            }
        }
    }
    match best {
        Some((text, s, _)) => Ok((text, s)),
        // every proposal failed: a single unit with no fillers left
        None => {
            let mut text = reference.to_string();
            text.push_str(match mode {
                LanguageMode::Word => " ...",
                LanguageMode::Char => "…",
            });
            let s = score_translation(&text, reference, cfg, Some(&provider))?.triple;
            Ok((text, s))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RuleBasedGenerator {
    pub metrics: MetricConfig,
    pub max_iters: usize,
    pub tolerance: f64,
}

impl Default for RuleBasedGenerator {
    fn default() -> Self {
        Self {
            metrics: MetricConfig::default(),
            max_iters: 200,
            tolerance: 0.05,
        }
    }
}

impl RuleBasedGenerator {
    pub fn generate_scored(&self, reference: &str, target: &ScoreTriple, seed: u64) -> Result<(String, ScoreTriple)> {
        let mut rng = stream(seed, &[]);
        generate_negative_rule_based(reference, target, &mut rng, &self.metrics, self.max_iters, self.tolerance)
    }
}

impl NegativeGenerator for RuleBasedGenerator {
    fn generate_negative(&self, reference: &str, target: &ScoreTriple, seed: u64) -> Result<String> {
        self.generate_scored(reference, target, seed).map(|(t, _)| t)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use signdpo_core::rng::seeded;

    #[test]
    fn transposition_stays_local() {
        let cur: Vec<String> = (0..6).map(|i| i.to_string()).collect();
        let mut rng = seeded(1);
        for _ in 0..500 {
            if let Some(next) = propose(&cur, &[], &mut rng) {
                let moved: Vec<usize> = (0..6).filter(|&i| next.get(i) != cur.get(i)).collect();
                if next.len() == cur.len() && !moved.is_empty() {
                    assert_eq!(moved.len(), 2);
                    assert!(moved[1] - moved[0] <= TRANSPOSE_WINDOW);
                }
            }
        }
    }

    #[test]
    fn zero_iterations_is_a_config_error() {
        let t = ScoreTriple::new(1.0, 1.0, 1.0).unwrap();
        let err = generate_negative_rule_based("a b", &t, &mut seeded(0), &MetricConfig::default(), 0, 0.1);
        assert!(matches!(err, Err(PrefsError::Config(_))));
    }
}
