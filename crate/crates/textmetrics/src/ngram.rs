//! BLEU and chrF.
//!
//! `BLEU_n` is the modified `n`-gram precision times the brevity penalty, so
//! the geometric mean of `BLEU_1..BLEU_4` equals standard 4-gram BLEU. Zero
//! match counts are floored at [`BLEU_SMOOTHING`]. An order that neither
//! side is long enough to form has precision 1, so identical short sentences
//! score 1.

use std::collections::HashMap;

use signdpo_core::LanguageMode;

use crate::error::{MetricError, Result};
use crate::tokenize::tokenize;

pub const BLEU_SMOOTHING: f64 = 1e-9;
pub const MAX_ORDER: usize = 4;

fn ngram_counts<T: AsRef<str>>(tokens: &[T], n: usize) -> HashMap<Vec<&str>, usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *counts.entry(w.iter().map(|t| t.as_ref()).collect()).or_insert(0) += 1;
        }
    }
    counts
}

/// Sufficient statistics for BLEU; sum them for corpus-level scores.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BleuStats {
    /// Clipped matches per order, index `n - 1`.
    pub matches: [usize; MAX_ORDER],
    /// Prediction `n`-gram counts per order.
    pub totals: [usize; MAX_ORDER],
    /// Reference `n`-gram counts per order.
    pub ref_totals: [usize; MAX_ORDER],
    pub pred_len: usize,
    pub ref_len: usize,
}

impl BleuStats {
    pub fn from_tokens<T: AsRef<str>>(pred: &[T], reference: &[T]) -> Self {
        let mut s = BleuStats {
            pred_len: pred.len(),
            ref_len: reference.len(),
            ..Default::default()
        };
        for n in 1..=MAX_ORDER {
            let r = ngram_counts(reference, n);
            let p = ngram_counts(pred, n);
            s.totals[n - 1] = p.values().sum();
            s.ref_totals[n - 1] = r.values().sum();
            s.matches[n - 1] = p
                .iter()
                .map(|(g, &c)| c.min(r.get(g).copied().unwrap_or(0)))
                .sum();
        }
        s
    }

    pub fn from_text(pred: &str, reference: &str, mode: LanguageMode) -> Self {
        Self::from_tokens(&tokenize(pred, mode), &tokenize(reference, mode))
    }

    pub fn add(&mut self, other: &BleuStats) {
        for n in 0..MAX_ORDER {
            self.matches[n] += other.matches[n];
            self.totals[n] += other.totals[n];
            self.ref_totals[n] += other.ref_totals[n];
        }
        self.pred_len += other.pred_len;
        self.ref_len += other.ref_len;
    }

    /// `exp(1 - r/c)` for a short prediction, 0 for an empty one.
    pub fn brevity_penalty(&self) -> f64 {
        if self.pred_len == 0 {
            0.0
        } else if self.pred_len >= self.ref_len {
            1.0
        } else {
            (1.0 - self.ref_len as f64 / self.pred_len as f64).exp()
        }
    }

    /// Modified precision of order `n`, a zero match count replaced by `eps`.
    pub fn precision_with(&self, n: usize, eps: f64) -> f64 {
        let m = self.matches[n - 1];
        if self.totals[n - 1] == 0 && self.ref_totals[n - 1] == 0 {
            return 1.0;
        }
        let t = self.totals[n - 1].max(1) as f64;
        if m == 0 {
            eps / t
        } else {
            m as f64 / t
        }
    }

    pub fn precision(&self, n: usize) -> f64 {
        self.precision_with(n, BLEU_SMOOTHING)
    }

    /// `BLEU_n = BP · p_n`.
    pub fn bleu_order(&self, n: usize) -> f64 {
        self.brevity_penalty() * self.precision(n)
    }

    /// Cumulative BLEU up to order `n`: `BP · exp(mean ln p_1..p_n)`, the
    /// B@n convention of translation papers.
    pub fn cumulative(&self, n: usize) -> f64 {
        let bp = self.brevity_penalty();
        if bp == 0.0 {
            return 0.0;
        }
        let mean = (1..=n).map(|k| self.precision(k).ln()).sum::<f64>() / n as f64;
        bp * mean.exp()
    }

    /// Geometric mean of `BLEU_1..BLEU_4`.
    pub fn overall(&self) -> f64 {
        self.overall_with(BLEU_SMOOTHING)
    }

    pub fn overall_with(&self, eps: f64) -> f64 {
        let bp = self.brevity_penalty();
        geometric_mean(&(1..=MAX_ORDER).map(|n| bp * self.precision_with(n, eps)).collect::<Vec<_>>())
    }
}

/// `exp(mean ln c)`; 0 if any component is 0.
pub fn geometric_mean(components: &[f64]) -> f64 {
    if components.is_empty() || components.iter().any(|&c| c <= 0.0) {
        return 0.0;
    }
    (components.iter().map(|c| c.ln()).sum::<f64>() / components.len() as f64).exp()
}

pub fn bleu_n(pred: &str, reference: &str, n: usize, mode: LanguageMode) -> Result<f64> {
    if !(1..=MAX_ORDER).contains(&n) {
        return Err(MetricError::Input(format!("BLEU order {n} is outside 1..=4")));
    }
    Ok(BleuStats::from_text(pred, reference, mode).bleu_order(n))
}

/// `O_BLEU`, the geometric mean of `BLEU_1..BLEU_4`.
pub fn overall_bleu(pred: &str, reference: &str, mode: LanguageMode) -> f64 {
    BleuStats::from_text(pred, reference, mode).overall()
}

pub fn overall_bleu_with(pred: &str, reference: &str, mode: LanguageMode, eps: f64) -> f64 {
    BleuStats::from_text(pred, reference, mode).overall_with(eps)
}

const CHRF_ORDER: usize = 6;
const CHRF_BETA: f64 = 2.0;

/// Character `n`-gram F-score (`n` up to 6, `β = 2`) over non-whitespace
/// characters, averaged over the orders either side can form.
pub fn chrf(pred: &str, reference: &str) -> f64 {
    let p: Vec<String> = pred.chars().filter(|c| !c.is_whitespace()).map(String::from).collect();
    let r: Vec<String> =
        reference.chars().filter(|c| !c.is_whitespace()).map(String::from).collect();
    if p.is_empty() && r.is_empty() {
        return 1.0;
    }
    let b2 = CHRF_BETA * CHRF_BETA;
    let mut sum = 0.0;
    let mut orders = 0;
    for n in 1..=CHRF_ORDER {
        let pc = ngram_counts(&p, n);
        let rc = ngram_counts(&r, n);
        let (pt, rt): (usize, usize) = (pc.values().sum(), rc.values().sum());
        if pt == 0 && rt == 0 {
            continue;
        }
        orders += 1;
        let m: usize = pc
            .iter()
            .map(|(g, &c)| c.min(rc.get(g).copied().unwrap_or(0)))
            .sum();
        if m == 0 {
            continue;
        }
        let prec = m as f64 / pt as f64;
        let rec = m as f64 / rt as f64;
        sum += (1.0 + b2) * prec * rec / (b2 * prec + rec);
    }
    sum / orders as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    const W: LanguageMode = LanguageMode::Word;

    #[test]
    fn identity_scores_one() {
        let s = "the cat sat on the mat";
        for n in 1..=4 {
            assert_eq!(bleu_n(s, s, n, W).unwrap(), 1.0);
        }
        assert_eq!(overall_bleu(s, s, W), 1.0);
        assert_eq!(overall_bleu("hi", "hi", W), 1.0);
        assert!(overall_bleu("hi", "hi there", W) < 1e-2);
        assert_eq!(chrf(s, s), 1.0);
    }

    #[test]
    fn hand_counted_precisions() {
        // pred 4 tokens, ref 6: BP = exp(1 - 6/4)
        let s = BleuStats::from_text("the cat the mat", "the cat sat on the mat", W);
        assert_eq!(s.matches, [4, 2, 0, 0]);
        assert_eq!(s.totals, [4, 3, 2, 1]);
        assert_eq!(s.ref_totals, [6, 5, 4, 3]);
        let bp = (1.0f64 - 1.5).exp();
        assert!((s.bleu_order(2) - bp * 2.0 / 3.0).abs() < 1e-15);
        assert!((s.cumulative(2) - bp * (2.0f64 / 3.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn clipping_limits_repeats() {
        let s = BleuStats::from_text("the the the", "the cat", W);
        assert_eq!(s.matches[0], 1);
    }

    #[test]
    fn invalid_order_and_empty_prediction() {
        assert!(bleu_n("a", "a", 0, W).is_err());
        assert!(bleu_n("a", "a", 5, W).is_err());
        assert_eq!(overall_bleu("", "a b", W), 0.0);
    }

    #[test]
    fn smoothing_keeps_scores_positive() {
        let o = overall_bleu("a b c d e", "a b c x d e", W);
        assert!(o > 0.0 && o < 1e-2, "{o}");
    }

    #[test]
    fn chrf_partial_overlap() {
        let v = chrf("abc", "abd");
        assert!(v > 0.0 && v < 1.0);
        assert_eq!(chrf("abc", "xyz"), 0.0);
    }
}
