use signdpo_core::LanguageMode;

use crate::tokenize::tokenize;

/// Length of the longest common subsequence, two-row dynamic programme.
pub fn lcs_len<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y {
                prev[j] + 1
            } else {
                prev[j + 1].max(cur[j])
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// ROUGE-L F1 over tokens, in `[0, 1]`.
pub fn rouge_l_f(pred: &str, reference: &str, mode: LanguageMode) -> f64 {
    rouge_l_tokens(&tokenize(pred, mode), &tokenize(reference, mode))
}

pub fn rouge_l_tokens<T: PartialEq>(pred: &[T], reference: &[T]) -> f64 {
    if pred.is_empty() && reference.is_empty() {
        return 1.0;
    }
    let lcs = lcs_len(pred, reference);
    if lcs == 0 {
        return 0.0;
    }
    let p = lcs as f64 / pred.len() as f64;
    let r = lcs as f64 / reference.len() as f64;
    2.0 * p * r / (p + r)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lcs_small_cases() {
        assert_eq!(lcs_len(b"abcbdab", b"bdcaba"), 4);
        assert_eq!(lcs_len::<u8>(b"", b"abc"), 0);
    }

    #[test]
    fn rouge_fixture() {
        let f = rouge_l_f("a c", "a b c", LanguageMode::Word);
        assert!((f - 0.8).abs() < 1e-12);
        assert_eq!(rouge_l_f("x y", "a b", LanguageMode::Word), 0.0);
    }
}
