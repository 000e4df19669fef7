//! Surface sub-metrics: character overlap, lengths, numbers, entities and
//! structural completeness.

use std::collections::BTreeSet;

use signdpo_core::LanguageMode;

use crate::tokenize::{is_punct, text_length};

pub const LENGTH_OVER_THRESHOLD: f64 = 1.2;
pub const ABSENT_PENALTY: f64 = 0.8;

fn char_set(s: &str) -> BTreeSet<char> {
    s.chars().filter(|c| !c.is_whitespace()).collect()
}

/// Jaccard index of the unique non-whitespace characters. Two empty strings
/// score 1.
pub fn char_jaccard(pred: &str, reference: &str) -> f64 {
    let (p, r) = (char_set(pred), char_set(reference));
    let union = p.union(&r).count();
    if union == 0 {
        return 1.0;
    }
    p.intersection(&r).count() as f64 / union as f64
}

/// `min(len_p / len_r, 1)`; 1 for an empty reference.
pub fn length_adequacy(pred: &str, reference: &str, mode: LanguageMode) -> f64 {
    let (p, r) = (text_length(pred, mode), text_length(reference, mode));
    if r == 0 {
        return 1.0;
    }
    (p as f64 / r as f64).min(1.0)
}

/// 1 while `len_p / len_r <= threshold`, else `len_r / len_p`.
pub fn length_faithfulness(pred: &str, reference: &str, mode: LanguageMode, threshold: f64) -> f64 {
    let (p, r) = (text_length(pred, mode) as f64, text_length(reference, mode) as f64);
    if p == 0.0 || (r > 0.0 && p / r <= threshold) {
        1.0
    } else {
        r / p
    }
}

/// `|R ∩ P| / |R|`, or 1 when both are empty and `absent_penalty` when only
/// the reference is.
pub fn set_consistency(reference: &BTreeSet<String>, pred: &BTreeSet<String>, absent_penalty: f64) -> f64 {
    match (reference.is_empty(), pred.is_empty()) {
        (true, true) => 1.0,
        (true, false) => absent_penalty,
        _ => reference.intersection(pred).count() as f64 / reference.len() as f64,
    }
}

/// Maximal runs of ASCII digits.
pub fn numbers(text: &str) -> BTreeSet<String> {
    text.split(|c: char| !c.is_ascii_digit())
        .filter(|s| !s.is_empty())
        .map(String::from)
        .collect()
}

pub fn numerical_consistency(pred: &str, reference: &str) -> f64 {
    set_consistency(&numbers(reference), &numbers(pred), ABSENT_PENALTY)
}

fn starts_upper(w: &str) -> bool {
    w.chars().next().is_some_and(char::is_uppercase)
}

fn word_entities(text: &str) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    let mut run: Vec<&str> = Vec::new();
    let mut flush = |run: &mut Vec<&str>| {
        if !run.is_empty() {
            out.insert(run.join(" "));
            run.clear();
        }
    };
    let mut initial = true;
    for raw in text.split_whitespace() {
        let word = raw.trim_matches(is_punct);
        if raw.starts_with(is_punct) {
            flush(&mut run);
        }
        if !initial && starts_upper(word) && word != "I" {
            run.push(word);
        } else {
            flush(&mut run);
        }
        if raw.ends_with(is_punct) {
            flush(&mut run);
        }
        let ends_sentence = raw.ends_with(['.', '!', '?']);
        if !word.is_empty() || ends_sentence {
            initial = ends_sentence;
        }
    }
    flush(&mut run);
    out
}

const QUOTES: [(char, char); 5] = [('“', '”'), ('「', '」'), ('『', '』'), ('《', '》'), ('"', '"')];

fn char_entities(text: &str) -> BTreeSet<String> {
    let chars: Vec<char> = text.chars().filter(|c| !c.is_whitespace()).collect();
    let mut out = BTreeSet::new();
    let mut i = 0;
    while i < chars.len() {
        if let Some(&(_, close)) = QUOTES.iter().find(|(o, _)| *o == chars[i]) {
            if let Some(len) = chars[i + 1..].iter().position(|&c| c == close) {
                if len > 0 {
                    out.insert(chars[i + 1..i + 1 + len].iter().collect());
                }
                i += len + 2;
                continue;
            }
        }
        if chars[i].is_ascii_digit() {
            let start = i;
            while i < chars.len() && chars[i].is_ascii_digit() {
                i += 1;
            }
            if let Some(&unit) = chars.get(i) {
                if !is_punct(unit) {
                    out.insert(chars[start..=i].iter().collect());
                    i += 1;
                }
            }
            continue;
        }
        i += 1;
    }
    out
}

/// Heuristic named entities. Word mode: maximal runs of capitalised words
/// that do not start a sentence. Char mode: quoted spans and a digit run
/// together with the character it quantifies.
pub fn entities(text: &str, mode: LanguageMode) -> BTreeSet<String> {
    match mode {
        LanguageMode::Word => word_entities(text),
        LanguageMode::Char => char_entities(text),
    }
}

pub fn entity_consistency(pred: &str, reference: &str, mode: LanguageMode) -> f64 {
    set_consistency(&entities(reference, mode), &entities(pred, mode), ABSENT_PENALTY)
}

/// 1 for a sentence-final mark, 0.7 for a clause-final one, 0.5 otherwise.
pub fn terminal_score(pred: &str, mode: LanguageMode) -> f64 {
    let (sentence, clause): (&[char], &[char]) = match mode {
        LanguageMode::Word => (&['.', '!', '?'], &[',', ';']),
        LanguageMode::Char => (&['。', '！', '？'], &['，', '；']),
    };
    match pred.trim_end().chars().last() {
        Some(c) if sentence.contains(&c) => 1.0,
        Some(c) if clause.contains(&c) => 0.7,
        _ => 0.5,
    }
}

/// 1 when opening and closing bracket counts agree, else 0.8. ASCII and
/// full-width brackets are counted in both modes.
pub fn bracket_score(pred: &str) -> f64 {
    let open = pred.chars().filter(|c| matches!(c, '(' | '[' | '（' | '【')).count();
    let close = pred.chars().filter(|c| matches!(c, ')' | ']' | '）' | '】')).count();
    if open == close {
        1.0
    } else {
        0.8
    }
}

/// Mean of [`terminal_score`] and [`bracket_score`].
pub fn structural_completeness(pred: &str, mode: LanguageMode) -> f64 {
    0.5 * (terminal_score(pred, mode) + bracket_score(pred))
}
