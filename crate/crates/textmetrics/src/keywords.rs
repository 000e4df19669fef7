//! Reference keywords without a part-of-speech tagger.
//!
//! Candidates are content tokens: lowercased words that are not stopwords in
//! word mode, character bigrams inside runs of non-stop characters in char
//! mode (a lone character when the run has length 1). Each candidate is ranked
//! by `0.4·length + 0.3·frequency + 0.3·earliness`, every term normalised to
//! `[0, 1]`, and the best four whose first occurrences do not overlap are kept.

use std::collections::HashSet;

use signdpo_core::LanguageMode;

use crate::tokenize::{is_punct, tokenize};

pub const MAX_KEYWORDS: usize = 4;

const ENGLISH_STOPWORDS: &[&str] = &[
    "a", "about", "after", "again", "all", "also", "am", "an", "and", "any", "are", "as", "at",
    "be", "because", "been", "before", "being", "but", "by", "can", "could", "did", "do", "does",
    "doing", "for", "from", "had", "has", "have", "having", "he", "her", "here", "hers", "him",
    "his", "how", "i", "if", "in", "into", "is", "it", "its", "just", "me", "my", "no", "nor",
    "not", "now", "of", "off", "on", "once", "only", "or", "other", "our", "ours", "out", "over",
    "own", "she", "should", "so", "some", "such", "than", "that", "the", "their", "theirs",
    "them", "then", "there", "these", "they", "this", "those", "through", "to", "too", "under",
    "until", "up", "very", "was", "we", "were", "what", "when", "where", "which", "while", "who",
    "whom", "why", "will", "with", "would", "you", "your", "yours",
];

const CHINESE_STOPCHARS: &[char] = &[
    '的', '了', '是', '在', '和', '与', '及', '也', '都', '就', '而', '或', '这', '那', '你', '我',
    '他', '她', '它', '们', '之', '于', '着', '把', '被', '吗', '呢', '吧', '啊', '很', '个', '地',
    '得', '又', '还', '让', '给', '对',
];

pub fn is_stopword(token: &str, mode: LanguageMode) -> bool {
    match mode {
        LanguageMode::Word => ENGLISH_STOPWORDS.contains(&token.to_lowercase().as_str()),
        LanguageMode::Char => {
            let mut it = token.chars();
            matches!((it.next(), it.next()), (Some(c), None) if CHINESE_STOPCHARS.contains(&c))
        }
    }
}

struct Candidate {
    text: String,
    /// First occurrence as a token or character span.
    span: (usize, usize),
    freq: usize,
}

fn add(cands: &mut Vec<Candidate>, text: String, span: (usize, usize)) {
    match cands.iter_mut().find(|c| c.text == text) {
        Some(c) => c.freq += 1,
        None => cands.push(Candidate { text, span, freq: 1 }),
    }
}

fn candidates(reference: &str, mode: LanguageMode) -> (Vec<Candidate>, usize) {
    let mut cands = Vec::new();
    match mode {
        LanguageMode::Word => {
            let toks = tokenize(reference, mode);
            for (i, t) in toks.iter().enumerate() {
                let t = t.to_lowercase();
                if t.chars().any(char::is_alphanumeric) && !is_stopword(&t, mode) {
                    add(&mut cands, t, (i, i + 1));
                }
            }
            (cands, toks.len())
        }
        LanguageMode::Char => {
            let chars: Vec<char> = reference.chars().filter(|c| !c.is_whitespace()).collect();
            let content = |c: char| !is_punct(c) && !CHINESE_STOPCHARS.contains(&c);
            let mut i = 0;
            while i < chars.len() {
                if !content(chars[i]) {
                    i += 1;
                    continue;
                }
                let start = i;
                while i < chars.len() && content(chars[i]) {
                    i += 1;
                }
                if i - start == 1 {
                    add(&mut cands, chars[start].to_string(), (start, i));
                } else {
                    for j in start..i - 1 {
                        add(&mut cands, chars[j..j + 2].iter().collect(), (j, j + 2));
                    }
                }
            }
            (cands, chars.len())
        }
    }
}

/// Up to four reference keywords, best first.
pub fn keywords(reference: &str, mode: LanguageMode) -> Vec<String> {
    let (cands, n) = candidates(reference, mode);
    if cands.is_empty() {
        return Vec::new();
    }
    let max_len = cands.iter().map(|c| c.text.chars().count()).max().unwrap_or(1) as f64;
    let max_freq = cands.iter().map(|c| c.freq).max().unwrap_or(1) as f64;
    let score = |c: &Candidate| {
        0.4 * c.text.chars().count() as f64 / max_len
            + 0.3 * c.freq as f64 / max_freq
            + 0.3 * (1.0 - c.span.0 as f64 / n as f64)
    };
    let mut ranked: Vec<(f64, &Candidate)> = cands.iter().map(|c| (score(c), c)).collect();
    // ties go to the earlier occurrence
    ranked.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.span.0.cmp(&b.1.span.0)));
    let mut taken: Vec<(usize, usize)> = Vec::new();
    let mut out = Vec::new();
    for (_, c) in ranked {
        if out.len() == MAX_KEYWORDS {
            break;
        }
        if taken.iter().all(|&(s, e)| c.span.1 <= s || e <= c.span.0) {
            taken.push(c.span);
            out.push(c.text.clone());
        }
    }
    out
}

/// Fraction of reference keywords found verbatim in `pred`: as a token in word
/// mode (case-insensitive), as a substring in char mode. 1 when the reference
/// has no keywords.
pub fn keyword_coverage(pred: &str, reference: &str, mode: LanguageMode) -> f64 {
    let kws = keywords(reference, mode);
    if kws.is_empty() {
        return 1.0;
    }
    let hits = match mode {
        LanguageMode::Word => {
            let toks: HashSet<String> =
                tokenize(pred, mode).iter().map(|t| t.to_lowercase()).collect();
            kws.iter().filter(|k| toks.contains(*k)).count()
        }
        LanguageMode::Char => {
            let compact: String = pred.chars().filter(|c| !c.is_whitespace()).collect();
            kws.iter().filter(|k| compact.contains(k.as_str())).count()
        }
    };
    hits as f64 / kws.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    const W: LanguageMode = LanguageMode::Word;

    #[test]
    fn ranking_prefers_long_frequent_early_words() {
        let k = keywords("The elephant walked to the river and the elephant drank", W);
        assert_eq!(k, ["elephant", "walked", "river", "drank"]);
    }

    #[test]
    fn stopword_only_reference_is_vacuous() {
        assert!(keywords("it is what it is", W).is_empty());
        assert_eq!(keyword_coverage("anything", "it is what it is", W), 1.0);
    }

    #[test]
    fn char_mode_bigrams_do_not_overlap() {
        let k = keywords("北京天气", LanguageMode::Char);
        assert_eq!(k, ["北京", "天气"]);
        assert_eq!(keyword_coverage("北京下雨", "北京天气", LanguageMode::Char), 0.5);
    }
}
