//! Tokenisation shared by every sub-metric.
//!
//! Word mode splits on whitespace and peels punctuation into separate tokens,
//! keeping apostrophes and hyphens inside words and separators inside numbers
//! (`don't`, `well-known`, `3.5`, `1,000`). Case is preserved. Char mode
//! yields every non-whitespace character.

use signdpo_core::LanguageMode;

/// ASCII punctuation plus the common CJK and typographic marks.
pub fn is_punct(c: char) -> bool {
    c.is_ascii_punctuation()
        || matches!(
            c,
            '。' | '，' | '、' | '；' | '：' | '？' | '！' | '（' | '）' | '【' | '】' | '《' | '》'
                | '「' | '」' | '『' | '』' | '“' | '”' | '‘' | '’' | '…' | '—' | '·'
        )
}

fn joins(prev: char, c: char, next: Option<char>) -> bool {
    let Some(next) = next else { return false };
    match c {
        '\'' | '-' => prev.is_alphanumeric() && next.is_alphanumeric(),
        '.' | ',' => prev.is_ascii_digit() && next.is_ascii_digit(),
        _ => false,
    }
}

fn split_word(chunk: &str, out: &mut Vec<String>) {
    let chars: Vec<char> = chunk.chars().collect();
    let mut cur = String::new();
    for (i, &c) in chars.iter().enumerate() {
        if is_punct(c) && !(i > 0 && joins(chars[i - 1], c, chars.get(i + 1).copied())) {
            if !cur.is_empty() {
                out.push(std::mem::take(&mut cur));
            }
            out.push(c.to_string());
        } else {
            cur.push(c);
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
}

pub fn tokenize(text: &str, mode: LanguageMode) -> Vec<String> {
    match mode {
        LanguageMode::Word => {
            let mut out = Vec::new();
            for chunk in text.split_whitespace() {
                split_word(chunk, &mut out);
            }
            out
        }
        LanguageMode::Char => text
            .chars()
            .filter(|c| !c.is_whitespace())
            .map(String::from)
            .collect(),
    }
}

/// Length used by the length sub-metrics: whitespace-delimited tokens in word
/// mode, non-whitespace characters in char mode.
pub fn text_length(text: &str, mode: LanguageMode) -> usize {
    match mode {
        LanguageMode::Word => text.split_whitespace().count(),
        LanguageMode::Char => text.chars().filter(|c| !c.is_whitespace()).count(),
    }
}
