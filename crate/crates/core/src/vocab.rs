//! Token vocabularies for word- and character-tokenized targets.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::skeleton::LanguageMode;

pub const PAD: u32 = 0;
pub const BOS: u32 = 1;
pub const EOS: u32 = 2;
pub const UNK: u32 = 3;
pub const NUM_SPECIAL: usize = 4;

const SPECIAL_NAMES: [&str; NUM_SPECIAL] = ["<pad>", "<s>", "</s>", "<unk>"];

/// Token ids plus the text they came from.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TokenSequence {
    pub tokens: Vec<u32>,
    pub text: String,
}

impl TokenSequence {
    pub fn new(tokens: Vec<u32>, text: impl Into<String>) -> Self {
        Self {
            tokens,
            text: text.into(),
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    mode: LanguageMode,
    names: Vec<String>,
    index: HashMap<String, u32>,
}

const CONSONANTS: &[u8] = b"bdfgklmnprstvz";
const VOWELS: &[u8] = b"aeiou";

/// Pronounceable pseudo-word for content index `i` (two or more syllables).
fn pseudo_word(mut i: usize) -> String {
    let per = CONSONANTS.len() * VOWELS.len();
    let mut syllables = Vec::new();
    loop {
        let s = i % per;
        syllables.push(s);
        i /= per;
        if i == 0 && syllables.len() >= 2 {
            break;
        }
    }
    syllables
        .iter()
        .rev()
        .flat_map(|&s| {
            [
                CONSONANTS[s / VOWELS.len()] as char,
                VOWELS[s % VOWELS.len()] as char,
            ]
        })
        .collect()
}

impl Vocabulary {
    fn from_names(mode: LanguageMode, content: impl IntoIterator<Item = String>) -> Self {
        let mut names: Vec<String> = SPECIAL_NAMES.iter().map(|s| s.to_string()).collect();
        let mut index: HashMap<String, u32> = names
            .iter()
            .enumerate()
            .map(|(i, n)| (n.clone(), i as u32))
            .collect();
        for name in content {
            if !index.contains_key(&name) {
                index.insert(name.clone(), names.len() as u32);
                names.push(name);
            }
        }
        Self { mode, names, index }
    }

    /// Word vocabulary of exactly `size` entries with pseudo-word content
    /// tokens, as used by the synthetic corpus.
    pub fn synthetic(size: usize) -> Result<Self> {
        if size < NUM_SPECIAL {
            return Err(Error::Config(format!(
                "vocabulary size {size} is below the {NUM_SPECIAL} reserved tokens"
            )));
        }
        Ok(Self::from_names(
            LanguageMode::Word,
            (0..size - NUM_SPECIAL).map(pseudo_word),
        ))
    }

    /// Vocabulary covering every token of `texts`, in first-seen order.
    pub fn from_texts<'a>(mode: LanguageMode, texts: impl IntoIterator<Item = &'a str>) -> Self {
        let mut content = Vec::new();
        for text in texts {
            content.extend(split_units(mode, text).map(str::to_string));
        }
        Self::from_names(mode, content)
    }

    pub fn mode(&self) -> LanguageMode {
        self.mode
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn name(&self, id: u32) -> Option<&str> {
        self.names.get(id as usize).map(String::as_str)
    }

    pub fn id(&self, name: &str) -> Option<u32> {
        self.index.get(name).copied()
    }

    /// Content ids (everything after the reserved specials).
    pub fn content_ids(&self) -> std::ops::Range<u32> {
        NUM_SPECIAL as u32..self.names.len() as u32
    }

    pub fn tokenize(&self, text: &str) -> TokenSequence {
        let tokens = split_units(self.mode, text)
            .map(|u| self.index.get(u).copied().unwrap_or(UNK))
            .collect();
        TokenSequence::new(tokens, text)
    }

    /// Tokenizes a training target and terminates it with EOS.
    pub fn encode_target(&self, text: &str) -> TokenSequence {
        let mut seq = self.tokenize(text);
        seq.tokens.push(EOS);
        seq
    }

    /// Renders ids back to text; PAD/BOS/EOS are dropped.
    pub fn detokenize(&self, tokens: &[u32]) -> String {
        let units = tokens
            .iter()
            .filter(|&&t| !matches!(t, PAD | BOS | EOS))
            .map(|&t| self.name(t).unwrap_or(SPECIAL_NAMES[UNK as usize]));
        match self.mode {
            LanguageMode::Word => units.collect::<Vec<_>>().join(" "),
            LanguageMode::Char => units.collect(),
        }
    }

    /// One line per token, first line is the mode.
    pub fn to_text(&self) -> String {
        let mut out = String::from(self.mode.as_str());
        out.push('\n');
        for name in &self.names[NUM_SPECIAL..] {
            out.push_str(name);
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let mode: LanguageMode = lines
            .next()
            .ok_or_else(|| Error::Validation("empty vocabulary file".into()))?
            .trim()
            .parse()?;
        Ok(Self::from_names(mode, lines.map(str::to_string)))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_text()).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_text(&text)
    }
}

fn split_units(mode: LanguageMode, text: &str) -> Box<dyn Iterator<Item = &str> + '_> {
    match mode {
        LanguageMode::Word => Box::new(text.split_whitespace()),
        LanguageMode::Char => Box::new(
            text.char_indices()
                .filter(|(_, c)| !c.is_whitespace())
                .map(move |(i, c)| &text[i..i + c.len_utf8()]),
        ),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn synthetic_names_are_unique() {
        let v = Vocabulary::synthetic(5000).unwrap();
        assert_eq!(v.len(), 5000);
        assert_eq!(v.name(4), Some("baba"));
        assert!(Vocabulary::synthetic(3).is_err());
    }

    #[test]
    fn unknown_words_map_to_unk() {
        let v = Vocabulary::from_texts(LanguageMode::Word, ["the cat"]);
        assert_eq!(v.tokenize("the dog").tokens, vec![4, UNK]);
        assert_eq!(v.encode_target("cat").tokens, vec![5, EOS]);
    }

    #[test]
    fn char_mode_splits_characters() {
        let v = Vocabulary::from_texts(LanguageMode::Char, ["你好 吗"]);
        let seq = v.tokenize("好你");
        assert_eq!(seq.tokens, vec![5, 4]);
        assert_eq!(v.detokenize(&seq.tokens), "好你");
    }

    #[test]
    fn file_round_trip() {
        let v = Vocabulary::synthetic(30).unwrap();
        assert_eq!(Vocabulary::from_text(&v.to_text()).unwrap(), v);
    }

    proptest! {
        #[test]
        fn detokenize_tokenize_round_trip(ids in proptest::collection::vec(4u32..60, 1..12)) {
            let v = Vocabulary::synthetic(60).unwrap();
            let text = v.detokenize(&ids);
            prop_assert_eq!(v.tokenize(&text).tokens, ids);
        }
    }
}
