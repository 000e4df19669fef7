//! Token-embedding similarity in the style of BERTScore.
//!
//! Recall matches every reference token to its most similar prediction token
//! and averages the cosines; precision is recall with the roles swapped. The
//! mean is rescaled as `(s - b) / (1 - b)` against the provider baseline `b`
//! and clamped to `[0, 1]`. Identical tokens score exactly 1 so a sentence
//! matched against itself scores exactly 1.

use std::collections::HashMap;
use std::io::BufRead;
use std::path::Path;

use signdpo_core::LanguageMode;

use crate::error::{MetricError, Result};
use crate::tokenize::tokenize;

/// Read-only token embedder, shareable across threads.
pub trait SimilarityProvider: Send + Sync {
    /// `None` for tokens the provider cannot embed; they match nothing.
    fn embed(&self, token: &str) -> Option<Vec<f64>>;

    fn baseline(&self) -> f64 {
        0.0
    }
}

pub const DEFAULT_DIM: usize = 64;

/// Signed feature hashing of character 1- to 3-grams of `<token>` plus the
/// whole token, L2-normalised. Deterministic across platforms and releases.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HashedNgramProvider {
    pub dim: usize,
}

impl Default for HashedNgramProvider {
    fn default() -> Self {
        Self { dim: DEFAULT_DIM }
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

impl SimilarityProvider for HashedNgramProvider {
    fn embed(&self, token: &str) -> Option<Vec<f64>> {
        if self.dim == 0 || token.is_empty() {
            return None;
        }
        let padded: Vec<char> = std::iter::once('<')
            .chain(token.chars())
            .chain(std::iter::once('>'))
            .collect();
        let mut v = vec![0.0; self.dim];
        let mut feature = |s: &str| {
            let h = fnv1a(s.as_bytes());
            let sign = if h >> 63 == 0 { 1.0 } else { -1.0 };
            v[(h % self.dim as u64) as usize] += sign;
        };
        for n in 1..=3 {
            for w in padded.windows(n) {
                feature(&w.iter().collect::<String>());
            }
        }
        feature(&format!("={token}"));
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            return None;
        }
        Some(v.into_iter().map(|x| x / norm).collect())
    }
}

/// Pretrained vectors from a whitespace-separated text file, one
/// `token v1 v2 ...` per line.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorTableProvider {
    vectors: HashMap<String, Vec<f64>>,
    baseline: f64,
}

impl VectorTableProvider {
    pub fn new(vectors: HashMap<String, Vec<f64>>, baseline: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&baseline) {
            return Err(MetricError::Config(format!("baseline {baseline} is outside [0, 1)")));
        }
        Ok(Self { vectors, baseline })
    }

    pub fn load(path: impl AsRef<Path>, baseline: f64) -> Result<Self> {
        let path = path.as_ref();
        let io = |source| MetricError::Io {
            path: path.to_path_buf(),
            source,
        };
        let file = std::fs::File::open(path).map_err(io)?;
        let mut vectors = HashMap::new();
        let mut dim = None;
        for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
            let line = line.map_err(io)?;
            let mut fields = line.split_whitespace();
            let Some(token) = fields.next() else { continue };
            let parse_err = |message: String| MetricError::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message,
            };
            let v: Vec<f64> = fields
                .map(|f| f.parse::<f64>().map_err(|e| parse_err(format!("{f:?}: {e}"))))
                .collect::<Result<_>>()?;
            if v.is_empty() || v.iter().any(|x| !x.is_finite()) {
                return Err(parse_err(format!("no finite vector for {token:?}")));
            }
            if *dim.get_or_insert(v.len()) != v.len() {
                return Err(parse_err(format!("expected {} components, got {}", dim.unwrap(), v.len())));
            }
            vectors.insert(token.to_string(), v);
        }
        Self::new(vectors, baseline)
    }
}

impl SimilarityProvider for VectorTableProvider {
    fn embed(&self, token: &str) -> Option<Vec<f64>> {
        self.vectors.get(token).cloned()
    }

    fn baseline(&self) -> f64 {
        self.baseline
    }
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        (dot / (na * nb)).clamp(-1.0, 1.0)
    }
}

/// Mean over `from` of the best similarity to any token of `to`, before
/// rescaling. 1 when `from` is empty, 0 when only `to` is.
pub fn greedy_match_mean(from: &[String], to: &[String], provider: &dyn SimilarityProvider) -> f64 {
    if from.is_empty() {
        return 1.0;
    }
    if to.is_empty() {
        return 0.0;
    }
    let to_vecs: Vec<Option<Vec<f64>>> = to.iter().map(|t| provider.embed(t)).collect();
    let total: f64 = from
        .iter()
        .map(|f| {
            let fv = provider.embed(f);
            to.iter()
                .zip(&to_vecs)
                .map(|(t, tv)| match (t == f, &fv, tv) {
                    (true, _, _) => 1.0,
                    (false, Some(a), Some(b)) => cosine(a, b),
                    _ => 0.0,
                })
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .sum();
    total / from.len() as f64
}

fn rescale(s: f64, baseline: f64) -> f64 {
    ((s - baseline) / (1.0 - baseline)).clamp(0.0, 1.0)
}

fn sim_tokens(text: &str, mode: LanguageMode) -> Vec<String> {
    let toks = tokenize(text, mode);
    match mode {
        LanguageMode::Word => toks.iter().map(|t| t.to_lowercase()).collect(),
        LanguageMode::Char => toks,
    }
}

/// `BS_R`: how well the prediction covers each reference token.
pub fn semantic_recall(
    pred: &str,
    reference: &str,
    mode: LanguageMode,
    provider: &dyn SimilarityProvider,
) -> f64 {
    let s = greedy_match_mean(&sim_tokens(reference, mode), &sim_tokens(pred, mode), provider);
    rescale(s, provider.baseline())
}

/// `BS_P`: how well the reference supports each prediction token.
pub fn semantic_precision(
    pred: &str,
    reference: &str,
    mode: LanguageMode,
    provider: &dyn SimilarityProvider,
) -> f64 {
    semantic_recall(reference, pred, mode, provider)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hashed_embeddings_are_unit_and_stable() {
        let p = HashedNgramProvider::default();
        let v = p.embed("translation").unwrap();
        assert_eq!(v.len(), DEFAULT_DIM);
        assert!((v.iter().map(|x| x * x).sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(v, p.embed("translation").unwrap());
        assert!(cosine(&v, &p.embed("translations").unwrap()) > cosine(&v, &p.embed("zebra").unwrap()));
    }

    #[test]
    fn fnv_reference_values() {
        assert_eq!(fnv1a(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a(b"a"), 0xaf63dc4c8601ec8c);
    }

    #[test]
    fn self_match_is_exactly_one() {
        let p = HashedNgramProvider::default();
        let s = "the quick brown fox";
        assert_eq!(semantic_recall(s, s, LanguageMode::Word, &p), 1.0);
        assert_eq!(semantic_precision(s, s, LanguageMode::Word, &p), 1.0);
    }

    #[test]
    fn table_provider_parses_and_rejects() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v.txt");
        std::fs::write(&path, "cat 1 0\ndog 0.8 0.6\n").unwrap();
        let p = VectorTableProvider::load(&path, 0.5).unwrap();
        let r = semantic_recall("dog", "cat", LanguageMode::Word, &p);
        assert!((r - (0.8 - 0.5) / 0.5).abs() < 1e-12);
        std::fs::write(&path, "cat 1 0\ndog 1\n").unwrap();
        let err = VectorTableProvider::load(&path, 0.0).unwrap_err();
        assert!(err.to_string().contains(":2:"), "{err}");
    }
}
