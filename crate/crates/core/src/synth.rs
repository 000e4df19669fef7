//! Deterministic synthetic skeleton-to-text corpus.
//!
//! Every content token owns a motion template on the dominant (right) hand:
//! the wrist travels out from a rest position toward a token-specific target
//! and back, while the fingers morph into a token-specific shape. A sample
//! with tokens `[a, b, c]` plays the templates in that order over equal-length
//! segments. Templates are symmetric in time, so reversing the frames of
//! `[a, b]` yields exactly the motion of `[b, a]`.

use std::f64::consts::PI;
use std::ops::RangeInclusive;

use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::{seeded, StreamRng};
use crate::skeleton::{Frame, Keypoint, LanguageMode, PartLayout, SkeletonSequence, NUM_KEYPOINTS};
use crate::vocab::{Vocabulary, NUM_SPECIAL};

/// Largest per-joint finger-shape offset of a token template.
const SHAPE_AMPLITUDE: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticConfig {
    pub seed: u64,
    pub vocab_size: usize,
    pub n_samples: usize,
    pub frame_range: RangeInclusive<usize>,
    pub tokens_per_sample: RangeInclusive<usize>,
    /// Frames per token template. `None` lets the segment length vary with
    /// the sampled frame count.
    pub segment_len: Option<usize>,
    /// Half-width of the uniform noise added to x/y.
    pub noise: f64,
}

impl SyntheticConfig {
    pub fn new(seed: u64, vocab_size: usize, n_samples: usize, frame_range: RangeInclusive<usize>) -> Self {
        Self {
            seed,
            vocab_size,
            n_samples,
            frame_range,
            tokens_per_sample: 2..=4,
            segment_len: Some(4),
            noise: 0.005,
        }
    }
}

/// Generates `n_samples` sequences; see [`SyntheticConfig`].
pub fn generate_synthetic_corpus(
    seed: u64,
    vocab_size: usize,
    n_samples: usize,
    frame_range: RangeInclusive<usize>,
) -> Result<Vec<SkeletonSequence>> {
    generate_with(&SyntheticConfig::new(seed, vocab_size, n_samples, frame_range))
}

pub fn generate_with(cfg: &SyntheticConfig) -> Result<Vec<SkeletonSequence>> {
    let vocab = Vocabulary::synthetic(cfg.vocab_size)?;
    if cfg.n_samples == 0 {
        return Ok(Vec::new());
    }
    if cfg.vocab_size == NUM_SPECIAL {
        return Err(Error::Config(
            "vocabulary has no content tokens beyond the reserved ones".into(),
        ));
    }
    let (t_lo, t_hi) = (*cfg.frame_range.start(), *cfg.frame_range.end());
    let (n_lo, n_hi) = (*cfg.tokens_per_sample.start(), *cfg.tokens_per_sample.end());
    if t_lo == 0 || t_lo > t_hi || n_lo == 0 || n_lo > n_hi {
        return Err(Error::Config(format!(
            "invalid ranges: frames {t_lo}..={t_hi}, tokens {n_lo}..={n_hi}"
        )));
    }
    if cfg.segment_len == Some(0) {
        return Err(Error::Config("segment_len must be positive".into()));
    }
    let lengths_for = |n: usize| -> Vec<usize> {
        (t_lo..=t_hi)
            .filter(|t| match cfg.segment_len {
                Some(s) => *t == n * s,
                None => t % n == 0,
            })
            .collect()
    };
    let feasible: Vec<usize> = (n_lo..=n_hi).filter(|&n| !lengths_for(n).is_empty()).collect();
    if feasible.is_empty() {
        return Err(Error::Config(format!(
            "no frame count in {t_lo}..={t_hi} fits a token count in {n_lo}..={n_hi} (segment length {:?})",
            cfg.segment_len
        )));
    }

    let content = vocab.content_ids();
    let mut rng = seeded(cfg.seed);
    let mut out = Vec::with_capacity(cfg.n_samples);
    for i in 0..cfg.n_samples {
        let n_tokens = feasible[rng.random_range(0..feasible.len())];
        let lengths = lengths_for(n_tokens);
        let frames = lengths[rng.random_range(0..lengths.len())];
        let tokens: Vec<u32> = (0..n_tokens)
            .map(|_| rng.random_range(content.clone()))
            .collect();
        let mut seq_frames = render_motion(&tokens, frames);
        add_noise(&mut seq_frames, cfg.noise, &mut rng);
        out.push(SkeletonSequence::new(
            format!("syn-{i:05}"),
            seq_frames,
            vocab.detokenize(&tokens),
            LanguageMode::Word,
        )?);
    }
    Ok(out)
}

fn unit_hash(a: u64, b: u64) -> f64 {
    let z = crate::rng::derive_seed(a, &[b]);
    (z >> 11) as f64 / (1u64 << 53) as f64
}

fn rest_pose() -> Frame {
    let layout = PartLayout::canonical();
    let mut frame = [Keypoint::ZERO; NUM_KEYPOINTS];
    for (k, j) in layout.left_hand.clone().enumerate() {
        let (dx, dy) = finger_offset(k);
        frame[j] = Keypoint::new(0.30 + dx, 0.80 + dy, 1.0);
    }
    for (k, j) in layout.right_hand.clone().enumerate() {
        let (dx, dy) = finger_offset(k);
        frame[j] = Keypoint::new(0.70 - dx, 0.80 + dy, 1.0);
    }
    for (k, j) in layout.face.clone().enumerate() {
        let a = 2.0 * PI * k as f64 / 18.0;
        frame[j] = Keypoint::new(0.5 + 0.06 * a.cos(), 0.2 + 0.08 * a.sin(), 1.0);
    }
    const BODY: [(f64, f64); 9] = [
        (0.50, 0.30),
        (0.50, 0.40),
        (0.35, 0.42),
        (0.65, 0.42),
        (0.30, 0.60),
        (0.70, 0.60),
        (0.30, 0.78),
        (0.70, 0.78),
        (0.50, 0.70),
    ];
    for (&(x, y), j) in BODY.iter().zip(layout.body.clone()) {
        frame[j] = Keypoint::new(x, y, 1.0);
    }
    frame
}

/// Offset of hand joint `k` from the wrist (joint 0): five fingers of four joints.
fn finger_offset(k: usize) -> (f64, f64) {
    if k == 0 {
        return (0.0, 0.0);
    }
    let finger = (k - 1) / 4;
    let joint = (k - 1) % 4 + 1;
    let angle = -PI / 2.0 + (finger as f64 - 2.0) * 0.3;
    let r = 0.012 * joint as f64;
    (r * angle.cos(), r * angle.sin())
}

/// Noise-free rendering of a token sequence over `frames` frames.
///
/// `frames` must be a positive multiple of `tokens.len()`.
pub fn render_motion(tokens: &[u32], frames: usize) -> Vec<Frame> {
    assert!(!tokens.is_empty() && frames % tokens.len() == 0 && frames > 0);
    let seg = frames / tokens.len();
    let rest = rest_pose();
    let rh = PartLayout::canonical().right_hand;
    let mut out = Vec::with_capacity(frames);
    for &tok in tokens {
        let k = tok as u64;
        let angle = 2.0 * PI * unit_hash(k, 0);
        let radius = 0.12 + 0.15 * unit_hash(k, 1);
        for i in 0..seg {
            // symmetric index keeps the profile bit-identical under reversal
            let m = i.min(seg - 1 - i);
            let s = (PI * (m as f64 + 0.5) / seg as f64).sin();
            let mut frame = rest;
            let (wx, wy) = (s * radius * angle.cos(), s * radius * angle.sin());
            for (n, j) in rh.clone().enumerate() {
                let sx = SHAPE_AMPLITUDE * (2.0 * unit_hash(k, 100 + 2 * n as u64) - 1.0);
                let sy = SHAPE_AMPLITUDE * (2.0 * unit_hash(k, 101 + 2 * n as u64) - 1.0);
                frame[j].x += wx + s * sx;
                frame[j].y += wy + s * sy;
            }
            out.push(frame);
        }
    }
    out
}

fn add_noise(frames: &mut [Frame], noise: f64, rng: &mut StreamRng) {
    if noise <= 0.0 {
        return;
    }
    for frame in frames {
        for kp in frame.iter_mut() {
            kp.x += rng.random_range(-noise..noise);
            kp.y += rng.random_range(-noise..noise);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::skeleton::frames_bit_equal;

    #[test]
    fn deterministic_under_seed() {
        let a = generate_synthetic_corpus(7, 50, 3, 8..=16).unwrap();
        let b = generate_synthetic_corpus(7, 50, 3, 8..=16).unwrap();
        assert_eq!(a.len(), 3);
        assert!(a.iter().zip(&b).all(|(x, y)| x.frames_bit_equal(y) && x.reference_text == y.reference_text));
        let c = generate_synthetic_corpus(8, 50, 3, 8..=16).unwrap();
        assert!(!a[0].frames_bit_equal(&c[0]));
    }

    #[test]
    fn empty_and_invalid_configs() {
        assert!(generate_synthetic_corpus(1, 50, 0, 8..=16).unwrap().is_empty());
        assert!(matches!(
            generate_synthetic_corpus(1, 3, 5, 8..=16),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn reversal_swaps_template_order() {
        for (a, b) in [(4u32, 9u32), (17, 33), (40, 5)] {
            for frames in [8, 12, 16] {
                let mut ab = render_motion(&[a, b], frames);
                ab.reverse();
                let ba = render_motion(&[b, a], frames);
                assert!(ab.iter().zip(&ba).all(|(x, y)| frames_bit_equal(x, y)));
            }
        }
    }

    #[test]
    fn different_orders_render_differently() {
        let ab = render_motion(&[4, 9], 8);
        let ba = render_motion(&[9, 4], 8);
        assert!(!ab.iter().zip(&ba).all(|(x, y)| frames_bit_equal(x, y)));
    }

    #[test]
    fn samples_respect_ranges() {
        let corpus = generate_synthetic_corpus(3, 50, 200, 8..=16).unwrap();
        let vocab = Vocabulary::synthetic(50).unwrap();
        for s in &corpus {
            assert!((8..=16).contains(&s.len()));
            let n = vocab.tokenize(&s.reference_text).len();
            assert!((2..=4).contains(&n));
            assert_eq!(s.len(), 4 * n);
        }
        let free = SyntheticConfig {
            segment_len: None,
            ..SyntheticConfig::new(3, 50, 200, 8..=16)
        };
        let corpus = generate_with(&free).unwrap();
        assert!(corpus.iter().all(|s| s.len() % vocab.tokenize(&s.reference_text).len() == 0));
        assert!(corpus.iter().any(|s| s.len() % 4 != 0));
        let cramped = SyntheticConfig::new(3, 50, 5, 3..=5);
        assert!(matches!(generate_with(&cramped), Err(Error::Config(_))));
    }
}
