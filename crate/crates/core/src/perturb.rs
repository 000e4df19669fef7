//! Spatial and temporal corruption of skeleton sequences, at global scope or
//! inside an attention-selected key window.

use rand::Rng;

use crate::error::{Error, Result};
use crate::saliency::{aggregate_attention, key_frame, make_window, AttentionStack, KeyWindow};
use crate::skeleton::{BodyPart, Frame, Keypoint, SkeletonSequence};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SpatialStrategy {
    /// Frames taken from another sample of the mini-batch.
    Randomness,
    /// Every keypoint zeroed.
    Blackness,
    /// A sparse, pairwise non-adjacent subset of frames zeroed.
    SparseMask,
    /// The dominant hand zeroed.
    RoiMask,
}

impl SpatialStrategy {
    pub const ALL: [SpatialStrategy; 4] = [
        SpatialStrategy::Randomness,
        SpatialStrategy::Blackness,
        SpatialStrategy::SparseMask,
        SpatialStrategy::RoiMask,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            SpatialStrategy::Randomness => "randomness",
            SpatialStrategy::Blackness => "blackness",
            SpatialStrategy::SparseMask => "sparse-mask",
            SpatialStrategy::RoiMask => "roi-mask",
        }
    }
}

impl std::str::FromStr for SpatialStrategy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown spatial strategy {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TemporalStrategy {
    Reverse,
    Shuffle,
}

impl TemporalStrategy {
    pub const ALL: [TemporalStrategy; 2] = [TemporalStrategy::Reverse, TemporalStrategy::Shuffle];

    pub fn name(&self) -> &'static str {
        match self {
            TemporalStrategy::Reverse => "reverse",
            TemporalStrategy::Shuffle => "shuffle",
        }
    }
}

impl std::str::FromStr for TemporalStrategy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown temporal strategy {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Scope {
    Global,
    Local(KeyWindow),
}

impl Scope {
    /// Inclusive frame range covered by the scope for a sequence of `frames`.
    fn bounds(&self, frames: usize) -> Result<(usize, usize)> {
        match self {
            Scope::Global => Ok((0, frames - 1)),
            Scope::Local(w) => {
                w.validate(frames)?;
                Ok((w.start, w.end))
            }
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Scope::Global => "global",
            Scope::Local(_) => "local",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PerturbConfig {
    /// Share of in-scope frames zeroed by [`SpatialStrategy::SparseMask`].
    pub sparse_mask_fraction: f64,
    /// Probability that the right hand is the dominant hand.
    pub right_hand_prob: f64,
    /// Key-window ratio `w`.
    pub window_ratio: f64,
    /// Spatial strategies that, when drawn, yield the unperturbed sample.
    pub excluded_spatial: Vec<SpatialStrategy>,
    /// Temporal strategies that, when drawn, yield the unperturbed sample.
    pub excluded_temporal: Vec<TemporalStrategy>,
}

impl Default for PerturbConfig {
    fn default() -> Self {
        Self {
            sparse_mask_fraction: 0.3,
            right_hand_prob: 0.75,
            window_ratio: 0.25,
            excluded_spatial: Vec::new(),
            excluded_temporal: Vec::new(),
        }
    }
}

impl PerturbConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sparse_mask_fraction > 0.0 && self.sparse_mask_fraction <= 0.5) {
            return Err(Error::Config(format!(
                "sparse_mask_fraction must lie in (0, 0.5], got {}",
                self.sparse_mask_fraction
            )));
        }
        if !(0.0..=1.0).contains(&self.right_hand_prob) {
            return Err(Error::Config(format!(
                "right_hand_prob must lie in [0, 1], got {}",
                self.right_hand_prob
            )));
        }
        if !(self.window_ratio > 0.0 && self.window_ratio < 1.0) {
            return Err(Error::Config(format!(
                "window_ratio must lie in (0, 1), got {}",
                self.window_ratio
            )));
        }
        Ok(())
    }
}

pub fn sample_spatial_strategy<R: Rng + ?Sized>(rng: &mut R) -> SpatialStrategy {
    SpatialStrategy::ALL[rng.random_range(0..SpatialStrategy::ALL.len())]
}

pub fn sample_temporal_strategy<R: Rng + ?Sized>(rng: &mut R) -> TemporalStrategy {
    TemporalStrategy::ALL[rng.random_range(0..TemporalStrategy::ALL.len())]
}

/// Right hand with probability `right_hand_prob`, else left.
pub fn sample_dominant_hand<R: Rng + ?Sized>(rng: &mut R, right_hand_prob: f64) -> BodyPart {
    if rng.random_bool(right_hand_prob) {
        BodyPart::RightHand
    } else {
        BodyPart::LeftHand
    }
}

/// Uniformly random set of `k` pairwise non-adjacent positions in `0..n`,
/// returned sorted. Requires `2k <= n + 1`.
pub fn sample_non_adjacent<R: Rng + ?Sized>(rng: &mut R, n: usize, k: usize) -> Vec<usize> {
    assert!(2 * k <= n + 1, "cannot place {k} non-adjacent frames in {n}");
    // k-subsets of 0..n-k+1 map bijectively onto non-adjacent k-subsets of 0..n
    let mut picked = rand::seq::index::sample(rng, n + 1 - k, k).into_vec();
    picked.sort_unstable();
    picked.iter().enumerate().map(|(i, &c)| c + i).collect()
}

fn nearest_index(t: usize, len: usize, donor_len: usize) -> usize {
    if len == donor_len {
        return t;
    }
    let idx = ((t as f64 + 0.5) * donor_len as f64 / len as f64).floor() as usize;
    idx.min(donor_len - 1)
}

fn zero_part(frame: &mut Frame, range: std::ops::Range<usize>) {
    for kp in &mut frame[range] {
        *kp = Keypoint::ZERO;
    }
}

/// Applies a spatial strategy to the frames in `scope`; frames outside the
/// scope are copied bit-for-bit.
pub fn perturb_spatial<R: Rng + ?Sized>(
    seq: &SkeletonSequence,
    strategy: SpatialStrategy,
    scope: Scope,
    donors: &[SkeletonSequence],
    rng: &mut R,
    cfg: &PerturbConfig,
) -> Result<SkeletonSequence> {
    cfg.validate()?;
    let (start, end) = scope.bounds(seq.len())?;
    let mut frames = seq.frames.clone();
    match strategy {
        SpatialStrategy::Randomness => {
            let eligible: Vec<&SkeletonSequence> =
                donors.iter().filter(|d| d.id != seq.id).collect();
            if eligible.is_empty() {
                return Err(Error::Config(
                    "randomness perturbation needs at least one donor other than the sample".into(),
                ));
            }
            let donor = eligible[rng.random_range(0..eligible.len())];
            for (t, frame) in frames.iter_mut().enumerate().take(end + 1).skip(start) {
                *frame = donor.frames[nearest_index(t, seq.len(), donor.len())];
            }
        }
        SpatialStrategy::Blackness => {
            for frame in &mut frames[start..=end] {
                *frame = [Keypoint::ZERO; crate::skeleton::NUM_KEYPOINTS];
            }
        }
        SpatialStrategy::SparseMask => {
            let n = end - start + 1;
            let k = (cfg.sparse_mask_fraction * n as f64).floor() as usize;
            for i in sample_non_adjacent(rng, n, k) {
                frames[start + i] = [Keypoint::ZERO; crate::skeleton::NUM_KEYPOINTS];
            }
        }
        SpatialStrategy::RoiMask => {
            let hand = sample_dominant_hand(rng, cfg.right_hand_prob);
            let range = seq.layout.range(hand);
            for frame in &mut frames[start..=end] {
                zero_part(frame, range.clone());
            }
        }
    }
    Ok(seq.with_frames(frames))
}

/// Result of a temporal perturbation.
#[derive(Debug, Clone, PartialEq)]
pub struct TemporalOutcome {
    pub sequence: SkeletonSequence,
    /// Set when the scope had a single frame and shuffling could not change it.
    pub degenerate: bool,
}

/// Reverses or shuffles the frames in `scope`. Shuffle never returns the
/// identity permutation for scopes of two or more frames.
pub fn perturb_temporal<R: Rng + ?Sized>(
    seq: &SkeletonSequence,
    strategy: TemporalStrategy,
    scope: Scope,
    rng: &mut R,
) -> Result<TemporalOutcome> {
    let (start, end) = scope.bounds(seq.len())?;
    let mut frames = seq.frames.clone();
    let span = &mut frames[start..=end];
    let mut degenerate = false;
    match strategy {
        TemporalStrategy::Reverse => span.reverse(),
        TemporalStrategy::Shuffle => {
            let n = span.len();
            if n < 2 {
                degenerate = true;
            } else {
                let perm = non_identity_permutation(rng, n);
                let original = span.to_vec();
                for (slot, &from) in span.iter_mut().zip(&perm) {
                    *slot = original[from];
                }
            }
        }
    }
    Ok(TemporalOutcome {
        sequence: seq.with_frames(frames),
        degenerate,
    })
}

/// Uniform permutation of `0..n` conditioned on not being the identity.
pub fn non_identity_permutation<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<usize> {
    assert!(n >= 2);
    loop {
        let mut perm: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            perm.swap(i, rng.random_range(0..=i));
        }
        if perm.iter().enumerate().any(|(i, &p)| i != p) {
            return perm;
        }
    }
}

/// Which perturbation produced a negative; `None` means the drawn strategy
/// was excluded and the clean sample was reused.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Applied<S> {
    pub drawn: S,
    pub applied: bool,
}

/// A clean sample with its four input-level negatives.
#[derive(Debug, Clone, PartialEq)]
pub struct PreferenceBatch {
    pub anchor: SkeletonSequence,
    pub spatial_global: SkeletonSequence,
    pub spatial_local: SkeletonSequence,
    pub temporal_global: SkeletonSequence,
    pub temporal_local: SkeletonSequence,
    pub window: KeyWindow,
    pub spatial_strategies: [Applied<SpatialStrategy>; 2],
    pub temporal_strategies: [Applied<TemporalStrategy>; 2],
}

/// Builds the spatial (global + local) and temporal (global + local)
/// negatives of `seq`. The local window is centred on the frame receiving
/// the most cross-attention in the clean forward pass. Global and local
/// strategies are drawn independently.
pub fn build_preference_batch<R: Rng + ?Sized>(
    seq: &SkeletonSequence,
    attention: &AttentionStack,
    donors: &[SkeletonSequence],
    rng: &mut R,
    cfg: &PerturbConfig,
) -> Result<PreferenceBatch> {
    cfg.validate()?;
    if attention.frame_len() != seq.len() {
        return Err(Error::Input(format!(
            "attention covers {} frames but the sequence has {}",
            attention.frame_len(),
            seq.len()
        )));
    }
    let scores = aggregate_attention(attention)?;
    let window = make_window(key_frame(&scores), seq.len(), cfg.window_ratio)?;

    let spatial = |scope: Scope, rng: &mut R| -> Result<(SkeletonSequence, Applied<SpatialStrategy>)> {
        let drawn = sample_spatial_strategy(rng);
        if cfg.excluded_spatial.contains(&drawn) {
            return Ok((seq.clone(), Applied { drawn, applied: false }));
        }
        let out = perturb_spatial(seq, drawn, scope, donors, rng, cfg)?;
        Ok((out, Applied { drawn, applied: true }))
    };
    let (spatial_global, sg) = spatial(Scope::Global, rng)?;
    let (spatial_local, sl) = spatial(Scope::Local(window), rng)?;

    let temporal = |scope: Scope, rng: &mut R| -> Result<(SkeletonSequence, Applied<TemporalStrategy>)> {
        let drawn = sample_temporal_strategy(rng);
        if cfg.excluded_temporal.contains(&drawn) {
            return Ok((seq.clone(), Applied { drawn, applied: false }));
        }
        let out = perturb_temporal(seq, drawn, scope, rng)?;
        Ok((out.sequence, Applied { drawn, applied: true }))
    };
    let (temporal_global, tg) = temporal(Scope::Global, rng)?;
    let (temporal_local, tl) = temporal(Scope::Local(window), rng)?;

    Ok(PreferenceBatch {
        anchor: seq.clone(),
        spatial_global,
        spatial_local,
        temporal_global,
        temporal_local,
        window,
        spatial_strategies: [sg, sl],
        temporal_strategies: [tg, tl],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use crate::skeleton::{frames_bit_equal, LanguageMode, NUM_KEYPOINTS};
    use crate::synth::generate_synthetic_corpus;

    /// Frames whose every keypoint is nonzero and tagged with the frame index.
    fn tagged(id: &str, frames: usize) -> SkeletonSequence {
        let frames = (0..frames)
            .map(|t| {
                std::array::from_fn(|j| Keypoint::new(t as f64 + 1.0, j as f64 + 1.0, 0.5))
            })
            .collect();
        SkeletonSequence::new(id, frames, "a b", LanguageMode::Word).unwrap()
    }

    fn frame_tags(seq: &SkeletonSequence) -> Vec<usize> {
        seq.frames.iter().map(|f| f[0].x as usize - 1).collect()
    }

    fn is_zero_frame(f: &Frame) -> bool {
        f.iter().all(Keypoint::is_zero)
    }

    #[test]
    fn blackness_global_zeroes_everything() {
        let seq = tagged("a", 6);
        let out = perturb_spatial(&seq, SpatialStrategy::Blackness, Scope::Global, &[], &mut seeded(0), &PerturbConfig::default()).unwrap();
        assert!(out.frames.iter().all(is_zero_frame));
        assert_eq!(out.len(), 6);
    }

    #[test]
    fn roi_mask_forced_right_hand() {
        let seq = tagged("a", 5);
        let cfg = PerturbConfig {
            right_hand_prob: 1.0,
            ..Default::default()
        };
        let out = perturb_spatial(&seq, SpatialStrategy::RoiMask, Scope::Global, &[], &mut seeded(3), &cfg).unwrap();
        for (a, b) in seq.frames.iter().zip(&out.frames) {
            for j in 0..NUM_KEYPOINTS {
                if (21..42).contains(&j) {
                    assert!(b[j].is_zero());
                } else {
                    assert_eq!(a[j], b[j]);
                }
            }
        }
    }

    #[test]
    fn sparse_mask_count_and_spacing() {
        let seq = tagged("a", 10);
        let cfg = PerturbConfig::default();
        for s in 0..1000 {
            let out = perturb_spatial(&seq, SpatialStrategy::SparseMask, Scope::Global, &[], &mut seeded(s), &cfg).unwrap();
            let masked: Vec<usize> = (0..10).filter(|&t| is_zero_frame(&out.frames[t])).collect();
            assert_eq!(masked.len(), 3);
            assert!(masked.windows(2).all(|w| w[1] - w[0] >= 2), "{masked:?}");
            for t in (0..10).filter(|t| !masked.contains(t)) {
                assert!(frames_bit_equal(&seq.frames[t], &out.frames[t]));
            }
        }
    }

    #[test]
    fn non_adjacent_sampler_is_roughly_uniform() {
        // n=5, k=2 has 6 valid subsets
        let mut counts = std::collections::HashMap::new();
        let mut rng = seeded(9);
        for _ in 0..60_000 {
            *counts.entry(sample_non_adjacent(&mut rng, 5, 2)).or_insert(0usize) += 1;
        }
        assert_eq!(counts.len(), 6);
        for c in counts.values() {
            assert!((*c as f64 / 60_000.0 - 1.0 / 6.0).abs() < 0.01);
        }
    }

    #[test]
    fn randomness_uses_other_sample() {
        let seq = tagged("a", 8);
        let donor = tagged("b", 4);
        let out = perturb_spatial(&seq, SpatialStrategy::Randomness, Scope::Global, &[seq.clone(), donor.clone()], &mut seeded(1), &PerturbConfig::default()).unwrap();
        // nearest-index resampling of a 4-frame donor onto 8 frames
        assert_eq!(frame_tags(&out), vec![0, 0, 1, 1, 2, 2, 3, 3]);
        let err = perturb_spatial(&seq, SpatialStrategy::Randomness, Scope::Global, &[seq.clone()], &mut seeded(1), &PerturbConfig::default());
        assert!(matches!(err, Err(Error::Config(_))));
    }

    #[test]
    fn local_randomness_copies_same_positions() {
        let seq = tagged("a", 6);
        let donor = tagged("b", 6).with_frames(tagged("b", 6).frames.iter().map(|f| {
            let mut g = *f;
            g[0].confidence = 0.25;
            g
        }).collect());
        let window = make_window(3, 6, 0.4).unwrap();
        let out = perturb_spatial(&seq, SpatialStrategy::Randomness, Scope::Local(window), &[donor.clone()], &mut seeded(1), &PerturbConfig::default()).unwrap();
        for t in 0..6 {
            let expect = if window.contains(t) { &donor.frames[t] } else { &seq.frames[t] };
            assert!(frames_bit_equal(expect, &out.frames[t]));
        }
    }

    #[test]
    fn reverse_cases() {
        let seq = tagged("a", 3);
        let out = perturb_temporal(&seq, TemporalStrategy::Reverse, Scope::Global, &mut seeded(0)).unwrap();
        assert_eq!(frame_tags(&out.sequence), vec![2, 1, 0]);
        let seq = tagged("a", 4);
        let w = KeyWindow { start: 1, end: 2, ratio: 0.5 };
        let out = perturb_temporal(&seq, TemporalStrategy::Reverse, Scope::Local(w), &mut seeded(0)).unwrap();
        assert_eq!(frame_tags(&out.sequence), vec![0, 2, 1, 3]);
    }

    #[test]
    fn shuffle_is_never_identity() {
        let seq = tagged("a", 5);
        for s in 0..1000 {
            let out = perturb_temporal(&seq, TemporalStrategy::Shuffle, Scope::Global, &mut seeded(s)).unwrap();
            let tags = frame_tags(&out.sequence);
            assert_ne!(tags, vec![0, 1, 2, 3, 4]);
            let mut sorted = tags.clone();
            sorted.sort();
            assert_eq!(sorted, vec![0, 1, 2, 3, 4]);
        }
    }

    #[test]
    fn shuffle_single_frame_scope_is_flagged() {
        let seq = tagged("a", 1);
        let out = perturb_temporal(&seq, TemporalStrategy::Shuffle, Scope::Global, &mut seeded(0)).unwrap();
        assert!(out.degenerate);
        assert!(out.sequence.frames_bit_equal(&seq));
    }

    #[test]
    fn frequencies_are_uniform() {
        let mut rng = seeded(42);
        let n = 100_000;
        let mut spatial = [0usize; 4];
        let mut temporal = [0usize; 2];
        for _ in 0..n {
            spatial[sample_spatial_strategy(&mut rng) as usize] += 1;
            temporal[sample_temporal_strategy(&mut rng) as usize] += 1;
        }
        for c in spatial {
            assert!((c as f64 / n as f64 - 0.25).abs() < 0.01);
        }
        for c in temporal {
            assert!((c as f64 / n as f64 - 0.5).abs() < 0.01);
        }
        let a: Vec<_> = (0..20).map(|_| sample_spatial_strategy(&mut seeded(4))).collect();
        let b: Vec<_> = (0..20).map(|_| sample_spatial_strategy(&mut seeded(4))).collect();
        assert_eq!(a, b);
    }

    fn one_hot(frames: usize, hot: usize) -> AttentionStack {
        let (p, src) = (2, 2 + frames);
        let mut data = vec![0.0; 2 * 2 * 3 * src];
        for r in 0..12 {
            data[r * src + p + hot] = 1.0;
        }
        AttentionStack::unmasked(2, 2, 3, p, frames, data).unwrap()
    }

    #[test]
    fn batch_local_negatives_stay_in_window() {
        let corpus = generate_synthetic_corpus(1, 30, 4, 5..=5).unwrap_or_default();
        let seq = tagged("x", 5);
        let donors: Vec<_> = corpus.into_iter().chain([tagged("y", 5)]).collect();
        let cfg = PerturbConfig {
            window_ratio: 0.4,
            ..Default::default()
        };
        for s in 0..200 {
            let batch = build_preference_batch(&seq, &one_hot(5, 2), &donors, &mut seeded(s), &cfg).unwrap();
            assert_eq!((batch.window.start, batch.window.end), (1, 3));
            for neg in [&batch.spatial_local, &batch.temporal_local] {
                assert_eq!(neg.len(), 5);
                for t in [0, 4] {
                    assert!(frames_bit_equal(&seq.frames[t], &neg.frames[t]));
                }
            }
            for neg in [&batch.spatial_global, &batch.temporal_global] {
                assert_eq!(neg.len(), 5);
            }
        }
    }

    #[test]
    fn batch_is_deterministic() {
        let seq = tagged("x", 9);
        let donors = vec![tagged("y", 7), tagged("z", 12)];
        let cfg = PerturbConfig::default();
        let a = build_preference_batch(&seq, &one_hot(9, 4), &donors, &mut seeded(77), &cfg).unwrap();
        let b = build_preference_batch(&seq, &one_hot(9, 4), &donors, &mut seeded(77), &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn excluded_strategy_reuses_clean_sample() {
        let seq = tagged("x", 9);
        let cfg = PerturbConfig {
            excluded_temporal: vec![TemporalStrategy::Reverse, TemporalStrategy::Shuffle],
            ..Default::default()
        };
        let b = build_preference_batch(&seq, &one_hot(9, 4), &[tagged("y", 9)], &mut seeded(1), &cfg).unwrap();
        assert!(b.temporal_global.frames_bit_equal(&seq));
        assert!(b.temporal_strategies.iter().all(|a| !a.applied));
    }
}
