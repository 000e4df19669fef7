//! Per-frame importance from decoder cross-attention, and the key-frame
//! window used for local perturbations.

use std::io::Write;

use crate::error::{Error, Result};

/// Cross-attention probabilities of every decoder layer and head, for one
/// sample. Source positions are `prefix_len` prompt slots followed by
/// `frame_len` frames.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionStack {
    layers: usize,
    heads: usize,
    target_len: usize,
    prefix_len: usize,
    frame_len: usize,
    /// Row-major `layers × heads × target_len × (prefix_len + frame_len)`.
    data: Vec<f64>,
    target_mask: Vec<bool>,
}

impl AttentionStack {
    /// Checks shapes and that every entry is finite and non-negative. Row
    /// normalization is checked separately by [`AttentionStack::check_rows_normalized`].
    pub fn new(
        layers: usize,
        heads: usize,
        target_len: usize,
        prefix_len: usize,
        frame_len: usize,
        data: Vec<f64>,
        target_mask: Vec<bool>,
    ) -> Result<Self> {
        let src = prefix_len + frame_len;
        if layers == 0 || heads == 0 || target_len == 0 || frame_len == 0 {
            return Err(Error::Validation(format!(
                "attention stack dims must be positive (L={layers}, H={heads}, T_tgt={target_len}, T={frame_len})"
            )));
        }
        if data.len() != layers * heads * target_len * src {
            return Err(Error::Validation(format!(
                "attention data has {} entries, expected {}",
                data.len(),
                layers * heads * target_len * src
            )));
        }
        if target_mask.len() != target_len {
            return Err(Error::Validation(format!(
                "target mask has length {}, expected {target_len}",
                target_mask.len()
            )));
        }
        if let Some(bad) = data.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::Validation(format!(
                "attention entries must be finite and non-negative, found {bad}"
            )));
        }
        Ok(Self {
            layers,
            heads,
            target_len,
            prefix_len,
            frame_len,
            data,
            target_mask,
        })
    }

    /// Stack with every target step unmasked.
    pub fn unmasked(
        layers: usize,
        heads: usize,
        target_len: usize,
        prefix_len: usize,
        frame_len: usize,
        data: Vec<f64>,
    ) -> Result<Self> {
        Self::new(
            layers,
            heads,
            target_len,
            prefix_len,
            frame_len,
            data,
            vec![true; target_len],
        )
    }

    pub fn layers(&self) -> usize {
        self.layers
    }
    pub fn heads(&self) -> usize {
        self.heads
    }
    pub fn target_len(&self) -> usize {
        self.target_len
    }
    pub fn prefix_len(&self) -> usize {
        self.prefix_len
    }
    pub fn frame_len(&self) -> usize {
        self.frame_len
    }
    pub fn source_len(&self) -> usize {
        self.prefix_len + self.frame_len
    }
    pub fn target_mask(&self) -> &[bool] {
        &self.target_mask
    }
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, layer: usize, head: usize, step: usize, src: usize) -> f64 {
        self.data[self.row_offset(layer, head, step) + src]
    }

    fn row_offset(&self, layer: usize, head: usize, step: usize) -> usize {
        ((layer * self.heads + head) * self.target_len + step) * self.source_len()
    }

    pub fn row(&self, layer: usize, head: usize, step: usize) -> &[f64] {
        let off = self.row_offset(layer, head, step);
        &self.data[off..off + self.source_len()]
    }

    /// Every unmasked row sums to one within `tol`.
    pub fn check_rows_normalized(&self, tol: f64) -> Result<()> {
        for l in 0..self.layers {
            for h in 0..self.heads {
                for j in (0..self.target_len).filter(|&j| self.target_mask[j]) {
                    let sum: f64 = self.row(l, h, j).iter().sum();
                    if (sum - 1.0).abs() > tol {
                        return Err(Error::Validation(format!(
                            "attention row (layer {l}, head {h}, step {j}) sums to {sum}"
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Non-negative importance score per frame.
#[derive(Debug, Clone, PartialEq)]
pub struct SaliencyScores(pub Vec<f64>);

impl SaliencyScores {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// `frame,score` CSV with a header line.
    pub fn write_csv(&self, mut out: impl Write) -> std::io::Result<()> {
        writeln!(out, "frame,score")?;
        for (t, s) in self.0.iter().enumerate() {
            writeln!(out, "{t},{s}")?;
        }
        Ok(())
    }
}

/// Mean attention over layers, heads and unmasked decoding steps, restricted
/// to the frame positions (the prefix slots are dropped).
pub fn aggregate_attention(stack: &AttentionStack) -> Result<SaliencyScores> {
    let steps = stack.target_mask.iter().filter(|m| **m).count();
    if steps == 0 {
        return Err(Error::Degenerate(
            "every decoding step of the attention stack is masked".into(),
        ));
    }
    let mut acc = vec![0.0; stack.frame_len];
    for l in 0..stack.layers {
        for h in 0..stack.heads {
            for j in (0..stack.target_len).filter(|&j| stack.target_mask[j]) {
                let row = &stack.row(l, h, j)[stack.prefix_len..];
                for (a, v) in acc.iter_mut().zip(row) {
                    *a += v;
                }
            }
        }
    }
    let denom = (stack.layers * stack.heads * steps) as f64;
    Ok(SaliencyScores(acc.into_iter().map(|a| a / denom).collect()))
}

/// Index of the largest score; ties go to the smallest index.
pub fn key_frame(scores: &SaliencyScores) -> usize {
    let mut best = 0;
    for (t, &s) in scores.0.iter().enumerate().skip(1) {
        if s > scores.0[best] {
            best = t;
        }
    }
    best
}

/// Inclusive frame window `[start, end]` around a key frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KeyWindow {
    pub start: usize,
    pub end: usize,
    pub ratio: f64,
}

impl KeyWindow {
    pub fn len(&self) -> usize {
        self.end - self.start + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, t: usize) -> bool {
        (self.start..=self.end).contains(&t)
    }

    /// Checks the window against a sequence of `frames` frames.
    pub fn validate(&self, frames: usize) -> Result<()> {
        let half = half_width(self.ratio, frames);
        if self.start > self.end || self.end >= frames || self.len() > 2 * half + 1 {
            return Err(Error::Validation(format!(
                "window [{}, {}] invalid for {frames} frames at ratio {}",
                self.start, self.end, self.ratio
            )));
        }
        Ok(())
    }
}

fn half_width(ratio: f64, frames: usize) -> usize {
    (ratio * frames as f64 / 2.0).floor() as usize
}

/// Symmetric window of half-width `floor(w·T/2)` around `key`, clamped to
/// `[0, T-1]`.
pub fn make_window(key: usize, frames: usize, ratio: f64) -> Result<KeyWindow> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::Config(format!(
            "window ratio must lie in (0, 1), got {ratio}"
        )));
    }
    if frames == 0 || key >= frames {
        return Err(Error::Input(format!(
            "key frame {key} outside a sequence of {frames} frames"
        )));
    }
    let half = half_width(ratio, frames);
    Ok(KeyWindow {
        start: key.saturating_sub(half),
        end: (key + half).min(frames - 1),
        ratio,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use proptest::prelude::*;
    use rand::Rng;

    fn one_hot_stack(frames: usize, prefix: usize, hot: usize) -> AttentionStack {
        let src = prefix + frames;
        let (l, h, tgt) = (2, 2, 3);
        let mut data = vec![0.0; l * h * tgt * src];
        for r in 0..l * h * tgt {
            data[r * src + prefix + hot] = 1.0;
        }
        AttentionStack::unmasked(l, h, tgt, prefix, frames, data).unwrap()
    }

    #[test]
    fn uniform_attention() {
        let (p, t) = (2, 4);
        let data = vec![1.0 / 6.0; 2 * 3 * 5 * (p + t)];
        let stack = AttentionStack::unmasked(2, 3, 5, p, t, data).unwrap();
        stack.check_rows_normalized(1e-5).unwrap();
        let s = aggregate_attention(&stack).unwrap();
        for v in s.as_slice() {
            assert!((v - 1.0 / 6.0).abs() < 1e-15);
        }
    }

    #[test]
    fn one_hot_attention() {
        let s = aggregate_attention(&one_hot_stack(4, 2, 2)).unwrap();
        assert_eq!(s.0, vec![0.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn masked_steps_are_excluded() {
        let (p, t) = (1, 3);
        let src = p + t;
        let mut data = vec![0.0; 2 * src];
        data[p] = 1.0; // step 0 -> frame 0
        data[src + p + 2] = 1.0; // step 1 (padding) -> frame 2
        let stack = AttentionStack::new(1, 1, 2, p, t, data.clone(), vec![true, false]).unwrap();
        assert_eq!(aggregate_attention(&stack).unwrap().0, vec![1.0, 0.0, 0.0]);
        let all_masked = AttentionStack::new(1, 1, 2, p, t, data, vec![false, false]).unwrap();
        assert!(matches!(
            aggregate_attention(&all_masked),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(AttentionStack::unmasked(1, 1, 1, 1, 2, vec![0.5; 2]).is_err());
        assert!(AttentionStack::unmasked(1, 1, 1, 1, 1, vec![-0.1, 1.1]).is_err());
    }

    #[test]
    fn key_frame_cases() {
        assert_eq!(key_frame(&SaliencyScores(vec![0.1, 0.7, 0.2])), 1);
        assert_eq!(key_frame(&SaliencyScores(vec![0.5, 0.5])), 0);
        let mut rng = seeded(5);
        for _ in 0..1000 {
            let n = rng.random_range(1..20);
            // coarse values make ties common
            let v: Vec<f64> = (0..n).map(|_| rng.random_range(0..5) as f64).collect();
            let max = v.iter().cloned().fold(f64::MIN, f64::max);
            let oracle = v.iter().position(|x| *x == max).unwrap();
            assert_eq!(key_frame(&SaliencyScores(v)), oracle);
        }
    }

    #[test]
    fn window_cases() {
        let w = make_window(0, 10, 0.4).unwrap();
        assert_eq!((w.start, w.end), (0, 2));
        let w = make_window(9, 10, 0.4).unwrap();
        assert_eq!((w.start, w.end), (7, 9));
        for ratio in [0.01, 0.5, 0.99] {
            let w = make_window(0, 1, ratio).unwrap();
            assert_eq!((w.start, w.end), (0, 0));
        }
        assert!(matches!(make_window(0, 10, 1.0), Err(Error::Config(_))));
        assert!(matches!(make_window(0, 10, 0.0), Err(Error::Config(_))));
    }

    proptest! {
        #[test]
        fn window_contains_key(frames in 1usize..64, ratio in 0.01f64..0.99, key_frac in 0.0f64..1.0) {
            let key = ((frames as f64 * key_frac) as usize).min(frames - 1);
            let w = make_window(key, frames, ratio).unwrap();
            prop_assert!(w.contains(key));
            prop_assert!(w.validate(frames).is_ok());
            prop_assert!(w.len() <= (ratio * frames as f64).floor() as usize + 1);
        }

        #[test]
        fn scaling_preserves_key_frame(seed in any::<u64>(), c in 0.01f64..100.0) {
            let mut rng = seeded(seed);
            let (l, h, tgt, p, t) = (2, 2, 3, 1, 5);
            let data: Vec<f64> = (0..l * h * tgt * (p + t)).map(|_| rng.random::<f64>()).collect();
            let base = AttentionStack::unmasked(l, h, tgt, p, t, data.clone()).unwrap();
            let scaled = AttentionStack::unmasked(l, h, tgt, p, t, data.iter().map(|v| v * c).collect()).unwrap();
            let a = aggregate_attention(&base).unwrap();
            let b = aggregate_attention(&scaled).unwrap();
            for (x, y) in a.0.iter().zip(&b.0) {
                prop_assert!((x * c - y).abs() <= 1e-12 * y.abs().max(1.0));
            }
            prop_assert_eq!(key_frame(&a), key_frame(&b));
        }

        #[test]
        fn permuting_frames_permutes_scores(seed in any::<u64>()) {
            let mut rng = seeded(seed);
            let (l, h, tgt, p, t) = (2, 3, 2, 2, 6);
            let src = p + t;
            let data: Vec<f64> = (0..l * h * tgt * src).map(|_| rng.random::<f64>()).collect();
            let mut perm: Vec<usize> = (0..t).collect();
            for i in (1..t).rev() {
                perm.swap(i, rng.random_range(0..=i));
            }
            let mut permuted = data.clone();
            for r in 0..l * h * tgt {
                for (k, &from) in perm.iter().enumerate() {
                    permuted[r * src + p + k] = data[r * src + p + from];
                }
            }
            let a = aggregate_attention(&AttentionStack::unmasked(l, h, tgt, p, t, data).unwrap()).unwrap();
            let b = aggregate_attention(&AttentionStack::unmasked(l, h, tgt, p, t, permuted).unwrap()).unwrap();
            for (k, &from) in perm.iter().enumerate() {
                prop_assert!((b.0[k] - a.0[from]).abs() < 1e-12);
            }
        }
    }
}
