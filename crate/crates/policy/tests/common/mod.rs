#![allow(dead_code)]

use rand::Rng;
use signdpo_core::rng::seeded;
use signdpo_core::skeleton::{Keypoint, LanguageMode, SkeletonSequence, NUM_KEYPOINTS};
use signdpo_core::TokenSequence;
use signdpo_policy::{ModelConfig, PolicyModel};

pub fn random_sequence(frames: usize, seed: u64) -> SkeletonSequence {
    let mut rng = seeded(seed);
    let frames = (0..frames)
        .map(|_| {
            let mut f = [Keypoint::ZERO; NUM_KEYPOINTS];
            for kp in f.iter_mut() {
                *kp = Keypoint::new(rng.random(), rng.random(), rng.random());
            }
            f
        })
        .collect();
    SkeletonSequence::new(format!("r{seed}"), frames, "x", LanguageMode::Word).unwrap()
}

/// Model whose every parameter, output head included, is uniform in ±`scale`.
pub fn random_model(cfg: ModelConfig, seed: u64, scale: f64) -> PolicyModel {
    let mut m = PolicyModel::new(cfg, seed).unwrap();
    let mut rng = seeded(seed ^ 0xabcdef);
    for p in m.params_mut() {
        *p = rng.random_range(-scale..scale) as f32 as f64;
    }
    m
}

pub fn tokens(ids: &[u32]) -> TokenSequence {
    TokenSequence::new(ids.to_vec(), String::new())
}
