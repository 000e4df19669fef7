//! Core data model and pure numerics for multi-level preference alignment of
//! skeleton-to-text translation models.
//!
//! - [`skeleton`]: keypoint frames, part layout, sequence file I/O.
//! - [`vocab`]: word/character vocabularies and token sequences.
//! - [`synth`]: deterministic synthetic corpus for desk-scale training.
//! - [`saliency`]: cross-attention aggregation and key-frame windows.
//! - [`perturb`]: spatial and temporal negative construction.
//! - [`objectives`]: the DPO loss family and the joint objective.

pub mod error;
pub mod objectives;
pub mod perturb;
pub mod rng;
pub mod saliency;
pub mod skeleton;
pub mod synth;
pub mod vocab;

pub use error::{Error, Result};
pub use skeleton::{
    BodyPart, Frame, Keypoint, LanguageMode, PartLayout, PartTensor, SkeletonSequence,
    NUM_KEYPOINTS,
};
pub use vocab::{TokenSequence, Vocabulary};
