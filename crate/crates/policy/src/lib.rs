//! Desk-scale skeleton-to-text translation policy.
//!
//! [`PolicyModel::forward`] runs a teacher-forced pass and returns a
//! [`ForwardTrace`] holding per-step log-probabilities, the cross-attention
//! stack, and the tape needed by [`backward`]. [`generate`] decodes with beam
//! search. [`snapshot_reference`] freezes a copy as the DPO reference.

pub mod checkpoint;
pub mod config;
pub mod error;
pub mod generate;
pub mod model;
pub mod optim;
pub mod tape;

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use config::ModelConfig;
pub use error::{PolicyError, Result};
pub use generate::{beam_search, generate, Hypothesis};
pub use model::{
    backward, reference_forward, sequence_log_likelihood, snapshot_reference, ForwardTrace,
    ParamLayout, ParamView, PolicyModel, ReferenceModel,
};
pub use optim::{AdamW, AdamWConfig, CosineSchedule};
