//! A fully convolutional network mapping an `n x 128` logmel input
//! to per-segment class posteriors, pooled into recording posteriors.

mod checkpoint;
mod config;
pub mod geometry;
mod gradcheck;
mod localize;
mod network;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use config::ModelConfig;
pub use geometry::{segment_count, segment_span, SEGMENT_FRAMES, SEGMENT_HOP};
pub use gradcheck::{model_grad_check, NETWORK_GRAD_FLOOR};
pub use localize::{localize_segments, Localization};
pub use network::{Model, Param, RecordingPosteriors, SegmentPosteriors};
