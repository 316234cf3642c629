//! Weakly supervised audio event detection.
//!
//! - [`dsp`]: logmel features (1024-point Hann STFT, 512 hop, 128 mel bands).
//! - [`autodiff`]: reverse-mode engine and Adam.
//! - [`model`]: the segment-level network, its geometry and weak-label localization.
//! - [`data`]: weak-label corpora, manifests, synthetic corpora and the
//!   label-noise procedures (span expansion, stratified corruption, wild
//!   labeling).
//! - [`train`]: training loop, AP/AUC metrics and reports.

pub mod autodiff;
pub mod data;
pub mod dsp;
pub mod error;
pub mod model;
pub(crate) mod seed;
pub mod train;

pub use error::{Error, Result};
