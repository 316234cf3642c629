//! Audio front end: framing, mel filterbank and log-compressed mel energies.
//!
//! All recordings are expected at 44.1 kHz. Framing uses a 1024-point Hann
//! window with a 512-sample hop and no padding unless [`Padding::Center`] is
//! requested, so an `L`-sample input yields `floor((L - 1024) / 512) + 1`
//! frames.

mod cache;
mod mel;
mod stft;
mod wav;

pub use cache::{read_feature_cache, write_feature_cache};
pub use mel::{hz_to_mel, mel_to_hz, MelFilterbank};
pub use stft::{frame_count, hann_window, stft, Padding, PowerSpectrogram};
pub use wav::{read_wav, write_wav};

use crate::error::{Error, Result};

pub const SAMPLE_RATE: u32 = 44_100;
pub const N_FFT: usize = 1024;
pub const HOP: usize = 512;
pub const N_MELS: usize = 128;
/// Added to mel energies before the logarithm so silence stays finite.
pub const LOG_FLOOR: f64 = 1e-10;

/// Mono audio at 44.1 kHz.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    samples: Vec<f32>,
    sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f32>, sample_rate: u32) -> Result<Self> {
        if sample_rate != SAMPLE_RATE {
            return Err(Error::SampleRate(sample_rate));
        }
        if samples.is_empty() {
            return Err(Error::InvalidArgument("waveform has no samples".into()));
        }
        Ok(Self { samples, sample_rate })
    }

    pub fn samples(&self) -> &[f32] {
        &self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_seconds(&self) -> f64 {
        self.samples.len() as f64 / f64::from(self.sample_rate)
    }
}

/// An `n x 128` time-major matrix of log mel energies.
#[derive(Debug, Clone, PartialEq)]
pub struct LogmelSpectrogram {
    values: Vec<f32>,
    frames: usize,
    bands: usize,
    pub frame_hop_seconds: f64,
    pub frame_window_seconds: f64,
}

impl LogmelSpectrogram {
    /// Wrap precomputed values. `values.len()` must equal `frames * 128`.
    pub fn from_values(values: Vec<f32>, frames: usize, bands: usize) -> Result<Self> {
        if bands != N_MELS {
            return Err(Error::shape("logmel", format!("expected 128 mel bands, got {bands}")));
        }
        if frames == 0 {
            return Err(Error::shape("logmel", "zero frames"));
        }
        if values.len() != frames * bands {
            return Err(Error::shape(
                "logmel",
                format!("{} values for {frames}x{bands}", values.len()),
            ));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { op: "logmel" });
        }
        Ok(Self {
            values,
            frames,
            bands,
            frame_hop_seconds: HOP as f64 / f64::from(SAMPLE_RATE),
            frame_window_seconds: N_FFT as f64 / f64::from(SAMPLE_RATE),
        })
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn bands(&self) -> usize {
        self.bands
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn frame(&self, t: usize) -> &[f32] {
        &self.values[t * self.bands..(t + 1) * self.bands]
    }

    /// First `frames` frames (or all, if shorter).
    pub fn truncated(&self, frames: usize) -> Result<Self> {
        let frames = frames.min(self.frames);
        let mut out = Self::from_values(self.values[..frames * self.bands].to_vec(), frames, self.bands)?;
        out.frame_hop_seconds = self.frame_hop_seconds;
        out.frame_window_seconds = self.frame_window_seconds;
        Ok(out)
    }
}

/// Computes logmel spectrograms with a fixed filterbank.
#[derive(Debug, Clone)]
pub struct LogmelExtractor {
    filterbank: MelFilterbank,
    window: Vec<f64>,
    padding: Padding,
}

impl Default for LogmelExtractor {
    fn default() -> Self {
        Self::new(Padding::None)
    }
}

impl LogmelExtractor {
    pub fn new(padding: Padding) -> Self {
        let filterbank =
            MelFilterbank::new(N_FFT, N_MELS, SAMPLE_RATE).expect("default filterbank parameters are valid");
        Self {
            filterbank,
            window: hann_window(N_FFT),
            padding,
        }
    }

    pub fn filterbank(&self) -> &MelFilterbank {
        &self.filterbank
    }

    pub fn padding(&self) -> Padding {
        self.padding
    }

    /// Mel energies before compression, frame-major.
    pub fn mel_energies(&self, w: &Waveform) -> Result<(Vec<f64>, usize)> {
        let power = stft::stft_with_window(w.samples(), &self.window, HOP, self.padding)?;
        let energies = self.filterbank.apply(&power);
        Ok((energies, power.frames))
    }

    pub fn compute(&self, w: &Waveform) -> Result<LogmelSpectrogram> {
        let (energies, frames) = self.mel_energies(w)?;
        let values = energies.iter().map(|&e| (e + LOG_FLOOR).ln() as f32).collect();
        LogmelSpectrogram::from_values(values, frames, N_MELS)
    }
}

/// Logmel spectrogram with default settings (1024/512 Hann STFT, 128 bands,
/// no padding).
pub fn logmel(w: &Waveform) -> Result<LogmelSpectrogram> {
    LogmelExtractor::default().compute(w)
}
