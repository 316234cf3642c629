use std::sync::Arc;

use rustfft::{num_complex::Complex, Fft, FftPlanner};

use super::Waveform;
use crate::error::{Error, Result};

/// Framing convention at the signal edges.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Padding {
    /// Frames start at sample 0 and never run past the end.
    #[default]
    None,
    /// Zero-pad half a window on both sides.
    Center,
}

/// Power spectrogram, frame-major: `frames x bins`.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerSpectrogram {
    pub frames: usize,
    pub bins: usize,
    pub values: Vec<f64>,
}

impl PowerSpectrogram {
    pub fn frame(&self, t: usize) -> &[f64] {
        &self.values[t * self.bins..(t + 1) * self.bins]
    }
}

/// Periodic Hann window.
pub fn hann_window(len: usize) -> Vec<f64> {
    (0..len)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / len as f64).cos())
        .collect()
}

/// Number of full frames in `len` samples.
pub fn frame_count(len: usize, window: usize, hop: usize) -> Option<usize> {
    (len >= window && hop > 0).then(|| (len - window) / hop + 1)
}

/// Hann-windowed short-time power spectrum.
pub fn stft(w: &Waveform, window_samples: usize, hop_samples: usize) -> Result<PowerSpectrogram> {
    stft_with_window(w.samples(), &hann_window(window_samples), hop_samples, Padding::None)
}

pub(crate) fn stft_with_window(
    samples: &[f32],
    window: &[f64],
    hop: usize,
    padding: Padding,
) -> Result<PowerSpectrogram> {
    let n = window.len();
    if n < 2 || hop == 0 {
        return Err(Error::InvalidArgument(format!(
            "window {n} and hop {hop} must be >= 2 and >= 1"
        )));
    }
    let padded;
    let signal: &[f32] = match padding {
        Padding::None => samples,
        Padding::Center => {
            let mut v = vec![0.0f32; samples.len() + n];
            v[n / 2..n / 2 + samples.len()].copy_from_slice(samples);
            padded = v;
            &padded
        }
    };
    let frames = frame_count(signal.len(), n, hop).ok_or(Error::WaveformTooShort {
        len: samples.len(),
        window: n,
    })?;
    let bins = n / 2 + 1;
    let fft: Arc<dyn Fft<f64>> = FftPlanner::new().plan_fft_forward(n);
    let mut scratch = vec![Complex::default(); fft.get_inplace_scratch_len()];
    let mut buf = vec![Complex::default(); n];
    let mut values = Vec::with_capacity(frames * bins);
    for t in 0..frames {
        let frame = &signal[t * hop..t * hop + n];
        for ((b, &s), &wv) in buf.iter_mut().zip(frame).zip(window) {
            *b = Complex::new(f64::from(s) * wv, 0.0);
        }
        fft.process_with_scratch(&mut buf, &mut scratch);
        values.extend(buf[..bins].iter().map(|c| c.norm_sqr()));
    }
    Ok(PowerSpectrogram { frames, bins, values })
}
