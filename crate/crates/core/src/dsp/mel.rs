use super::stft::PowerSpectrogram;
use crate::error::{Error, Result};

// Slaney mel scale: linear below 1 kHz, logarithmic above.
const F_SP: f64 = 200.0 / 3.0;
const MIN_LOG_HZ: f64 = 1000.0;
const MIN_LOG_MEL: f64 = MIN_LOG_HZ / F_SP;
const LOG_STEP: f64 = 0.068_751_777_420_949_12; // ln(6.4) / 27

pub fn hz_to_mel(hz: f64) -> f64 {
    if hz >= MIN_LOG_HZ {
        MIN_LOG_MEL + (hz / MIN_LOG_HZ).ln() / LOG_STEP
    } else {
        hz / F_SP
    }
}

pub fn mel_to_hz(mel: f64) -> f64 {
    if mel >= MIN_LOG_MEL {
        MIN_LOG_HZ * (LOG_STEP * (mel - MIN_LOG_MEL)).exp()
    } else {
        F_SP * mel
    }
}

/// Triangular filters (peak 1) whose centers are equally spaced on the mel
/// scale between 0 Hz and Nyquist.
#[derive(Debug, Clone, PartialEq)]
pub struct MelFilterbank {
    bins: usize,
    /// Row-major `n_mels x bins`.
    weights: Vec<f64>,
    /// Nonzero range `[start, end)` per row.
    support: Vec<(usize, usize)>,
    band_centers: Vec<f64>,
}

impl MelFilterbank {
    pub fn new(n_fft: usize, n_mels: usize, sample_rate: u32) -> Result<Self> {
        if n_mels < 1 {
            return Err(Error::InvalidArgument("n_mels must be >= 1".into()));
        }
        if n_fft < 2 {
            return Err(Error::InvalidArgument("n_fft must be >= 2".into()));
        }
        let sr = f64::from(sample_rate);
        let bins = n_fft / 2 + 1;
        let top = hz_to_mel(sr / 2.0);
        let edges: Vec<f64> = (0..n_mels + 2)
            .map(|i| mel_to_hz(top * i as f64 / (n_mels + 1) as f64))
            .collect();
        let bin_hz: Vec<f64> = (0..bins).map(|k| k as f64 * sr / n_fft as f64).collect();

        let mut weights = vec![0.0; n_mels * bins];
        let mut support = Vec::with_capacity(n_mels);
        for m in 0..n_mels {
            let (lo, center, hi) = (edges[m], edges[m + 1], edges[m + 2]);
            let row = &mut weights[m * bins..(m + 1) * bins];
            for (w, &f) in row.iter_mut().zip(&bin_hz) {
                let rise = (f - lo) / (center - lo);
                let fall = (hi - f) / (hi - center);
                *w = rise.min(fall).max(0.0);
            }
            let start = row.iter().position(|&w| w > 0.0);
            let end = row.iter().rposition(|&w| w > 0.0).map(|e| e + 1);
            match (start, end) {
                (Some(s), Some(e)) => support.push((s, e)),
                _ => {
                    return Err(Error::InvalidArgument(format!(
                        "mel band {m} ({center:.1} Hz) covers no FFT bin; use fewer bands or a longer FFT"
                    )))
                }
            }
        }
        Ok(Self {
            bins,
            weights,
            support,
            band_centers: edges[1..=n_mels].to_vec(),
        })
    }

    pub fn n_mels(&self) -> usize {
        self.support.len()
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn row(&self, m: usize) -> &[f64] {
        &self.weights[m * self.bins..(m + 1) * self.bins]
    }

    pub fn band_centers(&self) -> &[f64] {
        &self.band_centers
    }

    /// Mel energies, frame-major `frames x n_mels`.
    pub fn apply(&self, power: &PowerSpectrogram) -> Vec<f64> {
        debug_assert_eq!(power.bins, self.bins);
        let mut out = Vec::with_capacity(power.frames * self.n_mels());
        for t in 0..power.frames {
            let frame = power.frame(t);
            for (m, &(s, e)) in self.support.iter().enumerate() {
                let row = &self.row(m)[s..e];
                out.push(row.iter().zip(&frame[s..e]).map(|(w, p)| w * p).sum());
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_shape_and_positivity() {
        let fb = MelFilterbank::new(1024, 128, 44_100).unwrap();
        assert_eq!(fb.n_mels(), 128);
        assert_eq!(fb.bins(), 513);
        assert_eq!(fb.weights.len(), 128 * 513);
        for m in 0..128 {
            let row = fb.row(m);
            assert!(row.iter().all(|&w| w >= 0.0));
            assert!(row.iter().sum::<f64>() > 0.0, "band {m}");
            // contiguous support
            let (s, e) = fb.support[m];
            assert!(row[s..e].iter().all(|&w| w > 0.0));
        }
    }

    #[test]
    fn centers_uniform_on_mel_scale() {
        let fb = MelFilterbank::new(1024, 128, 44_100).unwrap();
        let c = fb.band_centers();
        assert!(c[0] < c[127]);
        // Independent evaluation of the break points: nyquist mel / 129.
        let step = hz_to_mel(22_050.0) / 129.0;
        for (i, &hz) in c.iter().enumerate() {
            assert!((hz_to_mel(hz) - step * (i + 1) as f64).abs() < 1e-6);
        }
        assert!(c.windows(2).all(|p| p[0] < p[1]));
    }

    #[test]
    fn mel_round_trip() {
        for hz in [0.0, 100.0, 999.0, 1000.0, 4000.0, 22_050.0] {
            assert!((mel_to_hz(hz_to_mel(hz)) - hz).abs() < 1e-9);
        }
        assert!((hz_to_mel(1000.0) - 15.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(MelFilterbank::new(1024, 0, 44_100).is_err());
        assert!(MelFilterbank::new(1, 128, 44_100).is_err());
    }
}
