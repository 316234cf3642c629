use super::{Model, SegmentPosteriors};
use crate::autodiff::Scalar;
use crate::dsp::LogmelSpectrogram;
use crate::error::{Error, Result};

/// A detected occurrence of `event` between `start_s` and `end_s` seconds.
#[derive(Debug, Clone, PartialEq)]
pub struct Localization {
    pub event: usize,
    pub start_s: f64,
    pub end_s: f64,
}

/// Turn segment posteriors into time intervals: for every event, each
/// maximal run of consecutive segments with posterior `>= threshold` becomes
/// one interval from the first segment's start frame to the last segment's
/// end frame. Overlapping segments inside a run merge naturally.
pub fn localize_segments(seg: &SegmentPosteriors, threshold: f64, frame_hop_seconds: f64) -> Result<Vec<Localization>> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "threshold must lie in (0, 1), got {threshold}"
        )));
    }
    let mut out = Vec::new();
    for c in 0..seg.classes {
        let mut run: Option<(usize, usize)> = None;
        for k in 0..=seg.segments {
            let active = k < seg.segments && f64::from(seg.get(k, c)) >= threshold;
            run = match (run, active) {
                (None, true) => Some((k, k)),
                (Some((s, _)), true) => Some((s, k)),
                (Some((s, e)), false) => {
                    out.push(Localization {
                        event: c,
                        start_s: seg.spans[s].0 as f64 * frame_hop_seconds,
                        end_s: seg.spans[e].1 as f64 * frame_hop_seconds,
                    });
                    None
                }
                (None, false) => None,
            };
        }
    }
    Ok(out)
}

impl<T: Scalar> Model<T> {
    /// Eval-mode forward followed by [`localize_segments`].
    pub fn localize(&self, x: &LogmelSpectrogram, threshold: f64) -> Result<Vec<Localization>> {
        let (seg, _) = self.predict(x)?;
        localize_segments(&seg, threshold, x.frame_hop_seconds)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::segment_span;

    fn posteriors(cols: &[Vec<f32>]) -> SegmentPosteriors {
        let k = cols[0].len();
        let c = cols.len();
        let mut values = vec![0.0; k * c];
        for (ci, col) in cols.iter().enumerate() {
            for (ki, v) in col.iter().enumerate() {
                values[ki * c + ci] = *v;
            }
        }
        SegmentPosteriors {
            values,
            segments: k,
            classes: c,
            spans: (0..k).map(|i| segment_span(i, k).unwrap()).collect(),
        }
    }

    const HOP: f64 = 512.0 / 44_100.0;

    #[test]
    fn nothing_above_threshold() {
        let s = posteriors(&[vec![0.1, 0.2, 0.3], vec![0.49, 0.0, 0.4]]);
        assert!(localize_segments(&s, 0.5, HOP).unwrap().is_empty());
    }

    #[test]
    fn single_segment_matches_its_span() {
        let s = posteriors(&[vec![0.1, 0.9, 0.3, 0.2]]);
        let out = localize_segments(&s, 0.5, HOP).unwrap();
        assert_eq!(out.len(), 1);
        let (a, b) = segment_span(1, 4).unwrap();
        assert_eq!(
            out[0],
            Localization {
                event: 0,
                start_s: a as f64 * HOP,
                end_s: b as f64 * HOP
            }
        );
    }

    #[test]
    fn runs_merge_and_split() {
        let s = posteriors(&[vec![0.6, 0.7, 0.2, 0.8, 0.9, 0.95], vec![0.0; 6]]);
        let out = localize_segments(&s, 0.5, 1.0).unwrap();
        assert_eq!(
            out,
            vec![
                Localization {
                    event: 0,
                    start_s: 0.0,
                    end_s: 192.0
                },
                Localization {
                    event: 0,
                    start_s: 192.0,
                    end_s: 448.0
                },
            ]
        );
    }

    #[test]
    fn threshold_must_be_open_unit_interval() {
        let s = posteriors(&[vec![0.5]]);
        assert!(localize_segments(&s, 0.0, HOP).is_err());
        assert!(localize_segments(&s, 1.0, HOP).is_err());
    }
}
