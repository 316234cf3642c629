use super::{Corpus, WeakClip};
use crate::error::{Error, Result};

/// Total length covered by a set of intervals, overlaps counted once.
pub fn union_length(intervals: &[(f64, f64)]) -> f64 {
    let mut ivs: Vec<(f64, f64)> = intervals.iter().copied().filter(|(s, e)| e > s).collect();
    ivs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut total = 0.0;
    let mut cur: Option<(f64, f64)> = None;
    for (s, e) in ivs {
        cur = match cur {
            Some((cs, ce)) if s <= ce => Some((cs, ce.max(e))),
            Some((cs, ce)) => {
                total += ce - cs;
                Some((s, e))
            }
            None => Some((s, e)),
        };
    }
    if let Some((cs, ce)) = cur {
        total += ce - cs;
    }
    total
}

/// Fraction of the clip during which `event` is present.
pub fn label_density(clip: &WeakClip, event: usize) -> Result<f64> {
    let truth = clip
        .truth
        .as_ref()
        .ok_or_else(|| Error::NoGroundTruth(clip.clip_id.clone()))?;
    let covered = truth.get(&event).map_or(0.0, |ivs| union_length(ivs));
    Ok((covered / clip.duration()).clamp(0.0, 1.0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct DensityEntry {
    pub clip_id: String,
    pub event: usize,
    pub ld: f64,
    pub ldn: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DensityReport {
    pub entries: Vec<DensityEntry>,
}

impl DensityReport {
    pub fn mean_ld(&self) -> Option<f64> {
        (!self.entries.is_empty()).then(|| self.entries.iter().map(|e| e.ld).sum::<f64>() / self.entries.len() as f64)
    }
}

/// LD/LDN for every weak label in the corpus.
pub fn density_report(corpus: &Corpus) -> Result<DensityReport> {
    let mut entries = Vec::new();
    for clip in &corpus.clips {
        for &e in &clip.labels {
            let ld = label_density(clip, e)?;
            entries.push(DensityEntry {
                clip_id: clip.clip_id.clone(),
                event: e,
                ld,
                ldn: 1.0 - ld,
            });
        }
    }
    Ok(DensityReport { entries })
}

/// Widen every span symmetrically to `target_len` seconds, clamped to the
/// source. Spans already at least `target_len` long are left alone, and a
/// source shorter than the target is taken whole. Truth intervals are
/// re-expressed relative to the new start.
pub fn expand_spans(corpus: &Corpus, target_len: f64) -> Corpus {
    let mut out = corpus.clone();
    for clip in &mut out.clips {
        let span = &mut clip.span;
        let len = span.len();
        if !(target_len > len) {
            continue;
        }
        let (start, end) = if span.source_duration <= target_len {
            (0.0, span.source_duration)
        } else {
            let pad = (target_len - len) / 2.0;
            (
                (span.start_s - pad).max(0.0),
                (span.end_s + pad).min(span.source_duration),
            )
        };
        let shift = span.start_s - start;
        span.start_s = start;
        span.end_s = end;
        if let Some(truth) = &mut clip.truth {
            for ivs in truth.values_mut() {
                for iv in ivs.iter_mut() {
                    *iv = (iv.0 + shift, iv.1 + shift);
                }
            }
        }
    }
    out
}
