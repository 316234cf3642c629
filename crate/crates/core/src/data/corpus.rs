use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::path::PathBuf;

use super::EventVocabulary;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Eval,
}

/// Where a clip sits inside its source recording.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceSpan {
    pub source_id: String,
    pub start_s: f64,
    pub end_s: f64,
    pub source_duration: f64,
}

impl SourceSpan {
    pub fn new(source_id: impl Into<String>, start_s: f64, end_s: f64, source_duration: f64) -> Result<Self> {
        let span = Self {
            source_id: source_id.into(),
            start_s,
            end_s,
            source_duration,
        };
        span.validate()?;
        Ok(span)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.start_s.is_finite()
            && self.end_s.is_finite()
            && self.source_duration.is_finite()
            && 0.0 <= self.start_s
            && self.start_s < self.end_s
            && self.end_s <= self.source_duration;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "span of {:?} must satisfy 0 <= start ({}) < end ({}) <= source duration ({})",
                self.source_id, self.start_s, self.end_s, self.source_duration
            )))
        }
    }

    pub fn len(&self) -> f64 {
        self.end_s - self.start_s
    }
}

/// Audio backing a clip.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AudioRef {
    None,
    /// A WAV file holding exactly the clip's span (relative paths resolve
    /// against the manifest directory).
    File(PathBuf),
    /// Rendered on demand from a synthesis recipe for the named source.
    Synth(String),
}

impl AudioRef {
    pub fn parse(field: &str) -> Self {
        match field {
            "" => Self::None,
            f => match f.strip_prefix("synth:") {
                Some(src) => Self::Synth(src.to_owned()),
                None => Self::File(PathBuf::from(f)),
            },
        }
    }

    pub fn to_field(&self) -> String {
        match self {
            Self::None => String::new(),
            Self::File(p) => p.display().to_string(),
            Self::Synth(s) => format!("synth:{s}"),
        }
    }
}

/// Per-event list of `(start_s, end_s)` intervals relative to the clip start.
pub type TruthIntervals = BTreeMap<usize, Vec<(f64, f64)>>;

/// A weakly labeled recording.
#[derive(Debug, Clone, PartialEq)]
pub struct WeakClip {
    pub clip_id: String,
    pub span: SourceSpan,
    pub labels: BTreeSet<usize>,
    pub audio: AudioRef,
    /// Ground-truth occurrences, when known.
    pub truth: Option<TruthIntervals>,
}

impl WeakClip {
    pub fn duration(&self) -> f64 {
        self.span.len()
    }

    /// Multi-hot label vector of length `classes`.
    pub fn targets(&self, classes: usize) -> Vec<f32> {
        let mut t = vec![0.0; classes];
        for &l in &self.labels {
            t[l] = 1.0;
        }
        t
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub vocabulary: EventVocabulary,
    pub clips: Vec<WeakClip>,
    pub split: Split,
}

impl Corpus {
    pub fn new(vocabulary: EventVocabulary, clips: Vec<WeakClip>, split: Split) -> Result<Self> {
        let c = Self {
            vocabulary,
            clips,
            split,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::with_capacity(self.clips.len());
        for clip in &self.clips {
            if !seen.insert(clip.clip_id.as_str()) {
                return Err(Error::DuplicateClip(clip.clip_id.clone()));
            }
            clip.span.validate()?;
            if let Some(&bad) = clip.labels.iter().find(|&&l| l >= self.vocabulary.len()) {
                return Err(Error::InvalidArgument(format!(
                    "clip {:?} has label index {bad} outside the vocabulary",
                    clip.clip_id
                )));
            }
            if let Some(truth) = &clip.truth {
                let len = clip.duration();
                for (&e, ivs) in truth {
                    if e >= self.vocabulary.len() {
                        return Err(Error::InvalidArgument(format!(
                            "clip {:?} has ground truth for unknown event {e}",
                            clip.clip_id
                        )));
                    }
                    for &(s, t) in ivs {
                        if !(0.0 <= s && s < t && t <= len + 1e-9) {
                            return Err(Error::InvalidArgument(format!(
                                "clip {:?}: interval ({s}, {t}) outside [0, {len}]",
                                clip.clip_id
                            )));
                        }
                    }
                }
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.clips.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clips.is_empty()
    }

    pub fn class_count(&self) -> usize {
        self.vocabulary.len()
    }

    /// Number of clips carrying each label.
    pub fn positive_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.class_count()];
        for clip in &self.clips {
            for &l in &clip.labels {
                counts[l] += 1;
            }
        }
        counts
    }

    pub fn clip(&self, id: &str) -> Option<&WeakClip> {
        self.clips.iter().find(|c| c.clip_id == id)
    }
}
