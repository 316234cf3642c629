use crate::data::{Corpus, Featurizer};
use crate::dsp::LogmelSpectrogram;
use crate::error::{Error, Result};
use crate::model::SEGMENT_FRAMES;

/// Features and multi-hot targets for the clips long enough to score.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub event_names: Vec<String>,
    pub clip_ids: Vec<String>,
    pub features: Vec<LogmelSpectrogram>,
    pub targets: Vec<Vec<f32>>,
    /// Clips dropped for having fewer than one segment of frames.
    pub skipped: Vec<String>,
}

impl Dataset {
    pub fn new(corpus: &Corpus, features: Vec<LogmelSpectrogram>) -> Result<Self> {
        if features.len() != corpus.len() {
            return Err(Error::InvalidArgument(format!(
                "{} feature matrices for {} clips",
                features.len(),
                corpus.len()
            )));
        }
        let mut ds = Self {
            event_names: corpus.vocabulary.names().to_vec(),
            clip_ids: Vec::new(),
            features: Vec::new(),
            targets: Vec::new(),
            skipped: Vec::new(),
        };
        for (clip, x) in corpus.clips.iter().zip(features) {
            if x.frames() < SEGMENT_FRAMES {
                log::warn!("skipping {}: {} frames (< {SEGMENT_FRAMES})", clip.clip_id, x.frames());
                ds.skipped.push(clip.clip_id.clone());
                continue;
            }
            ds.clip_ids.push(clip.clip_id.clone());
            ds.targets.push(clip.targets(corpus.class_count()));
            ds.features.push(x);
        }
        Ok(ds)
    }

    pub fn from_corpus(corpus: &Corpus, featurizer: &Featurizer) -> Result<Self> {
        Self::new(corpus, featurizer.featurize(corpus)?)
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn class_count(&self) -> usize {
        self.event_names.len()
    }

    /// Whether every example has the same frame count.
    pub fn equal_length(&self) -> bool {
        self.features.windows(2).all(|w| w[0].frames() == w[1].frames())
    }
}
