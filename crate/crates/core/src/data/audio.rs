use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;

use super::{AudioRef, Corpus, SynthRecipe, WeakClip};
use crate::dsp::{
    read_feature_cache, read_wav, write_feature_cache, LogmelExtractor, LogmelSpectrogram, Padding, Waveform,
    SAMPLE_RATE,
};
use crate::error::{Error, IoContext, Result};

/// Turns a clip's audio reference into samples.
///
/// `File` references name a WAV of the whole source recording; the clip is
/// the `[start_s, end_s)` slice of it. Relative paths resolve against
/// `base_dir`. `Synth` references render from the recipe.
#[derive(Debug, Clone, Default)]
pub struct AudioResolver {
    pub base_dir: PathBuf,
    pub recipe: Option<Arc<SynthRecipe>>,
}

impl AudioResolver {
    pub fn new(base_dir: impl Into<PathBuf>, recipe: Option<SynthRecipe>) -> Self {
        Self {
            base_dir: base_dir.into(),
            recipe: recipe.map(Arc::new),
        }
    }

    pub fn resolve(&self, clip: &WeakClip) -> Result<Waveform> {
        let span = &clip.span;
        match &clip.audio {
            AudioRef::None => Err(Error::InvalidArgument(format!("clip {:?} has no audio", clip.clip_id))),
            AudioRef::Synth(src) => self
                .recipe
                .as_ref()
                .ok_or_else(|| Error::InvalidArgument(format!("clip {:?} needs a synthesis recipe", clip.clip_id)))?
                .render_span(src, span.start_s, span.end_s),
            AudioRef::File(p) => {
                let path = self.base_dir.join(p);
                let w = read_wav(&path)?;
                let sr = f64::from(SAMPLE_RATE);
                let s0 = (span.start_s * sr).round() as usize;
                let s1 = s0 + (span.len() * sr).round() as usize;
                if s1 > w.len() {
                    return Err(Error::InvalidArgument(format!(
                        "{}: {} samples, clip {:?} needs up to sample {s1}",
                        path.display(),
                        w.len(),
                        clip.clip_id
                    )));
                }
                Waveform::new(w.samples()[s0..s1].to_vec(), SAMPLE_RATE)
            }
        }
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| {
        (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3)
    })
}

/// Computes (and optionally caches) logmel features for whole corpora.
#[derive(Debug, Clone)]
pub struct Featurizer {
    pub resolver: AudioResolver,
    pub extractor: LogmelExtractor,
    pub cache_dir: Option<PathBuf>,
    pub jobs: usize,
}

impl Featurizer {
    pub fn new(resolver: AudioResolver) -> Self {
        Self {
            resolver,
            extractor: LogmelExtractor::default(),
            cache_dir: None,
            jobs: 1,
        }
    }

    pub fn with_cache(mut self, dir: impl Into<PathBuf>) -> Self {
        self.cache_dir = Some(dir.into());
        self
    }

    pub fn with_jobs(mut self, jobs: usize) -> Self {
        self.jobs = jobs.max(1);
        self
    }

    /// Cache file for a clip; the name covers everything the features depend on.
    pub fn cache_path(&self, dir: &Path, clip: &WeakClip) -> PathBuf {
        let key = format!(
            "{}|{}|{:x}|{:x}|{:?}",
            clip.audio.to_field(),
            clip.span.source_id,
            clip.span.start_s.to_bits(),
            clip.span.end_s.to_bits(),
            self.extractor.padding() == Padding::Center,
        );
        let stem: String = clip
            .clip_id
            .chars()
            .map(|c| {
                if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                    c
                } else {
                    '_'
                }
            })
            .collect();
        dir.join(format!("{stem}-{:016x}.logmel", fnv1a(key.as_bytes())))
    }

    pub fn features(&self, clip: &WeakClip) -> Result<LogmelSpectrogram> {
        if let Some(dir) = &self.cache_dir {
            let path = self.cache_path(dir, clip);
            if path.exists() {
                return read_feature_cache(&path);
            }
            let x = self.extractor.compute(&self.resolver.resolve(clip)?)?;
            write_feature_cache(&path, &x)?;
            return Ok(x);
        }
        self.extractor.compute(&self.resolver.resolve(clip)?)
    }

    /// Features for every clip, in corpus order.
    pub fn featurize(&self, corpus: &Corpus) -> Result<Vec<LogmelSpectrogram>> {
        if let Some(dir) = &self.cache_dir {
            std::fs::create_dir_all(dir).ctx(|| format!("creating {}", dir.display()))?;
        }
        if self.jobs <= 1 {
            return corpus.clips.iter().map(|c| self.features(c)).collect();
        }
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.jobs)
            .build()
            .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
        pool.install(|| corpus.clips.par_iter().map(|c| self.features(c)).collect())
    }
}
