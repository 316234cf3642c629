//! Experiment configuration: a TOML document whose values act as defaults
//! for command-line flags.
//!
//! ```toml
//! seed = 7
//!
//! [paths]
//! vocabulary = "corpus/vocab.txt"
//! recipe = "corpus/recipe.json"
//! feature_cache = "cache"
//!
//! [model]
//! block_filters = [16, 32, 64, 128, 256, 512]
//! convs_per_block = 2
//! l7_filters = 1024
//!
//! [train]
//! epochs = 30
//! lr = 0.001
//! batch_size = 16
//! pooling = "avg"
//! selection_metric = "map"
//!
//! [synth]
//! events = 8
//! clips = 500
//! clip_len_s = 10.0
//! snr_db = [-5.0, 5.0]
//!
//! [noise]
//! target_len = 30.0
//! r = 10.0
//! retrieval_precision = 0.6
//! top_k = 50
//! ```

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Deserialize;
use walnet::autodiff::Pooling;
use walnet::model::ModelConfig;
use walnet::train::SelectionMetric;

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub seed: Option<u64>,
    pub paths: Paths,
    pub model: ModelSection,
    pub train: TrainSection,
    pub noise: NoiseSection,
    pub synth: SynthSection,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthSection {
    pub events: Option<usize>,
    pub clips: Option<usize>,
    pub clip_len_s: Option<f64>,
    pub events_per_clip: Option<Vec<f64>>,
    pub event_duration_s: Option<(f64, f64)>,
    pub snr_db: Option<(f64, f64)>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Paths {
    pub vocabulary: Option<PathBuf>,
    pub recipe: Option<PathBuf>,
    pub feature_cache: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub block_filters: Option<Vec<usize>>,
    pub convs_per_block: Option<usize>,
    pub l7_filters: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub epochs: Option<usize>,
    pub lr: Option<f64>,
    pub batch_size: Option<usize>,
    pub pooling: Option<Pooling>,
    pub seed: Option<u64>,
    pub selection_metric: Option<SelectionMetric>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseSection {
    pub target_len: Option<f64>,
    pub r: Option<f64>,
    pub retrieval_precision: Option<f64>,
    pub top_k: Option<usize>,
    pub seed: Option<u64>,
}

impl ExperimentConfig {
    /// Parse and check that every referenced input path exists. Relative
    /// paths resolve against the config file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut cfg: Self = toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [
            &mut cfg.paths.vocabulary,
            &mut cfg.paths.recipe,
            &mut cfg.paths.feature_cache,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        for p in [&cfg.paths.vocabulary, &cfg.paths.recipe].into_iter().flatten() {
            if !p.exists() {
                bail!("{}: referenced path {} does not exist", path.display(), p.display());
            }
        }
        Ok(cfg)
    }

    pub fn load_opt(path: Option<&Path>) -> Result<Self> {
        path.map_or_else(|| Ok(Self::default()), Self::load)
    }

    pub fn model_config(&self, class_count: usize) -> ModelConfig {
        let mut m = ModelConfig::new(class_count);
        if let Some(v) = &self.model.block_filters {
            m.block_filters = v.clone();
        }
        if let Some(v) = self.model.convs_per_block {
            m.convs_per_block = v;
        }
        if let Some(v) = self.model.l7_filters {
            m.l7_filters = v;
        }
        m
    }
}

/// First of flag, stage-specific config, global config; missing seeds are
/// an error rather than a silent default.
pub fn resolve_seed(flag: Option<u64>, stage: Option<u64>, global: Option<u64>) -> Result<u64> {
    flag.or(stage)
        .or(global)
        .context("a seed is required: pass --seed or set `seed` in the config")
}
