use serde::{Deserialize, Serialize};

use crate::autodiff::Pooling;
use crate::error::{Error, Result};

/// Architecture hyper-parameters. The defaults give the full-size network:
/// six blocks of 16..512 filters with two 3x3 convolutions each, a 2x2
/// convolution with 1024 filters, and a 1x1 output convolution.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub class_count: usize,
    #[serde(default = "default_block_filters")]
    pub block_filters: Vec<usize>,
    #[serde(default = "default_convs_per_block")]
    pub convs_per_block: usize,
    #[serde(default = "default_l7_filters")]
    pub l7_filters: usize,
    #[serde(default)]
    pub pooling: Pooling,
    #[serde(default = "default_mel_bands")]
    pub mel_bands: usize,
}

fn default_block_filters() -> Vec<usize> {
    vec![16, 32, 64, 128, 256, 512]
}

fn default_convs_per_block() -> usize {
    2
}

fn default_l7_filters() -> usize {
    1024
}

fn default_mel_bands() -> usize {
    128
}

impl ModelConfig {
    pub fn new(class_count: usize) -> Self {
        Self {
            class_count,
            block_filters: default_block_filters(),
            convs_per_block: default_convs_per_block(),
            l7_filters: default_l7_filters(),
            pooling: Pooling::Avg,
            mel_bands: default_mel_bands(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.class_count < 1 {
            return Err(Error::InvalidArgument("class_count must be >= 1".into()));
        }
        if self.mel_bands != 128 {
            return Err(Error::InvalidArgument(format!(
                "mel_bands must be 128 (six 2x2 poolings and the 2x2 L7 filter reduce the frequency axis 128 -> 2 -> 1), got {}",
                self.mel_bands
            )));
        }
        if self.block_filters.len() != 6 {
            return Err(Error::InvalidArgument(format!(
                "block_filters needs 6 entries, got {}",
                self.block_filters.len()
            )));
        }
        if self.block_filters.contains(&0) || self.l7_filters == 0 {
            return Err(Error::InvalidArgument("filter counts must be >= 1".into()));
        }
        if self.convs_per_block < 1 {
            return Err(Error::InvalidArgument("convs_per_block must be >= 1".into()));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }
}
