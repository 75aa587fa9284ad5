use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::ServerError;
use crate::patcher::SamplerParams;
use crate::stain::{HedParams, HsvRanges};

/// How a slide is picked once its dataset has been drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SlideWeighting {
    /// Every slide in the dataset is equally likely.
    #[default]
    Uniform,
    /// Slides are weighted by level-0 area.
    Area,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamConfig {
    /// Mixing weight per dataset. Empty means equal weights over every
    /// dataset in the manifest. Weights are normalized internally.
    #[serde(default)]
    pub weights: BTreeMap<String, f64>,
    pub sampler: SamplerParams,
    /// `None` disables the HSV filter.
    pub hsv: Option<HsvRanges>,
    /// `None` disables HED augmentation.
    pub hed_sigma: Option<f64>,
    pub batch_size: u32,
    pub seed: u64,
    #[serde(default)]
    pub slide_weighting: SlideWeighting,
    /// Batches a connection may prepare ahead of the client's requests.
    #[serde(default = "default_prefetch")]
    pub prefetch_batches: usize,
    #[serde(default = "default_shard_capacity")]
    pub shard_capacity: usize,
}

fn default_prefetch() -> usize {
    1
}

fn default_shard_capacity() -> usize {
    64
}

impl Default for StreamConfig {
    fn default() -> Self {
        StreamConfig {
            weights: BTreeMap::new(),
            sampler: SamplerParams::default(),
            hsv: Some(HsvRanges::default()),
            hed_sigma: Some(HedParams::DEFAULT_SIGMA),
            batch_size: 12,
            seed: 0,
            slide_weighting: SlideWeighting::Uniform,
            prefetch_batches: default_prefetch(),
            shard_capacity: default_shard_capacity(),
        }
    }
}

impl StreamConfig {
    pub fn validate(&self) -> Result<(), ServerError> {
        self.sampler.validate()?;
        if let Some(h) = &self.hsv {
            h.validate()?;
        }
        if let Some(s) = self.hed_sigma {
            if !(s.is_finite() && s >= 0.0) {
                return Err(ServerError::Config(format!("hed_sigma must be >= 0, got {s}")));
            }
        }
        if self.batch_size == 0 {
            return Err(ServerError::Config("batch_size must be at least 1".into()));
        }
        if self.shard_capacity == 0 {
            return Err(ServerError::Config("shard_capacity must be at least 1".into()));
        }
        for (name, w) in &self.weights {
            if !(w.is_finite() && *w > 0.0) {
                return Err(ServerError::Config(format!("weight for {name} must be positive, got {w}")));
            }
        }
        Ok(())
    }
}
