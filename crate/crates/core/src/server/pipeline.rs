//! The sample → filter → augment pipeline behind both serving and export.

use std::sync::Arc;

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::config::{SlideWeighting, StreamConfig};
use super::manifest::DatasetManifest;
use super::ServerError;
use crate::par::Exec;
use crate::patcher::{
    compute_foreground_mask, foreground_fraction, propose, ForegroundMask, PatchError, DEFAULT_MASK_MPP,
};
use crate::seed::substream;
use crate::slide::{SlideHandle, TileImage};
use crate::stain::{hed_augment, hsv_tile_filter, HedParams, StainMatrix};

/// Tiles whose index is a multiple of this are re-checked before emission.
pub const RECHECK_EVERY: u64 = 100;

/// Metadata sent with every tile. Field order is the wire order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TileMeta {
    pub dataset: String,
    pub slide_id: String,
    pub x: i64,
    pub y: i64,
    pub mpp: f64,
    pub width: u32,
    pub height: u32,
    pub tile_index: u64,
    pub hed_alpha: [f64; 3],
    pub hed_beta: [f64; 3],
}

#[derive(Debug, Clone, PartialEq)]
pub struct TileRecord {
    pub meta: TileMeta,
    /// RGB8, row-major, `width × height × 3` bytes.
    pub pixels: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TileBatch {
    pub tiles: Vec<TileRecord>,
}

impl TileBatch {
    pub fn len(&self) -> usize {
        self.tiles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tiles.is_empty()
    }
}

struct SlideEntry {
    slide: SlideHandle,
    mask: ForegroundMask,
}

struct Dataset {
    name: String,
    slides: Vec<SlideEntry>,
    by_area: Option<WeightedIndex<f64>>,
}

/// Read-only sampling state shared by every stream.
pub struct Pipeline {
    config: StreamConfig,
    datasets: Vec<Dataset>,
    mixing: WeightedIndex<f64>,
    matrix: StainMatrix,
    exec: Exec,
}

impl std::fmt::Debug for Pipeline {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Pipeline")
            .field("datasets", &self.dataset_names())
            .field("config", &self.config)
            .finish()
    }
}

impl Pipeline {
    /// Validates the configuration and computes every slide's tissue mask.
    pub fn new(config: StreamConfig, manifest: &DatasetManifest, exec: Exec) -> Result<Self, ServerError> {
        config.validate()?;
        let counts = manifest.counts();
        for name in config.weights.keys() {
            if !counts.contains_key(name) {
                return Err(ServerError::ExhaustedDataset(format!("dataset {name} has no slides in the manifest")));
            }
        }
        let selected: Vec<(String, f64)> = if config.weights.is_empty() {
            counts.keys().map(|k| (k.clone(), 1.0)).collect()
        } else {
            config.weights.iter().map(|(k, w)| (k.clone(), *w)).collect()
        };
        if selected.is_empty() {
            return Err(ServerError::ExhaustedDataset("manifest lists no datasets".into()));
        }

        let masks = exec.map_range(manifest.slides.len(), |i| {
            compute_foreground_mask(&manifest.slides[i], DEFAULT_MASK_MPP)
        });
        let mut masks = masks.into_iter().collect::<Result<Vec<_>, _>>()?.into_iter().map(Some).collect::<Vec<_>>();

        let mut datasets = Vec::with_capacity(selected.len());
        for (name, _) in &selected {
            let mut slides = Vec::new();
            for (i, e) in manifest.entries.iter().enumerate() {
                if &e.dataset == name {
                    slides.push(SlideEntry {
                        slide: manifest.slides[i].clone(),
                        mask: masks[i].take().expect("each slide belongs to one dataset"),
                    });
                }
            }
            let by_area = match config.slide_weighting {
                SlideWeighting::Uniform => None,
                SlideWeighting::Area => {
                    let areas = slides.iter().map(|s| {
                        let (w, h) = s.slide.dimensions();
                        w as f64 * h as f64
                    });
                    Some(WeightedIndex::new(areas).map_err(|e| ServerError::Config(e.to_string()))?)
                }
            };
            datasets.push(Dataset {
                name: name.clone(),
                slides,
                by_area,
            });
        }
        let mixing = WeightedIndex::new(selected.iter().map(|s| s.1)).map_err(|e| ServerError::Config(e.to_string()))?;
        Ok(Pipeline {
            config,
            datasets,
            mixing,
            matrix: StainMatrix::hed(),
            exec,
        })
    }

    pub fn config(&self) -> &StreamConfig {
        &self.config
    }

    pub fn exec(&self) -> Exec {
        self.exec
    }

    pub fn dataset_names(&self) -> Vec<&str> {
        self.datasets.iter().map(|d| d.name.as_str()).collect()
    }

    /// Produces the tile with global index `index` of the stream `seed`.
    ///
    /// Each attempt draws a dataset, a slide within it and positions on
    /// that slide until one clears the tissue threshold. A tile rejected by
    /// the HSV filter restarts from the dataset draw. All proposals share
    /// the `max_attempts` budget.
    pub fn generate_tile(&self, seed: u64, index: u64) -> Result<TileRecord, ServerError> {
        let mut rng = substream(seed, index);
        let params = &self.config.sampler;
        let size = params.tile_size_px;
        let mut used = 0u32;
        loop {
            let ds = &self.datasets[self.mixing.sample(&mut rng)];
            let si = match &ds.by_area {
                Some(w) => w.sample(&mut rng),
                None => rng.gen_range(0..ds.slides.len() as u64) as usize,
            };
            let entry = &ds.slides[si];
            let proposal = loop {
                if used == params.max_attempts {
                    return Err(PatchError::MaxAttemptsExceeded {
                        slide_id: entry.slide.slide_id().to_string(),
                        attempts: used,
                    }
                    .into());
                }
                used += 1;
                let p = propose(&entry.mask, params, &mut rng)?;
                if p.foreground_fraction >= params.foreground_threshold {
                    break p;
                }
            };
            let tile = entry.slide.read_region(proposal.origin_l0, proposal.mpp, size, size)?;
            if let Some(ranges) = &self.config.hsv {
                if !hsv_tile_filter(&tile, ranges).accept {
                    continue;
                }
            }
            if index % RECHECK_EVERY == 0 {
                self.recheck(index, &entry.mask, &tile)?;
            }
            let (tile, hed) = match self.config.hed_sigma {
                Some(sigma) => {
                    let p = HedParams::sample(sigma, &mut rng)?;
                    (hed_augment(&tile, &p, &self.matrix), p)
                }
                None => (tile, HedParams::identity()),
            };
            return Ok(TileRecord {
                meta: TileMeta {
                    dataset: ds.name.clone(),
                    slide_id: entry.slide.slide_id().to_string(),
                    x: tile.origin_l0.0,
                    y: tile.origin_l0.1,
                    mpp: tile.mpp,
                    width: tile.width_px,
                    height: tile.height_px,
                    tile_index: index,
                    hed_alpha: hed.alpha,
                    hed_beta: hed.beta,
                },
                pixels: tile.pixels,
            });
        }
    }

    fn recheck(&self, index: u64, mask: &ForegroundMask, tile: &TileImage) -> Result<(), ServerError> {
        let params = &self.config.sampler;
        let fg = foreground_fraction(mask, tile.origin_l0, params.tile_size_px, tile.mpp)?;
        if fg < params.foreground_threshold {
            return Err(ServerError::InvariantViolated {
                index,
                reason: format!("foreground {fg} below {}", params.foreground_threshold),
            });
        }
        if let Some(ranges) = &self.config.hsv {
            let out = hsv_tile_filter(tile, ranges);
            if !out.accept {
                return Err(ServerError::InvariantViolated {
                    index,
                    reason: format!("HSV fraction {}", out.in_range_fraction),
                });
            }
        }
        Ok(())
    }

    /// Tiles `start..start + count`, generated with this pipeline's
    /// [`Exec`] and returned in index order.
    pub fn generate_range(&self, seed: u64, start: u64, count: usize) -> Result<Vec<TileRecord>, ServerError> {
        self.exec
            .map_range(count, |i| self.generate_tile(seed, start + i as u64))
            .into_iter()
            .collect()
    }

    pub fn stream(self: &Arc<Self>, seed: u64, batch_size: u32) -> TileStream {
        TileStream {
            pipeline: Arc::clone(self),
            seed,
            batch_size: batch_size.max(1),
            next_index: 0,
        }
    }
}

/// A reproducible sequence of batches; tile `i` depends only on the stream
/// seed and `i`.
#[derive(Debug, Clone)]
pub struct TileStream {
    pipeline: Arc<Pipeline>,
    seed: u64,
    batch_size: u32,
    next_index: u64,
}

impl TileStream {
    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn batch_size(&self) -> u32 {
        self.batch_size
    }

    pub fn next_index(&self) -> u64 {
        self.next_index
    }

    pub fn next_batch(&mut self) -> Result<TileBatch, ServerError> {
        let tiles = self
            .pipeline
            .generate_range(self.seed, self.next_index, self.batch_size as usize)?;
        self.next_index += tiles.len() as u64;
        Ok(TileBatch { tiles })
    }
}
