//! Command-line front end: serve tiles, export shards, generate test slides.
//!
//! Every flag can also be set through an environment variable named
//! `HISTOTILE_` followed by the flag in upper snake case, e.g.
//! `HISTOTILE_BATCH_SIZE=32`. Flags given on the command line win.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use histotile::patcher::SamplerParams;
use histotile::server::{export_shards, load_manifest, serve, Pipeline, SlideWeighting, StreamConfig};
use histotile::slide::generate_synthetic_slide;
use histotile::stain::HsvRanges;
use histotile::Exec;
use log::info;

#[derive(Parser)]
#[command(name = "histotile", version, about = "Online whole-slide tile sampling")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Stream tiles to clients over TCP.
    Serve {
        #[command(flatten)]
        sampling: SamplingArgs,
        #[arg(long, env = "HISTOTILE_HOST", default_value = "127.0.0.1")]
        host: String,
        #[arg(long, env = "HISTOTILE_PORT", default_value_t = 7878)]
        port: u16,
        /// Batches each connection may prepare ahead of requests.
        #[arg(long, env = "HISTOTILE_PREFETCH", default_value_t = 1)]
        prefetch: usize,
    },
    /// Write the first N tiles of the stream to shard files.
    Export {
        #[command(flatten)]
        sampling: SamplingArgs,
        #[arg(long, env = "HISTOTILE_N_TILES")]
        n_tiles: u64,
        #[arg(long, env = "HISTOTILE_OUT")]
        out: PathBuf,
        #[arg(long, env = "HISTOTILE_SHARD_CAPACITY", default_value_t = 64)]
        shard_capacity: usize,
    },
    /// Render a procedural H&E-like slide with a sidecar and tissue mask.
    GenSynthetic {
        #[arg(long, env = "HISTOTILE_SEED", default_value_t = 0)]
        seed: u64,
        #[arg(long, num_args = 2, value_names = ["W", "H"], default_values_t = [4096, 4096])]
        size: Vec<u32>,
        #[arg(long, env = "HISTOTILE_COVERAGE", default_value_t = 0.5)]
        coverage: f64,
        /// Level-0 spacing written to the sidecar, µm/px.
        #[arg(long, env = "HISTOTILE_LEVEL0_MPP", default_value_t = 0.25)]
        level0_mpp: f64,
        #[arg(long, env = "HISTOTILE_OUT")]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Toggle {
    On,
    Off,
}

#[derive(Clone, Copy, ValueEnum)]
enum Weighting {
    Uniform,
    Area,
}

#[derive(Args)]
struct SamplingArgs {
    #[arg(long, env = "HISTOTILE_MANIFEST")]
    manifest: PathBuf,
    #[arg(long, env = "HISTOTILE_TILE_SIZE", default_value_t = 256)]
    tile_size: u32,
    /// Candidate spacings in µm/px, comma separated.
    #[arg(long, env = "HISTOTILE_MPP", value_delimiter = ',', default_value = "2,1,0.5,0.25")]
    mpp: Vec<f64>,
    #[arg(long, env = "HISTOTILE_FOREGROUND_THRESHOLD", default_value_t = 0.4)]
    foreground_threshold: f64,
    #[arg(long, env = "HISTOTILE_MAX_ATTEMPTS", default_value_t = 1000)]
    max_attempts: u32,
    #[arg(long, env = "HISTOTILE_HSV_FILTER", value_enum, default_value = "on")]
    hsv_filter: Toggle,
    /// Stain jitter strength; `off` disables HED augmentation.
    #[arg(long, env = "HISTOTILE_HED_SIGMA", default_value = "0.05")]
    hed_sigma: String,
    #[arg(long, env = "HISTOTILE_BATCH_SIZE", default_value_t = 12)]
    batch_size: u32,
    #[arg(long, env = "HISTOTILE_SEED", default_value_t = 0)]
    seed: u64,
    /// Dataset mixing weights as `name=weight,...`; default is equal.
    #[arg(long, env = "HISTOTILE_WEIGHTS", value_delimiter = ',')]
    weights: Vec<String>,
    #[arg(long, env = "HISTOTILE_SLIDE_WEIGHTING", value_enum, default_value = "uniform")]
    slide_weighting: Weighting,
}

impl SamplingArgs {
    fn config(&self) -> Result<StreamConfig> {
        let hed_sigma = match self.hed_sigma.trim() {
            "off" | "none" => None,
            s => Some(s.parse::<f64>().with_context(|| format!("--hed-sigma {s:?} is neither a number nor off"))?),
        };
        let mut weights = BTreeMap::new();
        for w in &self.weights {
            let Some((name, value)) = w.split_once('=') else {
                bail!("weight {w:?} is not name=value");
            };
            let value: f64 = value.parse().with_context(|| format!("weight for {name}"))?;
            weights.insert(name.to_string(), value);
        }
        let config = StreamConfig {
            weights,
            sampler: SamplerParams {
                tile_size_px: self.tile_size,
                mpp_choices: self.mpp.clone(),
                foreground_threshold: self.foreground_threshold,
                max_attempts: self.max_attempts,
            },
            hsv: match self.hsv_filter {
                Toggle::On => Some(HsvRanges::default()),
                Toggle::Off => None,
            },
            hed_sigma,
            batch_size: self.batch_size,
            seed: self.seed,
            slide_weighting: match self.slide_weighting {
                Weighting::Uniform => SlideWeighting::Uniform,
                Weighting::Area => SlideWeighting::Area,
            },
            ..StreamConfig::default()
        };
        config.validate()?;
        Ok(config)
    }
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::Serve {
            sampling,
            host,
            port,
            prefetch,
        } => {
            let mut config = sampling.config()?;
            config.prefetch_batches = prefetch;
            let manifest = load_manifest(&sampling.manifest)?;
            info!("{} slides: {:?}", manifest.len(), manifest.counts());
            serve(config, &manifest, &format!("{host}:{port}"))?;
        }
        Command::Export {
            sampling,
            n_tiles,
            out,
            shard_capacity,
        } => {
            let mut config = sampling.config()?;
            config.shard_capacity = shard_capacity;
            let manifest = load_manifest(&sampling.manifest)?;
            let pipeline = Arc::new(Pipeline::new(config, &manifest, Exec::default())?);
            let started = std::time::Instant::now();
            let index = export_shards(&pipeline, n_tiles, &out)
                .with_context(|| format!("exporting to {}", out.display()))?;
            info!(
                "wrote {} tiles in {} shards to {} ({:.1}s)",
                index.total,
                index.shards.len(),
                out.display(),
                started.elapsed().as_secs_f64()
            );
        }
        Command::GenSynthetic {
            seed,
            size,
            coverage,
            level0_mpp,
            out,
        } => {
            let slide = generate_synthetic_slide(seed, size[0], size[1], level0_mpp, coverage, &out)?;
            println!("{}", serde_json::to_string(&serde_json::json!({
                "raster": slide.raster_path,
                "sidecar": slide.sidecar_path,
                "mask": slide.mask_path,
            }))?);
        }
    }
    Ok(())
}
