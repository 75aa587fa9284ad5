//! Offline export of a tile stream to shard files.
//!
//! A shard is `"MDNTSHRD"` followed by tile records in the BATCH record
//! layout. `index.json` lists the shards and echoes the configuration.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::pipeline::{Pipeline, TileRecord};
use super::protocol::{decode_record, encode_record, ProtocolError};
use super::{ServerError, StreamConfig};

pub const SHARD_MAGIC: &[u8; 8] = b"MDNTSHRD";
pub const INDEX_FILE: &str = "index.json";

/// Tiles generated per parallel step while exporting.
const EXPORT_CHUNK: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShardInfo {
    pub file: String,
    pub count: usize,
    pub first_tile_index: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShardIndex {
    pub total: u64,
    pub seed: u64,
    pub shard_capacity: usize,
    pub shards: Vec<ShardInfo>,
    pub config: StreamConfig,
}

pub fn shard_file_name(i: usize) -> String {
    format!("shard-{i:05}.bin")
}

/// Writes tiles `0..n_tiles` of the stream seeded with the configured seed.
pub fn export_shards(pipeline: &Pipeline, n_tiles: u64, out_dir: &Path) -> Result<ShardIndex, ServerError> {
    let cfg = pipeline.config();
    std::fs::create_dir_all(out_dir)?;
    let cap = cfg.shard_capacity;
    let mut index = ShardIndex {
        total: n_tiles,
        seed: cfg.seed,
        shard_capacity: cap,
        shards: Vec::new(),
        config: cfg.clone(),
    };
    let mut current: Option<BufWriter<File>> = None;
    let mut buf = Vec::new();
    let mut next = 0u64;
    while next < n_tiles {
        let count = EXPORT_CHUNK.min((n_tiles - next) as usize);
        for rec in pipeline.generate_range(cfg.seed, next, count)? {
            if current.is_none() {
                let name = shard_file_name(index.shards.len());
                let mut w = BufWriter::new(File::create(out_dir.join(&name))?);
                w.write_all(SHARD_MAGIC)?;
                current = Some(w);
                index.shards.push(ShardInfo {
                    file: name,
                    count: 0,
                    first_tile_index: rec.meta.tile_index,
                });
            }
            buf.clear();
            encode_record(&rec, &mut buf);
            current.as_mut().unwrap().write_all(&buf)?;
            let info = index.shards.last_mut().unwrap();
            info.count += 1;
            if info.count == cap {
                current.take().unwrap().flush()?;
            }
        }
        next += count as u64;
    }
    if let Some(mut w) = current {
        w.flush()?;
    }
    let mut json = serde_json::to_vec_pretty(&index).expect("index serializes");
    json.push(b'\n');
    std::fs::write(out_dir.join(INDEX_FILE), json)?;
    Ok(index)
}

pub fn read_shard(path: &Path) -> Result<Vec<TileRecord>, ServerError> {
    let bytes = std::fs::read(path)?;
    if bytes.len() < 8 || &bytes[..8] != SHARD_MAGIC {
        return Err(ProtocolError::Malformed(format!("{} is not a shard file", path.display())).into());
    }
    let mut pos = 8;
    let mut out = Vec::new();
    while pos < bytes.len() {
        out.push(decode_record(&bytes, &mut pos)?);
    }
    Ok(out)
}

pub fn read_index(out_dir: &Path) -> Result<ShardIndex, ServerError> {
    let text = std::fs::read(out_dir.join(INDEX_FILE))?;
    serde_json::from_slice(&text).map_err(|e| ServerError::Config(format!("bad shard index: {e}")))
}

/// Every record of an export, in tile order.
pub fn read_export(out_dir: &Path) -> Result<Vec<TileRecord>, ServerError> {
    let index = read_index(out_dir)?;
    let mut out = Vec::with_capacity(index.total as usize);
    for s in &index.shards {
        out.extend(read_shard(&out_dir.join(&s.file))?);
    }
    Ok(out)
}

pub fn shard_paths(out_dir: &Path, index: &ShardIndex) -> Vec<PathBuf> {
    index.shards.iter().map(|s| out_dir.join(&s.file)).collect()
}
