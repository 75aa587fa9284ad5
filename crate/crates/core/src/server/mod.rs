//! Manifest loading, the tile stream, the wire protocol and shard export.

mod config;
pub mod manifest;
mod net;
mod pipeline;
pub mod protocol;
pub mod shards;

use thiserror::Error;

use crate::patcher::PatchError;
use crate::slide::SlideError;
use crate::stain::StainError;

pub use config::{SlideWeighting, StreamConfig};
pub use manifest::{load_manifest, parse_manifest, DatasetManifest, ManifestEntry, ManifestError};
pub use net::{serve, Server, ServerHandle, ServerStats, TileClient};
pub use pipeline::{Pipeline, TileBatch, TileMeta, TileRecord, TileStream, RECHECK_EVERY};
pub use protocol::ProtocolError;
pub use shards::{export_shards, read_export, read_shard, ShardIndex, ShardInfo};

#[derive(Debug, Error)]
pub enum ServerError {
    #[error(transparent)]
    Manifest(#[from] ManifestError),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("nothing to sample: {0}")]
    ExhaustedDataset(String),
    #[error(transparent)]
    Patch(#[from] PatchError),
    #[error(transparent)]
    Slide(#[from] SlideError),
    #[error(transparent)]
    Stain(#[from] StainError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error("cannot bind {addr}: {source}")]
    Bind { addr: String, source: std::io::Error },
    #[error("handshake failed: {0}")]
    Handshake(String),
    #[error("server replied {code}: {message}")]
    Remote { code: String, message: String },
    #[error("tile {index} failed its re-check: {reason}")]
    InvariantViolated { index: u64, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
