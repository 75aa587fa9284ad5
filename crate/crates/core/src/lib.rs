//! Whole-slide tile sampling and pretraining data kernels.
//!
//! * [`slide`]: pyramidal slide access and synthetic test slides.
//! * [`patcher`]: tissue masks and online rejection sampling of tiles.
//! * [`stain`]: HSV tile filter and HED stain augmentation.
//! * [`embed`]: embedding regularizers, token aggregation, view geometry.
//! * [`resize`]: evaluation-time crop/resize rules.
//! * [`server`]: manifests, the tile stream, wire protocol and shard export.
//! * [`eval`]: few-shot linear probing and downstream metrics.
//!
//! Data-parallel loops run on rayon when the `parallel` feature is on (the
//! default); see [`par::Exec`].

pub mod embed;
pub mod eval;
pub mod grid;
pub mod par;
pub mod patcher;
pub mod resize;
pub mod seed;
pub mod server;
pub mod slide;
pub mod stain;

pub use par::Exec;
pub use slide::{SlideHandle, TileImage};
