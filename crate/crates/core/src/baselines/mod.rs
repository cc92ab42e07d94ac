//! The three comparison scorers: per-image mAP, the tile-grid classification
//! reduction, and the box-cluster (CLOD-style) reduction. All are pure
//! per-image functions, parallelizable exactly like the main scorer.

mod clod;
mod map;
mod tile;

pub use clod::{clod_clusters, clod_score, BoxCluster, ClodConfig};
pub use map::{per_image_map, MapConfig};
pub use tile::{tile_score, TileConfig};
