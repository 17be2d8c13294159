//! Sharded multiview scene storage and streaming view-pair sampling.
//!
//! A shard is a plain tar archive holding a sequence of scenes. Each scene
//! occupies a run of consecutive entries under `<scene_id>/`, so a shard can
//! be consumed in one forward pass holding a single scene in memory. See
//! `docs/shard-format.md` for the byte layout.

mod shard;
mod stream;
mod tarstream;

use std::io;
use std::path::PathBuf;

use thiserror::Error;

use crate::conditioning::{ConditioningError, SceneView};
use crate::depth::{DepthError, DepthMap, QuantileMethod};
use crate::geometry::{GeometryError, Pose};
use crate::preprocess::Intrinsics;

pub use shard::{
    build_shards, ingest_scene_dir, read_scene_at, write_scene_dir, write_shard, Manifest, ManifestEntry, SceneMeta,
    Shard, ShardReader, MANIFEST_NAME,
};
pub use stream::{
    mix_streams, parallel_stream, stream_shard, Mixture, PairCountMode, PairSample, ParallelStream, ResidentGauge,
    BoxedPairStream, ShardSet, ShardStream, StreamOptions, StreamSource,
};

/// Tag for camera-to-world extrinsics, the only convention accepted.
pub const CAMERA_TO_WORLD: &str = "camera_to_world";

#[derive(Debug, Error)]
pub enum ShardError {
    #[error("I/O failure on {path}: {source}")]
    IoFailure {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("invalid scene {scene_id:?}: {reason}")]
    InvalidScene { scene_id: String, reason: String },
    #[error("checksum mismatch in scene {scene_id:?} ({file})")]
    ChecksumMismatch { scene_id: String, file: String },
    #[error("malformed shard {path}: {reason}")]
    Format { path: PathBuf, reason: String },
    #[error("no scenes to write")]
    Empty,
}

impl ShardError {
    /// Whether reading can continue past this error.
    pub fn is_recoverable(&self) -> bool {
        matches!(self, ShardError::ChecksumMismatch { .. } | ShardError::InvalidScene { .. })
    }
}

#[derive(Debug, Error)]
pub enum StreamError {
    #[error("shard {shard_id}: {source}")]
    Shard {
        shard_id: String,
        #[source]
        source: ShardError,
    },
    #[error("invalid stream options: {0}")]
    InvalidOptions(String),
    #[error("stream {0} produced no samples after restart")]
    EmptySource(usize),
    #[error("stream worker panicked")]
    WorkerPanicked,
}

/// Dense-or-sparse depth stored at shard precision.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthGrid {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f32>,
    pub mask: Vec<bool>,
}

impl DepthGrid {
    pub fn from_depth_map(d: &DepthMap) -> Self {
        Self {
            width: d.width(),
            height: d.height(),
            values: d.values().iter().map(|&v| v as f32).collect(),
            mask: d.mask().to_vec(),
        }
    }

    pub fn to_depth_map(&self) -> Result<DepthMap, DepthError> {
        DepthMap::new(
            self.width,
            self.height,
            self.values.iter().map(|&v| v as f64).collect(),
            self.mask.clone(),
        )
    }

    /// Size of the in-memory payload in bytes.
    pub fn byte_len(&self) -> usize {
        self.values.len() * 5
    }
}

/// One view: encoded image, depth, camera-to-world pose.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewRecord {
    /// PNG-encoded image bytes; may be empty when a scene has no imagery.
    pub image_png: Vec<u8>,
    pub depth: DepthGrid,
    /// Row-major 4×4 camera-to-world matrix.
    pub pose: [f32; 16],
}

impl ViewRecord {
    pub fn pose(&self) -> Result<Pose, GeometryError> {
        Pose::from_row_major(&self.pose.map(|v| v as f64))
    }

    pub fn pose_from(pose: &Pose) -> [f32; 16] {
        pose.to_row_major().map(|v| v as f32)
    }
}

/// A multiview scene as stored in a shard.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneRecord {
    pub scene_id: String,
    pub source: String,
    pub convention: String,
    /// Field of view shared by all views, radians.
    pub fov: f64,
    pub intrinsics: Option<Intrinsics>,
    /// Opaque per-scene evaluation metadata.
    pub content_scale: Option<f64>,
    pub quantile: QuantileMethod,
    pub views: Vec<ViewRecord>,
}

impl SceneRecord {
    pub fn validate(&self) -> Result<(), ShardError> {
        let fail = |reason: String| ShardError::InvalidScene {
            scene_id: self.scene_id.clone(),
            reason,
        };
        if self.scene_id.is_empty()
            || self.scene_id.len() > 80
            || self.scene_id.starts_with("__")
            || !self
                .scene_id
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'))
        {
            return Err(fail("scene id must be 1-80 chars of [A-Za-z0-9._-] and not start with '__'".into()));
        }
        if self.convention != CAMERA_TO_WORLD {
            return Err(fail(format!("unsupported extrinsics convention {:?}", self.convention)));
        }
        if self.views.len() < 2 {
            return Err(fail(format!("{} views; at least 2 required", self.views.len())));
        }
        if !(self.fov > 0.0 && self.fov < std::f64::consts::PI) {
            return Err(fail(format!("field of view {} outside (0, π)", self.fov)));
        }
        for (i, v) in self.views.iter().enumerate() {
            v.pose().map_err(|e| fail(format!("view {i}: {e}")))?;
            let n = v.depth.width * v.depth.height;
            if v.depth.values.len() != n || v.depth.mask.len() != n {
                return Err(fail(format!("view {i}: depth grid size mismatch")));
            }
            v.depth.to_depth_map().map_err(|e| fail(format!("view {i}: {e}")))?;
        }
        Ok(())
    }

    pub fn poses(&self) -> Result<Vec<Pose>, GeometryError> {
        self.views.iter().map(ViewRecord::pose).collect()
    }

    pub fn depth_maps(&self) -> Result<Vec<DepthMap>, DepthError> {
        self.views.iter().map(|v| v.depth.to_depth_map()).collect()
    }

    /// Conditioning input for the ordered pair `(i, j)`.
    pub fn scene_view(&self, i: usize, j: usize) -> Result<SceneView, ConditioningError> {
        SceneView::new(self.poses()?, self.depth_maps()?, self.fov, i, j)
    }

    /// Approximate in-memory size.
    pub fn byte_len(&self) -> usize {
        self.views
            .iter()
            .map(|v| v.image_png.len() + v.depth.byte_len() + 64)
            .sum::<usize>()
            + self.scene_id.len()
    }
}
