//! Camera conditioning, depth-based scale normalization, sharded multiview
//! streaming, score-distillation planning and image metrics for
//! single-image novel view synthesis.
//!
//! Neural components (the view-synthesis model, monocular depth, LPIPS) sit
//! behind traits or external hooks; everything else is implemented here.

pub mod anchoring;
pub mod conditioning;
pub mod config;
pub mod dataset;
pub mod depth;
pub mod geometry;
pub mod metrics;
pub mod preprocess;

#[cfg(test)]
mod testutil;

pub use anchoring::{distill_plan, AnchorPlan, DistillPlan, GuidanceModel, MockGuidance, PlanConfig};
pub use conditioning::{compute, ConditioningError, ConditioningVector, SceneView, Variant, ViewerDepth};
pub use config::{Config, ConfigError};
pub use dataset::{
    mix_streams, parallel_stream, stream_shard, write_shard, PairSample, SceneRecord, Shard, ShardError,
    StreamError, StreamOptions,
};
pub use depth::{DepthError, DepthMap, QuantileMethod};
pub use geometry::{relative_pose, GeometryError, Pose, Spherical};
pub use metrics::{psnr, ssim, Image, MetricsError};
pub use preprocess::{Intrinsics, PreprocessError};
