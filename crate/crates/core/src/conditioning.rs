//! Camera conditioning representations.
//!
//! Every representation maps a scene (extrinsics, optional depth maps, field
//! of view) and a pair of view indices `(i, j)` to a flat vector fed to the
//! view-synthesis model next to the input image. The 6DoF+1 family
//! flattens the relative pose `E_i⁻¹ E_j` as a row-major 4×4 homogeneous
//! matrix (the constant bottom row included) followed by `[f, sin f, cos f]`,
//! giving 19 entries. They differ only in how the relative translation is
//! rescaled:
//!
//! | variant         | translation scale                                   |
//! |-----------------|-----------------------------------------------------|
//! | `sixdof`        | none                                                |
//! | `sixdof_norm`   | `1/s`, `s` = mean distance of cameras to centroid   |
//! | `sixdof_agg`    | `1/q`, `q` = 10th pct of per-view 5th pct depths    |
//! | `sixdof_viewer` | `1/q_i`, `q_i` = 20th pct of infilled input depth   |
//!
//! The `zero123` variant is the 3-entry difference of spherical camera
//! coordinates about an origin.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::depth::{self, DepthError, DepthMap, QuantileMethod};
use crate::geometry::{relative_pose, wrap_angle, GeometryError, Pose};

/// Number of entries in a 6DoF+1 vector.
pub const SIXDOF_LEN: usize = 19;
/// Number of entries in a spherical-difference vector.
pub const ZERO123_LEN: usize = 3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConditioningError {
    #[error("field of view {0} rad is outside (0, π)")]
    FovOutOfRange(f64),
    #[error("view index {index} out of range for {len} views")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("scene has {views} views but {depths} depth maps")]
    DepthCountMismatch { views: usize, depths: usize },
    #[error("view {view} has no depth map")]
    MissingDepth { view: usize },
    #[error("camera spread is zero; cameras are coincident")]
    DegenerateScale,
    #[error("scale normalization requires at least 2 views, got {0}")]
    TooFewViews(usize),
    #[error("scale {0} must be finite and positive")]
    InvalidScale(f64),
    #[error("unknown conditioning variant {0:?}")]
    UnknownVariant(String),
    #[error("malformed conditioning vector bytes: {0}")]
    Malformed(&'static str),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Depth(#[from] DepthError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Zero123,
    Sixdof,
    SixdofNorm,
    SixdofAgg,
    SixdofViewer,
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Variant::Zero123,
        Variant::Sixdof,
        Variant::SixdofNorm,
        Variant::SixdofAgg,
        Variant::SixdofViewer,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Zero123 => "zero123",
            Variant::Sixdof => "sixdof",
            Variant::SixdofNorm => "sixdof_norm",
            Variant::SixdofAgg => "sixdof_agg",
            Variant::SixdofViewer => "sixdof_viewer",
        }
    }

    /// One-byte tag used in the binary encoding.
    pub fn tag(self) -> u8 {
        match self {
            Variant::Zero123 => 0,
            Variant::Sixdof => 1,
            Variant::SixdofNorm => 2,
            Variant::SixdofAgg => 3,
            Variant::SixdofViewer => 4,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        Self::ALL.into_iter().find(|v| v.tag() == tag)
    }

    pub fn len(self) -> usize {
        match self {
            Variant::Zero123 => ZERO123_LEN,
            _ => SIXDOF_LEN,
        }
    }
}

impl Default for Variant {
    fn default() -> Self {
        Variant::SixdofViewer
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = ConditioningError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| ConditioningError::UnknownVariant(s.to_string()))
    }
}

/// Scene geometry plus the ordered view pair being conditioned on.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneView {
    extrinsics: Vec<Pose>,
    depths: Vec<DepthMap>,
    fov: f64,
    input_index: usize,
    target_index: usize,
}

impl SceneView {
    /// `depths` is either empty or holds one map per view.
    pub fn new(
        extrinsics: Vec<Pose>,
        depths: Vec<DepthMap>,
        fov: f64,
        input_index: usize,
        target_index: usize,
    ) -> Result<Self, ConditioningError> {
        check_fov(fov)?;
        let len = extrinsics.len();
        for index in [input_index, target_index] {
            if index >= len {
                return Err(ConditioningError::IndexOutOfRange { index, len });
            }
        }
        if !depths.is_empty() && depths.len() != len {
            return Err(ConditioningError::DepthCountMismatch {
                views: len,
                depths: depths.len(),
            });
        }
        Ok(Self {
            extrinsics,
            depths,
            fov,
            input_index,
            target_index,
        })
    }

    pub fn extrinsics(&self) -> &[Pose] {
        &self.extrinsics
    }

    pub fn depths(&self) -> &[DepthMap] {
        &self.depths
    }

    pub fn fov(&self) -> f64 {
        self.fov
    }

    pub fn input_index(&self) -> usize {
        self.input_index
    }

    pub fn target_index(&self) -> usize {
        self.target_index
    }

    pub fn view_count(&self) -> usize {
        self.extrinsics.len()
    }

    /// Same scene, different view pair.
    pub fn with_pair(&self, input_index: usize, target_index: usize) -> Result<Self, ConditioningError> {
        Self::new(
            self.extrinsics.clone(),
            self.depths.clone(),
            self.fov,
            input_index,
            target_index,
        )
    }

    /// Applies `g` on the left of every extrinsic (a rigid move of the world).
    pub fn transformed(&self, g: &Pose) -> Self {
        Self {
            extrinsics: self.extrinsics.iter().map(|e| g.compose(e)).collect(),
            ..self.clone()
        }
    }

    /// Scales every camera translation and every depth by `lambda`.
    pub fn scaled(&self, lambda: f64) -> Result<Self, ConditioningError> {
        Ok(Self {
            extrinsics: self
                .extrinsics
                .iter()
                .map(|e| e.scale_translation(lambda))
                .collect::<Result<_, _>>()?,
            depths: self
                .depths
                .iter()
                .map(|d| d.scaled(lambda))
                .collect::<Result<_, _>>()?,
            ..self.clone()
        })
    }

    /// Appends a view; the pair indices are unchanged.
    pub fn with_extra_view(&self, pose: Pose, depth: Option<DepthMap>) -> Result<Self, ConditioningError> {
        let mut extrinsics = self.extrinsics.clone();
        extrinsics.push(pose);
        let mut depths = self.depths.clone();
        if let Some(d) = depth {
            depths.push(d);
        }
        Self::new(extrinsics, depths, self.fov, self.input_index, self.target_index)
    }

    fn relative(&self) -> Pose {
        relative_pose(
            &self.extrinsics[self.input_index],
            &self.extrinsics[self.target_index],
        )
    }

    /// Centroid of all camera centers.
    pub fn centroid(&self) -> Vector3<f64> {
        let sum: Vector3<f64> = self.extrinsics.iter().map(Pose::center).sum();
        sum / self.extrinsics.len() as f64
    }

    /// Mean distance of the camera centers to their centroid.
    pub fn camera_spread(&self) -> f64 {
        let c = self.centroid();
        self.extrinsics
            .iter()
            .map(|e| (e.center() - c).norm())
            .sum::<f64>()
            / self.extrinsics.len() as f64
    }
}

fn check_fov(f: f64) -> Result<(), ConditioningError> {
    if f > 0.0 && f < PI {
        Ok(())
    } else {
        Err(ConditioningError::FovOutOfRange(f))
    }
}

/// Output of a conditioning function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditioningVector {
    pub variant: Variant,
    pub entries: Vec<f64>,
}

impl ConditioningVector {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// The 4×4 relative pose block, for 6DoF variants.
    pub fn pose_block(&self) -> Option<&[f64]> {
        (self.variant != Variant::Zero123).then(|| &self.entries[..16])
    }

    /// The `[f, sin f, cos f]` tail, for 6DoF variants.
    pub fn fov_block(&self) -> Option<&[f64]> {
        (self.variant != Variant::Zero123).then(|| &self.entries[16..])
    }

    pub fn max_abs_diff(&self, other: &ConditioningVector) -> f64 {
        self.entries
            .iter()
            .zip(&other.entries)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Binary layout: variant tag (u8), entry count (u32 LE), then the
    /// entries as f32 LE.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(5 + 4 * self.entries.len());
        out.push(self.variant.tag());
        out.extend_from_slice(&(self.entries.len() as u32).to_le_bytes());
        for &v in &self.entries {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
        out
    }

    /// Decodes one vector, returning it with the number of bytes consumed.
    pub fn from_bytes(bytes: &[u8]) -> Result<(Self, usize), ConditioningError> {
        let (&tag, rest) = bytes
            .split_first()
            .ok_or(ConditioningError::Malformed("missing tag"))?;
        let variant = Variant::from_tag(tag).ok_or(ConditioningError::Malformed("unknown tag"))?;
        let len_bytes: [u8; 4] = rest
            .get(..4)
            .and_then(|b| b.try_into().ok())
            .ok_or(ConditioningError::Malformed("missing length"))?;
        let len = u32::from_le_bytes(len_bytes) as usize;
        if len != variant.len() {
            return Err(ConditioningError::Malformed("length does not match variant"));
        }
        let body = rest
            .get(4..4 + 4 * len)
            .ok_or(ConditioningError::Malformed("truncated entries"))?;
        let entries = body
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect();
        Ok((Self { variant, entries }, 5 + 4 * len))
    }
}

/// `[f, sin f, cos f]`.
pub fn fov_embedding(f: f64) -> Result<[f64; 3], ConditioningError> {
    check_fov(f)?;
    Ok([f, f.sin(), f.cos()])
}

fn sixdof_vector(variant: Variant, rel: &Pose, fov: f64) -> Result<ConditioningVector, ConditioningError> {
    let mut entries = Vec::with_capacity(SIXDOF_LEN);
    entries.extend_from_slice(&rel.to_row_major());
    entries.extend_from_slice(&fov_embedding(fov)?);
    Ok(ConditioningVector { variant, entries })
}

fn scaled_vector(variant: Variant, s: &SceneView, scale: f64) -> Result<ConditioningVector, ConditioningError> {
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(ConditioningError::InvalidScale(scale));
    }
    let rel = s.relative().scale_translation(1.0 / scale)?;
    sixdof_vector(variant, &rel, s.fov)
}

/// Difference of spherical coordinates `P(E_i) − P(E_j)` about `origin`
/// (the camera centroid when `None`). Azimuth difference wrapped to
/// `[-π, π)`; field of view is not included.
pub fn m_zero123(s: &SceneView, origin: Option<Vector3<f64>>) -> Result<ConditioningVector, ConditioningError> {
    let [d_elev, d_azim, d_rad] = zero123_raw_difference(s, origin)?;
    Ok(ConditioningVector {
        variant: Variant::Zero123,
        entries: vec![d_elev, wrap_angle(d_azim), d_rad],
    })
}

/// Unwrapped `P(E_i) − P(E_j)`.
pub fn zero123_raw_difference(s: &SceneView, origin: Option<Vector3<f64>>) -> Result<[f64; 3], ConditioningError> {
    let origin = origin.unwrap_or_else(|| s.centroid());
    let a = s.extrinsics[s.input_index].to_spherical(&origin)?;
    let b = s.extrinsics[s.target_index].to_spherical(&origin)?;
    Ok([
        a.elevation - b.elevation,
        a.azimuth - b.azimuth,
        a.radius - b.radius,
    ])
}

/// `[E_i⁻¹ E_j, f]` with no scale normalization.
pub fn m_6dof(s: &SceneView) -> Result<ConditioningVector, ConditioningError> {
    sixdof_vector(Variant::Sixdof, &s.relative(), s.fov)
}

/// Relative translation divided by the mean camera distance to the centroid.
pub fn m_6dof_norm(s: &SceneView) -> Result<ConditioningVector, ConditioningError> {
    if s.view_count() < 2 {
        return Err(ConditioningError::TooFewViews(s.view_count()));
    }
    let spread = s.camera_spread();
    if !(spread > 0.0) {
        return Err(ConditioningError::DegenerateScale);
    }
    scaled_vector(Variant::SixdofNorm, s, spread)
}

/// Relative translation divided by the aggregated scene depth scale.
pub fn m_6dof_agg(s: &SceneView) -> Result<ConditioningVector, ConditioningError> {
    m_6dof_agg_with(s, QuantileMethod::Linear)
}

pub fn m_6dof_agg_with(s: &SceneView, method: QuantileMethod) -> Result<ConditioningVector, ConditioningError> {
    if s.depths.is_empty() {
        return Err(ConditioningError::MissingDepth { view: 0 });
    }
    let q = depth::scene_scale_agg_with(&s.depths, method)?;
    scaled_vector(Variant::SixdofAgg, s, q)
}

/// Relative translation divided by the 20th percentile of the infilled
/// input-view depth. Other views never influence the result.
pub fn m_6dof_viewer(s: &SceneView, d_bar_i: &DepthMap) -> Result<ConditioningVector, ConditioningError> {
    m_6dof_viewer_with(s, d_bar_i, QuantileMethod::Linear)
}

pub fn m_6dof_viewer_with(
    s: &SceneView,
    d_bar_i: &DepthMap,
    method: QuantileMethod,
) -> Result<ConditioningVector, ConditioningError> {
    let q = depth::viewer_scale_with(d_bar_i, method)?;
    scaled_vector(Variant::SixdofViewer, s, q)
}

/// Viewer-centric vector with an externally chosen scale, as used at
/// inference when the input depth is unknown.
pub fn m_6dof_viewer_from_scale(s: &SceneView, q_i: f64) -> Result<ConditioningVector, ConditioningError> {
    scaled_vector(Variant::SixdofViewer, s, q_i)
}

/// Where the viewer-centric variant gets its scale from.
#[derive(Debug, Clone, Copy)]
pub enum ViewerDepth<'a> {
    /// Infilled depth of the input view.
    Infilled(&'a DepthMap),
    /// Heuristic scale.
    Scale(f64),
    /// Use the scene's depth map for the input view, which must be dense.
    FromScene,
}

/// Dispatches to the function for `variant`.
pub fn compute(
    variant: Variant,
    s: &SceneView,
    viewer: ViewerDepth<'_>,
    method: QuantileMethod,
) -> Result<ConditioningVector, ConditioningError> {
    match variant {
        Variant::Zero123 => m_zero123(s, None),
        Variant::Sixdof => m_6dof(s),
        Variant::SixdofNorm => m_6dof_norm(s),
        Variant::SixdofAgg => m_6dof_agg_with(s, method),
        Variant::SixdofViewer => match viewer {
            ViewerDepth::Infilled(d) => m_6dof_viewer_with(s, d, method),
            ViewerDepth::Scale(q) => m_6dof_viewer_from_scale(s, q),
            ViewerDepth::FromScene => {
                let d = s
                    .depths
                    .get(s.input_index)
                    .ok_or(ConditioningError::MissingDepth { view: s.input_index })?;
                m_6dof_viewer_with(s, d, method)
            }
        },
    }
}
