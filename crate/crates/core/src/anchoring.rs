//! Distillation planning with SDS anchoring.
//!
//! Before score distillation starts, a few novel views are sampled with the
//! guidance model at azimuths spread evenly around the input view. During
//! distillation each step draws a camera, decides whether the guidance comes
//! from the input view or from the anchor nearest the camera, and picks a
//! maximum noise level. Anchor guidance is only applied where the rendered
//! depth exceeds a threshold, so foreground content stays tied to the input.
//!
//! The SDS gradient itself is not computed here; [`distill_plan`] produces
//! the per-step decisions for an external trainer.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::conditioning::{m_6dof_viewer_from_scale, ConditioningError, ConditioningVector, SceneView};
use crate::depth::DepthMap;
use crate::geometry::{wrap_angle, GeometryError, Pose, Spherical};
use crate::metrics::Image;

pub type BoxError = Box<dyn std::error::Error + Send + Sync>;

#[derive(Debug, Error)]
pub enum AnchorError {
    #[error("anchor {0} has no sampled image")]
    UnfilledPlan(usize),
    #[error("anchor {0} already holds a sampled image")]
    AlreadyFilled(usize),
    #[error("guidance model failed on anchor {anchor}: {source}")]
    GuidanceFailure {
        anchor: usize,
        #[source]
        source: BoxError,
    },
    #[error("step {step} outside schedule of {total} steps")]
    StepOutOfRange { step: usize, total: usize },
    #[error("invalid config field `{field}`: {reason}")]
    InvalidConfig { field: &'static str, reason: String },
    #[error(transparent)]
    Conditioning(#[from] ConditioningError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

fn invalid(field: &'static str, reason: impl Into<String>) -> AnchorError {
    AnchorError::InvalidConfig {
        field,
        reason: reason.into(),
    }
}

/// A diffusion model conditioned on an input image and a camera vector.
pub trait GuidanceModel {
    /// Draws a novel view, e.g. with DDIM. Must be deterministic in `seed`.
    fn sample(
        &self,
        input: &Image,
        conditioning: &ConditioningVector,
        steps: usize,
        guidance_scale: f64,
        seed: u64,
    ) -> Result<Image, BoxError>;

    /// Score-like update for a noisy render, one value per image channel.
    fn score(&self, noisy: &Image, conditioning: &ConditioningVector, noise_level: f64) -> Result<Vec<f64>, BoxError>;
}

/// Deterministic stand-in model: images are a pure function of the
/// conditioning entries and the seed.
#[derive(Debug, Clone, Copy)]
pub struct MockGuidance {
    pub size: usize,
}

impl Default for MockGuidance {
    fn default() -> Self {
        Self { size: 16 }
    }
}

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

fn conditioning_hash(c: &ConditioningVector, seed: u64) -> u64 {
    c.entries
        .iter()
        .fold(splitmix(seed ^ c.variant.tag() as u64), |h, v| splitmix(h ^ v.to_bits()))
}

impl GuidanceModel for MockGuidance {
    fn sample(
        &self,
        input: &Image,
        conditioning: &ConditioningVector,
        steps: usize,
        guidance_scale: f64,
        seed: u64,
    ) -> Result<Image, BoxError> {
        let h = conditioning_hash(conditioning, seed ^ steps as u64 ^ guidance_scale.to_bits());
        let mean = input.data().iter().sum::<f64>() / input.data().len().max(1) as f64;
        let img = Image::from_fn(self.size, self.size, |x, y, c| {
            let v = splitmix(h ^ ((y * self.size + x) * 3 + c) as u64);
            0.5 * mean + 0.5 * (v >> 11) as f64 / (1u64 << 53) as f64
        })?;
        Ok(img)
    }

    fn score(&self, noisy: &Image, conditioning: &ConditioningVector, noise_level: f64) -> Result<Vec<f64>, BoxError> {
        let bias = (conditioning_hash(conditioning, 0) >> 11) as f64 / (1u64 << 53) as f64;
        Ok(noisy.data().iter().map(|v| (v - bias) * noise_level).collect())
    }
}

/// The user-provided view that distillation starts from.
#[derive(Debug, Clone)]
pub struct InputView {
    pub image: Arc<Image>,
    pub pose: Pose,
    pub fov: f64,
    /// Viewer-centric scale used for conditioning vectors.
    pub scale: f64,
}

impl InputView {
    /// Conditioning of `target` relative to `source`, at the input's scale.
    pub fn conditioning(&self, source: &Pose, target: &Pose) -> Result<ConditioningVector, ConditioningError> {
        let view = SceneView::new(vec![*source, *target], vec![], self.fov, 0, 1)?;
        m_6dof_viewer_from_scale(&view, self.scale)
    }
}

/// Distance used to find the anchor closest to a camera.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceMetric {
    /// Angle of the relative rotation between the two cameras.
    #[default]
    Geodesic,
    /// Euclidean distance between camera centers.
    Center,
}

impl DistanceMetric {
    pub fn distance(self, a: &Pose, b: &Pose) -> f64 {
        match self {
            DistanceMetric::Geodesic => a.geodesic_distance(b),
            DistanceMetric::Center => (a.center() - b.center()).norm(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Anchor {
    /// Azimuth offset from the input view, degrees in `(0, 360)`.
    pub offset_degrees: f64,
    /// Absolute azimuth in radians, wrapped to `[-π, π)`.
    pub azimuth: f64,
    pub pose: Pose,
    pub image: Option<Arc<Image>>,
}

#[derive(Debug, Clone)]
pub struct AnchorPlan {
    pub anchors: Vec<Anchor>,
    pub gating_threshold: f64,
    pub anchor_probability: f64,
    pub metric: DistanceMetric,
    pub seed: u64,
}

impl AnchorPlan {
    pub fn new(
        anchors: Vec<Anchor>,
        gating_threshold: f64,
        anchor_probability: f64,
        metric: DistanceMetric,
        seed: u64,
    ) -> Result<Self, AnchorError> {
        if !(gating_threshold > 0.0) {
            return Err(invalid("gating_threshold", "must be positive"));
        }
        if !(0.0..=1.0).contains(&anchor_probability) {
            return Err(invalid("anchor_probability", "must lie in [0, 1]"));
        }
        for (i, a) in anchors.iter().enumerate() {
            for b in &anchors[..i] {
                if wrap_angle(a.azimuth - b.azimuth).abs() < 1e-12 {
                    return Err(invalid("anchors", "azimuths must be distinct"));
                }
            }
        }
        Ok(Self {
            anchors,
            gating_threshold,
            anchor_probability,
            metric,
            seed,
        })
    }

    pub fn is_filled(&self) -> bool {
        self.anchors.iter().all(|a| a.image.is_some())
    }

    /// Index of the anchor closest to `target`; ties resolve to the lower
    /// azimuth offset.
    pub fn nearest_anchor(&self, target: &Pose) -> Option<usize> {
        let mut best: Option<(usize, f64, f64)> = None;
        for (i, a) in self.anchors.iter().enumerate() {
            let d = self.metric.distance(&a.pose, target);
            let better = match best {
                None => true,
                Some((_, bd, boff)) => d < bd || (d == bd && a.offset_degrees < boff),
            };
            if better {
                best = Some((i, d, a.offset_degrees));
            }
        }
        best.map(|(i, _, _)| i)
    }
}

/// `k` anchor cameras at azimuth offsets `m·360°/(k+1)`, `m = 1..=k`, from
/// the input camera, each at `radius` and `elevation` looking at `origin`.
pub fn make_anchor_poses(
    input_pose: &Pose,
    k: usize,
    radius: f64,
    elevation: f64,
    origin: &Vector3<f64>,
) -> Result<Vec<Anchor>, AnchorError> {
    let input_azimuth = input_pose.to_spherical(origin)?.azimuth;
    (1..=k)
        .map(|m| {
            let offset_degrees = 360.0 * m as f64 / (k + 1) as f64;
            let azimuth = wrap_angle(input_azimuth + offset_degrees.to_radians());
            let eye = Spherical::new(elevation, azimuth, radius)?.to_cartesian() + origin;
            let pose = Pose::look_at(eye, *origin, Vector3::z())?;
            Ok(Anchor {
                offset_degrees,
                azimuth,
                pose,
                image: None,
            })
        })
        .collect()
}

/// Fills every anchor slot with a view sampled from the model, conditioned
/// on the input view.
pub fn sample_anchors(
    model: &dyn GuidanceModel,
    input: &InputView,
    plan: &AnchorPlan,
    ddim_steps: usize,
    guidance_scale: f64,
) -> Result<AnchorPlan, AnchorError> {
    let mut filled = plan.clone();
    for (index, anchor) in filled.anchors.iter_mut().enumerate() {
        if anchor.image.is_some() {
            return Err(AnchorError::AlreadyFilled(index));
        }
        let cond = input.conditioning(&input.pose, &anchor.pose)?;
        let seed = splitmix(plan.seed ^ index as u64);
        let image = model
            .sample(&input.image, &cond, ddim_steps, guidance_scale, seed)
            .map_err(|source| AnchorError::GuidanceFailure { anchor: index, source })?;
        anchor.image = Some(Arc::new(image));
    }
    Ok(filled)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GuidanceKind {
    InputView,
    Anchor,
}

/// The view whose image conditions the guidance model at a step.
#[derive(Debug, Clone)]
pub struct GuidanceSource {
    pub kind: GuidanceKind,
    /// Anchor index for anchor sources.
    pub index: Option<usize>,
    pub image: Arc<Image>,
    pub pose: Pose,
    /// Target camera relative to this source.
    pub conditioning: ConditioningVector,
}

/// Flips the anchor coin; on success returns the anchor nearest the target,
/// otherwise the input view. One uniform draw is consumed per call.
pub fn select_guidance(
    plan: &AnchorPlan,
    input: &InputView,
    target_pose: &Pose,
    rng: &mut impl Rng,
) -> Result<GuidanceSource, AnchorError> {
    if let Some(i) = plan.anchors.iter().position(|a| a.image.is_none()) {
        return Err(AnchorError::UnfilledPlan(i));
    }
    let coin: f64 = rng.random();
    let use_anchor = coin < plan.anchor_probability;
    match plan.nearest_anchor(target_pose).filter(|_| use_anchor) {
        Some(index) => {
            let anchor = &plan.anchors[index];
            Ok(GuidanceSource {
                kind: GuidanceKind::Anchor,
                index: Some(index),
                image: anchor.image.clone().expect("checked filled"),
                pose: anchor.pose,
                conditioning: input.conditioning(&anchor.pose, target_pose)?,
            })
        }
        None => Ok(GuidanceSource {
            kind: GuidanceKind::InputView,
            index: None,
            image: input.image.clone(),
            pose: input.pose,
            conditioning: input.conditioning(&input.pose, target_pose)?,
        }),
    }
}

/// Pixels that receive guidance. Anchor guidance only reaches pixels whose
/// rendered depth exceeds `threshold`; input-view guidance reaches all.
pub fn depth_gate(render_depth: &DepthMap, kind: GuidanceKind, threshold: f64) -> Vec<bool> {
    match kind {
        GuidanceKind::InputView => vec![true; render_depth.values().len()],
        GuidanceKind::Anchor => render_depth
            .values()
            .iter()
            .zip(render_depth.mask())
            .map(|(&d, &valid)| valid && d > threshold)
            .collect(),
    }
}

/// Maximum-noise schedule with slower decay away from the input view.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseSchedule {
    pub total_steps: usize,
    pub max_noise_start: f64,
    pub max_noise_end: f64,
    /// Extra multiplier reached directly opposite the input view.
    pub anisotropy: f64,
}

impl Default for NoiseSchedule {
    fn default() -> Self {
        Self {
            total_steps: 10_000,
            max_noise_start: 0.98,
            max_noise_end: 0.025,
            anisotropy: 1.0,
        }
    }
}

impl NoiseSchedule {
    pub fn validate(&self) -> Result<(), AnchorError> {
        if self.total_steps == 0 {
            return Err(invalid("noise.total_steps", "must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.max_noise_end) || !(0.0..=1.0).contains(&self.max_noise_start) {
            return Err(invalid("noise.max_noise_start", "noise levels must lie in [0, 1]"));
        }
        if self.max_noise_end > self.max_noise_start {
            return Err(invalid("noise.max_noise_end", "must not exceed max_noise_start"));
        }
        if !(self.anisotropy >= 0.0) {
            return Err(invalid("noise.anisotropy", "must be non-negative"));
        }
        Ok(())
    }

    /// Isotropic level, interpolated linearly from start to end.
    pub fn base(&self, step: usize) -> f64 {
        if self.total_steps <= 1 {
            return self.max_noise_end;
        }
        let t = step as f64 / (self.total_steps - 1) as f64;
        self.max_noise_start * (1.0 - t) + self.max_noise_end * t
    }

    /// `1 + β·(1 − cos offset)/2`: 1 at the input azimuth, `1 + β` opposite.
    pub fn anisotropy_factor(&self, angular_offset: f64) -> f64 {
        1.0 + self.anisotropy * (1.0 - angular_offset.cos()) / 2.0
    }
}

pub fn noise_level(schedule: &NoiseSchedule, step: usize, target_angular_offset: f64) -> Result<f64, AnchorError> {
    if step >= schedule.total_steps {
        return Err(AnchorError::StepOutOfRange {
            step,
            total: schedule.total_steps,
        });
    }
    let level = schedule.base(step) * schedule.anisotropy_factor(target_angular_offset.abs().min(PI));
    Ok(level.min(1.0))
}

/// Camera sampling window that widens over training.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProgressiveSampling {
    /// Half-width of the azimuth window at step 0, degrees.
    pub start_azimuth_half_width_deg: f64,
    /// Half-width of the elevation window at step 0, degrees.
    pub start_elevation_half_width_deg: f64,
    /// Elevation limits, degrees.
    pub elevation_range_deg: [f64; 2],
}

impl Default for ProgressiveSampling {
    fn default() -> Self {
        Self {
            start_azimuth_half_width_deg: 30.0,
            start_elevation_half_width_deg: 5.0,
            elevation_range_deg: [-10.0, 40.0],
        }
    }
}

impl ProgressiveSampling {
    pub fn validate(&self) -> Result<(), AnchorError> {
        if !(0.0..=180.0).contains(&self.start_azimuth_half_width_deg) {
            return Err(invalid("progressive.start_azimuth_half_width_deg", "must lie in [0, 180]"));
        }
        if !(self.start_elevation_half_width_deg >= 0.0) {
            return Err(invalid("progressive.start_elevation_half_width_deg", "must be non-negative"));
        }
        let [lo, hi] = self.elevation_range_deg;
        if !(lo <= hi && lo >= -90.0 && hi <= 90.0) {
            return Err(invalid("progressive.elevation_range_deg", "must be ordered within [-90, 90]"));
        }
        Ok(())
    }

    /// Azimuth and elevation half-widths (radians) at `step`.
    pub fn windows(&self, step: usize, total_steps: usize) -> (f64, f64) {
        let t = if total_steps <= 1 {
            1.0
        } else {
            (step as f64 / (total_steps - 1) as f64).min(1.0)
        };
        let az0 = self.start_azimuth_half_width_deg.to_radians();
        let el0 = self.start_elevation_half_width_deg.to_radians();
        let [lo, hi] = self.elevation_range_deg;
        let el_full = (hi - lo).to_radians().max(el0);
        (az0 + (PI - az0) * t, el0 + (el_full - el0) * t)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct CameraSample {
    pub pose: Pose,
    /// Azimuth relative to the input camera, in `[-π, π)`.
    pub azimuth_offset: f64,
    pub elevation: f64,
}

/// Draws a training camera at `input`'s radius looking at `origin`.
pub fn progressive_camera(
    step: usize,
    total_steps: usize,
    sampling: &ProgressiveSampling,
    input: &Spherical,
    origin: &Vector3<f64>,
    rng: &mut impl Rng,
) -> Result<CameraSample, AnchorError> {
    let (az_half, el_half) = sampling.windows(step, total_steps);
    let offset = if az_half > 0.0 {
        rng.random_range(-az_half..az_half)
    } else {
        0.0
    };
    let [lo, hi] = sampling.elevation_range_deg.map(f64::to_radians);
    let center = input.elevation.clamp(lo, hi);
    let (el_lo, el_hi) = ((center - el_half).max(lo), (center + el_half).min(hi));
    let elevation = if el_hi > el_lo {
        rng.random_range(el_lo..=el_hi)
    } else {
        el_lo
    };
    let azimuth = wrap_angle(input.azimuth + offset);
    let eye = Spherical::new(elevation, azimuth, input.radius)?.to_cartesian() + origin;
    Ok(CameraSample {
        pose: Pose::look_at(eye, *origin, Vector3::z())?,
        azimuth_offset: wrap_angle(offset),
        elevation,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Stage {
    /// First step of this stage.
    pub start_step: usize,
    pub resolution: u32,
    pub batch: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InputCamera {
    pub radius: f64,
    pub elevation_deg: f64,
    pub azimuth_deg: f64,
    pub fov_deg: f64,
}

impl Default for InputCamera {
    fn default() -> Self {
        Self {
            radius: 2.0,
            elevation_deg: 0.0,
            azimuth_deg: 0.0,
            fov_deg: 52.0,
        }
    }
}

/// Everything [`distill_plan`] needs. Defaults are the standard settings
/// where one exists.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlanConfig {
    pub seed: u64,
    pub total_steps: usize,
    pub anchoring: bool,
    pub num_anchors: usize,
    pub anchor_probability: f64,
    pub gating_threshold: f64,
    pub distance_metric: DistanceMetric,
    pub ddim_steps: usize,
    pub guidance_scale: f64,
    /// Viewer-centric depth scale assumed for the input image.
    pub viewer_scale: f64,
    pub max_noise_start: f64,
    pub max_noise_end: f64,
    pub anisotropy: f64,
    pub input_camera: InputCamera,
    pub progressive: ProgressiveSampling,
    pub stages: Vec<Stage>,
}

impl Default for PlanConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            total_steps: 10_000,
            anchoring: true,
            num_anchors: 2,
            anchor_probability: 0.5,
            gating_threshold: 1.0,
            distance_metric: DistanceMetric::Geodesic,
            ddim_steps: 500,
            guidance_scale: 3.0,
            viewer_scale: crate::depth::DTU_VIEWER_SCALE,
            max_noise_start: 0.98,
            max_noise_end: 0.025,
            anisotropy: 1.0,
            input_camera: InputCamera::default(),
            progressive: ProgressiveSampling::default(),
            stages: vec![
                Stage {
                    start_step: 0,
                    resolution: 128,
                    batch: 6,
                },
                Stage {
                    start_step: 5_000,
                    resolution: 256,
                    batch: 1,
                },
            ],
        }
    }
}

impl PlanConfig {
    pub fn noise_schedule(&self) -> NoiseSchedule {
        NoiseSchedule {
            total_steps: self.total_steps,
            max_noise_start: self.max_noise_start,
            max_noise_end: self.max_noise_end,
            anisotropy: self.anisotropy,
        }
    }

    pub fn validate(&self) -> Result<(), AnchorError> {
        if self.total_steps == 0 {
            return Err(invalid("total_steps", "must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.anchor_probability) {
            return Err(invalid("anchor_probability", "must lie in [0, 1]"));
        }
        if !(self.gating_threshold > 0.0) {
            return Err(invalid("gating_threshold", "must be positive"));
        }
        if self.ddim_steps == 0 {
            return Err(invalid("ddim_steps", "must be at least 1"));
        }
        if !(self.guidance_scale > 0.0) {
            return Err(invalid("guidance_scale", "must be positive"));
        }
        if !(self.viewer_scale > 0.0) {
            return Err(invalid("viewer_scale", "must be positive"));
        }
        let cam = &self.input_camera;
        if !(cam.radius > 0.0) {
            return Err(invalid("input_camera.radius", "must be positive"));
        }
        if !(cam.fov_deg > 0.0 && cam.fov_deg < 180.0) {
            return Err(invalid("input_camera.fov_deg", "must lie in (0, 180)"));
        }
        self.noise_schedule().validate()?;
        self.progressive.validate()?;
        match self.stages.first() {
            None => return Err(invalid("stages", "at least one stage is required")),
            Some(s) if s.start_step != 0 => return Err(invalid("stages", "first stage must start at step 0")),
            _ => {}
        }
        if self.stages.windows(2).any(|w| w[1].start_step <= w[0].start_step) {
            return Err(invalid("stages", "start steps must be strictly increasing"));
        }
        if self.stages.iter().any(|s| s.resolution == 0 || s.batch == 0) {
            return Err(invalid("stages", "resolution and batch must be positive"));
        }
        Ok(())
    }

    fn stage_at(&self, step: usize) -> (usize, &Stage) {
        self.stages
            .iter()
            .enumerate()
            .rev()
            .find(|(_, s)| s.start_step <= step)
            .expect("validated: first stage starts at 0")
    }

    pub fn input_spherical(&self) -> Result<Spherical, AnchorError> {
        let c = &self.input_camera;
        Ok(Spherical::new(c.elevation_deg.to_radians(), c.azimuth_deg.to_radians(), c.radius)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnchorRecord {
    pub index: usize,
    pub offset_deg: f64,
    pub azimuth: f64,
    pub pose: Vec<f64>,
}

/// First line of a serialized plan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanHeader {
    pub format: String,
    pub version: u32,
    pub config: PlanConfig,
    pub input_pose: Vec<f64>,
    pub anchors: Vec<AnchorRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub stage: usize,
    pub pose: Vec<f64>,
    pub azimuth_offset: f64,
    pub elevation: f64,
    pub guidance: GuidanceKind,
    pub source_index: Option<usize>,
    pub gate_threshold: Option<f64>,
    pub noise_level: f64,
    pub resolution: u32,
    pub batch: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistillPlan {
    pub header: PlanHeader,
    pub steps: Vec<StepRecord>,
}

pub const PLAN_FORMAT: &str = "condkit-plan";
pub const PLAN_VERSION: u32 = 1;

impl DistillPlan {
    /// Header line followed by one JSON record per step.
    pub fn to_ndjson(&self) -> String {
        let mut out = serde_json::to_string(&self.header).expect("plan header serializes");
        out.push('\n');
        for s in &self.steps {
            out.push_str(&serde_json::to_string(s).expect("step serializes"));
            out.push('\n');
        }
        out
    }

    pub fn from_ndjson(text: &str) -> Result<Self, serde_json::Error> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header: PlanHeader = serde_json::from_str(lines.next().unwrap_or(""))?;
        let steps = lines.map(serde_json::from_str).collect::<Result<_, _>>()?;
        Ok(Self { header, steps })
    }
}

/// Builds the full per-step schedule. Anchor images are drawn from
/// [`MockGuidance`], so the plan is a dry run of the decision logic.
pub fn distill_plan(config: &PlanConfig) -> Result<DistillPlan, AnchorError> {
    distill_plan_with(config, &MockGuidance::default())
}

pub fn distill_plan_with(config: &PlanConfig, model: &dyn GuidanceModel) -> Result<DistillPlan, AnchorError> {
    config.validate()?;
    let origin = Vector3::zeros();
    let input_sph = config.input_spherical()?;
    let input_pose = Pose::look_at(input_sph.to_cartesian(), origin, Vector3::z())?;
    let input = InputView {
        image: Arc::new(Image::filled(16, 16, 0.5).expect("valid constant image")),
        pose: input_pose,
        fov: config.input_camera.fov_deg.to_radians(),
        scale: config.viewer_scale,
    };
    let k = if config.anchoring { config.num_anchors } else { 0 };
    let anchors = make_anchor_poses(&input_pose, k, input_sph.radius, input_sph.elevation, &origin)?;
    let probability = if config.anchoring { config.anchor_probability } else { 0.0 };
    let plan = AnchorPlan::new(anchors, config.gating_threshold, probability, config.distance_metric, config.seed)?;
    let plan = sample_anchors(model, &input, &plan, config.ddim_steps, config.guidance_scale)?;

    let schedule = config.noise_schedule();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut steps = Vec::with_capacity(config.total_steps);
    for step in 0..config.total_steps {
        let cam = progressive_camera(step, config.total_steps, &config.progressive, &input_sph, &origin, &mut rng)?;
        let source = select_guidance(&plan, &input, &cam.pose, &mut rng)?;
        let (stage_index, stage) = config.stage_at(step);
        steps.push(StepRecord {
            step,
            stage: stage_index,
            pose: cam.pose.to_row_major().to_vec(),
            azimuth_offset: cam.azimuth_offset,
            elevation: cam.elevation,
            guidance: source.kind,
            source_index: source.index,
            gate_threshold: (source.kind == GuidanceKind::Anchor).then_some(plan.gating_threshold),
            noise_level: noise_level(&schedule, step, cam.azimuth_offset)?,
            resolution: stage.resolution,
            batch: stage.batch,
        });
    }
    let header = PlanHeader {
        format: PLAN_FORMAT.to_string(),
        version: PLAN_VERSION,
        config: config.clone(),
        input_pose: input_pose.to_row_major().to_vec(),
        anchors: plan
            .anchors
            .iter()
            .enumerate()
            .map(|(index, a)| AnchorRecord {
                index,
                offset_deg: a.offset_degrees,
                azimuth: a.azimuth,
                pose: a.pose.to_row_major().to_vec(),
            })
            .collect(),
    };
    Ok(DistillPlan { header, steps })
}
