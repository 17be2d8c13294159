use std::f64::consts::PI;

use nalgebra::{Rotation3, Vector3};
use rand::Rng;

use crate::dataset::{DepthGrid, SceneRecord, ViewRecord, CAMERA_TO_WORLD};
use crate::depth::{DepthMap, QuantileMethod};
use crate::geometry::Pose;

pub(crate) fn random_pose(rng: &mut impl Rng) -> Pose {
    let axis = Vector3::new(
        rng.random_range(-1.0..1.0),
        rng.random_range(-1.0..1.0),
        rng.random_range(-1.0..1.0),
    );
    let angle = rng.random_range(-PI..PI);
    let rot = Rotation3::from_scaled_axis(axis.normalize() * angle);
    let t = Vector3::new(
        rng.random_range(-5.0..5.0),
        rng.random_range(-5.0..5.0),
        rng.random_range(-5.0..5.0),
    );
    Pose::from_rotation(rot, t)
}

/// Small random scene with sparse depth and opaque image bytes.
pub(crate) fn synthetic_scene(id: &str, views: usize, rng: &mut impl Rng) -> SceneRecord {
    let views = (0..views)
        .map(|_| {
            let (w, h) = (rng.random_range(1..6), rng.random_range(1..6));
            let values: Vec<f64> = (0..w * h).map(|_| rng.random_range(0.5..20.0)).collect();
            let mask: Vec<bool> = (0..w * h).map(|_| rng.random_bool(0.7)).collect();
            let depth = DepthMap::new(w, h, values, mask).unwrap();
            let pose: Pose = random_pose(rng);
            ViewRecord {
                image_png: (0..rng.random_range(0..40)).map(|_| rng.random()).collect(),
                depth: DepthGrid::from_depth_map(&depth),
                pose: ViewRecord::pose_from(&pose),
            }
        })
        .collect();
    SceneRecord {
        scene_id: id.to_string(),
        source: "synthetic".into(),
        convention: CAMERA_TO_WORLD.into(),
        fov: rng.random_range(0.2..2.0),
        intrinsics: None,
        content_scale: Some(rng.random_range(0.1..3.0)),
        quantile: QuantileMethod::Linear,
        views,
    }
}
