//! Scene preprocessing: square crops with matching intrinsics, field of
//! view, automatic elevation, PCA pose standardization and the world-scale
//! grid search used when evaluating zero-shot methods.

use image::{imageops, RgbImage};
use nalgebra::{Matrix3, SymmetricEigen, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::depth::DepthMap;
use crate::geometry::Pose;

/// Side length of the square training crops.
pub const TRAIN_SIZE: u32 = 256;
/// DTU evaluation resolution (width, height).
pub const DTU_EVAL_SIZE: (u32, u32) = (400, 300);

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PreprocessError {
    #[error("crop {target} exceeds image size {width}x{height}")]
    TargetTooLarge { target: u32, width: u32, height: u32 },
    #[error("focal lengths must be positive (fx={fx}, fy={fy})")]
    InvalidFocal { fx: f64, fy: f64 },
    #[error("no candidate scales to search")]
    EmptyCandidates,
    #[error("camera centers are collinear or coincident")]
    DegenerateConfiguration,
    #[error("output size must be positive")]
    ZeroSize,
}

/// Pinhole intrinsics in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl Intrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: u32, height: u32) -> Result<Self, PreprocessError> {
        if !(fx > 0.0 && fy > 0.0) {
            return Err(PreprocessError::InvalidFocal { fx, fy });
        }
        Ok(Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        })
    }

    /// Centered principal point, equal focal lengths.
    pub fn centered(focal: f64, width: u32, height: u32) -> Result<Self, PreprocessError> {
        Self::new(focal, focal, width as f64 / 2.0, height as f64 / 2.0, width, height)
    }

    /// Unit ray through pixel `(u, v)` in camera coordinates.
    pub fn ray(&self, u: f64, v: f64) -> Vector3<f64> {
        Vector3::new((u - self.cx) / self.fx, (v - self.cy) / self.fy, 1.0).normalize()
    }
}

/// Pixel offset of a centered `target`×`target` crop.
pub fn crop_offset(width: u32, height: u32, target: u32) -> (u32, u32) {
    ((width - target) / 2, (height - target) / 2)
}

/// Intrinsics after cropping the centered `target`×`target` square.
pub fn center_crop(intr: &Intrinsics, target: u32) -> Result<Intrinsics, PreprocessError> {
    if target > intr.width.min(intr.height) {
        return Err(PreprocessError::TargetTooLarge {
            target,
            width: intr.width,
            height: intr.height,
        });
    }
    let (ox, oy) = crop_offset(intr.width, intr.height, target);
    Ok(Intrinsics {
        cx: intr.cx - ox as f64,
        cy: intr.cy - oy as f64,
        width: target,
        height: target,
        ..*intr
    })
}

/// Intrinsics after resizing a square image to `size`×`size`.
pub fn resize_square(intr: &Intrinsics, size: u32) -> Result<Intrinsics, PreprocessError> {
    if size == 0 {
        return Err(PreprocessError::ZeroSize);
    }
    let sx = size as f64 / intr.width as f64;
    let sy = size as f64 / intr.height as f64;
    Ok(Intrinsics {
        fx: intr.fx * sx,
        fy: intr.fy * sy,
        cx: intr.cx * sx,
        cy: intr.cy * sy,
        width: size,
        height: size,
    })
}

/// Largest centered square, resized to `size`.
pub fn square_crop_resize(intr: &Intrinsics, size: u32) -> Result<Intrinsics, PreprocessError> {
    resize_square(&center_crop(intr, intr.width.min(intr.height))?, size)
}

/// Geometry of fitting an image into a fixed canvas without distortion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Letterbox {
    pub scale: f64,
    pub scaled: (u32, u32),
    pub pad: (u32, u32),
    pub canvas: (u32, u32),
}

pub fn letterbox_layout(width: u32, height: u32, out_w: u32, out_h: u32) -> Result<Letterbox, PreprocessError> {
    if out_w == 0 || out_h == 0 || width == 0 || height == 0 {
        return Err(PreprocessError::ZeroSize);
    }
    let scale = (out_w as f64 / width as f64).min(out_h as f64 / height as f64);
    let sw = ((width as f64 * scale).round() as u32).clamp(1, out_w);
    let sh = ((height as f64 * scale).round() as u32).clamp(1, out_h);
    Ok(Letterbox {
        scale,
        scaled: (sw, sh),
        pad: ((out_w - sw) / 2, (out_h - sh) / 2),
        canvas: (out_w, out_h),
    })
}

pub fn letterbox_intrinsics(intr: &Intrinsics, layout: &Letterbox) -> Intrinsics {
    let sx = layout.scaled.0 as f64 / intr.width as f64;
    let sy = layout.scaled.1 as f64 / intr.height as f64;
    Intrinsics {
        fx: intr.fx * sx,
        fy: intr.fy * sy,
        cx: intr.cx * sx + layout.pad.0 as f64,
        cy: intr.cy * sy + layout.pad.1 as f64,
        width: layout.canvas.0,
        height: layout.canvas.1,
    }
}

/// Horizontal field of view, `2·atan(width / 2fx)`.
pub fn fov_from_intrinsics(intr: &Intrinsics) -> f64 {
    2.0 * (intr.width as f64 / (2.0 * intr.fx)).atan()
}

/// Angle between the camera's viewing direction and the plane orthogonal
/// to `world_up`; negative when looking down.
pub fn elevation_from_pose(e: &Pose, world_up: &Vector3<f64>) -> f64 {
    e.forward().dot(world_up).clamp(-1.0, 1.0).asin()
}

/// World scales 0.3, 0.4, …, 1.5.
pub fn default_scale_candidates() -> Vec<f64> {
    (3..=15).map(|i| i as f64 / 10.0).collect()
}

/// Candidate with the lowest score; ties go to the smaller scale.
pub fn world_scale_grid(candidates: &[f64], mut score_fn: impl FnMut(f64) -> f64) -> Result<f64, PreprocessError> {
    let mut sorted = candidates.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut best: Option<(f64, f64)> = None;
    for c in sorted {
        let score = score_fn(c);
        match best {
            Some((_, s)) if !(score < s) => {}
            _ => best = Some((c, score)),
        }
    }
    best.map(|(c, _)| c).ok_or(PreprocessError::EmptyCandidates)
}

/// Result of PCA standardization.
#[derive(Debug, Clone)]
pub struct Standardized {
    /// Rigid transform applied on the left of every input pose.
    pub transform: Pose,
    pub poses: Vec<Pose>,
}

/// Rigidly moves the camera set so the centroid is at the origin and the
/// principal axes of the centers align with world x, y, z (largest spread
/// on x, smallest on z). The z sign is chosen so the average camera up
/// vector points to +z. No scaling is applied.
pub fn standardize_poses(extrinsics: &[Pose]) -> Result<Standardized, PreprocessError> {
    if extrinsics.len() < 3 {
        return Err(PreprocessError::DegenerateConfiguration);
    }
    let n = extrinsics.len() as f64;
    let centroid: Vector3<f64> = extrinsics.iter().map(Pose::center).sum::<Vector3<f64>>() / n;
    let cov = extrinsics.iter().fold(Matrix3::zeros(), |acc, e| {
        let d = e.center() - centroid;
        acc + d * d.transpose()
    }) / n;
    let eig = SymmetricEigen::new(cov);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let (l0, l1) = (eig.eigenvalues[order[0]], eig.eigenvalues[order[1]]);
    if !(l0 > 0.0) || l1 <= 1e-12 * l0 {
        return Err(PreprocessError::DegenerateConfiguration);
    }
    let mut x: Vector3<f64> = eig.eigenvectors.column(order[0]).into_owned();
    let y: Vector3<f64> = eig.eigenvectors.column(order[1]).into_owned();
    // Deterministic sign for x: its largest component is positive.
    if x.iter().copied().fold(0.0f64, |m, v| if v.abs() > m.abs() { v } else { m }) < 0.0 {
        x = -x;
    }
    let mut y = (y - x * x.dot(&y)).normalize();
    let mut z = x.cross(&y);
    let mean_up: Vector3<f64> = extrinsics.iter().map(Pose::up).sum();
    if mean_up.dot(&z) < 0.0 {
        y = -y;
        z = -z;
    }
    let rotation = Matrix3::from_rows(&[x.transpose(), y.transpose(), z.transpose()]);
    let transform = Pose::new(rotation, -(rotation * centroid)).map_err(|_| PreprocessError::DegenerateConfiguration)?;
    let poses = extrinsics.iter().map(|e| transform.compose(e)).collect();
    Ok(Standardized { transform, poses })
}

/// Center-crops the largest square and resizes it to `size`.
pub fn square_crop_resize_image(img: &RgbImage, size: u32) -> RgbImage {
    let side = img.width().min(img.height());
    let (ox, oy) = crop_offset(img.width(), img.height(), side);
    let cropped = imageops::crop_imm(img, ox, oy, side, side).to_image();
    if side == size {
        cropped
    } else {
        imageops::resize(&cropped, size, size, imageops::FilterType::Triangle)
    }
}

pub fn letterbox_image(img: &RgbImage, layout: &Letterbox) -> RgbImage {
    let resized = imageops::resize(img, layout.scaled.0, layout.scaled.1, imageops::FilterType::Triangle);
    let mut canvas = RgbImage::new(layout.canvas.0, layout.canvas.1);
    imageops::replace(&mut canvas, &resized, layout.pad.0 as i64, layout.pad.1 as i64);
    canvas
}

/// Letterboxes a depth map by nearest neighbour; padding is invalid.
pub fn letterbox_depth(d: &DepthMap, layout: &Letterbox) -> DepthMap {
    let (cw, ch) = (layout.canvas.0 as usize, layout.canvas.1 as usize);
    let (sw, sh) = (layout.scaled.0 as usize, layout.scaled.1 as usize);
    let (px, py) = (layout.pad.0 as usize, layout.pad.1 as usize);
    let mut values = vec![0.0; cw * ch];
    let mut mask = vec![false; cw * ch];
    for y in py..py + sh {
        for x in px..px + sw {
            let sx = (((x - px) as f64 + 0.5) * d.width() as f64 / sw as f64) as usize;
            let sy = (((y - py) as f64 + 0.5) * d.height() as f64 / sh as f64) as usize;
            let i = sy.min(d.height() - 1) * d.width() + sx.min(d.width() - 1);
            values[y * cw + x] = d.values()[i];
            mask[y * cw + x] = d.mask()[i];
        }
    }
    DepthMap::new(cw, ch, values, mask).expect("resampled from a valid map")
}

/// Same crop as [`square_crop_resize_image`] for a depth map, resampled by
/// nearest neighbour so the validity mask is carried along.
pub fn square_crop_resize_depth(d: &DepthMap, size: u32) -> DepthMap {
    let (w, h) = (d.width() as u32, d.height() as u32);
    let side = w.min(h);
    let (ox, oy) = crop_offset(w, h, side);
    let size = size.max(1) as usize;
    let mut values = Vec::with_capacity(size * size);
    let mut mask = Vec::with_capacity(size * size);
    for y in 0..size {
        for x in 0..size {
            let sx = ox as usize + ((x as f64 + 0.5) * side as f64 / size as f64) as usize;
            let sy = oy as usize + ((y as f64 + 0.5) * side as f64 / size as f64) as usize;
            let i = sy * d.width() + sx;
            values.push(d.values()[i]);
            mask.push(d.mask()[i]);
        }
    }
    DepthMap::new(size, size, values, mask).expect("resampled from a valid map")
}
