//! Sparse depth maps, quantile statistics and monocular-disparity infilling.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Depth assigned to infilled pixels whose aligned disparity is not positive.
pub const INFILL_DEPTH_FLOOR: f64 = 1e-4;

/// Percentile of the per-view near-depth statistic in the aggregated scale.
pub const AGG_VIEW_PERCENTILE: f64 = 5.0;
/// Percentile taken over the per-view statistics in the aggregated scale.
pub const AGG_SCENE_PERCENTILE: f64 = 10.0;
/// Percentile of the infilled input-view depth in the viewer-centric scale.
pub const VIEWER_PERCENTILE: f64 = 20.0;
/// Viewer scale assumed at inference time on DTU when no depth is known.
pub const DTU_VIEWER_SCALE: f64 = 0.7;
/// Depth downsampling factor applied before computing quantiles.
pub const QUANTILE_DOWNSAMPLE: usize = 4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DepthError {
    #[error("depth map has no valid pixels")]
    EmptyDepth,
    #[error("scene has no depth maps")]
    EmptyScene,
    #[error("depth map has {holes} invalid pixels; an infilled map is required")]
    NotInfilled { holes: usize },
    #[error("only {valid} overlapping valid pixels; at least 2 required")]
    InsufficientOverlap { valid: usize },
    #[error("predicted disparity is constant over the valid pixels")]
    SingularSystem,
    #[error("shape mismatch: {a:?} vs {b:?}")]
    ShapeMismatch { a: (usize, usize), b: (usize, usize) },
    #[error("{len} values do not fill a {width}x{height} grid")]
    BadLength { width: usize, height: usize, len: usize },
    #[error("pixel {index} is marked valid but holds {value}")]
    InvalidValue { index: usize, value: f64 },
    #[error("percentile {0} outside [0, 100]")]
    PercentileOutOfRange(f64),
}

/// How a percentile is read off the sorted valid values.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuantileMethod {
    /// Linear interpolation between order statistics at rank `k/100·(n−1)`.
    #[default]
    Linear,
    /// The smallest value whose rank covers `k` percent of the data.
    NearestRank,
}

/// A depth grid with a per-pixel validity mask. Valid pixels hold finite,
/// strictly positive depths; the values under invalid pixels are ignored.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    width: usize,
    height: usize,
    values: Vec<f64>,
    mask: Vec<bool>,
}

impl DepthMap {
    pub fn new(
        width: usize,
        height: usize,
        values: Vec<f64>,
        mask: Vec<bool>,
    ) -> Result<Self, DepthError> {
        let n = width * height;
        for len in [values.len(), mask.len()] {
            if len != n {
                return Err(DepthError::BadLength { width, height, len });
            }
        }
        if let Some((index, &value)) = values
            .iter()
            .enumerate()
            .find(|&(i, v)| mask[i] && !(v.is_finite() && *v > 0.0))
        {
            return Err(DepthError::InvalidValue { index, value });
        }
        Ok(Self {
            width,
            height,
            values,
            mask,
        })
    }

    /// A map where every pixel is valid.
    pub fn dense(width: usize, height: usize, values: Vec<f64>) -> Result<Self, DepthError> {
        let mask = vec![true; values.len()];
        Self::new(width, height, values, mask)
    }

    /// Builds a map from raw values, treating non-finite or non-positive
    /// entries as holes.
    pub fn from_raw(width: usize, height: usize, values: Vec<f64>) -> Result<Self, DepthError> {
        let mask = values.iter().map(|v| v.is_finite() && *v > 0.0).collect();
        Self::new(width, height, values, mask)
    }

    pub fn constant(width: usize, height: usize, value: f64) -> Result<Self, DepthError> {
        Self::dense(width, height, vec![value; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn get(&self, x: usize, y: usize) -> Option<f64> {
        let i = y * self.width + x;
        self.mask[i].then(|| self.values[i])
    }

    pub fn valid_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    pub fn is_dense(&self) -> bool {
        self.mask.iter().all(|&m| m)
    }

    pub fn valid_values(&self) -> impl Iterator<Item = f64> + '_ {
        self.values
            .iter()
            .zip(&self.mask)
            .filter_map(|(&v, &m)| m.then_some(v))
    }

    /// Multiplies every depth by `factor` (> 0).
    pub fn scaled(&self, factor: f64) -> Result<Self, DepthError> {
        Self::new(
            self.width,
            self.height,
            self.values.iter().map(|v| v * factor).collect(),
            self.mask.clone(),
        )
    }

    /// `k`-th percentile of the valid depths under linear interpolation.
    pub fn quantile(&self, k: f64) -> Result<f64, DepthError> {
        self.quantile_with(k, QuantileMethod::Linear)
    }

    pub fn quantile_with(&self, k: f64, method: QuantileMethod) -> Result<f64, DepthError> {
        let mut values: Vec<f64> = self.valid_values().collect();
        percentile(&mut values, k, method)
    }

    /// Keeps the top-left pixel of every `factor`×`factor` block.
    pub fn downsample(&self, factor: usize) -> DepthMap {
        let factor = factor.max(1);
        if factor == 1 {
            return self.clone();
        }
        let w = self.width.div_ceil(factor);
        let h = self.height.div_ceil(factor);
        let mut values = Vec::with_capacity(w * h);
        let mut mask = Vec::with_capacity(w * h);
        for y in (0..self.height).step_by(factor) {
            for x in (0..self.width).step_by(factor) {
                let i = y * self.width + x;
                values.push(self.values[i]);
                mask.push(self.mask[i]);
            }
        }
        DepthMap {
            width: w,
            height: h,
            values,
            mask,
        }
    }
}

/// Percentile of an unsorted sample. Sorts `values` in place.
pub fn percentile(values: &mut [f64], k: f64, method: QuantileMethod) -> Result<f64, DepthError> {
    if !(0.0..=100.0).contains(&k) {
        return Err(DepthError::PercentileOutOfRange(k));
    }
    if values.is_empty() {
        return Err(DepthError::EmptyDepth);
    }
    values.sort_unstable_by(f64::total_cmp);
    let n = values.len();
    Ok(match method {
        QuantileMethod::Linear => {
            let rank = k / 100.0 * (n - 1) as f64;
            let lo = rank.floor() as usize;
            let hi = (lo + 1).min(n - 1);
            let frac = rank - lo as f64;
            if frac == 0.0 {
                values[lo]
            } else {
                values[lo] + (values[hi] - values[lo]) * frac
            }
        }
        QuantileMethod::NearestRank => {
            let rank = (k / 100.0 * n as f64).ceil() as usize;
            values[rank.clamp(1, n) - 1]
        }
    })
}

/// Scene scale from aggregated near-depth statistics: the 10th percentile of
/// every map's 5th percentile.
pub fn scene_scale_agg(depths: &[DepthMap]) -> Result<f64, DepthError> {
    scene_scale_agg_with(depths, QuantileMethod::Linear)
}

pub fn scene_scale_agg_with(depths: &[DepthMap], method: QuantileMethod) -> Result<f64, DepthError> {
    if depths.is_empty() {
        return Err(DepthError::EmptyScene);
    }
    let mut per_view = depths
        .iter()
        .map(|d| d.quantile_with(AGG_VIEW_PERCENTILE, method))
        .collect::<Result<Vec<_>, _>>()?;
    percentile(&mut per_view, AGG_SCENE_PERCENTILE, method)
}

/// Viewer-centric scale: the 20th percentile of the infilled input-view depth.
pub fn viewer_scale(d_bar: &DepthMap) -> Result<f64, DepthError> {
    viewer_scale_with(d_bar, QuantileMethod::Linear)
}

pub fn viewer_scale_with(d_bar: &DepthMap, method: QuantileMethod) -> Result<f64, DepthError> {
    let holes = d_bar.mask.iter().filter(|&&m| !m).count();
    if holes == d_bar.mask.len() {
        return Err(DepthError::EmptyDepth);
    }
    if holes > 0 {
        return Err(DepthError::NotInfilled { holes });
    }
    d_bar.quantile_with(VIEWER_PERCENTILE, method)
}

/// Affine map from predicted disparity to metric disparity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaleShift {
    pub scale: f64,
    pub shift: f64,
}

impl ScaleShift {
    pub fn apply(&self, disparity: f64) -> f64 {
        self.scale * disparity + self.shift
    }

    /// A non-positive scale inverts depth ordering; callers may want to warn.
    pub fn is_order_preserving(&self) -> bool {
        self.scale > 0.0
    }
}

/// Least-squares scale and shift taking `predicted_disparity` to the inverse
/// of `sparse_gt_depth`, over pixels valid in both maps.
pub fn align_scale_shift(
    predicted_disparity: &DepthMap,
    sparse_gt_depth: &DepthMap,
) -> Result<ScaleShift, DepthError> {
    if predicted_disparity.shape() != sparse_gt_depth.shape() {
        return Err(DepthError::ShapeMismatch {
            a: predicted_disparity.shape(),
            b: sparse_gt_depth.shape(),
        });
    }
    let pairs = || {
        predicted_disparity
            .values
            .iter()
            .zip(&predicted_disparity.mask)
            .zip(sparse_gt_depth.values.iter().zip(&sparse_gt_depth.mask))
            .filter(|((_, &pm), (_, &gm))| pm && gm)
            .map(|((&p, _), (&g, _))| (p, 1.0 / g))
    };
    let n = pairs().count();
    if n < 2 {
        return Err(DepthError::InsufficientOverlap { valid: n });
    }
    // Centered normal equations for y = a·x + b.
    let nf = n as f64;
    let (sx, sy) = pairs().fold((0.0, 0.0), |(sx, sy), (x, y)| (sx + x, sy + y));
    let (mx, my) = (sx / nf, sy / nf);
    let (sxx, sxy) = pairs().fold((0.0, 0.0), |(sxx, sxy), (x, y)| {
        let dx = x - mx;
        (sxx + dx * dx, sxy + dx * (y - my))
    });
    let spread = pairs().map(|(x, _)| (x - mx).abs()).fold(0.0, f64::max);
    if sxx == 0.0 || spread <= f64::EPSILON * mx.abs() {
        return Err(DepthError::SingularSystem);
    }
    let scale = sxy / sxx;
    Ok(ScaleShift {
        scale,
        shift: my - scale * mx,
    })
}

/// A dense depth map produced by [`infill`], together with the fitted
/// alignment and the number of pixels that had to be clamped to
/// [`INFILL_DEPTH_FLOOR`].
#[derive(Debug, Clone, PartialEq)]
pub struct Infilled {
    pub depth: DepthMap,
    pub alignment: Option<ScaleShift>,
    pub clamped: usize,
}

impl Infilled {
    /// True when some hole received a non-positive aligned disparity.
    pub fn non_positive_fill(&self) -> bool {
        self.clamped > 0
    }
}

/// Fills the holes of `sparse` with `1 / (a·pred + b)`, where `(a, b)` aligns
/// the predicted disparity to the valid sparse depths. Valid pixels are kept
/// exactly. Dense inputs are returned unchanged without fitting.
pub fn infill(sparse: &DepthMap, predicted_disparity: &DepthMap) -> Result<Infilled, DepthError> {
    if sparse.shape() != predicted_disparity.shape() {
        return Err(DepthError::ShapeMismatch {
            a: sparse.shape(),
            b: predicted_disparity.shape(),
        });
    }
    if sparse.is_dense() {
        return Ok(Infilled {
            depth: sparse.clone(),
            alignment: None,
            clamped: 0,
        });
    }
    let alignment = align_scale_shift(predicted_disparity, sparse)?;
    let mut clamped = 0;
    let values = sparse
        .values
        .iter()
        .zip(&sparse.mask)
        .zip(&predicted_disparity.values)
        .map(|((&v, &valid), &pred)| {
            if valid {
                return v;
            }
            let depth = 1.0 / alignment.apply(pred);
            if depth.is_finite() && depth >= INFILL_DEPTH_FLOOR {
                depth
            } else {
                clamped += 1;
                INFILL_DEPTH_FLOOR
            }
        })
        .collect();
    Ok(Infilled {
        depth: DepthMap::dense(sparse.width, sparse.height, values)?,
        alignment: Some(alignment),
        clamped,
    })
}

/// Source of dense relative disparity for a view, such as a monocular depth
/// network. Output must match the requested shape.
pub trait DisparityPredictor {
    fn predict(&self, sparse: &DepthMap) -> DepthMap;
}

/// Deterministic stand-in predictor: an affine function of the true inverse
/// depth where known and of a smooth ramp elsewhere.
#[derive(Debug, Clone, Copy)]
pub struct SyntheticPredictor {
    pub scale: f64,
    pub shift: f64,
    pub fallback_disparity: f64,
}

impl Default for SyntheticPredictor {
    fn default() -> Self {
        Self {
            scale: 1.0,
            shift: 0.0,
            fallback_disparity: 0.5,
        }
    }
}

impl DisparityPredictor for SyntheticPredictor {
    fn predict(&self, sparse: &DepthMap) -> DepthMap {
        let (w, h) = sparse.shape();
        let values = (0..w * h)
            .map(|i| {
                let base = if sparse.mask[i] {
                    1.0 / sparse.values[i]
                } else {
                    let (x, y) = ((i % w) as f64, (i / w) as f64);
                    self.fallback_disparity * (1.0 + 0.1 * (x + y) / (w + h) as f64)
                };
                (base - self.shift) / self.scale
            })
            .collect();
        DepthMap::dense(w, h, values).expect("predictor output must be positive")
    }
}

/// Infills with a predictor and downsamples, ready for a viewer-scale query.
pub fn prepare_viewer_depth(
    sparse: &DepthMap,
    predictor: &dyn DisparityPredictor,
    downsample_factor: usize,
) -> Result<Infilled, DepthError> {
    let mut filled = infill(sparse, &predictor.predict(sparse))?;
    filled.depth = filled.depth.downsample(downsample_factor);
    Ok(filled)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn map(values: &[f64]) -> DepthMap {
        DepthMap::dense(values.len(), 1, values.to_vec()).unwrap()
    }

    #[test]
    fn constant_map_quantiles() {
        let d = DepthMap::constant(4, 3, 3.0).unwrap();
        for k in [0.0, 5.0, 20.0, 50.0, 100.0] {
            assert_eq!(d.quantile(k).unwrap(), 3.0);
        }
    }

    #[test]
    fn linear_quantile_one_to_hundred() {
        // Oracle: rank = 0.05·99 = 4.95, between 5 and 6 → 5 + 0.95.
        let d = map(&(1..=100).map(f64::from).collect::<Vec<_>>());
        assert_abs_diff_eq!(d.quantile(5.0).unwrap(), 5.95, epsilon = 1e-12);
        assert_eq!(d.quantile(0.0).unwrap(), 1.0);
        assert_eq!(d.quantile(100.0).unwrap(), 100.0);
        assert_eq!(d.quantile_with(5.0, QuantileMethod::NearestRank).unwrap(), 5.0);
    }

    #[test]
    fn quantile_errors() {
        let empty = DepthMap::new(2, 1, vec![0.0, 0.0], vec![false, false]).unwrap();
        assert_eq!(empty.quantile(5.0), Err(DepthError::EmptyDepth));
        assert_eq!(map(&[1.0]).quantile(101.0), Err(DepthError::PercentileOutOfRange(101.0)));
    }

    #[test]
    fn invalid_construction() {
        assert!(matches!(
            DepthMap::dense(2, 2, vec![1.0; 3]),
            Err(DepthError::BadLength { .. })
        ));
        assert!(matches!(
            DepthMap::dense(2, 1, vec![1.0, -1.0]),
            Err(DepthError::InvalidValue { index: 1, .. })
        ));
        let raw = DepthMap::from_raw(3, 1, vec![1.0, 0.0, f64::NAN]).unwrap();
        assert_eq!(raw.valid_count(), 1);
    }

    #[test]
    fn aggregated_scale() {
        assert_eq!(scene_scale_agg(&[DepthMap::constant(3, 3, 2.0).unwrap()]).unwrap(), 2.0);
        let maps: Vec<_> = [1.0, 2.0, 3.0]
            .iter()
            .map(|&c| DepthMap::constant(3, 3, c).unwrap())
            .collect();
        // Oracle: rank 0.1·2 = 0.2 → 1 + 0.2·(2 − 1).
        assert_abs_diff_eq!(scene_scale_agg(&maps).unwrap(), 1.2, epsilon = 1e-12);
        let mut more = maps.clone();
        more.push(DepthMap::constant(3, 3, 0.2).unwrap());
        // Oracle: sorted {0.2, 1, 2, 3}, rank 0.3 → 0.2 + 0.3·0.8.
        let extended = scene_scale_agg(&more).unwrap();
        assert_abs_diff_eq!(extended, 0.44, epsilon = 1e-12);
        assert_eq!(scene_scale_agg(&[]), Err(DepthError::EmptyScene));
    }

    #[test]
    fn viewer_scale_requires_dense() {
        assert_eq!(viewer_scale(&DepthMap::constant(5, 5, 0.7).unwrap()).unwrap(), 0.7);
        let holey = DepthMap::new(2, 1, vec![1.0, 0.0], vec![true, false]).unwrap();
        assert_eq!(viewer_scale(&holey), Err(DepthError::NotInfilled { holes: 1 }));
        let d = map(&[0.3, 4.0, 1.5, 2.2, 0.9]);
        assert_eq!(viewer_scale(&d).unwrap(), d.quantile(20.0).unwrap());
        assert_eq!(DTU_VIEWER_SCALE, 0.7);
    }

    fn affine_fixture(a: f64, b: f64) -> (DepthMap, DepthMap) {
        let pred: Vec<f64> = (0..20).map(|i| 0.2 + 0.05 * i as f64).collect();
        let gt: Vec<f64> = pred.iter().map(|p| 1.0 / (a * p + b)).collect();
        (
            DepthMap::dense(5, 4, pred).unwrap(),
            DepthMap::dense(5, 4, gt).unwrap(),
        )
    }

    #[test]
    fn alignment_recovers_exact_affine() {
        let (pred, gt) = affine_fixture(2.0, 0.1);
        let fit = align_scale_shift(&pred, &gt).unwrap();
        assert_abs_diff_eq!(fit.scale, 2.0, epsilon = 1e-9);
        assert_abs_diff_eq!(fit.shift, 0.1, epsilon = 1e-9);

        let (pred, gt) = affine_fixture(1.0, 0.0);
        let fit = align_scale_shift(&pred, &gt).unwrap();
        assert_abs_diff_eq!(fit.scale, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(fit.shift, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn alignment_errors() {
        let one = DepthMap::new(2, 1, vec![1.0, 1.0], vec![true, false]).unwrap();
        assert_eq!(
            align_scale_shift(&map(&[0.5, 0.7]), &one),
            Err(DepthError::InsufficientOverlap { valid: 1 })
        );
        assert_eq!(
            align_scale_shift(&map(&[0.5, 0.5, 0.5]), &map(&[1.0, 2.0, 3.0])),
            Err(DepthError::SingularSystem)
        );
        assert!(matches!(
            align_scale_shift(&map(&[0.5]), &map(&[1.0, 2.0])),
            Err(DepthError::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn alignment_beats_grid_of_alternatives() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let pred: Vec<f64> = (0..50).map(|_| rng.random_range(0.1..2.0)).collect();
        let gt: Vec<f64> = pred
            .iter()
            .map(|p| 1.0 / (1.5 * p + 0.3 + rng.random_range(-0.05..0.05)))
            .collect();
        let (pm, gm) = (map(&pred), map(&gt));
        let fit = align_scale_shift(&pm, &gm).unwrap();
        let residual = |a: f64, b: f64| -> f64 {
            pred.iter().zip(&gt).map(|(p, g)| (a * p + b - 1.0 / g).powi(2)).sum()
        };
        let best = residual(fit.scale, fit.shift);
        for ia in 0..=40 {
            for ib in 0..=40 {
                let a = 0.5 + 0.05 * ia as f64;
                let b = -0.5 + 0.025 * ib as f64;
                assert!(best <= residual(a, b) + 1e-12);
            }
        }
    }

    #[test]
    fn infill_cases() {
        let dense = DepthMap::constant(3, 3, 2.0).unwrap();
        let out = infill(&dense, &DepthMap::constant(3, 3, 1.0).unwrap()).unwrap();
        assert_eq!(out.depth, dense);
        assert!(out.alignment.is_none());

        let (pred, gt) = affine_fixture(2.0, 0.1);
        let mut mask = vec![true; 20];
        mask[7] = false;
        let mut values = gt.values().to_vec();
        values[7] = 0.0;
        let sparse = DepthMap::new(5, 4, values, mask).unwrap();
        let out = infill(&sparse, &pred).unwrap();
        assert!(out.depth.is_dense());
        assert_abs_diff_eq!(out.depth.values()[7], gt.values()[7], epsilon = 1e-9);
        for i in (0..20).filter(|&i| i != 7) {
            assert_eq!(out.depth.values()[i].to_bits(), gt.values()[i].to_bits());
        }
        assert!(!out.non_positive_fill());
    }

    #[test]
    fn infill_clamps_non_positive_disparity() {
        // gt disparity = pred − 0.5; the hole's pred of 0.1 maps below zero.
        let pred = map(&[1.0, 2.0, 3.0, 0.1]);
        let sparse = DepthMap::new(
            4,
            1,
            vec![2.0, 1.0 / 1.5, 0.4, 0.0],
            vec![true, true, true, false],
        )
        .unwrap();
        let out = infill(&sparse, &pred).unwrap();
        assert_eq!(out.clamped, 1);
        assert!(out.non_positive_fill());
        assert_eq!(out.depth.values()[3], INFILL_DEPTH_FLOOR);
    }

    #[test]
    fn downsample_cases() {
        let d = DepthMap::from_raw(3, 2, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        assert_eq!(d.downsample(1), d);
        let c = DepthMap::constant(8, 8, 1.5).unwrap().downsample(4);
        assert_eq!(c.shape(), (2, 2));
        assert!(c.valid_values().all(|v| v == 1.5));
        let odd = DepthMap::constant(9, 5, 1.0).unwrap().downsample(4);
        assert_eq!(odd.shape(), (3, 2));
        let sparse = DepthMap::new(2, 2, vec![0.0, 1.0, 1.0, 1.0], vec![false, true, true, true]).unwrap();
        assert_eq!(sparse.downsample(2).valid_count(), 0);
    }

    #[test]
    fn downsampled_quantile_tracks_full_resolution() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..20 {
            let (w, h) = (128, 96);
            let (fx, fy, phase) = (
                rng.random_range(0.01..0.08),
                rng.random_range(0.01..0.08),
                rng.random_range(0.0..6.0),
            );
            let values = (0..w * h)
                .map(|i| {
                    let (x, y) = ((i % w) as f64, (i / w) as f64);
                    3.0 + (fx * x + phase).sin() + 0.5 * (fy * y).cos() + rng.random_range(-0.05..0.05)
                })
                .collect();
            let d = DepthMap::dense(w, h, values).unwrap();
            let full = d.quantile(20.0).unwrap();
            let small = d.downsample(QUANTILE_DOWNSAMPLE).quantile(20.0).unwrap();
            assert!((small - full).abs() <= 0.05 * full, "{small} vs {full}");
        }
    }

    #[test]
    fn prepare_viewer_depth_is_dense_and_downsampled() {
        let mut values: Vec<f64> = (0..64).map(|i| 1.0 + 0.1 * i as f64).collect();
        values[5] = 0.0;
        let sparse = DepthMap::from_raw(8, 8, values).unwrap();
        let out = prepare_viewer_depth(&sparse, &SyntheticPredictor::default(), 4).unwrap();
        assert_eq!(out.depth.shape(), (2, 2));
        assert!(viewer_scale(&out.depth).is_ok());
    }

    proptest! {
        #[test]
        fn quantile_scale_equivariant(
            vals in prop::collection::vec(0.01f64..100.0, 1..64),
            k in 0.0f64..=100.0,
            lambda in 0.01f64..100.0,
        ) {
            let d = map(&vals);
            let q = d.quantile(k).unwrap();
            let qs = d.scaled(lambda).unwrap().quantile(k).unwrap();
            prop_assert!((qs - lambda * q).abs() <= 1e-12 * lambda * q.max(1.0));
        }

        #[test]
        fn quantile_monotone_and_permutation_invariant(
            vals in prop::collection::vec(0.01f64..100.0, 1..64),
            k1 in 0.0f64..=100.0,
            k2 in 0.0f64..=100.0,
            seed in any::<u64>(),
        ) {
            let d = map(&vals);
            let (lo, hi) = if k1 <= k2 { (k1, k2) } else { (k2, k1) };
            prop_assert!(d.quantile(lo).unwrap() <= d.quantile(hi).unwrap());
            let mut shuffled = vals.clone();
            use rand::seq::SliceRandom;
            shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            prop_assert_eq!(d.quantile(k1).unwrap(), map(&shuffled).quantile(k1).unwrap());
        }

        #[test]
        fn infill_idempotent_on_dense(vals in prop::collection::vec(0.01f64..10.0, 4..32)) {
            let d = map(&vals);
            let once = infill(&d, &d).unwrap().depth;
            prop_assert_eq!(&once, &d);
            prop_assert_eq!(infill(&once, &d).unwrap().depth, once);
        }
    }
}
