//! Full-reference image metrics: PSNR, SSIM and an LPIPS subprocess hook.
//!
//! Images are RGB with values in `[0, 1]`; the PSNR peak is fixed at 1.0.
//! SSIM uses an 11×11 Gaussian window (σ = 1.5, normalized), K1 = 0.01,
//! K2 = 0.03, evaluated at every position where the window fits entirely
//! inside the image, averaged per channel and then across channels.
//!
//! PSNR and SSIM are pixel-aligned: small geometric misalignment between a
//! plausible prediction and the reference lowers both scores sharply.

use std::path::Path;
use std::process::Command;

use thiserror::Error;

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("image shapes differ: {a:?} vs {b:?}")]
    ShapeMismatch { a: (usize, usize), b: (usize, usize) },
    #[error("image is {width}x{height}; SSIM needs at least {SSIM_WINDOW} pixels per side")]
    TooSmall { width: usize, height: usize },
    #[error("{len} values do not fill a {width}x{height} RGB image")]
    BadLength { width: usize, height: usize, len: usize },
    #[error("pixel value {0} is outside [0, 1]")]
    OutOfRange(f64),
    #[error("external metric command unavailable: {0}")]
    ExternalUnavailable(String),
    #[error("external metric command failed with {status}: {stderr}")]
    ExternalFailed { status: String, stderr: String },
    #[error("could not parse a number from external metric output {0:?}")]
    ParseFailure(String),
    #[error("image decode failed: {0}")]
    Decode(#[from] image::ImageError),
}

/// Interleaved RGB float image.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl Image {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self, MetricsError> {
        if data.len() != width * height * 3 {
            return Err(MetricsError::BadLength {
                width,
                height,
                len: data.len(),
            });
        }
        if let Some(&v) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(MetricsError::OutOfRange(v));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Result<Self, MetricsError> {
        Self::new(width, height, vec![value; width * height * 3])
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize, usize) -> f64) -> Result<Self, MetricsError> {
        let mut data = Vec::with_capacity(width * height * 3);
        for y in 0..height {
            for x in 0..width {
                for c in 0..3 {
                    data.push(f(x, y, c));
                }
            }
        }
        Self::new(width, height, data)
    }

    /// Converts 8-bit RGB by dividing by 255.
    pub fn from_rgb8(img: &image::RgbImage) -> Self {
        Self {
            width: img.width() as usize,
            height: img.height() as usize,
            data: img.as_raw().iter().map(|&v| v as f64 / 255.0).collect(),
        }
    }

    pub fn from_png_bytes(bytes: &[u8]) -> Result<Self, MetricsError> {
        let img = image::load_from_memory_with_format(bytes, image::ImageFormat::Png)?;
        Ok(Self::from_rgb8(&img.to_rgb8()))
    }

    pub fn open(path: &Path) -> Result<Self, MetricsError> {
        Ok(Self::from_rgb8(&image::open(path)?.to_rgb8()))
    }

    pub fn to_rgb8(&self) -> image::RgbImage {
        let raw = self
            .data
            .iter()
            .map(|&v| (v * 255.0).round().clamp(0.0, 255.0) as u8)
            .collect();
        image::RgbImage::from_raw(self.width as u32, self.height as u32, raw).expect("length checked")
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, x: usize, y: usize, c: usize) -> f64 {
        self.data[(y * self.width + x) * 3 + c]
    }

    fn channel(&self, c: usize) -> Vec<f64> {
        self.data.iter().skip(c).step_by(3).copied().collect()
    }

    fn check_same_shape(&self, other: &Image) -> Result<(), MetricsError> {
        if (self.width, self.height) != (other.width, other.height) {
            return Err(MetricsError::ShapeMismatch {
                a: (self.width, self.height),
                b: (other.width, other.height),
            });
        }
        Ok(())
    }
}

pub fn mse(a: &Image, b: &Image) -> Result<f64, MetricsError> {
    a.check_same_shape(b)?;
    let sum: f64 = a
        .data
        .iter()
        .zip(&b.data)
        .map(|(&x, &y)| {
            let d = x - y;
            d * d
        })
        .sum();
    Ok(sum / a.data.len().max(1) as f64)
}

/// Peak signal-to-noise ratio in dB; `f64::INFINITY` for identical images.
pub fn psnr(a: &Image, b: &Image) -> Result<f64, MetricsError> {
    let err = mse(a, b)?;
    if err == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (1.0 / err).log10())
}

fn gaussian_kernel() -> [f64; SSIM_WINDOW] {
    let r = (SSIM_WINDOW / 2) as f64;
    let mut k = [0.0; SSIM_WINDOW];
    for (i, w) in k.iter_mut().enumerate() {
        let x = i as f64 - r;
        *w = (-x * x / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let total: f64 = k.iter().sum();
    k.iter_mut().for_each(|w| *w /= total);
    k
}

/// Separable "valid" filtering: output is (w − 10) × (h − 10).
fn filter_valid(src: &[f64], w: usize, h: usize, k: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let ow = w - SSIM_WINDOW + 1;
    let oh = h - SSIM_WINDOW + 1;
    let mut rows = vec![0.0; ow * h];
    for y in 0..h {
        let line = &src[y * w..(y + 1) * w];
        for x in 0..ow {
            rows[y * ow + x] = k.iter().zip(&line[x..x + SSIM_WINDOW]).map(|(a, b)| a * b).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = k
                .iter()
                .enumerate()
                .map(|(i, kv)| kv * rows[(y + i) * ow + x])
                .sum();
        }
    }
    out
}

fn ssim_channel(a: &[f64], b: &[f64], w: usize, h: usize) -> f64 {
    let k = gaussian_kernel();
    let c1 = (SSIM_K1 * 1.0).powi(2);
    let c2 = (SSIM_K2 * 1.0).powi(2);
    let prod = |x: &[f64], y: &[f64]| -> Vec<f64> { x.iter().zip(y).map(|(p, q)| p * q).collect() };
    let mu_a = filter_valid(a, w, h, &k);
    let mu_b = filter_valid(b, w, h, &k);
    let aa = filter_valid(&prod(a, a), w, h, &k);
    let bb = filter_valid(&prod(b, b), w, h, &k);
    let ab = filter_valid(&prod(a, b), w, h, &k);
    let n = mu_a.len();
    let total: f64 = (0..n)
        .map(|i| {
            let (ma, mb) = (mu_a[i], mu_b[i]);
            let var_a = aa[i] - ma * ma;
            let var_b = bb[i] - mb * mb;
            let cov = ab[i] - ma * mb;
            ((2.0 * ma * mb + c1) * (2.0 * cov + c2))
                / ((ma * ma + mb * mb + c1) * (var_a + var_b + c2))
        })
        .sum();
    total / n as f64
}

/// Mean structural similarity, averaged over RGB channels.
pub fn ssim(a: &Image, b: &Image) -> Result<f64, MetricsError> {
    a.check_same_shape(b)?;
    if a.width < SSIM_WINDOW || a.height < SSIM_WINDOW {
        return Err(MetricsError::TooSmall {
            width: a.width,
            height: a.height,
        });
    }
    let per_channel: f64 = (0..3)
        .map(|c| ssim_channel(&a.channel(c), &b.channel(c), a.width, a.height))
        .sum();
    Ok(per_channel / 3.0)
}

/// Runs an external LPIPS scorer. `template` is split on whitespace after
/// substituting `{a}` and `{b}` with the image paths; the last number on
/// stdout is the score.
pub fn lpips_external(a: &Path, b: &Path, template: &str) -> Result<f64, MetricsError> {
    let args: Vec<String> = template
        .split_whitespace()
        .map(|tok| {
            tok.replace("{a}", &a.to_string_lossy())
                .replace("{b}", &b.to_string_lossy())
        })
        .collect();
    let (program, rest) = args
        .split_first()
        .ok_or_else(|| MetricsError::ExternalUnavailable("empty command template".into()))?;
    let output = Command::new(program).args(rest).output().map_err(|e| {
        MetricsError::ExternalUnavailable(format!("{program}: {e}"))
    })?;
    if !output.status.success() {
        return Err(MetricsError::ExternalFailed {
            status: output.status.to_string(),
            stderr: String::from_utf8_lossy(&output.stderr).trim().to_string(),
        });
    }
    let stdout = String::from_utf8_lossy(&output.stdout);
    stdout
        .split_whitespace()
        .rev()
        .find_map(|tok| tok.parse::<f64>().ok())
        .ok_or_else(|| MetricsError::ParseFailure(stdout.trim().to_string()))
}
