//! Deterministic quarter-resolution descriptors.
//!
//! A descriptor is a square grid of samples from a Gaussian-smoothed copy of
//! the image, centered on the cell center. Samples are taken in order of
//! distance from the center, so a shorter descriptor keeps the inner part of
//! the grid. Samples that fall outside the frame are zero, the rest have
//! their mean removed, and the vector is L2-normalized. Flat patches stay
//! exactly zero.
//!
//! Zeroing out-of-frame samples instead of clamping keeps border cells
//! comparable with their interior matches: the shared part of the footprint
//! still correlates.

use crate::error::{Error, Result};
use crate::grid::{ensure_divisible_by_4, idx, Image};

/// Default descriptor length: a full 9x9 sample grid.
pub const DEFAULT_DIM: usize = 81;
/// Largest supported descriptor length.
pub const MAX_DIM: usize = 256;

/// Descriptor norm below which a block counts as flat.
const FLAT_NORM: f64 = 1e-6;


/// Per-pixel descriptors on the quarter-resolution grid.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    h: usize,
    w: usize,
    dim: usize,
    data: Vec<f64>,
}

impl FeatureMap {
    /// Builds a feature map; every descriptor must be unit-norm or zero.
    pub fn new(h: usize, w: usize, dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 || data.len() != h * w * dim {
            return Err(Error::DimensionMismatch(format!(
                "feature map {h}x{w}x{dim} needs {} values, got {}",
                h * w * dim,
                data.len()
            )));
        }
        for (i, d) in data.chunks_exact(dim).enumerate() {
            if d.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite(format!("descriptor {i}")));
            }
            let norm = d.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm != 0.0 && (norm - 1.0).abs() > 1e-6 {
                return Err(Error::ValueOutOfRange(format!("descriptor {i} has norm {norm}")));
            }
        }
        Ok(Self { h, w, dim, data })
    }

    pub fn h(&self) -> usize {
        self.h
    }
    pub fn w(&self) -> usize {
        self.w
    }
    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn descriptor(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    #[inline]
    pub fn at(&self, u: usize, v: usize) -> &[f64] {
        self.descriptor(idx(u, v, self.w))
    }
}

/// Tunable parameters of the extractor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureParams {
    /// Gaussian pre-smoothing, in full-resolution pixels.
    pub blur_sigma: f64,
    /// Distance between neighboring samples, in full-resolution pixels.
    pub spacing: f64,
}

impl Default for FeatureParams {
    fn default() -> Self {
        Self { blur_sigma: 2.0, spacing: 3.5 }
    }
}

impl FeatureParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.blur_sigma >= 0.0 && self.blur_sigma.is_finite()) {
            return Err(Error::InvalidConfig(format!("blur_sigma {} must be finite and >= 0", self.blur_sigma)));
        }
        if !(self.spacing > 0.0 && self.spacing.is_finite()) {
            return Err(Error::InvalidConfig(format!("spacing {} must be finite and > 0", self.spacing)));
        }
        Ok(())
    }
}

/// Separable Gaussian blur with replicated borders.
fn gaussian_blur(src: &[f64], width: usize, height: usize, sigma: f64) -> Vec<f64> {
    if sigma <= 0.0 {
        return src.to_vec();
    }
    let r = (3.0 * sigma).ceil() as isize;
    let kernel: Vec<f64> = (-r..=r).map(|k| (-((k * k) as f64) / (2.0 * sigma * sigma)).exp()).collect();
    let norm: f64 = kernel.iter().sum();
    let kernel: Vec<f64> = kernel.iter().map(|k| k / norm).collect();
    let mut tmp = vec![0.0; src.len()];
    for y in 0..height {
        for x in 0..width {
            let mut acc = 0.0;
            for (j, k) in kernel.iter().enumerate() {
                let xx = (x as isize + j as isize - r).clamp(0, width as isize - 1) as usize;
                acc += k * src[idx(xx, y, width)];
            }
            tmp[idx(x, y, width)] = acc;
        }
    }
    let mut out = vec![0.0; src.len()];
    for y in 0..height {
        for x in 0..width {
            let mut acc = 0.0;
            for (j, k) in kernel.iter().enumerate() {
                let yy = (y as isize + j as isize - r).clamp(0, height as isize - 1) as usize;
                acc += k * tmp[idx(x, yy, width)];
            }
            out[idx(x, y, width)] = acc;
        }
    }
    out
}

/// Bilinear sample; `None` outside the image.
fn sample(img: &[f64], width: usize, height: usize, x: f64, y: f64) -> Option<f64> {
    if !(x >= 0.0 && y >= 0.0 && x <= (width - 1) as f64 && y <= (height - 1) as f64) {
        return None;
    }
    let (x0, y0) = (x.floor() as usize, y.floor() as usize);
    let (x1, y1) = ((x0 + 1).min(width - 1), (y0 + 1).min(height - 1));
    let (fx, fy) = (x - x0 as f64, y - y0 as f64);
    let top = img[idx(x0, y0, width)] * (1.0 - fx) + img[idx(x1, y0, width)] * fx;
    let bottom = img[idx(x0, y1, width)] * (1.0 - fx) + img[idx(x1, y1, width)] * fx;
    Some(top * (1.0 - fy) + bottom * fy)
}

/// Sample offsets in grid units, nearest to the center first.
fn sample_offsets(dim: usize) -> Vec<(f64, f64)> {
    let n = (dim as f64).sqrt().ceil() as usize;
    let c = (n as f64 - 1.0) / 2.0;
    let mut offs: Vec<(f64, f64)> =
        (0..n * n).map(|k| ((k % n) as f64 - c, (k / n) as f64 - c)).collect();
    // Stable sort keeps row-major order among equal distances.
    offs.sort_by(|a, b| (a.0 * a.0 + a.1 * a.1).total_cmp(&(b.0 * b.0 + b.1 * b.1)));
    offs.truncate(dim);
    offs
}

/// Extracts `dim`-channel descriptors (1..=256) at quarter resolution.
pub fn extract_features(image: &Image, dim: usize) -> Result<FeatureMap> {
    extract_features_with(image, dim, &FeatureParams::default())
}

/// [`extract_features`] with explicit parameters.
pub fn extract_features_with(image: &Image, dim: usize, params: &FeatureParams) -> Result<FeatureMap> {
    if dim == 0 || dim > MAX_DIM {
        return Err(Error::InvalidConfig(format!("feature dim {dim} must be in 1..={MAX_DIM}")));
    }
    params.validate()?;
    let (width, height) = (image.width(), image.height());
    ensure_divisible_by_4(width, height)?;
    let blurred = gaussian_blur(&image.to_gray(), width, height, params.blur_sigma);
    let (w, h) = (width / 4, height / 4);
    let offsets: Vec<(f64, f64)> =
        sample_offsets(dim).into_iter().map(|(a, b)| (a * params.spacing, b * params.spacing)).collect();

    let mut data = Vec::with_capacity(w * h * dim);
    let mut vals: Vec<Option<f64>> = Vec::with_capacity(dim);
    for v in 0..h {
        for u in 0..w {
            let (cx, cy) = (4.0 * u as f64 + 1.5, 4.0 * v as f64 + 1.5);
            vals.clear();
            vals.extend(offsets.iter().map(|(dx, dy)| sample(&blurred, width, height, cx + dx, cy + dy)));
            let inside = vals.iter().flatten().count().max(1) as f64;
            let mean = vals.iter().flatten().sum::<f64>() / inside;
            let centered = vals.iter().map(|x| x.map_or(0.0, |x| x - mean));
            let norm = centered.clone().map(|x| x * x).sum::<f64>().sqrt();
            if norm < FLAT_NORM {
                data.extend(std::iter::repeat_n(0.0, dim));
            } else {
                data.extend(centered.map(|x| x / norm));
            }
        }
    }
    Ok(FeatureMap { h, w, dim, data })
}
