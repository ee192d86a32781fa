//! Convex 3x3 upsampling from quarter to full resolution.

use crate::error::{Error, Result};
use crate::grid::{idx, FlowField, MapKind, Scale, UnitMap};

/// Tolerance on the unit sum of each weight vector.
pub const CONVEX_TOL: f64 = 1e-6;

/// Nine convex weights per full-resolution pixel over the 3x3 coarse
/// neighborhood of its parent cell, ordered row-major from `(-1, -1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct UpsampleWeights {
    coarse_w: usize,
    coarse_h: usize,
    data: Vec<f64>,
}

impl UpsampleWeights {
    /// Wraps externally produced weights (for example from a learned head).
    pub fn new(coarse_w: usize, coarse_h: usize, data: Vec<f64>) -> Result<Self> {
        let n = 16 * coarse_w * coarse_h * 9;
        if data.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "upsample weights for {coarse_w}x{coarse_h} need {n} values, got {}",
                data.len()
            )));
        }
        let w = Self { coarse_w, coarse_h, data };
        w.check_convex()?;
        Ok(w)
    }

    /// Bilinear interpolation written as 3x3 convex weights. Coarse cell `c`
    /// is centered on full-res coordinate `4c + 1.5`.
    pub fn bilinear(coarse_w: usize, coarse_h: usize) -> Self {
        let axis = |r: usize| -> [f64; 3] {
            let d = (r as f64 - 1.5) / 4.0;
            [(-d).max(0.0), 1.0 - d.abs(), d.max(0.0)]
        };
        let (fw, fh) = (4 * coarse_w, 4 * coarse_h);
        let mut data = Vec::with_capacity(fw * fh * 9);
        for y in 0..fh {
            let ay = axis(y % 4);
            for x in 0..fw {
                let ax = axis(x % 4);
                for wy in ay {
                    for wx in ax {
                        data.push(wy * wx);
                    }
                }
            }
        }
        Self { coarse_w, coarse_h, data }
    }

    /// All weight on the parent cell: nearest-neighbor upsampling.
    pub fn nearest(coarse_w: usize, coarse_h: usize) -> Self {
        let n = 16 * coarse_w * coarse_h;
        let mut data = vec![0.0; n * 9];
        for k in 0..n {
            data[k * 9 + 4] = 1.0;
        }
        Self { coarse_w, coarse_h, data }
    }

    pub fn coarse_w(&self) -> usize {
        self.coarse_w
    }
    pub fn coarse_h(&self) -> usize {
        self.coarse_h
    }

    #[inline]
    pub fn at(&self, pixel: usize) -> &[f64] {
        &self.data[pixel * 9..pixel * 9 + 9]
    }

    fn check_convex(&self) -> Result<()> {
        for (pixel, w) in self.data.chunks_exact(9).enumerate() {
            let sum: f64 = w.iter().sum();
            if w.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) || (sum - 1.0).abs() > CONVEX_TOL {
                return Err(Error::WeightNotConvex { pixel });
            }
        }
        Ok(())
    }
}

/// Grids that can be convexly upsampled from quarter to full resolution.
pub trait Upsample: Sized {
    fn convex_upsample(&self, weights: &UpsampleWeights) -> Result<Self>;
}

fn check_input(w: usize, h: usize, scale: Scale, weights: &UpsampleWeights) -> Result<()> {
    if scale != Scale::Quarter {
        return Err(Error::DimensionMismatch("convex upsampling expects a quarter-resolution grid".into()));
    }
    if weights.coarse_w != w || weights.coarse_h != h {
        return Err(Error::DimensionMismatch(format!(
            "weights for {}x{} applied to a {w}x{h} grid",
            weights.coarse_w, weights.coarse_h
        )));
    }
    weights.check_convex()
}

/// Applies the weights to `channels` interleaved channels of a coarse grid.
fn upsample_channels(coarse: &[f64], w: usize, h: usize, channels: usize, weights: &UpsampleWeights) -> Vec<f64> {
    let (fw, fh) = (4 * w, 4 * h);
    let mut out = Vec::with_capacity(fw * fh * channels);
    for y in 0..fh {
        let cy = y / 4;
        for x in 0..fw {
            let cx = x / 4;
            let wts = weights.at(idx(x, y, fw));
            // Accumulate offsets from the parent value so constant
            // neighborhoods reproduce the constant exactly.
            let parent = idx(cx, cy, w) * channels;
            let mut acc = [0.0f64; 2];
            let mut k = 0;
            for dy in -1isize..=1 {
                let ny = (cy as isize + dy).clamp(0, h as isize - 1) as usize;
                for dx in -1isize..=1 {
                    let nx = (cx as isize + dx).clamp(0, w as isize - 1) as usize;
                    let base = idx(nx, ny, w) * channels;
                    for c in 0..channels {
                        acc[c] += wts[k] * (coarse[base + c] - coarse[parent + c]);
                    }
                    k += 1;
                }
            }
            for c in 0..channels {
                out.push(coarse[parent + c] + acc[c]);
            }
        }
    }
    out
}

impl Upsample for FlowField {
    /// Upsamples and converts quarter-res cells to full-res pixels (x4).
    fn convex_upsample(&self, weights: &UpsampleWeights) -> Result<Self> {
        check_input(self.width(), self.height(), self.scale(), weights)?;
        let mut data = upsample_channels(self.data(), self.width(), self.height(), 2, weights);
        for x in &mut data {
            *x *= 4.0;
        }
        Ok(FlowField::from_raw(4 * self.width(), 4 * self.height(), Scale::Full, data))
    }
}

impl<K: MapKind> Upsample for UnitMap<K> {
    fn convex_upsample(&self, weights: &UpsampleWeights) -> Result<Self> {
        check_input(self.width(), self.height(), self.scale(), weights)?;
        let data = upsample_channels(self.data(), self.width(), self.height(), 1, weights)
            .into_iter()
            .map(|x| x.clamp(0.0, 1.0))
            .collect();
        Ok(UnitMap::from_raw(4 * self.width(), 4 * self.height(), Scale::Full, data))
    }
}

/// Free-function form of [`Upsample::convex_upsample`].
pub fn convex_upsample<T: Upsample>(field: &T, weights: &UpsampleWeights) -> Result<T> {
    field.convex_upsample(weights)
}
