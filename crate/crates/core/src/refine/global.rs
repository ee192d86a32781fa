//! Confidence-gated global flow correction.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::features::FeatureMap;
use crate::grid::{ensure_same_shape, idx, ConfidenceMap, FlowField, Scale};

use super::RefineConfig;

/// Produces a replacement flow field from features, confidence and flow.
///
/// The output must have the same dimensions as the input flow and be finite.
pub trait Aggregator: Sync {
    fn aggregate(&self, g1: &FeatureMap, conf: &ConfidenceMap, flow: &FlowField) -> Result<FlowField>;
}

/// Reference aggregator: repeated confidence-weighted neighborhood averaging
/// with a spatial Gaussian, confidence held fixed.
///
/// Each pass moves a pixel toward its neighbors by
/// `sum(c_n * w_n * (F_n - F_p)) / (sum(c_n * w_n) + eps)`, which is the
/// normalized weighted average with the guard term acting as a tiny self
/// weight. A pixel without confident neighbors keeps its value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiffusionAggregator {
    pub passes: usize,
    pub radius: usize,
    pub sigma: f64,
    pub eps: f64,
}

impl Default for DiffusionAggregator {
    fn default() -> Self {
        Self { passes: 8, radius: 1, sigma: 1.0, eps: 1e-8 }
    }
}

impl From<&RefineConfig> for DiffusionAggregator {
    fn from(cfg: &RefineConfig) -> Self {
        Self {
            passes: cfg.diffusion_passes,
            radius: cfg.diffusion_kernel_radius,
            sigma: cfg.diffusion_sigma,
            eps: 1e-8,
        }
    }
}

impl DiffusionAggregator {
    fn kernel(&self) -> Vec<f64> {
        let r = self.radius as isize;
        let mut k = Vec::new();
        for dv in -r..=r {
            for du in -r..=r {
                let d2 = (du * du + dv * dv) as f64;
                k.push((-d2 / (2.0 * self.sigma * self.sigma)).exp());
            }
        }
        k
    }

    fn pass(&self, kernel: &[f64], conf: &[f64], flow: &[f64], w: usize, h: usize) -> Vec<f64> {
        let r = self.radius as isize;
        let mut out = vec![0.0; flow.len()];
        out.par_chunks_mut(2 * w).enumerate().for_each(|(v, row)| {
            for u in 0..w {
                let p = idx(u, v, w);
                let (fu, fv) = (flow[2 * p], flow[2 * p + 1]);
                let (mut su, mut sv, mut s) = (0.0, 0.0, 0.0);
                let mut k = 0;
                for dv in -r..=r {
                    for du in -r..=r {
                        let (nu, nv) = (u as isize + du, v as isize + dv);
                        if nu >= 0 && nv >= 0 && (nu as usize) < w && (nv as usize) < h {
                            let n = idx(nu as usize, nv as usize, w);
                            let a = conf[n] * kernel[k];
                            su += a * (flow[2 * n] - fu);
                            sv += a * (flow[2 * n + 1] - fv);
                            s += a;
                        }
                        k += 1;
                    }
                }
                row[2 * u] = fu + su / (s + self.eps);
                row[2 * u + 1] = fv + sv / (s + self.eps);
            }
        });
        out
    }
}

impl Aggregator for DiffusionAggregator {
    fn aggregate(&self, _g1: &FeatureMap, conf: &ConfidenceMap, flow: &FlowField) -> Result<FlowField> {
        ensure_same_shape(flow, conf, "aggregator flow/confidence")?;
        let (w, h) = (flow.width(), flow.height());
        let kernel = self.kernel();
        let mut data = flow.data().to_vec();
        for _ in 0..self.passes {
            data = self.pass(&kernel, conf.data(), &data, w, h);
        }
        Ok(FlowField::from_raw(w, h, flow.scale(), data))
    }
}

/// Runs the reference aggregator configured by `cfg`.
pub fn diffuse_aggregate(
    g1: &FeatureMap,
    conf: &ConfidenceMap,
    f0: &FlowField,
    cfg: &RefineConfig,
) -> Result<FlowField> {
    DiffusionAggregator::from(cfg).aggregate(g1, conf, f0)
}

/// Keeps every pixel with confidence at or above the threshold and replaces
/// the rest with the aggregator output.
pub fn global_refine(
    f0: &FlowField,
    conf: &ConfidenceMap,
    g1: &FeatureMap,
    agg: &dyn Aggregator,
    cfg: &RefineConfig,
) -> Result<FlowField> {
    cfg.validate()?;
    ensure_same_shape(f0, conf, "global refine flow/confidence")?;
    if f0.scale() != Scale::Quarter || g1.w() != f0.width() || g1.h() != f0.height() {
        return Err(Error::DimensionMismatch(format!(
            "global refine: flow {}x{} vs features {}x{}",
            f0.width(),
            f0.height(),
            g1.w(),
            g1.h()
        )));
    }
    let keep: Vec<bool> = conf.data().iter().map(|&c| c >= cfg.conf_threshold).collect();
    if keep.iter().all(|&k| k) {
        return Ok(f0.clone());
    }
    let replacement = agg.aggregate(g1, conf, f0)?;
    ensure_same_shape(f0, &replacement, "aggregator output")?;
    let mut out = f0.clone();
    let data = out.data_mut();
    for (p, &k) in keep.iter().enumerate() {
        if !k {
            let r = replacement.at(p);
            if !r[0].is_finite() || !r[1].is_finite() {
                return Err(Error::NonFinite(format!("aggregator output at pixel {p}")));
            }
            data[2 * p] = r[0];
            data[2 * p + 1] = r[1];
        }
    }
    Ok(out)
}
