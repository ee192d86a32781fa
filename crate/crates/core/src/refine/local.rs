//! Iterative local refinement with logit-space accumulation.
//!
//! A [`ResidualRule`] proposes per-pixel residuals `(du, dv, dconf, docc)`
//! from the current state; [`local_refine_step`] applies them: flow is
//! updated additively, confidence and occlusion through
//! `sigmoid(logit(clamp(x)) + delta)`.
//!
//! The deterministic reference rules read local correlation from the cost
//! volume. [`AxisWiseRule`] runs one independent head per flow axis, each a
//! soft-argmax over a 1-D slice of correlation through the current match.
//! [`CoupledRule`] predicts both components jointly from a 2-D patch.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{idx, FlowField, RefineState, Validate};
use crate::volume::CostVolume;

use super::RefineConfig;

/// `sigma(x)`.
#[inline]
pub fn sigmoid(x: f64) -> f64 {
    0.5 + 0.5 * (0.5 * x).tanh()
}

/// `sigma^-1(p) = ln(p / (1 - p))`.
#[inline]
pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Adds `delta` to the log-odds of `p`. Input and output are kept in
/// `[clamp, 1 - clamp]` so the log-odds stay finite.
#[inline]
pub fn accumulate_logit(p: f64, delta: f64, clamp: f64) -> f64 {
    let lo = clamp;
    let hi = 1.0 - clamp;
    let p = p.clamp(lo, hi);
    if delta == 0.0 {
        return p;
    }
    sigmoid(logit(p) + delta).clamp(lo, hi)
}

/// Bilinear lookup of correlation between a source cell and a fractional
/// target position, read from the all-pairs volume.
pub struct LocalCorrelation<'a> {
    cost: &'a CostVolume,
}

impl<'a> LocalCorrelation<'a> {
    pub fn new(cost: &'a CostVolume) -> Self {
        Self { cost }
    }

    pub fn w(&self) -> usize {
        self.cost.w()
    }
    pub fn h(&self) -> usize {
        self.cost.h()
    }

    /// Correlation of source pixel `src` with target position `(x, y)`, or
    /// `None` outside the target grid.
    pub fn sample(&self, src: usize, x: f64, y: f64) -> Option<f64> {
        let (w, h) = (self.cost.w(), self.cost.h());
        if !(x >= 0.0 && y >= 0.0 && x <= (w - 1) as f64 && y <= (h - 1) as f64) {
            return None;
        }
        let row = self.cost.row(src);
        let (x0, y0) = (x.floor() as usize, y.floor() as usize);
        let (x1, y1) = ((x0 + 1).min(w - 1), (y0 + 1).min(h - 1));
        let (fx, fy) = (x - x0 as f64, y - y0 as f64);
        let top = row[idx(x0, y0, w)] * (1.0 - fx) + row[idx(x1, y0, w)] * fx;
        let bottom = row[idx(x0, y1, w)] * (1.0 - fx) + row[idx(x1, y1, w)] * fx;
        Some(top * (1.0 - fy) + bottom * fy)
    }
}

/// Residuals proposed for one pixel.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Residuals {
    pub du: f64,
    pub dv: f64,
    pub dconf: f64,
    pub docc: f64,
}

/// Proposes residuals for pixel `p` from the current state.
pub trait ResidualRule: Sync {
    fn residuals(&self, state: &RefineState, corr: &LocalCorrelation<'_>, p: usize) -> Residuals;
}

impl<F> ResidualRule for F
where
    F: Fn(&RefineState, &LocalCorrelation<'_>, usize) -> Residuals + Sync,
{
    fn residuals(&self, state: &RefineState, corr: &LocalCorrelation<'_>, p: usize) -> Residuals {
        self(state, corr, p)
    }
}

/// Always proposes zero residuals.
#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroRule;

impl ResidualRule for ZeroRule {
    fn residuals(&self, _: &RefineState, _: &LocalCorrelation<'_>, _: usize) -> Residuals {
        Residuals::default()
    }
}

/// Parameters shared by the soft-argmax heads.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SoftArgmaxParams {
    /// Half-width of the search slice, in quarter-res cells.
    pub radius: usize,
    /// Softmax temperature on correlation scores.
    pub temperature: f64,
    /// Score of the "no match nearby" option used for the occlusion residual.
    pub dustbin_score: f64,
    /// Fraction of the log-odds gap closed per step for confidence/occlusion.
    pub gain: f64,
    /// Width, in cells, of the Gaussian prior that favors staying near the
    /// current match. Infinite disables it.
    pub prior_width: f64,
    pub logit_clamp: f64,
}

impl From<&RefineConfig> for SoftArgmaxParams {
    fn from(cfg: &RefineConfig) -> Self {
        Self {
            radius: cfg.local_radius,
            temperature: cfg.local_temperature,
            dustbin_score: cfg.local_dustbin_score,
            gain: cfg.local_gain,
            prior_width: cfg.local_prior_width,
            logit_clamp: cfg.logit_clamp,
        }
    }
}

/// What one head reports about its slice.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct HeadOutput {
    /// Expected offset of the match along the head's axis.
    pub offset: f64,
    /// Softmax mass within one cell of the softmax peak.
    pub peak_mass: f64,
    /// Probability that the match lies in the slice rather than the dustbin.
    pub local_mass: f64,
    /// False if the slice had no in-grid samples.
    pub valid: bool,
}

/// Flow axis handled by a head.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    U,
    V,
}

/// One per-axis refinement head.
pub trait AxisHead: Sync {
    fn evaluate(&self, state: &RefineState, corr: &LocalCorrelation<'_>, p: usize, axis: Axis) -> HeadOutput;
}

/// Head that proposes nothing.
#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroHead;

impl AxisHead for ZeroHead {
    fn evaluate(&self, _: &RefineState, _: &LocalCorrelation<'_>, _: usize, _: Axis) -> HeadOutput {
        HeadOutput::default()
    }
}

/// Soft-argmax over `2 * radius + 1` correlation samples along one axis
/// through the current match.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SoftArgmaxHead {
    pub params: SoftArgmaxParams,
}

/// Log-weight of a sample: score over temperature minus the Gaussian prior
/// on its distance from the current match.
#[inline]
fn log_weight(score: f64, dist2: f64, params: &SoftArgmaxParams) -> f64 {
    score / params.temperature - dist2 / (2.0 * params.prior_width * params.prior_width)
}

/// Softmax statistics over `(offset, score)` samples.
fn softmax_stats(samples: &[(f64, f64)], params: &SoftArgmaxParams, peak_radius: f64) -> HeadOutput {
    if samples.is_empty() {
        return HeadOutput::default();
    }
    let logw: Vec<f64> = samples.iter().map(|s| log_weight(s.1, s.0 * s.0, params)).collect();
    let max = logw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = logw.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = weights.iter().sum();
    let offset = samples.iter().zip(&weights).map(|(s, w)| s.0 * w).sum::<f64>() / total;
    let peak = samples[crate::initflow::peak_index(&weights)].0;
    let peak_mass = samples
        .iter()
        .zip(&weights)
        .filter(|(s, _)| (s.0 - peak).abs() <= peak_radius + 1e-9)
        .map(|(_, w)| w)
        .sum::<f64>()
        / total;
    // total / (total + exp(z / t)) with the dustbin at zero offset, written
    // in log-odds form.
    let local_mass = sigmoid(total.ln() + max - params.dustbin_score / params.temperature);
    HeadOutput { offset, peak_mass, local_mass, valid: true }
}

impl AxisHead for SoftArgmaxHead {
    fn evaluate(&self, state: &RefineState, corr: &LocalCorrelation<'_>, p: usize, axis: Axis) -> HeadOutput {
        let w = corr.w();
        let (u, v) = ((p % w) as f64, (p / w) as f64);
        let [fu, fv] = state.flow.at(p);
        let (qx, qy) = (u + fu, v + fv);
        let r = self.params.radius as isize;
        let samples: Vec<(f64, f64)> = (-r..=r)
            .filter_map(|k| {
                let k = k as f64;
                let s = match axis {
                    Axis::U => corr.sample(p, qx + k, qy),
                    Axis::V => corr.sample(p, qx, qy + k),
                };
                s.map(|s| (k, s))
            })
            .collect();
        softmax_stats(&samples, &self.params, 1.0)
    }
}

/// Confidence/occlusion residuals pulling the current log-odds half-way
/// (by `gain`) toward the observed peak and local masses.
fn conf_occ_residuals(state: &RefineState, p: usize, heads: &[HeadOutput], params: &SoftArgmaxParams) -> (f64, f64) {
    let valid: Vec<&HeadOutput> = heads.iter().filter(|h| h.valid).collect();
    let (peak, local) = if valid.is_empty() {
        (0.0, 0.0)
    } else {
        let n = valid.len() as f64;
        (
            valid.iter().map(|h| h.peak_mass).sum::<f64>() / n,
            valid.iter().map(|h| h.local_mass).sum::<f64>() / n,
        )
    };
    let c = params.logit_clamp;
    let lg = |x: f64| logit(x.clamp(c, 1.0 - c));
    let dconf = params.gain * (lg(peak) - lg(state.confidence.data()[p]));
    let docc = params.gain * (lg(local) - lg(state.occlusion.data()[p]));
    (dconf, docc)
}

/// Independent heads for the u and v flow components. The flow residual on
/// each axis is the head's soft-argmax offset scaled by current confidence.
#[derive(Debug, Clone, Copy)]
pub struct AxisWiseRule<U: AxisHead = SoftArgmaxHead, V: AxisHead = SoftArgmaxHead> {
    pub u_head: U,
    pub v_head: V,
    pub params: SoftArgmaxParams,
}

impl AxisWiseRule {
    pub fn new(params: SoftArgmaxParams) -> Self {
        Self { u_head: SoftArgmaxHead { params }, v_head: SoftArgmaxHead { params }, params }
    }
}

impl<U: AxisHead, V: AxisHead> ResidualRule for AxisWiseRule<U, V> {
    fn residuals(&self, state: &RefineState, corr: &LocalCorrelation<'_>, p: usize) -> Residuals {
        let hu = self.u_head.evaluate(state, corr, p, Axis::U);
        let hv = self.v_head.evaluate(state, corr, p, Axis::V);
        let gamma = state.confidence.data()[p];
        let (dconf, docc) = conf_occ_residuals(state, p, &[hu, hv], &self.params);
        Residuals { du: gamma * hu.offset, dv: gamma * hv.offset, dconf, docc }
    }
}

/// Single joint head: 2-D soft-argmax over a `(2r + 1)^2` patch.
#[derive(Debug, Clone, Copy)]
pub struct CoupledRule {
    pub params: SoftArgmaxParams,
}

impl ResidualRule for CoupledRule {
    fn residuals(&self, state: &RefineState, corr: &LocalCorrelation<'_>, p: usize) -> Residuals {
        let w = corr.w();
        let (u, v) = ((p % w) as f64, (p / w) as f64);
        let [fu, fv] = state.flow.at(p);
        let (qx, qy) = (u + fu, v + fv);
        let r = self.params.radius as isize;
        let mut samples = Vec::with_capacity(((2 * r + 1) * (2 * r + 1)) as usize);
        for j in -r..=r {
            for i in -r..=r {
                if let Some(s) = corr.sample(p, qx + i as f64, qy + j as f64) {
                    samples.push((i as f64, j as f64, s));
                }
            }
        }
        let gamma = state.confidence.data()[p];
        if samples.is_empty() {
            let (dconf, docc) = conf_occ_residuals(state, p, &[], &self.params);
            return Residuals { du: 0.0, dv: 0.0, dconf, docc };
        }
        let logw: Vec<f64> =
            samples.iter().map(|s| log_weight(s.2, s.0 * s.0 + s.1 * s.1, &self.params)).collect();
        let max = logw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let weights: Vec<f64> = logw.iter().map(|l| (l - max).exp()).collect();
        let total: f64 = weights.iter().sum();
        let eu = samples.iter().zip(&weights).map(|(s, w)| s.0 * w).sum::<f64>() / total;
        let ev = samples.iter().zip(&weights).map(|(s, w)| s.1 * w).sum::<f64>() / total;
        let pk = samples[crate::initflow::peak_index(&weights)];
        let peak_mass = samples
            .iter()
            .zip(&weights)
            .filter(|(s, _)| (s.0 - pk.0).abs() <= 1.0 && (s.1 - pk.1).abs() <= 1.0)
            .map(|(_, w)| w)
            .sum::<f64>()
            / total;
        let local_mass = sigmoid(total.ln() + max - self.params.dustbin_score / self.params.temperature);
        let head = HeadOutput { offset: 0.0, peak_mass, local_mass, valid: true };
        let (dconf, docc) = conf_occ_residuals(state, p, &[head], &self.params);
        Residuals { du: gamma * eu, dv: gamma * ev, dconf, docc }
    }
}

/// Applies one round of residuals to the state.
pub fn local_refine_step(
    state: &RefineState,
    corr: &LocalCorrelation<'_>,
    rule: &dyn ResidualRule,
    cfg: &RefineConfig,
) -> Result<RefineState> {
    cfg.validate()?;
    state.validate()?;
    if state.step >= cfg.steps {
        return Err(Error::IterationExhausted { step: state.step, steps: cfg.steps });
    }
    if corr.w() != state.flow.width() || corr.h() != state.flow.height() {
        return Err(Error::DimensionMismatch("local correlation does not match the refine state".into()));
    }
    let n = state.flow.len();
    let residuals: Vec<Residuals> = (0..n).into_par_iter().map(|p| rule.residuals(state, corr, p)).collect();
    if let Some(p) = residuals
        .iter()
        .position(|r| !(r.du.is_finite() && r.dv.is_finite() && r.dconf.is_finite() && r.docc.is_finite()))
    {
        return Err(Error::NonFinite(format!("residual at pixel {p}")));
    }

    let mut flow = state.flow.data().to_vec();
    for (p, r) in residuals.iter().enumerate() {
        flow[2 * p] += r.du;
        flow[2 * p + 1] += r.dv;
    }
    let c = cfg.logit_clamp;
    let conf: Vec<f64> =
        state.confidence.data().iter().zip(&residuals).map(|(&g, r)| accumulate_logit(g, r.dconf, c)).collect();
    let occ: Vec<f64> =
        state.occlusion.data().iter().zip(&residuals).map(|(&o, r)| accumulate_logit(o, r.docc, c)).collect();
    let (w, h, s) = (state.flow.width(), state.flow.height(), state.flow.scale());
    Ok(RefineState {
        flow: FlowField::from_raw(w, h, s, flow),
        confidence: crate::grid::ConfidenceMap::from_raw(w, h, s, conf),
        occlusion: crate::grid::OcclusionMap::from_raw(w, h, s, occ),
        step: state.step + 1,
    })
}
