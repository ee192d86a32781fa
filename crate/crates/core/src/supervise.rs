//! Ground-truth occlusion and confidence targets and the three-part loss.
//!
//! Every reduction goes through [`pairwise_sum`] so results do not depend on
//! thread count or platform.

use crate::error::{Error, Result};
use crate::grid::{ensure_same_shape, ConfidenceMap, FlowField, GridShape, OcclusionMap, Scale};
use crate::reduce::pairwise_sum;

/// Forward-backward error below which a pixel counts as visible.
pub const GT_OCCLUSION_THRESH_PX: f64 = 2.0;
/// Endpoint error below which a prediction counts as confident.
pub const GT_CONFIDENCE_THRESH_PX: f64 = 4.0;
/// Transition point of the smooth-L1 loss.
pub const DEFAULT_BETA: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub lambda_flow: f64,
    pub lambda_conf: f64,
    pub lambda_occ: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { lambda_flow: 1.0, lambda_conf: 0.1, lambda_occ: 0.1 }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, x) in [("lambda_flow", self.lambda_flow), ("lambda_conf", self.lambda_conf), ("lambda_occ", self.lambda_occ)]
        {
            if !(x >= 0.0) || !x.is_finite() {
                return Err(Error::InvalidConfig(format!("{name} = {x} must be >= 0")));
            }
        }
        Ok(())
    }
}

/// Loss terms of one refinement step.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StepLoss {
    pub flow: f64,
    pub conf: f64,
    pub occ: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossReport {
    pub flow_loss: f64,
    pub conf_loss: f64,
    pub occ_loss: f64,
    pub total: f64,
    /// Per-step terms, `t = 0..=T`; empty when built from scalars.
    pub per_step: Vec<StepLoss>,
}

fn ensure_full(g: &impl GridShape, what: &str) -> Result<()> {
    if g.scale() != Scale::Full {
        return Err(Error::DimensionMismatch(format!("{what} must be at full resolution")));
    }
    Ok(())
}

/// Visible (1) iff `|F_fwd(p) + F_bwd(p + F_fwd(p))| < thresh_px`, sampling
/// the backward flow bilinearly. Targets outside the frame are occluded (0).
pub fn gt_occlusion(fwd: &FlowField, bwd: &FlowField, thresh_px: f64) -> Result<OcclusionMap> {
    ensure_same_shape(fwd, bwd, "forward/backward flow")?;
    ensure_full(fwd, "forward flow")?;
    let (w, h) = (fwd.width(), fwd.height());
    let mut data = Vec::with_capacity(w * h);
    for v in 0..h {
        for u in 0..w {
            let [du, dv] = fwd.get(u, v);
            let visible = match bwd.sample_bilinear(u as f64 + du, v as f64 + dv) {
                Some([bu, bv]) => ((du + bu).powi(2) + (dv + bv).powi(2)).sqrt() < thresh_px,
                None => false,
            };
            data.push(if visible { 1.0 } else { 0.0 });
        }
    }
    Ok(OcclusionMap::from_raw(w, h, Scale::Full, data))
}

/// Indicator of per-pixel endpoint error below `thresh_px`.
pub fn gt_confidence(pred: &FlowField, gt: &FlowField, thresh_px: f64) -> Result<ConfidenceMap> {
    ensure_same_shape(pred, gt, "predicted/ground-truth flow")?;
    ensure_full(pred, "predicted flow")?;
    let data = endpoint_errors(pred, gt).into_iter().map(|e| if e < thresh_px { 1.0 } else { 0.0 }).collect();
    Ok(ConfidenceMap::from_raw(pred.width(), pred.height(), Scale::Full, data))
}

pub(crate) fn endpoint_errors(pred: &FlowField, gt: &FlowField) -> Vec<f64> {
    pred.data()
        .chunks_exact(2)
        .zip(gt.data().chunks_exact(2))
        .map(|(a, b)| ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt())
        .collect()
}

/// `0.5 x^2 / beta` inside `|x| < beta`, `|x| - beta / 2` outside.
#[inline]
pub fn smooth_l1(x: f64, beta: f64) -> f64 {
    let a = x.abs();
    if a < beta {
        0.5 * a * a / beta
    } else {
        a - 0.5 * beta
    }
}

/// Derivative of [`smooth_l1`]; `x / beta` inside, `sign(x)` outside.
#[inline]
pub fn smooth_l1_grad(x: f64, beta: f64) -> f64 {
    if x.abs() < beta {
        x / beta
    } else {
        x.signum()
    }
}

fn visible_mask(occ_gt: &OcclusionMap) -> Result<Vec<bool>> {
    if !occ_gt.is_binary() {
        return Err(Error::ValueOutOfRange("ground-truth occlusion must be binary".into()));
    }
    Ok(occ_gt.data().iter().map(|&o| o == 1.0).collect())
}

fn masked_mean(values: &[f64], mask: &[bool]) -> Result<f64> {
    let kept: Vec<f64> = values.iter().zip(mask).filter(|(_, &m)| m).map(|(v, _)| *v).collect();
    if kept.is_empty() {
        return Err(Error::NoNonOccludedPixels);
    }
    Ok(pairwise_sum(&kept) / kept.len() as f64)
}

fn full_mean(values: &[f64]) -> f64 {
    pairwise_sum(values) / values.len().max(1) as f64
}

/// Per-step occlusion terms: mean `|O^t - O_gt|` over all pixels.
pub fn loss_occlusion_terms(preds: &[OcclusionMap], gt: &OcclusionMap) -> Result<Vec<f64>> {
    if preds.is_empty() {
        return Err(Error::EmptyPredictions);
    }
    preds
        .iter()
        .map(|p| {
            ensure_same_shape(p, gt, "occlusion prediction/target")?;
            let d: Vec<f64> = p.data().iter().zip(gt.data()).map(|(a, b)| (a - b).abs()).collect();
            Ok(full_mean(&d))
        })
        .collect()
}

/// Sum over steps of the mean absolute occlusion error.
pub fn loss_occlusion(preds: &[OcclusionMap], gt: &OcclusionMap) -> Result<f64> {
    Ok(loss_occlusion_terms(preds, gt)?.iter().sum())
}

/// Per-step confidence terms: step 0 averaged over visible pixels only,
/// later steps over all pixels.
pub fn loss_confidence_terms(
    preds: &[ConfidenceMap],
    gts: &[ConfidenceMap],
    occ_gt: &OcclusionMap,
) -> Result<Vec<f64>> {
    if preds.is_empty() {
        return Err(Error::EmptyPredictions);
    }
    if preds.len() != gts.len() {
        return Err(Error::DimensionMismatch(format!("{} confidence predictions, {} targets", preds.len(), gts.len())));
    }
    let mask = visible_mask(occ_gt)?;
    preds
        .iter()
        .zip(gts)
        .enumerate()
        .map(|(t, (p, g))| {
            ensure_same_shape(p, g, "confidence prediction/target")?;
            ensure_same_shape(p, occ_gt, "confidence prediction/occlusion")?;
            let d: Vec<f64> = p.data().iter().zip(g.data()).map(|(a, b)| (a - b).abs()).collect();
            if t == 0 {
                masked_mean(&d, &mask)
            } else {
                Ok(full_mean(&d))
            }
        })
        .collect()
}

pub fn loss_confidence(preds: &[ConfidenceMap], gts: &[ConfidenceMap], occ_gt: &OcclusionMap) -> Result<f64> {
    Ok(loss_confidence_terms(preds, gts, occ_gt)?.iter().sum())
}

/// Per-step flow terms: step 0 is smooth-L1 over visible pixels, later steps
/// plain L1 over all pixels; channel losses are summed per pixel.
pub fn loss_flow_terms(preds: &[FlowField], gt: &FlowField, occ_gt: &OcclusionMap, beta: f64) -> Result<Vec<f64>> {
    if preds.is_empty() {
        return Err(Error::EmptyPredictions);
    }
    if !(beta > 0.0) {
        return Err(Error::InvalidConfig(format!("smooth-L1 beta {beta} must be > 0")));
    }
    ensure_same_shape(gt, occ_gt, "flow target/occlusion")?;
    let mask = visible_mask(occ_gt)?;
    preds
        .iter()
        .enumerate()
        .map(|(t, p)| {
            ensure_same_shape(p, gt, "flow prediction/target")?;
            let per_pixel: Vec<f64> = p
                .data()
                .chunks_exact(2)
                .zip(gt.data().chunks_exact(2))
                .map(|(a, b)| {
                    if t == 0 {
                        smooth_l1(a[0] - b[0], beta) + smooth_l1(a[1] - b[1], beta)
                    } else {
                        (a[0] - b[0]).abs() + (a[1] - b[1]).abs()
                    }
                })
                .collect();
            if t == 0 {
                masked_mean(&per_pixel, &mask)
            } else {
                Ok(full_mean(&per_pixel))
            }
        })
        .collect()
}

pub fn loss_flow(preds: &[FlowField], gt: &FlowField, occ_gt: &OcclusionMap, beta: f64) -> Result<f64> {
    Ok(loss_flow_terms(preds, gt, occ_gt, beta)?.iter().sum())
}

/// Weighted combination of the three losses.
pub fn total_loss(flow: f64, conf: f64, occ: f64, w: &LossWeights) -> LossReport {
    LossReport {
        flow_loss: flow,
        conf_loss: conf,
        occ_loss: occ,
        total: w.lambda_flow * flow + w.lambda_conf * conf + w.lambda_occ * occ,
        per_step: Vec::new(),
    }
}

/// Full-resolution predictions for every step `t = 0..=T`.
#[derive(Debug, Clone, Copy)]
pub struct StepPredictions<'a> {
    pub flows: &'a [FlowField],
    pub confidences: &'a [ConfidenceMap],
    pub occlusions: &'a [OcclusionMap],
}

/// Builds every target from the ground truth and evaluates all three
/// losses with a per-step breakdown. Confidence targets for each step are
/// recomputed from that step's flow.
pub fn evaluate_losses(
    preds: StepPredictions<'_>,
    gt_flow: &FlowField,
    gt_occ: &OcclusionMap,
    weights: &LossWeights,
    beta: f64,
) -> Result<LossReport> {
    weights.validate()?;
    let steps = preds.flows.len();
    if steps == 0 {
        return Err(Error::EmptyPredictions);
    }
    if preds.confidences.len() != steps || preds.occlusions.len() != steps {
        return Err(Error::DimensionMismatch("per-step prediction lists differ in length".into()));
    }
    let conf_gts = preds
        .flows
        .iter()
        .map(|f| gt_confidence(f, gt_flow, GT_CONFIDENCE_THRESH_PX))
        .collect::<Result<Vec<_>>>()?;
    let flow_terms = loss_flow_terms(preds.flows, gt_flow, gt_occ, beta)?;
    let conf_terms = loss_confidence_terms(preds.confidences, &conf_gts, gt_occ)?;
    let occ_terms = loss_occlusion_terms(preds.occlusions, gt_occ)?;
    let mut report = total_loss(
        flow_terms.iter().sum(),
        conf_terms.iter().sum(),
        occ_terms.iter().sum(),
        weights,
    );
    report.per_step = (0..steps)
        .map(|t| StepLoss { flow: flow_terms[t], conf: conf_terms[t], occ: occ_terms[t] })
        .collect();
    Ok(report)
}
