//! Endpoint error, outlier rates and the KITTI Fl-all score.
//!
//! Masks are occlusion maps where values of at least 0.5 mark pixels that
//! take part in the average.

use crate::error::{Error, Result};
use crate::grid::{ensure_same_shape, FlowField, OcclusionMap};
use crate::reduce::pairwise_sum;
use crate::supervise::endpoint_errors;

/// Absolute error threshold of Fl-all, in pixels.
pub const FL_ABS_THRESH_PX: f64 = 3.0;
/// Relative error threshold of Fl-all, as a fraction of the true magnitude.
pub const FL_REL_THRESH: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MetricReport {
    pub epe_all: f64,
    /// Present only when a visibility mask was supplied.
    pub epe_nonocc: Option<f64>,
    pub outlier_1px: f64,
    pub outlier_3px: f64,
    pub outlier_5px: f64,
    pub fl_all: f64,
}

fn selected(pred: &FlowField, gt: &FlowField, mask: Option<&OcclusionMap>) -> Result<Vec<usize>> {
    ensure_same_shape(pred, gt, "prediction/ground truth")?;
    let sel: Vec<usize> = match mask {
        Some(m) => {
            ensure_same_shape(pred, m, "prediction/mask")?;
            m.data().iter().enumerate().filter(|(_, &x)| x >= 0.5).map(|(i, _)| i).collect()
        }
        None => (0..pred.len()).collect(),
    };
    if sel.is_empty() {
        return Err(Error::EmptyMask);
    }
    Ok(sel)
}

fn percent(count: usize, total: usize) -> f64 {
    100.0 * count as f64 / total as f64
}

/// Mean Euclidean norm of `pred - gt` over the selected pixels.
pub fn epe(pred: &FlowField, gt: &FlowField, mask: Option<&OcclusionMap>) -> Result<f64> {
    let sel = selected(pred, gt, mask)?;
    let errs = endpoint_errors(pred, gt);
    let picked: Vec<f64> = sel.iter().map(|&i| errs[i]).collect();
    Ok(pairwise_sum(&picked) / picked.len() as f64)
}

/// Percentage of selected pixels whose endpoint error exceeds `thresh_px`.
pub fn outlier_rate(pred: &FlowField, gt: &FlowField, thresh_px: f64, mask: Option<&OcclusionMap>) -> Result<f64> {
    let sel = selected(pred, gt, mask)?;
    let errs = endpoint_errors(pred, gt);
    Ok(percent(sel.iter().filter(|&&i| errs[i] > thresh_px).count(), sel.len()))
}

/// Percentage of selected pixels with error above 3 px and above 5% of the
/// ground-truth flow magnitude.
pub fn fl_all(pred: &FlowField, gt: &FlowField, mask: Option<&OcclusionMap>) -> Result<f64> {
    let sel = selected(pred, gt, mask)?;
    let errs = endpoint_errors(pred, gt);
    let bad = sel
        .iter()
        .filter(|&&i| {
            let [gu, gv] = gt.at(i);
            let mag = (gu * gu + gv * gv).sqrt();
            errs[i] > FL_ABS_THRESH_PX && errs[i] > FL_REL_THRESH * mag
        })
        .count();
    Ok(percent(bad, sel.len()))
}

/// All metrics. `valid` restricts every average (e.g. KITTI validity);
/// `nonocc` additionally yields `epe_nonocc`.
pub fn evaluate(
    pred: &FlowField,
    gt: &FlowField,
    valid: Option<&OcclusionMap>,
    nonocc: Option<&OcclusionMap>,
) -> Result<MetricReport> {
    let epe_nonocc = match nonocc {
        Some(n) => {
            let combined = match valid {
                Some(v) => {
                    ensure_same_shape(v, n, "validity/visibility masks")?;
                    let data = v
                        .data()
                        .iter()
                        .zip(n.data())
                        .map(|(&a, &b)| if a >= 0.5 && b >= 0.5 { 1.0 } else { 0.0 })
                        .collect();
                    OcclusionMap::new(n.width(), n.height(), n.scale(), data)?
                }
                None => n.clone(),
            };
            Some(epe(pred, gt, Some(&combined))?)
        }
        None => None,
    };
    Ok(MetricReport {
        epe_all: epe(pred, gt, valid)?,
        epe_nonocc,
        outlier_1px: outlier_rate(pred, gt, 1.0, valid)?,
        outlier_3px: outlier_rate(pred, gt, 3.0, valid)?,
        outlier_5px: outlier_rate(pred, gt, 5.0, valid)?,
        fl_all: fl_all(pred, gt, valid)?,
    })
}
