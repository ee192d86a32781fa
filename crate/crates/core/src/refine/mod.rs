//! Confidence-guided refinement: one global correction, a fixed number of
//! local steps, then convex upsampling to full resolution.

mod global;
mod local;
mod upsample;

pub use global::{diffuse_aggregate, global_refine, Aggregator, DiffusionAggregator};
pub use local::{
    accumulate_logit, local_refine_step, logit, sigmoid, Axis, AxisHead, AxisWiseRule, CoupledRule, HeadOutput,
    LocalCorrelation, ResidualRule, Residuals, SoftArgmaxHead, SoftArgmaxParams, ZeroHead, ZeroRule,
};
pub use upsample::{convex_upsample, Upsample, UpsampleWeights, CONVEX_TOL};

use crate::error::{Error, Result};
use crate::features::FeatureMap;
use crate::grid::{ensure_same_shape, ConfidenceMap, FlowField, OcclusionMap, RefineState, Scale};
use crate::volume::CostVolume;

/// How flow residuals are predicted during local refinement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RefinementMode {
    /// Independent u and v heads.
    #[default]
    AxisWise,
    /// One joint two-channel head.
    Coupled,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RefineConfig {
    /// Pixels with confidence at or above this keep their initial flow.
    pub conf_threshold: f64,
    /// Number of local refinement steps.
    pub steps: usize,
    /// Probabilities are clamped to `[logit_clamp, 1 - logit_clamp]`.
    pub logit_clamp: f64,
    pub diffusion_passes: usize,
    pub diffusion_kernel_radius: usize,
    pub diffusion_sigma: f64,
    /// Half-width of the local correlation slice.
    pub local_radius: usize,
    pub local_temperature: f64,
    pub local_dustbin_score: f64,
    pub local_gain: f64,
    /// Width, in cells, of the prior pulling local steps toward the current
    /// match; `f64::INFINITY` disables it.
    pub local_prior_width: f64,
    pub mode: RefinementMode,
}

impl Default for RefineConfig {
    fn default() -> Self {
        Self {
            conf_threshold: 0.2,
            steps: 3,
            logit_clamp: 1e-6,
            diffusion_passes: 8,
            diffusion_kernel_radius: 1,
            diffusion_sigma: 1.0,
            local_radius: 3,
            local_temperature: 0.03,
            local_dustbin_score: 0.0,
            local_gain: 0.5,
            local_prior_width: 0.7,
            mode: RefinementMode::AxisWise,
        }
    }
}

impl RefineConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.conf_threshold > 0.0 && self.conf_threshold < 1.0) {
            return Err(Error::InvalidConfig(format!("conf_threshold {} must be in (0, 1)", self.conf_threshold)));
        }
        if !(self.logit_clamp > 0.0 && self.logit_clamp < 0.5) {
            return Err(Error::InvalidConfig(format!("logit_clamp {} must be in (0, 0.5)", self.logit_clamp)));
        }
        if !(self.diffusion_sigma > 0.0) {
            return Err(Error::InvalidConfig("diffusion_sigma must be > 0".into()));
        }
        if !(self.local_temperature > 0.0) {
            return Err(Error::InvalidConfig("local_temperature must be > 0".into()));
        }
        if !(self.local_prior_width > 0.0) {
            return Err(Error::InvalidConfig("local_prior_width must be > 0".into()));
        }
        if !self.local_dustbin_score.is_finite() || !self.local_gain.is_finite() {
            return Err(Error::InvalidConfig("local rule parameters must be finite".into()));
        }
        Ok(())
    }

    /// The reference residual rule selected by `mode`.
    pub fn reference_rule(&self) -> Box<dyn ResidualRule> {
        let params = SoftArgmaxParams::from(self);
        match self.mode {
            RefinementMode::AxisWise => Box::new(AxisWiseRule::new(params)),
            RefinementMode::Coupled => Box::new(CoupledRule { params }),
        }
    }
}

/// Quarter-resolution states `t = 0..=T` (the first one after global
/// correction) and their full-resolution upsampled counterparts.
#[derive(Debug, Clone)]
pub struct RefineTrace {
    pub states: Vec<RefineState>,
    pub full_res: Vec<(FlowField, ConfidenceMap, OcclusionMap)>,
}

impl RefineTrace {
    /// Final full-resolution flow, confidence and occlusion.
    pub fn output(&self) -> &(FlowField, ConfidenceMap, OcclusionMap) {
        self.full_res.last().expect("trace always holds the initial state")
    }
}

/// Refinement with caller-supplied aggregator, residual rule and upsampling
/// weights, keeping every intermediate state.
#[allow(clippy::too_many_arguments)]
pub fn run_refinement_traced(
    f0: &FlowField,
    conf0: &ConfidenceMap,
    occ0: &OcclusionMap,
    g1: &FeatureMap,
    cost: &CostVolume,
    cfg: &RefineConfig,
    agg: &dyn Aggregator,
    rule: &dyn ResidualRule,
    weights: &UpsampleWeights,
) -> Result<RefineTrace> {
    cfg.validate()?;
    if f0.scale() != Scale::Quarter {
        return Err(Error::DimensionMismatch("refinement inputs must be at quarter resolution".into()));
    }
    ensure_same_shape(f0, conf0, "refinement flow/confidence")?;
    ensure_same_shape(f0, occ0, "refinement flow/occlusion")?;
    if cost.w() != f0.width() || cost.h() != f0.height() {
        return Err(Error::DimensionMismatch("cost volume does not match the flow grid".into()));
    }

    let flow = global_refine(f0, conf0, g1, agg, cfg)?;
    let mut state = RefineState { flow, confidence: conf0.clone(), occlusion: occ0.clone(), step: 0 };
    let corr = LocalCorrelation::new(cost);
    let mut states = vec![state.clone()];
    for _ in 0..cfg.steps {
        state = local_refine_step(&state, &corr, rule, cfg)?;
        states.push(state.clone());
    }
    let full_res = states
        .iter()
        .map(|s| {
            Ok((
                s.flow.convex_upsample(weights)?,
                s.confidence.convex_upsample(weights)?,
                s.occlusion.convex_upsample(weights)?,
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RefineTrace { states, full_res })
}

/// Global correction with the reference aggregator, `cfg.steps` local steps
/// with the reference rule, and bilinear-equivalent convex upsampling.
pub fn run_refinement(
    f0: &FlowField,
    conf0: &ConfidenceMap,
    occ0: &OcclusionMap,
    g1: &FeatureMap,
    cost: &CostVolume,
    cfg: &RefineConfig,
) -> Result<(FlowField, ConfidenceMap, OcclusionMap)> {
    let agg = DiffusionAggregator::from(cfg);
    let rule = cfg.reference_rule();
    let weights = UpsampleWeights::bilinear(f0.width(), f0.height());
    let trace = run_refinement_traced(f0, conf0, occ0, g1, cost, cfg, &agg, rule.as_ref(), &weights)?;
    Ok(trace.output().clone())
}
