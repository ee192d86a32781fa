//! The full estimator: features, correlation, transport, initialization,
//! refinement.

use crate::error::Result;
use crate::features::{extract_features_with, FeatureMap, FeatureParams, DEFAULT_DIM};
use crate::grid::{ConfidenceMap, FlowField, ImagePair, OcclusionMap, Validate};
use crate::initflow::{init_confidence, init_flow, init_occlusion, WindowSpec};
use crate::matching::{build_correlation, sinkhorn_dustbin_with_stats, SinkhornConfig, SinkhornStats};
use crate::refine::{run_refinement_traced, DiffusionAggregator, RefineConfig, RefineTrace, UpsampleWeights};
use crate::volume::CostVolume;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PipelineConfig {
    pub sinkhorn: SinkhornConfig,
    pub window: WindowSpec,
    pub refine: RefineConfig,
    /// Descriptor length, 1 to 16.
    pub feature_dim: usize,
    pub features: FeatureParams,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            sinkhorn: SinkhornConfig::default(),
            window: WindowSpec::default(),
            refine: RefineConfig::default(),
            feature_dim: DEFAULT_DIM,
            features: FeatureParams::default(),
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.sinkhorn.validate()?;
        self.window.validate()?;
        self.refine.validate()
    }
}

/// Quarter-resolution intermediates of one run.
#[derive(Debug, Clone)]
pub struct Initialization {
    pub g1: FeatureMap,
    pub cost: CostVolume,
    pub flow: FlowField,
    pub confidence: ConfidenceMap,
    pub occlusion: OcclusionMap,
    pub stats: SinkhornStats,
}

#[derive(Debug, Clone)]
pub struct Estimate {
    pub init: Initialization,
    pub trace: RefineTrace,
}

impl Estimate {
    pub fn flow(&self) -> &FlowField {
        &self.trace.output().0
    }
    pub fn confidence(&self) -> &ConfidenceMap {
        &self.trace.output().1
    }
    pub fn occlusion(&self) -> &OcclusionMap {
        &self.trace.output().2
    }
}

/// Runs matching and initialization on `pair`.
pub fn initialize(pair: &ImagePair, cfg: &PipelineConfig) -> Result<Initialization> {
    cfg.validate()?;
    pair.validate()?;
    let g1 = extract_features_with(&pair.first, cfg.feature_dim, &cfg.features)?;
    let g2 = extract_features_with(&pair.second, cfg.feature_dim, &cfg.features)?;
    let cost = build_correlation(&g1, &g2)?;
    let (p, stats) = sinkhorn_dustbin_with_stats(&cost, &cfg.sinkhorn)?;
    Ok(Initialization {
        flow: init_flow(&p, &cfg.window)?,
        confidence: init_confidence(&p, &cfg.window)?,
        occlusion: init_occlusion(&p),
        g1,
        cost,
        stats,
    })
}

/// Refines an initialization with the reference components.
pub fn refine(init: &Initialization, cfg: &RefineConfig) -> Result<RefineTrace> {
    let agg = DiffusionAggregator::from(cfg);
    let rule = cfg.reference_rule();
    let weights = UpsampleWeights::bilinear(init.flow.width(), init.flow.height());
    run_refinement_traced(
        &init.flow,
        &init.confidence,
        &init.occlusion,
        &init.g1,
        &init.cost,
        cfg,
        &agg,
        rule.as_ref(),
        &weights,
    )
}

/// Full-resolution flow, confidence and occlusion for `pair`.
pub fn estimate(pair: &ImagePair, cfg: &PipelineConfig) -> Result<Estimate> {
    let init = initialize(pair, cfg)?;
    let trace = refine(&init, &cfg.refine)?;
    Ok(Estimate { init, trace })
}
