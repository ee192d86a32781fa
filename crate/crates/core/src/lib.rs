//! Dense optical flow from global matching.
//!
//! Quarter-resolution descriptors are matched all-pairs, an entropic optimal
//! transport plan with dustbins turns scores into matching probabilities,
//! and a windowed centroid gives initial flow, confidence and occlusion.
//! Low-confidence flow is replaced by confidence-weighted diffusion, a few
//! local steps refine all three maps in logit space, and the result is
//! convexly upsampled to full resolution.
//!
//! ```
//! use otflow::eval::{synth_scene, Motion, SceneSpec};
//! use otflow::pipeline::{estimate, PipelineConfig};
//!
//! let scene = synth_scene(&SceneSpec {
//!     width: 32,
//!     height: 32,
//!     motion: Motion::Translation { du: 4.0, dv: 0.0 },
//!     texture_seed: 1,
//! })
//! .unwrap();
//! let est = estimate(&scene.pair, &PipelineConfig::default()).unwrap();
//! assert_eq!(est.flow().width(), 32);
//! ```

// `!(x > y)` is used on purpose so NaN lands on the rejecting branch.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod eval;
pub mod features;
pub mod grid;
pub mod initflow;
pub mod matching;
pub mod pipeline;
pub mod reduce;
pub mod refine;
pub mod supervise;
pub mod volume;

#[doc(hidden)]
pub mod cli;

pub use error::{Error, Result};
pub use grid::{ConfidenceMap, FlowField, Image, ImagePair, OcclusionMap, RefineState, Scale};
pub use pipeline::{estimate, Estimate, PipelineConfig};
