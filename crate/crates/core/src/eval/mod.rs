//! Metrics, flow file formats, visualization and synthetic scenes.

mod flo;
mod kitti;
mod metrics;
mod synth;
mod viz;

pub use flo::{read_flo, read_flo_file, write_flo, write_flo_file, FLO_MAGIC};
pub use kitti::{
    kitti_decode, kitti_encode, read_kitti_png, read_kitti_png_file, write_kitti_png, write_kitti_png_file,
    KITTI_MAX_FLOW,
};
pub use metrics::{epe, evaluate, fl_all, outlier_rate, MetricReport, FL_ABS_THRESH_PX, FL_REL_THRESH};
pub use synth::{synth_scene, Layer, Motion, Rect, Scene, SceneSpec};
pub use viz::{color_wheel, flow_color, percentile_99, visualize_flow, wheel_color};
