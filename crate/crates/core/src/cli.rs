//! Command-line front end used by the `otflow` binary.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use image::{DynamicImage, GrayImage, ImageBuffer, Luma};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::eval::{
    evaluate, read_flo_file, read_kitti_png_file, synth_scene, visualize_flow, write_flo_file, Layer, MetricReport,
    Motion, Rect, SceneSpec,
};
use crate::grid::{FlowField, Image, ImagePair, OcclusionMap, Scale, UnitMap};
use crate::initflow::WindowSpec;
use crate::matching::{sinkhorn_dustbin_with_stats, SinkhornConfig};
use crate::pipeline::{estimate, PipelineConfig};
use crate::refine::{RefineConfig, RefinementMode};
use crate::volume::CostVolume;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "otflow", version, about = "Global-matching optical flow estimation and evaluation")]
struct Cli {
    /// Worker threads; 0 uses all available cores.
    #[arg(long, global = true, env = "OTFLOW_THREADS", default_value_t = 0)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Estimate flow from IMG1 to IMG2 and write it as .flo.
    Match(MatchArgs),
    /// Compare a predicted flow against ground truth (.flo or KITTI .png).
    Eval(EvalArgs),
    /// Render a synthetic scene with ground truth.
    Synth(SynthArgs),
    /// Render a .flo file with the color wheel.
    Visualize(VisualizeArgs),
    /// Time the transport solver on random scores.
    SinkhornBench(BenchArgs),
}

#[derive(Debug, Args)]
struct SolverArgs {
    #[arg(long, default_value_t = SinkhornConfig::default().epsilon)]
    epsilon: f64,
    #[arg(long, alias = "iters", default_value_t = SinkhornConfig::default().max_iters)]
    max_iters: usize,
    #[arg(long, default_value_t = SinkhornConfig::default().tol)]
    tol: f64,
    #[arg(long, default_value_t = SinkhornConfig::default().dustbin_score, allow_negative_numbers = true)]
    dustbin_score: f64,
}

impl SolverArgs {
    fn config(&self) -> SinkhornConfig {
        SinkhornConfig { epsilon: self.epsilon, max_iters: self.max_iters, tol: self.tol, dustbin_score: self.dustbin_score }
    }
}

#[derive(Debug, Args)]
struct MatchArgs {
    img1: PathBuf,
    img2: PathBuf,
    /// Output .flo path.
    #[arg(short, long)]
    out: PathBuf,
    /// Optional 8-bit confidence map.
    #[arg(long)]
    conf_out: Option<PathBuf>,
    /// Optional 8-bit occlusion map.
    #[arg(long)]
    occ_out: Option<PathBuf>,
    /// Optional color-wheel rendering.
    #[arg(long)]
    viz_out: Option<PathBuf>,
    #[command(flatten)]
    solver: SolverArgs,
    #[arg(long, alias = "radius", default_value_t = WindowSpec::default().radius)]
    window_radius: usize,
    #[arg(long, default_value_t = RefineConfig::default().steps)]
    steps: usize,
    #[arg(long, alias = "threshold", default_value_t = RefineConfig::default().conf_threshold)]
    conf_threshold: f64,
    /// Joint two-channel residuals instead of independent u/v heads.
    #[arg(long)]
    coupled_refinement: bool,
    #[arg(long, default_value_t = crate::features::DEFAULT_DIM)]
    dim: usize,
}

#[derive(Debug, Args)]
struct EvalArgs {
    pred: PathBuf,
    gt: PathBuf,
    /// Visibility mask PNG (nonzero = visible) for the non-occluded EPE.
    #[arg(long)]
    occ: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MotionKind {
    Translation,
    Affine,
    Layered,
}

#[derive(Debug, Args)]
struct SynthArgs {
    out_dir: PathBuf,
    #[arg(long, default_value_t = 64)]
    width: usize,
    #[arg(long, default_value_t = 64)]
    height: usize,
    #[arg(long, value_enum, default_value_t = MotionKind::Translation)]
    motion: MotionKind,
    /// Translation (background translation for layered scenes).
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    du: f64,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    dv: f64,
    /// Rotation in degrees about the image center (affine).
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    angle: f64,
    /// Isotropic zoom factor (affine).
    #[arg(long, default_value_t = 1.0)]
    zoom: f64,
    /// Layer as `x,y,w,h,du,dv`; repeatable, later layers are nearer.
    #[arg(long = "layer")]
    layers: Vec<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Args)]
struct VisualizeArgs {
    flow: PathBuf,
    #[arg(short, long)]
    out: PathBuf,
    /// Normalizing magnitude; defaults to the 99th percentile.
    #[arg(long)]
    max_mag: Option<f64>,
}

#[derive(Debug, Args)]
struct BenchArgs {
    /// Quarter-resolution grid side; the plan is side^2 x side^2.
    #[arg(long, default_value_t = 16)]
    size: usize,
    #[arg(long, default_value_t = 3)]
    repeats: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    solver: SolverArgs,
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code. Normal output goes to `out`, diagnostics to stderr.
pub fn run<I, T>(args: I, out: &mut dyn std::io::Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let mut pool = rayon::ThreadPoolBuilder::new();
    if cli.threads > 0 {
        pool = pool.num_threads(cli.threads);
    }
    let pool = match pool.build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: thread pool: {e}");
            return EXIT_RUNTIME;
        }
    };
    let result = pool.install(|| dispatch(cli.command));
    match result {
        Ok(text) => {
            if out.write_all(text.as_bytes()).is_err() {
                return EXIT_RUNTIME;
            }
            EXIT_OK
        }
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            EXIT_USAGE
        }
        Err(CliError::Runtime(e)) => {
            eprintln!("error: {e}");
            EXIT_RUNTIME
        }
    }
}

enum CliError {
    Usage(String),
    Runtime(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Runtime(e)
    }
}

fn dispatch(cmd: Command) -> std::result::Result<String, CliError> {
    match cmd {
        Command::Match(a) => Ok(cmd_match(&a)?),
        Command::Eval(a) => Ok(cmd_eval(&a)?),
        Command::Synth(a) => cmd_synth(&a),
        Command::Visualize(a) => Ok(cmd_visualize(&a)?),
        Command::SinkhornBench(a) => Ok(cmd_bench(&a)?),
    }
}

/// Loads an image as values in `[0, 1]`, grayscale when it has no color.
pub fn load_image(path: &Path) -> Result<Image> {
    let img = image::open(path)?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    if img.color().has_color() {
        let data = img.to_rgb32f().into_raw().into_iter().map(|x| (x as f64).clamp(0.0, 1.0)).collect();
        Image::new(w, h, 3, data)
    } else {
        let data = img.to_luma32f().into_raw().into_iter().map(|x| (x as f64).clamp(0.0, 1.0)).collect();
        Image::gray(w, h, data)
    }
}

/// Writes a grayscale image as 16-bit PNG.
pub fn save_gray16(img: &Image, path: &Path) -> Result<()> {
    let raw: Vec<u16> = img.to_gray().iter().map(|&x| (x.clamp(0.0, 1.0) * 65535.0).round() as u16).collect();
    let buf: ImageBuffer<Luma<u16>, Vec<u16>> = ImageBuffer::from_raw(img.width() as u32, img.height() as u32, raw)
        .ok_or_else(|| Error::DimensionMismatch("image buffer size".into()))?;
    buf.save(path)?;
    Ok(())
}

/// Writes a unit map as an 8-bit grayscale PNG.
pub fn save_unit_map<K: crate::grid::MapKind>(m: &UnitMap<K>, path: &Path) -> Result<()> {
    let raw: Vec<u8> = m.data().iter().map(|&x| (x * 255.0).round() as u8).collect();
    let buf = GrayImage::from_raw(m.width() as u32, m.height() as u32, raw)
        .ok_or_else(|| Error::DimensionMismatch("image buffer size".into()))?;
    buf.save(path)?;
    Ok(())
}

/// Reads a PNG mask, nonzero pixels set.
pub fn load_mask(path: &Path) -> Result<OcclusionMap> {
    let img = image::open(path)?.to_luma8();
    let data = img.as_raw().iter().map(|&x| if x > 0 { 1.0 } else { 0.0 }).collect();
    OcclusionMap::new(img.width() as usize, img.height() as usize, Scale::Full, data)
}

fn is_png(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("png"))
}

/// Reads `.flo` or KITTI PNG flow, returning the validity mask for the latter.
pub fn load_flow(path: &Path) -> Result<(FlowField, Option<OcclusionMap>)> {
    if is_png(path) {
        let (f, valid) = read_kitti_png_file(path)?;
        Ok((f, Some(valid)))
    } else {
        Ok((read_flo_file(path)?, None))
    }
}

fn cmd_match(a: &MatchArgs) -> Result<String> {
    let pair = ImagePair::new(load_image(&a.img1)?, load_image(&a.img2)?)?;
    let cfg = PipelineConfig {
        sinkhorn: a.solver.config(),
        window: WindowSpec { radius: a.window_radius, ..Default::default() },
        refine: RefineConfig {
            steps: a.steps,
            conf_threshold: a.conf_threshold,
            mode: if a.coupled_refinement { RefinementMode::Coupled } else { RefinementMode::AxisWise },
            ..Default::default()
        },
        feature_dim: a.dim,
        ..Default::default()
    };
    let est = estimate(&pair, &cfg)?;
    write_flo_file(est.flow(), &a.out)?;
    if let Some(p) = &a.conf_out {
        save_unit_map(est.confidence(), p)?;
    }
    if let Some(p) = &a.occ_out {
        save_unit_map(est.occlusion(), p)?;
    }
    if let Some(p) = &a.viz_out {
        visualize_flow(est.flow(), None).save(p).map_err(Error::from)?;
    }
    let n = est.flow().len() as f64;
    let mut s = String::new();
    let _ = writeln!(s, "width={}", pair.width());
    let _ = writeln!(s, "height={}", pair.height());
    let _ = writeln!(s, "sinkhorn_iterations={}", est.init.stats.iterations);
    let _ = writeln!(s, "sinkhorn_converged={}", est.init.stats.converged);
    let _ = writeln!(s, "marginal_error={:e}", est.init.stats.marginal_error);
    let _ = writeln!(s, "mean_confidence={:.6}", est.confidence().data().iter().sum::<f64>() / n);
    let _ = writeln!(s, "mean_occlusion={:.6}", est.occlusion().data().iter().sum::<f64>() / n);
    let _ = writeln!(s, "flow={}", a.out.display());
    Ok(s)
}

fn format_report(r: &MetricReport) -> String {
    let mut rows: Vec<(&str, f64)> = vec![("epe_all", r.epe_all)];
    if let Some(e) = r.epe_nonocc {
        rows.push(("epe_nonocc", e));
    }
    rows.extend([
        ("outlier_1px", r.outlier_1px),
        ("outlier_3px", r.outlier_3px),
        ("outlier_5px", r.outlier_5px),
        ("fl_all", r.fl_all),
    ]);
    let mut s = String::new();
    for (k, v) in &rows {
        let unit = if k.starts_with("epe") { "px" } else { "%" };
        let _ = writeln!(s, "{k:<12} {v:>12.6} {unit}");
    }
    for (k, v) in &rows {
        let _ = writeln!(s, "{k}={v}");
    }
    s
}

fn cmd_eval(a: &EvalArgs) -> Result<String> {
    let (pred, _) = load_flow(&a.pred)?;
    let (gt, valid) = load_flow(&a.gt)?;
    let occ = a.occ.as_deref().map(load_mask).transpose()?;
    let r = evaluate(&pred, &gt, valid.as_ref(), occ.as_ref())?;
    Ok(format_report(&r))
}

fn parse_layer(s: &str) -> std::result::Result<Layer, String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|e| format!("layer '{s}': {e}")))
        .collect::<std::result::Result<_, _>>()?;
    match v.as_slice() {
        &[x, y, w, h, du, dv] => Ok(Layer { rect: Rect { x, y, w, h }, du, dv }),
        _ => Err(format!("layer '{s}' needs x,y,w,h,du,dv")),
    }
}

fn cmd_synth(a: &SynthArgs) -> std::result::Result<String, CliError> {
    let motion = match a.motion {
        MotionKind::Translation => Motion::Translation { du: a.du, dv: a.dv },
        MotionKind::Affine => Motion::similarity(a.width, a.height, a.angle.to_radians(), a.zoom, (a.du, a.dv)),
        MotionKind::Layered => Motion::Layered {
            background: (a.du, a.dv),
            layers: a.layers.iter().map(|s| parse_layer(s)).collect::<std::result::Result<_, _>>().map_err(CliError::Usage)?,
        },
    };
    let spec = SceneSpec { width: a.width, height: a.height, motion, texture_seed: a.seed };
    let scene = synth_scene(&spec)?;
    std::fs::create_dir_all(&a.out_dir).map_err(Error::from)?;
    save_gray16(&scene.pair.first, &a.out_dir.join("I1.png"))?;
    save_gray16(&scene.pair.second, &a.out_dir.join("I2.png"))?;
    write_flo_file(&scene.flow, a.out_dir.join("gt.flo"))?;
    save_unit_map(&scene.occlusion, &a.out_dir.join("occ.png"))?;
    let mut s = String::new();
    let _ = writeln!(s, "width={}", a.width);
    let _ = writeln!(s, "height={}", a.height);
    let _ = writeln!(s, "visible_pixels={}", scene.occlusion.count_set());
    let _ = writeln!(s, "out_dir={}", a.out_dir.display());
    Ok(s)
}

fn cmd_visualize(a: &VisualizeArgs) -> Result<String> {
    let (f, _) = load_flow(&a.flow)?;
    let img = visualize_flow(&f, a.max_mag);
    DynamicImage::ImageRgb8(img).save(&a.out)?;
    Ok(format!("out={}\n", a.out.display()))
}

fn cmd_bench(a: &BenchArgs) -> Result<String> {
    let (side, n) = (a.size, a.size * a.size);
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let scores: Vec<f64> = (0..n * n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let cost = CostVolume::new(side, side, scores)?;
    let cfg = a.solver.config();
    let mut times = Vec::with_capacity(a.repeats.max(1));
    let mut stats = None;
    for _ in 0..a.repeats.max(1) {
        let t = Instant::now();
        let (_, st) = sinkhorn_dustbin_with_stats(&cost, &cfg)?;
        times.push(t.elapsed().as_secs_f64() * 1e3);
        stats = Some(st);
    }
    let st = stats.expect("at least one repeat");
    times.sort_by(f64::total_cmp);
    let mut s = String::new();
    let _ = writeln!(s, "pixels={n}");
    let _ = writeln!(s, "iterations={}", st.iterations);
    let _ = writeln!(s, "converged={}", st.converged);
    let _ = writeln!(s, "marginal_error={:e}", st.marginal_error);
    let _ = writeln!(s, "median_ms={:.3}", times[times.len() / 2]);
    Ok(s)
}
