//! C ABI for `otflow`.
//!
//! Every function returns an [`OtflowStatus`]; on failure a message is kept
//! per thread and can be read with [`otflow_last_error`]. Flow fields cross
//! the boundary as the opaque [`OtflowFlow`] handle, which must be released
//! with [`otflow_flow_free`]. Panics never unwind into the caller.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use otflow::eval::{evaluate, read_flo_file, read_kitti_png_file, write_flo_file};
use otflow::initflow::WindowSpec;
use otflow::matching::SinkhornConfig;
use otflow::refine::{RefineConfig, RefinementMode};
use otflow::{ConfidenceMap, Error, FlowField, Image, ImagePair, OcclusionMap, PipelineConfig, Scale};

/// Result of every call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OtflowStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DimensionMismatch = 3,
    InvalidConfig = 4,
    NonFinite = 5,
    Io = 6,
    Format = 7,
    Unavailable = 8,
    Internal = 9,
}

/// Pipeline settings. Start from [`otflow_config_default`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OtflowConfig {
    pub epsilon: f64,
    pub sinkhorn_max_iters: usize,
    pub sinkhorn_tol: f64,
    pub dustbin_score: f64,
    pub window_radius: usize,
    pub refine_steps: usize,
    pub conf_threshold: f64,
    /// Nonzero selects the joint two-channel residual head.
    pub coupled_refinement: u8,
    pub feature_dim: usize,
}

impl From<&PipelineConfig> for OtflowConfig {
    fn from(c: &PipelineConfig) -> Self {
        Self {
            epsilon: c.sinkhorn.epsilon,
            sinkhorn_max_iters: c.sinkhorn.max_iters,
            sinkhorn_tol: c.sinkhorn.tol,
            dustbin_score: c.sinkhorn.dustbin_score,
            window_radius: c.window.radius,
            refine_steps: c.refine.steps,
            conf_threshold: c.refine.conf_threshold,
            coupled_refinement: (c.refine.mode == RefinementMode::Coupled) as u8,
            feature_dim: c.feature_dim,
        }
    }
}

impl OtflowConfig {
    fn to_pipeline(self) -> PipelineConfig {
        let base = PipelineConfig::default();
        PipelineConfig {
            sinkhorn: SinkhornConfig {
                epsilon: self.epsilon,
                max_iters: self.sinkhorn_max_iters,
                tol: self.sinkhorn_tol,
                dustbin_score: self.dustbin_score,
            },
            window: WindowSpec { radius: self.window_radius, ..base.window },
            refine: RefineConfig {
                steps: self.refine_steps,
                conf_threshold: self.conf_threshold,
                mode: if self.coupled_refinement != 0 { RefinementMode::Coupled } else { RefinementMode::AxisWise },
                ..base.refine
            },
            feature_dim: self.feature_dim,
            ..base
        }
    }
}

/// Evaluation metrics. `epe_nonocc` is NaN when no visibility mask was given.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OtflowMetrics {
    pub epe_all: f64,
    pub epe_nonocc: f64,
    pub outlier_1px: f64,
    pub outlier_3px: f64,
    pub outlier_5px: f64,
    pub fl_all: f64,
}

/// Opaque full-resolution flow, optionally with confidence and occlusion.
pub struct OtflowFlow {
    flow: FlowField,
    confidence: Option<ConfidenceMap>,
    occlusion: Option<OcclusionMap>,
    /// KITTI validity, when read from a KITTI PNG.
    valid: Option<OcclusionMap>,
}

impl OtflowFlow {
    fn plain(flow: FlowField) -> Self {
        Self { flow, confidence: None, occlusion: None, valid: None }
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

struct Failure(OtflowStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::DimensionMismatch(_) => OtflowStatus::DimensionMismatch,
            Error::InvalidConfig(_) => OtflowStatus::InvalidConfig,
            Error::NonFinite(_) | Error::NonFiniteScore { .. } => OtflowStatus::NonFinite,
            Error::Io(_) => OtflowStatus::Io,
            Error::BadMagic(_) | Error::Truncated(_) | Error::Image(_) => OtflowStatus::Format,
            _ => OtflowStatus::InvalidArgument,
        };
        Failure(status, e.to_string())
    }
}

fn fail<T>(status: OtflowStatus, msg: &str) -> Result<T, Failure> {
    Err(Failure(status, msg.to_string()))
}

/// Runs `f`, recording any error or panic.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> OtflowStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => OtflowStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            OtflowStatus::Internal
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    // SAFETY: caller passes either null or a valid pointer.
    unsafe { p.as_ref() }.ok_or_else(|| Failure(OtflowStatus::NullPointer, format!("{what} is null")))
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Failure> {
    if p.is_null() {
        return fail(OtflowStatus::NullPointer, &format!("{what} is null"));
    }
    // SAFETY: caller guarantees `len` readable elements.
    Ok(unsafe { std::slice::from_raw_parts(p, len) })
}

unsafe fn path(p: *const c_char) -> Result<PathBuf, Failure> {
    if p.is_null() {
        return fail(OtflowStatus::NullPointer, "path is null");
    }
    // SAFETY: caller passes a NUL-terminated string.
    let s = unsafe { CStr::from_ptr(p) }
        .to_str()
        .map_err(|_| Failure(OtflowStatus::InvalidArgument, "path is not valid UTF-8".into()))?;
    Ok(PathBuf::from(s))
}

unsafe fn put_handle(out: *mut *mut OtflowFlow, h: OtflowFlow) -> Result<(), Failure> {
    if out.is_null() {
        return fail(OtflowStatus::NullPointer, "output handle pointer is null");
    }
    // SAFETY: checked non-null above.
    unsafe { *out = Box::into_raw(Box::new(h)) };
    Ok(())
}

fn image_from(data: &[f64], width: usize, height: usize, channels: usize) -> Result<Image, Failure> {
    Ok(Image::new(width, height, channels, data.to_vec())?)
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next failing call on the same thread.
#[no_mangle]
pub extern "C" fn otflow_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn otflow_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Writes the default configuration to `out`.
///
/// # Safety
/// `out` must be null or point to writable memory for one config.
#[no_mangle]
pub unsafe extern "C" fn otflow_config_default(out: *mut OtflowConfig) -> OtflowStatus {
    guard(|| {
        if out.is_null() {
            return fail(OtflowStatus::NullPointer, "config pointer is null");
        }
        // SAFETY: checked non-null.
        unsafe { *out = OtflowConfig::from(&PipelineConfig::default()) };
        Ok(())
    })
}

/// Estimates flow from `img1` to `img2`. Images are row-major, interleaved,
/// `channels` 1 or 3, values in `[0, 1]`; both sides must be multiples of 4.
/// `cfg` may be null for defaults.
///
/// # Safety
/// Image pointers must reference `width * height * channels` doubles, `cfg`
/// must be null or valid, `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn otflow_estimate(
    img1: *const f64,
    img2: *const f64,
    width: usize,
    height: usize,
    channels: usize,
    cfg: *const OtflowConfig,
    out: *mut *mut OtflowFlow,
) -> OtflowStatus {
    guard(|| {
        let len = width
            .checked_mul(height)
            .and_then(|n| n.checked_mul(channels))
            .ok_or_else(|| Failure(OtflowStatus::InvalidArgument, "image size overflows".into()))?;
        // SAFETY: forwarded caller contract.
        let (a, b) = unsafe { (slice(img1, len, "img1")?, slice(img2, len, "img2")?) };
        let cfg = if cfg.is_null() {
            PipelineConfig::default()
        } else {
            // SAFETY: non-null, caller guarantees validity.
            unsafe { *cfg }.to_pipeline()
        };
        let pair = ImagePair::new(image_from(a, width, height, channels)?, image_from(b, width, height, channels)?)?;
        let est = otflow::estimate(&pair, &cfg)?;
        let h = OtflowFlow {
            flow: est.flow().clone(),
            confidence: Some(est.confidence().clone()),
            occlusion: Some(est.occlusion().clone()),
            valid: None,
        };
        // SAFETY: forwarded caller contract.
        unsafe { put_handle(out, h) }
    })
}

/// Wraps interleaved `(u, v)` values as a full-resolution flow handle.
///
/// # Safety
/// `uv` must reference `2 * width * height` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn otflow_flow_new(
    uv: *const f64,
    width: usize,
    height: usize,
    out: *mut *mut OtflowFlow,
) -> OtflowStatus {
    guard(|| {
        let n = width
            .checked_mul(height)
            .and_then(|n| n.checked_mul(2))
            .ok_or_else(|| Failure(OtflowStatus::InvalidArgument, "flow size overflows".into()))?;
        // SAFETY: forwarded caller contract.
        let data = unsafe { slice(uv, n, "uv")? };
        let f = FlowField::new(width, height, Scale::Full, data.to_vec())?;
        // SAFETY: forwarded caller contract.
        unsafe { put_handle(out, OtflowFlow::plain(f)) }
    })
}

/// Releases a handle. Null is ignored.
///
/// # Safety
/// `flow` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn otflow_flow_free(flow: *mut OtflowFlow) {
    if !flow.is_null() {
        // SAFETY: handle came from Box::into_raw.
        drop(unsafe { Box::from_raw(flow) });
    }
}

/// Writes the flow size to `width` and `height`.
///
/// # Safety
/// `flow` must be a live handle; outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn otflow_flow_size(
    flow: *const OtflowFlow,
    width: *mut usize,
    height: *mut usize,
) -> OtflowStatus {
    guard(|| {
        // SAFETY: forwarded caller contract.
        let f = unsafe { deref(flow, "flow")? };
        if width.is_null() || height.is_null() {
            return fail(OtflowStatus::NullPointer, "size output is null");
        }
        // SAFETY: checked non-null.
        unsafe {
            *width = f.flow.width();
            *height = f.flow.height();
        }
        Ok(())
    })
}

fn copy_out(src: &[f64], dst: *mut f64, len: usize) -> Result<(), Failure> {
    if dst.is_null() {
        return fail(OtflowStatus::NullPointer, "output buffer is null");
    }
    if len != src.len() {
        return Err(Failure(
            OtflowStatus::DimensionMismatch,
            format!("output buffer holds {len} values, {} needed", src.len()),
        ));
    }
    // SAFETY: caller guarantees `len` writable doubles.
    unsafe { std::ptr::copy_nonoverlapping(src.as_ptr(), dst, len) };
    Ok(())
}

/// Copies interleaved `(u, v)` into `uv`, which holds `len = 2 * w * h`
/// doubles.
///
/// # Safety
/// `flow` must be live and `uv` writable for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn otflow_flow_copy(flow: *const OtflowFlow, uv: *mut f64, len: usize) -> OtflowStatus {
    guard(|| copy_out(unsafe { deref(flow, "flow")? }.flow.data(), uv, len))
}

/// Copies the confidence map (`w * h` doubles). Only estimated flows carry
/// one; others return `Unavailable`.
///
/// # Safety
/// `flow` must be live and `out` writable for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn otflow_flow_confidence(flow: *const OtflowFlow, out: *mut f64, len: usize) -> OtflowStatus {
    guard(|| match &unsafe { deref(flow, "flow")? }.confidence {
        Some(c) => copy_out(c.data(), out, len),
        None => fail(OtflowStatus::Unavailable, "flow has no confidence map"),
    })
}

/// Copies the occlusion map (`w * h` doubles, 1 = visible).
///
/// # Safety
/// `flow` must be live and `out` writable for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn otflow_flow_occlusion(flow: *const OtflowFlow, out: *mut f64, len: usize) -> OtflowStatus {
    guard(|| match &unsafe { deref(flow, "flow")? }.occlusion {
        Some(o) => copy_out(o.data(), out, len),
        None => fail(OtflowStatus::Unavailable, "flow has no occlusion map"),
    })
}

/// Reads a Middlebury `.flo` file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn otflow_read_flo(path: *const c_char, out: *mut *mut OtflowFlow) -> OtflowStatus {
    guard(|| {
        let f = read_flo_file(unsafe { self::path(path)? })?;
        unsafe { put_handle(out, OtflowFlow::plain(f)) }
    })
}

/// Writes a Middlebury `.flo` file.
///
/// # Safety
/// `flow` must be live; `path` must be a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn otflow_write_flo(flow: *const OtflowFlow, path: *const c_char) -> OtflowStatus {
    guard(|| {
        let f = unsafe { deref(flow, "flow")? };
        write_flo_file(&f.flow, unsafe { self::path(path)? })?;
        Ok(())
    })
}

/// Reads a KITTI 16-bit flow PNG; its validity mask is used by
/// [`otflow_evaluate`] when the handle is passed as ground truth.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn otflow_read_kitti_png(path: *const c_char, out: *mut *mut OtflowFlow) -> OtflowStatus {
    guard(|| {
        let (f, valid) = read_kitti_png_file(unsafe { self::path(path)? })?;
        unsafe { put_handle(out, OtflowFlow { valid: Some(valid), ..OtflowFlow::plain(f) }) }
    })
}

/// Compares `pred` against `gt`. `visible` is an optional `w * h` byte mask
/// (nonzero = not occluded) enabling `epe_nonocc`.
///
/// # Safety
/// Handles must be live, `visible` null or `w * h` bytes, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn otflow_evaluate(
    pred: *const OtflowFlow,
    gt: *const OtflowFlow,
    visible: *const u8,
    out: *mut OtflowMetrics,
) -> OtflowStatus {
    guard(|| {
        let (p, g) = unsafe { (deref(pred, "pred")?, deref(gt, "gt")?) };
        if out.is_null() {
            return fail(OtflowStatus::NullPointer, "metrics output is null");
        }
        let (w, h) = (g.flow.width(), g.flow.height());
        let mask = if visible.is_null() {
            None
        } else {
            let bytes = unsafe { slice(visible, w * h, "visible")? };
            let data = bytes.iter().map(|&b| if b != 0 { 1.0 } else { 0.0 }).collect();
            Some(OcclusionMap::new(w, h, Scale::Full, data)?)
        };
        let r = evaluate(&p.flow, &g.flow, g.valid.as_ref(), mask.as_ref())?;
        let m = OtflowMetrics {
            epe_all: r.epe_all,
            epe_nonocc: r.epe_nonocc.unwrap_or(f64::NAN),
            outlier_1px: r.outlier_1px,
            outlier_3px: r.outlier_3px,
            outlier_5px: r.outlier_5px,
            fl_all: r.fl_all,
        };
        unsafe { *out = m };
        Ok(())
    })
}
