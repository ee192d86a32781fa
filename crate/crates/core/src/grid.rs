//! Dense grid value types shared by every stage of the pipeline.
//!
//! All grids are row-major: pixel `(u, v)` (column `u`, row `v`) lives at
//! linear index `v * width + u`. Every grid carries a [`Scale`] tag so that
//! quarter-resolution and full-resolution values cannot be mixed silently.

use std::marker::PhantomData;

use crate::error::{Error, Result};

/// Row-major linear index of column `u`, row `v` in a grid of the given width.
#[inline(always)]
pub fn idx(u: usize, v: usize, width: usize) -> usize {
    v * width + u
}

/// Resolution of a grid relative to the input images.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scale {
    /// Full input resolution.
    Full,
    /// One quarter of the input resolution in each axis.
    Quarter,
}

impl Scale {
    pub fn divisor(self) -> usize {
        match self {
            Scale::Full => 1,
            Scale::Quarter => 4,
        }
    }

    pub fn from_divisor(d: usize) -> Result<Self> {
        match d {
            1 => Ok(Scale::Full),
            4 => Ok(Scale::Quarter),
            other => Err(Error::ValueOutOfRange(format!("scale divisor {other} (expected 1 or 4)"))),
        }
    }
}

/// Checks the invariants of a grid type.
pub trait Validate {
    fn validate(&self) -> Result<()>;
}

fn check_finite(data: &[f64], what: &str) -> Result<()> {
    match data.iter().position(|x| !x.is_finite()) {
        Some(i) => Err(Error::NonFinite(format!("{what} entry {i}"))),
        None => Ok(()),
    }
}

/// Dense two-channel displacement field in pixels of its own scale.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    width: usize,
    height: usize,
    scale: Scale,
    data: Vec<f64>,
}

impl FlowField {
    /// Builds a flow field from interleaved `(du, dv)` data.
    pub fn new(width: usize, height: usize, scale: Scale, data: Vec<f64>) -> Result<Self> {
        let f = Self { width, height, scale, data };
        f.validate()?;
        Ok(f)
    }

    pub fn zeros(width: usize, height: usize, scale: Scale) -> Self {
        Self { width, height, scale, data: vec![0.0; width * height * 2] }
    }

    /// Fills every pixel from `f(u, v) -> [du, dv]`.
    pub fn from_fn(
        width: usize,
        height: usize,
        scale: Scale,
        mut f: impl FnMut(usize, usize) -> [f64; 2],
    ) -> Self {
        let mut data = Vec::with_capacity(width * height * 2);
        for v in 0..height {
            for u in 0..width {
                data.extend_from_slice(&f(u, v));
            }
        }
        Self { width, height, scale, data }
    }

    pub(crate) fn from_raw(width: usize, height: usize, scale: Scale, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), width * height * 2);
        Self { width, height, scale, data }
    }

    pub fn width(&self) -> usize {
        self.width
    }
    pub fn height(&self) -> usize {
        self.height
    }
    pub fn scale(&self) -> Scale {
        self.scale
    }
    pub fn len(&self) -> usize {
        self.width * self.height
    }
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
    /// Interleaved `(du, dv)` values, row-major.
    pub fn data(&self) -> &[f64] {
        &self.data
    }
    pub(crate) fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }
    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, u: usize, v: usize) -> [f64; 2] {
        let i = 2 * idx(u, v, self.width);
        [self.data[i], self.data[i + 1]]
    }

    #[inline]
    pub fn at(&self, i: usize) -> [f64; 2] {
        [self.data[2 * i], self.data[2 * i + 1]]
    }

    /// Sets one pixel; the value must be finite.
    pub fn set(&mut self, u: usize, v: usize, value: [f64; 2]) -> Result<()> {
        if !value[0].is_finite() || !value[1].is_finite() {
            return Err(Error::NonFinite(format!("flow at ({u}, {v})")));
        }
        let i = 2 * idx(u, v, self.width);
        self.data[i] = value[0];
        self.data[i + 1] = value[1];
        Ok(())
    }

    /// Extracts one channel (0 = u, 1 = v) as a plain row-major vector.
    pub fn channel(&self, c: usize) -> Vec<f64> {
        self.data.iter().skip(c).step_by(2).copied().collect()
    }

    /// Bilinear sample at a fractional position, `None` outside
    /// `[0, width - 1] x [0, height - 1]`.
    pub fn sample_bilinear(&self, x: f64, y: f64) -> Option<[f64; 2]> {
        let (w, h) = (self.width, self.height);
        if w == 0 || h == 0 || !(x >= 0.0 && y >= 0.0 && x <= (w - 1) as f64 && y <= (h - 1) as f64) {
            return None;
        }
        let (x0, y0) = (x.floor() as usize, y.floor() as usize);
        let (x1, y1) = ((x0 + 1).min(w - 1), (y0 + 1).min(h - 1));
        let (fx, fy) = (x - x0 as f64, y - y0 as f64);
        let mut out = [0.0; 2];
        for (c, o) in out.iter_mut().enumerate() {
            let g = |u: usize, v: usize| self.data[2 * idx(u, v, w) + c];
            let top = g(x0, y0) * (1.0 - fx) + g(x1, y0) * fx;
            let bottom = g(x0, y1) * (1.0 - fx) + g(x1, y1) * fx;
            *o = top * (1.0 - fy) + bottom * fy;
        }
        Some(out)
    }

    pub fn same_shape<T: GridShape>(&self, other: &T) -> bool {
        self.width == other.width() && self.height == other.height() && self.scale == other.scale()
    }
}

impl Validate for FlowField {
    fn validate(&self) -> Result<()> {
        if self.data.len() != self.width * self.height * 2 {
            return Err(Error::DimensionMismatch(format!(
                "flow {}x{} needs {} values, got {}",
                self.width,
                self.height,
                self.width * self.height * 2,
                self.data.len()
            )));
        }
        check_finite(&self.data, "flow")
    }
}

/// Anything with a width, height and scale tag.
pub trait GridShape {
    fn width(&self) -> usize;
    fn height(&self) -> usize;
    fn scale(&self) -> Scale;
}

impl GridShape for FlowField {
    fn width(&self) -> usize {
        self.width
    }
    fn height(&self) -> usize {
        self.height
    }
    fn scale(&self) -> Scale {
        self.scale
    }
}

/// Marker for what a [`UnitMap`] holds.
pub trait MapKind: Clone + std::fmt::Debug + PartialEq {
    const NAME: &'static str;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Confidence;
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Occlusion;

impl MapKind for Confidence {
    const NAME: &'static str = "confidence";
}
impl MapKind for Occlusion {
    const NAME: &'static str = "occlusion";
}

/// Per-pixel scalar in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitMap<K: MapKind> {
    width: usize,
    height: usize,
    scale: Scale,
    data: Vec<f64>,
    _kind: PhantomData<K>,
}

/// Probability mass concentrated around the best match.
pub type ConfidenceMap = UnitMap<Confidence>;
/// Probability that a pixel has a valid correspondence (1 = visible).
pub type OcclusionMap = UnitMap<Occlusion>;

impl<K: MapKind> UnitMap<K> {
    pub fn new(width: usize, height: usize, scale: Scale, data: Vec<f64>) -> Result<Self> {
        let m = Self::from_raw(width, height, scale, data);
        m.validate()?;
        Ok(m)
    }

    pub fn filled(width: usize, height: usize, scale: Scale, value: f64) -> Result<Self> {
        Self::new(width, height, scale, vec![value; width * height])
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        scale: Scale,
        mut f: impl FnMut(usize, usize) -> f64,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height);
        for v in 0..height {
            for u in 0..width {
                data.push(f(u, v));
            }
        }
        Self::new(width, height, scale, data)
    }

    pub(crate) fn from_raw(width: usize, height: usize, scale: Scale, data: Vec<f64>) -> Self {
        Self { width, height, scale, data, _kind: PhantomData }
    }

    pub fn width(&self) -> usize {
        self.width
    }
    pub fn height(&self) -> usize {
        self.height
    }
    pub fn scale(&self) -> Scale {
        self.scale
    }
    pub fn len(&self) -> usize {
        self.data.len()
    }
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
    pub fn data(&self) -> &[f64] {
        &self.data
    }
    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, u: usize, v: usize) -> f64 {
        self.data[idx(u, v, self.width)]
    }

    /// True when every value is exactly 0 or 1.
    pub fn is_binary(&self) -> bool {
        self.data.iter().all(|&x| x == 0.0 || x == 1.0)
    }

    /// Number of entries at or above one half.
    pub fn count_set(&self) -> usize {
        self.data.iter().filter(|&&x| x >= 0.5).count()
    }
}

impl<K: MapKind> GridShape for UnitMap<K> {
    fn width(&self) -> usize {
        self.width
    }
    fn height(&self) -> usize {
        self.height
    }
    fn scale(&self) -> Scale {
        self.scale
    }
}

impl<K: MapKind> Validate for UnitMap<K> {
    fn validate(&self) -> Result<()> {
        if self.data.len() != self.width * self.height {
            return Err(Error::DimensionMismatch(format!(
                "{} map {}x{} needs {} values, got {}",
                K::NAME,
                self.width,
                self.height,
                self.width * self.height,
                self.data.len()
            )));
        }
        check_finite(&self.data, K::NAME)?;
        if let Some(i) = self.data.iter().position(|x| !(0.0..=1.0).contains(x)) {
            return Err(Error::ValueOutOfRange(format!(
                "{} entry {i} = {} outside [0, 1]",
                K::NAME,
                self.data[i]
            )));
        }
        Ok(())
    }
}

/// Returns a dimension-mismatch error unless both grids share shape and scale.
pub fn ensure_same_shape(a: &impl GridShape, b: &impl GridShape, what: &str) -> Result<()> {
    if a.width() != b.width() || a.height() != b.height() || a.scale() != b.scale() {
        return Err(Error::DimensionMismatch(format!(
            "{what}: {}x{} (1/{}) vs {}x{} (1/{})",
            a.width(),
            a.height(),
            a.scale().divisor(),
            b.width(),
            b.height(),
            b.scale().divisor()
        )));
    }
    Ok(())
}

/// Grayscale or RGB image with values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f64>,
}

impl Image {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        let img = Self { width, height, channels, data };
        img.validate()?;
        Ok(img)
    }

    pub fn gray(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        Self::new(width, height, 1, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }
    pub fn height(&self) -> usize {
        self.height
    }
    pub fn channels(&self) -> usize {
        self.channels
    }
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Luma (Rec. 601) for RGB input, the single channel otherwise.
    pub fn to_gray(&self) -> Vec<f64> {
        match self.channels {
            1 => self.data.clone(),
            _ => self
                .data
                .chunks_exact(3)
                .map(|p| 0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2])
                .collect(),
        }
    }
}

impl Validate for Image {
    fn validate(&self) -> Result<()> {
        if self.channels != 1 && self.channels != 3 {
            return Err(Error::DimensionMismatch(format!("{} channels (expected 1 or 3)", self.channels)));
        }
        if self.data.len() != self.width * self.height * self.channels {
            return Err(Error::DimensionMismatch(format!(
                "image {}x{}x{} needs {} values, got {}",
                self.width,
                self.height,
                self.channels,
                self.width * self.height * self.channels,
                self.data.len()
            )));
        }
        check_finite(&self.data, "image")?;
        if let Some(i) = self.data.iter().position(|x| !(0.0..=1.0).contains(x)) {
            return Err(Error::ValueOutOfRange(format!("image entry {i} = {} outside [0, 1]", self.data[i])));
        }
        Ok(())
    }
}

/// Two frames of identical dimensions, both divisible by 4.
#[derive(Debug, Clone, PartialEq)]
pub struct ImagePair {
    pub first: Image,
    pub second: Image,
}

impl ImagePair {
    pub fn new(first: Image, second: Image) -> Result<Self> {
        let pair = Self { first, second };
        pair.validate()?;
        Ok(pair)
    }

    pub fn width(&self) -> usize {
        self.first.width
    }
    pub fn height(&self) -> usize {
        self.first.height
    }
}

impl Validate for ImagePair {
    fn validate(&self) -> Result<()> {
        self.first.validate()?;
        self.second.validate()?;
        let (a, b) = (&self.first, &self.second);
        if a.width != b.width || a.height != b.height {
            return Err(Error::DimensionMismatch(format!(
                "image sizes differ: {}x{} vs {}x{}",
                a.width, a.height, b.width, b.height
            )));
        }
        ensure_divisible_by_4(a.width, a.height)
    }
}

pub(crate) fn ensure_divisible_by_4(width: usize, height: usize) -> Result<()> {
    if width == 0 || height == 0 || !width.is_multiple_of(4) || !height.is_multiple_of(4) {
        return Err(Error::DimensionMismatch(format!(
            "image {width}x{height} is not a non-empty multiple of 4 in both axes"
        )));
    }
    Ok(())
}

/// Flow, confidence and occlusion at quarter resolution plus the local
/// refinement step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct RefineState {
    pub flow: FlowField,
    pub confidence: ConfidenceMap,
    pub occlusion: OcclusionMap,
    pub step: usize,
}

impl Validate for RefineState {
    fn validate(&self) -> Result<()> {
        self.flow.validate()?;
        self.confidence.validate()?;
        self.occlusion.validate()?;
        ensure_same_shape(&self.flow, &self.confidence, "refine state flow/confidence")?;
        ensure_same_shape(&self.flow, &self.occlusion, "refine state flow/occlusion")?;
        if self.flow.scale() != Scale::Quarter {
            return Err(Error::DimensionMismatch("refine state must be at quarter resolution".into()));
        }
        Ok(())
    }
}
