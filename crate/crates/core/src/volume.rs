//! All-pairs 4-D volumes over a quarter-resolution grid.
//!
//! Both volumes are stored as an `N x N` matrix with `N = h * w`, row index
//! = source pixel, column index = target pixel, each in row-major pixel order.

use crate::error::{Error, Result};
use crate::grid::{idx, Validate};

/// Similarity score between every source and target pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct CostVolume {
    h: usize,
    w: usize,
    data: Vec<f64>,
}

impl CostVolume {
    pub fn new(h: usize, w: usize, data: Vec<f64>) -> Result<Self> {
        let c = Self { h, w, data };
        c.validate()?;
        Ok(c)
    }

    pub(crate) fn from_raw(h: usize, w: usize, data: Vec<f64>) -> Self {
        Self { h, w, data }
    }

    pub fn h(&self) -> usize {
        self.h
    }
    pub fn w(&self) -> usize {
        self.w
    }
    /// Number of pixels on either side.
    pub fn pixels(&self) -> usize {
        self.h * self.w
    }
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Scores of source pixel `src` against every target pixel.
    #[inline]
    pub fn row(&self, src: usize) -> &[f64] {
        let n = self.pixels();
        &self.data[src * n..(src + 1) * n]
    }

    /// `C(u, v, u', v')`.
    #[inline]
    pub fn get(&self, u: usize, v: usize, ut: usize, vt: usize) -> f64 {
        self.row(idx(u, v, self.w))[idx(ut, vt, self.w)]
    }
}

impl Validate for CostVolume {
    fn validate(&self) -> Result<()> {
        let n = self.h * self.w;
        if self.data.len() != n * n {
            return Err(Error::DimensionMismatch(format!(
                "cost volume {}x{} needs {} scores, got {}",
                self.h,
                self.w,
                n * n,
                self.data.len()
            )));
        }
        if let Some(i) = self.data.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFiniteScore { index: i });
        }
        Ok(())
    }
}

/// Transport plan over valid pixels plus the dustbin row, column and corner.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityVolume {
    h: usize,
    w: usize,
    data: Vec<f64>,
    dustbin_src: Vec<f64>,
    dustbin_tgt: Vec<f64>,
    corner: f64,
}

impl ProbabilityVolume {
    /// Builds a plan without checking row normalization; use
    /// [`Validate::validate`] for the full invariant check.
    pub fn new(
        h: usize,
        w: usize,
        data: Vec<f64>,
        dustbin_src: Vec<f64>,
        dustbin_tgt: Vec<f64>,
        corner: f64,
    ) -> Result<Self> {
        let n = h * w;
        if data.len() != n * n || dustbin_src.len() != n || dustbin_tgt.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "probability volume {h}x{w}: data {}, dustbin_src {}, dustbin_tgt {}",
                data.len(),
                dustbin_src.len(),
                dustbin_tgt.len()
            )));
        }
        let all = data.iter().chain(&dustbin_src).chain(&dustbin_tgt).chain(std::iter::once(&corner));
        for x in all {
            if !x.is_finite() {
                return Err(Error::NonFinite("probability volume".into()));
            }
            if *x < 0.0 {
                return Err(Error::ValueOutOfRange(format!("negative transport mass {x}")));
            }
        }
        Ok(Self { h, w, data, dustbin_src, dustbin_tgt, corner })
    }

    pub(crate) fn from_raw(
        h: usize,
        w: usize,
        data: Vec<f64>,
        dustbin_src: Vec<f64>,
        dustbin_tgt: Vec<f64>,
        corner: f64,
    ) -> Self {
        Self { h, w, data, dustbin_src, dustbin_tgt, corner }
    }

    pub fn h(&self) -> usize {
        self.h
    }
    pub fn w(&self) -> usize {
        self.w
    }
    pub fn pixels(&self) -> usize {
        self.h * self.w
    }
    pub fn data(&self) -> &[f64] {
        &self.data
    }
    pub fn dustbin_src(&self) -> &[f64] {
        &self.dustbin_src
    }
    pub fn dustbin_tgt(&self) -> &[f64] {
        &self.dustbin_tgt
    }
    pub fn corner(&self) -> f64 {
        self.corner
    }

    /// Transport mass from source pixel `src` to every valid target.
    #[inline]
    pub fn row(&self, src: usize) -> &[f64] {
        let n = self.pixels();
        &self.data[src * n..(src + 1) * n]
    }

    /// `P(u, v, u', v')`.
    #[inline]
    pub fn get(&self, u: usize, v: usize, ut: usize, vt: usize) -> f64 {
        self.row(idx(u, v, self.w))[idx(ut, vt, self.w)]
    }
}

/// Tolerance on the per-source row sum accepted by [`Validate`].
pub const ROW_SUM_TOL: f64 = 1e-9;

impl Validate for ProbabilityVolume {
    fn validate(&self) -> Result<()> {
        let n = self.pixels();
        if self.data.len() != n * n || self.dustbin_src.len() != n || self.dustbin_tgt.len() != n {
            return Err(Error::DimensionMismatch("probability volume buffers".into()));
        }
        let all = self.data.iter().chain(&self.dustbin_src).chain(&self.dustbin_tgt);
        for x in all.chain(std::iter::once(&self.corner)) {
            if !x.is_finite() {
                return Err(Error::NonFinite("probability volume".into()));
            }
            if *x < 0.0 {
                return Err(Error::ValueOutOfRange(format!("negative transport mass {x}")));
            }
        }
        for s in 0..n {
            let sum: f64 = self.row(s).iter().sum::<f64>() + self.dustbin_src[s];
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::ValueOutOfRange(format!("source row {s} sums to {sum}")));
            }
        }
        Ok(())
    }
}
