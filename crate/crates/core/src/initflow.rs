//! Initial flow, confidence and occlusion read off the transport plan.
//!
//! For every source pixel the peak target is the valid target with the most
//! mass (smallest row-major index on ties). A square window of radius `r`
//! around the peak, clipped to the grid, defines the mass-weighted centroid
//! (the flow target) and the confidence (the window mass). Occlusion is the
//! total valid mass of the row.
//!
//! Window sums and full-row sums both run in row-major target order, so the
//! window mass never exceeds the full mass even after rounding.

use crate::error::{Error, Result};
use crate::grid::{idx, ConfidenceMap, FlowField, OcclusionMap, Scale};
use crate::volume::ProbabilityVolume;

/// Window around the transport peak.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowSpec {
    /// Radius in quarter-resolution cells.
    pub radius: usize,
    /// Positive stabilizer added to the centroid denominator.
    pub eps_denom: f64,
}

impl Default for WindowSpec {
    fn default() -> Self {
        Self { radius: 2, eps_denom: 1e-8 }
    }
}

impl WindowSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.eps_denom > 0.0) || !self.eps_denom.is_finite() {
            return Err(Error::InvalidConfig(format!("eps_denom {} must be > 0", self.eps_denom)));
        }
        Ok(())
    }
}

/// Index of the largest entry; the first one wins ties.
pub fn peak_index(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in row.iter().enumerate() {
        if x > row[best] {
            best = i;
        }
    }
    best
}

struct Window {
    u0: usize,
    u1: usize,
    v0: usize,
    v1: usize,
}

fn window(row: &[f64], w: usize, h: usize, radius: usize) -> Window {
    let peak = peak_index(row);
    let (pu, pv) = (peak % w, peak / w);
    Window {
        u0: pu.saturating_sub(radius),
        u1: (pu + radius).min(w - 1),
        v0: pv.saturating_sub(radius),
        v1: (pv + radius).min(h - 1),
    }
}

/// Window mass plus the mass-weighted column and row sums.
fn window_moments(row: &[f64], w: usize, win: &Window) -> (f64, f64, f64) {
    let (mut mass, mut mu, mut mv) = (0.0, 0.0, 0.0);
    for v in win.v0..=win.v1 {
        for u in win.u0..=win.u1 {
            let p = row[idx(u, v, w)];
            mass += p;
            mu += p * u as f64;
            mv += p * v as f64;
        }
    }
    (mass, mu, mv)
}

/// Flow from each source pixel to its windowed centroid, in quarter-res cells.
pub fn init_flow(p: &ProbabilityVolume, spec: &WindowSpec) -> Result<FlowField> {
    spec.validate()?;
    let (h, w) = (p.h(), p.w());
    let mut data = Vec::with_capacity(2 * h * w);
    for v in 0..h {
        for u in 0..w {
            let row = p.row(idx(u, v, w));
            let win = window(row, w, h, spec.radius);
            let (mass, mu, mv) = window_moments(row, w, &win);
            let denom = mass + spec.eps_denom;
            data.push(mu / denom - u as f64);
            data.push(mv / denom - v as f64);
        }
    }
    Ok(FlowField::from_raw(w, h, Scale::Quarter, data))
}

/// Transport mass inside the window around each row's peak.
pub fn init_confidence(p: &ProbabilityVolume, spec: &WindowSpec) -> Result<ConfidenceMap> {
    spec.validate()?;
    let (h, w) = (p.h(), p.w());
    let data = (0..h * w)
        .map(|s| {
            let row = p.row(s);
            let win = window(row, w, h, spec.radius);
            window_moments(row, w, &win).0.clamp(0.0, 1.0)
        })
        .collect();
    Ok(ConfidenceMap::from_raw(w, h, Scale::Quarter, data))
}

/// Total valid (non-dustbin) mass of each source row.
pub fn init_occlusion(p: &ProbabilityVolume) -> OcclusionMap {
    let (h, w) = (p.h(), p.w());
    let data = (0..h * w).map(|s| p.row(s).iter().sum::<f64>().clamp(0.0, 1.0)).collect();
    OcclusionMap::from_raw(w, h, Scale::Quarter, data)
}
