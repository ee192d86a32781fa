//! Middlebury color-wheel flow rendering.

use std::f64::consts::PI;
use std::sync::OnceLock;

use image::RgbImage;

use crate::grid::FlowField;

/// Segment lengths of the wheel: red-yellow, yellow-green, green-cyan,
/// cyan-blue, blue-magenta, magenta-red.
const SEGMENTS: [usize; 6] = [15, 6, 4, 11, 13, 6];

/// The 55 wheel colors, channels in `[0, 255]`.
pub fn color_wheel() -> &'static [[f64; 3]] {
    static WHEEL: OnceLock<Vec<[f64; 3]>> = OnceLock::new();
    WHEEL.get_or_init(|| {
        let mut wheel = Vec::with_capacity(SEGMENTS.iter().sum());
        // Each segment ramps one channel up or down while the others are fixed.
        let ramps: [(usize, bool, [f64; 3]); 6] = [
            (1, true, [255.0, 0.0, 0.0]),
            (0, false, [255.0, 255.0, 0.0]),
            (2, true, [0.0, 255.0, 0.0]),
            (1, false, [0.0, 255.0, 255.0]),
            (0, true, [0.0, 0.0, 255.0]),
            (2, false, [255.0, 0.0, 255.0]),
        ];
        for (&n, &(ch, up, base)) in SEGMENTS.iter().zip(ramps.iter()) {
            for i in 0..n {
                let mut c = base;
                let t = (255.0 * i as f64 / n as f64).floor();
                c[ch] = if up { t } else { 255.0 - t };
                wheel.push(c);
            }
        }
        wheel
    })
}

/// Fully saturated color for a flow direction `atan2(dv, du)`, channels in
/// `[0, 1]`.
pub fn wheel_color(angle: f64) -> [f64; 3] {
    let wheel = color_wheel();
    let n = wheel.len();
    // Middlebury orientation: the wheel is indexed by the angle of -flow.
    let a = (-angle.sin()).atan2(-angle.cos()) / PI;
    let fk = (a + 1.0) / 2.0 * (n - 1) as f64;
    let k0 = (fk.floor() as usize).min(n - 1);
    let k1 = (k0 + 1) % n;
    let f = fk - k0 as f64;
    let mut out = [0.0; 3];
    for (c, o) in out.iter_mut().enumerate() {
        *o = ((1.0 - f) * wheel[k0][c] + f * wheel[k1][c]) / 255.0;
    }
    out
}

/// Color of a single flow vector already divided by the normalizing radius.
pub fn flow_color(du: f64, dv: f64) -> [u8; 3] {
    let rad = (du * du + dv * dv).sqrt();
    if rad == 0.0 {
        return [255; 3];
    }
    let base = wheel_color(dv.atan2(du));
    let mut px = [0u8; 3];
    for c in 0..3 {
        let col = if rad <= 1.0 { 1.0 - rad * (1.0 - base[c]) } else { base[c] * 0.75 };
        px[c] = (255.0 * col).floor().clamp(0.0, 255.0) as u8;
    }
    px
}

/// Nearest-rank 99th percentile of the flow magnitudes.
pub fn percentile_99(f: &FlowField) -> f64 {
    let mut mags: Vec<f64> = f.data().chunks_exact(2).map(|p| (p[0] * p[0] + p[1] * p[1]).sqrt()).collect();
    if mags.is_empty() {
        return 0.0;
    }
    mags.sort_by(f64::total_cmp);
    let rank = ((0.99 * mags.len() as f64).ceil() as usize).clamp(1, mags.len());
    mags[rank - 1]
}

/// Renders flow with the color wheel. Magnitudes are normalized by
/// `max_mag`, defaulting to the 99th percentile; larger vectors are drawn
/// darkened. Zero flow is white.
pub fn visualize_flow(f: &FlowField, max_mag: Option<f64>) -> RgbImage {
    let mut norm = max_mag.unwrap_or_else(|| percentile_99(f));
    if !(norm > 0.0) || !norm.is_finite() {
        norm = f.data().chunks_exact(2).map(|p| (p[0] * p[0] + p[1] * p[1]).sqrt()).fold(0.0, f64::max);
    }
    if !(norm > 0.0) {
        norm = 1.0;
    }
    let mut img = RgbImage::new(f.width() as u32, f.height() as u32);
    for (i, px) in img.pixels_mut().enumerate() {
        let [du, dv] = f.at(i);
        px.0 = flow_color(du / norm, dv / norm);
    }
    img
}
