//! Seeded synthetic scenes with analytic ground truth.
//!
//! Textures are sums of random sinusoids with wavelengths between 4 and 16
//! pixels. Both frames evaluate the texture analytically: the first at pixel
//! centers, the second at the inverse-mapped positions, so the ground truth
//! carries no resampling error.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::grid::{ensure_divisible_by_4, FlowField, Image, ImagePair, OcclusionMap, Scale};

const COMPONENTS: usize = 256;
const MIN_WAVELENGTH: f64 = 4.0;
const MAX_WAVELENGTH: f64 = 16.0;
const MIN_DET: f64 = 1e-6;

/// Axis-aligned rectangle in frame-1 pixel coordinates, half-open.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl Rect {
    fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.x && x < self.x + self.w && y >= self.y && y < self.y + self.h
    }
}

/// A textured rectangle translating by `(du, dv)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Layer {
    pub rect: Rect,
    pub du: f64,
    pub dv: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Motion {
    Translation { du: f64, dv: f64 },
    /// `x' = m[0][0] x + m[0][1] y + m[0][2]`, `y' = m[1][0] x + m[1][1] y + m[1][2]`.
    Affine([[f64; 3]; 2]),
    /// Background translation plus rectangles; later layers are nearer.
    Layered { background: (f64, f64), layers: Vec<Layer> },
}

impl Motion {
    /// Rotation by `angle` radians and isotropic `zoom` about the image
    /// center, followed by a shift.
    pub fn similarity(width: usize, height: usize, angle: f64, zoom: f64, shift: (f64, f64)) -> Self {
        let (cx, cy) = ((width as f64 - 1.0) / 2.0, (height as f64 - 1.0) / 2.0);
        let (c, s) = (zoom * angle.cos(), zoom * angle.sin());
        Motion::Affine([
            [c, -s, cx - c * cx + s * cy + shift.0],
            [s, c, cy - s * cx - c * cy + shift.1],
        ])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    pub width: usize,
    pub height: usize,
    pub motion: Motion,
    pub texture_seed: u64,
}

/// Rendered frames with forward ground truth; `occlusion` is 1 where the
/// pixel stays visible in the second frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub pair: ImagePair,
    pub flow: FlowField,
    pub occlusion: OcclusionMap,
}

#[derive(Debug, Clone)]
struct Texture {
    waves: Vec<[f64; 4]>,
    norm: f64,
}

impl Texture {
    fn new(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let waves = (0..COMPONENTS)
            .map(|_| {
                let theta = rng.gen_range(0.0..std::f64::consts::PI);
                let lambda = (rng.gen_range(MIN_WAVELENGTH.ln()..MAX_WAVELENGTH.ln())).exp();
                let k = 2.0 * std::f64::consts::PI / lambda;
                [k * theta.cos(), k * theta.sin(), rng.gen_range(0.0..2.0 * std::f64::consts::PI), 1.0]
            })
            .collect();
        Self { waves, norm: (COMPONENTS as f64 / 2.0).sqrt() }
    }

    fn eval(&self, x: f64, y: f64) -> f64 {
        let s: f64 = self.waves.iter().map(|w| w[3] * (w[0] * x + w[1] * y + w[2]).sin()).sum();
        (0.5 + 0.17 * s / self.norm).clamp(0.0, 1.0)
    }
}

fn affine_inverse(m: &[[f64; 3]; 2]) -> Result<[[f64; 3]; 2]> {
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    if !(det.abs() >= MIN_DET) {
        return Err(Error::DegenerateAffine(det));
    }
    let (a, b, c, d) = (m[1][1] / det, -m[0][1] / det, -m[1][0] / det, m[0][0] / det);
    Ok([[a, b, -(a * m[0][2] + b * m[1][2])], [c, d, -(c * m[0][2] + d * m[1][2])]])
}

fn apply(m: &[[f64; 3]; 2], x: f64, y: f64) -> (f64, f64) {
    (m[0][0] * x + m[0][1] * y + m[0][2], m[1][0] * x + m[1][1] * y + m[1][2])
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        ensure_divisible_by_4(self.width, self.height)?;
        let finite = match &self.motion {
            Motion::Translation { du, dv } => du.is_finite() && dv.is_finite(),
            Motion::Affine(m) => {
                affine_inverse(m)?;
                m.iter().flatten().all(|x| x.is_finite())
            }
            Motion::Layered { background, layers } => {
                background.0.is_finite()
                    && background.1.is_finite()
                    && layers.iter().all(|l| {
                        [l.rect.x, l.rect.y, l.rect.w, l.rect.h, l.du, l.dv].iter().all(|x| x.is_finite())
                            && l.rect.w >= 0.0
                            && l.rect.h >= 0.0
                    })
            }
        };
        if !finite {
            return Err(Error::InvalidConfig("scene motion parameters must be finite".into()));
        }
        Ok(())
    }

    /// Index of the nearest layer covering frame-1 position `(x, y)`.
    fn layer_at_source(layers: &[Layer], x: f64, y: f64) -> Option<usize> {
        layers.iter().rposition(|l| l.rect.contains(x, y))
    }

    /// Index of the nearest layer covering frame-2 position `(x, y)`.
    fn layer_at_target(layers: &[Layer], x: f64, y: f64) -> Option<usize> {
        layers.iter().rposition(|l| l.rect.contains(x - l.du, y - l.dv))
    }

    /// Analytic forward flow at frame-1 position `(x, y)`.
    pub fn forward_at(&self, x: f64, y: f64) -> [f64; 2] {
        match &self.motion {
            Motion::Translation { du, dv } => [*du, *dv],
            Motion::Affine(m) => {
                let (xp, yp) = apply(m, x, y);
                [xp - x, yp - y]
            }
            Motion::Layered { background, layers } => match Self::layer_at_source(layers, x, y) {
                Some(k) => [layers[k].du, layers[k].dv],
                None => [background.0, background.1],
            },
        }
    }

    /// Analytic backward flow at frame-2 position `(x, y)`.
    pub fn backward_at(&self, x: f64, y: f64) -> Result<[f64; 2]> {
        Ok(match &self.motion {
            Motion::Translation { du, dv } => [-du, -dv],
            Motion::Affine(m) => {
                let (xs, ys) = apply(&affine_inverse(m)?, x, y);
                [xs - x, ys - y]
            }
            Motion::Layered { background, layers } => match Self::layer_at_target(layers, x, y) {
                Some(k) => [-layers[k].du, -layers[k].dv],
                None => [-background.0, -background.1],
            },
        })
    }

    /// Dense backward ground truth at full resolution.
    pub fn backward_flow(&self) -> Result<FlowField> {
        self.validate()?;
        let mut data = Vec::with_capacity(self.width * self.height * 2);
        for v in 0..self.height {
            for u in 0..self.width {
                data.extend_from_slice(&self.backward_at(u as f64, v as f64)?);
            }
        }
        FlowField::new(self.width, self.height, Scale::Full, data)
    }
}

/// Renders the two frames, forward flow and visibility of `spec`.
pub fn synth_scene(spec: &SceneSpec) -> Result<Scene> {
    spec.validate()?;
    let (w, h) = (spec.width, spec.height);
    let (wf, hf) = ((w - 1) as f64, (h - 1) as f64);
    let bg_tex = Texture::new(spec.texture_seed);

    let mut first = Vec::with_capacity(w * h);
    let mut second = Vec::with_capacity(w * h);
    let mut flow = Vec::with_capacity(w * h * 2);
    let mut occ = Vec::with_capacity(w * h);

    let inside = |x: f64, y: f64| x >= 0.0 && y >= 0.0 && x <= wf && y <= hf;

    match &spec.motion {
        Motion::Translation { .. } | Motion::Affine(_) => {
            let inv = match &spec.motion {
                Motion::Translation { du, dv } => [[1.0, 0.0, -du], [0.0, 1.0, -dv]],
                Motion::Affine(m) => affine_inverse(m)?,
                Motion::Layered { .. } => unreachable!(),
            };
            for v in 0..h {
                for u in 0..w {
                    let (x, y) = (u as f64, v as f64);
                    first.push(bg_tex.eval(x, y));
                    let (xs, ys) = apply(&inv, x, y);
                    second.push(bg_tex.eval(xs, ys));
                    let f = spec.forward_at(x, y);
                    flow.extend_from_slice(&f);
                    occ.push(if inside(x + f[0], y + f[1]) { 1.0 } else { 0.0 });
                }
            }
        }
        Motion::Layered { background, layers } => {
            let (bu, bv) = *background;
            let layer_tex: Vec<Texture> = (0..layers.len())
                .map(|k| Texture::new(spec.texture_seed.wrapping_add(k as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)))
                .collect();
            for v in 0..h {
                for u in 0..w {
                    let (x, y) = (u as f64, v as f64);
                    let own = SceneSpec::layer_at_source(layers, x, y);
                    first.push(match own {
                        Some(k) => layer_tex[k].eval(x, y),
                        None => bg_tex.eval(x, y),
                    });
                    second.push(match SceneSpec::layer_at_target(layers, x, y) {
                        Some(k) => layer_tex[k].eval(x - layers[k].du, y - layers[k].dv),
                        None => bg_tex.eval(x - bu, y - bv),
                    });
                    let f = spec.forward_at(x, y);
                    flow.extend_from_slice(&f);
                    let (tx, ty) = (x + f[0], y + f[1]);
                    let covered = match (SceneSpec::layer_at_target(layers, tx, ty), own) {
                        (Some(t), Some(o)) => t > o,
                        (Some(_), None) => true,
                        (None, _) => false,
                    };
                    occ.push(if inside(tx, ty) && !covered { 1.0 } else { 0.0 });
                }
            }
        }
    }

    Ok(Scene {
        pair: ImagePair::new(Image::gray(w, h, first)?, Image::gray(w, h, second)?)?,
        flow: FlowField::new(w, h, Scale::Full, flow)?,
        occlusion: OcclusionMap::new(w, h, Scale::Full, occ)?,
    })
}
