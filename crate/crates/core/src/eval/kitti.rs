//! KITTI 16-bit PNG flow encoding.
//!
//! Each component is stored as `flow * 64 + 32768` in a 16-bit channel; the
//! third channel holds validity (0 or 1). Invalid pixels are written as zero
//! flow and decode to zero.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Seek, Write};
use std::path::Path;

use image::codecs::png::PngEncoder;
use image::{ImageBuffer, ImageFormat, Rgb};

use crate::error::{Error, Result};
use crate::grid::{ensure_same_shape, FlowField, OcclusionMap, Scale};

/// Flows with a component of at least this magnitude cannot be encoded.
pub const KITTI_MAX_FLOW: f64 = 512.0;
const KITTI_SCALE: f64 = 64.0;
const KITTI_OFFSET: f64 = 32768.0;

/// Encodes one flow component.
pub fn kitti_encode(x: f64) -> Result<u16> {
    if !(x.abs() < KITTI_MAX_FLOW) {
        return Err(Error::OutOfRepresentableRange(x));
    }
    Ok((x * KITTI_SCALE + KITTI_OFFSET).round() as u16)
}

pub fn kitti_decode(s: u16) -> f64 {
    (s as f64 - KITTI_OFFSET) / KITTI_SCALE
}

pub fn write_kitti_png<W: Write>(f: &FlowField, valid: &OcclusionMap, sink: W) -> Result<()> {
    if f.scale() != Scale::Full {
        return Err(Error::DimensionMismatch("only full-resolution flow can be written".into()));
    }
    ensure_same_shape(f, valid, "flow/validity")?;
    let (w, h) = (f.width() as u32, f.height() as u32);
    let mut raw = Vec::with_capacity(f.len() * 3);
    for (i, &m) in valid.data().iter().enumerate() {
        if m >= 0.5 {
            let [u, v] = f.at(i);
            raw.extend_from_slice(&[kitti_encode(u)?, kitti_encode(v)?, 1]);
        } else {
            raw.extend_from_slice(&[KITTI_OFFSET as u16, KITTI_OFFSET as u16, 0]);
        }
    }
    let img: ImageBuffer<Rgb<u16>, Vec<u16>> =
        ImageBuffer::from_raw(w, h, raw).ok_or_else(|| Error::DimensionMismatch("png buffer size".into()))?;
    img.write_with_encoder(PngEncoder::new(sink))?;
    Ok(())
}

pub fn read_kitti_png<R: BufRead + Seek>(source: R) -> Result<(FlowField, OcclusionMap)> {
    let img = image::load(source, ImageFormat::Png)?;
    if !matches!(img.color(), image::ColorType::Rgb16 | image::ColorType::Rgba16) {
        return Err(Error::DimensionMismatch(format!("expected 16-bit RGB, got {:?}", img.color())));
    }
    let img = img.into_rgb16();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let mut flow = Vec::with_capacity(w * h * 2);
    let mut valid = Vec::with_capacity(w * h);
    for p in img.pixels() {
        let ok = p[2] != 0;
        if ok {
            flow.extend_from_slice(&[kitti_decode(p[0]), kitti_decode(p[1])]);
        } else {
            flow.extend_from_slice(&[0.0, 0.0]);
        }
        valid.push(if ok { 1.0 } else { 0.0 });
    }
    Ok((FlowField::new(w, h, Scale::Full, flow)?, OcclusionMap::new(w, h, Scale::Full, valid)?))
}

pub fn write_kitti_png_file(f: &FlowField, valid: &OcclusionMap, path: impl AsRef<Path>) -> Result<()> {
    write_kitti_png(f, valid, BufWriter::new(File::create(path)?))
}

pub fn read_kitti_png_file(path: impl AsRef<Path>) -> Result<(FlowField, OcclusionMap)> {
    read_kitti_png(BufReader::new(File::open(path)?))
}
