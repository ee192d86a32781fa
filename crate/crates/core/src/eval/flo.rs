//! Middlebury `.flo` reader and writer.
//!
//! Layout: little-endian f32 magic 202021.25, i32 width, i32 height, then
//! row-major interleaved f32 `(u, v)`. Values are stored as f32, so a
//! round trip is bitwise exact only for f32-representable fields.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::{FlowField, Scale};

pub const FLO_MAGIC: f32 = 202021.25;

pub fn write_flo<W: Write>(f: &FlowField, mut sink: W) -> Result<()> {
    if f.scale() != Scale::Full {
        return Err(Error::DimensionMismatch("only full-resolution flow can be written".into()));
    }
    let w = i32::try_from(f.width()).map_err(|_| Error::DimensionMismatch("width exceeds i32".into()))?;
    let h = i32::try_from(f.height()).map_err(|_| Error::DimensionMismatch("height exceeds i32".into()))?;
    let mut buf = Vec::with_capacity(12 + f.data().len() * 4);
    buf.extend_from_slice(&FLO_MAGIC.to_le_bytes());
    buf.extend_from_slice(&w.to_le_bytes());
    buf.extend_from_slice(&h.to_le_bytes());
    for &x in f.data() {
        buf.extend_from_slice(&(x as f32).to_le_bytes());
    }
    sink.write_all(&buf)?;
    sink.flush()?;
    Ok(())
}

fn read_exact_or<R: Read>(src: &mut R, buf: &mut [u8], what: &str) -> Result<()> {
    src.read_exact(buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => Error::Truncated(what.into()),
        _ => Error::Io(e),
    })
}

pub fn read_flo<R: Read>(mut source: R) -> Result<FlowField> {
    let mut head = [0u8; 12];
    read_exact_or(&mut source, &mut head[..4], "magic")?;
    let magic = f32::from_le_bytes(head[..4].try_into().unwrap());
    if magic != FLO_MAGIC {
        return Err(Error::BadMagic(magic));
    }
    read_exact_or(&mut source, &mut head[4..], "header")?;
    let w = i32::from_le_bytes(head[4..8].try_into().unwrap());
    let h = i32::from_le_bytes(head[8..12].try_into().unwrap());
    if w <= 0 || h <= 0 {
        return Err(Error::DimensionMismatch(format!("header dimensions {w}x{h}")));
    }
    let (w, h) = (w as usize, h as usize);
    let n = w.checked_mul(h).and_then(|n| n.checked_mul(8)).ok_or_else(|| Error::DimensionMismatch("header too large".into()))?;
    let mut body = Vec::new();
    source.take(n as u64).read_to_end(&mut body)?;
    if body.len() < n {
        return Err(Error::Truncated(format!("expected {n} payload bytes, found {}", body.len())));
    }
    let data = body.chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().unwrap()) as f64).collect();
    FlowField::new(w, h, Scale::Full, data)
}

pub fn write_flo_file(f: &FlowField, path: impl AsRef<Path>) -> Result<()> {
    write_flo(f, BufWriter::new(File::create(path)?))
}

pub fn read_flo_file(path: impl AsRef<Path>) -> Result<FlowField> {
    read_flo(BufReader::new(File::open(path)?))
}
