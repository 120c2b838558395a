//! File formats for sampled fields.
//!
//! Binary layout: one line of JSON (the header) terminated by `\n`, then
//! `len` pairs of little-endian `f64` values `(re, im)`.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use image::{ImageBuffer, Luma};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::propagation::{Grid, SampledField};

const MAGIC: &str = "flattop-field";

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
    grid: Grid,
    len: usize,
}

pub fn write_field<W: Write>(field: &SampledField, mut out: W) -> Result<()> {
    let header = Header {
        format: MAGIC.into(),
        version: 1,
        grid: field.grid.clone(),
        len: field.values.len(),
    };
    serde_json::to_writer(&mut out, &header)?;
    out.write_all(b"\n")?;
    for v in &field.values {
        out.write_all(&v.re.to_le_bytes())?;
        out.write_all(&v.im.to_le_bytes())?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_field<R: BufRead>(mut input: R) -> Result<SampledField> {
    let mut line = String::new();
    input.read_line(&mut line)?;
    let header: Header = serde_json::from_str(line.trim_end())?;
    if header.format != MAGIC || header.version != 1 {
        return Err(Error::Format(format!("unsupported field header {}/{}", header.format, header.version)));
    }
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    if bytes.len() != header.len * 16 {
        return Err(Error::Format(format!(
            "payload has {} bytes, header promises {}",
            bytes.len(),
            header.len * 16
        )));
    }
    let values = bytes
        .chunks_exact(16)
        .map(|c| {
            let re = f64::from_le_bytes(c[..8].try_into().expect("8 bytes"));
            let im = f64::from_le_bytes(c[8..].try_into().expect("8 bytes"));
            Complex64::new(re, im)
        })
        .collect();
    let grid = Grid::new(header.grid.origin, header.grid.spacing, header.grid.counts)?;
    SampledField::new(grid, values)
}

pub fn save_field(field: &SampledField, path: &Path) -> Result<()> {
    write_field(field, BufWriter::new(File::create(path)?))
}

pub fn load_field(path: &Path) -> Result<SampledField> {
    read_field(BufReader::new(File::open(path)?))
}

/// CSV with columns `x,re,im,intensity,phase` for a 1-D field.
pub fn write_field_csv<W: Write>(field: &SampledField, out: W) -> Result<()> {
    if field.grid.dims() != 1 {
        return Err(Error::Shape("CSV export is for 1-D fields".into()));
    }
    let mut w = BufWriter::new(out);
    writeln!(w, "x,re,im,intensity,phase")?;
    for (i, v) in field.values.iter().enumerate() {
        writeln!(
            w,
            "{},{},{},{},{}",
            field.grid.coord(0, i),
            v.re,
            v.im,
            v.norm_sqr(),
            v.arg()
        )?;
    }
    w.flush()?;
    Ok(())
}

/// What a rendered image shows.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Quantity {
    /// `|E|²` scaled so the maximum is white.
    Intensity,
    /// `arg E` mapped linearly from `[-π, π]`.
    Phase,
}

/// Render a 2-D field as a 16-bit grayscale PNG (row 0 is the smallest `y`).
pub fn render_png(field: &SampledField, quantity: Quantity, path: &Path) -> Result<()> {
    if field.grid.dims() != 2 {
        return Err(Error::Shape("rendering needs a 2-D field".into()));
    }
    let (nx, ny) = (field.grid.counts[0], field.grid.counts[1]);
    let peak = field.values.iter().fold(0.0_f64, |m, v| m.max(v.norm_sqr()));
    let level = |v: &Complex64| -> u16 {
        let t = match quantity {
            Quantity::Intensity if peak > 0.0 => v.norm_sqr() / peak,
            Quantity::Intensity => 0.0,
            Quantity::Phase => (v.arg() + std::f64::consts::PI) / (2.0 * std::f64::consts::PI),
        };
        (t.clamp(0.0, 1.0) * 65535.0).round() as u16
    };
    let pixels: Vec<u16> = field.values.iter().map(level).collect();
    let img: ImageBuffer<Luma<u16>, Vec<u16>> = ImageBuffer::from_raw(nx as u32, ny as u32, pixels)
        .ok_or_else(|| Error::Shape("pixel buffer size".into()))?;
    img.save(path)?;
    Ok(())
}
