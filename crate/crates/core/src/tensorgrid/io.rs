//! Map dumps: PFM for float grids, a `'0'`/`'1'` byte sidecar for validity
//! masks and binary PGM for label maps.
//!
//! PFM follows the usual convention: `Pf` (one channel) or `PF` (three
//! channels), then `W H`, then a negative scale marking little-endian `f32`
//! samples, with scanlines stored bottom row first. Mask sidecars are
//! row-major from the top row, one byte per pixel.

use std::fs;
use std::path::Path;

use super::grid::{Grid1, Grid3};
use crate::error::{Error, Result};

fn pfm_bytes(height: usize, width: usize, channels: usize, data: &[f64]) -> Vec<u8> {
    let tag = if channels == 3 { "PF" } else { "Pf" };
    let mut out = format!("{tag}\n{width} {height}\n-1.0\n").into_bytes();
    out.reserve(data.len() * 4);
    for i in (0..height).rev() {
        let row = &data[i * width * channels..(i + 1) * width * channels];
        for &v in row {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    out
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Writes a 1- or 3-channel feature grid as PFM.
pub fn write_pfm_g3(path: &Path, grid: &Grid3) -> Result<()> {
    if grid.channels() != 1 && grid.channels() != 3 {
        return Err(Error::InvalidDimension(format!(
            "PFM holds 1 or 3 channels, grid has {}",
            grid.channels()
        )));
    }
    write_file(
        path,
        &pfm_bytes(grid.height(), grid.width(), grid.channels(), grid.data()),
    )
}

/// Writes each channel of `grid` as its own single-channel PFM named
/// `{stem}_c{k}.pfm` inside `dir`.
pub fn write_pfm_channels(dir: &Path, stem: &str, grid: &Grid3) -> Result<()> {
    let (h, w, c) = grid.shape();
    for k in 0..c {
        let plane: Vec<f64> = (0..h * w).map(|p| grid.pixel(p)[k]).collect();
        write_file(
            &dir.join(format!("{stem}_c{k}.pfm")),
            &pfm_bytes(h, w, 1, &plane),
        )?;
    }
    Ok(())
}

/// Writes depth values to `path` and the validity mask to `mask_path`.
pub fn write_depth(path: &Path, mask_path: &Path, depth: &Grid1) -> Result<()> {
    write_file(
        path,
        &pfm_bytes(depth.height(), depth.width(), 1, depth.values()),
    )?;
    let mask: Vec<u8> = depth
        .valid()
        .iter()
        .map(|&v| if v { b'1' } else { b'0' })
        .collect();
    write_file(mask_path, &mask)
}

struct Pfm {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f64>,
}

fn parse_pfm(path: &Path, bytes: &[u8]) -> Result<Pfm> {
    let bad = |msg: &str| Error::Format {
        path: path.to_path_buf(),
        msg: msg.to_string(),
    };
    // Header is three whitespace-terminated tokens after the magic.
    let mut fields = Vec::new();
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(bad("truncated header"));
        }
        fields.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| bad("non-ascii header"))?);
    }
    // exactly one whitespace byte separates the header from the samples
    pos += 1;
    let channels = match fields[0] {
        "Pf" => 1,
        "PF" => 3,
        _ => return Err(bad("missing Pf/PF magic")),
    };
    let width: usize = fields[1].parse().map_err(|_| bad("bad width"))?;
    let height: usize = fields[2].parse().map_err(|_| bad("bad height"))?;
    let scale: f64 = fields[3].parse().map_err(|_| bad("bad scale"))?;
    let little = scale < 0.0;
    let n = width * height * channels;
    let body = bytes.get(pos..).unwrap_or(&[]);
    if body.len() != n * 4 {
        return Err(bad(&format!(
            "expected {} data bytes, found {}",
            n * 4,
            body.len()
        )));
    }
    let mut data = vec![0.0; n];
    for (k, chunk) in body.chunks_exact(4).enumerate() {
        let raw = [chunk[0], chunk[1], chunk[2], chunk[3]];
        let v = if little {
            f32::from_le_bytes(raw)
        } else {
            f32::from_be_bytes(raw)
        };
        // k counts from the bottom row upward
        let row = height - 1 - k / (width * channels);
        let col = k % (width * channels);
        data[row * width * channels + col] = v as f64;
    }
    Ok(Pfm {
        height,
        width,
        channels,
        data,
    })
}

pub fn read_pfm_g3(path: &Path) -> Result<Grid3> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let pfm = parse_pfm(path, &bytes)?;
    Grid3::new(pfm.height, pfm.width, pfm.channels, pfm.data)
}

/// Reads a depth PFM. Without a mask sidecar, pixels are valid when their
/// depth is finite and strictly positive.
pub fn read_depth(path: &Path, mask_path: Option<&Path>) -> Result<Grid1> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let pfm = parse_pfm(path, &bytes)?;
    if pfm.channels != 1 {
        return Err(Error::Format {
            path: path.to_path_buf(),
            msg: "depth maps must be single-channel (Pf)".into(),
        });
    }
    let valid = match mask_path {
        Some(mp) => {
            let raw = fs::read(mp).map_err(|e| Error::io(mp, e))?;
            if raw.len() != pfm.data.len() {
                return Err(Error::Format {
                    path: mp.to_path_buf(),
                    msg: format!("mask has {} bytes, expected {}", raw.len(), pfm.data.len()),
                });
            }
            raw.iter()
                .map(|&b| match b {
                    b'1' => Ok(true),
                    b'0' => Ok(false),
                    other => Err(Error::Format {
                        path: mp.to_path_buf(),
                        msg: format!("mask byte {other:#04x} is not '0' or '1'"),
                    }),
                })
                .collect::<Result<Vec<_>>>()?
        }
        None => pfm.data.iter().map(|v| v.is_finite() && *v > 0.0).collect(),
    };
    Grid1::new(pfm.height, pfm.width, pfm.data, valid)
}

/// Binary 8-bit PGM (`P5`), row-major from the top row.
pub fn write_pgm(path: &Path, height: usize, width: usize, pixels: &[u8]) -> Result<()> {
    if pixels.len() != height * width {
        return Err(Error::Shape(format!(
            "PGM {height}x{width} needs {} bytes, got {}",
            height * width,
            pixels.len()
        )));
    }
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(pixels);
    write_file(path, &out)
}
