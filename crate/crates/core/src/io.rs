//! Grayscale image files: binary PGM (P5) and PNG, 8 or 16 bits.
//!
//! Loading maps levels linearly onto `[0, 1]`. Saving clips to `[0, 1]` and
//! rounds half up to the nearest level.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum BitDepth {
    #[default]
    Eight,
    Sixteen,
}

impl BitDepth {
    pub fn max_level(self) -> u32 {
        match self {
            Self::Eight => 255,
            Self::Sixteen => 65535,
        }
    }

    pub fn from_bits(bits: u32) -> Result<Self> {
        match bits {
            8 => Ok(Self::Eight),
            16 => Ok(Self::Sixteen),
            other => Err(Error::invalid(format!(
                "bit depth must be 8 or 16, got {other}"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Format {
    Pgm,
    Png,
}

fn format_of(path: &Path) -> Result<Format> {
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase());
    match ext.as_deref() {
        Some("pgm") => Ok(Format::Pgm),
        Some("png") => Ok(Format::Png),
        _ => Err(Error::io(
            path,
            "unsupported format (expected .pgm or .png)",
        )),
    }
}

/// Quantize one value: clip, scale, round half up.
pub fn quantize(v: f64, depth: BitDepth) -> u32 {
    let max = depth.max_level() as f64;
    (v.clamp(0.0, 1.0) * max + 0.5).floor() as u32
}

pub fn load_image(path: &Path) -> Result<Image> {
    let format = format_of(path)?;
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    match format {
        Format::Pgm => decode_pgm(&bytes),
        Format::Png => decode_png(&bytes),
    }
    .map_err(|e| match e {
        Error::Io { .. } => e,
        other => Error::io(path, other),
    })
}

/// Save with 8 bits per pixel.
pub fn save_image(img: &Image, path: &Path) -> Result<()> {
    save_image_with(img, path, BitDepth::Eight)
}

pub fn save_image_with(img: &Image, path: &Path, depth: BitDepth) -> Result<()> {
    let bytes = match format_of(path)? {
        Format::Pgm => encode_pgm(img, depth),
        Format::Png => encode_png(img, depth)?,
    };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    w.write_all(&bytes)
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

pub fn encode_pgm(img: &Image, depth: BitDepth) -> Vec<u8> {
    let mut out = format!(
        "P5\n{} {}\n{}\n",
        img.width(),
        img.height(),
        depth.max_level()
    )
    .into_bytes();
    for &v in img.data() {
        let q = quantize(v, depth);
        match depth {
            BitDepth::Eight => out.push(q as u8),
            BitDepth::Sixteen => out.extend_from_slice(&(q as u16).to_be_bytes()),
        }
    }
    out
}

fn corrupt(reason: impl Into<String>) -> Error {
    Error::invalid(reason)
}

/// Parse a binary PGM with any maxval up to 65535 (two bytes per sample,
/// big-endian, above 255).
pub fn decode_pgm(bytes: &[u8]) -> Result<Image> {
    let mut pos = 0;
    let mut fields = Vec::with_capacity(4);
    while fields.len() < 4 {
        // skip whitespace and comments
        while pos < bytes.len() {
            match bytes[pos] {
                b'#' => {
                    while pos < bytes.len() && bytes[pos] != b'\n' {
                        pos += 1;
                    }
                }
                b if b.is_ascii_whitespace() => pos += 1,
                _ => break,
            }
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() && bytes[pos] != b'#' {
            pos += 1;
        }
        if start == pos {
            return Err(corrupt("truncated PGM header"));
        }
        fields.push(
            std::str::from_utf8(&bytes[start..pos])
                .unwrap_or("")
                .to_string(),
        );
    }
    if fields[0] != "P5" {
        let reason = if fields[0] == "P6" || fields[0] == "P3" {
            "multi-channel PPM is not supported".to_string()
        } else {
            format!("not a binary PGM (magic '{}')", fields[0])
        };
        return Err(corrupt(reason));
    }
    let num = |s: &str, what: &str| -> Result<usize> {
        s.parse::<usize>()
            .map_err(|_| corrupt(format!("bad PGM {what} '{s}'")))
    };
    let width = num(&fields[1], "width")?;
    let height = num(&fields[2], "height")?;
    let maxval = num(&fields[3], "maxval")?;
    if width == 0 || height == 0 || maxval == 0 || maxval > 65535 {
        return Err(corrupt(format!(
            "invalid PGM header {width}x{height} maxval {maxval}"
        )));
    }
    // exactly one whitespace byte separates the header from the raster
    pos += 1;
    let bpp = if maxval > 255 { 2 } else { 1 };
    let need = width * height * bpp;
    let raster = bytes
        .get(pos..pos + need)
        .ok_or_else(|| corrupt(format!("PGM raster truncated: need {need} bytes")))?;
    let max = maxval as f64;
    let data: Vec<f64> = if bpp == 1 {
        raster.iter().map(|&b| (b as f64 / max).min(1.0)).collect()
    } else {
        raster
            .chunks_exact(2)
            .map(|c| (u16::from_be_bytes([c[0], c[1]]) as f64 / max).min(1.0))
            .collect()
    };
    Image::new(height, width, data)
}

pub fn encode_png(img: &Image, depth: BitDepth) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, img.width() as u32, img.height() as u32);
        enc.set_color(png::ColorType::Grayscale);
        enc.set_depth(match depth {
            BitDepth::Eight => png::BitDepth::Eight,
            BitDepth::Sixteen => png::BitDepth::Sixteen,
        });
        let mut writer = enc
            .write_header()
            .map_err(|e| corrupt(format!("PNG encode: {e}")))?;
        let raster: Vec<u8> = match depth {
            BitDepth::Eight => img
                .data()
                .iter()
                .map(|&v| quantize(v, depth) as u8)
                .collect(),
            BitDepth::Sixteen => img
                .data()
                .iter()
                .flat_map(|&v| (quantize(v, depth) as u16).to_be_bytes())
                .collect(),
        };
        writer
            .write_image_data(&raster)
            .map_err(|e| corrupt(format!("PNG encode: {e}")))?;
    }
    Ok(out)
}

pub fn decode_png(bytes: &[u8]) -> Result<Image> {
    let decoder = png::Decoder::new(bytes);
    let mut reader = decoder
        .read_info()
        .map_err(|e| corrupt(format!("corrupt PNG: {e}")))?;
    let info = reader.info();
    if info.color_type != png::ColorType::Grayscale {
        return Err(corrupt(format!(
            "PNG must be single-channel grayscale, got {:?}",
            info.color_type
        )));
    }
    let bits = info.bit_depth;
    let (w, h) = (info.width as usize, info.height as usize);
    let mut buf = vec![0; reader.output_buffer_size()];
    let frame = reader
        .next_frame(&mut buf)
        .map_err(|e| corrupt(format!("corrupt PNG: {e}")))?;
    let line = frame.line_size;
    let data: Vec<f64> = match bits {
        png::BitDepth::Sixteen => (0..h)
            .flat_map(|r| {
                let row = &buf[r * line..r * line + 2 * w];
                row.chunks_exact(2)
                    .map(|c| u16::from_be_bytes([c[0], c[1]]) as f64 / 65535.0)
                    .collect::<Vec<_>>()
            })
            .collect(),
        png::BitDepth::Eight => (0..h)
            .flat_map(|r| {
                buf[r * line..r * line + w]
                    .iter()
                    .map(|&b| b as f64 / 255.0)
            })
            .collect(),
        // 1, 2 and 4 bit samples are packed MSB first
        other => {
            let nbits = other as usize;
            let max = ((1u32 << nbits) - 1) as f64;
            (0..h)
                .flat_map(|r| {
                    let row = &buf[r * line..(r + 1) * line];
                    (0..w)
                        .map(|c| {
                            let bit = c * nbits;
                            let byte = row[bit / 8];
                            let shift = 8 - nbits - bit % 8;
                            ((byte >> shift) as u32 & ((1 << nbits) - 1)) as f64 / max
                        })
                        .collect::<Vec<_>>()
                })
                .collect()
        }
    };
    Image::new(h, w, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantization_rounds_half_up() {
        assert_eq!(quantize(0.5, BitDepth::Eight), 128);
        assert_eq!(quantize(1.0, BitDepth::Eight), 255);
        assert_eq!(quantize(-0.2, BitDepth::Eight), 0);
        assert_eq!(quantize(2.0, BitDepth::Sixteen), 65535);
    }

    #[test]
    fn pgm_round_trip_all_levels() {
        let img = Image::from_fn(16, 16, |r, c| (r * 16 + c) as f64 / 255.0);
        let back = decode_pgm(&encode_pgm(&img, BitDepth::Eight)).unwrap();
        assert_eq!(back, img);
        let img16 = Image::from_fn(3, 5, |r, c| (r * 5 + c) as f64 / 14.0);
        let back16 = decode_pgm(&encode_pgm(&img16, BitDepth::Sixteen)).unwrap();
        for (a, b) in img16.data().iter().zip(back16.data()) {
            assert!((a - b).abs() <= 0.5 / 65535.0);
        }
    }

    #[test]
    fn pgm_header_with_comments() {
        let mut bytes = b"P5 # comment\n2 # w\n1\n255\n".to_vec();
        bytes.extend_from_slice(&[0, 255]);
        let img = decode_pgm(&bytes).unwrap();
        assert_eq!(img.data(), &[0.0, 1.0]);
    }

    #[test]
    fn pgm_rejects_bad_input() {
        assert!(decode_pgm(b"P6\n1 1\n255\n\x00\x00\x00").is_err());
        assert!(decode_pgm(b"P5\n4 4\n255\n\x00").is_err());
        assert!(decode_pgm(b"P5\n4").is_err());
    }

    #[test]
    fn png_round_trip() {
        let img = Image::from_fn(7, 9, |r, c| ((r * 9 + c) % 13) as f64 / 12.0);
        for depth in [BitDepth::Eight, BitDepth::Sixteen] {
            let back = decode_png(&encode_png(&img, depth).unwrap()).unwrap();
            for (a, b) in img.data().iter().zip(back.data()) {
                assert!((a - b).abs() <= 0.5 / depth.max_level() as f64 + 1e-12);
            }
        }
    }
}
