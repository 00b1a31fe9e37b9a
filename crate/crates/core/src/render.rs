//! Label map rendering: palette-indexed PNGs and colour overlays.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use crate::error::{Error, Result};

const BASE_PALETTE: [[u8; 3]; 12] = [
    [70, 130, 180],
    [0, 105, 148],
    [139, 90, 43],
    [220, 20, 60],
    [34, 139, 34],
    [128, 128, 128],
    [255, 215, 0],
    [148, 0, 211],
    [255, 140, 0],
    [0, 206, 209],
    [199, 21, 133],
    [85, 107, 47],
];

/// Colour of class `c`. Unknown labels render black.
pub fn class_color(c: i32) -> [u8; 3] {
    if c < 0 {
        [0, 0, 0]
    } else {
        let base = BASE_PALETTE[c as usize % BASE_PALETTE.len()];
        // darken on wrap-around so more than twelve classes stay distinct
        let shade = (c as usize / BASE_PALETTE.len()) as u8;
        base.map(|v| v.saturating_sub(shade.saturating_mul(40)))
    }
}

/// 8-bit palette-indexed PNG; pixel value = class index, 255 = unknown.
pub fn write_indexed_png(path: &Path, width: usize, height: usize, labels: &[i32]) -> Result<()> {
    if labels.iter().any(|&l| l >= 255) {
        return Err(Error::data("indexed PNG supports at most 255 classes"));
    }
    let mut palette = Vec::with_capacity(256 * 3);
    for i in 0..255 {
        palette.extend_from_slice(&class_color(i));
    }
    palette.extend_from_slice(&[0, 0, 0]);
    let data: Vec<u8> = labels.iter().map(|&l| if l < 0 { 255 } else { l as u8 }).collect();

    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut enc = png::Encoder::new(BufWriter::new(file), width as u32, height as u32);
    enc.set_color(png::ColorType::Indexed);
    enc.set_depth(png::BitDepth::Eight);
    enc.set_palette(palette);
    let to_io = |e: png::EncodingError| Error::io(path, std::io::Error::other(e));
    let mut writer = enc.write_header().map_err(to_io)?;
    writer.write_image_data(&data).map_err(to_io)?;
    writer.finish().map_err(to_io)
}

/// Blend class colours over the image: `(1 - alpha) * pixel + alpha * colour`.
pub fn overlay(pixels: &[u8], labels: &[i32], alpha: f64) -> Vec<u8> {
    let mut out = Vec::with_capacity(pixels.len());
    for (px, &l) in pixels.chunks_exact(3).zip(labels) {
        let col = class_color(l);
        for ch in 0..3 {
            let v = (1.0 - alpha) * px[ch] as f64 + alpha * col[ch] as f64;
            out.push(v.round().clamp(0.0, 255.0) as u8);
        }
    }
    out
}
