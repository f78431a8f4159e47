//! Binary PPM (P6) encoding of tonemapped images.

use std::io::Write;
use std::path::Path;

use crate::color::Rgb;
use crate::error::{Error, Result};
use crate::image::Image;

const DISPLAY_GAMMA: f64 = 2.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BitDepth {
    #[default]
    Eight,
    /// 16-bit samples, most significant byte first.
    Sixteen,
}

/// Display encoding: clamp to `[0, 1]`, then gamma 2.2.
pub fn tonemap(c: Rgb) -> Rgb {
    c.map(|v| v.clamp(0.0, 1.0).powf(1.0 / DISPLAY_GAMMA))
}

pub fn encode_ppm(image: &Image<Rgb>, depth: BitDepth) -> Vec<u8> {
    let maxval: u32 = match depth {
        BitDepth::Eight => 255,
        BitDepth::Sixteen => 65535,
    };
    let header = format!("P6\n{} {}\n{}\n", image.width(), image.height(), maxval);
    let bytes_per_sample = if maxval > 255 { 2 } else { 1 };
    let mut out = Vec::with_capacity(header.len() + image.pixels().len() * 3 * bytes_per_sample);
    out.extend_from_slice(header.as_bytes());
    for &c in image.pixels() {
        for v in tonemap(c).channels() {
            let q = (v * maxval as f64).round() as u32;
            match depth {
                BitDepth::Eight => out.push(q as u8),
                BitDepth::Sixteen => out.extend_from_slice(&(q as u16).to_be_bytes()),
            }
        }
    }
    out
}

pub fn write_ppm(path: &Path, image: &Image<Rgb>, depth: BitDepth) -> Result<()> {
    let bytes = encode_ppm(image, depth);
    let mut file = std::fs::File::create(path)
        .map_err(|e| Error::io(format!("creating {}", path.display()), e))?;
    file.write_all(&bytes)
        .map_err(|e| Error::io(format!("writing {}", path.display()), e))
}
