//! Row-major pixel buffers.

use rayon::prelude::*;

use crate::color::{Rgb, Rgba};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Image<T> {
    width: usize,
    height: usize,
    pixels: Vec<T>,
}

impl<T: Copy> Image<T> {
    pub fn filled(width: usize, height: usize, value: T) -> Self {
        assert!(width > 0 && height > 0, "image dimensions must be positive");
        Image {
            width,
            height,
            pixels: vec![value; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        assert!(width > 0 && height > 0, "image dimensions must be positive");
        let mut pixels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(x, y));
            }
        }
        Image {
            width,
            height,
            pixels,
        }
    }

    pub fn from_pixels(width: usize, height: usize, pixels: Vec<T>) -> Result<Self> {
        if width == 0 || height == 0 || pixels.len() != width * height {
            return Err(Error::invalid(
                "pixels",
                format!(
                    "{} pixels cannot form a {width}x{height} image",
                    pixels.len()
                ),
            ));
        }
        Ok(Image {
            width,
            height,
            pixels,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn resolution(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn pixels(&self) -> &[T] {
        &self.pixels
    }

    pub fn get(&self, x: usize, y: usize) -> T {
        self.pixels[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, value: T) {
        self.pixels[y * self.width + x] = value;
    }

    /// Fetch with edge-clamped addressing.
    pub fn get_clamped(&self, x: i64, y: i64) -> T {
        let x = x.clamp(0, self.width as i64 - 1) as usize;
        let y = y.clamp(0, self.height as i64 - 1) as usize;
        self.get(x, y)
    }

    pub fn map<U: Copy>(&self, f: impl Fn(T) -> U) -> Image<U> {
        Image {
            width: self.width,
            height: self.height,
            pixels: self.pixels.iter().map(|&p| f(p)).collect(),
        }
    }

    pub(crate) fn check_same_size<U: Copy>(&self, other: &Image<U>) -> Result<()> {
        if self.resolution() != other.resolution() {
            return Err(Error::SizeMismatch {
                left: self.resolution(),
                right: other.resolution(),
            });
        }
        Ok(())
    }
}

impl<T: Copy + Send + Sync> Image<T> {
    /// Like [`Image::from_fn`], evaluating pixels on the rayon pool. Output
    /// order is fixed, so results do not depend on scheduling.
    pub fn from_fn_par(width: usize, height: usize, f: impl Fn(usize, usize) -> T + Sync) -> Self {
        assert!(width > 0 && height > 0, "image dimensions must be positive");
        let pixels = (0..width * height)
            .into_par_iter()
            .map(|i| f(i % width, i / width))
            .collect();
        Image {
            width,
            height,
            pixels,
        }
    }
}

impl Image<Rgba> {
    /// Bilinear fetch at normalized coordinates. Texel `i` is centered at
    /// `(i + 0.5) / width`; addressing outside the image is edge-clamped.
    pub fn sample_bilinear(&self, u: f64, v: f64) -> Rgba {
        let fx = u * self.width as f64 - 0.5;
        let fy = v * self.height as f64 - 0.5;
        let x0 = fx.floor();
        let y0 = fy.floor();
        let tx = fx - x0;
        let ty = fy - y0;
        let (x0, y0) = (x0 as i64, y0 as i64);
        let top = self
            .get_clamped(x0, y0)
            .lerp(self.get_clamped(x0 + 1, y0), tx);
        let bottom = self
            .get_clamped(x0, y0 + 1)
            .lerp(self.get_clamped(x0 + 1, y0 + 1), tx);
        top.lerp(bottom, ty)
    }

    /// Bilinear resample to a new resolution.
    pub fn resample(&self, width: usize, height: usize) -> Image<Rgba> {
        if (width, height) == self.resolution() {
            return self.clone();
        }
        Image::from_fn(width, height, |x, y| {
            self.sample_bilinear(
                (x as f64 + 0.5) / width as f64,
                (y as f64 + 0.5) / height as f64,
            )
        })
    }
}

impl Image<Rgb> {
    pub fn mean_luminance(&self) -> f64 {
        self.pixels.iter().map(|c| c.luminance()).sum::<f64>() / self.pixels.len() as f64
    }
}
