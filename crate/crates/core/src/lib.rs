//! Deterministic software renderer for volumetric clouds built around cheap
//! stochastic raymarching: few primary steps, analytic per-step scattering,
//! per-pixel jittered start offsets and a temporal anti-aliasing resolve on a
//! low-resolution cloud buffer.
//!
//! Pipeline, per frame: [`renderer::generate_ray`] ->
//! [`raymarch::march_primary`] -> [`temporal::taa_resolve`] -> bilinear
//! upsample -> composite over the background. [`evalbench`] measures how
//! configurations compare, and [`config`] loads scene files.

pub mod color;
pub mod config;
pub mod error;
pub mod evalbench;
pub mod hash;
pub mod image;
pub mod noisefield;
pub mod ppm;
pub mod raymarch;
pub mod renderer;
pub mod temporal;
pub mod transport;

pub use color::{Rgb, Rgba};
pub use error::{Error, Result};
pub use image::Image;
