//! Temporal anti-aliasing over the low-resolution cloud buffer: reproject the
//! previous frame's resolved output through both cameras, fetch it
//! bilinearly, clamp it to the current 3x3 neighborhood and blend
//! exponentially.

use glam::{DMat4, DVec3, DVec4};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::color::Rgba;
use crate::error::{Error, Result};
use crate::image::Image;

const ORTHONORMAL_TOLERANCE: f64 = 1e-6;
const NEAR_PLANE: f64 = 1e-2;
const FAR_PLANE: f64 = 1e5;

/// Pinhole camera with an explicit orthonormal basis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraPose {
    pub position: DVec3,
    pub right: DVec3,
    pub up: DVec3,
    pub forward: DVec3,
    /// Vertical field of view in radians.
    pub vertical_fov: f64,
    /// Width over height.
    pub aspect: f64,
    pub view_projection: DMat4,
}

impl CameraPose {
    pub fn look_at(
        position: DVec3,
        target: DVec3,
        up_hint: DVec3,
        vertical_fov: f64,
        aspect: f64,
    ) -> Result<Self> {
        let forward = (target - position).normalize_or_zero();
        if forward == DVec3::ZERO {
            return Err(Error::invalid(
                "camera.look_at",
                "must differ from camera.position",
            ));
        }
        let right = forward.cross(up_hint).normalize_or_zero();
        if right == DVec3::ZERO {
            return Err(Error::invalid(
                "camera.up",
                "must not be parallel to the view direction",
            ));
        }
        let up = right.cross(forward);
        Self::from_basis(position, right, up, forward, vertical_fov, aspect)
    }

    pub fn from_basis(
        position: DVec3,
        right: DVec3,
        up: DVec3,
        forward: DVec3,
        vertical_fov: f64,
        aspect: f64,
    ) -> Result<Self> {
        if !(vertical_fov > 0.0 && vertical_fov < std::f64::consts::PI) {
            return Err(Error::invalid(
                "camera.vertical_fov",
                format!("must lie in (0, pi), got {vertical_fov}"),
            ));
        }
        if !(aspect.is_finite() && aspect > 0.0) {
            return Err(Error::invalid(
                "camera.aspect",
                format!("must be > 0, got {aspect}"),
            ));
        }
        let pose = CameraPose {
            position,
            right,
            up,
            forward,
            vertical_fov,
            aspect,
            view_projection: view_projection(position, up, forward, vertical_fov, aspect),
        };
        pose.validate()?;
        Ok(pose)
    }

    pub fn validate(&self) -> Result<()> {
        let tol = ORTHONORMAL_TOLERANCE;
        let unit = [self.right, self.up, self.forward]
            .iter()
            .all(|v| (v.length() - 1.0).abs() <= tol);
        let orthogonal = self.right.dot(self.up).abs() <= tol
            && self.right.dot(self.forward).abs() <= tol
            && self.up.dot(self.forward).abs() <= tol;
        if !(unit && orthogonal && self.position.is_finite()) {
            return Err(Error::invalid("camera", "basis must be orthonormal"));
        }
        let expected = view_projection(
            self.position,
            self.up,
            self.forward,
            self.vertical_fov,
            self.aspect,
        );
        if !self.view_projection.abs_diff_eq(expected, tol) {
            return Err(Error::invalid(
                "camera.view_projection",
                "inconsistent with pose fields",
            ));
        }
        Ok(())
    }

    /// Unit direction through the center of pixel `(x, y)`; row 0 is the top.
    pub fn pixel_direction(&self, x: usize, y: usize, resolution: (usize, usize)) -> DVec3 {
        let (w, h) = (resolution.0 as f64, resolution.1 as f64);
        let ndc_x = 2.0 * (x as f64 + 0.5) / w - 1.0;
        let ndc_y = 1.0 - 2.0 * (y as f64 + 0.5) / h;
        let tan_half = (0.5 * self.vertical_fov).tan();
        (self.forward
            + self.right * (ndc_x * tan_half * self.aspect)
            + self.up * (ndc_y * tan_half))
            .normalize()
    }

    /// Normalized image coordinates of a world point, or `None` when it is
    /// behind the camera or outside the frame.
    pub fn project(&self, p: DVec3) -> Option<(f64, f64)> {
        let clip = self.view_projection * DVec4::from((p, 1.0));
        if clip.w <= 0.0 {
            return None;
        }
        let u = 0.5 * (clip.x / clip.w) + 0.5;
        let v = 0.5 - 0.5 * (clip.y / clip.w);
        ((0.0..=1.0).contains(&u) && (0.0..=1.0).contains(&v)).then_some((u, v))
    }
}

fn view_projection(
    position: DVec3,
    up: DVec3,
    forward: DVec3,
    vertical_fov: f64,
    aspect: f64,
) -> DMat4 {
    DMat4::perspective_rh(vertical_fov, aspect, NEAR_PLANE, FAR_PLANE)
        * DMat4::look_to_rh(position, forward, up)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClampMode {
    None,
    #[default]
    Minmax3x3,
}

/// What to output when reprojection leaves the previous frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MissPolicy {
    #[default]
    UseCurrent,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TaaConfig {
    pub enabled: bool,
    /// Weight of the reprojected history in the blend; must be below 1.
    pub history_weight: f64,
    pub clamp: ClampMode,
    pub on_miss: MissPolicy,
}

impl Default for TaaConfig {
    fn default() -> Self {
        TaaConfig {
            enabled: false,
            history_weight: 0.9,
            clamp: ClampMode::Minmax3x3,
            on_miss: MissPolicy::UseCurrent,
        }
    }
}

impl TaaConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.history_weight) {
            return Err(Error::invalid(
                "history_weight",
                format!("must lie in [0, 1), got {}", self.history_weight),
            ));
        }
        Ok(())
    }
}

/// Everything the resolve needs for one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameState {
    pub resolution: (usize, usize),
    /// Raw marched cloud buffer for this frame.
    pub current: Image<Rgba>,
    /// Resolved output of the previous frame.
    pub history: Image<Rgba>,
    /// Per-pixel representative depth of `current`.
    pub depth: Image<f64>,
    pub frame_index: u32,
    pub camera_current: CameraPose,
    pub camera_previous: CameraPose,
}

impl FrameState {
    pub fn validate(&self) -> Result<()> {
        let r = self.resolution;
        for found in [
            self.current.resolution(),
            self.history.resolution(),
            self.depth.resolution(),
        ] {
            if found != r {
                return Err(Error::HistoryMismatch {
                    history: found,
                    buffer: r,
                });
            }
        }
        Ok(())
    }
}

/// Finds where the surface seen through `pixel` at distance `depth` appeared
/// in the previous frame.
pub fn reproject_uv(
    pixel: (usize, usize),
    depth: f64,
    camera_current: &CameraPose,
    camera_previous: &CameraPose,
    resolution: (usize, usize),
) -> Option<(f64, f64)> {
    let dir = camera_current.pixel_direction(pixel.0, pixel.1, resolution);
    camera_previous.project(camera_current.position + dir * depth)
}

pub fn sample_history(history: &Image<Rgba>, uv: (f64, f64)) -> Rgba {
    history.sample_bilinear(uv.0, uv.1)
}

pub fn neighborhood_clamp(
    current: &Image<Rgba>,
    pixel: (usize, usize),
    history_sample: Rgba,
    mode: ClampMode,
) -> Rgba {
    match mode {
        ClampMode::None => history_sample,
        ClampMode::Minmax3x3 => {
            let (x, y) = (pixel.0 as i64, pixel.1 as i64);
            let center = current.get(pixel.0, pixel.1);
            let (mut lo, mut hi) = (center, center);
            for dy in -1..=1 {
                for dx in -1..=1 {
                    let c = current.get_clamped(x + dx, y + dy);
                    lo = lo.min(c);
                    hi = hi.max(c);
                }
            }
            history_sample.clamp(lo, hi)
        }
    }
}

/// Blends the current cloud buffer with reprojected, clamped history. The
/// returned image is the next frame's history.
pub fn taa_resolve(frame: &FrameState, config: &TaaConfig) -> Result<Image<Rgba>> {
    frame.validate()?;
    config.validate()?;
    let (w, h) = frame.resolution;
    let weight = config.history_weight;
    let pixels: Vec<Rgba> = (0..w * h)
        .into_par_iter()
        .map(|i| {
            let pixel = (i % w, i / w);
            let current = frame.current.get(pixel.0, pixel.1);
            let depth = frame.depth.get(pixel.0, pixel.1);
            match reproject_uv(
                pixel,
                depth,
                &frame.camera_current,
                &frame.camera_previous,
                frame.resolution,
            ) {
                None => match config.on_miss {
                    MissPolicy::UseCurrent => current,
                },
                Some(uv) => {
                    let history = neighborhood_clamp(
                        &frame.current,
                        pixel,
                        sample_history(&frame.history, uv),
                        config.clamp,
                    );
                    current.lerp(history, weight)
                }
            }
        })
        .collect();
    Image::from_pixels(w, h, pixels)
}
