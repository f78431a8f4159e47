//! Frame orchestration: camera rays, the low-resolution cloud buffer, the
//! march -> TAA -> upsample -> composite pipeline and sequence driving.

use std::time::{Duration, Instant};

use glam::DVec3;
use serde::{Deserialize, Serialize};

use crate::color::{Rgb, Rgba};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::noisefield::DensityField;
use crate::raymarch::{self, jitter_offset, PixelSample, Ray, RaymarchConfig, SampleCounts};
use crate::temporal::{taa_resolve, CameraPose, FrameState, TaaConfig};
use crate::transport::MediumParams;

/// Cloud-buffer resolution relative to the display.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BufferScale {
    Full,
    #[default]
    Half,
    Quarter,
}

impl BufferScale {
    pub fn divisor(self) -> usize {
        match self {
            BufferScale::Full => 1,
            BufferScale::Half => 2,
            BufferScale::Quarter => 4,
        }
    }
}

/// Camera placement as written in scene files.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraDesc {
    pub position: DVec3,
    pub look_at: DVec3,
    #[serde(default = "default_up")]
    pub up: DVec3,
    #[serde(default = "default_fov")]
    pub vertical_fov_deg: f64,
}

fn default_up() -> DVec3 {
    DVec3::Y
}

fn default_fov() -> f64 {
    50.0
}

impl CameraDesc {
    pub fn pose(&self, aspect: f64) -> Result<CameraPose> {
        CameraPose::look_at(
            self.position,
            self.look_at,
            self.up,
            self.vertical_fov_deg.to_radians(),
            aspect,
        )
    }
}

fn default_background() -> Rgb {
    Rgb::new(0.35, 0.5, 0.75)
}

fn default_resolution() -> (u32, u32) {
    (256, 256)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneConfig {
    #[serde(default = "default_resolution")]
    pub display_resolution: (u32, u32),
    #[serde(default)]
    pub cloud_buffer_scale: BufferScale,
    #[serde(default = "default_background")]
    pub background: Rgb,
    pub field: DensityField,
    #[serde(default)]
    pub medium: MediumParams,
    pub camera: CameraDesc,
    #[serde(default)]
    pub raymarch: RaymarchConfig,
    #[serde(default)]
    pub taa: TaaConfig,
}

fn in_section<T>(section: &str, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        Error::InvalidParameter { name, reason } if !name.starts_with(section) => {
            Error::InvalidParameter {
                name: format!("{section}.{name}"),
                reason,
            }
        }
        other => other,
    })
}

impl SceneConfig {
    /// A scene with every optional section at its default.
    pub fn new(field: DensityField, camera: CameraDesc) -> Self {
        SceneConfig {
            display_resolution: default_resolution(),
            cloud_buffer_scale: BufferScale::default(),
            background: default_background(),
            field,
            medium: MediumParams::default(),
            camera,
            raymarch: RaymarchConfig::default(),
            taa: TaaConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (w, h) = self.display_resolution;
        if w == 0 || h == 0 {
            return Err(Error::invalid(
                "display_resolution",
                format!("must be positive, got {w}x{h}"),
            ));
        }
        if !(self.background.is_finite() && self.background.is_non_negative()) {
            return Err(Error::invalid(
                "background",
                "channels must be finite and >= 0",
            ));
        }
        in_section("field", self.field.validate())?;
        in_section("medium", self.medium.validate())?;
        in_section("camera", self.camera_pose().map(|_| ()))?;
        in_section("raymarch", self.raymarch.validate())?;
        in_section("taa", self.taa.validate())
    }

    pub fn display_size(&self) -> (usize, usize) {
        (
            self.display_resolution.0 as usize,
            self.display_resolution.1 as usize,
        )
    }

    /// Display resolution divided by the buffer scale, at least one pixel.
    pub fn buffer_size(&self) -> (usize, usize) {
        let (w, h) = self.display_size();
        let d = self.cloud_buffer_scale.divisor();
        ((w / d).max(1), (h / d).max(1))
    }

    pub fn aspect(&self) -> f64 {
        let (w, h) = self.display_size();
        w as f64 / h as f64
    }

    pub fn camera_pose(&self) -> Result<CameraPose> {
        self.camera.pose(self.aspect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FrameStats {
    pub density_samples: u64,
    pub light_samples: u64,
    pub wall_time: Duration,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenderedFrame {
    /// Resolved (or raw, without TAA) cloud buffer.
    pub cloud_buffer: Image<Rgba>,
    /// Composited linear-light image at display resolution.
    pub final_image: Image<Rgb>,
    pub stats: FrameStats,
}

/// Pinhole ray through the center of `pixel`.
pub fn generate_ray(
    camera: &CameraPose,
    pixel: (usize, usize),
    resolution: (usize, usize),
) -> (DVec3, DVec3) {
    (
        camera.position,
        camera.pixel_direction(pixel.0, pixel.1, resolution),
    )
}

fn march_pixel(
    scene: &SceneConfig,
    camera: &CameraPose,
    pixel: (usize, usize),
    resolution: (usize, usize),
    frame_index: u32,
    miss_depth: f64,
) -> (PixelSample, SampleCounts) {
    let (origin, direction) = generate_ray(camera, pixel, resolution);
    let Some(ray) = Ray::through_bounds(origin, direction, &scene.field.bounds) else {
        let miss = PixelSample {
            color: Rgb::BLACK,
            alpha: 0.0,
            mean_depth: miss_depth,
        };
        return (miss, SampleCounts::default());
    };
    let cfg: &RaymarchConfig = &scene.raymarch;
    let step_length = (ray.t_max - ray.t_min) / cfg.n_steps as f64;
    let offset = jitter_offset(
        pixel.0 as u32,
        pixel.1 as u32,
        frame_index,
        step_length,
        cfg.jitter,
        cfg.jitter_seed,
    );
    let mut counts = SampleCounts::default();
    let sample = raymarch::march_counted(
        &scene.field,
        &scene.medium,
        &ray,
        cfg,
        offset,
        &mut counts,
        None,
    );
    (sample, counts)
}

/// Renders one frame with the scene's own camera.
pub fn render_frame(
    scene: &SceneConfig,
    previous: Option<&FrameState>,
    frame_index: u32,
) -> Result<(RenderedFrame, FrameState)> {
    let camera = scene.camera_pose()?;
    render_frame_with_camera(scene, previous, frame_index, &camera)
}

/// Renders one frame. `previous` is the state returned for the prior frame;
/// the returned state carries this frame's resolved buffer as history.
pub fn render_frame_with_camera(
    scene: &SceneConfig,
    previous: Option<&FrameState>,
    frame_index: u32,
    camera: &CameraPose,
) -> Result<(RenderedFrame, FrameState)> {
    scene.validate()?;
    let start = Instant::now();
    let buffer_size = scene.buffer_size();
    if let Some(prev) = previous {
        if prev.history.resolution() != buffer_size {
            return Err(Error::HistoryMismatch {
                history: prev.history.resolution(),
                buffer: buffer_size,
            });
        }
    }

    let miss_depth = (scene.field.bounds.center() - camera.position)
        .length()
        .max(1e-3);
    let marched = Image::from_fn_par(buffer_size.0, buffer_size.1, |x, y| {
        march_pixel(scene, camera, (x, y), buffer_size, frame_index, miss_depth)
    });
    let mut counts = SampleCounts::default();
    for &(_, c) in marched.pixels() {
        counts += c;
    }
    let current = marched.map(|(s, _)| Rgba::new(s.color, s.alpha));
    let depth = marched.map(|(s, _)| s.mean_depth);

    let resolved = match previous {
        Some(prev) if scene.taa.enabled => {
            let state = FrameState {
                resolution: buffer_size,
                current: current.clone(),
                history: prev.history.clone(),
                depth: depth.clone(),
                frame_index,
                camera_current: *camera,
                camera_previous: prev.camera_current,
            };
            taa_resolve(&state, &scene.taa)?
        }
        _ => current.clone(),
    };

    let (dw, dh) = scene.display_size();
    let upsampled = resolved.resample(dw, dh);
    let final_image = upsampled.map(|c| c.over(scene.background));

    let stats = FrameStats {
        density_samples: counts.density,
        light_samples: counts.light,
        wall_time: start.elapsed(),
    };
    let state = FrameState {
        resolution: buffer_size,
        current,
        history: resolved.clone(),
        depth,
        frame_index,
        camera_current: *camera,
        camera_previous: previous.map_or(*camera, |p| p.camera_current),
    };
    Ok((
        RenderedFrame {
            cloud_buffer: resolved,
            final_image,
            stats,
        },
        state,
    ))
}

/// Renders frames `0..n_frames`, handing each to `visit` as it completes so
/// long sequences need not be held in memory.
pub fn render_sequence_with(
    scene: &SceneConfig,
    n_frames: u32,
    camera_path: Option<&[CameraPose]>,
    mut visit: impl FnMut(u32, RenderedFrame) -> Result<()>,
) -> Result<()> {
    if n_frames < 1 {
        return Err(Error::invalid("n_frames", "must be at least 1"));
    }
    if let Some(path) = camera_path {
        if path.len() != n_frames as usize {
            return Err(Error::CameraPathLength {
                expected: n_frames as usize,
                got: path.len(),
            });
        }
    }
    let fixed_camera = scene.camera_pose()?;
    let mut state: Option<FrameState> = None;
    for frame in 0..n_frames {
        let camera = camera_path.map_or(fixed_camera, |p| p[frame as usize]);
        let (rendered, next) = render_frame_with_camera(scene, state.as_ref(), frame, &camera)?;
        state = Some(next);
        visit(frame, rendered)?;
    }
    Ok(())
}

pub fn render_sequence(
    scene: &SceneConfig,
    n_frames: u32,
    camera_path: Option<&[CameraPose]>,
) -> Result<Vec<RenderedFrame>> {
    let mut frames = Vec::with_capacity(n_frames as usize);
    render_sequence_with(scene, n_frames, camera_path, |_, f| {
        frames.push(f);
        Ok(())
    })?;
    Ok(frames)
}

/// Clamp tonemap applied to a whole image.
pub fn tonemap_image(image: &Image<Rgb>) -> Image<Rgb> {
    image.map(|c| c.map(|v| v.clamp(0.0, 1.0)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noisefield::{make_procedural_clouds, VolumeBounds};
    use crate::raymarch::JitterMode;

    fn bounds() -> VolumeBounds {
        VolumeBounds::new(DVec3::splat(-1.0), DVec3::splat(1.0)).unwrap()
    }

    fn small_scene() -> SceneConfig {
        let camera = CameraDesc {
            position: DVec3::new(0.0, 0.3, 4.0),
            look_at: DVec3::ZERO,
            up: DVec3::Y,
            vertical_fov_deg: 45.0,
        };
        let mut scene = SceneConfig::new(
            make_procedural_clouds(3, 0.8, 3, 0.7, bounds()).unwrap(),
            camera,
        );
        scene.display_resolution = (24, 16);
        scene.raymarch.n_steps = 8;
        scene.raymarch.n_light_steps = 3;
        scene.medium.absorption = 4.0;
        scene
    }

    #[test]
    fn center_ray_is_forward() {
        let cam = CameraPose::look_at(DVec3::ZERO, DVec3::new(1.0, 2.0, -3.0), DVec3::Y, 1.0, 1.0)
            .unwrap();
        let (_, dir) = generate_ray(&cam, (50, 50), (101, 101));
        assert!((dir - cam.forward).length() < 1e-6);
    }

    #[test]
    fn corner_rays_at_half_fov() {
        let cam = CameraPose::look_at(DVec3::ZERO, DVec3::NEG_Z, DVec3::Y, 90f64.to_radians(), 1.0)
            .unwrap();
        let n = 64;
        // Pixel centers sit half a pixel inside the image edge.
        let expected = (1.0 - 1.0 / n as f64).atan();
        for (x, y) in [(0, 0), (n - 1, 0), (0, n - 1), (n - 1, n - 1)] {
            let (_, d) = generate_ray(&cam, (x, y), (n, n));
            let horizontal = (d.dot(cam.right) / d.dot(cam.forward)).abs().atan();
            let vertical = (d.dot(cam.up) / d.dot(cam.forward)).abs().atan();
            assert!((horizontal - expected).abs() < 1e-12);
            assert!((vertical - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn all_rays_unit_length() {
        let cam = small_scene().camera_pose().unwrap();
        for y in 0..16 {
            for x in 0..24 {
                let (_, d) = generate_ray(&cam, (x, y), (24, 16));
                assert!((d.length() - 1.0).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn buffer_sizes() {
        let mut s = small_scene();
        s.display_resolution = (7, 3);
        s.cloud_buffer_scale = BufferScale::Quarter;
        assert_eq!(s.buffer_size(), (1, 1));
        s.cloud_buffer_scale = BufferScale::Half;
        assert_eq!(s.buffer_size(), (3, 1));
    }

    #[test]
    fn vacuum_scene_shows_background() {
        let mut s = small_scene();
        s.field = DensityField::constant(0.0, bounds()).unwrap();
        let (frame, _) = render_frame(&s, None, 0).unwrap();
        assert!(frame
            .final_image
            .pixels()
            .iter()
            .all(|&c| c == s.background));
    }

    #[test]
    fn unjittered_frames_are_identical() {
        let mut s = small_scene();
        s.cloud_buffer_scale = BufferScale::Full;
        let (a, _) = render_frame(&s, None, 1).unwrap();
        let (b, _) = render_frame(&s, None, 2).unwrap();
        assert_eq!(a.final_image, b.final_image);
    }

    #[test]
    fn density_samples_bounded_by_rays_times_steps() {
        let mut s = small_scene();
        s.raymarch.alpha_early_out = 1.0;
        s.field = DensityField::constant(
            0.5,
            VolumeBounds::new(DVec3::splat(-50.0), DVec3::splat(50.0)).unwrap(),
        )
        .unwrap();
        s.camera.position = DVec3::ZERO;
        s.camera.look_at = DVec3::NEG_Z;
        let (frame, _) = render_frame(&s, None, 0).unwrap();
        let (bw, bh) = s.buffer_size();
        assert_eq!(frame.stats.density_samples, 8 * (bw * bh) as u64);
        assert_eq!(frame.stats.light_samples, 3 * 8 * (bw * bh) as u64);

        s.raymarch.alpha_early_out = 0.5;
        s.medium.absorption = 50.0;
        let (early, _) = render_frame(&s, None, 0).unwrap();
        assert!(early.stats.density_samples < 8 * (bw * bh) as u64);
        assert_eq!(early.stats.light_samples, 3 * early.stats.density_samples);
    }

    #[test]
    fn history_resolution_mismatch_is_rejected() {
        let mut s = small_scene();
        s.taa.enabled = true;
        let (_, state) = render_frame(&s, None, 0).unwrap();
        s.cloud_buffer_scale = BufferScale::Full;
        assert!(matches!(
            render_frame(&s, Some(&state), 1),
            Err(Error::HistoryMismatch { .. })
        ));
    }

    #[test]
    fn single_frame_sequence_matches_render_frame() {
        let mut s = small_scene();
        s.taa.enabled = true;
        s.raymarch.jitter = JitterMode::PerPixel;
        let seq = render_sequence(&s, 1, None).unwrap();
        let (single, _) = render_frame(&s, None, 0).unwrap();
        assert_eq!(seq.len(), 1);
        assert_eq!(seq[0].final_image, single.final_image);
    }

    #[test]
    fn camera_path_length_must_match() {
        let s = small_scene();
        let pose = s.camera_pose().unwrap();
        assert!(matches!(
            render_sequence(&s, 3, Some(&[pose, pose])),
            Err(Error::CameraPathLength {
                expected: 3,
                got: 2
            })
        ));
        assert_eq!(
            render_sequence(&s, 2, Some(&[pose, pose])).unwrap().len(),
            2
        );
    }

    #[test]
    fn composite_bounds() {
        let mut s = small_scene();
        s.medium.sun_radiance = Rgb::splat(1.0);
        s.medium.ambient_radiance = Rgb::splat(0.5);
        s.background = Rgb::new(0.2, 0.9, 1.0);
        let (frame, _) = render_frame(&s, None, 0).unwrap();
        for &c in frame.cloud_buffer.pixels() {
            assert!((0.0..=1.0).contains(&c.alpha));
        }
        for &c in frame.final_image.pixels() {
            assert!(c.is_finite() && c.channels().iter().all(|&v| (0.0..=2.0).contains(&v)));
        }
        for &c in tonemap_image(&frame.final_image).pixels() {
            assert!(c.channels().iter().all(|&v| (0.0..=1.0).contains(&v)));
        }
    }
}
