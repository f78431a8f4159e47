//! Primary and lighting raymarches through a bounded density field.

use std::ops::AddAssign;

use glam::DVec3;
use serde::{Deserialize, Serialize};

use crate::color::Rgb;
use crate::error::{Error, Result};
use crate::hash::{hash_words, unit_float};
use crate::noisefield::{DensityField, VolumeBounds};
use crate::transport::{self, MediumParams, StepContribution};

/// Default early-termination threshold on accumulated alpha.
pub const DEFAULT_ALPHA_EARLY_OUT: f64 = 1.0 - 1e-4;

// Domain tags keep the two jitter streams from sharing hash inputs.
const PER_PIXEL_TAG: u32 = 0x6a09_e667;
const PER_FRAME_TAG: u32 = 0xbb67_ae85;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray {
    pub origin: DVec3,
    pub direction: DVec3,
    pub t_min: f64,
    pub t_max: f64,
}

impl Ray {
    #[inline]
    pub fn at(&self, t: f64) -> DVec3 {
        self.origin + self.direction * t
    }

    /// Clips a ray to `bounds`; `None` when it misses.
    pub fn through_bounds(origin: DVec3, direction: DVec3, bounds: &VolumeBounds) -> Option<Ray> {
        intersect_bounds(origin, direction, bounds).map(|(t_min, t_max)| Ray {
            origin,
            direction,
            t_min,
            t_max,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntegrationMode {
    Naive,
    #[default]
    Analytic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JitterMode {
    #[default]
    Off,
    /// Independent start offset per pixel and frame.
    PerPixel,
    /// One offset per frame shared by every pixel.
    PerFrameUniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RaymarchConfig {
    pub n_steps: u32,
    pub n_light_steps: u32,
    pub integration: IntegrationMode,
    pub jitter: JitterMode,
    pub jitter_seed: u32,
    /// Stop once accumulated alpha reaches this value. `1.0` disables early
    /// termination.
    pub alpha_early_out: f64,
}

impl Default for RaymarchConfig {
    fn default() -> Self {
        RaymarchConfig {
            n_steps: 128,
            n_light_steps: 6,
            integration: IntegrationMode::Analytic,
            jitter: JitterMode::Off,
            jitter_seed: 0,
            alpha_early_out: DEFAULT_ALPHA_EARLY_OUT,
        }
    }
}

impl RaymarchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_steps < 1 {
            return Err(Error::invalid("n_steps", "must be at least 1"));
        }
        if self.n_light_steps < 1 {
            return Err(Error::invalid("n_light_steps", "must be at least 1"));
        }
        if !(self.alpha_early_out > 0.0 && self.alpha_early_out <= 1.0) {
            return Err(Error::invalid(
                "alpha_early_out",
                format!("must lie in (0, 1], got {}", self.alpha_early_out),
            ));
        }
        Ok(())
    }

    fn early_out_enabled(&self) -> bool {
        self.alpha_early_out < 1.0
    }
}

/// Result of marching one pixel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PixelSample {
    /// Premultiplied in-scattered radiance.
    pub color: Rgb,
    /// `1 - T_final`.
    pub alpha: f64,
    /// Scattering-luminance-weighted mean sample distance, used to reproject
    /// the pixel into earlier frames. `t_max` when nothing scattered.
    pub mean_depth: f64,
}

/// Density-sample bookkeeping for one or more marches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SampleCounts {
    /// Samples taken by primary marches.
    pub density: u64,
    /// Samples taken by lighting marches. Primary samples with zero density
    /// skip their lighting march.
    pub light: u64,
    /// Primary steps actually executed (equal to `density`).
    pub steps: u64,
}

impl AddAssign for SampleCounts {
    fn add_assign(&mut self, o: SampleCounts) {
        self.density += o.density;
        self.light += o.light;
        self.steps += o.steps;
    }
}

/// Slab test against an axis-aligned box. Returns the parametric overlap
/// clamped to `t >= 0`, or `None` when the ray misses or the box is behind
/// the origin.
pub fn intersect_bounds(
    origin: DVec3,
    direction: DVec3,
    bounds: &VolumeBounds,
) -> Option<(f64, f64)> {
    let mut t0 = 0.0f64;
    let mut t1 = f64::INFINITY;
    for axis in 0..3 {
        let o = origin[axis];
        let d = direction[axis];
        let (lo, hi) = (bounds.min[axis], bounds.max[axis]);
        if d == 0.0 {
            if o < lo || o > hi {
                return None;
            }
            continue;
        }
        let inv = 1.0 / d;
        let (mut near, mut far) = ((lo - o) * inv, (hi - o) * inv);
        if near > far {
            std::mem::swap(&mut near, &mut far);
        }
        t0 = t0.max(near);
        t1 = t1.min(far);
        if t0 > t1 {
            return None;
        }
    }
    Some((t0, t1))
}

/// Start offset in `[0, step_length)` for the primary march of one pixel.
///
/// `PerPixel` hashes `(x, y, frame, seed)`; `PerFrameUniform` hashes only
/// `(frame, seed)` so every pixel of a frame shares the offset.
pub fn jitter_offset(
    pixel_x: u32,
    pixel_y: u32,
    frame_index: u32,
    step_length: f64,
    mode: JitterMode,
    seed: u32,
) -> f64 {
    let u = match mode {
        JitterMode::Off => return 0.0,
        JitterMode::PerPixel => unit_float(hash_words(&[
            pixel_x,
            pixel_y,
            frame_index,
            seed,
            PER_PIXEL_TAG,
        ])),
        JitterMode::PerFrameUniform => unit_float(hash_words(&[frame_index, seed, PER_FRAME_TAG])),
    };
    u * step_length
}

/// Transmittance toward the sun from `from_point`, marched to the bounds exit
/// in `n_light_steps` equal steps sampled at their midpoints. Points outside
/// the bounds see an unobstructed sun.
pub fn light_march(
    field: &DensityField,
    medium: &MediumParams,
    from_point: DVec3,
    n_light_steps: u32,
) -> f64 {
    if !field.bounds.contains_tolerant(from_point) {
        return 1.0;
    }
    light_march_counted(
        field,
        medium,
        from_point,
        n_light_steps.max(1),
        &mut SampleCounts::default(),
    )
}

/// Always takes exactly `n_light_steps` samples so sample accounting stays
/// exact even for points that round to just outside the box.
fn light_march_counted(
    field: &DensityField,
    medium: &MediumParams,
    from_point: DVec3,
    n_light_steps: u32,
    counts: &mut SampleCounts,
) -> f64 {
    let exit =
        intersect_bounds(from_point, medium.sun_direction, &field.bounds).map_or(0.0, |(_, t1)| t1);
    let step = exit / n_light_steps as f64;
    let mut density_sum = 0.0;
    for i in 0..n_light_steps {
        density_sum += field.sample(from_point + medium.sun_direction * ((i as f64 + 0.5) * step));
    }
    counts.light += n_light_steps as u64;
    (-density_sum * medium.absorption * step).exp()
}

/// Marches `ray` over `[t_min, t_max]` in `n_steps` equal steps, the first
/// sample placed `start_offset` past `t_min`.
pub fn march_primary(
    field: &DensityField,
    medium: &MediumParams,
    ray: &Ray,
    config: &RaymarchConfig,
    start_offset: f64,
) -> PixelSample {
    march_counted(
        field,
        medium,
        ray,
        config,
        start_offset,
        &mut SampleCounts::default(),
        None,
    )
}

/// Like [`march_primary`] but also returns the running transmittance after
/// each executed step.
pub fn march_primary_traced(
    field: &DensityField,
    medium: &MediumParams,
    ray: &Ray,
    config: &RaymarchConfig,
    start_offset: f64,
) -> (PixelSample, Vec<f64>) {
    let mut trace = Vec::with_capacity(config.n_steps as usize);
    let sample = march_counted(
        field,
        medium,
        ray,
        config,
        start_offset,
        &mut SampleCounts::default(),
        Some(&mut trace),
    );
    (sample, trace)
}

pub(crate) fn march_counted(
    field: &DensityField,
    medium: &MediumParams,
    ray: &Ray,
    config: &RaymarchConfig,
    start_offset: f64,
    counts: &mut SampleCounts,
    mut trace: Option<&mut Vec<f64>>,
) -> PixelSample {
    let n_steps = config.n_steps.max(1);
    let step_length = (ray.t_max - ray.t_min).max(0.0) / n_steps as f64;
    let cos_theta = transport::view_sun_cosine(ray.direction, medium.sun_direction);
    let phase = transport::phase_unchecked(medium.hg_g, cos_theta);
    let integrate: fn(f64, Rgb, f64, f64) -> StepContribution = match config.integration {
        IntegrationMode::Naive => transport::naive_unchecked,
        IntegrationMode::Analytic => transport::analytic_unchecked,
    };

    let mut transmittance = 1.0;
    let mut color = Rgb::BLACK;
    let mut depth_weight = 0.0;
    let mut weighted_depth = 0.0;
    for i in 0..n_steps {
        let t = ray.t_min + start_offset + i as f64 * step_length;
        let p = ray.at(t);
        let rho = field.sample(p);
        counts.density += 1;
        counts.steps += 1;

        if rho == 0.0 {
            // Empty space scatters nothing and leaves transmittance as is, so
            // the lighting march can be skipped without changing the result.
            if let Some(trace) = trace.as_deref_mut() {
                trace.push(transmittance);
            }
            continue;
        }

        let sun_t = light_march_counted(field, medium, p, config.n_light_steps.max(1), counts);
        let lighting = transport::lighting_unchecked(sun_t, phase, medium);
        let step = integrate(
            transmittance,
            lighting,
            rho * medium.absorption,
            step_length,
        );

        color += step.delta_scattering;
        let w = step.delta_scattering.luminance();
        depth_weight += w;
        weighted_depth += w * t;
        transmittance *= step.transmittance_factor;
        if let Some(trace) = trace.as_deref_mut() {
            trace.push(transmittance);
        }
        if config.early_out_enabled() && 1.0 - transmittance >= config.alpha_early_out {
            break;
        }
    }

    let mean_depth = if depth_weight > 0.0 {
        (weighted_depth / depth_weight).clamp(ray.t_min, ray.t_max)
    } else {
        ray.t_max
    };
    PixelSample {
        color,
        alpha: 1.0 - transmittance,
        mean_depth,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noisefield::make_procedural_clouds;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn unit_cube() -> VolumeBounds {
        VolumeBounds::new(DVec3::splat(-0.5), DVec3::splat(0.5)).unwrap()
    }

    fn ambient_only(absorption: f64) -> MediumParams {
        MediumParams {
            absorption,
            sun_radiance: Rgb::BLACK,
            ambient_radiance: Rgb::WHITE,
            ..Default::default()
        }
    }

    fn config(n_steps: u32, integration: IntegrationMode) -> RaymarchConfig {
        RaymarchConfig {
            n_steps,
            integration,
            alpha_early_out: 1.0,
            ..Default::default()
        }
    }

    #[test]
    fn intersect_from_outside_through_center() {
        let (t0, t1) =
            intersect_bounds(DVec3::new(0.0, 0.0, -3.0), DVec3::Z, &unit_cube()).unwrap();
        assert!(t0 > 0.0 && t1 > t0);
        assert!((t0 - 2.5).abs() < 1e-12 && (t1 - 3.5).abs() < 1e-12);
    }

    #[test]
    fn intersect_pointing_away() {
        assert!(intersect_bounds(DVec3::new(0.0, 0.0, -3.0), -DVec3::Z, &unit_cube()).is_none());
        assert!(intersect_bounds(DVec3::new(2.0, 0.0, -3.0), DVec3::Z, &unit_cube()).is_none());
    }

    #[test]
    fn intersect_from_center() {
        let b = VolumeBounds::new(DVec3::ZERO, DVec3::ONE).unwrap();
        for dir in [DVec3::X, DVec3::NEG_Y, DVec3::Z] {
            assert_eq!(
                intersect_bounds(DVec3::splat(0.5), dir, &b),
                Some((0.0, 0.5))
            );
        }
    }

    #[test]
    fn jitter_off_is_zero() {
        assert_eq!(jitter_offset(3, 9, 12, 0.25, JitterMode::Off, 4), 0.0);
    }

    #[test]
    fn jitter_is_deterministic_and_in_range() {
        let a = jitter_offset(17, 4, 99, 0.5, JitterMode::PerPixel, 1);
        assert_eq!(
            a.to_bits(),
            jitter_offset(17, 4, 99, 0.5, JitterMode::PerPixel, 1).to_bits()
        );
        assert!((0.0..0.5).contains(&a));
        assert_ne!(a, jitter_offset(18, 4, 99, 0.5, JitterMode::PerPixel, 1));
    }

    #[test]
    fn per_frame_jitter_ignores_pixel() {
        let a = jitter_offset(0, 0, 7, 1.0, JitterMode::PerFrameUniform, 0);
        assert_eq!(
            a,
            jitter_offset(311, 52, 7, 1.0, JitterMode::PerFrameUniform, 0)
        );
        assert_ne!(
            a,
            jitter_offset(0, 0, 8, 1.0, JitterMode::PerFrameUniform, 0)
        );
    }

    #[test]
    fn jitter_is_uniform() {
        const BINS: usize = 16;
        const STEP: f64 = 0.37;
        let mut hist = [0u64; BINS];
        let mut sum = 0.0;
        let mut n = 0u64;
        for frame in 0..10 {
            for y in 0..100 {
                for x in 0..100 {
                    let j = jitter_offset(x, y, frame, STEP, JitterMode::PerPixel, 0);
                    sum += j;
                    n += 1;
                    hist[((j / STEP) * BINS as f64) as usize] += 1;
                }
            }
        }
        let mean = sum / n as f64;
        assert!((mean - STEP / 2.0).abs() < 0.01 * STEP / 2.0, "mean {mean}");
        let expected = n as f64 / BINS as f64;
        let chi2: f64 = hist
            .iter()
            .map(|&c| (c as f64 - expected).powi(2) / expected)
            .sum();
        // scipy.stats.chi2.ppf(0.999, df=15)
        assert!(chi2 < 37.697_3, "chi-square {chi2}");
    }

    #[test]
    fn light_march_vacuum_and_outside() {
        let field = DensityField::constant(0.0, unit_cube()).unwrap();
        let m = MediumParams::default();
        assert_eq!(light_march(&field, &m, DVec3::ZERO, 6), 1.0);
        let dense = DensityField::constant(5.0, unit_cube()).unwrap();
        assert_eq!(light_march(&dense, &m, DVec3::new(0.0, 3.0, 0.0), 6), 1.0);
    }

    #[test]
    fn light_march_constant_density_is_exact() {
        let field = DensityField::constant(1.0, unit_cube()).unwrap();
        let m = MediumParams {
            sun_direction: DVec3::Y,
            ..ambient_only(1.0)
        };
        let from = DVec3::new(0.1, -0.3, 0.2);
        let exit = 0.5 - from.y;
        for n in [1, 2, 6, 17] {
            let t = light_march(&field, &m, from, n);
            assert!((t - (-exit).exp()).abs() < 1e-12, "n={n}: {t}");
        }
    }

    fn slab_ray() -> (DensityField, Ray) {
        let bounds =
            VolumeBounds::new(DVec3::new(-10.0, -10.0, 0.0), DVec3::new(10.0, 10.0, 4.0)).unwrap();
        let field = DensityField::constant(1.0, bounds).unwrap();
        let ray = Ray::through_bounds(DVec3::new(0.0, 0.0, -1.0), DVec3::Z, &bounds).unwrap();
        (field, ray)
    }

    #[test]
    fn vacuum_march_is_black() {
        let field = DensityField::constant(0.0, unit_cube()).unwrap();
        let ray = Ray::through_bounds(DVec3::new(0.0, 0.0, -2.0), DVec3::Z, &unit_cube()).unwrap();
        let s = march_primary(
            &field,
            &MediumParams::default(),
            &ray,
            &RaymarchConfig::default(),
            0.0,
        );
        assert_eq!(s.color, Rgb::BLACK);
        assert_eq!(s.alpha, 0.0);
        assert_eq!(s.mean_depth, ray.t_max);
    }

    #[test]
    fn analytic_slab_matches_closed_form_for_any_step_count() {
        let (field, ray) = slab_ray();
        let expected = 1.0 - (-4.0f64).exp();
        for n in [1, 8, 128] {
            let s = march_primary(
                &field,
                &ambient_only(1.0),
                &ray,
                &config(n, IntegrationMode::Analytic),
                0.0,
            );
            for c in s.color.channels() {
                assert!((c - expected).abs() / expected < 1e-9, "n={n}: {c}");
            }
            assert!((s.alpha - expected).abs() / expected < 1e-9);
        }
    }

    #[test]
    fn naive_slab_depends_on_step_count() {
        let (field, ray) = slab_ray();
        let one = march_primary(
            &field,
            &ambient_only(1.0),
            &ray,
            &config(1, IntegrationMode::Naive),
            0.0,
        );
        let many = march_primary(
            &field,
            &ambient_only(1.0),
            &ray,
            &config(128, IntegrationMode::Naive),
            0.0,
        );
        assert!((one.color.r - 4.0).abs() < 1e-12);
        assert!((one.color.r - many.color.r).abs() / many.color.r > 0.1);
    }

    fn cloud_scene() -> (DensityField, MediumParams) {
        let bounds = VolumeBounds::new(DVec3::splat(-2.0), DVec3::splat(2.0)).unwrap();
        let field = make_procedural_clouds(5, 0.45, 4, 0.6, bounds).unwrap();
        let medium = MediumParams {
            absorption: 3.0,
            ..Default::default()
        };
        (field, medium)
    }

    fn random_ray(rng: &mut ChaCha8Rng, bounds: &VolumeBounds) -> Option<Ray> {
        let origin = DVec3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            -6.0,
        );
        let target = DVec3::new(
            rng.random_range(-2.0..2.0),
            rng.random_range(-2.0..2.0),
            rng.random_range(-2.0..2.0),
        );
        Ray::through_bounds(origin, (target - origin).normalize(), bounds)
    }

    #[test]
    fn alpha_bounds_and_monotone_transmittance_fuzz() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let bounds = VolumeBounds::new(DVec3::splat(-2.0), DVec3::splat(2.0)).unwrap();
        let mut cases = 0;
        while cases < 10_000 {
            let Some(ray) = random_ray(&mut rng, &bounds) else {
                continue;
            };
            let field = match cases % 3 {
                0 => DensityField::constant(rng.random_range(0.0..5.0), bounds).unwrap(),
                1 => DensityField::sphere(
                    DVec3::ZERO,
                    rng.random_range(0.1..2.0),
                    rng.random_range(0.0..5.0),
                    bounds,
                )
                .unwrap(),
                _ => make_procedural_clouds(
                    rng.random(),
                    rng.random_range(0.1..2.0),
                    rng.random_range(1..5),
                    rng.random_range(0.0..1.0),
                    bounds,
                )
                .unwrap(),
            };
            let medium = MediumParams {
                absorption: rng.random_range(0.01..10.0),
                hg_g: rng.random_range(-0.9..0.9),
                ..Default::default()
            };
            let cfg = RaymarchConfig {
                n_steps: rng.random_range(1..24),
                n_light_steps: rng.random_range(1..4),
                integration: if rng.random_bool(0.5) {
                    IntegrationMode::Naive
                } else {
                    IntegrationMode::Analytic
                },
                ..Default::default()
            };
            let step = (ray.t_max - ray.t_min) / cfg.n_steps as f64;
            let offset = rng.random_range(0.0..1.0) * step;
            let (s, trace) = march_primary_traced(&field, &medium, &ray, &cfg, offset);
            assert!((0.0..=1.0).contains(&s.alpha), "alpha {}", s.alpha);
            assert!(trace.windows(2).all(|w| w[1] <= w[0]));
            assert!(s.mean_depth >= ray.t_min && s.mean_depth <= ray.t_max);
            cases += 1;
        }
    }

    #[test]
    fn early_out_is_sound_on_dense_fields() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let bounds = VolumeBounds::new(DVec3::splat(-2.0), DVec3::splat(2.0)).unwrap();
        let mut checked = 0;
        let mut fired = 0;
        while checked < 500 {
            let Some(ray) = random_ray(&mut rng, &bounds) else {
                continue;
            };
            let field = if checked % 2 == 0 {
                DensityField::constant(rng.random_range(1.0..6.0), bounds).unwrap()
            } else {
                make_procedural_clouds(rng.random(), 0.5, 3, 0.9, bounds).unwrap()
            };
            let medium = MediumParams {
                absorption: 8.0,
                ..Default::default()
            };
            let full_cfg = RaymarchConfig {
                n_steps: 64,
                alpha_early_out: 1.0,
                ..Default::default()
            };
            let early_cfg = RaymarchConfig {
                alpha_early_out: 1.0 - 1e-4,
                ..full_cfg
            };
            let full = march_primary(&field, &medium, &ray, &full_cfg, 0.0);
            let (early, trace) = march_primary_traced(&field, &medium, &ray, &early_cfg, 0.0);
            if trace.len() < 64 {
                fired += 1;
            }
            let (a, b) = (early.color.luminance(), full.color.luminance());
            if b > 0.0 {
                assert!((a - b).abs() / b < 1e-3, "{a} vs {b}");
            }
            checked += 1;
        }
        assert!(fired > 100, "early-out only fired {fired} times");
    }

    #[test]
    fn sample_counts_are_exact() {
        let (field, medium) = cloud_scene();
        let ray = Ray::through_bounds(DVec3::new(0.0, 0.0, -6.0), DVec3::Z, &field.bounds).unwrap();
        let cfg = RaymarchConfig {
            n_steps: 13,
            n_light_steps: 5,
            alpha_early_out: 1.0,
            ..Default::default()
        };
        let mut counts = SampleCounts::default();
        march_counted(&field, &medium, &ray, &cfg, 0.0, &mut counts, None);
        let step = (ray.t_max - ray.t_min) / 13.0;
        let occupied = (0..13)
            .filter(|&i| field.sample(ray.at(ray.t_min + i as f64 * step)) > 0.0)
            .count() as u64;
        assert!(occupied > 0 && occupied < 13, "{occupied}");
        assert_eq!(
            counts,
            SampleCounts {
                density: 13,
                light: 5 * occupied,
                steps: 13
            }
        );
    }

    #[test]
    fn jittered_marches_are_unbiased() {
        let (field, medium) = cloud_scene();
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let mut probes = 0;
        while probes < 6 {
            let Some(ray) = random_ray(&mut rng, &field.bounds) else {
                continue;
            };
            let dense_cfg = RaymarchConfig {
                n_steps: 2048,
                alpha_early_out: 1.0,
                ..Default::default()
            };
            let reference = march_primary(&field, &medium, &ray, &dense_cfg, 0.0)
                .color
                .luminance();
            let cfg = RaymarchConfig {
                n_steps: 8,
                alpha_early_out: 1.0,
                ..Default::default()
            };
            let step = (ray.t_max - ray.t_min) / 8.0;
            let draws = 1024;
            let mean = (0..draws)
                .map(|i| {
                    let offset = jitter_offset(i, probes, 0, step, JitterMode::PerPixel, 0);
                    march_primary(&field, &medium, &ray, &cfg, offset)
                        .color
                        .luminance()
                })
                .sum::<f64>()
                / draws as f64;
            assert!(
                (mean - reference).abs() <= 0.02 * reference + 1e-9,
                "{mean} vs {reference}"
            );
            probes += 1;
        }
    }
}
