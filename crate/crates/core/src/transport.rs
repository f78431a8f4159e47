//! Per-step light transport: Beer-Lambert attenuation, the Henyey-Greenstein
//! phase function, the lighting term and the two scattering updates.
//!
//! The medium has a single coefficient `alpha`: `sigma = rho * alpha` is both
//! the extinction and the scattering coefficient at a point. A step of length
//! `D` through constant `sigma` starting with transmittance `T0` and lit by
//! `L` adds
//!
//! ```text
//! naive:     T0 * L * sigma * D            (transmittance frozen over the step)
//! analytic:  T0 * L * sigma * (1 - exp(-sigma * D)) / sigma
//! ```
//!
//! The analytic form integrates `T0 * exp(-sigma * x)` over the step, so
//! splitting a step into pieces does not change the result. The naive form
//! over-brightens in proportion to `sigma * D`.

use std::f64::consts::PI;

use glam::DVec3;
use serde::{Deserialize, Serialize};

use crate::color::Rgb;
use crate::error::{Error, Result};

/// Below this optical depth the analytic factor switches to its Taylor series.
pub const TAYLOR_THRESHOLD: f64 = 1e-4;

const UNIT_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MediumParams {
    /// Extinction per unit density per world unit.
    pub absorption: f64,
    /// Henyey-Greenstein asymmetry.
    pub hg_g: f64,
    /// Unit vector pointing from the medium toward the sun.
    pub sun_direction: DVec3,
    pub sun_radiance: Rgb,
    pub ambient_radiance: Rgb,
}

impl Default for MediumParams {
    fn default() -> Self {
        MediumParams {
            absorption: 1.0,
            hg_g: 0.2,
            sun_direction: DVec3::new(0.0, 0.6, 0.8),
            sun_radiance: Rgb::splat(10.0),
            ambient_radiance: Rgb::new(0.2, 0.25, 0.3),
        }
    }
}

impl MediumParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.absorption.is_finite() && self.absorption > 0.0) {
            return Err(Error::invalid(
                "absorption",
                format!("must be > 0, got {}", self.absorption),
            ));
        }
        check_asymmetry(self.hg_g)?;
        if !self.sun_direction.is_finite()
            || (self.sun_direction.length() - 1.0).abs() > UNIT_TOLERANCE
        {
            return Err(Error::invalid(
                "sun_direction",
                format!(
                    "must have unit length within {UNIT_TOLERANCE}, got {}",
                    self.sun_direction
                ),
            ));
        }
        for (name, c) in [
            ("sun_radiance", self.sun_radiance),
            ("ambient_radiance", self.ambient_radiance),
        ] {
            if !(c.is_finite() && c.is_non_negative()) {
                return Err(Error::invalid(
                    name,
                    format!("channels must be finite and >= 0, got {c:?}"),
                ));
            }
        }
        Ok(())
    }
}

/// The outcome of integrating one raymarch step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepContribution {
    /// Radiance added to the pixel by this step.
    pub delta_scattering: Rgb,
    /// `exp(-rho * alpha * D)`; multiplies the running transmittance.
    pub transmittance_factor: f64,
}

fn check_asymmetry(g: f64) -> Result<()> {
    if g.is_finite() && g.abs() < 1.0 {
        Ok(())
    } else {
        Err(Error::invalid(
            "hg_g",
            format!("|g| < 1 is required, got {g}"),
        ))
    }
}

fn check_step_inputs(rho: f64, alpha: f64, dist: f64) -> Result<()> {
    if !(rho.is_finite() && rho >= 0.0) {
        return Err(Error::invalid("rho", format!("must be >= 0, got {rho}")));
    }
    if !(alpha.is_finite() && alpha > 0.0) {
        return Err(Error::invalid("alpha", format!("must be > 0, got {alpha}")));
    }
    if !(dist.is_finite() && dist >= 0.0) {
        return Err(Error::invalid("dist", format!("must be >= 0, got {dist}")));
    }
    Ok(())
}

fn check_transmittance(t: f64) -> Result<()> {
    if (0.0..=1.0).contains(&t) {
        Ok(())
    } else {
        Err(Error::invalid(
            "transmittance",
            format!("must lie in [0, 1], got {t}"),
        ))
    }
}

fn check_lighting(l: Rgb) -> Result<()> {
    if l.is_finite() && l.is_non_negative() {
        Ok(())
    } else {
        Err(Error::invalid(
            "lighting",
            format!("must be finite and >= 0, got {l:?}"),
        ))
    }
}

/// Beer-Lambert attenuation `exp(-rho * alpha * dist)`.
pub fn transmittance_factor(rho: f64, alpha: f64, dist: f64) -> Result<f64> {
    check_step_inputs(rho, alpha, dist)?;
    Ok((-rho * alpha * dist).exp())
}

/// Henyey-Greenstein phase function, normalized over the sphere:
/// `(1 - g^2) / (4 pi (1 + g^2 - 2 g cos_theta)^(3/2))`.
pub fn hg_phase(g: f64, cos_theta: f64) -> Result<f64> {
    check_asymmetry(g)?;
    if !(-1.0..=1.0).contains(&cos_theta) {
        return Err(Error::invalid(
            "cos_theta",
            format!("must lie in [-1, 1], got {cos_theta}"),
        ));
    }
    Ok(phase_unchecked(g, cos_theta))
}

#[inline]
pub(crate) fn phase_unchecked(g: f64, cos_theta: f64) -> f64 {
    let g2 = g * g;
    let denom = 1.0 + g2 - 2.0 * g * cos_theta;
    (1.0 - g2) / (4.0 * PI * denom * denom.sqrt())
}

/// `L = sun_radiance * sun_transmittance * phase + ambient_radiance`.
pub fn lighting_term(sun_transmittance: f64, phase: f64, medium: &MediumParams) -> Result<Rgb> {
    check_transmittance(sun_transmittance)?;
    if !(phase.is_finite() && phase >= 0.0) {
        return Err(Error::invalid(
            "phase",
            format!("must be finite and >= 0, got {phase}"),
        ));
    }
    Ok(lighting_unchecked(sun_transmittance, phase, medium))
}

#[inline]
pub(crate) fn lighting_unchecked(sun_transmittance: f64, phase: f64, medium: &MediumParams) -> Rgb {
    medium.sun_radiance * (sun_transmittance * phase) + medium.ambient_radiance
}

/// `(1 - exp(-sigma * dist)) / sigma`, the integral of `exp(-sigma * x)` over
/// `[0, dist]`. Lies in `[0, dist]` and tends to `dist` as `sigma -> 0`.
///
/// For `sigma * dist` below [`TAYLOR_THRESHOLD`] the quotient is replaced by
/// `dist * (1 - u/2 + u^2/6)` with `u = sigma * dist`.
#[inline]
pub fn analytic_step_factor(sigma: f64, dist: f64) -> f64 {
    let u = sigma * dist;
    if u < TAYLOR_THRESHOLD {
        dist * (1.0 - u / 2.0 + u * u / 6.0)
    } else {
        -(-u).exp_m1() / sigma
    }
}

/// Step update that holds the transmittance fixed at its step-start value.
pub fn scattering_step_naive(
    t: f64,
    l: Rgb,
    rho: f64,
    alpha: f64,
    dist: f64,
) -> Result<StepContribution> {
    check_transmittance(t)?;
    check_lighting(l)?;
    check_step_inputs(rho, alpha, dist)?;
    Ok(naive_unchecked(t, l, rho * alpha, dist))
}

/// Step update that integrates the transmittance decay across the step,
/// holding only the density constant.
pub fn scattering_step_analytic(
    t0: f64,
    l: Rgb,
    rho: f64,
    alpha: f64,
    dist: f64,
) -> Result<StepContribution> {
    check_transmittance(t0)?;
    check_lighting(l)?;
    check_step_inputs(rho, alpha, dist)?;
    Ok(analytic_unchecked(t0, l, rho * alpha, dist))
}

#[inline]
pub(crate) fn naive_unchecked(t: f64, l: Rgb, sigma: f64, dist: f64) -> StepContribution {
    StepContribution {
        delta_scattering: l * (t * sigma * dist),
        transmittance_factor: (-sigma * dist).exp(),
    }
}

#[inline]
pub(crate) fn analytic_unchecked(t0: f64, l: Rgb, sigma: f64, dist: f64) -> StepContribution {
    StepContribution {
        delta_scattering: l * (t0 * sigma * analytic_step_factor(sigma, dist)),
        transmittance_factor: (-sigma * dist).exp(),
    }
}

/// Cosine between the view ray and the direction toward the sun, the angle
/// convention used for every phase evaluation.
#[inline]
pub fn view_sun_cosine(view_dir: DVec3, sun_direction: DVec3) -> f64 {
    view_dir.dot(sun_direction).clamp(-1.0, 1.0)
}
