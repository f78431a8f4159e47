//! Cloud density fields: closed-form test volumes and seeded fractal value
//! noise.

use glam::DVec3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hash::{hash_words, unit_float};

/// Axis-aligned box that bounds the participating medium.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VolumeBounds {
    pub min: DVec3,
    pub max: DVec3,
}

impl VolumeBounds {
    pub fn new(min: DVec3, max: DVec3) -> Result<Self> {
        let bounds = VolumeBounds { min, max };
        bounds.validate()?;
        Ok(bounds)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.min.is_finite() && self.max.is_finite()) || self.max.cmple(self.min).any() {
            return Err(Error::invalid(
                "bounds",
                format!(
                    "max {} must exceed min {} on every axis",
                    self.max, self.min
                ),
            ));
        }
        Ok(())
    }

    /// Closed containment test; boundary points count as inside.
    #[inline]
    pub fn contains(&self, p: DVec3) -> bool {
        p.cmpge(self.min).all() && p.cmple(self.max).all()
    }

    /// Containment with a margin of `1e-9` times the largest extent, so that
    /// points computed at a ray's entry or exit distance are not lost to
    /// rounding.
    #[inline]
    pub fn contains_tolerant(&self, p: DVec3) -> bool {
        let eps = (self.max - self.min).max_element() * 1e-9;
        p.cmpge(self.min - eps).all() && p.cmple(self.max + eps).all()
    }

    pub fn center(&self) -> DVec3 {
        (self.min + self.max) * 0.5
    }
}

/// The shape-specific part of a density field.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FieldShape {
    Constant {
        density: f64,
    },
    Sphere {
        center: DVec3,
        radius: f64,
        density: f64,
    },
    /// Horizontal layer `y_min <= y <= y_max`.
    Slab {
        y_min: f64,
        y_max: f64,
        density: f64,
    },
    /// Fractal value noise remapped by a coverage threshold.
    Procedural {
        seed: u32,
        frequency: f64,
        octaves: u32,
        coverage: f64,
        /// Width of a smooth fade to zero density at every bounds face, in
        /// world units. Zero disables the fade.
        #[serde(default)]
        edge_falloff: f64,
    },
}

/// Scalar density `rho(p) >= 0`, zero outside `bounds`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DensityField {
    pub bounds: VolumeBounds,
    pub shape: FieldShape,
}

fn non_negative(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(Error::invalid(
            name,
            format!("must be finite and >= 0, got {v}"),
        ))
    }
}

impl DensityField {
    pub fn constant(density: f64, bounds: VolumeBounds) -> Result<Self> {
        Self::build(FieldShape::Constant { density }, bounds)
    }

    pub fn sphere(center: DVec3, radius: f64, density: f64, bounds: VolumeBounds) -> Result<Self> {
        Self::build(
            FieldShape::Sphere {
                center,
                radius,
                density,
            },
            bounds,
        )
    }

    pub fn slab(y_min: f64, y_max: f64, density: f64, bounds: VolumeBounds) -> Result<Self> {
        Self::build(
            FieldShape::Slab {
                y_min,
                y_max,
                density,
            },
            bounds,
        )
    }

    fn build(shape: FieldShape, bounds: VolumeBounds) -> Result<Self> {
        let field = DensityField { bounds, shape };
        field.validate()?;
        Ok(field)
    }

    pub fn validate(&self) -> Result<()> {
        self.bounds.validate()?;
        match self.shape {
            FieldShape::Constant { density } => non_negative("density", density),
            FieldShape::Sphere {
                center,
                radius,
                density,
            } => {
                if !center.is_finite() {
                    return Err(Error::invalid("center", "must be finite"));
                }
                if !(radius.is_finite() && radius > 0.0) {
                    return Err(Error::invalid(
                        "radius",
                        format!("must be > 0, got {radius}"),
                    ));
                }
                non_negative("density", density)
            }
            FieldShape::Slab {
                y_min,
                y_max,
                density,
            } => {
                if !(y_min.is_finite() && y_max.is_finite() && y_min < y_max) {
                    return Err(Error::invalid(
                        "y_max",
                        format!("slab needs y_min < y_max, got [{y_min}, {y_max}]"),
                    ));
                }
                non_negative("density", density)
            }
            FieldShape::Procedural {
                frequency,
                octaves,
                coverage,
                edge_falloff,
                ..
            } => {
                non_negative("edge_falloff", edge_falloff)?;
                if octaves < 1 {
                    return Err(Error::invalid("octaves", "must be at least 1"));
                }
                if !(frequency.is_finite() && frequency > 0.0) {
                    return Err(Error::invalid(
                        "frequency",
                        format!("must be > 0, got {frequency}"),
                    ));
                }
                if !(0.0..=1.0).contains(&coverage) {
                    return Err(Error::invalid(
                        "coverage",
                        format!("must lie in [0, 1], got {coverage}"),
                    ));
                }
                Ok(())
            }
        }
    }

    /// A field whose interior density is zero everywhere.
    pub fn is_vacuum(&self) -> bool {
        match self.shape {
            FieldShape::Constant { density }
            | FieldShape::Sphere { density, .. }
            | FieldShape::Slab { density, .. } => density == 0.0,
            FieldShape::Procedural { coverage, .. } => coverage == 0.0,
        }
    }

    #[inline]
    pub fn sample(&self, p: DVec3) -> f64 {
        if !self.bounds.contains_tolerant(p) {
            return 0.0;
        }
        match self.shape {
            FieldShape::Constant { density } => density,
            FieldShape::Sphere {
                center,
                radius,
                density,
            } => {
                if p.distance_squared(center) <= radius * radius {
                    density
                } else {
                    0.0
                }
            }
            FieldShape::Slab {
                y_min,
                y_max,
                density,
            } => {
                if (y_min..=y_max).contains(&p.y) {
                    density
                } else {
                    0.0
                }
            }
            FieldShape::Procedural {
                seed,
                frequency,
                octaves,
                coverage,
                edge_falloff,
            } => {
                let fade = edge_fade(&self.bounds, p, edge_falloff);
                if fade == 0.0 {
                    return 0.0;
                }
                fade * coverage_remap(fbm(p * frequency, octaves, seed), coverage)
            }
        }
    }
}

/// Evaluates `field` at `p`; zero outside the field's bounds.
pub fn sample_density(field: &DensityField, p: DVec3) -> f64 {
    field.sample(p)
}

pub fn make_procedural_clouds(
    seed: u32,
    frequency: f64,
    octaves: u32,
    coverage: f64,
    bounds: VolumeBounds,
) -> Result<DensityField> {
    DensityField::build(
        FieldShape::Procedural {
            seed,
            frequency,
            octaves,
            coverage,
            edge_falloff: 0.0,
        },
        bounds,
    )
}

/// Smoothstep ramp from 0 on each bounds face to 1 at depth `width` inside,
/// multiplied over the three axes. Returns 1 when `width` is zero.
pub fn edge_fade(bounds: &VolumeBounds, p: DVec3, width: f64) -> f64 {
    if width <= 0.0 {
        return 1.0;
    }
    let d = (p - bounds.min).min(bounds.max - p) / width;
    let r = d.clamp(DVec3::ZERO, DVec3::ONE);
    smooth(r.x) * smooth(r.y) * smooth(r.z)
}

/// `clamp((n - (1 - c)) / c, 0, 1)`, with zero coverage meaning empty sky.
///
/// Rewritten as `1 - (1 - n) / c`, the remap is non-decreasing in `c` for
/// any `n <= 1`.
#[inline]
pub fn coverage_remap(noise: f64, coverage: f64) -> f64 {
    if coverage <= 0.0 {
        return 0.0;
    }
    ((noise - (1.0 - coverage)) / coverage).clamp(0.0, 1.0)
}

#[inline]
fn lattice_value(i: i64, j: i64, k: i64, seed: u32, octave: u32) -> f64 {
    unit_float(hash_words(&[i as u32, j as u32, k as u32, seed, octave]))
}

#[inline]
fn smooth(t: f64) -> f64 {
    t * t * (3.0 - 2.0 * t)
}

/// Value noise in `[0, 1)`: hashed lattice values blended trilinearly with
/// smoothstep weights.
pub fn value_noise(p: DVec3, seed: u32, octave: u32) -> f64 {
    let cell = p.floor();
    let f = p - cell;
    let (i, j, k) = (cell.x as i64, cell.y as i64, cell.z as i64);
    let (wx, wy, wz) = (smooth(f.x), smooth(f.y), smooth(f.z));
    let lerp = |a: f64, b: f64, t: f64| a + (b - a) * t;

    let v = |di, dj, dk| lattice_value(i + di, j + dj, k + dk, seed, octave);
    let x00 = lerp(v(0, 0, 0), v(1, 0, 0), wx);
    let x10 = lerp(v(0, 1, 0), v(1, 1, 0), wx);
    let x01 = lerp(v(0, 0, 1), v(1, 0, 1), wx);
    let x11 = lerp(v(0, 1, 1), v(1, 1, 1), wx);
    lerp(lerp(x00, x10, wy), lerp(x01, x11, wy), wz)
}

/// Fractal sum of `octaves` value-noise layers, normalized back into `[0, 1)`.
/// Each octave doubles frequency, halves amplitude and shifts its lattice so
/// octave grids never line up.
pub fn fbm(p: DVec3, octaves: u32, seed: u32) -> f64 {
    const LACUNARITY: f64 = 2.0;
    const GAIN: f64 = 0.5;
    const SHIFT: DVec3 = DVec3::new(17.13, 31.71, 5.37);

    let mut sum = 0.0;
    let mut norm = 0.0;
    let mut amplitude = 1.0;
    let mut q = p;
    for octave in 0..octaves {
        sum += amplitude * value_noise(q, seed, octave);
        norm += amplitude;
        amplitude *= GAIN;
        q = q * LACUNARITY + SHIFT;
    }
    sum / norm
}
