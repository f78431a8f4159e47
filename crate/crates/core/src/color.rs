//! Linear-light color triples and color+alpha pairs.

use std::ops::{Add, AddAssign, Mul, Sub};

use serde::{Deserialize, Serialize};

/// Rec. 709 luminance weights.
pub const LUMINANCE_WEIGHTS: [f64; 3] = [0.2126, 0.7152, 0.0722];

/// Linear RGB radiance or reflectance triple.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 3]", into = "[f64; 3]")]
pub struct Rgb {
    pub r: f64,
    pub g: f64,
    pub b: f64,
}

impl Rgb {
    pub const BLACK: Rgb = Rgb::splat(0.0);
    pub const WHITE: Rgb = Rgb::splat(1.0);

    pub const fn new(r: f64, g: f64, b: f64) -> Self {
        Rgb { r, g, b }
    }

    pub const fn splat(v: f64) -> Self {
        Rgb { r: v, g: v, b: v }
    }

    pub fn luminance(self) -> f64 {
        LUMINANCE_WEIGHTS[0] * self.r
            + LUMINANCE_WEIGHTS[1] * self.g
            + LUMINANCE_WEIGHTS[2] * self.b
    }

    pub fn channels(self) -> [f64; 3] {
        [self.r, self.g, self.b]
    }

    pub fn is_finite(self) -> bool {
        self.r.is_finite() && self.g.is_finite() && self.b.is_finite()
    }

    pub fn is_non_negative(self) -> bool {
        self.r >= 0.0 && self.g >= 0.0 && self.b >= 0.0
    }

    pub fn map(self, f: impl Fn(f64) -> f64) -> Self {
        Rgb::new(f(self.r), f(self.g), f(self.b))
    }
}

impl From<[f64; 3]> for Rgb {
    fn from([r, g, b]: [f64; 3]) -> Self {
        Rgb { r, g, b }
    }
}

impl From<Rgb> for [f64; 3] {
    fn from(c: Rgb) -> Self {
        c.channels()
    }
}

impl Add for Rgb {
    type Output = Rgb;
    fn add(self, o: Rgb) -> Rgb {
        Rgb::new(self.r + o.r, self.g + o.g, self.b + o.b)
    }
}

impl AddAssign for Rgb {
    fn add_assign(&mut self, o: Rgb) {
        *self = *self + o;
    }
}

impl Sub for Rgb {
    type Output = Rgb;
    fn sub(self, o: Rgb) -> Rgb {
        Rgb::new(self.r - o.r, self.g - o.g, self.b - o.b)
    }
}

impl Mul<f64> for Rgb {
    type Output = Rgb;
    fn mul(self, s: f64) -> Rgb {
        Rgb::new(self.r * s, self.g * s, self.b * s)
    }
}

impl Mul<Rgb> for Rgb {
    type Output = Rgb;
    fn mul(self, o: Rgb) -> Rgb {
        Rgb::new(self.r * o.r, self.g * o.g, self.b * o.b)
    }
}

/// Premultiplied color plus coverage, as stored in the cloud buffer.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Rgba {
    pub color: Rgb,
    pub alpha: f64,
}

impl Rgba {
    pub const TRANSPARENT: Rgba = Rgba {
        color: Rgb::BLACK,
        alpha: 0.0,
    };

    pub const fn new(color: Rgb, alpha: f64) -> Self {
        Rgba { color, alpha }
    }

    pub fn from_channels([r, g, b, a]: [f64; 4]) -> Self {
        Rgba {
            color: Rgb::new(r, g, b),
            alpha: a,
        }
    }

    pub fn channels(self) -> [f64; 4] {
        [self.color.r, self.color.g, self.color.b, self.alpha]
    }

    fn zip(self, o: Rgba, f: impl Fn(f64, f64) -> f64) -> Rgba {
        let (a, b) = (self.channels(), o.channels());
        Rgba::from_channels([f(a[0], b[0]), f(a[1], b[1]), f(a[2], b[2]), f(a[3], b[3])])
    }

    pub fn min(self, o: Rgba) -> Rgba {
        self.zip(o, f64::min)
    }

    pub fn max(self, o: Rgba) -> Rgba {
        self.zip(o, f64::max)
    }

    /// Channelwise clamp into `[lo, hi]`.
    pub fn clamp(self, lo: Rgba, hi: Rgba) -> Rgba {
        self.max(lo).min(hi)
    }

    /// `self * (1 - t) + other * t`, channelwise.
    pub fn lerp(self, other: Rgba, t: f64) -> Rgba {
        self.zip(other, |a, b| a + (b - a) * t)
    }

    /// Premultiplied "over" against an opaque background.
    pub fn over(self, background: Rgb) -> Rgb {
        self.color + background * (1.0 - self.alpha)
    }
}
