//! The nine closed-curve families: implicit equations, parametric samplers
//! and an arc-length table for constant-speed sampling.
//!
//! Every canonical form is centered at the origin with zero rotation. Pose
//! (rotation and offset) is applied by [`crate::transform2d`].
//!
//! | family                 | implicit form (`f = 0`)                                 | parametrization                         |
//! |------------------------|---------------------------------------------------------|-----------------------------------------|
//! | circle / ellipse       | `x²/a² + y²/b² - 1`                                     | `(a cos t, b sin t)`                    |
//! | astroid                | `(x² + y² - a²)³ + 27 a² x² y²`                         | `(a cos³t, a sin³t)`                    |
//! | deltoid                | `(x²+y²)² + 18a²(x²+y²) - 27a⁴ - 8a(x³ - 3xy²)`         | `a(2cos t + cos 2t, 2sin t - sin 2t)`   |
//! | limaçon                | `(x² + y² - a x)² - b²(x² + y²)`                        | polar `r = b + a cos t`                 |
//! | nephroid               | `(x² + y² - 4a²)³ - 108 a⁴ y²`                          | `a(3cos t - cos 3t, 3sin t - sin 3t)`   |
//! | quadrifolium           | `(x² + y²)³ - a²(x² - y²)²`                             | polar `r = a cos 2t`                    |
//! | squircle               | `x⁴ + y⁴ - a⁴`                                          | polar `r = a (cos⁴t + sin⁴t)^(-1/4)`    |
//! | lemniscate (Bernoulli) | `(x² + y²)² - 2a²(x² - y²)`                             | `a√2 (cos t, sin t cos t) / (1 + sin²t)`|
//! | lemniscate (Gerono)    | `x⁴ - a²(x² - y²)`                                      | `(a cos t, a sin t cos t)`              |
//!
//! The astroid is used in its rationalized degree-6 form so that residuals
//! stay differentiable on the axes.

use std::f64::consts::{FRAC_PI_2, PI, SQRT_2, TAU};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite2, Error, Result};
use crate::geometry::Point2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CurveFamily {
    CircleEllipse,
    Astroid,
    Deltoid,
    Limacon,
    Nephroid,
    Quadrifolium,
    Squircle,
    LemniscateBernoulli,
    LemniscateGerono,
}

impl CurveFamily {
    /// All families, ordered by their label code.
    pub const ALL: [CurveFamily; 9] = [
        CurveFamily::CircleEllipse,
        CurveFamily::Astroid,
        CurveFamily::Deltoid,
        CurveFamily::Limacon,
        CurveFamily::Nephroid,
        CurveFamily::Quadrifolium,
        CurveFamily::Squircle,
        CurveFamily::LemniscateBernoulli,
        CurveFamily::LemniscateGerono,
    ];

    /// Stable label code in `0..9`, used by the classifier.
    pub fn code(self) -> usize {
        self as usize
    }

    pub fn from_code(code: usize) -> Option<Self> {
        Self::ALL.get(code).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            CurveFamily::CircleEllipse => "circle_ellipse",
            CurveFamily::Astroid => "astroid",
            CurveFamily::Deltoid => "deltoid",
            CurveFamily::Limacon => "limacon",
            CurveFamily::Nephroid => "nephroid",
            CurveFamily::Quadrifolium => "quadrifolium",
            CurveFamily::Squircle => "squircle",
            CurveFamily::LemniscateBernoulli => "lemniscate_bernoulli",
            CurveFamily::LemniscateGerono => "lemniscate_gerono",
        }
    }

    /// Number of shape parameters: 1 (`a`) or 2 (`a`, `b`).
    pub fn arity(self) -> usize {
        match self {
            CurveFamily::CircleEllipse | CurveFamily::Limacon => 2,
            _ => 1,
        }
    }

    /// Polynomial degree of the implicit form.
    pub fn degree(self) -> u32 {
        match self {
            CurveFamily::CircleEllipse => 2,
            CurveFamily::Astroid | CurveFamily::Nephroid | CurveFamily::Quadrifolium => 6,
            CurveFamily::Deltoid
            | CurveFamily::Limacon
            | CurveFamily::Squircle
            | CurveFamily::LemniscateBernoulli
            | CurveFamily::LemniscateGerono => 4,
        }
    }

    /// Power `k` with `f(s·x, s·y; s·a, s·b) = s^k f(x, y; a, b)`.
    ///
    /// Equal to [`degree`](Self::degree) except for the ellipse, whose
    /// `x²/a² + y²/b² - 1` form is scale-free.
    pub fn homogeneity(self) -> u32 {
        match self {
            CurveFamily::CircleEllipse => 0,
            other => other.degree(),
        }
    }

    /// Smallest positive rotation that maps the canonical curve onto itself.
    pub fn symmetry_angle(self) -> f64 {
        match self {
            CurveFamily::CircleEllipse
            | CurveFamily::Nephroid
            | CurveFamily::LemniscateBernoulli
            | CurveFamily::LemniscateGerono => PI,
            CurveFamily::Astroid | CurveFamily::Quadrifolium | CurveFamily::Squircle => FRAC_PI_2,
            CurveFamily::Deltoid => TAU / 3.0,
            CurveFamily::Limacon => TAU,
        }
    }

    /// Rotational symmetry order (`2π / symmetry_angle`).
    pub fn symmetry_order(self) -> u32 {
        (TAU / self.symmetry_angle()).round() as u32
    }
}

impl fmt::Display for CurveFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CurveFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase().replace('-', "_");
        Self::ALL
            .iter()
            .copied()
            .find(|f| f.name() == key)
            .ok_or_else(|| Error::InvalidInput(format!("unknown curve family `{s}`")))
    }
}

/// Shape parameters of a canonical curve (meters).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CanonicalParams {
    pub a: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<f64>,
}

impl CanonicalParams {
    pub fn new(a: f64) -> Self {
        Self { a, b: None }
    }

    pub fn with_b(a: f64, b: f64) -> Self {
        Self { a, b: Some(b) }
    }

    /// Builds parameters matching the family's arity, ignoring `b` for
    /// one-parameter families.
    pub fn for_family(family: CurveFamily, a: f64, b: f64) -> Self {
        if family.arity() == 2 {
            Self::with_b(a, b)
        } else {
            Self::new(a)
        }
    }

    /// `b` for two-parameter families, `a` otherwise.
    pub fn b_or_a(&self) -> f64 {
        self.b.unwrap_or(self.a)
    }

    pub fn validate(&self, family: CurveFamily) -> Result<()> {
        if !(self.a.is_finite() && self.a > 0.0) {
            return Err(Error::InvalidInput(format!("{family}: a must be positive, got {}", self.a)));
        }
        match (family.arity(), self.b) {
            (2, Some(b)) if b.is_finite() && b > 0.0 => Ok(()),
            (2, Some(b)) => Err(Error::InvalidInput(format!("{family}: b must be positive, got {b}"))),
            (2, None) => Err(Error::InvalidInput(format!("{family} requires parameter b"))),
            (_, None) => Ok(()),
            (_, Some(_)) => Err(Error::InvalidInput(format!("{family} takes no parameter b"))),
        }
    }

    /// Characteristic length used to normalize residuals.
    pub fn scale(&self) -> f64 {
        match self.b {
            Some(b) => self.a.max(b),
            None => self.a,
        }
    }
}

/// Implicit residual without validation. `b` is ignored by one-parameter
/// families.
#[inline]
pub fn implicit_raw(family: CurveFamily, a: f64, b: f64, x: f64, y: f64) -> f64 {
    let x2 = x * x;
    let y2 = y * y;
    let r2 = x2 + y2;
    let a2 = a * a;
    match family {
        CurveFamily::CircleEllipse => x2 / a2 + y2 / (b * b) - 1.0,
        CurveFamily::Astroid => {
            let u = r2 - a2;
            u * u * u + 27.0 * a2 * x2 * y2
        }
        CurveFamily::Deltoid => r2 * r2 + 18.0 * a2 * r2 - 27.0 * a2 * a2 - 8.0 * a * (x * x2 - 3.0 * x * y2),
        CurveFamily::Limacon => {
            let u = r2 - a * x;
            u * u - b * b * r2
        }
        CurveFamily::Nephroid => {
            let u = r2 - 4.0 * a2;
            u * u * u - 108.0 * a2 * a2 * y2
        }
        CurveFamily::Quadrifolium => {
            let d = x2 - y2;
            r2 * r2 * r2 - a2 * d * d
        }
        CurveFamily::Squircle => x2 * x2 + y2 * y2 - a2 * a2,
        CurveFamily::LemniscateBernoulli => r2 * r2 - 2.0 * a2 * (x2 - y2),
        CurveFamily::LemniscateGerono => x2 * x2 - a2 * (x2 - y2),
    }
}

/// Gradient `(∂f/∂x, ∂f/∂y)` of [`implicit_raw`].
#[inline]
pub fn implicit_gradient_raw(family: CurveFamily, a: f64, b: f64, x: f64, y: f64) -> (f64, f64) {
    let x2 = x * x;
    let y2 = y * y;
    let r2 = x2 + y2;
    let a2 = a * a;
    match family {
        CurveFamily::CircleEllipse => (2.0 * x / a2, 2.0 * y / (b * b)),
        CurveFamily::Astroid => {
            let u = r2 - a2;
            (6.0 * u * u * x + 54.0 * a2 * x * y2, 6.0 * u * u * y + 54.0 * a2 * x2 * y)
        }
        CurveFamily::Deltoid => {
            (4.0 * r2 * x + 36.0 * a2 * x - 24.0 * a * (x2 - y2), 4.0 * r2 * y + 36.0 * a2 * y + 48.0 * a * x * y)
        }
        CurveFamily::Limacon => {
            let u = r2 - a * x;
            (2.0 * u * (2.0 * x - a) - 2.0 * b * b * x, 4.0 * u * y - 2.0 * b * b * y)
        }
        CurveFamily::Nephroid => {
            let u = r2 - 4.0 * a2;
            (6.0 * u * u * x, 6.0 * u * u * y - 216.0 * a2 * a2 * y)
        }
        CurveFamily::Quadrifolium => {
            let d = x2 - y2;
            (6.0 * r2 * r2 * x - 4.0 * a2 * d * x, 6.0 * r2 * r2 * y + 4.0 * a2 * d * y)
        }
        CurveFamily::Squircle => (4.0 * x * x2, 4.0 * y * y2),
        CurveFamily::LemniscateBernoulli => (4.0 * r2 * x - 4.0 * a2 * x, 4.0 * r2 * y + 4.0 * a2 * y),
        CurveFamily::LemniscateGerono => (4.0 * x * x2 - 2.0 * a2 * x, 2.0 * a2 * y),
    }
}

/// Value of the family's implicit equation (left minus right) at `p`.
/// Zero on the curve.
pub fn implicit_value(family: CurveFamily, params: &CanonicalParams, p: Point2) -> Result<f64> {
    ensure_finite2(p.x, p.y)?;
    params.validate(family)?;
    Ok(implicit_raw(family, params.a, params.b_or_a(), p.x, p.y))
}

/// Polynomial degree of the family's implicit form.
pub fn degree(family: CurveFamily) -> u32 {
    family.degree()
}

/// Point on the canonical curve at parameter `t` (period `2π`).
#[inline]
pub fn point_raw(family: CurveFamily, a: f64, b: f64, t: f64) -> Point2 {
    let (s, c) = t.sin_cos();
    match family {
        CurveFamily::CircleEllipse => Point2::new(a * c, b * s),
        CurveFamily::Astroid => Point2::new(a * c * c * c, a * s * s * s),
        CurveFamily::Deltoid => {
            let (s2, c2) = (2.0 * t).sin_cos();
            Point2::new(a * (2.0 * c + c2), a * (2.0 * s - s2))
        }
        CurveFamily::Limacon => {
            let r = b + a * c;
            Point2::new(r * c, r * s)
        }
        CurveFamily::Nephroid => {
            let (s3, c3) = (3.0 * t).sin_cos();
            Point2::new(a * (3.0 * c - c3), a * (3.0 * s - s3))
        }
        CurveFamily::Quadrifolium => {
            let r = a * (2.0 * t).cos();
            Point2::new(r * c, r * s)
        }
        CurveFamily::Squircle => {
            let r = a / (c.powi(4) + s.powi(4)).powf(0.25);
            Point2::new(r * c, r * s)
        }
        CurveFamily::LemniscateBernoulli => {
            let k = a * SQRT_2 / (1.0 + s * s);
            Point2::new(k * c, k * s * c)
        }
        CurveFamily::LemniscateGerono => Point2::new(a * c, a * s * c),
    }
}

pub fn point_at(family: CurveFamily, params: &CanonicalParams, t: f64) -> Point2 {
    point_raw(family, params.a, params.b_or_a(), t)
}

/// `n` points at uniform parameter steps `t_k = 2πk/n` over one period.
pub fn sample_parametric(family: CurveFamily, params: &CanonicalParams, n: usize) -> Result<Vec<Point2>> {
    params.validate(family)?;
    if n < 4 {
        return Err(Error::InvalidInput(format!("need at least 4 samples, got {n}")));
    }
    Ok((0..n).map(|k| point_at(family, params, TAU * k as f64 / n as f64)).collect())
}

/// Piecewise-linear map between arc length and curve parameter over one
/// period, used to move along a curve at constant speed. Positions are
/// always evaluated on the exact curve; only the `s -> t` map is
/// interpolated.
#[derive(Debug, Clone)]
pub struct ArcLengthTable {
    family: CurveFamily,
    params: CanonicalParams,
    /// Cumulative length at `t_k = 2πk/segments`, `segments + 1` entries.
    cumulative: Vec<f64>,
}

impl ArcLengthTable {
    pub const DEFAULT_SEGMENTS: usize = 2048;

    pub fn new(family: CurveFamily, params: CanonicalParams, segments: usize) -> Result<Self> {
        params.validate(family)?;
        if segments < 8 {
            return Err(Error::InvalidInput("arc-length table needs at least 8 segments".into()));
        }
        let mut cumulative = Vec::with_capacity(segments + 1);
        cumulative.push(0.0);
        let mut prev = point_at(family, &params, 0.0);
        let mut total = 0.0;
        for k in 1..=segments {
            let p = point_at(family, &params, TAU * k as f64 / segments as f64);
            total += (p - prev).norm();
            cumulative.push(total);
            prev = p;
        }
        Ok(Self { family, params, cumulative })
    }

    pub fn length(&self) -> f64 {
        *self.cumulative.last().unwrap()
    }

    /// Curve parameter at arc length `s` (wrapped into one period).
    pub fn param_at(&self, s: f64) -> f64 {
        let total = self.length();
        let s = s.rem_euclid(total);
        let segments = self.cumulative.len() - 1;
        let k = self.cumulative.partition_point(|&c| c <= s).clamp(1, segments);
        let (c0, c1) = (self.cumulative[k - 1], self.cumulative[k]);
        let frac = if c1 > c0 { (s - c0) / (c1 - c0) } else { 0.0 };
        TAU * ((k - 1) as f64 + frac) / segments as f64
    }

    /// Arc length at curve parameter `t`.
    pub fn arclength_at(&self, t: f64) -> f64 {
        let segments = self.cumulative.len() - 1;
        let u = t.rem_euclid(TAU) / TAU * segments as f64;
        let k = (u.floor() as usize).min(segments - 1);
        let frac = u - k as f64;
        self.cumulative[k] + frac * (self.cumulative[k + 1] - self.cumulative[k])
    }

    pub fn point_at_arclength(&self, s: f64) -> Point2 {
        point_at(self.family, &self.params, self.param_at(s))
    }

    /// `n` points at uniform arc-length spacing starting at arc length `start`.
    pub fn sample_uniform(&self, n: usize, start: f64) -> Vec<Point2> {
        let step = self.length() / n as f64;
        (0..n).map(|k| self.point_at_arclength(start + step * k as f64)).collect()
    }
}
