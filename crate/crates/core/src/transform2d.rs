//! Posed curves: a canonical family plus in-plane rotation and offset.
//!
//! A model maps a world point `p` to the canonical frame with
//! `q = R(-θ)·(p - (x0, y0))` and evaluates the family's implicit equation
//! at `q`. Equivalently, the canonical curve is rotated counter-clockwise by
//! `θ` and then translated by `(x0, y0)`.

use serde::{Deserialize, Serialize};

use crate::curves::{self, CanonicalParams, CurveFamily};
use crate::error::{ensure_finite2, Error, Result};
use crate::geometry::{rotation2, wrap_angle, wrap_to_sector, Point2};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose2 {
    /// Rotation in radians, wrapped to `[-π, π)`.
    pub theta: f64,
    pub x0: f64,
    pub y0: f64,
}

impl Pose2 {
    pub fn new(theta: f64, x0: f64, y0: f64) -> Self {
        Self { theta: wrap_angle(theta), x0, y0 }
    }

    pub fn identity() -> Self {
        Self { theta: 0.0, x0: 0.0, y0: 0.0 }
    }

    pub fn offset(&self) -> Point2 {
        Point2::new(self.x0, self.y0)
    }

    /// World point to canonical frame.
    #[inline]
    pub fn to_canonical(&self, p: Point2) -> Point2 {
        let (s, c) = self.theta.sin_cos();
        let dx = p.x - self.x0;
        let dy = p.y - self.y0;
        Point2::new(c * dx + s * dy, -s * dx + c * dy)
    }

    /// Canonical frame to world point.
    #[inline]
    pub fn to_world(&self, q: Point2) -> Point2 {
        rotation2(self.theta) * q + self.offset()
    }

    fn is_finite(&self) -> bool {
        self.theta.is_finite() && self.x0.is_finite() && self.y0.is_finite()
    }
}

/// Relative gradient floor used by [`CurveModel::residual_normalized`].
const GRADIENT_FLOOR: f64 = 1e-3;

/// A classified-and-fitted closed curve. Serializes flat as
/// `{family, a, b?, theta, x0, y0}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveModel {
    pub family: CurveFamily,
    #[serde(flatten)]
    pub params: CanonicalParams,
    #[serde(flatten)]
    pub pose: Pose2,
}

impl CurveModel {
    pub fn new(family: CurveFamily, params: CanonicalParams, pose: Pose2) -> Result<Self> {
        let model = Self { family, params, pose };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate(self.family)?;
        if !self.pose.is_finite() {
            return Err(Error::InvalidInput(format!("non-finite pose {:?}", self.pose)));
        }
        Ok(())
    }

    /// Point on the posed curve at parameter `t`.
    pub fn point_at(&self, t: f64) -> Point2 {
        self.pose.to_world(curves::point_at(self.family, &self.params, t))
    }

    /// `n` points at uniform parameter steps over one period.
    pub fn sample(&self, n: usize) -> Result<Vec<Point2>> {
        Ok(curves::sample_parametric(self.family, &self.params, n)?
            .into_iter()
            .map(|q| self.pose.to_world(q))
            .collect())
    }

    /// Residual without validation, for hot loops.
    #[inline]
    pub fn residual_raw(&self, p: Point2) -> f64 {
        let q = self.pose.to_canonical(p);
        curves::implicit_raw(self.family, self.params.a, self.params.b_or_a(), q.x, q.y)
    }

    /// Implicit residual divided by the norm of its spatial gradient: the
    /// first-order distance from `p` to the curve, in meters.
    ///
    /// A small floor on the gradient keeps the value finite at cusps and
    /// crossings. It is tied to `length`, a fixed size of the data, rather
    /// than to the model's own size, so that growing the model never makes
    /// the floor dominate.
    #[inline]
    pub fn residual_normalized(&self, p: Point2, length: f64) -> f64 {
        let q = self.pose.to_canonical(p);
        let (a, b) = (self.params.a, self.params.b_or_a());
        let g = curves::implicit_raw(self.family, a, b, q.x, q.y);
        let (gx, gy) = curves::implicit_gradient_raw(self.family, a, b, q.x, q.y);
        let floor = GRADIENT_FLOOR * length.powi(self.family.homogeneity() as i32 - 1);
        // Scale before squaring so that huge models overflow to a huge
        // residual instead of a zero one.
        let s = gx.abs().max(gy.abs()).max(floor);
        g / s / ((gx / s).powi(2) + (gy / s).powi(2) + (floor / s).powi(2)).sqrt()
    }

    /// The same model with θ reduced into the family's symmetry sector.
    /// Ellipses are additionally canonicalized to `a >= b`.
    pub fn canonicalized(mut self) -> Self {
        if self.family == CurveFamily::CircleEllipse {
            if let Some(b) = self.params.b {
                if b > self.params.a {
                    self.params = CanonicalParams::with_b(b, self.params.a);
                    self.pose.theta += std::f64::consts::FRAC_PI_2;
                }
            }
        }
        self.pose.theta = wrap_to_sector(self.pose.theta, self.family.symmetry_angle());
        self
    }
}

/// Rotates every point counter-clockwise by `theta` about the origin.
pub fn rotate_points(points: &[Point2], theta: f64) -> Vec<Point2> {
    let rot = rotation2(theta);
    points.iter().map(|p| rot * p).collect()
}

/// Implicit residual of the posed model at `p`; zero iff `p` lies on the curve.
pub fn model_residual(model: &CurveModel, p: Point2) -> Result<f64> {
    ensure_finite2(p.x, p.y)?;
    model.validate()?;
    Ok(model.residual_raw(p))
}

/// Residual of every point. The sum of squares is the fit objective E².
pub fn residual_vector(model: &CurveModel, points: &[Point2]) -> Result<Vec<f64>> {
    if points.is_empty() {
        return Err(Error::InvalidInput("residual vector of an empty point set".into()));
    }
    model.validate()?;
    points
        .iter()
        .map(|p| {
            ensure_finite2(p.x, p.y)?;
            Ok(model.residual_raw(*p))
        })
        .collect()
}
