//! Point types shared by every module, plus a few small planar helpers.

use nalgebra::{Matrix2, Vector2, Vector3};

/// A position in a plane (meters).
pub type Point2 = Vector2<f64>;
/// A position in the inertial frame (meters).
pub type Point3 = Vector3<f64>;

/// Counter-clockwise rotation matrix.
pub fn rotation2(theta: f64) -> Matrix2<f64> {
    let (s, c) = theta.sin_cos();
    Matrix2::new(c, -s, s, c)
}

/// Wraps an angle into `[-pi, pi)`.
pub fn wrap_angle(theta: f64) -> f64 {
    wrap_to_sector(theta, std::f64::consts::TAU)
}

/// Wraps an angle into `[-period/2, period/2)`.
pub fn wrap_to_sector(theta: f64, period: f64) -> f64 {
    let half = 0.5 * period;
    let w = (theta + half).rem_euclid(period) - half;
    // rem_euclid can round up to exactly `period`
    if w >= half {
        w - period
    } else {
        w
    }
}

/// Smallest absolute difference between two angles modulo `period`.
pub fn angle_distance(a: f64, b: f64, period: f64) -> f64 {
    wrap_to_sector(a - b, period).abs()
}

pub fn centroid2(points: &[Point2]) -> Point2 {
    let n = points.len().max(1) as f64;
    points.iter().fold(Point2::zeros(), |acc, p| acc + p) / n
}

pub fn centroid3(points: &[Point3]) -> Point3 {
    let n = points.len().max(1) as f64;
    points.iter().fold(Point3::zeros(), |acc, p| acc + p) / n
}

/// Total length of the open polyline through `points`.
pub fn path_length2(points: &[Point2]) -> f64 {
    points.windows(2).map(|w| (w[1] - w[0]).norm()).sum()
}

/// Distance from `p` to the segment `[a, b]`.
pub fn point_segment_distance3(p: &Point3, a: &Point3, b: &Point3) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_squared();
    if len2 == 0.0 {
        return (p - a).norm();
    }
    let t = ((p - a).dot(&ab) / len2).clamp(0.0, 1.0);
    (p - (a + ab * t)).norm()
}

/// Distance from `p` to the closed polyline through `ring`.
pub fn point_ring_distance3(p: &Point3, ring: &[Point3]) -> f64 {
    let n = ring.len();
    (0..n).map(|i| point_segment_distance3(p, &ring[i], &ring[(i + 1) % n])).fold(f64::INFINITY, f64::min)
}
