//! Best-fit plane through a 3D loop and the rigid transform that carries it
//! into the X-Y plane.
//!
//! The centered points are rotated about Z by `-γ`, which turns the trace of
//! the plane on `z = 0` parallel to the X axis, then about X by `-α`, which
//! tilts the plane flat. With the normal `n` chosen so that `n₃ >= 0`:
//!
//! ```text
//! γ = atan2(n₁, -n₂)        α = acos(|n₃| / ‖n‖)
//! aligned = Rx(-α) · Rz(-γ) · (p - centroid)
//! ```

use nalgebra::{DMatrix, Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{centroid3, Point2, Point3};

/// Horizontal normal components below this are treated as zero.
const HORIZONTAL_EPS: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlaneFrame {
    /// Unit normal with non-negative z component.
    pub normal: Vector3<f64>,
    pub centroid: Point3,
    /// Rotation about Z (radians).
    pub gamma: f64,
    /// Rotation about X (radians).
    pub alpha: f64,
    /// Singular values of the centered point matrix, descending. `sigma[2]`
    /// is the out-of-plane spread.
    pub sigma: Vector3<f64>,
}

impl PlaneFrame {
    /// The X-Y plane through the origin.
    pub fn identity() -> Self {
        Self::from_normal(Vector3::z(), Point3::zeros()).expect("z axis is a valid normal")
    }

    /// Frame for a known plane, without fitted singular values.
    pub fn from_normal(normal: Vector3<f64>, centroid: Point3) -> Result<Self> {
        let norm = normal.norm();
        if !(norm.is_finite() && norm > 0.0) || !centroid.iter().all(|c| c.is_finite()) {
            return Err(Error::DegenerateGeometry(format!("invalid plane normal {normal:?}")));
        }
        let normal = canonical_sign(normal / norm);
        let (gamma, alpha) = angles_for(&normal);
        Ok(Self { normal, centroid, gamma, alpha, sigma: Vector3::zeros() })
    }

    /// World-to-plane rotation `Rx(-α)·Rz(-γ)`.
    pub fn rotation(&self) -> Matrix3<f64> {
        let (sg, cg) = self.gamma.sin_cos();
        let (sa, ca) = self.alpha.sin_cos();
        let rz = Matrix3::new(cg, sg, 0.0, -sg, cg, 0.0, 0.0, 0.0, 1.0);
        let rx = Matrix3::new(1.0, 0.0, 0.0, 0.0, ca, sa, 0.0, -sa, ca);
        rx * rz
    }

    /// Signed distance of `p` from the plane.
    pub fn signed_distance(&self, p: &Point3) -> f64 {
        self.normal.dot(&(p - self.centroid))
    }

    fn validate(&self) -> Result<()> {
        let ok = (self.normal.norm() - 1.0).abs() < 1e-9
            && self.centroid.iter().all(|c| c.is_finite())
            && self.gamma.is_finite()
            && self.alpha.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidInput("invalid plane frame".into()))
        }
    }
}

fn canonical_sign(n: Vector3<f64>) -> Vector3<f64> {
    let flip = if n.z != 0.0 {
        n.z < 0.0
    } else if n.y != 0.0 {
        n.y < 0.0
    } else {
        n.x < 0.0
    };
    if flip {
        -n
    } else {
        n
    }
}

fn angles_for(n: &Vector3<f64>) -> (f64, f64) {
    if n.x.hypot(n.y) < HORIZONTAL_EPS {
        return (0.0, 0.0);
    }
    let gamma = n.x.atan2(-n.y);
    let alpha = (n.z.abs() / n.norm()).clamp(-1.0, 1.0).acos();
    (gamma, alpha)
}

/// Fits a plane through `points` by SVD of the centered coordinates.
pub fn fit_plane(points: &[Point3]) -> Result<PlaneFrame> {
    if points.len() < 3 {
        return Err(Error::DegenerateGeometry(format!("need at least 3 points, got {}", points.len())));
    }
    if points.iter().any(|p| !p.iter().all(|c| c.is_finite())) {
        return Err(Error::InvalidInput("non-finite point".into()));
    }
    let centroid = centroid3(points);
    let a = DMatrix::from_fn(points.len(), 3, |i, j| points[i][j] - centroid[j]);
    let svd = a.svd(false, true);
    let v_t = svd.v_t.ok_or_else(|| Error::NumericalFailure("SVD did not return right singular vectors".into()))?;

    let mut order = [0usize, 1, 2];
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    let sigma =
        Vector3::new(svd.singular_values[order[0]], svd.singular_values[order[1]], svd.singular_values[order[2]]);
    if sigma[0] <= 0.0 || sigma[1] <= 1e-12 * sigma[0] {
        return Err(Error::DegenerateGeometry(format!(
            "points are coincident or collinear (singular values {:.3e}, {:.3e}, {:.3e})",
            sigma[0], sigma[1], sigma[2]
        )));
    }

    let row = v_t.row(order[2]);
    let mut frame = PlaneFrame::from_normal(Vector3::new(row[0], row[1], row[2]), centroid)?;
    frame.sigma = sigma;
    Ok(frame)
}

/// Rigidly moves `points` into the frame's X-Y plane and drops z.
pub fn align_to_xy(points: &[Point3], frame: &PlaneFrame) -> Result<Vec<Point2>> {
    frame.validate()?;
    let rot = frame.rotation();
    let limit = 10.0 * frame.sigma[2] + 1e-6;
    let mut out = Vec::with_capacity(points.len());
    let mut max_z = 0.0f64;
    for p in points {
        let q = rot * (p - frame.centroid);
        max_z = max_z.max(q.z.abs());
        out.push(Point2::new(q.x, q.y));
    }
    if !(max_z <= limit) {
        return Err(Error::AlignmentFailure { max_z, limit });
    }
    Ok(out)
}

/// Inverse of [`align_to_xy`]: places planar points back on the fitted plane.
pub fn lift_to_3d(points: &[Point2], frame: &PlaneFrame) -> Result<Vec<Point3>> {
    frame.validate()?;
    let inv = frame.rotation().transpose();
    Ok(points.iter().map(|p| frame.centroid + inv * Vector3::new(p.x, p.y, 0.0)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Rotation3;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};
    use std::f64::consts::TAU;

    /// Circle of `radius` about `center` spanned by two orthonormal axes.
    fn circle_in_plane(center: Point3, u: Vector3<f64>, v: Vector3<f64>, radius: f64, n: usize) -> Vec<Point3> {
        (0..n)
            .map(|k| {
                let t = TAU * k as f64 / n as f64;
                center + u * (radius * t.cos()) + v * (radius * t.sin())
            })
            .collect()
    }

    #[test]
    fn horizontal_plane() {
        let pts: Vec<Point3> =
            (0..20).map(|k| Point3::new((k as f64 * 0.7).cos() * 3.0, (k as f64 * 1.3).sin(), 5.0)).collect();
        let frame = fit_plane(&pts).unwrap();
        assert!((frame.normal - Vector3::z()).norm() < 1e-12);
        assert!(frame.sigma[2] < 1e-12);
        assert_eq!((frame.gamma, frame.alpha), (0.0, 0.0));
    }

    #[test]
    fn tilted_circle_normal() {
        // plane x + y + z = 1, in-plane axes built by hand
        let n = Vector3::new(1.0, 1.0, 1.0) / 3f64.sqrt();
        let u = Vector3::new(1.0, -1.0, 0.0) / 2f64.sqrt();
        let v = n.cross(&u);
        let center = Point3::new(1.0, 1.0, 1.0) / 3.0;
        let pts = circle_in_plane(center, u, v, 1.0, 50);
        let frame = fit_plane(&pts).unwrap();
        assert!((frame.normal - n).norm() < 1e-9);
        assert!((frame.centroid - center).norm() < 1e-12);
        assert!(frame.sigma[2] <= 1e-10 * frame.sigma[0]);
        let r = frame.rotation();
        assert!((r.transpose() * r - Matrix3::identity()).amax() < 1e-10);
        assert!((r * frame.normal - Vector3::z()).norm() < 1e-12);
    }

    #[test]
    fn noisy_plane_planarity_score() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let noise = Normal::new(0.0, 0.01).unwrap();
        let u = Vector3::new(0.6, 0.8, 0.0);
        let v = Vector3::new(0.0, 0.0, 1.0).cross(&u).normalize();
        let v = (v + Vector3::z()).normalize();
        let pts: Vec<Point3> = circle_in_plane(Point3::new(2.0, -1.0, 4.0), u, v, 2.0, 200)
            .into_iter()
            .map(|p| p + Vector3::new(noise.sample(&mut rng), noise.sample(&mut rng), noise.sample(&mut rng)))
            .collect();
        let frame = fit_plane(&pts).unwrap();
        assert!(frame.sigma[2] / frame.sigma[1] < 0.05);
    }

    #[test]
    fn degenerate_inputs() {
        let same = vec![Point3::new(1.0, 2.0, 3.0); 10];
        assert!(matches!(fit_plane(&same), Err(Error::DegenerateGeometry(_))));
        let line: Vec<Point3> = (0..10).map(|k| Point3::new(k as f64, 2.0 * k as f64, 0.5)).collect();
        assert!(matches!(fit_plane(&line), Err(Error::DegenerateGeometry(_))));
        assert!(matches!(fit_plane(&same[..2]), Err(Error::DegenerateGeometry(_))));
    }

    #[test]
    fn align_flat_points_is_centering() {
        let pts: Vec<Point3> = (0..12).map(|k| Point3::new(k as f64 * 0.5, (k as f64).sin() * 2.0, 0.0)).collect();
        let frame = fit_plane(&pts).unwrap();
        let flat = align_to_xy(&pts, &frame).unwrap();
        for (p, q) in pts.iter().zip(&flat) {
            assert!((p.x - frame.centroid.x - q.x).abs() < 1e-12);
            assert!((p.y - frame.centroid.y - q.y).abs() < 1e-12);
        }
    }

    #[test]
    fn tilted_unit_circle_aligns_to_unit_circle() {
        // plane x + z = 0
        let u = Vector3::new(1.0, 0.0, -1.0) / 2f64.sqrt();
        let v = Vector3::y();
        let pts = circle_in_plane(Point3::zeros(), u, v, 1.0, 64);
        let frame = fit_plane(&pts).unwrap();
        let flat = align_to_xy(&pts, &frame).unwrap();
        for q in &flat {
            assert!((q.norm() - 1.0).abs() < 1e-9);
        }
        let back = lift_to_3d(&flat, &frame).unwrap();
        for (p, b) in pts.iter().zip(&back) {
            assert!((p - b).norm() < 1e-9);
        }
    }

    #[test]
    fn lift_origin_to_centroid() {
        let frame = PlaneFrame::from_normal(Vector3::z(), Point3::new(1.0, 2.0, 3.0)).unwrap();
        let p = lift_to_3d(&[Point2::zeros()], &frame).unwrap();
        assert_eq!(p[0], Point3::new(1.0, 2.0, 3.0));
        let flat = [Point2::new(0.5, -0.25), Point2::new(3.0, 1.0)];
        let back = align_to_xy(&lift_to_3d(&flat, &frame).unwrap(), &frame).unwrap();
        for (a, b) in flat.iter().zip(&back) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn alignment_failure_on_mismatched_frame() {
        let frame = PlaneFrame::identity();
        let pts = [Point3::new(0.0, 0.0, 1.0), Point3::new(1.0, 0.0, 0.0)];
        assert!(matches!(align_to_xy(&pts, &frame), Err(Error::AlignmentFailure { .. })));
    }

    #[test]
    fn vertical_plane() {
        // normal along x: the plane contains the z axis
        let pts = circle_in_plane(Point3::new(3.0, 0.0, 0.0), Vector3::y(), Vector3::z(), 2.0, 40);
        let frame = fit_plane(&pts).unwrap();
        assert!((frame.normal.x.abs() - 1.0).abs() < 1e-12);
        let flat = align_to_xy(&pts, &frame).unwrap();
        for q in &flat {
            assert!((q.norm() - 2.0).abs() < 1e-9);
        }
    }

    #[test]
    fn rigid_motion_invariance_and_distance_preservation() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let noise = Normal::new(0.0, 0.3).unwrap();
        let u = Vector3::new(0.3, 0.4, 0.5).normalize();
        let v = u.cross(&Vector3::new(-0.2, 0.9, 0.1)).normalize();
        let pts: Vec<Point3> = (0..40)
            .map(|k| {
                let t = TAU * k as f64 / 40.0;
                let r = 2.0 + noise.sample(&mut rng);
                u * (r * t.cos()) + v * (1.5 * r * t.sin()) + Vector3::new(1.0, 2.0, 3.0)
            })
            .collect();
        let frame = fit_plane(&pts).unwrap();
        let flat = align_to_xy(&pts, &frame).unwrap();
        for i in 0..pts.len() {
            for j in (i + 1)..pts.len() {
                let d3 = (pts[i] - pts[j]).norm();
                let d2 = (flat[i] - flat[j]).norm();
                assert!((d3 - d2).abs() <= 1e-9 * d3);
            }
        }

        let q = Rotation3::from_euler_angles(0.7, -1.1, 2.3);
        let shift = Vector3::new(-4.0, 0.5, 9.0);
        let moved: Vec<Point3> = pts.iter().map(|p| q * p + shift).collect();
        let frame2 = fit_plane(&moved).unwrap();
        let expected = q * frame.normal;
        assert!((frame2.normal - expected).norm() < 1e-9 || (frame2.normal + expected).norm() < 1e-9);
        assert!((frame2.sigma - frame.sigma).amax() < 1e-9);
    }

    #[test]
    fn json_shape() {
        let v = serde_json::to_value(PlaneFrame::identity()).unwrap();
        assert_eq!(v["normal"].as_array().unwrap().len(), 3);
        assert_eq!(v["centroid"].as_array().unwrap().len(), 3);
        assert_eq!(v["sigma"].as_array().unwrap().len(), 3);
        assert!(v["gamma"].is_number() && v["alpha"].is_number());
    }
}
