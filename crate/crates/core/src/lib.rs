//! Estimation, classification and long-horizon prediction for a target that
//! repeatedly flies a closed planar curve in 3D.
//!
//! The building blocks, in pipeline order:
//!
//! - [`ekf`]: first-loop position filtering with a circular-arc process model
//! - [`predictor`]: short-horizon prediction by propagating the per-step
//!   rotation of the displacement vector
//! - [`plane3d`]: SVD plane fit and the rigid transform into the X-Y plane
//! - [`classifier`]: a small feed-forward network over resampled loops
//! - [`curves`] and [`transform2d`]: the nine implicit curve families and
//!   their posed residuals
//! - [`fitter`]: Levenberg-Marquardt fitting of shape and pose
//! - [`pipeline`]: simulation, loop detection and the end-to-end run

// `!(x > y)` is used on purpose so that NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod classifier;
pub mod curves;
pub mod ekf;
pub mod error;
pub mod fitter;
pub mod geometry;
pub mod pipeline;
pub mod plane3d;
pub mod predictor;
pub mod transform2d;

pub use curves::{CanonicalParams, CurveFamily};
pub use error::{Error, Result};
pub use geometry::{Point2, Point3};
pub use plane3d::PlaneFrame;
pub use transform2d::{CurveModel, Pose2};
