//! Fixtures shared by the benchmarks.

use looptrack::pipeline::{add_noise, simulate_target, TrajectoryRecord};
use looptrack::{CanonicalParams, CurveFamily, CurveModel, PlaneFrame, Point3, Pose2};

/// One noisy lap of `family` at 1 m/s and 20 Hz on a tilted plane.
pub fn noisy_lap(family: CurveFamily, noise: f64, seed: u64) -> TrajectoryRecord {
    let params = if family.arity() == 2 { CanonicalParams::with_b(2.0, 1.0) } else { CanonicalParams::new(2.0) };
    let model = CurveModel::new(family, params, Pose2::new(0.3, 1.0, -1.0)).expect("valid model");
    let frame = PlaneFrame::from_normal(Point3::new(0.2, -0.1, 1.0), Point3::new(3.0, 4.0, 10.0)).expect("valid plane");
    let clean = simulate_target(&model, &frame, 1.0, 20.0, 1).expect("simulation");
    add_noise(&clean, noise, seed).expect("noise")
}
