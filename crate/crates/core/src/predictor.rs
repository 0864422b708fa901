//! Short-horizon prediction from a sequence of (filtered) positions.
//!
//! The observation phase estimates the per-step rotation of the
//! displacement vector over a window of states. The prediction phase keeps
//! rotating the last displacement through that rotation and accumulates the
//! result, so the target is extrapolated along a circular arc at constant
//! speed.

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use crate::ekf::{aligned_mean, evolution_from_displacements, EvolutionMatrix};
use crate::error::{Error, Result};
use crate::geometry::Point2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Waypoint {
    pub t: f64,
    pub pos: Point2,
}

/// Result of the observation phase.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObservedMotion {
    pub evolution: EvolutionMatrix,
    /// Displacement over one mean interval at the end of the window,
    /// averaged over every displacement in the window propagated forward
    /// through the evolution matrix.
    pub last_displacement: Vector2<f64>,
    /// The raw final displacement, rescaled to one mean interval.
    pub observed_last_displacement: Vector2<f64>,
    /// Mean speed over the window (m/s).
    pub mean_speed: f64,
    /// Mean sample interval (s).
    pub mean_dt: f64,
    /// Latest state of the window.
    pub anchor: Waypoint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionHorizon {
    pub m: usize,
    pub dt: f64,
    pub anchor: Waypoint,
    pub waypoints: Vec<Waypoint>,
}

/// Observation phase over `states` (`(t, position)`, increasing `t`).
///
/// Displacements are divided by their own interval before the
/// least-squares solve, so irregular sampling does not masquerade as speed
/// changes.
pub fn observe_phase(states: &[(f64, Point2)]) -> Result<ObservedMotion> {
    if states.len() < 4 {
        return Err(Error::Precondition(format!("observation phase needs at least 4 states, got {}", states.len())));
    }
    let mut velocities = Vec::with_capacity(states.len() - 1);
    for w in states.windows(2) {
        let dt = w[1].0 - w[0].0;
        if !(dt > 0.0) {
            return Err(Error::Precondition("state timestamps must be strictly increasing".into()));
        }
        velocities.push((w[1].1 - w[0].1) / dt);
    }
    let evolution = evolution_from_displacements(&velocities)?;
    let n = states.len();
    let mean_dt = (states[n - 1].0 - states[0].0) / (n - 1) as f64;
    let mean_speed = velocities.iter().map(|v| v.norm()).sum::<f64>() / velocities.len() as f64;

    let last_velocity = aligned_mean(&velocities, &evolution);

    Ok(ObservedMotion {
        evolution,
        last_displacement: last_velocity * mean_dt,
        observed_last_displacement: velocities[velocities.len() - 1] * mean_dt,
        mean_speed,
        mean_dt,
        anchor: Waypoint { t: states[n - 1].0, pos: states[n - 1].1 },
    })
}

/// Prediction phase: `m` waypoints spaced `dt` apart.
///
/// `d₁ = Rot(δ)·last_disp`, `d_{j+1} = Rot(δ)·d_j`, and waypoint `j` is the
/// anchor plus the running sum of the `d`s.
pub fn predict_horizon(
    anchor: Waypoint,
    ev: &EvolutionMatrix,
    last_disp: &Vector2<f64>,
    m: usize,
    dt: f64,
) -> Result<PredictionHorizon> {
    if m == 0 {
        return Err(Error::Precondition("prediction horizon must be at least one step".into()));
    }
    if !(dt > 0.0) {
        return Err(Error::Precondition(format!("step duration must be positive, got {dt}")));
    }
    if !(last_disp.norm() > 0.0) {
        return Err(Error::Precondition("last displacement must be non-zero".into()));
    }
    let mut waypoints = Vec::with_capacity(m);
    let mut d = *last_disp;
    let mut pos = anchor.pos;
    for j in 1..=m {
        d = ev.apply(&d);
        pos += d;
        waypoints.push(Waypoint { t: anchor.t + dt * j as f64, pos });
    }
    Ok(PredictionHorizon { m, dt, anchor, waypoints })
}

/// Both phases in one call: observe `states`, then predict `m` steps at the
/// mean observed interval from the latest state.
pub fn predict_from_states(states: &[(f64, Point2)], m: usize) -> Result<PredictionHorizon> {
    let motion = observe_phase(states)?;
    predict_horizon(motion.anchor, &motion.evolution, &motion.last_displacement, m, motion.mean_dt)
}

/// Straight-line constant-velocity extrapolation, the baseline the
/// rotating predictor is compared against.
pub fn dead_reckoning(anchor: Waypoint, last_disp: &Vector2<f64>, m: usize, dt: f64) -> Result<PredictionHorizon> {
    predict_horizon(anchor, &EvolutionMatrix::identity(), last_disp, m, dt)
}
