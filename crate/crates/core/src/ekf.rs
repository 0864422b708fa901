//! Extended Kalman filter for first-loop position tracking.
//!
//! The state is the planar position `x = [p_e, p_n]`. The process model
//! moves the target at speed `V_a` along the circle about the current
//! instantaneous center of curvature `(p_e0, p_n0)`:
//!
//! ```text
//! F(x, u) = V_a / ρ · [-(p_n - p_n0), (p_e - p_e0)],   ρ = ‖x - center‖
//! ```
//!
//! The center comes from a sliding window of recent measurements:
//! consecutive displacements are related by a rotation through the per-step
//! turn angle `δ`, whose `(cos δ, sin δ)` pair is the least-squares solution
//! of the stacked displacement equations. When the window cannot resolve `δ`
//! from zero (its standard error is too large) the step falls back to
//! straight-line motion. Measurements observe the position directly
//! (`C = I`).
//!
//! Propagation is continuous-discrete: the state and covariance ODEs are
//! Euler-integrated over the sample interval, sub-stepped so that no step
//! exceeds `max_substep_dt` or turns through more than
//! [`MAX_SUBSTEP_ANGLE`], then a standard discrete correction is applied.

use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Point2;

/// Minimum distance between the state and the turn center (m).
pub const EPS_CENTER: f64 = 1e-6;
/// Displacements shorter than this count as stationary (m).
pub const EPS_DISPLACEMENT: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterState {
    /// Position estimate `[p_e, p_n]`.
    pub x: Vector2<f64>,
    /// Error covariance.
    pub p: Matrix2<f64>,
    /// Process-noise covariance rate (m²/s).
    pub q: Matrix2<f64>,
    /// Measurement-noise covariance (m²).
    pub r: Matrix2<f64>,
}

impl FilterState {
    /// State initialized on a measurement with `P₀ = R`.
    pub fn from_measurement(z: Point2, q_std: f64, r_std: f64) -> Self {
        let r = Matrix2::identity() * (r_std * r_std);
        Self { x: z, p: r, q: Matrix2::identity() * (q_std * q_std), r }
    }
}

/// Process-model input: speed and instantaneous center of curvature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterInput {
    pub va: f64,
    pub pe0: f64,
    pub pn0: f64,
    /// Direction of travel about the center. The model equations describe
    /// counter-clockwise motion; clockwise turns negate the velocity field.
    #[serde(default)]
    pub clockwise: bool,
}

impl FilterInput {
    pub fn new(va: f64, pe0: f64, pn0: f64) -> Self {
        Self { va, pe0, pn0, clockwise: false }
    }

    fn signed_speed(&self) -> f64 {
        if self.clockwise {
            -self.va
        } else {
            self.va
        }
    }
}

/// Least-squares estimate of the per-step rotation `(cos δ, sin δ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvolutionMatrix {
    pub c: f64,
    pub s: f64,
}

impl EvolutionMatrix {
    pub fn identity() -> Self {
        Self { c: 1.0, s: 0.0 }
    }

    pub fn from_angle(delta: f64) -> Self {
        let (s, c) = delta.sin_cos();
        Self { c, s }
    }

    /// Turn angle per step.
    pub fn delta(&self) -> f64 {
        self.s.atan2(self.c)
    }

    pub fn rotation(&self) -> Matrix2<f64> {
        Matrix2::new(self.c, -self.s, self.s, self.c)
    }

    pub fn apply(&self, d: &Vector2<f64>) -> Vector2<f64> {
        Vector2::new(self.c * d.x - self.s * d.y, self.s * d.x + self.c * d.y)
    }
}

/// A timestamped position measurement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub t: f64,
    pub pos: Point2,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterConfig {
    /// Positions in the sliding evolution window (>= 4).
    pub window_len: usize,
    /// Process-noise standard deviation, m per √s.
    pub q_std: f64,
    /// Measurement-noise standard deviation, m.
    pub r_std: f64,
    /// Turn angles below this (rad) use the straight-line fallback.
    pub eps_delta: f64,
    /// Longest Euler sub-step, s.
    pub max_substep_dt: f64,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self { window_len: 10, q_std: 0.05, r_std: 0.1, eps_delta: 1e-4, max_substep_dt: 0.05 }
    }
}

impl FilterConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window_len < 4 {
            return Err(Error::Configuration(format!("window_len must be >= 4, got {}", self.window_len)));
        }
        let positive = [
            ("q_std", self.q_std, true),
            ("r_std", self.r_std, true),
            ("eps_delta", self.eps_delta, false),
            ("max_substep_dt", self.max_substep_dt, false),
        ];
        for (name, v, allow_zero) in positive {
            if !v.is_finite() || v < 0.0 || (!allow_zero && v == 0.0) {
                return Err(Error::Configuration(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

fn displacements(window: &[Point2]) -> Vec<Vector2<f64>> {
    window.windows(2).map(|w| w[1] - w[0]).collect()
}

/// Least-squares rotation between consecutive displacements of `window`,
/// normalized to unit length.
///
/// Each pair of consecutive displacements `(d, e)` contributes the rows
/// `e = [[d_e, -d_n], [d_n, d_e]]·[c, s]ᵀ`. The normal matrix of that system
/// is `Σ‖d‖²·I`, so the solution is a ratio of summed dot and cross
/// products.
pub fn estimate_evolution(window: &[Point2]) -> Result<EvolutionMatrix> {
    if window.len() < 4 {
        return Err(Error::Precondition(format!("evolution window needs at least 4 positions, got {}", window.len())));
    }
    let d = displacements(window);
    evolution_from_displacements(&d)
}

pub(crate) fn evolution_from_displacements(d: &[Vector2<f64>]) -> Result<EvolutionMatrix> {
    evolution_fit(d).map(|f| f.0)
}

/// Least-squares evolution estimate together with the standard error of
/// its turn angle, taken from the fit residuals.
pub(crate) fn evolution_fit(d: &[Vector2<f64>]) -> Result<(EvolutionMatrix, f64)> {
    if d.iter().all(|v| v.norm() < EPS_DISPLACEMENT) {
        return Err(Error::DegenerateMotion(EPS_DISPLACEMENT));
    }
    let (mut dot, mut cross, mut norm2, mut newer2) = (0.0, 0.0, 0.0, 0.0);
    for pair in d.windows(2) {
        let (older, newer) = (pair[0], pair[1]);
        dot += older.dot(&newer);
        cross += older.x * newer.y - older.y * newer.x;
        norm2 += older.norm_squared();
        newer2 += newer.norm_squared();
    }
    if norm2 == 0.0 {
        return Err(Error::DegenerateMotion(EPS_DISPLACEMENT));
    }
    let (c, s) = (dot / norm2, cross / norm2);
    let len = c.hypot(s);
    if !(len.is_finite() && len > 0.0) {
        return Err(Error::DegenerateMotion(EPS_DISPLACEMENT));
    }
    let pairs = d.len() - 1;
    let sigma_delta = if pairs > 1 {
        let rss = (newer2 - (dot * dot + cross * cross) / norm2).max(0.0);
        (rss / (2 * pairs - 2) as f64 / norm2).sqrt() / len
    } else {
        f64::INFINITY
    };
    Ok((EvolutionMatrix { c: c / len, s: s / len }, sigma_delta))
}

/// Instantaneous center of curvature from the latest position and the
/// next displacement, predicted by rotating the last observed displacement
/// through `ev`.
///
/// Uses the exact chord relation `Δ(k+1) = (Rot(δ) - I)·(p(k) - center)`.
/// To first order in `δ` this is `center = p(k) + [-Δ_n, Δ_e]/δ`.
pub fn estimate_center(window: &[Point2], ev: &EvolutionMatrix, eps_delta: f64) -> Result<(f64, f64)> {
    if window.len() < 2 {
        return Err(Error::Precondition("center estimate needs at least 2 positions".into()));
    }
    let n = window.len();
    center_from(window[n - 1], &(window[n - 1] - window[n - 2]), ev, eps_delta)
}

/// Center of the circle through `last` whose next chord is `Rot(δ)·last_disp`.
pub(crate) fn center_from(
    last: Point2,
    last_disp: &Vector2<f64>,
    ev: &EvolutionMatrix,
    eps_delta: f64,
) -> Result<(f64, f64)> {
    let delta = ev.delta();
    if delta.abs() < eps_delta {
        return Err(Error::StraightLine(delta));
    }
    let next = ev.apply(last_disp);
    let inv = (ev.rotation() - Matrix2::identity())
        .try_inverse()
        .ok_or_else(|| Error::NumericalFailure("rotation minus identity is singular".into()))?;
    let radial = inv * next;
    Ok((last.x - radial.x, last.y - radial.y))
}

/// Mean of `velocities` after carrying each one forward to the newest step
/// through `ev`. On exact circular data every term equals the newest
/// velocity; on noisy data the sum largely telescopes, so the noise of
/// individual steps does not accumulate.
pub(crate) fn aligned_mean(velocities: &[Vector2<f64>], ev: &EvolutionMatrix) -> Vector2<f64> {
    let mut carried = Vector2::zeros();
    for v in velocities {
        carried = ev.apply(&carried) + v;
    }
    carried / velocities.len().max(1) as f64
}

/// Continuous-time process model `F(x, u)`.
pub fn process_model(x: &Vector2<f64>, u: &FilterInput) -> Result<Vector2<f64>> {
    let de = x.x - u.pe0;
    let dn = x.y - u.pn0;
    let rho = de.hypot(dn);
    if !(rho >= EPS_CENTER) {
        return Err(Error::Singularity(format!("state within {rho:.3e} m of the turn center")));
    }
    let k = u.signed_speed() / rho;
    Ok(Vector2::new(-k * dn, k * de))
}

/// Jacobian `∂F/∂x` of the process model.
pub fn process_jacobian(x: &Vector2<f64>, u: &FilterInput) -> Result<Matrix2<f64>> {
    let de = x.x - u.pe0;
    let dn = x.y - u.pn0;
    let rho2 = de * de + dn * dn;
    let rho = rho2.sqrt();
    if !(rho >= EPS_CENTER) {
        return Err(Error::Singularity(format!("state within {rho:.3e} m of the turn center")));
    }
    let k = u.signed_speed() / (rho2 * rho);
    Ok(Matrix2::new(dn * de, -de * de, dn * dn, -de * dn) * k)
}

fn symmetrize(p: &Matrix2<f64>) -> Matrix2<f64> {
    (p + p.transpose()) * 0.5
}

/// Largest turn angle (rad) covered by one Euler sub-step. Explicit Euler
/// on a circle gains a factor `sqrt(1 + θ²)` in radius per sub-step, so the
/// angle rather than the duration bounds the integration error.
pub const MAX_SUBSTEP_ANGLE: f64 = 1e-4;

/// Hard cap on sub-steps per prediction; above it the state is treated as
/// sitting on the turn center.
const MAX_SUBSTEPS: f64 = 1e5;

fn substeps(dt: f64, max_substep_dt: f64, turn_rate: f64) -> Result<(usize, f64)> {
    let by_time = if max_substep_dt > 0.0 { dt / max_substep_dt } else { 1.0 };
    let by_angle = turn_rate.abs() * dt / MAX_SUBSTEP_ANGLE;
    let n = by_time.max(by_angle).ceil().max(1.0);
    if n > MAX_SUBSTEPS {
        return Err(Error::Singularity(format!("turn rate {turn_rate:.3e} rad/s too high to integrate")));
    }
    let n = n as usize;
    Ok((n, dt / n as f64))
}

/// Propagates state and covariance through `dt` seconds of the circular
/// process model.
pub fn predict_step(fs: &FilterState, u: &FilterInput, dt: f64, max_substep_dt: f64) -> Result<FilterState> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::Precondition(format!("dt must be positive, got {dt}")));
    }
    if !(u.va > 0.0 && u.va.is_finite() && u.pe0.is_finite() && u.pn0.is_finite()) {
        return Err(Error::InvalidInput(format!("invalid filter input {u:?}")));
    }
    let rho = (fs.x - Vector2::new(u.pe0, u.pn0)).norm().max(EPS_CENTER);
    let (n, h) = substeps(dt, max_substep_dt, u.va / rho)?;
    let mut out = *fs;
    for _ in 0..n {
        let f = process_model(&out.x, u)?;
        let a = process_jacobian(&out.x, u)?;
        out.x += f * h;
        out.p = symmetrize(&(out.p + (a * out.p + out.p * a.transpose() + out.q) * h));
    }
    Ok(out)
}

/// Straight-line propagation used when the turn center is undefined.
/// `direction` must be a unit vector (or zero for a stationary target).
pub fn predict_straight(fs: &FilterState, direction: &Vector2<f64>, va: f64, dt: f64) -> Result<FilterState> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::Precondition(format!("dt must be positive, got {dt}")));
    }
    let mut out = *fs;
    out.x += direction * (va * dt);
    out.p = symmetrize(&(out.p + out.q * dt));
    Ok(out)
}

/// Discrete measurement update with `H(x) = x`, `C = I`.
pub fn correct_step(fs: &FilterState, z: &Observation) -> Result<FilterState> {
    if !(z.pos.x.is_finite() && z.pos.y.is_finite()) {
        return Err(Error::InvalidInput("non-finite measurement".into()));
    }
    let s = fs.r + fs.p;
    let det = s.determinant();
    if !(det.abs() > f64::MIN_POSITIVE * 1e10) {
        return Err(Error::NumericalFailure("innovation covariance R + P is singular".into()));
    }
    let s_inv =
        s.try_inverse().ok_or_else(|| Error::NumericalFailure("innovation covariance R + P is singular".into()))?;
    let gain = fs.p * s_inv;
    let mut out = *fs;
    out.x = fs.x + gain * (z.pos - fs.x);
    out.p = symmetrize(&((Matrix2::identity() - gain) * fs.p));
    Ok(out)
}

/// How a tracked sample was propagated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepMode {
    /// Still filling the evolution window; the estimate is the measurement.
    WarmUp,
    /// Circular process model.
    Curved,
    /// Turn angle below threshold or not resolved by the window;
    /// straight-line propagation.
    Straight,
    /// No motion detected in the window; covariance growth only.
    Stationary,
    /// The circular model was singular at the state; straight-line fallback.
    Singular,
}

impl StepMode {
    /// True when no motion model could be applied to this sample.
    pub fn is_gap(self) -> bool {
        matches!(self, StepMode::Stationary | StepMode::Singular)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackPoint {
    pub t: f64,
    pub pos: Point2,
    pub cov: Matrix2<f64>,
    pub mode: StepMode,
}

/// Window turn angles above this (rad per sample) are not trusted as a
/// circular arc and fall back to straight-line propagation.
pub const MAX_TURN_PER_STEP: f64 = std::f64::consts::FRAC_PI_4;

/// The circular model is used only when the window turn angle exceeds this
/// many standard errors; otherwise the window cannot tell the arc from a
/// straight segment and the straight-line model is used.
pub const CURVATURE_SIGNIFICANCE: f64 = 2.0;

/// Sequential filter over one observation stream.
#[derive(Debug, Clone)]
pub struct Tracker {
    cfg: FilterConfig,
    state: Option<FilterState>,
    last_t: f64,
    /// `(t, position)` history feeding the evolution window.
    window: Vec<(f64, Point2)>,
}

impl Tracker {
    pub fn new(cfg: FilterConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self { cfg, state: None, last_t: f64::NEG_INFINITY, window: Vec::with_capacity(cfg.window_len + 1) })
    }

    pub fn state(&self) -> Option<&FilterState> {
        self.state.as_ref()
    }

    fn remember(&mut self, t: f64, z: Point2) {
        self.window.push((t, z));
        if self.window.len() > self.cfg.window_len {
            self.window.remove(0);
        }
    }

    /// Feeds one observation and returns the filtered estimate for it.
    pub fn push(&mut self, z: Observation) -> Result<TrackPoint> {
        if !(z.t > self.last_t) {
            return Err(Error::Precondition(format!(
                "timestamps must be strictly increasing ({} after {})",
                z.t, self.last_t
            )));
        }
        let dt = z.t - self.last_t;
        self.last_t = z.t;

        let Some(prior) = self.state else {
            let fs = FilterState::from_measurement(z.pos, self.cfg.q_std, self.cfg.r_std);
            self.state = Some(fs);
            self.remember(z.t, z.pos);
            return Ok(TrackPoint { t: z.t, pos: z.pos, cov: fs.p, mode: StepMode::WarmUp });
        };

        if self.window.len() < self.cfg.window_len {
            let fs = FilterState { x: z.pos, p: prior.r, ..prior };
            self.state = Some(fs);
            self.remember(z.t, z.pos);
            return Ok(TrackPoint { t: z.t, pos: z.pos, cov: fs.p, mode: StepMode::WarmUp });
        }

        let (predicted, mode) = self.propagate(&prior, dt)?;
        let corrected = correct_step(&predicted, &z)?;
        self.state = Some(corrected);
        self.remember(z.t, z.pos);
        Ok(TrackPoint { t: z.t, pos: corrected.x, cov: corrected.p, mode })
    }

    /// Velocities between consecutive window entries.
    fn window_velocities(&self) -> Vec<Vector2<f64>> {
        self.window.windows(2).map(|w| (w[1].1 - w[0].1) / (w[1].0 - w[0].0)).collect()
    }

    /// Least-squares velocity of a straight constant-speed fit to the window.
    fn window_slope(&self) -> Vector2<f64> {
        let n = self.window.len() as f64;
        let t_mean = self.window.iter().map(|w| w.0).sum::<f64>() / n;
        let p_mean = self.window.iter().fold(Vector2::zeros(), |acc, w| acc + w.1) / n;
        let (mut num, mut den) = (Vector2::zeros(), 0.0);
        for (t, p) in &self.window {
            num += (p - p_mean) * (t - t_mean);
            den += (t - t_mean) * (t - t_mean);
        }
        num / den
    }

    fn propagate(&self, prior: &FilterState, dt: f64) -> Result<(FilterState, StepMode)> {
        let stationary = || Ok((predict_straight(prior, &Vector2::zeros(), 0.0, dt)?, StepMode::Stationary));
        let velocities = self.window_velocities();
        let (ev, sigma_delta) = match evolution_fit(&velocities) {
            Ok(fit) => fit,
            Err(Error::DegenerateMotion(_)) => return stationary(),
            Err(e) => return Err(e),
        };
        let delta = ev.delta();
        let implausible = delta.abs() > MAX_TURN_PER_STEP;
        let curved =
            !implausible && delta.abs() >= self.cfg.eps_delta && delta.abs() >= CURVATURE_SIGNIFICANCE * sigma_delta;
        let ev = if curved { ev } else { EvolutionMatrix::identity() };

        // Speed and heading of the newest step, smoothed over the window.
        let velocity = if curved { aligned_mean(&velocities, &ev) } else { self.window_slope() };
        let va = velocity.norm();
        if !(va * dt > EPS_DISPLACEMENT) {
            return stationary();
        }
        let heading = ev.apply(&velocity) / va;
        let straight = |mode| Ok((predict_straight(prior, &heading, va, dt)?, mode));
        if !curved {
            return straight(StepMode::Straight);
        }

        let n = self.window.len();
        let last_disp = velocity * (self.window[n - 1].0 - self.window[n - 2].0);
        let (pe0, pn0) = center_from(prior.x, &last_disp, &ev, self.cfg.eps_delta)?;
        let u = FilterInput { va, pe0, pn0, clockwise: delta < 0.0 };
        match predict_step(prior, &u, dt, self.cfg.max_substep_dt) {
            Ok(fs) => Ok((fs, StepMode::Curved)),
            Err(Error::Singularity(_)) => straight(StepMode::Singular),
            Err(e) => Err(e),
        }
    }
}

/// Filters a whole observation stream.
pub fn track(stream: &[Observation], cfg: &FilterConfig) -> Result<Vec<TrackPoint>> {
    cfg.validate()?;
    if stream.len() < cfg.window_len.max(1) {
        return Err(Error::Precondition(format!(
            "need at least {} observations, got {}",
            cfg.window_len,
            stream.len()
        )));
    }
    let mut tracker = Tracker::new(*cfg)?;
    stream.iter().map(|z| tracker.push(*z)).collect()
}
