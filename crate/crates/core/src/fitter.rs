//! Levenberg-Marquardt fitting of a posed curve to planar points.
//!
//! [`lm_fit`] minimizes the sum of squared implicit residuals. Residuals are
//! divided by `L^k`, where `L` is a fixed length of the data (its RMS radius)
//! and `k` the family's homogeneity, so the objective is dimensionless but
//! its minimizer is unchanged. Dividing by a power of the model's own size
//! would instead open an escape route: every family whose curve passes
//! through the origin would flatten out as `a` grows without bound.
//!
//! Algebraic residuals weight points by the local steepness of the implicit
//! function, which biases noisy fits of curves whose gradient varies a lot
//! along the curve (the limaçon's inner loop is the worst case).
//! [`fit_family`] therefore follows the algebraic fit with a refinement
//! that divides each residual by its gradient norm, a first-order distance
//! to the curve. That refinement starts from the algebraic solution, where
//! it is well behaved even near cusps.
//!
//! Shape parameters are optimized as logarithms so they stay positive, and
//! the Jacobian is taken by central differences.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::curves::{CanonicalParams, CurveFamily};
use crate::error::{Error, Result};
use crate::geometry::{centroid2, Point2};
use crate::transform2d::{CurveModel, Pose2};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitOptions {
    pub max_iterations: usize,
    /// Stop when the largest gradient component falls below this.
    pub gradient_tolerance: f64,
    /// Stop when a step is smaller than this relative to the parameters.
    pub step_tolerance: f64,
    pub initial_damping: f64,
    pub damping_up: f64,
    pub damping_down: f64,
    /// Number of evenly spaced θ phases tried when a fit is poor.
    pub restarts: usize,
    /// RMS normalized residual above which the θ restarts are tried.
    pub restart_threshold: f64,
    /// Whether [`fit_family`] refines the algebraic fit with
    /// gradient-normalized residuals.
    pub refine: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            gradient_tolerance: 1e-12,
            step_tolerance: 1e-12,
            initial_damping: 1e-3,
            damping_up: 10.0,
            damping_down: 10.0,
            restarts: 5,
            restart_threshold: 1e-6,
            refine: true,
        }
    }
}

impl FitOptions {
    pub fn validate(&self) -> Result<()> {
        let checks = [
            ("gradient_tolerance", self.gradient_tolerance),
            ("step_tolerance", self.step_tolerance),
            ("initial_damping", self.initial_damping),
            ("restart_threshold", self.restart_threshold),
        ];
        for (name, v) in checks {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Configuration(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.damping_up > 1.0 && self.damping_down > 1.0) {
            return Err(Error::Configuration("damping factors must exceed 1".into()));
        }
        if self.max_iterations == 0 || self.restarts == 0 {
            return Err(Error::Configuration("max_iterations and restarts must be at least 1".into()));
        }
        Ok(())
    }
}

/// Residual used as the least-squares objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    /// Implicit residual over `L^k` (dimensionless).
    Algebraic,
    /// Implicit residual over its gradient norm (meters).
    Gradient,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub model: CurveModel,
    /// Sum of squared implicit residuals at the solution.
    pub e2: f64,
    pub objective: Objective,
    /// Value of `objective` at the solution.
    pub e2_normalized: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Value of `objective` after the start and every accepted step.
    pub trace: Vec<f64>,
}

impl FitResult {
    /// Root-mean-square normalized residual.
    pub fn relative_rms(&self, n_points: usize) -> f64 {
        (self.e2_normalized / n_points.max(1) as f64).sqrt()
    }
}

/// RMS distance of `points` from their centroid: the fixed length used to
/// normalize residuals.
pub fn data_length(points: &[Point2]) -> f64 {
    let c = centroid2(points);
    let n = points.len().max(1) as f64;
    let rms = (points.iter().map(|p| (p - c).norm_squared()).sum::<f64>() / n).sqrt();
    if rms > 0.0 {
        rms
    } else {
        1.0
    }
}

/// The algebraic objective minimized by [`lm_fit`] and [`grid_oracle`].
pub fn normalized_e2(model: &CurveModel, points: &[Point2]) -> f64 {
    let k = data_length(points).powi(model.family.homogeneity() as i32);
    points.iter().map(|p| (model.residual_raw(*p) / k).powi(2)).sum()
}

/// The gradient-normalized objective used by the refinement (m²).
pub fn gradient_e2(model: &CurveModel, points: &[Point2]) -> f64 {
    let length = data_length(points);
    points.iter().map(|p| model.residual_normalized(*p, length).powi(2)).sum()
}

/// Unnormalized objective `Σ g(p)²`.
pub fn raw_e2(model: &CurveModel, points: &[Point2]) -> f64 {
    points.iter().map(|p| model.residual_raw(*p).powi(2)).sum()
}

/// Starting model from moments: offset at the centroid, `a` (and `b`) at
/// the RMS distance from it, θ along the principal axis.
pub fn initial_guess(family: CurveFamily, points: &[Point2]) -> Result<CurveModel> {
    if points.len() < 8 {
        return Err(Error::Precondition(format!("initial guess needs at least 8 points, got {}", points.len())));
    }
    if points.iter().any(|p| !(p.x.is_finite() && p.y.is_finite())) {
        return Err(Error::InvalidInput("non-finite point".into()));
    }
    let c = centroid2(points);
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for p in points {
        let d = p - c;
        sxx += d.x * d.x;
        syy += d.y * d.y;
        sxy += d.x * d.y;
    }
    let n = points.len() as f64;
    let rms = ((sxx + syy) / n).sqrt();
    if !(rms > 1e-12 * (1.0 + c.norm())) {
        return Err(Error::DegenerateGeometry("all points coincide".into()));
    }
    let theta = 0.5 * (2.0 * sxy).atan2(sxx - syy);
    CurveModel::new(family, CanonicalParams::for_family(family, rms, rms), Pose2::new(theta, c.x, c.y))
}

fn pack(model: &CurveModel) -> DVector<f64> {
    let mut v = vec![model.params.a.ln()];
    if let Some(b) = model.params.b {
        v.push(b.ln());
    }
    v.extend([model.pose.theta, model.pose.x0, model.pose.y0]);
    DVector::from_vec(v)
}

fn unpack(family: CurveFamily, beta: &DVector<f64>) -> CurveModel {
    let (params, rest) = if family.arity() == 2 {
        (CanonicalParams::with_b(beta[0].exp(), beta[1].exp()), 2)
    } else {
        (CanonicalParams::new(beta[0].exp()), 1)
    };
    // Pose built directly so θ is not wrapped mid-optimization.
    let pose = Pose2 { theta: beta[rest], x0: beta[rest + 1], y0: beta[rest + 2] };
    CurveModel { family, params, pose }
}

struct Problem<'a> {
    family: CurveFamily,
    points: &'a [Point2],
    length: f64,
    objective: Objective,
}

impl Problem<'_> {
    fn residuals(&self, beta: &DVector<f64>) -> DVector<f64> {
        let model = unpack(self.family, beta);
        if self.objective == Objective::Gradient {
            return DVector::from_iterator(
                self.points.len(),
                self.points.iter().map(|p| model.residual_normalized(*p, self.length)),
            );
        }
        let k = self.length.powi(self.family.homogeneity() as i32);
        DVector::from_iterator(self.points.len(), self.points.iter().map(|p| model.residual_raw(*p) / k))
    }

    /// Central-difference Jacobian of the normalized residuals.
    fn jacobian(&self, beta: &DVector<f64>, rel_step: f64) -> DMatrix<f64> {
        let mut j = DMatrix::zeros(self.points.len(), beta.len());
        for col in 0..beta.len() {
            let h = rel_step * beta[col].abs().max(1.0);
            let mut plus = beta.clone();
            let mut minus = beta.clone();
            plus[col] += h;
            minus[col] -= h;
            let diff = (self.residuals(&plus) - self.residuals(&minus)) / (2.0 * h);
            j.set_column(col, &diff);
        }
        j
    }
}

const FD_STEP: f64 = 1e-6;
const MAX_DAMPING: f64 = 1e16;

/// One LM run from `init` without restarts.
fn lm_single(
    family: CurveFamily,
    points: &[Point2],
    init: &CurveModel,
    objective: Objective,
    opts: &FitOptions,
) -> Result<FitResult> {
    lm_run(&Problem { family, points, length: data_length(points), objective }, init, opts)
}

fn lm_run(problem: &Problem, init: &CurveModel, opts: &FitOptions) -> Result<FitResult> {
    let (family, points) = (problem.family, problem.points);
    let mut beta = pack(init);
    let mut r = problem.residuals(&beta);
    let mut e2 = r.norm_squared();
    if !e2.is_finite() {
        return Err(Error::InvalidInitialization(format!("non-finite residuals at {init:?}")));
    }
    let mut trace = vec![e2];
    let mut lambda = opts.initial_damping;
    let mut iterations = 0;
    let mut converged = false;

    'outer: while iterations < opts.max_iterations {
        if e2 <= f64::MIN_POSITIVE {
            converged = true;
            break;
        }
        iterations += 1;
        let j = problem.jacobian(&beta, FD_STEP);
        let jtj = j.transpose() * &j;
        let grad = j.transpose() * &r;
        if grad.amax() <= opts.gradient_tolerance {
            converged = true;
            break;
        }
        let diag_floor = 1e-12 * jtj.diagonal().max().max(f64::MIN_POSITIVE);
        loop {
            let mut damped = jtj.clone();
            for i in 0..beta.len() {
                damped[(i, i)] += lambda * jtj[(i, i)].max(diag_floor);
            }
            let step = match damped.clone().cholesky() {
                Some(ch) => ch.solve(&(-&grad)),
                None => match damped.lu().solve(&(-&grad)) {
                    Some(s) => s,
                    None => DVector::from_element(beta.len(), f64::NAN),
                },
            };
            let candidate = &beta + &step;
            let rc = problem.residuals(&candidate);
            let e2c = rc.norm_squared();
            let valid = step.iter().all(|s| s.is_finite()) && unpack(family, &candidate).validate().is_ok();
            if valid && e2c.is_finite() && e2c < e2 {
                let small_step = step.norm() <= opts.step_tolerance * (beta.norm() + opts.step_tolerance);
                beta = candidate;
                r = rc;
                e2 = e2c;
                trace.push(e2);
                lambda = (lambda / opts.damping_down).max(1e-15);
                if small_step {
                    converged = true;
                    break 'outer;
                }
                break;
            }
            lambda *= opts.damping_up;
            if lambda > MAX_DAMPING {
                // No decrease is possible at machine precision: a local minimum,
                // unless nothing was ever accepted.
                converged = trace.len() > 1;
                break 'outer;
            }
        }
    }

    let model = unpack(family, &beta);
    model.validate().map_err(|e| Error::NumericalFailure(format!("fit left the valid region: {e}")))?;
    let model = model.canonicalized();
    Ok(FitResult {
        e2: raw_e2(&model, points),
        objective: problem.objective,
        e2_normalized: e2,
        model,
        iterations,
        converged,
        trace,
    })
}

/// Levenberg-Marquardt fit of `family` to `points` starting from `init`.
///
/// When the run does not converge, or ends with an RMS normalized residual
/// above `opts.restart_threshold`, it is repeated from `opts.restarts`
/// θ phases spread over the family's symmetry sector, and from
/// moment-matched starts at the same phases, and the best run is returned.
pub fn lm_fit(family: CurveFamily, points: &[Point2], init: &CurveModel, opts: &FitOptions) -> Result<FitResult> {
    opts.validate()?;
    if init.family != family {
        return Err(Error::InvalidInitialization(format!("initial model is a {}, not a {family}", init.family)));
    }
    init.validate().map_err(|e| Error::InvalidInitialization(e.to_string()))?;
    let n_free = family.arity() + 3;
    if points.len() < n_free {
        return Err(Error::Precondition(format!(
            "{family} has {n_free} free parameters but only {} points were given",
            points.len()
        )));
    }
    if points.iter().any(|p| !(p.x.is_finite() && p.y.is_finite())) {
        return Err(Error::InvalidInput("non-finite point".into()));
    }

    let mut best = lm_single(family, points, init, Objective::Algebraic, opts)?;
    if best.converged && best.relative_rms(points.len()) <= opts.restart_threshold {
        return Ok(best);
    }
    let sector = family.symmetry_angle();
    let rotated = (1..opts.restarts).map(|k| {
        let mut start = *init;
        start.pose.theta += sector * k as f64 / opts.restarts as f64;
        start
    });
    let starts: Vec<CurveModel> = rotated.chain(moment_matched_starts(family, points, opts.restarts)).collect();
    for start in starts {
        let Ok(run) = lm_single(family, points, &start, Objective::Algebraic, opts) else { continue };
        let better = (run.converged && !best.converged)
            || (run.converged == best.converged && run.e2_normalized < best.e2_normalized);
        if better {
            best = run;
        }
    }
    Ok(best)
}

/// Shape ratios `b/a` tried by the moment-matched starts.
fn shape_ratios(family: CurveFamily) -> &'static [f64] {
    match family {
        CurveFamily::Limacon => &[0.5, 1.0, 1.6, 2.5],
        CurveFamily::CircleEllipse => &[0.5, 1.0],
        _ => &[1.0],
    }
}

/// Starts that match the data's centroid and RMS radius to those of the
/// canonical curve posed at each trial angle, rather than assuming the
/// curve is centered on its own origin.
fn moment_matched_starts(family: CurveFamily, points: &[Point2], phases: usize) -> Vec<CurveModel> {
    let c = centroid2(points);
    let rms = data_length(points);
    let mut starts = Vec::new();
    for &ratio in shape_ratios(family) {
        let unit = CanonicalParams::for_family(family, 1.0, ratio);
        let Ok(canon) = crate::curves::sample_parametric(family, &unit, 256) else { continue };
        let cc = centroid2(&canon);
        let scale = rms / data_length(&canon);
        let params = CanonicalParams::for_family(family, scale, scale * ratio);
        for k in 0..phases {
            let theta = family.symmetry_angle() * k as f64 / phases as f64;
            let offset = c - crate::geometry::rotation2(theta) * cc * scale;
            starts.push(CurveModel { family, params, pose: Pose2::new(theta, offset.x, offset.y) });
        }
    }
    starts
}

/// [`initial_guess`], then [`lm_fit`], then (when `opts.refine` is set) a
/// gradient-normalized refinement from the algebraic solution.
///
/// The refinement is kept only if it converges; otherwise the algebraic
/// fit is returned.
pub fn fit_family(family: CurveFamily, points: &[Point2], opts: &FitOptions) -> Result<FitResult> {
    let init = initial_guess(family, points)?;
    let algebraic = lm_fit(family, points, &init, opts)?;
    if !opts.refine {
        return Ok(algebraic);
    }
    match lm_single(family, points, &algebraic.model, Objective::Gradient, opts) {
        Ok(refined) if refined.converged => Ok(refined),
        _ => Ok(algebraic),
    }
}

/// Closed parameter box searched by [`grid_oracle`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridBounds {
    pub a: (f64, f64),
    /// Ignored for one-parameter families.
    pub b: (f64, f64),
    pub theta: (f64, f64),
    pub x0: (f64, f64),
    pub y0: (f64, f64),
}

impl GridBounds {
    /// Box of half-widths `rel·scale` in size and offset and `dtheta` in
    /// angle around `model`.
    pub fn around(model: &CurveModel, rel: f64, dtheta: f64) -> Self {
        let a = model.params.a;
        let b = model.params.b_or_a();
        let d = rel * model.params.scale();
        Self {
            a: (a * (1.0 - rel), a * (1.0 + rel)),
            b: (b * (1.0 - rel), b * (1.0 + rel)),
            theta: (model.pose.theta - dtheta, model.pose.theta + dtheta),
            x0: (model.pose.x0 - d, model.pose.x0 + d),
            y0: (model.pose.y0 - d, model.pose.y0 + d),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub model: CurveModel,
    /// Normalized objective at the grid minimizer.
    pub e2_normalized: f64,
}

/// Exhaustive minimization of the normalized objective over a regular grid
/// with `resolution` nodes per axis, end points included.
pub fn grid_oracle(
    family: CurveFamily,
    points: &[Point2],
    bounds: &GridBounds,
    resolution: usize,
) -> Result<GridResult> {
    if resolution < 10 {
        return Err(Error::Precondition(format!("grid resolution must be at least 10, got {resolution}")));
    }
    if points.is_empty() {
        return Err(Error::InvalidInput("grid search over an empty point set".into()));
    }
    let mut axes = vec![bounds.a];
    if family.arity() == 2 {
        axes.push(bounds.b);
    }
    axes.extend([bounds.theta, bounds.x0, bounds.y0]);
    for (i, (lo, hi)) in axes.iter().enumerate() {
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return Err(Error::InvalidInput(format!("empty grid bounds on axis {i}: [{lo}, {hi}]")));
        }
    }
    if !(axes[0].0 > 0.0 && (family.arity() == 1 || axes[1].0 > 0.0)) {
        return Err(Error::InvalidInput("shape parameter bounds must be positive".into()));
    }
    let node = |axis: (f64, f64), i: usize| axis.0 + (axis.1 - axis.0) * i as f64 / (resolution - 1) as f64;

    let dims = axes.len();
    let total = resolution.pow(dims as u32);
    let mut best: Option<GridResult> = None;
    let mut values = vec![0.0; dims];
    for flat in 0..total {
        let mut rem = flat;
        for (d, v) in values.iter_mut().enumerate() {
            *v = node(axes[d], rem % resolution);
            rem /= resolution;
        }
        let (params, rest) = if family.arity() == 2 {
            (CanonicalParams::with_b(values[0], values[1]), 2)
        } else {
            (CanonicalParams::new(values[0]), 1)
        };
        let model = CurveModel {
            family,
            params,
            pose: Pose2 { theta: values[rest], x0: values[rest + 1], y0: values[rest + 2] },
        };
        let e2 = normalized_e2(&model, points);
        if e2.is_finite() && best.is_none_or(|b| e2 < b.e2_normalized) {
            best = Some(GridResult { model, e2_normalized: e2 });
        }
    }
    best.ok_or_else(|| Error::NumericalFailure("objective was not finite anywhere on the grid".into()))
}
