//! Target simulation and the end-to-end run: loop detection, plane
//! alignment, first-loop filtering, classification, curve fitting and the
//! predicted track for the following loop.

use std::time::Instant;

use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::classifier::{classify_points, residual_oracle, ClassProbabilities, NetworkModel};
use crate::curves::{point_at, ArcLengthTable};
use crate::ekf::{track, FilterConfig, Observation};
use crate::error::{Error, Result};
use crate::fitter::{fit_family, FitOptions, FitResult};
use crate::geometry::{angle_distance, centroid3, wrap_to_sector, Point2, Point3};
use crate::plane3d::{align_to_xy, fit_plane, lift_to_3d, PlaneFrame};
use crate::transform2d::CurveModel;
use crate::CurveFamily;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySample {
    pub t: f64,
    pub pos: Point3,
}

/// The curve and plane that generated a simulated trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub model: CurveModel,
    pub frame: PlaneFrame,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub samples: Vec<TrajectorySample>,
    #[serde(default)]
    pub ground_truth: Option<GroundTruth>,
    /// Per-axis measurement noise (m), when known.
    #[serde(default)]
    pub noise_std: Option<f64>,
}

impl TrajectoryRecord {
    pub fn validate(&self) -> Result<()> {
        if self.samples.is_empty() {
            return Err(Error::InvalidInput("trajectory has no samples".into()));
        }
        for s in &self.samples {
            if !(s.t.is_finite() && s.pos.iter().all(|c| c.is_finite())) {
                return Err(Error::InvalidInput(format!("non-finite sample at t = {}", s.t)));
            }
        }
        if let Some(w) = self.samples.windows(2).find(|w| w[1].t <= w[0].t) {
            return Err(Error::InvalidInput(format!("timestamps not strictly increasing at t = {}", w[1].t)));
        }
        if let Some(s) = self.noise_std {
            if !(s.is_finite() && s >= 0.0) {
                return Err(Error::InvalidInput(format!("invalid noise_std {s}")));
            }
        }
        Ok(())
    }

    pub fn positions(&self) -> Vec<Point3> {
        self.samples.iter().map(|s| s.pos).collect()
    }
}

/// Flies `loops` laps of `model` at constant ground speed, posed in 3D by
/// `frame`, sampled at `rate` Hz.
///
/// The sample count is rounded so that the last sample lands exactly back on
/// the start, which changes the speed by at most half a sample per run.
pub fn simulate_target(
    model: &CurveModel,
    frame: &PlaneFrame,
    speed: f64,
    rate: f64,
    loops: usize,
) -> Result<TrajectoryRecord> {
    model.validate().map_err(|e| Error::Configuration(e.to_string()))?;
    if !(speed.is_finite() && speed > 0.0 && rate.is_finite() && rate > 0.0 && loops >= 1) {
        return Err(Error::Configuration(format!(
            "need speed > 0, rate > 0 and loops >= 1, got {speed}, {rate}, {loops}"
        )));
    }
    if !frame.normal.iter().all(|c| c.is_finite()) || (frame.normal.norm() - 1.0).abs() > 1e-9 {
        return Err(Error::Configuration("plane frame normal must be a unit vector".into()));
    }
    let table = ArcLengthTable::new(model.family, model.params, ArcLengthTable::DEFAULT_SEGMENTS)
        .map_err(|e| Error::Configuration(e.to_string()))?;
    let total = table.length() * loops as f64;
    let steps = (total / speed * rate).round().max(1.0) as usize;
    let planar: Vec<Point2> = (0..=steps)
        .map(|k| {
            let s = total * k as f64 / steps as f64;
            // The final sample is placed at the exact start.
            let s = if k == steps { 0.0 } else { s };
            model.pose.to_world(table.point_at_arclength(s))
        })
        .collect();
    let lifted = lift_to_3d(&planar, frame).map_err(|e| Error::Configuration(e.to_string()))?;
    let samples = lifted.into_iter().enumerate().map(|(k, pos)| TrajectorySample { t: k as f64 / rate, pos }).collect();
    Ok(TrajectoryRecord {
        samples,
        ground_truth: Some(GroundTruth { model: *model, frame: *frame }),
        noise_std: Some(0.0),
    })
}

/// Adds i.i.d. Gaussian noise with standard deviation `sigma` to every axis.
pub fn add_noise(tr: &TrajectoryRecord, sigma: f64, seed: u64) -> Result<TrajectoryRecord> {
    if !(sigma.is_finite() && sigma >= 0.0) {
        return Err(Error::InvalidInput(format!("sigma must be non-negative, got {sigma}")));
    }
    let mut out = tr.clone();
    out.noise_std = Some(tr.noise_std.unwrap_or(0.0).hypot(sigma));
    if sigma == 0.0 {
        return Ok(out);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, sigma).expect("non-negative sigma");
    for s in &mut out.samples {
        s.pos += Vector3::new(noise.sample(&mut rng), noise.sample(&mut rng), noise.sample(&mut rng));
    }
    Ok(out)
}

/// A detected first loop: samples `0..end` form one lap and sample `end` is
/// the return to the start.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoopSpan {
    pub end: usize,
    pub closure_radius: f64,
    pub min_path_length: f64,
}

/// Finds the first return to the starting point.
///
/// A sample closes the loop when it lies within `closure_radius` of the first
/// sample after at least `min_path_length` of travel; the closing sample is
/// the closest one in that run of nearby samples. Defaults are
/// `max(3·noise_std, 0.02·r)` and `4·r`, with `r` the RMS radius of all
/// samples about their centroid.
pub fn detect_loop(
    points: &[Point3],
    noise_std: f64,
    closure_radius: Option<f64>,
    min_path_length: Option<f64>,
) -> Result<LoopSpan> {
    if points.len() < 3 {
        return Err(Error::IncompleteLoop(format!("only {} samples", points.len())));
    }
    let c = centroid3(points);
    let rms = (points.iter().map(|p| (p - c).norm_squared()).sum::<f64>() / points.len() as f64).sqrt();
    let closure_radius = closure_radius.unwrap_or((3.0 * noise_std).max(0.02 * rms));
    let min_path_length = min_path_length.unwrap_or(4.0 * rms);
    let start = points[0];
    let mut path = 0.0;
    let mut best: Option<(usize, f64)> = None;
    for k in 1..points.len() {
        path += (points[k] - points[k - 1]).norm();
        let d = (points[k] - start).norm();
        if path >= min_path_length && d <= closure_radius {
            if best.is_none_or(|(_, bd)| d < bd) {
                best = Some((k, d));
            }
        } else if best.is_some() {
            break;
        }
    }
    match best {
        Some((end, _)) => Ok(LoopSpan { end, closure_radius, min_path_length }),
        None => Err(Error::IncompleteLoop(format!(
            "no return within {closure_radius:.3e} m of the start after {min_path_length:.3e} m of travel"
        ))),
    }
}

/// Which positions feed classification and fitting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PointSource {
    Raw,
    Filtered,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub source: PointSource,
    /// Filter settings. When absent, defaults are used with `r_std` taken
    /// from the trajectory's recorded noise level.
    pub filter: Option<FilterConfig>,
    /// Network confidence below which the residual oracle decides.
    pub min_confidence: f64,
    pub closure_radius: Option<f64>,
    pub min_path_length: Option<f64>,
    pub fit: FitOptions,
    /// Points in the predicted lap (one more closes it).
    pub track_samples: usize,
    pub record_timings: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            source: PointSource::Filtered,
            filter: None,
            min_confidence: 0.9,
            closure_radius: None,
            min_path_length: None,
            fit: FitOptions::default(),
            track_samples: 512,
            record_timings: true,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.min_confidence) {
            return Err(Error::Configuration(format!("min_confidence must be in [0, 1], got {}", self.min_confidence)));
        }
        if self.track_samples < 8 {
            return Err(Error::Configuration("track_samples must be at least 8".into()));
        }
        for v in [self.closure_radius, self.min_path_length].into_iter().flatten() {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Configuration(format!("loop thresholds must be positive, got {v}")));
            }
        }
        if let Some(f) = &self.filter {
            f.validate()?;
        }
        self.fit.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassificationSource {
    Network,
    Oracle,
}

/// Wall-clock time per stage (ms).
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimings {
    pub plane_ms: f64,
    pub filter_ms: f64,
    pub classify_ms: f64,
    pub fit_ms: f64,
    pub predict_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub plane: PlaneFrame,
    pub loop_span: LoopSpan,
    pub source: PointSource,
    /// Network output, when a network was supplied.
    pub class_probs: Option<ClassProbabilities>,
    pub classified_by: ClassificationSource,
    /// RMS residual per family from the oracle, when it ran.
    pub oracle_scores: Option<Vec<f64>>,
    pub family: CurveFamily,
    pub fit: FitResult,
    /// First-loop samples in the plane, as measured.
    pub raw_points: Vec<Point2>,
    /// First-loop samples in the plane that were classified and fitted.
    pub fit_points: Vec<Point2>,
    /// One lap of the fitted curve from the closing sample onward, at the
    /// observed mean speed and direction.
    pub predicted_track: Vec<TrajectorySample>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timings: Option<StageTimings>,
}

fn elapsed_ms(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

/// Runs the full first-loop pipeline on `tr`.
///
/// Without a network, or when its top probability is below
/// `cfg.min_confidence`, the family is chosen by
/// [`residual_oracle`](crate::classifier::residual_oracle).
pub fn run_pipeline(
    tr: &TrajectoryRecord,
    network: Option<&NetworkModel>,
    cfg: &PipelineConfig,
) -> Result<PipelineReport> {
    cfg.validate()?;
    tr.validate()?;
    let mut timings = StageTimings::default();

    let clock = Instant::now();
    let positions = tr.positions();
    let noise = tr.noise_std.unwrap_or(0.0);
    let span = detect_loop(&positions, noise, cfg.closure_radius, cfg.min_path_length)?;
    let lap = &positions[..span.end];
    let plane = fit_plane(lap)?;
    let raw_points = align_to_xy(lap, &plane)?;
    timings.plane_ms = elapsed_ms(clock);

    let clock = Instant::now();
    let fit_points = match cfg.source {
        PointSource::Raw => raw_points.clone(),
        PointSource::Filtered => {
            let filter = cfg.filter.unwrap_or(FilterConfig {
                r_std: tr.noise_std.unwrap_or(FilterConfig::default().r_std),
                ..Default::default()
            });
            let stream: Vec<Observation> =
                tr.samples[..span.end].iter().zip(&raw_points).map(|(s, p)| Observation { t: s.t, pos: *p }).collect();
            track(&stream, &filter)?.into_iter().map(|tp| tp.pos).collect()
        }
    };
    timings.filter_ms = elapsed_ms(clock);

    let clock = Instant::now();
    let class_probs = network.map(|n| classify_points(n, &fit_points)).transpose()?;
    let confident = class_probs.as_ref().filter(|p| p.confidence() >= cfg.min_confidence);
    let (family, classified_by, oracle, oracle_scores) = match confident {
        Some(p) => (p.argmax(), ClassificationSource::Network, None, None),
        None => {
            let r = residual_oracle(&fit_points, &cfg.fit)?;
            (r.family, ClassificationSource::Oracle, Some(r.fit), Some(r.scores))
        }
    };
    timings.classify_ms = elapsed_ms(clock);

    let clock = Instant::now();
    let fit = match oracle {
        Some(fit) => fit,
        None => fit_family(family, &fit_points, &cfg.fit)?,
    };
    timings.fit_ms = elapsed_ms(clock);

    let clock = Instant::now();
    let predicted_track = predict_track(tr, &span, &plane, &raw_points, &fit.model, cfg.track_samples)?;
    timings.predict_ms = elapsed_ms(clock);

    Ok(PipelineReport {
        plane,
        loop_span: span,
        source: cfg.source,
        class_probs,
        classified_by,
        oracle_scores,
        family,
        fit,
        raw_points,
        fit_points,
        predicted_track,
        timings: cfg.record_timings.then_some(timings),
    })
}

/// Arc length on `table` of the curve point nearest to canonical `q`.
fn nearest_arclength(table: &ArcLengthTable, model: &CurveModel, q: Point2) -> f64 {
    let t = nearest_parameter(model, q);
    table.arclength_at(t)
}

/// Curve parameter of the point of `model` nearest to canonical `q`: a dense
/// scan followed by a golden-section refinement.
fn nearest_parameter(model: &CurveModel, q: Point2) -> f64 {
    const SCAN: usize = 2048;
    let tau = std::f64::consts::TAU;
    let dist = |t: f64| (point_at(model.family, &model.params, t) - q).norm_squared();
    let k = (0..SCAN)
        .min_by(|&i, &j| dist(tau * i as f64 / SCAN as f64).total_cmp(&dist(tau * j as f64 / SCAN as f64)))
        .unwrap();
    let h = tau / SCAN as f64;
    let (mut lo, mut hi) = (tau * k as f64 / SCAN as f64 - h, tau * k as f64 / SCAN as f64 + h);
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let (mut x1, mut x2) = (hi - g * (hi - lo), lo + g * (hi - lo));
    let (mut f1, mut f2) = (dist(x1), dist(x2));
    for _ in 0..80 {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - g * (hi - lo);
            f1 = dist(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + g * (hi - lo);
            f2 = dist(x2);
        }
    }
    0.5 * (lo + hi)
}

fn predict_track(
    tr: &TrajectoryRecord,
    span: &LoopSpan,
    plane: &PlaneFrame,
    raw_points: &[Point2],
    model: &CurveModel,
    n: usize,
) -> Result<Vec<TrajectorySample>> {
    let table = ArcLengthTable::new(model.family, model.params, ArcLengthTable::DEFAULT_SEGMENTS)?;
    let length = table.length();
    let close = align_to_xy(&[tr.samples[span.end].pos], plane).unwrap_or_else(|_| vec![raw_points[0]])[0];
    let prev = raw_points[raw_points.len() - 1];
    let s_close = nearest_arclength(&table, model, model.pose.to_canonical(close));
    let s_prev = nearest_arclength(&table, model, model.pose.to_canonical(prev));
    let direction = if wrap_to_sector(s_close - s_prev, length) >= 0.0 { 1.0 } else { -1.0 };

    let t0 = tr.samples[0].t;
    let t_close = tr.samples[span.end].t;
    let travelled: f64 = tr.samples[..=span.end].windows(2).map(|w| (w[1].pos - w[0].pos).norm()).sum();
    if !(travelled > 0.0 && t_close > t0) {
        return Err(Error::DegenerateGeometry("the target did not move during the first loop".into()));
    }
    let period = length / (travelled / (t_close - t0));
    let planar: Vec<Point2> = (0..=n)
        .map(|k| model.pose.to_world(table.point_at_arclength(s_close + direction * length * k as f64 / n as f64)))
        .collect();
    Ok(lift_to_3d(&planar, plane)?
        .into_iter()
        .enumerate()
        .map(|(k, pos)| TrajectorySample { t: t_close + period * k as f64 / n as f64, pos })
        .collect())
}

/// Distance from a 3D point to a planar curve posed in 3D.
pub fn distance_to_curve(model: &CurveModel, frame: &PlaneFrame, p: &Point3) -> f64 {
    let q = frame.rotation() * (p - frame.centroid);
    let c = model.pose.to_canonical(Point2::new(q.x, q.y));
    let t = nearest_parameter(model, c);
    (point_at(model.family, &model.params, t) - c).norm().hypot(q.z)
}

/// Comparison of a pipeline report against the generating curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub true_family: CurveFamily,
    pub fitted_family: CurveFamily,
    pub family_correct: bool,
    /// Relative error of `a`, when the family is correct.
    pub a_error: Option<f64>,
    /// Relative error of `b` (or `a` for one-parameter families).
    pub b_error: Option<f64>,
    /// Center error over the curve scale.
    pub offset_error: Option<f64>,
    /// Orientation error modulo the family's symmetry (rad).
    pub theta_error: Option<f64>,
    /// Mean and largest distance of the predicted track from the true curve (m).
    pub mean_track_distance: f64,
    pub max_track_distance: f64,
    /// RMS distance of the first-loop samples from the true curve (m).
    pub raw_cross_track_rms: f64,
    /// The same for the filtered samples, when filtering ran.
    pub filtered_cross_track_rms: Option<f64>,
}

/// Scores `report` against the ground truth stored in `tr`.
pub fn evaluate(report: &PipelineReport, tr: &TrajectoryRecord) -> Result<Metrics> {
    let truth = tr.ground_truth.ok_or_else(|| Error::InvalidInput("trajectory has no ground truth".into()))?;
    let true_model = truth.model.canonicalized();
    let fitted = report.fit.model;
    let family_correct = fitted.family == true_model.family;

    let (mut a_error, mut b_error, mut offset_error, mut theta_error) = (None, None, None, None);
    if family_correct {
        // Express the fitted pose in the true plane's coordinates.
        let to_truth = |p: Point2| -> Point2 {
            let world = report.plane.centroid + report.plane.rotation().transpose() * Vector3::new(p.x, p.y, 0.0);
            let q = truth.frame.rotation() * (world - truth.frame.centroid);
            Point2::new(q.x, q.y)
        };
        let center = to_truth(fitted.pose.offset());
        let axis =
            to_truth(fitted.pose.offset() + Point2::new(fitted.pose.theta.cos(), fitted.pose.theta.sin())) - center;
        let mut mapped = fitted;
        mapped.pose.x0 = center.x;
        mapped.pose.y0 = center.y;
        mapped.pose.theta = axis.y.atan2(axis.x);
        let mapped = mapped.canonicalized();
        let scale = true_model.params.scale();
        a_error = Some((mapped.params.a / true_model.params.a - 1.0).abs());
        b_error = Some((mapped.params.b_or_a() / true_model.params.b_or_a() - 1.0).abs());
        offset_error = Some((mapped.pose.offset() - true_model.pose.offset()).norm() / scale);
        theta_error = Some(if true_model.family == CurveFamily::CircleEllipse && is_circle(&true_model) {
            0.0
        } else {
            angle_distance(mapped.pose.theta, true_model.pose.theta, true_model.family.symmetry_angle())
        });
    }

    let dist = |p: &Point3| distance_to_curve(&truth.model, &truth.frame, p);
    let track: Vec<f64> = report.predicted_track.iter().map(|s| dist(&s.pos)).collect();
    let mean_track_distance = track.iter().sum::<f64>() / track.len().max(1) as f64;
    let max_track_distance = track.iter().copied().fold(0.0, f64::max);
    let rms = |pts: &[Point3]| (pts.iter().map(|p| dist(p).powi(2)).sum::<f64>() / pts.len().max(1) as f64).sqrt();
    let raw: Vec<Point3> = tr.samples[..report.loop_span.end.min(tr.samples.len())].iter().map(|s| s.pos).collect();
    let filtered_cross_track_rms = match report.source {
        PointSource::Filtered => Some(rms(&lift_to_3d(&report.fit_points, &report.plane)?)),
        PointSource::Raw => None,
    };
    Ok(Metrics {
        true_family: true_model.family,
        fitted_family: fitted.family,
        family_correct,
        a_error,
        b_error,
        offset_error,
        theta_error,
        mean_track_distance,
        max_track_distance,
        raw_cross_track_rms: rms(&raw),
        filtered_cross_track_rms,
    })
}

fn is_circle(model: &CurveModel) -> bool {
    (model.params.a - model.params.b_or_a()).abs() <= 1e-12 * model.params.a
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::{generate_dataset, train, DatasetConfig, TrainConfig};
    use crate::curves::CanonicalParams;
    use crate::transform2d::Pose2;
    use std::sync::OnceLock;

    fn tilted() -> PlaneFrame {
        PlaneFrame::from_normal(Vector3::new(0.3, -0.5, 0.8), Point3::new(4.0, -2.0, 10.0)).unwrap()
    }

    fn network() -> &'static NetworkModel {
        static NET: OnceLock<NetworkModel> = OnceLock::new();
        NET.get_or_init(|| {
            let data = generate_dataset(&DatasetConfig::default(), 21).unwrap();
            train(&data, &TrainConfig::default()).unwrap()
        })
    }

    fn lemniscate() -> CurveModel {
        CurveModel::new(CurveFamily::LemniscateBernoulli, CanonicalParams::new(3.0), Pose2::new(0.6, 1.0, -0.5))
            .unwrap()
    }

    #[test]
    fn circle_period_matches_its_circumference() {
        let r = 3.0;
        let model =
            CurveModel::new(CurveFamily::CircleEllipse, CanonicalParams::with_b(r, r), Pose2::identity()).unwrap();
        let tr = simulate_target(&model, &PlaneFrame::identity(), 1.5, 20.0, 1).unwrap();
        let period = tr.samples.last().unwrap().t;
        let expected = std::f64::consts::TAU * r / 1.5;
        assert!((period / expected - 1.0).abs() < 0.01);
        assert!(tr.samples.iter().all(|s| s.pos.z == 0.0));
    }

    #[test]
    fn two_loops_end_where_they_start() {
        let tr = simulate_target(&lemniscate(), &tilted(), 2.0, 10.0, 2).unwrap();
        let (first, last) = (tr.samples[0].pos, tr.samples.last().unwrap().pos);
        assert!((first - last).norm() < 1e-3 * 3.0);
        assert!(tr.validate().is_ok());
    }

    #[test]
    fn simulated_speed_is_constant() {
        let model = CurveModel::new(CurveFamily::Astroid, CanonicalParams::new(2.0), Pose2::identity()).unwrap();
        let tr = simulate_target(&model, &tilted(), 1.0, 50.0, 1).unwrap();
        // Chords shorten only where the path bends sharply (the cusps).
        let steps: Vec<f64> = tr.samples.windows(2).map(|w| (w[1].pos - w[0].pos).norm()).collect();
        let median = {
            let mut s = steps.clone();
            s.sort_by(f64::total_cmp);
            s[s.len() / 2]
        };
        assert!((median - 1.0 / 50.0).abs() < 1e-3 / 50.0, "{median}");
    }

    #[test]
    fn simulation_rejects_bad_settings() {
        let m = lemniscate();
        assert!(matches!(simulate_target(&m, &tilted(), 0.0, 10.0, 1), Err(Error::Configuration(_))));
        assert!(matches!(simulate_target(&m, &tilted(), 1.0, 10.0, 0), Err(Error::Configuration(_))));
        let mut bad = m;
        bad.params.a = -1.0;
        assert!(matches!(simulate_target(&bad, &tilted(), 1.0, 10.0, 1), Err(Error::Configuration(_))));
    }

    #[test]
    fn noise_statistics() {
        let model =
            CurveModel::new(CurveFamily::CircleEllipse, CanonicalParams::with_b(5.0, 5.0), Pose2::identity()).unwrap();
        let clean = simulate_target(&model, &PlaneFrame::identity(), 1.0, 320.0, 1).unwrap();
        assert!(clean.samples.len() >= 10_000);
        assert_eq!(add_noise(&clean, 0.0, 3).unwrap().samples, clean.samples);
        let noisy = add_noise(&clean, 0.1, 3).unwrap();
        assert_eq!(noisy.noise_std, Some(0.1));
        for axis in 0..3 {
            let d: Vec<f64> =
                noisy.samples.iter().zip(&clean.samples).map(|(a, b)| a.pos[axis] - b.pos[axis]).collect();
            let mean = d.iter().sum::<f64>() / d.len() as f64;
            let std = (d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (d.len() - 1) as f64).sqrt();
            assert!((0.097..=0.103).contains(&std), "axis {axis}: {std}");
        }
        assert!(noisy.samples.iter().zip(&clean.samples).all(|(a, b)| a.t == b.t));
        assert_eq!(noisy, add_noise(&clean, 0.1, 3).unwrap());
    }

    #[test]
    fn straight_segment_has_no_loop() {
        let samples = (0..100)
            .map(|k| TrajectorySample { t: k as f64 * 0.1, pos: Point3::new(k as f64 * 0.2, 1.0, 0.5) })
            .collect();
        let tr = TrajectoryRecord { samples, ground_truth: None, noise_std: None };
        assert!(matches!(run_pipeline(&tr, None, &PipelineConfig::default()), Err(Error::IncompleteLoop(_))));
    }

    #[test]
    fn record_validation() {
        let s = |t| TrajectorySample { t, pos: Point3::zeros() };
        let tr = TrajectoryRecord { samples: vec![s(0.0), s(0.0)], ground_truth: None, noise_std: None };
        assert!(tr.validate().is_err());
        assert!(TrajectoryRecord { samples: vec![], ground_truth: None, noise_std: None }.validate().is_err());
    }

    #[test]
    fn noiseless_lemniscate_end_to_end() {
        let truth = lemniscate();
        let tr = simulate_target(&truth, &tilted(), 2.0, 20.0, 2).unwrap();
        let report = run_pipeline(&tr, Some(network()), &PipelineConfig::default()).unwrap();
        assert_eq!(report.family, CurveFamily::LemniscateBernoulli);
        let m = evaluate(&report, &tr).unwrap();
        for e in [m.a_error, m.b_error, m.offset_error, m.theta_error] {
            assert!(e.unwrap() < 1e-4, "{m:?}");
        }
        assert!(m.mean_track_distance < 1e-6, "{m:?}");
        for s in &report.predicted_track {
            assert!(report.plane.signed_distance(&s.pos).abs() < 1e-6);
        }
    }

    #[test]
    fn noisy_lemniscate_end_to_end() {
        let truth = lemniscate();
        for seed in 0..5 {
            let clean = simulate_target(&truth, &tilted(), 2.0, 20.0, 1).unwrap();
            let tr = add_noise(&clean, 0.02 * 3.0, seed).unwrap();
            let report = run_pipeline(&tr, Some(network()), &PipelineConfig::default()).unwrap();
            let m = evaluate(&report, &tr).unwrap();
            assert!(m.family_correct, "seed {seed}: {m:?}");
            for e in [m.a_error, m.offset_error, m.theta_error] {
                assert!(e.unwrap() < 0.05, "seed {seed}: {m:?}");
            }
        }
    }

    #[test]
    fn oracle_decides_without_a_network() {
        let model =
            CurveModel::new(CurveFamily::Deltoid, CanonicalParams::new(1.5), Pose2::new(0.3, 0.0, 1.0)).unwrap();
        let tr = simulate_target(&model, &tilted(), 1.0, 25.0, 1).unwrap();
        let report = run_pipeline(&tr, None, &PipelineConfig::default()).unwrap();
        assert_eq!(report.classified_by, ClassificationSource::Oracle);
        assert_eq!(report.family, CurveFamily::Deltoid);
        assert!(report.oracle_scores.is_some());
    }

    #[test]
    fn rerun_on_predicted_track_is_stable() {
        let model = CurveModel::new(CurveFamily::Limacon, CanonicalParams::with_b(2.0, 1.4), Pose2::new(1.0, 2.0, 0.0))
            .unwrap();
        let tr = simulate_target(&model, &tilted(), 1.5, 20.0, 1).unwrap();
        let cfg = PipelineConfig { record_timings: false, ..Default::default() };
        let first = run_pipeline(&tr, Some(network()), &cfg).unwrap();
        let again =
            TrajectoryRecord { samples: first.predicted_track.clone(), ground_truth: None, noise_std: Some(0.0) };
        let second = run_pipeline(&again, Some(network()), &cfg).unwrap();
        assert_eq!(first.family, second.family);
        let (p, q) = (first.fit.model.params, second.fit.model.params);
        assert!((p.a / q.a - 1.0).abs() < 1e-3 && (p.b_or_a() / q.b_or_a() - 1.0).abs() < 1e-3);
        assert_eq!(first, run_pipeline(&tr, Some(network()), &cfg).unwrap());
    }

    #[test]
    fn evaluation_needs_ground_truth() {
        let tr = simulate_target(&lemniscate(), &tilted(), 2.0, 20.0, 1).unwrap();
        let report = run_pipeline(&tr, None, &PipelineConfig::default()).unwrap();
        let bare = TrajectoryRecord { ground_truth: None, ..tr.clone() };
        assert!(matches!(evaluate(&report, &bare), Err(Error::InvalidInput(_))));
        let m = evaluate(&report, &tr).unwrap();
        assert!(m.mean_track_distance < 1e-6);
    }

    #[test]
    fn wrong_family_is_flagged() {
        let tr = simulate_target(&lemniscate(), &tilted(), 2.0, 20.0, 1).unwrap();
        let mut report = run_pipeline(&tr, None, &PipelineConfig::default()).unwrap();
        report.fit = fit_family(CurveFamily::CircleEllipse, &report.fit_points, &FitOptions::default()).unwrap();
        let m = evaluate(&report, &tr).unwrap();
        assert!(!m.family_correct);
        assert!(m.a_error.is_none() && m.theta_error.is_none());
        assert!(m.mean_track_distance > 0.0);
    }
}
