//! Acceptance checks. Runs as a plain binary so that every criterion prints
//! its PASS/FAIL line; exits non-zero if any criterion fails.

use std::f64::consts::TAU;
use std::time::{Duration, Instant};

use looptrack::classifier::{generate_dataset, train, DatasetConfig, NetworkModel, TrainConfig};
use looptrack::ekf::{process_jacobian, process_model, track, FilterConfig, FilterInput, Observation};
use looptrack::fitter::{fit_family, grid_oracle, initial_guess, lm_fit, FitOptions, GridBounds};
use looptrack::geometry::angle_distance;
use looptrack::pipeline::{evaluate, run_pipeline, simulate_target, ClassificationSource, PipelineConfig};
use looptrack::plane3d::{align_to_xy, fit_plane, lift_to_3d};
use looptrack::predictor::{dead_reckoning, observe_phase, predict_from_states, predict_horizon};
use looptrack::{CanonicalParams, CurveFamily, CurveModel, PlaneFrame, Point2, Point3, Pose2};
use nalgebra::{Matrix2, Rotation3, Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn noisy(model: &CurveModel, n: usize, sigma: f64, seed: u64) -> Vec<Point2> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, sigma).unwrap();
    model
        .sample(n)
        .unwrap()
        .into_iter()
        .map(|p| p + Point2::new(noise.sample(&mut rng), noise.sample(&mut rng)))
        .collect()
}

/// (relative a, relative b, offset / scale, θ modulo symmetry).
fn param_errors(fit: &CurveModel, truth: &CurveModel) -> [f64; 4] {
    let (f, t) = (fit.canonicalized(), truth.canonicalized());
    [
        (f.params.a / t.params.a - 1.0).abs(),
        (f.params.b_or_a() / t.params.b_or_a() - 1.0).abs(),
        (f.pose.offset() - t.pose.offset()).norm() / t.params.a,
        angle_distance(f.pose.theta, t.pose.theta, t.family.symmetry_angle()),
    ]
}

fn instance(family: CurveFamily, seed: u64) -> CurveModel {
    let a = 1.0 + seed as f64 * 0.1;
    let pose = Pose2::new(0.1 + 0.3 * seed as f64, seed as f64 - 3.0, 2.0);
    CurveModel::new(family, CanonicalParams::for_family(family, a, 0.65 * a), pose).unwrap()
}

fn classifier_training(model_out: &mut Option<NetworkModel>) -> Outcome {
    let start = Instant::now();
    let data =
        generate_dataset(&DatasetConfig { n_per_class: 500, noise_std: 0.0, ..Default::default() }, 2024).unwrap();
    let cfg = TrainConfig::default();
    let model = train(&data, &cfg).unwrap();
    let elapsed = start.elapsed();
    let meta = model.training.clone().unwrap();
    *model_out = Some(model);
    outcome(
        meta.final_accuracy >= 0.95 && elapsed <= Duration::from_secs(300) && meta.optimizer == "adam",
        format!(
            "training accuracy {:.4} (adam, lr {:e}, {} epochs, {} loops) in {:.1?}",
            meta.final_accuracy,
            meta.lr,
            meta.epochs,
            data.len(),
            elapsed
        ),
    )
}

fn exact_fit() -> Outcome {
    let start = Instant::now();
    let mut worst = [0.0f64; 5];
    for family in CurveFamily::ALL {
        let truth = instance(family, 4);
        let pts = truth.sample(120).unwrap();
        let fit = lm_fit(family, &pts, &initial_guess(family, &pts).unwrap(), &FitOptions::default()).unwrap();
        let e = param_errors(&fit.model, &truth);
        for i in 0..4 {
            worst[i] = worst[i].max(e[i]);
        }
        worst[4] = worst[4].max(fit.e2_normalized);
    }
    let elapsed = start.elapsed();
    let pass = worst[0] < 1e-4
        && worst[1] < 1e-4
        && worst[2] < 1e-4
        && worst[3] < 1e-3
        && worst[4] < 1e-10
        && elapsed.as_secs_f64() <= 10.0;
    outcome(
        pass,
        format!(
            "worst a {:.1e}, b {:.1e}, offset/a {:.1e}, theta {:.1e} rad, e2 {:.1e}, in {:.2?}",
            worst[0], worst[1], worst[2], worst[3], worst[4], elapsed
        ),
    )
}

fn noisy_fit() -> Outcome {
    let mut lines = Vec::new();
    let mut pass = true;
    for family in CurveFamily::ALL {
        let mut ok = 0;
        for seed in 0..20u64 {
            let truth = instance(family, seed);
            let pts = noisy(&truth, 100, 0.02 * truth.params.a, 1000 + seed);
            let fit = fit_family(family, &pts, &FitOptions::default()).unwrap();
            if param_errors(&fit.model, &truth).iter().all(|e| *e < 0.05) {
                ok += 1;
            }
        }
        pass &= ok >= 18;
        lines.push(format!("{family} {ok}/20"));
    }
    outcome(pass, lines.join(", "))
}

fn ekf_improvement() -> Outcome {
    let (radius, speed, rate, sigma) = (5.0, 2.0, 20.0, 0.1);
    let raw = sigma * 2f64.sqrt();
    let cfg = FilterConfig::default();
    let mut wins = 0;
    let mut total = 0.0;
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, sigma).unwrap();
        let n = (16.0 * rate) as usize;
        let truth: Vec<Point2> = (0..n)
            .map(|k| {
                let phi = speed * k as f64 / rate / radius;
                Point2::new(radius * phi.cos(), radius * phi.sin())
            })
            .collect();
        let obs: Vec<Observation> = truth
            .iter()
            .enumerate()
            .map(|(k, p)| Observation {
                t: k as f64 / rate,
                pos: p + Point2::new(noise.sample(&mut rng), noise.sample(&mut rng)),
            })
            .collect();
        let out = track(&obs, &cfg).unwrap();
        let skip = cfg.window_len;
        let rmse = (out.iter().zip(&truth).skip(skip).map(|(a, b)| (a.pos - b).norm_squared()).sum::<f64>()
            / (n - skip) as f64)
            .sqrt();
        total += rmse;
        if rmse < raw {
            wins += 1;
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut worst_jac = 0.0f64;
    for _ in 0..100 {
        let u = FilterInput {
            va: rng.random_range(0.1..5.0),
            pe0: rng.random_range(-10.0..10.0),
            pn0: rng.random_range(-10.0..10.0),
            clockwise: rng.random_bool(0.5),
        };
        let r = rng.random_range(0.5..10.0);
        let phi: f64 = rng.random_range(0.0..TAU);
        let x = Vector2::new(u.pe0 + r * phi.cos(), u.pn0 + r * phi.sin());
        let h = 1e-6 * x.amax().max(1.0);
        let mut fd = Matrix2::zeros();
        for col in 0..2 {
            let (mut xp, mut xm) = (x, x);
            xp[col] += h;
            xm[col] -= h;
            fd.set_column(col, &((process_model(&xp, &u).unwrap() - process_model(&xm, &u).unwrap()) / (2.0 * h)));
        }
        worst_jac = worst_jac.max((fd - process_jacobian(&x, &u).unwrap()).amax());
    }
    outcome(
        wins >= 18 && worst_jac < 1e-5,
        format!(
            "{wins}/20 runs below raw {raw:.4} m (mean filtered {:.4} m); jacobian worst {worst_jac:.1e}",
            total / 20.0
        ),
    )
}

fn predictor() -> Outcome {
    let radius = 4.0;
    let delta = TAU / 100.0;
    let states: Vec<(f64, Point2)> = (0..12)
        .map(|k| {
            let phi = 0.3 + delta * k as f64;
            (0.1 * k as f64, Point2::new(radius * phi.cos(), radius * phi.sin()))
        })
        .collect();
    let motion = observe_phase(&states).unwrap();
    let ev_error = (motion.evolution.c - delta.cos()).abs().max((motion.evolution.s - delta.sin()).abs());
    let horizon = predict_from_states(&states, 100).unwrap();
    let closure = (horizon.waypoints[99].pos - states[11].1).norm() / radius;

    // Noisy trial: 20 samples per loop, 10-state window, 10-step horizon.
    let per_loop = 20.0;
    let step = TAU / per_loop;
    let sigma = 0.05 * radius;
    let mut wins = 0;
    let trials = 50;
    for seed in 0..trials {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, sigma).unwrap();
        let phase: f64 = rng.random_range(0.0..TAU);
        let truth = |k: usize| {
            let phi = phase + step * k as f64;
            Point2::new(radius * phi.cos(), radius * phi.sin())
        };
        let window: Vec<(f64, Point2)> = (0..10)
            .map(|k| (0.1 * k as f64, truth(k) + Point2::new(noise.sample(&mut rng), noise.sample(&mut rng))))
            .collect();
        let m = observe_phase(&window).unwrap();
        let ours = predict_horizon(m.anchor, &m.evolution, &m.last_displacement, 10, m.mean_dt).unwrap();
        let dr = dead_reckoning(m.anchor, &m.observed_last_displacement, 10, m.mean_dt).unwrap();
        let err = |h: &looptrack::predictor::PredictionHorizon| {
            h.waypoints.iter().enumerate().map(|(j, w)| (w.pos - truth(10 + j)).norm()).sum::<f64>() / 10.0
        };
        if err(&ours) < err(&dr) {
            wins += 1;
        }
    }
    let rate = wins as f64 / trials as f64;
    outcome(
        ev_error < 1e-9 && closure < 1e-6 && rate >= 0.9,
        format!("evolution error {ev_error:.1e}, loop closure {closure:.1e}·r, beats dead reckoning in {wins}/{trials} trials"),
    )
}

fn plane_alignment() -> Outcome {
    let normal = Vector3::new(0.2, -0.7, 0.6).normalize();
    let rot = Rotation3::rotation_between(&Vector3::z(), &normal).unwrap();
    let center = Point3::new(3.0, -1.0, 7.0);
    let circle: Vec<Point3> = (0..64)
        .map(|k| {
            center + rot * Vector3::new(2.5 * (TAU * k as f64 / 64.0).cos(), 2.5 * (TAU * k as f64 / 64.0).sin(), 0.0)
        })
        .collect();
    let frame = fit_plane(&circle).unwrap();
    let normal_error = (frame.normal - normal).norm().min((frame.normal + normal).norm());
    let flat = align_to_xy(&circle, &frame).unwrap();
    let mut distance_error = 0.0f64;
    for i in 0..circle.len() {
        for j in i + 1..circle.len() {
            let d3 = (circle[i] - circle[j]).norm();
            let d2 = (flat[i] - flat[j]).norm();
            distance_error = distance_error.max((d2 - d3).abs() / d3);
        }
    }
    let back = lift_to_3d(&flat, &frame).unwrap();
    let round_trip = circle.iter().zip(&back).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
    outcome(
        normal_error < 1e-9 && distance_error < 1e-9 && round_trip < 1e-9,
        format!("normal {normal_error:.1e}, distances {distance_error:.1e} rel, round trip {round_trip:.1e} m"),
    )
}

fn oracle_equivalence() -> Outcome {
    let mut ok = 0;
    let mut checks = 0;
    let mut failures = Vec::new();
    for family in CurveFamily::ALL {
        for seed in 0..5u64 {
            let truth = instance(family, seed);
            let pts = noisy(&truth, 100, 0.02 * truth.params.a, 500 + seed);
            let lm = lm_fit(family, &pts, &initial_guess(family, &pts).unwrap(), &FitOptions::default()).unwrap();
            let grid = grid_oracle(family, &pts, &GridBounds::around(&truth, 0.1, 0.1), 10).unwrap();
            checks += 1;
            if lm.e2_normalized <= grid.e2_normalized {
                ok += 1;
            } else {
                failures.push(format!("{family}#{seed}"));
            }
        }
    }
    outcome(ok == checks, format!("{ok}/{checks} lm_fit E2 <= grid E2 {}", failures.join(" ")))
}

fn end_to_end(network: &NetworkModel) -> Outcome {
    let start = Instant::now();
    let frame = PlaneFrame::from_normal(Vector3::new(0.4, 0.3, 0.85), Point3::new(-2.0, 5.0, 12.0)).unwrap();
    let mut lines = Vec::new();
    let mut pass = true;
    let mut by_network = 0;
    let mut argmax_right = 0;
    for (i, family) in CurveFamily::ALL.into_iter().enumerate() {
        let a = 2.0 + 0.25 * i as f64;
        let truth = CurveModel::new(
            family,
            CanonicalParams::for_family(family, a, 0.7 * a),
            Pose2::new(0.2 + 0.4 * i as f64, 1.0, -1.5),
        )
        .unwrap();
        let tr = simulate_target(&truth, &frame, 2.0, 20.0, 1).unwrap();
        let report = run_pipeline(&tr, Some(network), &PipelineConfig::default()).unwrap();
        let m = evaluate(&report, &tr).unwrap();
        by_network += usize::from(report.classified_by == ClassificationSource::Network);
        argmax_right += usize::from(report.class_probs.as_ref().is_some_and(|p| p.argmax() == family));
        let ok = m.family_correct && m.mean_track_distance < 1e-4 * a;
        pass &= ok;
        lines.push(format!("{family}:{}{:.0e}", if ok { "" } else { "WRONG " }, m.mean_track_distance / a));
    }
    let elapsed = start.elapsed();
    outcome(
        pass && elapsed <= Duration::from_secs(600),
        format!(
            "network argmax right {argmax_right}/9, confident {by_network}/9; track distance / a: {} in {elapsed:.1?}",
            lines.join(" ")
        ),
    )
}

fn main() {
    let start = Instant::now();
    let mut network = None;
    let mut results = vec![("1 classifier training", classifier_training(&mut network))];
    results.push(("2 exact-fit certificate", exact_fit()));
    results.push(("3 noisy-fit robustness", noisy_fit()));
    results.push(("4 EKF improvement", ekf_improvement()));
    results.push(("5 predictor", predictor()));
    results.push(("6 plane alignment", plane_alignment()));
    results.push(("7 oracle equivalence", oracle_equivalence()));
    results.push(("8 end-to-end", end_to_end(network.as_ref().unwrap())));
    let mut failed = 0;
    for (name, o) in &results {
        println!("{} criterion {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        failed += usize::from(!o.pass);
    }
    println!("acceptance: {}/{} passed in {:.1?}", results.len() - failed, results.len(), start.elapsed());
    if failed > 0 {
        std::process::exit(1);
    }
}
