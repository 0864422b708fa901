use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn looptrack(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_looptrack")).args(args).arg("--output").arg(out).output().expect("binary runs")
}

fn ok(args: &[&str], out: &Path) -> String {
    let o = looptrack(args, out);
    assert!(o.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn data_rows(path: &Path) -> Vec<Vec<String>> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split(',').map(str::to_owned).collect())
        .collect()
}

fn simulate(dir: &Path, extra: &[&str]) -> std::path::PathBuf {
    let mut args = vec!["simulate"];
    args.extend_from_slice(extra);
    ok(&args, dir);
    dir.join("trajectory.csv")
}

#[test]
fn simulate_writes_one_sample_per_tick_plus_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let path = simulate(dir.path(), &["--family", "circle_ellipse", "--a", "2", "--b", "2", "--loops", "2"]);
    let rows = data_rows(&path);
    // Two laps of circumference 4 pi at 1 m/s and 20 Hz.
    let expected = 2.0 * 4.0 * std::f64::consts::PI * 20.0;
    assert!((rows.len() as f64 - expected).abs() <= 2.0, "{} rows", rows.len());
    let truth = json(&dir.path().join("trajectory.truth.json"));
    assert_eq!(truth["ground_truth"]["model"]["family"], "circle_ellipse");
    assert_eq!(truth["meta"]["command"], "simulate");
}

#[test]
fn missing_family_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = looptrack(&["simulate", "--a", "1"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    let o = looptrack(&["simulate", "--family", "heart", "--a", "1"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    let o = looptrack(&["frobnicate"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn missing_input_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = looptrack(&["track", "--input", "does-not-exist.csv"], dir.path());
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn same_seed_gives_identical_files() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let args = ["--seed", "11", "simulate", "--family", "limacon", "--a", "1", "--b", "2", "--noise", "0.1"];
    ok(&args, a.path());
    ok(&args, b.path());
    for name in ["trajectory.csv", "trajectory.truth.json"] {
        let (x, y) = (std::fs::read(a.path().join(name)).unwrap(), std::fs::read(b.path().join(name)).unwrap());
        assert_eq!(x, y, "{name} differs");
    }
    let c = tempfile::tempdir().unwrap();
    ok(&["--seed", "12", "simulate", "--family", "limacon", "--a", "1", "--b", "2", "--noise", "0.1"], c.path());
    assert_ne!(
        std::fs::read(a.path().join("trajectory.csv")).unwrap(),
        std::fs::read(c.path().join("trajectory.csv")).unwrap()
    );
}

#[test]
fn seed_comes_from_the_config_file_when_not_given() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    std::fs::write(&cfg, r#"{"seed": 5, "simulate": {"family": "deltoid", "a": 1.0, "noise": 0.05}}"#).unwrap();
    ok(&["--config", cfg.to_str().unwrap(), "simulate"], dir.path());
    let truth = json(&dir.path().join("trajectory.truth.json"));
    assert_eq!(truth["meta"]["seed"], 5);
    assert_eq!(truth["ground_truth"]["model"]["family"], "deltoid");

    std::fs::write(&cfg, r#"{"simulat": {}}"#).unwrap();
    let o = looptrack(&["--config", cfg.to_str().unwrap(), "simulate"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn tracking_a_noisy_circle_beats_the_raw_measurements() {
    let dir = tempfile::tempdir().unwrap();
    let path =
        simulate(dir.path(), &["--family", "circle_ellipse", "--a", "2", "--b", "2", "--noise", "0.1", "--loops", "2"]);
    ok(&["track", "--input", path.to_str().unwrap()], dir.path());
    let summary = json(&dir.path().join("track_summary.json"));
    let (raw, filtered) = (summary["raw_rmse"].as_f64().unwrap(), summary["filtered_rmse"].as_f64().unwrap());
    assert!(filtered < raw, "filtered {filtered} raw {raw}");
    assert_eq!(summary["meta"]["config"]["window"], 10);
    let rows = data_rows(&dir.path().join("track.csv"));
    assert_eq!(rows[0].len(), 9);
}

#[test]
fn tracking_accepts_planar_input_without_z() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("flat.csv");
    let mut text = String::from("t,x,y\n");
    for i in 0..200 {
        let t = i as f64 * 0.05;
        text += &format!("{t},{},{}\n", 3.0 * (t / 3.0).cos(), 3.0 * (t / 3.0).sin());
    }
    std::fs::write(&path, text).unwrap();
    ok(&["track", "--input", path.to_str().unwrap(), "--window", "8"], dir.path());
    let rows = data_rows(&dir.path().join("track.csv"));
    assert_eq!(rows.len(), 200);
    assert!(rows.iter().all(|r| r[6] == "0"));
}

#[test]
fn predict_writes_waypoints_and_compares_with_truth() {
    let dir = tempfile::tempdir().unwrap();
    let path = simulate(dir.path(), &["--family", "circle_ellipse", "--a", "3", "--b", "3"]);
    let p = path.to_str().unwrap();
    ok(&["predict", "--input", p, "--truth", p, "--steps", "5", "--at", "100"], dir.path());
    let rows = data_rows(&dir.path().join("predict.csv"));
    assert_eq!(rows.len(), 5);
    let summary = json(&dir.path().join("predict_summary.json"));
    assert!(summary["mean_error"].as_f64().unwrap() < 1e-6);

    let o = looptrack(&["predict", "--input", p, "--window", "3"], dir.path());
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn fit_recovers_a_noiseless_ellipse() {
    let dir = tempfile::tempdir().unwrap();
    let path = simulate(
        dir.path(),
        &["--family", "circle_ellipse", "--a", "3", "--b", "1.5", "--theta", "0.4", "--x0", "1", "--y0", "-2"],
    );
    ok(&["fit", "--input", path.to_str().unwrap(), "--family", "circle_ellipse"], dir.path());
    let fit = json(&dir.path().join("fit.json"));
    assert!(fit["result"]["e2"].as_f64().unwrap() < 1e-12);
    assert!((fit["result"]["model"]["a"].as_f64().unwrap() - 3.0).abs() < 1e-6);
    assert!(dir.path().join("fit_curve.csv").exists());
}

#[test]
fn pipeline_and_evaluate_on_a_tilted_astroid() {
    let dir = tempfile::tempdir().unwrap();
    let path = simulate(
        dir.path(),
        &["--family", "astroid", "--a", "2", "--normal", "0.3,-0.2,1", "--centroid", "5,5,10", "--noise", "0.01"],
    );
    let p = path.to_str().unwrap();
    ok(&["pipeline", "--input", p], dir.path());
    let report = json(&dir.path().join("pipeline_report.json"));
    assert_eq!(report["report"]["family"], "astroid");
    assert!(report["report"].get("timings").is_none());

    let report_path = dir.path().join("pipeline_report.json");
    ok(&["evaluate", "--input", p, "--report", report_path.to_str().unwrap()], dir.path());
    let metrics = &json(&dir.path().join("evaluate.json"))["metrics"];
    assert_eq!(metrics["family_correct"], true);
    assert!(metrics["a_error"].as_f64().unwrap() < 0.05);
}

#[test]
fn train_and_classify_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["train", "--n-per-class", "20", "--epochs", "2", "--save-dataset"], dir.path());
    let report = json(&dir.path().join("train_report.json"));
    assert_eq!(report["optimizer"], "adam");
    assert_eq!(report["lr"], 1e-4);
    assert_eq!(report["batch_size"], 8);
    assert_eq!(report["loss_curve"].as_array().unwrap().len(), 2);

    let dataset = dir.path().join("dataset.csv");
    let retrain = tempfile::tempdir().unwrap();
    ok(&["train", "--dataset", dataset.to_str().unwrap(), "--epochs", "1"], retrain.path());

    let path = simulate(dir.path(), &["--family", "nephroid", "--a", "1"]);
    let model = dir.path().join("model.json");
    ok(&["classify", "--input", path.to_str().unwrap(), "--model", model.to_str().unwrap(), "--oracle"], dir.path());
    let rows = data_rows(&dir.path().join("classify.csv"));
    assert_eq!(rows.len(), 9);
    let total: f64 = rows.iter().map(|r| r[1].parse::<f64>().unwrap()).sum();
    assert!((total - 1.0).abs() < 1e-9);
    let best = rows.iter().min_by(|a, b| a[2].parse::<f64>().unwrap().total_cmp(&b[2].parse().unwrap())).unwrap();
    assert_eq!(best[0], "nephroid");
}

#[test]
fn json_format_round_trips_through_track() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["--format", "json", "simulate", "--family", "squircle", "--a", "2", "--noise", "0.05"], dir.path());
    let traj = dir.path().join("trajectory.json");
    ok(&["--format", "json", "track", "--input", traj.to_str().unwrap()], dir.path());
    let track = dir.path().join("track.json");
    assert!(json(&track)["rows"].as_array().unwrap().len() > 100);
    ok(&["predict", "--input", track.to_str().unwrap()], dir.path());
}
