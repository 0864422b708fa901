use std::path::{Path, PathBuf};

use looptrack::classifier::{
    classify_points, generate_dataset, residual_oracle, train, Dataset, DatasetConfig, FeatureVector, LabeledSample,
    NetworkModel, TrainConfig,
};
use looptrack::ekf::{track, FilterConfig, Observation};
use looptrack::fitter::{fit_family, FitOptions, FitResult};
use looptrack::pipeline::{
    add_noise, detect_loop, evaluate, run_pipeline, simulate_target, PipelineConfig, PipelineReport, PointSource,
    TrajectoryRecord,
};
use looptrack::plane3d::{align_to_xy, fit_plane, lift_to_3d};
use looptrack::predictor::{dead_reckoning, observe_phase, predict_horizon, PredictionHorizon};
use looptrack::{CanonicalParams, CurveFamily, CurveModel, PlaneFrame, Point2, Point3, Pose2};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::args::*;
use crate::error::{CliError, CliResult};
use crate::io::{
    fmt, read_json, read_trajectory, sidecar_path, write_csv, write_json, LoadedTrajectory, Meta, Sidecar,
    SimulationInfo, Table, TrajectoryFile,
};

/// Contents of a `--config` file. Every section is optional.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub simulate: SimulateConfig,
    pub filter: Option<FilterConfig>,
    pub predict: PredictConfig,
    pub dataset: DatasetConfig,
    pub train: TrainConfig,
    pub fit: FitOptions,
    pub pipeline: PipelineConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    pub family: Option<CurveFamily>,
    pub a: Option<f64>,
    pub b: Option<f64>,
    pub theta: f64,
    pub x0: f64,
    pub y0: f64,
    pub normal: [f64; 3],
    pub centroid: [f64; 3],
    pub speed: f64,
    pub rate: f64,
    pub loops: usize,
    pub noise: f64,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self {
            family: None,
            a: None,
            b: None,
            theta: 0.0,
            x0: 0.0,
            y0: 0.0,
            normal: [0.0, 0.0, 1.0],
            centroid: [0.0, 0.0, 0.0],
            speed: 1.0,
            rate: 20.0,
            loops: 1,
            noise: 0.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PredictConfig {
    pub steps: usize,
    pub window: usize,
}

impl Default for PredictConfig {
    fn default() -> Self {
        Self { steps: 10, window: 10 }
    }
}

pub struct Context {
    pub seed: u64,
    pub config: RunConfig,
    pub output: PathBuf,
    pub format: Format,
}

impl Context {
    pub fn new(cli: &Cli) -> CliResult<Self> {
        let config: RunConfig = match &cli.config {
            Some(path) => read_json(path).map_err(|e| match e {
                CliError::Parse { path, message } => CliError::Usage(format!("{}: {message}", path.display())),
                other => other,
            })?,
            None => RunConfig::default(),
        };
        let seed = cli.seed.or(config.seed).unwrap_or(0);
        Ok(Self { seed, config, output: cli.output.clone(), format: cli.format })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.output.join(name)
    }

    /// Writes a table as `<stem>.csv` or `<stem>.json`, returning the path.
    fn write_table(&self, stem: &str, meta: &Meta, headers: &[&str], rows: &[Vec<String>]) -> CliResult<PathBuf> {
        match self.format {
            Format::Csv => {
                let path = self.path(&format!("{stem}.csv"));
                write_csv(&path, meta, headers, rows)?;
                Ok(path)
            }
            Format::Json => {
                let path = self.path(&format!("{stem}.json"));
                let records: Vec<Value> = rows
                    .iter()
                    .map(|r| {
                        let obj: serde_json::Map<String, Value> = headers
                            .iter()
                            .zip(r)
                            .map(|(h, v)| {
                                let value = v
                                    .parse::<f64>()
                                    .ok()
                                    .and_then(|f| serde_json::Number::from_f64(f).map(Value::Number));
                                (h.to_string(), value.unwrap_or_else(|| Value::String(v.clone())))
                            })
                            .collect();
                        Value::Object(obj)
                    })
                    .collect();
                write_json(&path, meta, &json!({ "rows": records }))?;
                Ok(path)
            }
        }
    }
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("configuration serializes")
}

fn parse_family(name: &str) -> CliResult<CurveFamily> {
    name.parse().map_err(|e: looptrack::Error| CliError::Usage(e.to_string()))
}

/// Points moved into a plane: the fitted plane for 3D input, or the input's
/// own x-y coordinates when every sample has the same z.
struct Planar {
    points: Vec<Point2>,
    frame: Option<PlaneFrame>,
    z0: f64,
}

impl Planar {
    fn new(points: &[Point3]) -> CliResult<Self> {
        let z0 = points.first().map_or(0.0, |p| p.z);
        if points.iter().all(|p| p.z == z0) {
            return Ok(Self { points: points.iter().map(|p| Point2::new(p.x, p.y)).collect(), frame: None, z0 });
        }
        let frame = fit_plane(points)?;
        Ok(Self { points: align_to_xy(points, &frame)?, frame: Some(frame), z0 })
    }

    fn to_plane(&self, points: &[Point3]) -> Vec<Point2> {
        match &self.frame {
            Some(f) => points
                .iter()
                .map(|p| {
                    let q = f.rotation() * (p - f.centroid);
                    Point2::new(q.x, q.y)
                })
                .collect(),
            None => points.iter().map(|p| Point2::new(p.x, p.y)).collect(),
        }
    }

    fn lift(&self, points: &[Point2]) -> CliResult<Vec<Point3>> {
        match &self.frame {
            Some(f) => Ok(lift_to_3d(points, f)?),
            None => Ok(points.iter().map(|p| Point3::new(p.x, p.y, self.z0)).collect()),
        }
    }
}

fn xyz(p: &Point3) -> [String; 3] {
    [fmt(p.x), fmt(p.y), fmt(p.z)]
}

pub fn simulate(ctx: &Context, args: &SimulateArgs) -> CliResult<()> {
    let mut cfg = ctx.config.simulate.clone();
    if let Some(f) = &args.family {
        cfg.family = Some(parse_family(f)?);
    }
    macro_rules! set {
        ($($field:ident),*) => { $(if let Some(v) = args.$field { cfg.$field = v; })* };
    }
    set!(theta, x0, y0, normal, centroid, speed, rate, loops, noise);
    cfg.a = args.a.or(cfg.a);
    cfg.b = args.b.or(cfg.b);
    let family = cfg.family.ok_or_else(|| CliError::Usage("simulate needs --family".into()))?;
    let a = cfg.a.ok_or_else(|| CliError::Usage("simulate needs --a".into()))?;
    let params = match (family.arity(), cfg.b) {
        (2, Some(b)) => CanonicalParams::with_b(a, b),
        (2, None) => return Err(CliError::Usage(format!("{family} needs --b"))),
        (_, Some(_)) => return Err(CliError::Usage(format!("{family} takes no --b"))),
        (_, None) => CanonicalParams::new(a),
    };
    let model = CurveModel::new(family, params, Pose2::new(cfg.theta, cfg.x0, cfg.y0))
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let frame = PlaneFrame::from_normal(Point3::from(cfg.normal), Point3::from(cfg.centroid))
        .map_err(|e| CliError::Usage(e.to_string()))?;
    if !(cfg.noise.is_finite() && cfg.noise >= 0.0) {
        return Err(CliError::Usage(format!("--noise must be non-negative, got {}", cfg.noise)));
    }
    let clean = simulate_target(&model, &frame, cfg.speed, cfg.rate, cfg.loops)?;
    let record = add_noise(&clean, cfg.noise, ctx.seed)?;
    let simulation = SimulationInfo { speed: cfg.speed, rate: cfg.rate, loops: cfg.loops };
    let meta = Meta::new("simulate", ctx.seed, to_value(&cfg), &[]);

    let written = match ctx.format {
        Format::Csv => {
            let path = ctx.path("trajectory.csv");
            let rows: Vec<Vec<String>> = record
                .samples
                .iter()
                .map(|s| {
                    let [x, y, z] = xyz(&s.pos);
                    vec![fmt(s.t), x, y, z]
                })
                .collect();
            write_csv(&path, &meta, &["t", "x", "y", "z"], &rows)?;
            let sidecar = Sidecar {
                ground_truth: record.ground_truth,
                noise_std: record.noise_std,
                simulation: Some(simulation),
            };
            write_json(&sidecar_path(&path), &meta, &sidecar)?;
            path
        }
        Format::Json => {
            let path = ctx.path("trajectory.json");
            write_json(&path, &meta, &TrajectoryFile { trajectory: record.clone(), simulation: Some(simulation) })?;
            path
        }
    };
    println!("wrote {} samples of {family} to {}", record.samples.len(), written.display());
    Ok(())
}

/// Noiseless positions of a simulated trajectory, when it can be regenerated.
fn clean_positions(loaded: &LoadedTrajectory) -> CliResult<Option<Vec<Point3>>> {
    let (Some(gt), Some(sim)) = (loaded.record.ground_truth, loaded.simulation) else {
        return Ok(None);
    };
    let clean = simulate_target(&gt.model, &gt.frame, sim.speed, sim.rate, sim.loops)?;
    if clean.samples.len() != loaded.record.samples.len() {
        return Ok(None);
    }
    Ok(Some(clean.positions()))
}

fn rms_error(a: &[Point2], b: &[Point2]) -> f64 {
    (a.iter().zip(b).map(|(p, q)| (p - q).norm_squared()).sum::<f64>() / a.len().max(1) as f64).sqrt()
}

pub fn track_cmd(ctx: &Context, args: &TrackArgs) -> CliResult<()> {
    let loaded = read_trajectory(&args.input)?;
    let record = &loaded.record;
    let mut cfg = ctx.config.filter.unwrap_or(FilterConfig {
        r_std: record.noise_std.filter(|s| *s > 0.0).unwrap_or(FilterConfig::default().r_std),
        ..Default::default()
    });
    cfg.window_len = args.window.unwrap_or(cfg.window_len);
    cfg.q_std = args.q_std.unwrap_or(cfg.q_std);
    cfg.r_std = args.r_std.unwrap_or(cfg.r_std);
    cfg.validate()?;

    let positions = record.positions();
    let planar = Planar::new(&positions)?;
    let stream: Vec<Observation> =
        record.samples.iter().zip(&planar.points).map(|(s, p)| Observation { t: s.t, pos: *p }).collect();
    let out = track(&stream, &cfg)?;
    let filtered2: Vec<Point2> = out.iter().map(|tp| tp.pos).collect();
    let filtered = planar.lift(&filtered2)?;

    let rows: Vec<Vec<String>> = record
        .samples
        .iter()
        .zip(&out)
        .zip(&filtered)
        .map(|((s, tp), f)| {
            let [x, y, z] = xyz(&s.pos);
            let [fx, fy, fz] = xyz(f);
            let mode =
                serde_json::to_value(tp.mode).ok().and_then(|v| v.as_str().map(str::to_owned)).unwrap_or_default();
            vec![fmt(s.t), x, y, z, fx, fy, fz, fmt(tp.cov.trace()), mode]
        })
        .collect();
    let meta = Meta::new("track", ctx.seed, json!({ "filter": cfg, "window": cfg.window_len }), &[&args.input]);
    let path = ctx.write_table("track", &meta, &["t", "x", "y", "z", "fx", "fy", "fz", "cov_trace", "mode"], &rows)?;

    let skip = cfg.window_len.min(out.len());
    let mut summary = json!({
        "samples": out.len(),
        "window": cfg.window_len,
        "warm_up": skip,
        "gaps": out.iter().filter(|tp| tp.mode.is_gap()).count(),
    });
    if let Some(clean) = clean_positions(&loaded)? {
        let truth = planar.to_plane(&clean);
        let raw = rms_error(&planar.points[skip..], &truth[skip..]);
        let filt = rms_error(&filtered2[skip..], &truth[skip..]);
        summary["raw_rmse"] = json!(raw);
        summary["filtered_rmse"] = json!(filt);
        println!("in-plane RMSE after warm-up: raw {raw:.4} m, filtered {filt:.4} m");
    }
    write_json(&ctx.path("track_summary.json"), &meta, &summary)?;
    println!("wrote {} filtered states to {}", out.len(), path.display());
    Ok(())
}

pub fn predict(ctx: &Context, args: &PredictArgs) -> CliResult<()> {
    let mut cfg = ctx.config.predict.clone();
    cfg.steps = args.steps.unwrap_or(cfg.steps);
    cfg.window = args.window.unwrap_or(cfg.window);
    if cfg.steps == 0 {
        return Err(CliError::Usage("--steps must be at least 1".into()));
    }
    let is_trajectory = args.input.extension().is_some_and(|e| e == "json")
        && read_json::<Value>(&args.input)?.get("trajectory").is_some();
    let (times, positions) = if is_trajectory {
        let r = read_trajectory(&args.input)?.record;
        (r.samples.iter().map(|s| s.t).collect::<Vec<_>>(), r.positions())
    } else {
        let table = Table::read(&args.input)?;
        let (cx, cy, cz) = if table.has("fx") { ("fx", "fy", "fz") } else { ("x", "y", "z") };
        let (x, y) = (table.column(cx)?, table.column(cy)?);
        let z = if table.has(cz) { table.column(cz)? } else { vec![0.0; x.len()] };
        (table.column("t")?, (0..x.len()).map(|i| Point3::new(x[i], y[i], z[i])).collect())
    };
    if positions.is_empty() {
        return Err(CliError::Data("input has no states".into()));
    }
    let at = args.at.unwrap_or(positions.len() - 1);
    if at >= positions.len() {
        return Err(CliError::Data(format!("--at {at} is past the last state {}", positions.len() - 1)));
    }
    if cfg.window > at + 1 {
        return Err(looptrack::Error::Precondition(format!(
            "window of {} states needs --at >= {}",
            cfg.window,
            cfg.window - 1
        ))
        .into());
    }
    let planar = Planar::new(&positions)?;
    let states: Vec<(f64, Point2)> = (at + 1 - cfg.window..=at).map(|i| (times[i], planar.points[i])).collect();
    let motion = observe_phase(&states)?;
    let ours = predict_horizon(motion.anchor, &motion.evolution, &motion.last_displacement, cfg.steps, motion.mean_dt)?;
    let dr = dead_reckoning(motion.anchor, &motion.observed_last_displacement, cfg.steps, motion.mean_dt)?;
    let lift = |h: &PredictionHorizon| planar.lift(&h.waypoints.iter().map(|w| w.pos).collect::<Vec<_>>());
    let (ours3, dr3) = (lift(&ours)?, lift(&dr)?);

    let truth: Option<Vec<Point3>> = match &args.truth {
        Some(path) => {
            let loaded = read_trajectory(path)?;
            let clean = clean_positions(&loaded)?
                .ok_or_else(|| CliError::Data(format!("{}: no regenerable ground truth", path.display())))?;
            Some((1..=cfg.steps).filter_map(|j| clean.get(at + j).copied()).collect())
        }
        None => None,
    };
    let mut headers = vec!["step", "t", "x", "y", "z", "dr_x", "dr_y", "dr_z"];
    if truth.is_some() {
        headers.extend(["error", "dr_error"]);
    }
    let mut errors = (0.0, 0.0, 0usize);
    let rows: Vec<Vec<String>> = (0..cfg.steps)
        .map(|j| {
            let mut row = vec![(j + 1).to_string(), fmt(ours.waypoints[j].t)];
            row.extend(xyz(&ours3[j]));
            row.extend(xyz(&dr3[j]));
            if let Some(truth) = &truth {
                match truth.get(j) {
                    Some(p) => {
                        let (e, d) = ((ours3[j] - p).norm(), (dr3[j] - p).norm());
                        errors = (errors.0 + e, errors.1 + d, errors.2 + 1);
                        row.extend([fmt(e), fmt(d)]);
                    }
                    None => row.extend([String::new(), String::new()]),
                }
            }
            row
        })
        .collect();
    let inputs: Vec<&Path> = std::iter::once(args.input.as_path()).chain(args.truth.as_deref()).collect();
    let meta = Meta::new("predict", ctx.seed, json!({ "steps": cfg.steps, "window": cfg.window, "at": at }), &inputs);
    let path = ctx.write_table("predict", &meta, &headers, &rows)?;
    let mut summary = json!({
        "evolution": motion.evolution,
        "delta": motion.evolution.delta(),
        "mean_speed": motion.mean_speed,
        "mean_dt": motion.mean_dt,
        "anchor_t": motion.anchor.t,
    });
    if errors.2 > 0 {
        let n = errors.2 as f64;
        summary["mean_error"] = json!(errors.0 / n);
        summary["dead_reckoning_mean_error"] = json!(errors.1 / n);
        println!("mean error {:.4} m (dead reckoning {:.4} m)", errors.0 / n, errors.1 / n);
    }
    write_json(&ctx.path("predict_summary.json"), &meta, &summary)?;
    println!("wrote {} waypoints to {}", cfg.steps, path.display());
    Ok(())
}

fn read_dataset(path: &Path) -> CliResult<Dataset> {
    let table = Table::read(path)?;
    let features = table.headers.len().saturating_sub(1);
    if table.headers.first().map(String::as_str) != Some("label") || features < 2 || features % 2 != 0 {
        return Err(CliError::parse(path, "expected columns `label` and 2m feature columns"));
    }
    let m = features / 2;
    let samples = table
        .rows
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let bad = |msg: String| CliError::parse(path, format!("row {}: {msg}", i + 1));
            let family = row[0].parse::<CurveFamily>().map_err(|e| bad(e.to_string()))?;
            let values = row[1..]
                .iter()
                .map(|c| c.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| bad(format!("bad value `{c}`"))))
                .collect::<CliResult<Vec<f64>>>()?;
            if values.len() != 2 * m {
                return Err(bad("wrong number of features".into()));
            }
            Ok(LabeledSample { family, features: FeatureVector { values, m } })
        })
        .collect::<CliResult<Vec<_>>>()?;
    if samples.is_empty() {
        return Err(CliError::parse(path, "dataset is empty"));
    }
    Ok(Dataset { m, samples })
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    model: NetworkModel,
}

fn read_model(path: &Path) -> CliResult<NetworkModel> {
    let file: ModelFile = read_json(path)?;
    file.model.validate()?;
    Ok(file.model)
}

pub fn train_cmd(ctx: &Context, args: &TrainArgs) -> CliResult<()> {
    let mut data_cfg = ctx.config.dataset.clone();
    data_cfg.n_per_class = args.n_per_class.unwrap_or(data_cfg.n_per_class);
    data_cfg.noise_std = args.noise.unwrap_or(data_cfg.noise_std);
    data_cfg.m = args.m.unwrap_or(data_cfg.m);
    let mut cfg = ctx.config.train.clone();
    cfg.epochs = args.epochs.unwrap_or(cfg.epochs);
    cfg.lr = args.lr.unwrap_or(cfg.lr);
    cfg.batch_size = args.batch.unwrap_or(cfg.batch_size);
    if let Some(h) = &args.hidden {
        cfg.hidden = h.clone();
    }
    cfg.seed = ctx.seed;
    cfg.validate()?;

    let (data, inputs) = match &args.dataset {
        Some(path) => (read_dataset(path)?, vec![path.as_path()]),
        None => (generate_dataset(&data_cfg, ctx.seed)?, vec![]),
    };
    let dataset_config = if args.dataset.is_some() { Value::Null } else { to_value(&data_cfg) };
    let meta = Meta::new("train", ctx.seed, json!({ "dataset": dataset_config, "train": cfg }), &inputs);
    if args.save_dataset && args.dataset.is_none() {
        let mut headers = vec!["label".to_string()];
        headers.extend((0..data.m).map(|i| format!("x{i}")));
        headers.extend((0..data.m).map(|i| format!("y{i}")));
        let header_refs: Vec<&str> = headers.iter().map(String::as_str).collect();
        let rows: Vec<Vec<String>> = data
            .samples
            .iter()
            .map(|s| {
                std::iter::once(s.family.name().to_string()).chain(s.features.values.iter().map(|v| fmt(*v))).collect()
            })
            .collect();
        write_csv(&ctx.path("dataset.csv"), &meta, &header_refs, &rows)?;
    }
    let model = train(&data, &cfg)?;
    let training = model.training.clone().expect("train records metadata");
    write_json(&ctx.path("model.json"), &meta, &ModelFile { model })?;
    let report = json!({
        "optimizer": training.optimizer,
        "lr": training.lr,
        "epochs": training.epochs,
        "batch_size": training.batch_size,
        "hidden": cfg.hidden,
        "samples": training.samples,
        "loss_curve": training.loss_curve,
        "final_accuracy": training.final_accuracy,
    });
    write_json(&ctx.path("train_report.json"), &meta, &report)?;
    println!(
        "trained on {} loops: adam, lr {:e}, {} epochs, training accuracy {:.4}",
        training.samples, training.lr, training.epochs, training.final_accuracy
    );
    Ok(())
}

/// The first loop of a trajectory in its plane, or every sample when no
/// loop closes.
fn first_loop(record: &TrajectoryRecord) -> CliResult<Planar> {
    let positions = record.positions();
    let end = match detect_loop(&positions, record.noise_std.unwrap_or(0.0), None, None) {
        Ok(span) => span.end,
        Err(looptrack::Error::IncompleteLoop(_)) => positions.len(),
        Err(e) => return Err(e.into()),
    };
    Planar::new(&positions[..end])
}

pub fn classify_cmd(ctx: &Context, args: &ClassifyArgs) -> CliResult<()> {
    let record = read_trajectory(&args.input)?.record;
    let planar = first_loop(&record)?;
    let model = args.model.as_deref().map(read_model).transpose()?;
    let probs = model.as_ref().map(|m| classify_points(m, &planar.points)).transpose()?;
    let oracle =
        if args.oracle || model.is_none() { Some(residual_oracle(&planar.points, &ctx.config.fit)?) } else { None };
    let mut headers = vec!["family"];
    if probs.is_some() {
        headers.push("probability");
    }
    if oracle.is_some() {
        headers.push("oracle_rms");
    }
    let rows: Vec<Vec<String>> = CurveFamily::ALL
        .iter()
        .map(|f| {
            let mut row = vec![f.name().to_string()];
            if let Some(p) = &probs {
                row.push(fmt(p.of(*f)));
            }
            if let Some(o) = &oracle {
                row.push(fmt(o.scores[f.code()]));
            }
            row
        })
        .collect();
    let inputs: Vec<&Path> = std::iter::once(args.input.as_path()).chain(args.model.as_deref()).collect();
    let meta = Meta::new("classify", ctx.seed, json!({ "fit": ctx.config.fit, "oracle": oracle.is_some() }), &inputs);
    let path = ctx.write_table("classify", &meta, &headers, &rows)?;
    if let Some(p) = &probs {
        println!("network: {} (p = {:.4})", p.argmax(), p.confidence());
    }
    if let Some(o) = &oracle {
        println!("oracle: {} (rms {:.3e} m)", o.family, o.scores[o.family.code()]);
    }
    println!("wrote {}", path.display());
    Ok(())
}

#[derive(Serialize)]
struct FitOutput<'a> {
    family: CurveFamily,
    result: &'a FitResult,
    relative_rms: f64,
    plane: Option<PlaneFrame>,
    oracle_scores: Option<Vec<f64>>,
}

pub fn fit_cmd(ctx: &Context, args: &FitArgs) -> CliResult<()> {
    let record = read_trajectory(&args.input)?.record;
    let positions = record.positions();
    let planar = Planar::new(&positions)?;
    let mut opts = ctx.config.fit;
    if args.no_refine {
        opts.refine = false;
    }
    let (result, oracle_scores) = match &args.family {
        Some(name) => (fit_family(parse_family(name)?, &planar.points, &opts)?, None),
        None => {
            let r = residual_oracle(&planar.points, &opts)?;
            (r.fit, Some(r.scores))
        }
    };
    let inputs = [args.input.as_path()];
    let meta =
        Meta::new("fit", ctx.seed, json!({ "fit": opts, "family": args.family, "samples": args.samples }), &inputs);
    let output = FitOutput {
        family: result.model.family,
        result: &result,
        relative_rms: result.relative_rms(planar.points.len()),
        plane: planar.frame,
        oracle_scores,
    };
    write_json(&ctx.path("fit.json"), &meta, &output)?;

    let curve = planar.lift(&result.model.sample(args.samples.max(4))?)?;
    let mut rows: Vec<Vec<String>> =
        positions.iter().map(|p| std::iter::once("observed".to_string()).chain(xyz(p)).collect()).collect();
    rows.extend(curve.iter().map(|p| std::iter::once("fitted".to_string()).chain(xyz(p)).collect()));
    let path = ctx.write_table("fit_curve", &meta, &["kind", "x", "y", "z"], &rows)?;
    println!(
        "{}: a = {}, b = {:?}, pose ({}, {}, {}), e2 = {:.3e}, converged = {}",
        result.model.family,
        result.model.params.a,
        result.model.params.b,
        result.model.pose.theta,
        result.model.pose.x0,
        result.model.pose.y0,
        result.e2,
        result.converged
    );
    println!("wrote fit.json and {}", path.display());
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct ReportFile {
    report: PipelineReport,
}

pub fn pipeline_cmd(ctx: &Context, args: &PipelineArgs) -> CliResult<()> {
    let record = read_trajectory(&args.input)?.record;
    let network = args.model.as_deref().map(read_model).transpose()?;
    let mut cfg = ctx.config.pipeline.clone();
    cfg.fit = ctx.config.fit;
    if ctx.config.filter.is_some() {
        cfg.filter = ctx.config.filter;
    }
    if let Some(s) = args.source {
        cfg.source = match s {
            Source::Raw => PointSource::Raw,
            Source::Filtered => PointSource::Filtered,
        };
    }
    cfg.min_confidence = args.min_confidence.unwrap_or(cfg.min_confidence);
    cfg.track_samples = args.track_samples.unwrap_or(cfg.track_samples);
    cfg.record_timings = args.timings;
    let report = run_pipeline(&record, network.as_ref(), &cfg)?;

    let inputs: Vec<&Path> = std::iter::once(args.input.as_path()).chain(args.model.as_deref()).collect();
    let meta = Meta::new("pipeline", ctx.seed, to_value(&cfg), &inputs);
    write_json(&ctx.path("pipeline_report.json"), &meta, &ReportFile { report: report.clone() })?;

    let fit3 = lift_to_3d(&report.fit_points, &report.plane)?;
    let mut rows = Vec::new();
    for (s, f) in record.samples[..report.loop_span.end].iter().zip(&fit3) {
        rows.push(std::iter::once("observed".to_string()).chain([fmt(s.t)]).chain(xyz(&s.pos)).collect());
        rows.push(std::iter::once("fit_input".to_string()).chain([fmt(s.t)]).chain(xyz(f)).collect());
    }
    for s in &report.predicted_track {
        rows.push(std::iter::once("predicted".to_string()).chain([fmt(s.t)]).chain(xyz(&s.pos)).collect());
    }
    let path = ctx.write_table("pipeline_points", &meta, &["kind", "t", "x", "y", "z"], &rows)?;
    let by = match report.classified_by {
        looptrack::pipeline::ClassificationSource::Network => "network",
        looptrack::pipeline::ClassificationSource::Oracle => "oracle",
    };
    println!(
        "family {} ({by}), loop of {} samples, a = {}, e2 = {:.3e}",
        report.family, report.loop_span.end, report.fit.model.params.a, report.fit.e2
    );
    println!("wrote pipeline_report.json and {}", path.display());
    Ok(())
}

pub fn evaluate_cmd(ctx: &Context, args: &EvaluateArgs) -> CliResult<()> {
    let record = read_trajectory(&args.input)?.record;
    let file: ReportFile = read_json(&args.report)?;
    let metrics = evaluate(&file.report, &record)?;
    let meta = Meta::new("evaluate", ctx.seed, Value::Null, &[&args.input, &args.report]);
    write_json(&ctx.path("evaluate.json"), &meta, &json!({ "metrics": metrics }))?;
    println!(
        "family {} ({}), mean track distance {:.3e} m",
        metrics.fitted_family,
        if metrics.family_correct { "correct" } else { "wrong" },
        metrics.mean_track_distance
    );
    Ok(())
}
