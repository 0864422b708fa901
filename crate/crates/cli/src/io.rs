//! File formats: trajectories as CSV `t,x,y,z` with a JSON ground-truth
//! sidecar (or one JSON document), every output stamped with a metadata
//! header.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use looptrack::pipeline::{GroundTruth, TrajectoryRecord, TrajectorySample};
use looptrack::Point3;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{CliError, CliResult};

/// Provenance written into every output file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Meta {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub seed: u64,
    /// The effective configuration of the command.
    pub config: Value,
    pub inputs: Vec<String>,
}

impl Meta {
    pub fn new(command: &str, seed: u64, config: Value, inputs: &[&Path]) -> Self {
        Self {
            tool: "looptrack".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            seed,
            config,
            inputs: inputs.iter().map(|p| p.display().to_string()).collect(),
        }
    }
}

/// Motion settings of a simulated trajectory, enough to regenerate its
/// noiseless samples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimulationInfo {
    pub speed: f64,
    pub rate: f64,
    pub loops: usize,
}

/// Ground-truth sidecar of a CSV trajectory.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Sidecar {
    #[serde(default)]
    pub ground_truth: Option<GroundTruth>,
    #[serde(default)]
    pub noise_std: Option<f64>,
    #[serde(default)]
    pub simulation: Option<SimulationInfo>,
}

/// A trajectory as a single JSON document.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrajectoryFile {
    pub trajectory: TrajectoryRecord,
    #[serde(default)]
    pub simulation: Option<SimulationInfo>,
}

pub struct LoadedTrajectory {
    pub record: TrajectoryRecord,
    pub simulation: Option<SimulationInfo>,
}

pub fn sidecar_path(csv: &Path) -> PathBuf {
    csv.with_extension("truth.json")
}

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    Ok(BufWriter::new(File::create(path).map_err(|e| CliError::io(path, e))?))
}

/// Writes `body` (a JSON object) with a leading `meta` field.
pub fn write_json<T: Serialize>(path: &Path, meta: &Meta, body: &T) -> CliResult<()> {
    let mut value = serde_json::to_value(body).map_err(|e| CliError::parse(path, e))?;
    let Value::Object(map) = &mut value else {
        return Err(CliError::parse(path, "output body is not a JSON object"));
    };
    map.insert("meta".into(), serde_json::to_value(meta).map_err(|e| CliError::parse(path, e))?);
    let mut out = create(path)?;
    serde_json::to_writer_pretty(&mut out, &value).map_err(|e| CliError::parse(path, e))?;
    out.write_all(b"\n").and_then(|_| out.flush()).map_err(|e| CliError::io(path, e))
}

/// Writes a CSV table preceded by one `# {meta json}` comment line.
pub fn write_csv(path: &Path, meta: &Meta, headers: &[&str], rows: &[Vec<String>]) -> CliResult<()> {
    let mut out = create(path)?;
    let line = serde_json::to_string(meta).map_err(|e| CliError::parse(path, e))?;
    writeln!(out, "# {line}").map_err(|e| CliError::io(path, e))?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(headers).map_err(|e| CliError::parse(path, e))?;
    for row in rows {
        w.write_record(row).map_err(|e| CliError::parse(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> CliResult<T> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::parse(path, e))
}

/// A CSV file read as text cells, `#` lines skipped.
pub struct Table {
    pub path: PathBuf,
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    /// Reads a CSV table, or the `rows` array of a JSON table.
    pub fn read(path: &Path) -> CliResult<Self> {
        if is_json(path) {
            return Self::read_json_rows(path);
        }
        let file = File::open(path).map_err(|e| CliError::io(path, e))?;
        let mut reader = csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(file);
        let headers = reader.headers().map_err(|e| CliError::parse(path, e))?.iter().map(str::to_owned).collect();
        let rows = reader
            .records()
            .map(|r| r.map(|r| r.iter().map(str::to_owned).collect()).map_err(|e| CliError::parse(path, e)))
            .collect::<CliResult<Vec<Vec<String>>>>()?;
        Ok(Self { path: path.to_owned(), headers, rows })
    }

    fn read_json_rows(path: &Path) -> CliResult<Self> {
        let value: Value = read_json(path)?;
        let rows = value
            .get("rows")
            .and_then(Value::as_array)
            .ok_or_else(|| CliError::parse(path, "expected a `rows` array"))?;
        let headers: Vec<String> = match rows.first().and_then(Value::as_object) {
            Some(obj) => obj.keys().cloned().collect(),
            None => Vec::new(),
        };
        let cells = rows
            .iter()
            .map(|r| {
                headers
                    .iter()
                    .map(|h| match r.get(h) {
                        Some(Value::String(s)) => s.clone(),
                        Some(v) => v.to_string(),
                        None => String::new(),
                    })
                    .collect()
            })
            .collect();
        Ok(Self { path: path.to_owned(), headers, rows: cells })
    }

    pub fn has(&self, name: &str) -> bool {
        self.headers.iter().any(|h| h == name)
    }

    pub fn column(&self, name: &str) -> CliResult<Vec<f64>> {
        let idx = self
            .headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CliError::parse(&self.path, format!("missing column `{name}`")))?;
        self.rows
            .iter()
            .enumerate()
            .map(|(i, r)| {
                let cell = r.get(idx).map(String::as_str).unwrap_or("");
                cell.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| CliError::parse(&self.path, format!("row {}: bad `{name}` value `{cell}`", i + 1)))
            })
            .collect()
    }
}

fn is_json(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"))
}

/// Reads a trajectory from JSON, or from CSV plus its optional sidecar.
/// CSV files without a `z` column get `z = 0`.
pub fn read_trajectory(path: &Path) -> CliResult<LoadedTrajectory> {
    let loaded = if is_json(path) {
        let file: TrajectoryFile = read_json(path)?;
        LoadedTrajectory { record: file.trajectory, simulation: file.simulation }
    } else {
        let table = Table::read(path)?;
        let (t, x, y) = (table.column("t")?, table.column("x")?, table.column("y")?);
        let z = if table.has("z") { table.column("z")? } else { vec![0.0; t.len()] };
        let samples = (0..t.len()).map(|i| TrajectorySample { t: t[i], pos: Point3::new(x[i], y[i], z[i]) }).collect();
        let side = sidecar_path(path);
        let sidecar: Option<Sidecar> = if side.exists() { Some(read_json(&side)?) } else { None };
        let (ground_truth, noise_std, simulation) =
            sidecar.map_or((None, None, None), |s| (s.ground_truth, s.noise_std, s.simulation));
        LoadedTrajectory { record: TrajectoryRecord { samples, ground_truth, noise_std }, simulation }
    };
    loaded.record.validate().map_err(|e| CliError::parse(path, e))?;
    Ok(loaded)
}

pub fn fmt(v: f64) -> String {
    format!("{v}")
}
