use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "looptrack", version, about = "Track, classify, fit and predict targets flying closed planar loops")]
pub struct Cli {
    /// Seed for every random draw (default 0, or `seed` from the config file).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// JSON run configuration; command-line flags take precedence.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Directory for output files.
    #[arg(long, global = true, value_name = "DIR", default_value = ".")]
    pub output: PathBuf,
    /// Format of tabular outputs.
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a target flying a curve in a 3D plane.
    Simulate(SimulateArgs),
    /// Filter a trajectory with the extended Kalman filter.
    Track(TrackArgs),
    /// Predict the next waypoints from the latest states.
    Predict(PredictArgs),
    /// Train the curve classifier on synthetic loops.
    Train(TrainArgs),
    /// Classify the first loop of a trajectory.
    Classify(ClassifyArgs),
    /// Fit a curve family to a trajectory.
    Fit(FitArgs),
    /// Run the whole first-loop pipeline.
    Pipeline(PipelineArgs),
    /// Score a pipeline report against the simulated ground truth.
    Evaluate(EvaluateArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Curve family, e.g. circle_ellipse or lemniscate_bernoulli.
    #[arg(long)]
    pub family: Option<String>,
    #[arg(long)]
    pub a: Option<f64>,
    /// Second shape parameter (circle_ellipse and limacon only).
    #[arg(long)]
    pub b: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub theta: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub x0: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub y0: Option<f64>,
    /// Plane normal as `nx,ny,nz`.
    #[arg(long, value_parser = parse_vec3, allow_hyphen_values = true)]
    pub normal: Option<[f64; 3]>,
    /// A point on the plane (the curve origin) as `x,y,z`.
    #[arg(long, value_parser = parse_vec3, allow_hyphen_values = true)]
    pub centroid: Option<[f64; 3]>,
    /// Ground speed (m/s).
    #[arg(long)]
    pub speed: Option<f64>,
    /// Sample rate (Hz).
    #[arg(long)]
    pub rate: Option<f64>,
    #[arg(long)]
    pub loops: Option<usize>,
    /// Measurement noise per axis (m).
    #[arg(long)]
    pub noise: Option<f64>,
}

#[derive(Debug, Args)]
pub struct TrackArgs {
    /// Trajectory file (CSV `t,x,y[,z]` or JSON).
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub window: Option<usize>,
    #[arg(long)]
    pub q_std: Option<f64>,
    /// Measurement noise (m); defaults to the trajectory's recorded level.
    #[arg(long)]
    pub r_std: Option<f64>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    /// Filtered states from `track`, or a raw trajectory.
    #[arg(long)]
    pub input: PathBuf,
    /// Number of waypoints.
    #[arg(long)]
    pub steps: Option<usize>,
    /// States in the observation window.
    #[arg(long)]
    pub window: Option<usize>,
    /// Index of the latest state to use (default: the last).
    #[arg(long)]
    pub at: Option<usize>,
    /// Simulated trajectory whose ground truth scores the prediction.
    #[arg(long)]
    pub truth: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Train on this dataset CSV instead of generating one.
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// Also write the generated dataset as CSV.
    #[arg(long)]
    pub save_dataset: bool,
    #[arg(long)]
    pub n_per_class: Option<usize>,
    /// Noise as a fraction of `a`.
    #[arg(long)]
    pub noise: Option<f64>,
    /// Resampled points per loop.
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch: Option<usize>,
    /// Hidden layer sizes, e.g. `256,128`.
    #[arg(long, value_delimiter = ',')]
    pub hidden: Option<Vec<usize>>,
}

#[derive(Debug, Args)]
pub struct ClassifyArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// Trained network; without it the residual oracle is used.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Also run the residual oracle.
    #[arg(long)]
    pub oracle: bool,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// Family to fit; without it the best-scoring family is chosen.
    #[arg(long)]
    pub family: Option<String>,
    /// Skip the gradient-normalized refinement.
    #[arg(long)]
    pub no_refine: bool,
    /// Fitted-curve samples in the plot output.
    #[arg(long, default_value_t = 512)]
    pub samples: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Source {
    Raw,
    Filtered,
}

#[derive(Debug, Args)]
pub struct PipelineArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub source: Option<Source>,
    #[arg(long)]
    pub min_confidence: Option<f64>,
    #[arg(long)]
    pub track_samples: Option<usize>,
    /// Include wall-clock stage timings (not reproducible).
    #[arg(long)]
    pub timings: bool,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Simulated trajectory with its ground-truth sidecar.
    #[arg(long)]
    pub input: PathBuf,
    /// Report written by `pipeline`.
    #[arg(long)]
    pub report: PathBuf,
}

fn parse_vec3(s: &str) -> Result<[f64; 3], String> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 3 {
        return Err(format!("expected three comma-separated numbers, got `{s}`"));
    }
    let mut out = [0.0; 3];
    for (o, p) in out.iter_mut().zip(parts) {
        *o = p.trim().parse().map_err(|e| format!("`{p}`: {e}"))?;
    }
    Ok(out)
}
