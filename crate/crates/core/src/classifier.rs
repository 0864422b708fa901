//! Curve-family classification of a single loop.
//!
//! A loop is resampled to a fixed number of points, centered, scaled to unit
//! RMS radius and rolled to start at its rightmost point. The flattened
//! `[x.., y..]` vector feeds a ReLU network with a softmax output over the
//! nine families, trained with Adam on synthetic loops.
//!
//! [`residual_oracle`] is a non-learned alternative that fits every family
//! and keeps the one with the smallest geometric residual.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::curves::{ArcLengthTable, CanonicalParams, CurveFamily};
use crate::error::{Error, Result};
use crate::fitter::{fit_family, gradient_e2, FitOptions, FitResult};
use crate::geometry::{centroid2, Point2};
use crate::transform2d::{CurveModel, Pose2};

/// Default number of resampled points per loop.
pub const DEFAULT_RESAMPLE: usize = 64;
/// Fewest input points accepted by [`preprocess`].
pub const MIN_POINTS: usize = 8;
/// Version tag written into saved models.
pub const MODEL_FORMAT_VERSION: u32 = 1;

const N_CLASSES: usize = 9;

/// A normalized loop, `[x_0..x_{m-1}, y_0..y_{m-1}]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    pub m: usize,
}

impl FeatureVector {
    pub fn point(&self, i: usize) -> Point2 {
        Point2::new(self.values[i], self.values[self.m + i])
    }

    pub fn points(&self) -> Vec<Point2> {
        (0..self.m).map(|i| self.point(i)).collect()
    }
}

/// Resamples one loop to `m` points and removes position, scale and start
/// point.
///
/// The loop is first rolled to start at its point of largest x (ties go to
/// the larger y), then sampled at `m` evenly spaced fractional indices of the
/// closed sequence with linear interpolation, so a cyclic relabeling of the
/// input gives the same result.
pub fn preprocess(points: &[Point2], m: usize) -> Result<FeatureVector> {
    if points.len() < MIN_POINTS {
        return Err(Error::InvalidInput(format!("need at least {MIN_POINTS} points, got {}", points.len())));
    }
    if m < MIN_POINTS {
        return Err(Error::InvalidInput(format!("resample count must be at least {MIN_POINTS}, got {m}")));
    }
    for p in points {
        crate::error::ensure_finite2(p.x, p.y)?;
    }
    let n = points.len();
    let start = rightmost(points);
    let resampled: Vec<Point2> = (0..m)
        .map(|j| {
            let u = j as f64 * n as f64 / m as f64;
            let k = u.floor() as usize;
            let frac = u - k as f64;
            let p0 = points[(start + k) % n];
            let p1 = points[(start + k + 1) % n];
            p0 + (p1 - p0) * frac
        })
        .collect();
    let c = centroid2(&resampled);
    let rms = (resampled.iter().map(|p| (p - c).norm_squared()).sum::<f64>() / m as f64).sqrt();
    if !(rms > 1e-12 * (1.0 + c.norm())) {
        return Err(Error::DegenerateGeometry("loop points are coincident".into()));
    }
    let mut values = vec![0.0; 2 * m];
    for (i, p) in resampled.iter().enumerate() {
        values[i] = (p.x - c.x) / rms;
        values[m + i] = (p.y - c.y) / rms;
    }
    Ok(FeatureVector { values, m })
}

fn rightmost(points: &[Point2]) -> usize {
    let mut best = 0;
    for (i, p) in points.iter().enumerate().skip(1) {
        let q = points[best];
        if p.x > q.x || (p.x == q.x && p.y > q.y) {
            best = i;
        }
    }
    best
}

/// One labeled training loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledSample {
    pub family: CurveFamily,
    pub features: FeatureVector,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub m: usize,
    pub samples: Vec<LabeledSample>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// Settings for synthetic loop generation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetConfig {
    pub n_per_class: usize,
    /// Noise standard deviation as a fraction of `a`.
    pub noise_std: f64,
    pub m: usize,
    /// Range of both shape parameters (m).
    pub param_range: (f64, f64),
    /// Range of both offset coordinates (m).
    pub offset_range: (f64, f64),
    /// Range of the number of raw points per loop.
    pub points_range: (usize, usize),
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            n_per_class: 500,
            noise_std: 0.0,
            m: DEFAULT_RESAMPLE,
            param_range: (0.5, 5.0),
            offset_range: (-10.0, 10.0),
            points_range: (64, 256),
        }
    }
}

impl DatasetConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Configuration(msg.into()));
        if self.n_per_class == 0 {
            return bad("n_per_class must be at least 1");
        }
        if !(self.noise_std.is_finite() && self.noise_std >= 0.0) {
            return bad("noise_std must be finite and non-negative");
        }
        if self.m < MIN_POINTS {
            return bad("m must be at least 8");
        }
        let (lo, hi) = self.param_range;
        if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
            return bad("param_range must be positive and ordered");
        }
        let (lo, hi) = self.offset_range;
        if !(lo.is_finite() && hi.is_finite() && hi >= lo) {
            return bad("offset_range must be finite and ordered");
        }
        let (lo, hi) = self.points_range;
        if lo < MIN_POINTS || hi < lo {
            return bad("points_range must start at 8 or more and be ordered");
        }
        Ok(())
    }
}

/// A generated loop before preprocessing.
#[derive(Debug, Clone)]
pub struct SourceLoop {
    pub model: CurveModel,
    /// Noiseless points on the model, in traversal order.
    pub clean: Vec<Point2>,
    pub noisy: Vec<Point2>,
}

/// Generates `n_per_class` random loops per family.
///
/// Each loop draws `a` and `b` uniformly from `param_range`, θ from
/// `[0, 2π)` and the offset from `offset_range`. Half the loops are sampled
/// at uniform parameter steps and half at uniform arc length (constant-speed
/// motion), each from a random start and in a random direction. Gaussian
/// noise with standard deviation `noise_std·a` is added per axis.
pub fn generate_loops(cfg: &DatasetConfig, seed: u64) -> Result<Vec<SourceLoop>> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shape = Uniform::new_inclusive(cfg.param_range.0, cfg.param_range.1).expect("validated range");
    let offset = Uniform::new_inclusive(cfg.offset_range.0, cfg.offset_range.1).expect("validated range");
    let count = Uniform::new_inclusive(cfg.points_range.0, cfg.points_range.1).expect("validated range");
    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    let mut out = Vec::with_capacity(cfg.n_per_class * N_CLASSES);
    for family in CurveFamily::ALL {
        for _ in 0..cfg.n_per_class {
            let a = shape.sample(&mut rng);
            let b = shape.sample(&mut rng);
            let pose = Pose2::new(
                rng.random_range(0.0..std::f64::consts::TAU),
                offset.sample(&mut rng),
                offset.sample(&mut rng),
            );
            let model = CurveModel::new(family, CanonicalParams::for_family(family, a, b), pose)?;
            let n = count.sample(&mut rng);
            let phase: f64 = rng.random();
            let canonical: Vec<Point2> = if rng.random_bool(0.5) {
                let t0 = phase * std::f64::consts::TAU;
                (0..n)
                    .map(|k| {
                        crate::curves::point_at(family, &model.params, t0 + std::f64::consts::TAU * k as f64 / n as f64)
                    })
                    .collect()
            } else {
                let table = ArcLengthTable::new(family, model.params, ArcLengthTable::DEFAULT_SEGMENTS)?;
                table.sample_uniform(n, phase * table.length())
            };
            let mut clean: Vec<Point2> = canonical.into_iter().map(|q| model.pose.to_world(q)).collect();
            if rng.random_bool(0.5) {
                clean.reverse();
            }
            let sigma = cfg.noise_std * a;
            let noisy = clean
                .iter()
                .map(|p| p + Point2::new(sigma * unit.sample(&mut rng), sigma * unit.sample(&mut rng)))
                .collect();
            out.push(SourceLoop { model, clean, noisy });
        }
    }
    Ok(out)
}

/// [`generate_loops`] followed by [`preprocess`] of each noisy loop.
pub fn generate_dataset(cfg: &DatasetConfig, seed: u64) -> Result<Dataset> {
    let samples = generate_loops(cfg, seed)?
        .into_iter()
        .map(|l| Ok(LabeledSample { family: l.model.family, features: preprocess(&l.noisy, cfg.m)? }))
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset { m: cfg.m, samples })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Softmax,
}

/// A dense layer computing `activation(W·x + b)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub weights: DMatrix<f64>,
    pub bias: DVector<f64>,
    pub activation: Activation,
}

impl Layer {
    pub fn inputs(&self) -> usize {
        self.weights.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.weights.nrows()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMetadata {
    pub optimizer: String,
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub samples: usize,
    /// Mean cross-entropy over each epoch's mini-batches.
    pub loss_curve: Vec<f64>,
    /// Accuracy over the whole training set after the last epoch.
    pub final_accuracy: f64,
}

/// A feed-forward classifier with its preprocessing settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkModel {
    pub format_version: u32,
    /// Resample count expected by [`preprocess`]; inputs have length `2m`.
    pub m: usize,
    pub layers: Vec<Layer>,
    pub training: Option<TrainingMetadata>,
}

impl NetworkModel {
    /// He-uniform weights (`±sqrt(6/fan_in)`), zero biases, ReLU hidden
    /// layers and a softmax output.
    pub fn new(m: usize, hidden: &[usize], seed: u64) -> Result<Self> {
        if m == 0 || hidden.contains(&0) {
            return Err(Error::Configuration("layer sizes must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut sizes = vec![2 * m];
        sizes.extend_from_slice(hidden);
        sizes.push(N_CLASSES);
        let layers = sizes
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                let limit = (6.0 / w[0] as f64).sqrt();
                let dist = Uniform::new_inclusive(-limit, limit).expect("positive limit");
                let activation = if i + 2 == sizes.len() { Activation::Softmax } else { Activation::Relu };
                Layer {
                    weights: DMatrix::from_fn(w[1], w[0], |_, _| dist.sample(&mut rng)),
                    bias: DVector::zeros(w[1]),
                    activation,
                }
            })
            .collect();
        Ok(Self { format_version: MODEL_FORMAT_VERSION, m, layers, training: None })
    }

    pub fn input_len(&self) -> usize {
        self.layers.first().map_or(0, Layer::inputs)
    }

    pub fn validate(&self) -> Result<()> {
        if self.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::Configuration(format!("unsupported model format {}", self.format_version)));
        }
        let Some(last) = self.layers.last() else {
            return Err(Error::Configuration("model has no layers".into()));
        };
        if self.input_len() != 2 * self.m {
            return Err(Error::Configuration(format!("input size {} does not match m = {}", self.input_len(), self.m)));
        }
        for (i, pair) in self.layers.windows(2).enumerate() {
            if pair[0].outputs() != pair[1].inputs() {
                return Err(Error::Configuration(format!("layer {i} output does not match layer {} input", i + 1)));
            }
            if pair[0].activation != Activation::Relu {
                return Err(Error::Configuration("hidden layers must use ReLU".into()));
            }
        }
        for (i, l) in self.layers.iter().enumerate() {
            if l.bias.len() != l.outputs() {
                return Err(Error::Configuration(format!("layer {i} bias has the wrong length")));
            }
            if l.weights.iter().chain(l.bias.iter()).any(|w| !w.is_finite()) {
                return Err(Error::Configuration(format!("layer {i} has non-finite weights")));
            }
        }
        if last.outputs() != N_CLASSES || last.activation != Activation::Softmax {
            return Err(Error::Configuration("output layer must be a 9-way softmax".into()));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string(self).map_err(|e| Error::InvalidInput(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let model: Self =
            serde_json::from_str(text).map_err(|e| Error::Configuration(format!("bad model file: {e}")))?;
        model.validate()?;
        Ok(model)
    }

    /// Output probabilities for a batch whose columns are inputs.
    fn forward(&self, x: &DMatrix<f64>) -> Vec<DMatrix<f64>> {
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(x.clone());
        for layer in &self.layers {
            let mut z = &layer.weights * acts.last().unwrap();
            for mut col in z.column_iter_mut() {
                col += &layer.bias;
            }
            match layer.activation {
                Activation::Relu => z.apply(|v| *v = v.max(0.0)),
                Activation::Softmax => softmax_columns(&mut z),
            }
            acts.push(z);
        }
        acts
    }

    /// Mean cross-entropy and its gradients for a batch.
    fn loss_and_gradients(&self, x: &DMatrix<f64>, labels: &[usize]) -> (f64, Vec<LayerGrad>) {
        let batch = labels.len() as f64;
        let acts = self.forward(x);
        let probs = acts.last().unwrap();
        let loss =
            labels.iter().enumerate().map(|(j, &c)| -probs[(c, j)].max(f64::MIN_POSITIVE).ln()).sum::<f64>() / batch;
        let mut delta = probs.clone();
        for (j, &c) in labels.iter().enumerate() {
            delta[(c, j)] -= 1.0;
        }
        delta /= batch;
        let mut grads = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let input = &acts[i];
            grads.push((&delta * input.transpose(), delta.column_sum()));
            if i > 0 {
                let mut back = layer.weights.transpose() * &delta;
                back.zip_apply(input, |d, a| {
                    if a <= 0.0 {
                        *d = 0.0;
                    }
                });
                delta = back;
            }
        }
        grads.reverse();
        (loss, grads)
    }
}

fn softmax_columns(z: &mut DMatrix<f64>) {
    for mut col in z.column_iter_mut() {
        let max = col.max();
        col.apply(|v| *v = (*v - max).exp());
        let sum = col.sum();
        col /= sum;
    }
}

fn batch_matrix(samples: &[&FeatureVector]) -> DMatrix<f64> {
    let rows = samples.first().map_or(0, |s| s.values.len());
    DMatrix::from_fn(rows, samples.len(), |i, j| samples[j].values[i])
}

/// Training hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub hidden: Vec<usize>,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            epochs: 9,
            batch_size: 8,
            hidden: vec![256, 128],
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.lr.is_finite()
            && self.lr > 0.0
            && self.epochs > 0
            && self.batch_size > 0
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.epsilon > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Configuration(format!("invalid training settings {self:?}")))
        }
    }
}

/// Weight and bias gradients of one layer.
type LayerGrad = (DMatrix<f64>, DVector<f64>);

#[allow(clippy::type_complexity)]
struct Adam {
    /// First and second moments of each layer's weights and biases.
    moments: Vec<(DMatrix<f64>, DVector<f64>, DMatrix<f64>, DVector<f64>)>,
    step: i32,
}

impl Adam {
    fn new(model: &NetworkModel) -> Self {
        let moments = model
            .layers
            .iter()
            .map(|l| {
                let (r, c) = l.weights.shape();
                (DMatrix::zeros(r, c), DVector::zeros(r), DMatrix::zeros(r, c), DVector::zeros(r))
            })
            .collect();
        Self { moments, step: 0 }
    }

    fn update(&mut self, model: &mut NetworkModel, grads: &[(DMatrix<f64>, DVector<f64>)], cfg: &TrainConfig) {
        self.step += 1;
        let c1 = 1.0 - cfg.beta1.powi(self.step);
        let c2 = 1.0 - cfg.beta2.powi(self.step);
        let (b1, b2, lr, eps) = (cfg.beta1, cfg.beta2, cfg.lr, cfg.epsilon);
        let adam = |w: &mut f64, m: &mut f64, v: &mut f64, g: f64| {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            *w -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
        };
        for ((layer, (gw, gb)), (mw, mb, vw, vb)) in model.layers.iter_mut().zip(grads).zip(&mut self.moments) {
            for (((w, m), v), g) in layer.weights.iter_mut().zip(mw.iter_mut()).zip(vw.iter_mut()).zip(gw.iter()) {
                adam(w, m, v, *g);
            }
            for (((w, m), v), g) in layer.bias.iter_mut().zip(mb.iter_mut()).zip(vb.iter_mut()).zip(gb.iter()) {
                adam(w, m, v, *g);
            }
        }
    }
}

/// Trains a fresh network on `dataset` with mini-batch Adam and
/// cross-entropy loss. Deterministic for a fixed `cfg.seed`.
pub fn train(dataset: &Dataset, cfg: &TrainConfig) -> Result<NetworkModel> {
    cfg.validate()?;
    let model = NetworkModel::new(dataset.m, &cfg.hidden, cfg.seed)?;
    train_from(model, dataset, cfg)
}

/// Continues training `model` on `dataset`.
pub fn train_from(mut model: NetworkModel, dataset: &Dataset, cfg: &TrainConfig) -> Result<NetworkModel> {
    cfg.validate()?;
    model.validate()?;
    if dataset.is_empty() {
        return Err(Error::InvalidInput("empty dataset".into()));
    }
    if let Some(s) = dataset.samples.iter().find(|s| s.features.values.len() != model.input_len()) {
        return Err(Error::Configuration(format!(
            "feature length {} does not match network input {}",
            s.features.values.len(),
            model.input_len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed0fba7c4);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut adam = Adam::new(&model);
    let mut loss_curve = Vec::with_capacity(cfg.epochs);
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        let mut batches = 0;
        for chunk in order.chunks(cfg.batch_size) {
            let features: Vec<&FeatureVector> = chunk.iter().map(|&i| &dataset.samples[i].features).collect();
            let labels: Vec<usize> = chunk.iter().map(|&i| dataset.samples[i].family.code()).collect();
            let (loss, grads) = model.loss_and_gradients(&batch_matrix(&features), &labels);
            if !loss.is_finite() {
                return Err(Error::NumericalFailure("training loss is not finite".into()));
            }
            adam.update(&mut model, &grads, cfg);
            total += loss;
            batches += 1;
        }
        loss_curve.push(total / batches as f64);
    }
    let final_accuracy = accuracy(&model, dataset)?;
    model.training = Some(TrainingMetadata {
        optimizer: "adam".into(),
        lr: cfg.lr,
        epochs: cfg.epochs,
        batch_size: cfg.batch_size,
        seed: cfg.seed,
        samples: dataset.len(),
        loss_curve,
        final_accuracy,
    });
    Ok(model)
}

/// Fraction of `dataset` whose argmax class matches its label.
pub fn accuracy(model: &NetworkModel, dataset: &Dataset) -> Result<f64> {
    if dataset.is_empty() {
        return Err(Error::InvalidInput("empty dataset".into()));
    }
    let mut correct = 0;
    for chunk in dataset.samples.chunks(256) {
        let features: Vec<&FeatureVector> = chunk.iter().map(|s| &s.features).collect();
        if features.iter().any(|f| f.values.len() != model.input_len()) {
            return Err(Error::InvalidInput("feature length does not match network input".into()));
        }
        let probs = model.forward(&batch_matrix(&features)).pop().unwrap();
        for (j, s) in chunk.iter().enumerate() {
            if probs.column(j).argmax().0 == s.family.code() {
                correct += 1;
            }
        }
    }
    Ok(correct as f64 / dataset.len() as f64)
}

/// Softmax output over the nine families, indexed by label code.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassProbabilities {
    pub p: Vec<f64>,
}

impl ClassProbabilities {
    pub fn argmax(&self) -> CurveFamily {
        let best = self.p.iter().enumerate().fold(0, |b, (i, &v)| if v > self.p[b] { i } else { b });
        CurveFamily::from_code(best).expect("nine classes")
    }

    pub fn confidence(&self) -> f64 {
        self.p[self.argmax().code()]
    }

    pub fn of(&self, family: CurveFamily) -> f64 {
        self.p[family.code()]
    }
}

pub fn classify(model: &NetworkModel, fv: &FeatureVector) -> Result<ClassProbabilities> {
    if fv.values.len() != model.input_len() {
        return Err(Error::InvalidInput(format!(
            "feature length {} does not match network input {}",
            fv.values.len(),
            model.input_len()
        )));
    }
    let probs = model.forward(&DMatrix::from_column_slice(fv.values.len(), 1, &fv.values)).pop().unwrap();
    Ok(ClassProbabilities { p: probs.column(0).iter().copied().collect() })
}

/// [`preprocess`] with the model's resample count, then [`classify`].
pub fn classify_points(model: &NetworkModel, points: &[Point2]) -> Result<ClassProbabilities> {
    classify(model, &preprocess(points, model.m)?)
}

/// Result of [`residual_oracle`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleResult {
    pub family: CurveFamily,
    pub fit: FitResult,
    /// RMS gradient-normalized residual (m) of each family's fit, by label
    /// code. Infinite where the fit failed.
    pub scores: Vec<f64>,
}

/// Fits all nine families and picks the one with the smallest RMS
/// gradient-normalized residual, a first-order point-to-curve distance that
/// is comparable across families.
pub fn residual_oracle(points: &[Point2], opts: &FitOptions) -> Result<OracleResult> {
    let fits: Vec<Result<FitResult>> = std::thread::scope(|s| {
        let handles: Vec<_> = CurveFamily::ALL.iter().map(|&f| s.spawn(move || fit_family(f, points, opts))).collect();
        handles.into_iter().map(|h| h.join().expect("fit thread panicked")).collect()
    });
    let n = points.len() as f64;
    let scores: Vec<f64> = fits
        .iter()
        .map(|r| r.as_ref().map_or(f64::INFINITY, |fit| (gradient_e2(&fit.model, points) / n).sqrt()))
        .map(|s| if s.is_finite() { s } else { f64::INFINITY })
        .collect();
    let best = (0..N_CLASSES).fold(0, |b, i| if scores[i] < scores[b] { i } else { b });
    match fits.into_iter().nth(best) {
        Some(Ok(fit)) if scores[best].is_finite() => Ok(OracleResult { family: fit.model.family, fit, scores }),
        Some(Err(e)) => Err(e),
        _ => Err(Error::NumericalFailure("no family could be fitted".into())),
    }
}
