//! Post-hoc Granger-causality extraction from a trained network.
//!
//! For a candidate edge `i -> j`, `Q` Monte-Carlo dropout passes over the
//! test set are made with all inputs and again with channel `i` masked,
//! pairing the two passes of each seed so both see the same hidden-dropout
//! realization. Each pass is summarized by the mean squared error on channel
//! `j`. A 1-D logistic classifier then tries to tell the two error samples
//! apart; the less the reduced-model errors look like full-model errors, the
//! higher the score for `i -> j`.

use ndarray::{Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::data::LaggedDataset;
use crate::error::{Error, Result};
use crate::mlp::{DropoutState, InputMask, MlpRegressor};
use crate::scalar::Scalar;

/// Added to errors before taking logs.
pub const LOG_FLOOR: f64 = 1e-12;
/// L2 strengths tried by cross-validation.
pub const LAMBDA_GRID: [f64; 3] = [0.01, 0.1, 1.0];
pub const CV_FOLDS: usize = 5;
pub const DEFAULT_PASSES: usize = 100;

/// Per-pass test MSE of target `j` with all inputs (`full`) and with the
/// past of `i` masked (`reduced`); entry `q` of both comes from seed `q`.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualPair<T> {
    pub full: Vec<T>,
    pub reduced: Vec<T>,
    pub target: usize,
    pub cause: usize,
}

impl<T: Scalar> ResidualPair<T> {
    pub fn new(full: Vec<T>, reduced: Vec<T>, cause: usize, target: usize) -> Result<Self> {
        if full.len() != reduced.len() || full.len() < 2 {
            return Err(Error::Shape(format!(
                "residual samples need equal lengths >= 2, got {} and {}",
                full.len(),
                reduced.len()
            )));
        }
        if full.iter().chain(&reduced).any(|e| !e.is_finite() || *e < T::zero()) {
            return Err(Error::Numeric("residual errors must be finite and non-negative".into()));
        }
        Ok(Self {
            full,
            reduced,
            target,
            cause,
        })
    }
}

/// `Q` dropout seeds derived from one master seed.
pub fn seed_list(master: u64, passes: usize) -> Vec<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    (0..passes).map(|_| rng.random()).collect()
}

fn check_extraction<T: Scalar>(model: &MlpRegressor<T>, test: &LaggedDataset<T>, seeds: &[u64]) -> Result<()> {
    if !model.is_fitted() {
        return Err(Error::Config("model has not been trained".into()));
    }
    if test.is_empty() {
        return Err(Error::Shape("test set is empty".into()));
    }
    if seeds.len() < 2 {
        return Err(Error::Config(format!("need at least 2 forward passes, got {}", seeds.len())));
    }
    Ok(())
}

/// Mean squared error of every output column.
fn column_mse<T: Scalar>(pred: &Array2<T>, target: &Array2<T>) -> Vec<T> {
    let diff = pred - target;
    diff.mapv(|d| d * d)
        .mean_axis(Axis(0))
        .expect("nonempty")
        .to_vec()
}

/// Per-seed, per-channel test MSE for one input configuration: `[q][j]`.
fn pass_errors<T: Scalar>(
    model: &MlpRegressor<T>,
    test: &LaggedDataset<T>,
    mask: Option<&InputMask>,
    seeds: &[u64],
) -> Result<Vec<Vec<T>>> {
    seeds
        .iter()
        .map(|&s| {
            let pred = model.forward(&test.inputs, mask, Some(DropoutState::new(s)))?;
            Ok(column_mse(&pred, &test.targets))
        })
        .collect()
}

pub fn residual_distributions<T: Scalar>(
    model: &MlpRegressor<T>,
    test: &LaggedDataset<T>,
    cause: usize,
    target: usize,
    seeds: &[u64],
) -> Result<ResidualPair<T>> {
    check_extraction(model, test, seeds)?;
    let p = model.output_width();
    if cause >= p || target >= p {
        return Err(Error::Config(format!("channel index out of range for {p} channels")));
    }
    let mask = InputMask::dropping(p, cause)?;
    let full = pass_errors(model, test, None, seeds)?;
    let reduced = pass_errors(model, test, Some(&mask), seeds)?;
    ResidualPair::new(
        full.iter().map(|e| e[target]).collect(),
        reduced.iter().map(|e| e[target]).collect(),
        cause,
        target,
    )
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn log_loss(p: f64, y: f64) -> f64 {
    let p = p.clamp(1e-15, 1.0 - 1e-15);
    -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
}

/// Logistic model `P(full | e) = sigmoid(w * z + b)` on the standardized
/// log-error `z = (ln(e + 1e-12) - mean) / scale`, fitted by Newton's method
/// on the summed log-loss plus `lambda / 2 * w^2` (intercept unpenalized).
#[derive(Debug, Clone, PartialEq)]
pub struct OverlapClassifier {
    pub weight: f64,
    pub intercept: f64,
    pub lambda: f64,
    pub feature_mean: f64,
    pub feature_scale: f64,
    /// Held-out accuracy of the selected `lambda`.
    pub cv_accuracy: f64,
    /// Held-out mean log-loss of the selected `lambda`.
    pub cv_log_loss: f64,
}

impl OverlapClassifier {
    fn feature(e: f64) -> f64 {
        (e + LOG_FLOOR).ln()
    }

    /// Probability that an error value came from the full model.
    pub fn predict(&self, error: f64) -> f64 {
        let z = (Self::feature(error) - self.feature_mean) / self.feature_scale;
        sigmoid(self.weight * z + self.intercept)
    }

    fn fit_features(x: &[f64], y: &[f64], lambda: f64) -> Self {
        let n = x.len() as f64;
        let mean = x.iter().sum::<f64>() / n;
        let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let scale = if var.sqrt() > 1e-12 { var.sqrt() } else { 1.0 };
        let z: Vec<f64> = x.iter().map(|v| (v - mean) / scale).collect();

        let objective = |w: f64, b: f64| -> f64 {
            z.iter()
                .zip(y)
                .map(|(&zi, &yi)| {
                    // log(1 + exp(m)) - y m, written stably
                    let m = w * zi + b;
                    m.max(0.0) + (-m.abs()).exp().ln_1p() - yi * m
                })
                .sum::<f64>()
                + 0.5 * lambda * w * w
        };

        let (mut w, mut b) = (0.0f64, 0.0f64);
        let mut current = objective(w, b);
        for _ in 0..200 {
            let (mut gw, mut gb, mut hww, mut hwb, mut hbb) = (lambda * w, 0.0, lambda, 0.0, 0.0);
            for (&zi, &yi) in z.iter().zip(y) {
                let p = sigmoid(w * zi + b);
                let r = p - yi;
                let s = p * (1.0 - p);
                gw += r * zi;
                gb += r;
                hww += s * zi * zi;
                hwb += s * zi;
                hbb += s;
            }
            hww += 1e-10;
            hbb += 1e-10;
            let det = hww * hbb - hwb * hwb;
            let (dw, db) = if det > 1e-300 {
                ((hbb * gw - hwb * gb) / det, (hww * gb - hwb * gw) / det)
            } else {
                (gw / hww, gb / hbb)
            };
            let mut t = 1.0;
            let mut accepted = false;
            while t > 1e-12 {
                let (nw, nb) = (w - t * dw, b - t * db);
                let next = objective(nw, nb);
                if next <= current {
                    w = nw;
                    b = nb;
                    current = next;
                    accepted = true;
                    break;
                }
                t *= 0.5;
            }
            if !accepted || (t * dw).abs().max((t * db).abs()) < 1e-12 {
                break;
            }
        }
        Self {
            weight: w,
            intercept: b,
            lambda,
            feature_mean: mean,
            feature_scale: scale,
            cv_accuracy: f64::NAN,
            cv_log_loss: f64::NAN,
        }
    }
}

/// Fits the overlap classifier on `full` (label 1) vs `reduced` (label 0).
/// `lambda` is picked from [`LAMBDA_GRID`] by stratified k-fold held-out
/// log-loss (k = 5, or fewer when there are fewer samples per class), then
/// the model is refit on every point.
pub fn fit_overlap_classifier(full: &[f64], reduced: &[f64]) -> Result<OverlapClassifier> {
    if full.len() < 2 || reduced.len() < 2 {
        return Err(Error::Shape("overlap classifier needs at least 2 samples per class".into()));
    }
    let x: Vec<f64> = full
        .iter()
        .chain(reduced)
        .map(|&e| OverlapClassifier::feature(e))
        .collect();
    let y: Vec<f64> = std::iter::repeat_n(1.0, full.len())
        .chain(std::iter::repeat_n(0.0, reduced.len()))
        .collect();
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("residual errors must be finite and non-negative".into()));
    }
    // Round-robin fold assignment within each class.
    let folds = CV_FOLDS.min(full.len()).min(reduced.len());
    let fold_of: Vec<usize> = (0..full.len())
        .chain(0..reduced.len())
        .map(|m| m % folds)
        .collect();

    let mut best: Option<(f64, f64, f64)> = None;
    for &lambda in &LAMBDA_GRID {
        let (mut loss, mut correct) = (0.0, 0usize);
        for fold in 0..folds {
            let (mut tx, mut ty) = (Vec::new(), Vec::new());
            for m in 0..x.len() {
                if fold_of[m] != fold {
                    tx.push(x[m]);
                    ty.push(y[m]);
                }
            }
            let model = OverlapClassifier::fit_features(&tx, &ty, lambda);
            for m in (0..x.len()).filter(|&m| fold_of[m] == fold) {
                let z = (x[m] - model.feature_mean) / model.feature_scale;
                let p = sigmoid(model.weight * z + model.intercept);
                loss += log_loss(p, y[m]);
                if (p >= 0.5) == (y[m] == 1.0) {
                    correct += 1;
                }
            }
        }
        let n = x.len() as f64;
        let (loss, acc) = (loss / n, correct as f64 / n);
        if best.is_none_or(|(l, _, _)| loss < l) {
            best = Some((loss, lambda, acc));
        }
    }
    let (loss, lambda, acc) = best.expect("non-empty grid");
    let mut model = OverlapClassifier::fit_features(&x, &y, lambda);
    model.cv_accuracy = acc;
    model.cv_log_loss = loss;
    Ok(model)
}

/// A scored edge with the classifier behind it.
#[derive(Debug, Clone)]
pub struct PairScore {
    pub score: f64,
    /// Mean over reduced samples of `1 - P(full | e)`, before the
    /// direction rule.
    pub raw: f64,
    pub classifier: OverlapClassifier,
}

/// Scores `cause -> target`. The overlap score `raw` is returned as is when
/// masking raised the mean error and as `1 - raw` when it lowered it, so an
/// input whose removal helps prediction scores near zero.
pub fn score_pair<T: Scalar>(pair: &ResidualPair<T>) -> Result<PairScore> {
    let full: Vec<f64> = pair.full.iter().map(|v| v.as_f64()).collect();
    let reduced: Vec<f64> = pair.reduced.iter().map(|v| v.as_f64()).collect();
    let classifier = fit_overlap_classifier(&full, &reduced)?;
    let raw = reduced.iter().map(|&e| 1.0 - classifier.predict(e)).sum::<f64>() / reduced.len() as f64;
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let score = if mean(&reduced) > mean(&full) { raw } else { 1.0 - raw };
    Ok(PairScore {
        score: score.clamp(0.0, 1.0),
        raw,
        classifier,
    })
}

pub fn gc_probability<T: Scalar>(pair: &ResidualPair<T>) -> Result<f64> {
    score_pair(pair).map(|s| s.score)
}

/// Soft Granger structure: `scores[[j, i]]` is the score of `i -> j`
/// (rows are effects, as in [`crate::data::AdjacencyMatrix`]).
#[derive(Debug, Clone, PartialEq)]
pub struct GcScoreMatrix<T> {
    pub scores: Array2<T>,
    pub channel_names: Vec<String>,
}

impl<T: Scalar> GcScoreMatrix<T> {
    pub fn new(scores: Array2<T>, channel_names: Vec<String>) -> Result<Self> {
        if scores.nrows() != scores.ncols() || channel_names.len() != scores.nrows() {
            return Err(Error::Shape(format!(
                "score matrix {:?} with {} channel names",
                scores.dim(),
                channel_names.len()
            )));
        }
        if scores.iter().any(|s| !s.is_finite() || *s < T::zero() || *s > T::one()) {
            return Err(Error::Numeric("scores must lie in [0, 1]".into()));
        }
        Ok(Self {
            scores,
            channel_names,
        })
    }

    pub fn size(&self) -> usize {
        self.scores.nrows()
    }

    /// Score of `cause -> effect`.
    pub fn score(&self, cause: usize, effect: usize) -> T {
        self.scores[[effect, cause]]
    }

    /// Header of channel names, then one row per effect channel.
    pub fn to_csv_string(&self) -> String {
        let mut out = self.channel_names.join(",");
        out.push('\n');
        for row in self.scores.rows() {
            let cells: Vec<String> = row.iter().map(|v| format!("{}", v.as_f64())).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }

    /// Inverse of [`Self::to_csv_string`]; a missing header gets default
    /// channel names.
    pub fn from_csv_str(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty()).peekable();
        let first = lines.peek().copied().ok_or(Error::EmptySeries)?;
        let header_is_numeric = first.split(',').all(|c| c.trim().parse::<f64>().is_ok());
        let names: Option<Vec<String>> = if header_is_numeric {
            None
        } else {
            lines.next();
            Some(first.split(',').map(|c| c.trim().to_string()).collect())
        };
        let mut flat = Vec::new();
        let mut rows = 0;
        for (idx, line) in lines.enumerate() {
            for cell in line.split(',') {
                let v: f64 = cell.trim().parse().map_err(|_| Error::Parse {
                    path: "<scores>".into(),
                    line: idx + 1 + names.is_some() as usize,
                    msg: format!("non-numeric cell {cell:?}"),
                })?;
                flat.push(T::of(v));
            }
            rows += 1;
        }
        if rows == 0 || flat.len() != rows * rows {
            return Err(Error::Shape(format!("score matrix must be square, got {} cells in {rows} rows", flat.len())));
        }
        let scores = Array2::from_shape_vec((rows, rows), flat).expect("checked");
        let names = names.unwrap_or_else(|| crate::data::default_channel_names(rows));
        Self::new(scores, names)
    }
}

/// Scores every ordered pair `(i, j)`, self-pairs included. The full-input
/// passes do not depend on `i` and are computed once per seed.
pub fn gc_matrix<T: Scalar>(
    model: &MlpRegressor<T>,
    test: &LaggedDataset<T>,
    seeds: &[u64],
    channel_names: &[String],
) -> Result<GcScoreMatrix<T>> {
    check_extraction(model, test, seeds)?;
    let p = model.output_width();
    if channel_names.len() != p {
        return Err(Error::Shape(format!("{} channel names for {p} channels", channel_names.len())));
    }
    let full = pass_errors(model, test, None, seeds)?;
    let columns: Vec<Vec<f64>> = (0..p)
        .into_par_iter()
        .map(|cause| -> Result<Vec<f64>> {
            let mask = InputMask::dropping(p, cause)?;
            let reduced = pass_errors(model, test, Some(&mask), seeds)?;
            (0..p)
                .map(|target| {
                    let pair = ResidualPair::new(
                        full.iter().map(|e| e[target]).collect(),
                        reduced.iter().map(|e| e[target]).collect(),
                        cause,
                        target,
                    )?;
                    gc_probability(&pair)
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    let scores = Array2::from_shape_fn((p, p), |(effect, cause)| T::of(columns[cause][effect]));
    GcScoreMatrix::new(scores, channel_names.to_vec())
}
