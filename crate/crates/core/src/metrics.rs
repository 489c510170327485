//! Monotonicity audits, prediction metrics and detection statistics.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::datagen::{Dataset, Targets, TaskKind};
use crate::error::{Error, Result};
use crate::models::{input_gradients_batch, Model, SlicedClassifier};
use crate::penalties::DomainBox;
use crate::tensor::Tensor;

/// Default number of uniform draws for `rho_random`.
pub const DEFAULT_RANDOM_AUDIT_POINTS: usize = 10_000;

const AUDIT_CHUNK: usize = 2048;

/// Fraction of rows of `points` at which some monotone input gradient is
/// below `-slack` (strictly). With `slack = 0` a gradient of exactly zero
/// counts as monotone.
///
/// An empty monotone set imposes no constraint, so the rate is 0.
pub fn rho_hat_with_slack<M: Model + ?Sized>(
    model: &M,
    points: &Tensor,
    monotone: &[usize],
    slack: f64,
) -> Result<f64> {
    let n = points.rows();
    if n == 0 || points.rank() != 2 {
        return Err(Error::invalid("cannot audit an empty point set"));
    }
    if !(slack >= 0.0) {
        return Err(Error::invalid("slack must be nonnegative"));
    }
    if monotone.is_empty() {
        return Ok(0.0);
    }
    let mut violations = 0usize;
    let idx: Vec<usize> = (0..n).collect();
    for chunk in idx.chunks(AUDIT_CHUNK) {
        let g = input_gradients_batch(model, &points.select_rows(chunk), monotone)?;
        violations += (0..g.rows()).filter(|&i| g.row(i).iter().any(|&v| v < -slack)).count();
    }
    Ok(violations as f64 / n as f64)
}

pub fn rho_hat<M: Model + ?Sized>(model: &M, points: &Tensor, monotone: &[usize]) -> Result<f64> {
    rho_hat_with_slack(model, points, monotone, 0.0)
}

/// `rho_hat` over `n` fresh uniform draws from `domain`.
pub fn rho_random<M: Model + ?Sized, R: Rng + ?Sized>(
    model: &M,
    domain: &DomainBox,
    n: usize,
    monotone: &[usize],
    slack: f64,
    rng: &mut R,
) -> Result<f64> {
    if domain.dim() != model.input_dim() {
        return Err(Error::invalid("domain box dimension differs from model input"));
    }
    let points = domain.sample(n, rng);
    rho_hat_with_slack(model, &points, monotone, slack)
}

/// Index of the largest value; the lowest index wins ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Predicted classes from model outputs. A single output column is a
/// binary score: class 1 iff the score is positive.
pub fn predicted_classes(outputs: &Tensor) -> Vec<usize> {
    (0..outputs.rows())
        .map(|i| {
            let row = outputs.row(i);
            if row.len() == 1 {
                usize::from(row[0] > 0.0)
            } else {
                argmax(row)
            }
        })
        .collect()
}

pub fn regression_rmse<M: Model + ?Sized>(model: &M, data: &Dataset) -> Result<f64> {
    let Targets::Real(y) = &data.targets else {
        return Err(Error::invalid("RMSE needs a regression dataset"));
    };
    if y.is_empty() {
        return Err(Error::invalid("empty dataset"));
    }
    let pred = model.predict_batch(&data.features)?;
    if pred.cols() != 1 {
        return Err(Error::invalid("RMSE needs a single-output model"));
    }
    let mse = pred.data().iter().zip(y).map(|(p, t)| (p - t).powi(2)).sum::<f64>() / y.len() as f64;
    Ok(mse.sqrt())
}

pub fn classification_accuracy<M: Model + ?Sized>(model: &M, data: &Dataset) -> Result<f64> {
    let Targets::Labels { labels, .. } = &data.targets else {
        return Err(Error::invalid("accuracy needs a classification dataset"));
    };
    let pred = predicted_classes(&model.predict_batch(&data.features)?);
    Ok(agreement(&pred, labels))
}

fn agreement(pred: &[usize], labels: &[usize]) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    pred.iter().zip(labels).filter(|(p, y)| p == y).count() as f64 / labels.len() as f64
}

/// RMSE for regression data, accuracy for classification data.
pub fn prediction_metric<M: Model + ?Sized>(model: &M, data: &Dataset) -> Result<f64> {
    match data.task() {
        TaskKind::Regression => regression_rmse(model, data),
        TaskKind::Classification => classification_accuracy(model, data),
    }
}

/// Accuracy of `argmax_k T_k(x)` against the labels.
pub fn total_activation_accuracy(model: &SlicedClassifier, data: &Dataset) -> Result<f64> {
    let Targets::Labels { labels, .. } = &data.targets else {
        return Err(Error::invalid("total-activation accuracy needs labels"));
    };
    let totals = model.slice_totals_batch(&data.features)?;
    let pred: Vec<usize> = (0..totals.rows()).map(|i| argmax(totals.row(i))).collect();
    Ok(agreement(&pred, labels))
}

/// Entropy of `softmax(totals)` divided by `log K`, in `[0, 1]`.
pub fn normalized_entropy(totals: &[f64]) -> Result<f64> {
    let k = totals.len();
    if k < 2 {
        return Err(Error::invalid("normalized entropy needs at least two classes"));
    }
    if totals.iter().any(|t| !t.is_finite()) {
        return Err(Error::NonFinite {
            op: "normalized_entropy",
        });
    }
    let max = totals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = totals.iter().map(|t| (t - max).exp()).collect();
    let z: f64 = weights.iter().sum();
    let h: f64 = weights
        .iter()
        .map(|w| w / z)
        .filter(|&p| p > 0.0)
        .map(|p| -p * p.ln())
        .sum();
    Ok((h / (k as f64).ln()).clamp(0.0, 1.0))
}

/// Flags an input as anomalous when its normalized entropy exceeds `tau`.
pub fn detect(totals: &[f64], tau: f64) -> Result<bool> {
    if !(0.0..=1.0).contains(&tau) {
        return Err(Error::invalid("threshold must lie in [0, 1]"));
    }
    Ok(normalized_entropy(totals)? > tau)
}

/// Area under the ROC curve as the probability that a positive score
/// outranks a negative one, ties counting one half. Exact pairwise count.
pub fn auc_roc(negatives: &[f64], positives: &[f64]) -> Result<f64> {
    if negatives.is_empty() || positives.is_empty() {
        return Err(Error::invalid("AUC needs nonempty score sets"));
    }
    let mut wins = 0.0;
    for &p in positives {
        for &n in negatives {
            if p > n {
                wins += 1.0;
            } else if p == n {
                wins += 0.5;
            }
        }
    }
    Ok(wins / (negatives.len() as f64 * positives.len() as f64))
}

fn check_ball_args(n: usize, r: f64) -> Result<()> {
    if n == 0 {
        return Err(Error::invalid("dimension must be at least 1"));
    }
    if !(0.0..=1.0).contains(&r) {
        return Err(Error::invalid("radius must lie in [0, 1]"));
    }
    Ok(())
}

/// `P(‖x‖ > r)` for `x` uniform in the unit `n`-ball: `1 - r^n`.
pub fn sphere_prob_uniform(n: usize, r: f64) -> Result<f64> {
    check_ball_args(n, r)?;
    Ok(1.0 - r.powi(n as i32))
}

/// Product form `(1 - r^n)(1 - r) = P(‖y‖ > r)·P(λ > r)` for `y` uniform in
/// the unit `n`-ball and `λ ~ U[0, 1]`. It upper-bounds the tail of `λ y`
/// (see [`sphere_prob_mixup_exact`]) and meets it only as `n → ∞`.
pub fn sphere_prob_mixup(n: usize, r: f64) -> Result<f64> {
    Ok(sphere_prob_uniform(n, r)? * (1.0 - r))
}

/// Exact `P(‖λ y‖ > r) = ∫_r^1 1 - (r/λ)^n dλ`: `(1 - r) - (r - r^n)/(n - 1)`,
/// or `(1 - r) + r ln r` when `n = 1`.
pub fn sphere_prob_mixup_exact(n: usize, r: f64) -> Result<f64> {
    check_ball_args(n, r)?;
    if r == 0.0 {
        return Ok(1.0);
    }
    Ok(if n == 1 {
        (1.0 - r) + r * r.ln()
    } else {
        (1.0 - r) - (r - r.powi(n as i32)) / (n - 1) as f64
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BallMode {
    Uniform,
    Mixup,
}

/// One draw uniform in the unit `n`-ball (normalised Gaussian direction,
/// radius `U^{1/n}`), optionally scaled by an independent `λ ~ U[0, 1]`.
pub fn sample_ball_point<R: Rng + ?Sized>(n: usize, mode: BallMode, rng: &mut R, buf: &mut Vec<f64>) {
    buf.clear();
    buf.extend((0..n).map(|_| rng.sample::<f64, _>(StandardNormal)));
    let norm = buf.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut radius = rng.gen::<f64>().powf(1.0 / n as f64);
    if mode == BallMode::Mixup {
        radius *= rng.gen::<f64>();
    }
    let scale = if norm > 0.0 { radius / norm } else { 0.0 };
    buf.iter_mut().for_each(|v| *v *= scale);
}

/// Empirical `P(‖x‖ > r)` over `draws` samples.
pub fn sphere_prob_monte_carlo<R: Rng + ?Sized>(
    n: usize,
    r: f64,
    draws: usize,
    mode: BallMode,
    rng: &mut R,
) -> Result<f64> {
    check_ball_args(n, r)?;
    if draws == 0 {
        return Err(Error::invalid("need at least one draw"));
    }
    let mut buf = Vec::with_capacity(n);
    let mut hits = 0usize;
    for _ in 0..draws {
        sample_ball_point(n, mode, rng, &mut buf);
        if buf.iter().map(|v| v * v).sum::<f64>().sqrt() > r {
            hits += 1;
        }
    }
    Ok(hits as f64 / draws as f64)
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SampleSizes {
    pub random: usize,
    pub train: usize,
    pub valid: usize,
    pub test: usize,
}

/// Results of auditing one trained model.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub rho_random: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub rho_train: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub rho_test: Option<f64>,
    /// `rmse` or `accuracy`.
    pub metric: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub train: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub valid: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub test: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub total_activation_accuracy: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub detection_auc: Option<f64>,
    pub sample_sizes: SampleSizes,
    pub seed: u64,
}

impl MetricsReport {
    pub fn validate(&self) -> Result<()> {
        let fractions = [
            self.rho_random,
            self.rho_train,
            self.rho_test,
            self.total_activation_accuracy,
            self.detection_auc,
        ];
        if fractions.iter().flatten().any(|f| !(0.0..=1.0).contains(f)) {
            return Err(Error::invalid("report fractions must lie in [0, 1]"));
        }
        Ok(())
    }
}
