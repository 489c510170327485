//! Penalised empirical risk minimisation: `loss + γ·Ω` with Adam or SGD,
//! keeping the checkpoint with the best validation metric.

use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::datagen::{Dataset, Targets, TaskKind};
use crate::error::{Error, Result};
use crate::metrics::prediction_metric;
use crate::models::Model;
use crate::penalties::{omega_group_on, omega_mixup_on, omega_random_on, omega_train_on, PenaltyKind, PenaltySpec};
use crate::tensor::Tensor;

/// Mean squared error between a `[n, 1]` prediction and `n` targets.
pub fn mse_on<'t>(pred: Var<'t>, targets: &[f64]) -> Result<Var<'t>> {
    let shape = pred.shape();
    if shape.len() != 2 || shape[1] != 1 || shape[0] != targets.len() {
        return Err(Error::ShapeMismatch {
            op: "mse",
            left: shape,
            right: vec![targets.len(), 1],
        });
    }
    let t = pred
        .tape()
        .constant(Tensor::matrix(targets.len(), 1, targets.to_vec())?)?;
    pred.sub(t)?.square()?.mean()
}

/// Turns a `[n, 1]` binary score into the logits `[0, s]`; wider outputs
/// pass through.
pub fn as_logits(out: Var<'_>) -> Result<Var<'_>> {
    let shape = out.shape();
    if shape.len() == 2 && shape[1] == 1 {
        let zeros = out.tape().constant(Tensor::zeros(&[shape[0], 1]))?;
        Var::concat_cols(&[zeros, out])
    } else {
        Ok(out)
    }
}

/// Mean softmax cross-entropy of `[n, K]` logits (or `[n, 1]` binary scores).
pub fn cross_entropy_on<'t>(out: Var<'t>, labels: &[usize]) -> Result<Var<'t>> {
    let logits = as_logits(out)?;
    let shape = logits.shape();
    if shape.len() != 2 || shape[0] != labels.len() {
        return Err(Error::ShapeMismatch {
            op: "cross_entropy",
            left: shape,
            right: vec![labels.len()],
        });
    }
    if let Some(&bad) = labels.iter().find(|&&y| y >= shape[1]) {
        return Err(Error::invalid(format!(
            "label {bad} out of range for {} classes",
            shape[1]
        )));
    }
    logits.log_softmax()?.pick_per_row(labels)?.mean()?.neg()
}

/// MSE for real targets, cross-entropy for labels.
pub fn loss_on<'t>(out: Var<'t>, targets: &Targets) -> Result<Var<'t>> {
    match targets {
        Targets::Real(y) => mse_on(out, y),
        Targets::Labels { labels, .. } => cross_entropy_on(out, labels),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Adam,
    Sgd,
}

impl FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "adam" => Ok(OptimizerKind::Adam),
            "sgd" => Ok(OptimizerKind::Sgd),
            other => Err(Error::invalid(format!("unknown optimizer `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamHyper {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamHyper {
    pub fn new(lr: f64) -> Self {
        AdamHyper {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct AdamState {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: i32,
}

fn check_step_shapes(params: &[&mut Tensor], grads: &[Tensor]) -> Result<()> {
    if params.len() != grads.len() || params.iter().zip(grads).any(|(p, g)| p.shape() != g.shape()) {
        return Err(Error::invalid("parameter and gradient shapes differ"));
    }
    Ok(())
}

/// One bias-corrected Adam update.
pub fn adam_step(params: &mut [&mut Tensor], grads: &[Tensor], state: &mut AdamState, hyper: &AdamHyper) -> Result<()> {
    check_step_shapes(params, grads)?;
    if state.m.is_empty() {
        state.m = grads.iter().map(|g| vec![0.0; g.len()]).collect();
        state.v = state.m.clone();
    }
    state.t += 1;
    let c1 = 1.0 - hyper.beta1.powi(state.t);
    let c2 = 1.0 - hyper.beta2.powi(state.t);
    for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
        let (m, v) = (&mut state.m[i], &mut state.v[i]);
        for (j, (w, &gj)) in p.data_mut().iter_mut().zip(g.data()).enumerate() {
            m[j] = hyper.beta1 * m[j] + (1.0 - hyper.beta1) * gj;
            v[j] = hyper.beta2 * v[j] + (1.0 - hyper.beta2) * gj * gj;
            let m_hat = m[j] / c1;
            let v_hat = v[j] / c2;
            *w -= hyper.lr * m_hat / (v_hat.sqrt() + hyper.eps);
        }
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SgdHyper {
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SgdState {
    velocity: Vec<Vec<f64>>,
}

/// One SGD update. Weight decay is added to the gradient; the momentum
/// buffer starts at the first decayed gradient.
pub fn sgd_step(params: &mut [&mut Tensor], grads: &[Tensor], state: &mut SgdState, hyper: &SgdHyper) -> Result<()> {
    check_step_shapes(params, grads)?;
    let first = state.velocity.is_empty();
    if first {
        state.velocity = grads.iter().map(|g| vec![0.0; g.len()]).collect();
    }
    for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
        let buf = &mut state.velocity[i];
        for (j, (w, &gj)) in p.data_mut().iter_mut().zip(g.data()).enumerate() {
            let d = gj + hyper.weight_decay * *w;
            buf[j] = if first { d } else { hyper.momentum * buf[j] + d };
            let step = if hyper.momentum > 0.0 { buf[j] } else { d };
            *w -= hyper.lr * step;
        }
    }
    Ok(())
}

enum Optimizer {
    Adam(AdamHyper, AdamState),
    Sgd(SgdHyper, SgdState),
}

impl Optimizer {
    fn step(&mut self, params: &mut [&mut Tensor], grads: &[Tensor]) -> Result<()> {
        match self {
            Optimizer::Adam(h, s) => adam_step(params, grads, s, h),
            Optimizer::Sgd(h, s) => sgd_step(params, grads, s, h),
        }
    }
}

/// Which parameters `train` returns.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Selection {
    /// Best validation RMSE (regression) or accuracy (classification).
    Best,
    Last,
}

impl FromStr for Selection {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "best" => Ok(Selection::Best),
            "last" => Ok(Selection::Last),
            other => Err(Error::invalid(format!("unknown selection `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub penalty: PenaltySpec,
    pub gamma: f64,
    pub optimizer: OptimizerKind,
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Global gradient-norm ceiling; `None` disables clipping.
    pub clip_norm: Option<f64>,
    pub selection: Selection,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            penalty: PenaltySpec::new(PenaltyKind::None),
            gamma: 1e4,
            optimizer: OptimizerKind::Adam,
            learning_rate: 5e-3,
            momentum: 0.9,
            weight_decay: 1e-4,
            batch_size: 256,
            epochs: 200,
            seed: 0,
            clip_norm: Some(100.0),
            selection: Selection::Best,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(Error::invalid("gamma must be a finite nonnegative number"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid("learning rate must be positive"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch size must be at least 1"));
        }
        if !(0.0..1.0).contains(&self.momentum) || !(self.weight_decay >= 0.0) {
            return Err(Error::invalid(
                "momentum must lie in [0, 1) and weight decay be nonnegative",
            ));
        }
        if let Some(c) = self.clip_norm {
            if !(c > 0.0) {
                return Err(Error::invalid("clip norm must be positive"));
            }
        }
        self.penalty.validate()
    }

    fn optimizer(&self) -> Optimizer {
        match self.optimizer {
            OptimizerKind::Adam => Optimizer::Adam(AdamHyper::new(self.learning_rate), AdamState::default()),
            OptimizerKind::Sgd => Optimizer::Sgd(
                SgdHyper {
                    lr: self.learning_rate,
                    momentum: self.momentum,
                    weight_decay: self.weight_decay,
                },
                SgdState::default(),
            ),
        }
    }
}

/// Batch-averaged training quantities for one epoch, evaluated before each
/// step's update, plus the end-of-epoch validation metric.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    pub omega: f64,
    pub objective: f64,
    pub valid_metric: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainOutcome {
    pub history: Vec<EpochRecord>,
    /// Epoch (1-based) whose parameters were kept.
    pub selected_epoch: usize,
    pub selected_metric: Option<f64>,
}

pub fn history_jsonl(history: &[EpochRecord]) -> Result<String> {
    let mut out = String::new();
    for r in history {
        out.push_str(&serde_json::to_string(r)?);
        out.push('\n');
    }
    Ok(out)
}

fn global_norm(grads: &[Tensor]) -> f64 {
    grads.iter().flat_map(|g| g.data()).map(|v| v * v).sum::<f64>().sqrt()
}

fn better(task: TaskKind, candidate: f64, incumbent: f64) -> bool {
    match task {
        TaskKind::Regression => candidate < incumbent,
        TaskKind::Classification => candidate > incumbent,
    }
}

struct StepValues {
    loss: f64,
    omega: f64,
    objective: f64,
    grads: Vec<Tensor>,
}

fn step_values<M: Model + ?Sized>(
    model: &M,
    batch: &Dataset,
    monotone: &[usize],
    config: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> Result<StepValues> {
    let tape = Tape::new();
    let params = model.bind(&tape)?;
    let x = tape.constant(batch.features.clone())?;
    let loss = loss_on(model.forward(&params, x)?, &batch.targets)?;
    let spec = &config.penalty;
    let omega = match spec.kind {
        PenaltyKind::None => None,
        PenaltyKind::Train => Some(omega_train_on(model, &params, &batch.features, monotone)?),
        PenaltyKind::Random => Some(omega_random_on(model, &params, spec, monotone, rng)?),
        PenaltyKind::Mixup => Some(omega_mixup_on(model, &params, &batch.features, spec, monotone, rng)?),
        PenaltyKind::Group => {
            let sliced = model
                .as_sliced()
                .ok_or_else(|| Error::invalid("the group penalty needs a sliced classifier"))?;
            let labels = batch
                .labels()
                .ok_or_else(|| Error::invalid("the group penalty needs class labels"))?;
            Some(omega_group_on(sliced, &params, &batch.features, labels, spec.mu)?)
        }
    };
    let objective = match omega {
        Some(o) if config.gamma > 0.0 => loss.add(o.scale(config.gamma)?)?,
        _ => loss,
    };
    let grads = tape.grad(objective, &params)?;
    Ok(StepValues {
        loss: loss.item(),
        omega: omega.map_or(0.0, |o| o.item()),
        objective: objective.item(),
        grads: grads.iter().map(|g| (*g.value()).clone()).collect(),
    })
}

/// Trains `model` in place on `train`, selecting by `valid` when it is
/// nonempty. The penalty is taken over the monotone set of `train`.
///
/// Shuffling and penalty sampling use separate streams derived from
/// `config.seed`, so with `γ = 0` every penalty kind follows the same
/// parameter trajectory.
pub fn train<M: Model + ?Sized>(
    model: &mut M,
    train: &Dataset,
    valid: &Dataset,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    config.validate()?;
    if train.is_empty() {
        return Err(Error::invalid("empty training set"));
    }
    if train.dim() != model.input_dim() {
        return Err(Error::ShapeMismatch {
            op: "train",
            left: vec![train.dim()],
            right: vec![model.input_dim()],
        });
    }
    let mut penalty = config.penalty.clone();
    if penalty.domain.is_none() {
        penalty.domain = Some(train.domain.clone());
    }
    let config = TrainConfig {
        penalty,
        ..config.clone()
    };
    let monotone = train.monotone.clone();
    let task = train.task();

    let mut order_rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut penalty_rng = ChaCha8Rng::seed_from_u64(config.seed);
    penalty_rng.set_stream(1);
    let mut optimizer = config.optimizer();

    let use_valid = !valid.is_empty();
    let mut best: Option<(f64, usize, Vec<Tensor>)> = None;
    let mut history = Vec::with_capacity(config.epochs);
    let mut order: Vec<usize> = (0..train.len()).collect();

    for epoch in 1..=config.epochs {
        order.shuffle(&mut order_rng);
        let (mut loss_sum, mut omega_sum, mut obj_sum, mut batches) = (0.0, 0.0, 0.0, 0usize);
        for (step, idx) in order.chunks(config.batch_size).enumerate() {
            let batch = train.subset(idx);
            let values = step_values(&*model, &batch, &monotone, &config, &mut penalty_rng).map_err(|e| match e {
                Error::NonFinite { .. } => Error::Divergence {
                    epoch,
                    step,
                    value: f64::NAN,
                },
                other => other,
            })?;
            if !values.objective.is_finite() {
                return Err(Error::Divergence {
                    epoch,
                    step,
                    value: values.objective,
                });
            }
            let mut grads = values.grads;
            if let Some(limit) = config.clip_norm {
                let norm = global_norm(&grads);
                if norm > limit {
                    let s = limit / norm;
                    grads
                        .iter_mut()
                        .for_each(|g| g.data_mut().iter_mut().for_each(|v| *v *= s));
                }
            }
            optimizer.step(&mut model.parameters_mut(), &grads)?;
            loss_sum += values.loss;
            omega_sum += values.omega;
            obj_sum += values.objective;
            batches += 1;
        }
        let n = batches as f64;
        let valid_metric = if use_valid {
            Some(prediction_metric(&*model, valid)?)
        } else {
            None
        };
        history.push(EpochRecord {
            epoch,
            loss: loss_sum / n,
            omega: omega_sum / n,
            objective: obj_sum / n,
            valid_metric,
        });
        if config.selection == Selection::Best {
            if let Some(m) = valid_metric {
                if m.is_finite() && best.as_ref().is_none_or(|(b, _, _)| better(task, m, *b)) {
                    let snapshot = model.parameters().into_iter().cloned().collect();
                    best = Some((m, epoch, snapshot));
                }
            }
        }
    }

    let (selected_epoch, selected_metric) = match best {
        Some((metric, epoch, snapshot)) => {
            for (p, s) in model.parameters_mut().into_iter().zip(snapshot) {
                *p = s;
            }
            (epoch, Some(metric))
        }
        None => (config.epochs, history.last().and_then(|r| r.valid_metric)),
    };
    Ok(TrainOutcome {
        history,
        selected_epoch,
        selected_metric,
    })
}
