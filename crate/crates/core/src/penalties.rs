//! Monotonicity penalties built from input gradients.
//!
//! Every estimator averages the point-wise squared hinge
//! `Σ_{i ∈ M} max(0, -∂h(x)/∂x_i)²` over some set of points; they differ
//! only in where the points come from:
//!
//! | kind     | points                                                     |
//! |----------|------------------------------------------------------------|
//! | `train`  | the mini-batch itself                                      |
//! | `random` | fresh uniform draws from the domain box                    |
//! | `mixup`  | convex combinations of pairs from batch ∪ uniform draws    |
//!
//! The group penalty instead acts on a [`SlicedClassifier`]: a cross-entropy
//! over the per-class slice gradients `O_k`, pushing the true class to have
//! the largest total gradient on its own slice.
//!
//! All `*_on` functions return tape nodes that are differentiable with
//! respect to the model parameters.

use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::models::{input_gradients_on, Model, SlicedClassifier};
use crate::tensor::Tensor;

pub const DEFAULT_RANDOM_SAMPLES: usize = 1024;
pub const DEFAULT_MIXUP_PAIRS: usize = 1024;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PenaltyKind {
    None,
    Train,
    Random,
    Mixup,
    Group,
}

impl PenaltyKind {
    pub fn name(self) -> &'static str {
        match self {
            PenaltyKind::None => "none",
            PenaltyKind::Train => "train",
            PenaltyKind::Random => "random",
            PenaltyKind::Mixup => "mixup",
            PenaltyKind::Group => "group",
        }
    }
}

impl FromStr for PenaltyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "none" => PenaltyKind::None,
            "train" => PenaltyKind::Train,
            "random" => PenaltyKind::Random,
            "mixup" => PenaltyKind::Mixup,
            "group" => PenaltyKind::Group,
            other => return Err(Error::invalid(format!("unknown penalty kind `{other}`"))),
        })
    }
}

impl std::fmt::Display for PenaltyKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Per-dimension `[lower, upper]` bounds of the input space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DomainBox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl DomainBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() || lower.is_empty() {
            return Err(Error::invalid("domain box bounds must be nonempty and equal length"));
        }
        for (i, (lo, hi)) in lower.iter().zip(&upper).enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::invalid(format!(
                    "domain box dimension {i}: need finite lower < upper, got [{lo}, {hi}]"
                )));
            }
        }
        Ok(DomainBox { lower, upper })
    }

    /// `[min, max]` per column of `data`. A constant column is widened by
    /// ±0.5 so the box keeps positive extent.
    pub fn from_data(data: &Tensor) -> Result<Self> {
        if data.rank() != 2 || data.rows() == 0 {
            return Err(Error::invalid("domain box needs a nonempty matrix"));
        }
        let cols = data.cols();
        let mut lower = vec![f64::INFINITY; cols];
        let mut upper = vec![f64::NEG_INFINITY; cols];
        for i in 0..data.rows() {
            for (j, &v) in data.row(i).iter().enumerate() {
                lower[j] = lower[j].min(v);
                upper[j] = upper[j].max(v);
            }
        }
        for (lo, hi) in lower.iter_mut().zip(upper.iter_mut()) {
            if lo == hi {
                *lo -= 0.5;
                *hi += 0.5;
            }
        }
        Self::new(lower, upper)
    }

    pub fn unit(dim: usize) -> Self {
        DomainBox {
            lower: vec![0.0; dim],
            upper: vec![1.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    /// `n` independent uniform draws, `[n, dim]`.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Tensor {
        let d = self.dim();
        let mut data = Vec::with_capacity(n * d);
        for _ in 0..n {
            for (lo, hi) in self.lower.iter().zip(&self.upper) {
                data.push(lo + (hi - lo) * rng.gen::<f64>());
            }
        }
        Tensor::new(vec![n, d], data).expect("sized above")
    }

    pub fn contains(&self, point: &[f64]) -> bool {
        point.len() == self.dim()
            && point
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(v, (lo, hi))| lo <= v && v <= hi)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PenaltySpec {
    pub kind: PenaltyKind,
    /// Uniform draws per step for the `random` penalty.
    pub random_samples: usize,
    /// Maximum mixed points per step for the `mixup` penalty.
    pub mixup_pairs: usize,
    /// Temperature dividing the slice gradients in the group penalty.
    pub mu: f64,
    pub domain: Option<DomainBox>,
}

impl PenaltySpec {
    pub fn new(kind: PenaltyKind) -> Self {
        PenaltySpec {
            kind,
            random_samples: DEFAULT_RANDOM_SAMPLES,
            mixup_pairs: DEFAULT_MIXUP_PAIRS,
            mu: 1.0,
            domain: None,
        }
    }

    pub fn with_domain(mut self, domain: DomainBox) -> Self {
        self.domain = Some(domain);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.random_samples == 0 || self.mixup_pairs == 0 {
            return Err(Error::invalid("penalty sample sizes must be at least 1"));
        }
        if !(self.mu > 0.0 && self.mu.is_finite()) {
            return Err(Error::invalid("mu must be positive"));
        }
        Ok(())
    }

    fn domain(&self) -> Result<&DomainBox> {
        self.domain
            .as_ref()
            .ok_or_else(|| Error::invalid("this penalty needs a domain box"))
    }
}

/// Row-wise `Σ_j max(0, -g_ij)²` for a `[n, |M|]` gradient node; gives `[n]`.
pub fn hinge_rows<'t>(grads: Var<'t>) -> Result<Var<'t>> {
    grads.neg()?.relu()?.square()?.sum_cols()
}

/// Mean point-wise penalty over the rows of `points`.
pub fn omega_points_on<'t, M: Model + ?Sized>(
    model: &M,
    params: &[Var<'t>],
    points: &Tensor,
    monotone: &[usize],
) -> Result<Var<'t>> {
    let tape = params
        .first()
        .map(|p| p.tape())
        .ok_or_else(|| Error::invalid("model has no parameters"))?;
    if points.rows() == 0 || points.rank() != 2 {
        return Err(Error::invalid("penalty needs a nonempty point set"));
    }
    if monotone.is_empty() {
        return tape.scalar(0.0);
    }
    let x = tape.var(points.clone())?;
    let g = input_gradients_on(model, params, x, monotone, None)?;
    hinge_rows(g)?.mean()
}

fn with_tape<M: Model + ?Sized>(
    model: &M,
    f: impl for<'t> FnOnce(&'t Tape, &[Var<'t>]) -> Result<Var<'t>>,
) -> Result<f64> {
    let tape = Tape::new();
    let params = model.bind(&tape)?;
    Ok(f(&tape, &params)?.item())
}

/// `Σ_{i ∈ M} max(0, -∂h(x)/∂x_i)²` at a single point.
pub fn omega_pointwise<M: Model + ?Sized>(model: &M, x: &[f64], monotone: &[usize]) -> Result<f64> {
    let point = Tensor::matrix(1, x.len(), x.to_vec())?;
    omega_train(model, &point, monotone)
}

pub fn omega_train_on<'t, M: Model + ?Sized>(
    model: &M,
    params: &[Var<'t>],
    batch: &Tensor,
    monotone: &[usize],
) -> Result<Var<'t>> {
    if batch.rows() == 0 {
        return Err(Error::invalid("empty batch"));
    }
    omega_points_on(model, params, batch, monotone)
}

pub fn omega_train<M: Model + ?Sized>(model: &M, batch: &Tensor, monotone: &[usize]) -> Result<f64> {
    with_tape(model, |_, p| omega_train_on(model, p, batch, monotone))
}

pub fn omega_random_on<'t, M: Model + ?Sized, R: Rng + ?Sized>(
    model: &M,
    params: &[Var<'t>],
    spec: &PenaltySpec,
    monotone: &[usize],
    rng: &mut R,
) -> Result<Var<'t>> {
    let domain = spec.domain()?;
    if domain.dim() != model.input_dim() {
        return Err(Error::invalid("domain box dimension differs from model input"));
    }
    let points = domain.sample(spec.random_samples, rng);
    omega_points_on(model, params, &points, monotone)
}

pub fn omega_random<M: Model + ?Sized, R: Rng + ?Sized>(
    model: &M,
    spec: &PenaltySpec,
    monotone: &[usize],
    rng: &mut R,
) -> Result<f64> {
    with_tape(model, |_, p| omega_random_on(model, p, spec, monotone, rng))
}

/// One mixed point: `lambda · pool[first] + (1 - lambda) · pool[second]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MixPair {
    pub first: usize,
    pub second: usize,
    pub lambda: f64,
}

/// Samples `min(max_pairs, pool_rows²)` index pairs uniformly from
/// `{0..pool_rows}²`, each with its own `lambda ~ U[0, 1]`.
pub fn sample_mix_pairs<R: Rng + ?Sized>(pool_rows: usize, max_pairs: usize, rng: &mut R) -> Vec<MixPair> {
    let count = max_pairs.min(pool_rows.saturating_mul(pool_rows));
    (0..count)
        .map(|_| MixPair {
            first: rng.gen_range(0..pool_rows),
            second: rng.gen_range(0..pool_rows),
            lambda: rng.gen::<f64>(),
        })
        .collect()
}

/// Materialises mixed points from `pool`. Each coordinate is clamped to the
/// segment between its two endpoints, which keeps rounding from stepping
/// outside the convex hull.
pub fn mix_rows(pool: &Tensor, pairs: &[MixPair]) -> Result<Tensor> {
    let d = pool.cols();
    let mut data = Vec::with_capacity(pairs.len() * d);
    for p in pairs {
        if p.first >= pool.rows() || p.second >= pool.rows() || !(0.0..=1.0).contains(&p.lambda) {
            return Err(Error::invalid("mix pair out of range"));
        }
        let (a, b) = (pool.row(p.first), pool.row(p.second));
        data.extend(a.iter().zip(b).map(|(&u, &v)| {
            let m = p.lambda * u + (1.0 - p.lambda) * v;
            m.clamp(u.min(v), u.max(v))
        }));
    }
    Tensor::new(vec![pairs.len(), d], data)
}

/// Regularisation points for the mixup penalty: the batch is stacked with
/// as many uniform draws from the domain box, then random pairs of the
/// combined pool are mixed.
pub fn mixup_points<R: Rng + ?Sized>(batch: &Tensor, spec: &PenaltySpec, rng: &mut R) -> Result<Tensor> {
    let domain = spec.domain()?;
    let n = batch.rows();
    if n == 0 || batch.rank() != 2 {
        return Err(Error::invalid("empty batch"));
    }
    if batch.cols() != domain.dim() {
        return Err(Error::ShapeMismatch {
            op: "mixup",
            left: batch.shape().to_vec(),
            right: vec![domain.dim()],
        });
    }
    let noise = domain.sample(n, rng);
    let mut pool = batch.data().to_vec();
    pool.extend_from_slice(noise.data());
    let pool = Tensor::new(vec![2 * n, batch.cols()], pool)?;
    let pairs = sample_mix_pairs(2 * n, spec.mixup_pairs, rng);
    mix_rows(&pool, &pairs)
}

pub fn omega_mixup_on<'t, M: Model + ?Sized, R: Rng + ?Sized>(
    model: &M,
    params: &[Var<'t>],
    batch: &Tensor,
    spec: &PenaltySpec,
    monotone: &[usize],
    rng: &mut R,
) -> Result<Var<'t>> {
    let points = mixup_points(batch, spec, rng)?;
    omega_points_on(model, params, &points, monotone)
}

pub fn omega_mixup<M: Model + ?Sized, R: Rng + ?Sized>(
    model: &M,
    batch: &Tensor,
    spec: &PenaltySpec,
    monotone: &[usize],
    rng: &mut R,
) -> Result<f64> {
    with_tape(model, |_, p| omega_mixup_on(model, p, batch, spec, monotone, rng))
}

/// `-(1/m) Σ_i log softmax(O_i / mu)[y_i]` for a `[m, K]` node of slice
/// gradients.
pub fn omega_group_from_totals<'t>(totals: Var<'t>, labels: &[usize], mu: f64) -> Result<Var<'t>> {
    if !(mu > 0.0 && mu.is_finite()) {
        return Err(Error::invalid("mu must be positive"));
    }
    let shape = totals.shape();
    if shape.len() != 2 || shape[0] != labels.len() || shape[0] == 0 {
        return Err(Error::ShapeMismatch {
            op: "group penalty",
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
    totals
        .scale(1.0 / mu)?
        .log_softmax()?
        .pick_per_row(labels)?
        .mean()?
        .neg()
}

/// Group penalty from an existing forward pass (activations and logits of
/// the sliced classifier).
pub fn omega_group_from_parts<'t>(
    model: &SlicedClassifier,
    acts: Var<'t>,
    logits: Var<'t>,
    labels: &[usize],
    mu: f64,
) -> Result<Var<'t>> {
    let totals = model.slice_total_gradients_on(acts, logits)?;
    omega_group_from_totals(totals, labels, mu)
}

pub fn omega_group_on<'t>(
    model: &SlicedClassifier,
    params: &[Var<'t>],
    batch: &Tensor,
    labels: &[usize],
    mu: f64,
) -> Result<Var<'t>> {
    let tape = params
        .first()
        .map(|p| p.tape())
        .ok_or_else(|| Error::invalid("model has no parameters"))?;
    let x = tape.constant(batch.clone())?;
    let (acts, logits) = model.forward_parts(params, x)?;
    omega_group_from_parts(model, acts, logits, labels, mu)
}

pub fn omega_group(model: &SlicedClassifier, batch: &Tensor, labels: &[usize], mu: f64) -> Result<f64> {
    with_tape(model, |_, p| omega_group_on(model, p, batch, labels, mu))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{Activation, Dense, InputLayer, MlpModel};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// h(x) = -x² as a tiny network: x -> [x, -x] -> relu -> squared is not
    /// expressible, so build it on the tape directly via a custom model.
    struct NegSquare;

    impl Model for NegSquare {
        fn input_dim(&self) -> usize {
            1
        }
        fn output_dim(&self) -> usize {
            1
        }
        fn parameters(&self) -> Vec<&Tensor> {
            Vec::new()
        }
        fn parameters_mut(&mut self) -> Vec<&mut Tensor> {
            Vec::new()
        }
        fn forward<'t>(&self, _params: &[Var<'t>], x: Var<'t>) -> Result<Var<'t>> {
            x.square()?.neg()
        }
        fn bind<'t>(&self, tape: &'t Tape) -> Result<Vec<Var<'t>>> {
            Ok(vec![tape.scalar(0.0)?])
        }
    }

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(42)
    }

    #[test]
    fn pointwise_examples() {
        let m = MlpModel::linear(&[-2.0, 3.0], 0.0).unwrap();
        assert_eq!(omega_pointwise(&m, &[0.1, 0.2], &[0, 1]).unwrap(), 4.0);
        let mono = MlpModel::linear(&[1.0, 1.0], 0.0).unwrap();
        assert_eq!(omega_pointwise(&mono, &[0.1, 0.2], &[0, 1]).unwrap(), 0.0);
        assert_eq!(omega_pointwise(&NegSquare, &[1.0], &[0]).unwrap(), 4.0);
    }

    #[test]
    fn out_of_range_dims_are_errors() {
        let m = MlpModel::linear(&[-2.0, 3.0], 0.0).unwrap();
        assert!(omega_pointwise(&m, &[0.0, 0.0], &[2]).is_err());
    }

    #[test]
    fn train_penalty_is_batch_mean() {
        let x = Tensor::from_rows(&[[1.0], [-1.0]]).unwrap();
        // gradients -2 and +2: point penalties 4 and 0
        assert_eq!(omega_train(&NegSquare, &x, &[0]).unwrap(), 2.0);
        let one = Tensor::from_rows(&[[0.5]]).unwrap();
        assert_eq!(
            omega_train(&NegSquare, &one, &[0]).unwrap(),
            omega_pointwise(&NegSquare, &[0.5], &[0]).unwrap()
        );
        let mono = MlpModel::linear(&[1.0, 0.0], 3.0).unwrap();
        let batch = Tensor::from_rows(&[[1.0, 2.0], [3.0, -4.0], [0.0, 0.0]]).unwrap();
        assert_eq!(omega_train(&mono, &batch, &[0, 1]).unwrap(), 0.0);
        assert!(omega_train(&mono, &Tensor::zeros(&[0, 2]), &[0]).is_err());
    }

    #[test]
    fn random_penalty_examples() {
        let spec = PenaltySpec::new(PenaltyKind::Random).with_domain(DomainBox::unit(1));
        let m = MlpModel::linear(&[-1.0], 0.0).unwrap();
        for n in [1, 7, 1024] {
            let s = PenaltySpec {
                random_samples: n,
                ..spec.clone()
            };
            assert_eq!(omega_random(&m, &s, &[0], &mut rng()).unwrap(), 1.0);
        }
        let mono = MlpModel::linear(&[2.0], 0.0).unwrap();
        assert_eq!(omega_random(&mono, &spec, &[0], &mut rng()).unwrap(), 0.0);
        let no_box = PenaltySpec::new(PenaltyKind::Random);
        assert!(omega_random(&m, &no_box, &[0], &mut rng()).is_err());
    }

    #[test]
    fn mix_endpoints_recover_rows() {
        let pool = Tensor::from_rows(&[[0.1, 0.9], [0.7, 0.3], [0.25, 0.5]]).unwrap();
        let at_one = mix_rows(
            &pool,
            &[MixPair {
                first: 0,
                second: 2,
                lambda: 1.0,
            }],
        )
        .unwrap();
        assert_eq!(at_one.data(), pool.row(0));
        let at_zero = mix_rows(
            &pool,
            &[MixPair {
                first: 0,
                second: 2,
                lambda: 0.0,
            }],
        )
        .unwrap();
        assert_eq!(at_zero.data(), pool.row(2));
    }

    #[test]
    fn mixup_points_stay_in_unit_box() {
        let spec = PenaltySpec::new(PenaltyKind::Mixup).with_domain(DomainBox::unit(2));
        let batch = Tensor::from_rows(&[[0.0, 1.0], [1.0, 0.0], [0.5, 0.5]]).unwrap();
        let pts = mixup_points(&batch, &spec, &mut rng()).unwrap();
        assert_eq!(pts.rows(), 36);
        for i in 0..pts.rows() {
            assert!(pts.row(i).iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn mixup_penalty_examples() {
        let spec = PenaltySpec::new(PenaltyKind::Mixup).with_domain(DomainBox::unit(1));
        let batch = Tensor::from_rows(&[[0.2], [0.4], [0.9]]).unwrap();
        let m = MlpModel::linear(&[-1.0], 0.0).unwrap();
        assert_eq!(omega_mixup(&m, &batch, &spec, &[0], &mut rng()).unwrap(), 1.0);
        let mono = MlpModel::linear(&[0.5], 0.0).unwrap();
        assert_eq!(omega_mixup(&mono, &batch, &spec, &[0], &mut rng()).unwrap(), 0.0);
    }

    #[test]
    fn mixup_equals_train_on_generated_points() {
        let mut r = ChaCha8Rng::seed_from_u64(8);
        let cfg = crate::models::MlpConfig {
            hidden: 6,
            activation: Activation::Tanh,
            ..crate::models::MlpConfig::regression(3, vec![0, 2])
        };
        let m = MlpModel::new(&cfg, &mut r).unwrap();
        let spec = PenaltySpec {
            mixup_pairs: 50,
            ..PenaltySpec::new(PenaltyKind::Mixup)
        }
        .with_domain(DomainBox::new(vec![-1.0; 3], vec![1.0; 3]).unwrap());
        let batch = spec.domain.as_ref().unwrap().sample(5, &mut r);
        let a = omega_mixup(&m, &batch, &spec, &[0, 2], &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let pts = mixup_points(&batch, &spec, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let b = omega_train(&m, &pts, &[0, 2]).unwrap();
        assert_eq!(a, b);
    }

    fn totals_penalty(o: &[f64], k: usize, labels: &[usize], mu: f64) -> f64 {
        let tape = Tape::new();
        let rows = o.len() / k;
        let t = tape.var(Tensor::matrix(rows, k, o.to_vec()).unwrap()).unwrap();
        omega_group_from_totals(t, labels, mu).unwrap().item()
    }

    #[test]
    fn group_penalty_closed_forms() {
        let v = totals_penalty(&[0.0, 0.0], 2, &[0], 1.0);
        assert!((v - std::f64::consts::LN_2).abs() < 1e-12);
        let v = totals_penalty(&[1.0, 0.0], 2, &[0], 1.0);
        assert!((v - (1.0 + (-1.0f64).exp()).ln()).abs() < 1e-12);
        assert!((v - 0.313262).abs() < 1e-6);
    }

    #[test]
    fn group_penalty_shift_invariant_and_monotone_in_true_total() {
        let base = [0.3, -1.2, 2.0, 0.7, 0.1, -0.4];
        let labels = [2, 0];
        let v0 = totals_penalty(&base, 3, &labels, 0.5);
        let shifted: Vec<f64> = base
            .iter()
            .enumerate()
            .map(|(i, o)| o + if i < 3 { 5.0 } else { -2.0 })
            .collect();
        assert!((totals_penalty(&shifted, 3, &labels, 0.5) - v0).abs() < 1e-12);
        let mut up = base;
        up[2] += 0.1;
        assert!(totals_penalty(&up, 3, &labels, 0.5) < v0);
        assert!(v0 >= 0.0);
    }

    #[test]
    fn group_penalty_rejects_bad_labels() {
        let tape = Tape::new();
        let t = tape.var(Tensor::zeros(&[1, 2])).unwrap();
        assert!(omega_group_from_totals(t, &[2], 1.0).is_err());
        assert!(omega_group_from_totals(t, &[0], 0.0).is_err());
    }

    #[test]
    fn domain_box_validation() {
        assert!(DomainBox::new(vec![0.0], vec![0.0]).is_err());
        assert!(DomainBox::new(vec![0.0, 1.0], vec![1.0]).is_err());
        let data = Tensor::from_rows(&[[1.0, 5.0], [3.0, 5.0]]).unwrap();
        let b = DomainBox::from_data(&data).unwrap();
        assert_eq!(b.lower, vec![1.0, 4.5]);
        assert_eq!(b.upper, vec![3.0, 5.5]);
    }

    #[test]
    fn split_layer_helper_compiles_into_penalty() {
        // A split model with nonnegative monotone block and positive output
        // path has zero penalty everywhere.
        let mono = Dense::new(Tensor::matrix(1, 1, vec![1.0]).unwrap(), Tensor::zeros(&[1])).unwrap();
        let other = Dense::new(Tensor::matrix(1, 1, vec![-3.0]).unwrap(), Tensor::zeros(&[1])).unwrap();
        let out = Dense::new(Tensor::matrix(2, 1, vec![2.0, 1.0]).unwrap(), Tensor::zeros(&[1])).unwrap();
        let m = MlpModel::from_layers(
            InputLayer::Split { monotone: mono, other },
            vec![out],
            Activation::Relu,
            vec![0],
        )
        .unwrap();
        let pts = DomainBox::new(vec![-2.0; 2], vec![2.0; 2])
            .unwrap()
            .sample(64, &mut rng());
        assert_eq!(omega_train(&m, &pts, &[0]).unwrap(), 0.0);
    }
}
