#![allow(dead_code)]

use monograd::autodiff::{Tape, Var};
use monograd::models::{Activation, MlpConfig, MlpModel, Model, SlicedClassifier, SlicedConfig};
use monograd::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FD_STEP: f64 = 1e-5;

/// `‖a - b‖ / max(‖a‖, ‖b‖)`, or the absolute gap when both are tiny.
pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let diff = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let scale = norm(a).max(norm(b));
    if scale < 1e-12 {
        diff
    } else {
        diff / scale
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn flat_params<M: Model>(m: &M) -> Vec<f64> {
    m.parameters().iter().flat_map(|p| p.data().to_vec()).collect()
}

fn nudge<M: Model + Clone>(m: &M, index: usize, delta: f64) -> M {
    let mut out = m.clone();
    let mut offset = 0;
    for p in out.parameters_mut() {
        if index < offset + p.len() {
            p.data_mut()[index - offset] += delta;
            break;
        }
        offset += p.len();
    }
    out
}

/// Central differences of `f` with respect to every parameter of `m`.
pub fn fd_params<M: Model + Clone>(m: &M, f: impl Fn(&M) -> f64) -> Vec<f64> {
    let n = m.num_parameters();
    (0..n)
        .map(|i| (f(&nudge(m, i, FD_STEP)) - f(&nudge(m, i, -FD_STEP))) / (2.0 * FD_STEP))
        .collect()
}

/// Central differences of `f` with respect to every entry of `x`.
pub fn fd_input(x: &Tensor, f: impl Fn(&Tensor) -> f64) -> Vec<f64> {
    (0..x.len())
        .map(|i| {
            let mut up = x.clone();
            up.data_mut()[i] += FD_STEP;
            let mut down = x.clone();
            down.data_mut()[i] -= FD_STEP;
            (f(&up) - f(&down)) / (2.0 * FD_STEP)
        })
        .collect()
}

/// Analytic gradient of a scalar built from the model's tape parameters.
pub fn tape_param_grad<M: Model>(m: &M, build: impl for<'t> Fn(&'t Tape, &[Var<'t>]) -> Var<'t>) -> Vec<f64> {
    let tape = Tape::new();
    let params = m.bind(&tape).unwrap();
    let target = build(&tape, &params);
    tape.grad(target, &params)
        .unwrap()
        .iter()
        .flat_map(|g| g.value().data().to_vec())
        .collect()
}

pub fn random_tensor(rows: usize, cols: usize, scale: f64, rng: &mut ChaCha8Rng) -> Tensor {
    let data = (0..rows * cols).map(|_| rng.gen_range(-scale..scale)).collect();
    Tensor::matrix(rows, cols, data).unwrap()
}

/// Depth-3 MLP with random widths in 4..=32 and alternating activations.
pub fn random_mlp(seed: u64) -> MlpModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let input_dim = rng.gen_range(2..=8);
    let monotone: Vec<usize> = (0..input_dim).filter(|_| rng.gen_bool(0.5)).collect();
    let monotone = if monotone.is_empty() { vec![0] } else { monotone };
    let cfg = MlpConfig {
        input_dim,
        output_dim: 1,
        depth: 3,
        hidden: rng.gen_range(4..=32),
        activation: if seed.is_multiple_of(2) {
            Activation::Relu
        } else {
            Activation::Tanh
        },
        split_input: false,
        monotone,
    };
    MlpModel::new(&cfg, &mut rng).unwrap()
}

pub fn small_sliced(input_dim: usize, classes: usize, seed: u64) -> SlicedClassifier {
    let cfg = SlicedConfig {
        trunk_depth: 2,
        trunk_hidden: 12,
        slice_layer_width: 4 * classes,
        head_hidden: 8,
        activation: Activation::Tanh,
        ..SlicedConfig::new(input_dim, classes)
    };
    SlicedClassifier::new(&cfg, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
}
