//! L∞ projected gradient ascent on the classification loss.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::Tape;
use crate::error::{Error, Result};
use crate::models::Model;
use crate::penalties::DomainBox;
use crate::tensor::Tensor;
use crate::trainer::cross_entropy_on;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttackSpec {
    pub epsilon: f64,
    pub steps: usize,
    pub step_size: f64,
    /// Valid input range; `None` leaves only the ε-ball.
    pub input_box: Option<DomainBox>,
    pub seed: u64,
    pub random_start: bool,
}

impl AttackSpec {
    /// Ten steps of size `ε/4` from a random start.
    pub fn new(epsilon: f64, seed: u64) -> Self {
        AttackSpec {
            epsilon,
            steps: 10,
            step_size: epsilon / 4.0,
            input_box: None,
            seed,
            random_start: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(Error::invalid("epsilon must be a finite nonnegative number"));
        }
        if self.steps > 0 && self.epsilon > 0.0 && !(self.step_size > 0.0) {
            return Err(Error::invalid("step size must be positive when steps > 0"));
        }
        Ok(())
    }
}

/// Per-coordinate feasible interval: the ε-ball intersected with the box.
/// A coordinate whose intersection is empty stays at its clean value.
fn feasible(x: &Tensor, spec: &AttackSpec) -> (Vec<f64>, Vec<f64>) {
    let d = x.cols();
    let mut lo = Vec::with_capacity(x.len());
    let mut hi = Vec::with_capacity(x.len());
    for (k, &v) in x.data().iter().enumerate() {
        let (mut a, mut b) = (v - spec.epsilon, v + spec.epsilon);
        if let Some(bx) = &spec.input_box {
            let j = k % d;
            a = a.max(bx.lower[j]);
            b = b.min(bx.upper[j]);
        }
        if a > b {
            a = v;
            b = v;
        }
        lo.push(a);
        hi.push(b);
    }
    (lo, hi)
}

fn project(x: &mut [f64], lo: &[f64], hi: &[f64]) {
    for ((v, &a), &b) in x.iter_mut().zip(lo).zip(hi) {
        *v = v.clamp(a, b);
    }
}

/// Input gradient of the summed cross-entropy; rows are independent.
fn loss_input_gradient<M: Model + ?Sized>(model: &M, x: &Tensor, labels: &[usize]) -> Result<Tensor> {
    let tape = Tape::new();
    let params = model.bind(&tape)?;
    let xv = tape.var(x.clone())?;
    let loss = cross_entropy_on(model.forward(&params, xv)?, labels)?;
    let g = tape.grad(loss, &[xv])?[0];
    Ok((*g.value()).clone())
}

/// Perturbs every row of `x` within `‖δ‖_∞ ≤ ε` to increase the loss of
/// its label.
pub fn pgd_linf<M: Model + ?Sized>(model: &M, x: &Tensor, labels: &[usize], spec: &AttackSpec) -> Result<Tensor> {
    spec.validate()?;
    if x.rank() != 2 || x.cols() != model.input_dim() || x.rows() != labels.len() {
        return Err(Error::ShapeMismatch {
            op: "pgd",
            left: x.shape().to_vec(),
            right: vec![labels.len(), model.input_dim()],
        });
    }
    if let Some(bx) = &spec.input_box {
        if bx.dim() != x.cols() {
            return Err(Error::invalid("input box dimension differs from the data"));
        }
    }
    let (lo, hi) = feasible(x, spec);
    let mut adv = x.clone();
    if spec.epsilon == 0.0 {
        return Ok(adv);
    }
    if spec.random_start {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        for v in adv.data_mut() {
            *v += rng.gen_range(-spec.epsilon..=spec.epsilon);
        }
        project(adv.data_mut(), &lo, &hi);
    }
    for _ in 0..spec.steps {
        let g = loss_input_gradient(model, &adv, labels)?;
        for (v, &gj) in adv.data_mut().iter_mut().zip(g.data()) {
            if gj > 0.0 {
                *v += spec.step_size;
            } else if gj < 0.0 {
                *v -= spec.step_size;
            }
        }
        project(adv.data_mut(), &lo, &hi);
    }
    Ok(adv)
}

/// [`pgd_linf`] on a single point.
pub fn pgd_linf_point<M: Model + ?Sized>(model: &M, x: &[f64], label: usize, spec: &AttackSpec) -> Result<Vec<f64>> {
    let t = Tensor::matrix(1, x.len(), x.to_vec())?;
    Ok(pgd_linf(model, &t, &[label], spec)?.into_data())
}
