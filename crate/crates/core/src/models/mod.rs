//! Dense networks: plain and split-input MLPs, and the slice-partitioned
//! classifier used for group monotonicity.

mod io;
mod sliced;

pub use io::{load_model, save_model, AnyModel};
pub use sliced::{slice_totals_from_activations, SliceLayout, SlicedClassifier, SlicedConfig};

use rand::Rng;

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Tanh,
    Softplus,
}

impl Activation {
    pub fn apply<'t>(self, x: Var<'t>) -> Result<Var<'t>> {
        match self {
            Activation::Relu => x.relu(),
            Activation::Tanh => x.tanh(),
            Activation::Softplus => x.softplus(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
            Activation::Softplus => "softplus",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "relu" => Some(Activation::Relu),
            "tanh" => Some(Activation::Tanh),
            "softplus" => Some(Activation::Softplus),
            _ => None,
        }
    }
}

/// A fully connected layer computing `x · W + b` for row-major batches.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    /// `[in, out]`
    pub weight: Tensor,
    /// `[out]`
    pub bias: Tensor,
}

impl Dense {
    pub fn new(weight: Tensor, bias: Tensor) -> Result<Self> {
        if weight.rank() != 2 || bias.rank() != 1 || weight.shape()[1] != bias.len() {
            return Err(Error::ShapeMismatch {
                op: "dense",
                left: weight.shape().to_vec(),
                right: bias.shape().to_vec(),
            });
        }
        Ok(Dense { weight, bias })
    }

    /// Glorot-uniform weights, zero bias.
    pub fn glorot<R: Rng + ?Sized>(fan_in: usize, fan_out: usize, rng: &mut R) -> Self {
        let limit = (6.0 / (fan_in + fan_out).max(1) as f64).sqrt();
        let data = (0..fan_in * fan_out).map(|_| rng.gen_range(-limit..=limit)).collect();
        Dense {
            weight: Tensor::new(vec![fan_in, fan_out], data).expect("sized above"),
            bias: Tensor::zeros(&[fan_out]),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn out_dim(&self) -> usize {
        self.weight.shape()[1]
    }

    fn apply<'t>(w: Var<'t>, b: Var<'t>, x: Var<'t>) -> Result<Var<'t>> {
        x.matmul(w)?.add_row(b)
    }
}

/// First layer of an [`MlpModel`].
#[derive(Clone, Debug, PartialEq)]
pub enum InputLayer {
    Joint(Dense),
    /// Separate blocks for the monotone inputs and the remaining inputs;
    /// their outputs are concatenated (monotone block first).
    Split {
        monotone: Dense,
        other: Dense,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct MlpConfig {
    pub input_dim: usize,
    pub output_dim: usize,
    /// Number of dense layers, counting the output layer.
    pub depth: usize,
    pub hidden: usize,
    pub activation: Activation,
    pub split_input: bool,
    pub monotone: Vec<usize>,
}

impl MlpConfig {
    pub fn regression(input_dim: usize, monotone: Vec<usize>) -> Self {
        MlpConfig {
            input_dim,
            output_dim: 1,
            depth: 3,
            hidden: 100,
            activation: Activation::Relu,
            split_input: false,
            monotone,
        }
    }
}

/// A multilayer perceptron with an optional split first layer.
///
/// Hidden layers use `activation`; the last layer is linear unless
/// `activate_output` is set. With `activate_input` the activation is also
/// applied to the input before the first layer (used for classifier heads).
#[derive(Clone, Debug, PartialEq)]
pub struct MlpModel {
    input_dim: usize,
    monotone: Vec<usize>,
    activation: Activation,
    input: InputLayer,
    layers: Vec<Dense>,
    activate_input: bool,
    activate_output: bool,
}

/// Anything that maps a `[n, input_dim]` batch to `[n, output_dim]` on a tape.
pub trait Model {
    fn input_dim(&self) -> usize;

    fn output_dim(&self) -> usize;

    fn parameters(&self) -> Vec<&Tensor>;

    fn parameters_mut(&mut self) -> Vec<&mut Tensor>;

    /// Forward pass with parameters supplied as tape variables, in
    /// [`Model::parameters`] order.
    fn forward<'t>(&self, params: &[Var<'t>], x: Var<'t>) -> Result<Var<'t>>;

    /// Places the current parameters on `tape` as leaves.
    fn bind<'t>(&self, tape: &'t Tape) -> Result<Vec<Var<'t>>> {
        self.parameters().into_iter().map(|p| tape.var(p.clone())).collect()
    }

    fn as_sliced(&self) -> Option<&SlicedClassifier> {
        None
    }

    fn predict_batch(&self, x: &Tensor) -> Result<Tensor> {
        check_input(self.input_dim(), x)?;
        let tape = Tape::new();
        let params = self.bind(&tape)?;
        let xv = tape.constant(x.clone())?;
        let out = self.forward(&params, xv)?;
        Ok((*out.value()).clone())
    }

    fn predict(&self, x: &[f64]) -> Result<Vec<f64>> {
        let t = Tensor::matrix(1, x.len(), x.to_vec())?;
        Ok(self.predict_batch(&t)?.into_data())
    }

    fn num_parameters(&self) -> usize {
        self.parameters().iter().map(|p| p.len()).sum()
    }
}

pub(crate) fn check_input(input_dim: usize, x: &Tensor) -> Result<()> {
    if x.rank() != 2 || x.shape()[1] != input_dim {
        return Err(Error::ShapeMismatch {
            op: "model input",
            left: x.shape().to_vec(),
            right: vec![input_dim],
        });
    }
    Ok(())
}

fn validate_dims(dims: &[usize], bound: usize) -> Result<()> {
    let mut seen = vec![false; bound];
    for &d in dims {
        if d >= bound {
            return Err(Error::invalid(format!(
                "dimension {d} out of range for input width {bound}"
            )));
        }
        if std::mem::replace(&mut seen[d], true) {
            return Err(Error::invalid(format!("dimension {d} listed twice")));
        }
    }
    Ok(())
}

impl MlpModel {
    pub fn new<R: Rng + ?Sized>(config: &MlpConfig, rng: &mut R) -> Result<Self> {
        if config.depth == 0 || config.input_dim == 0 || config.output_dim == 0 {
            return Err(Error::invalid("depth, input and output widths must be positive"));
        }
        if config.depth > 1 && config.hidden == 0 {
            return Err(Error::invalid("hidden width must be positive"));
        }
        validate_dims(&config.monotone, config.input_dim)?;

        let widths: Vec<usize> = std::iter::once(config.input_dim)
            .chain(std::iter::repeat_n(config.hidden, config.depth - 1))
            .chain(std::iter::once(config.output_dim))
            .collect();

        let input = if config.split_input {
            let m = config.monotone.len();
            if config.depth < 2 || m == 0 || m == config.input_dim {
                return Err(Error::invalid(
                    "split input needs depth >= 2 and a proper, nonempty monotone set",
                ));
            }
            if config.hidden < 2 {
                return Err(Error::invalid("split input needs hidden width >= 2"));
            }
            let mono_width = config.hidden.div_ceil(2);
            InputLayer::Split {
                monotone: Dense::glorot(m, mono_width, rng),
                other: Dense::glorot(config.input_dim - m, config.hidden - mono_width, rng),
            }
        } else {
            InputLayer::Joint(Dense::glorot(widths[0], widths[1], rng))
        };
        let layers = widths[1..].windows(2).map(|w| Dense::glorot(w[0], w[1], rng)).collect();

        Ok(MlpModel {
            input_dim: config.input_dim,
            monotone: config.monotone.clone(),
            activation: config.activation,
            input,
            layers,
            activate_input: false,
            activate_output: false,
        })
    }

    /// Builds a model from explicit layers. The first entry is the input
    /// layer; activations apply between layers.
    pub fn from_layers(
        input: InputLayer,
        layers: Vec<Dense>,
        activation: Activation,
        monotone: Vec<usize>,
    ) -> Result<Self> {
        let (input_dim, mut width) = match &input {
            InputLayer::Joint(d) => (d.in_dim(), d.out_dim()),
            InputLayer::Split { monotone: m, other } => {
                if m.in_dim() != monotone.len() {
                    return Err(Error::invalid("monotone block width must equal the monotone set size"));
                }
                (m.in_dim() + other.in_dim(), m.out_dim() + other.out_dim())
            }
        };
        validate_dims(&monotone, input_dim)?;
        for layer in &layers {
            if layer.in_dim() != width {
                return Err(Error::ShapeMismatch {
                    op: "layer chain",
                    left: vec![width],
                    right: layer.weight.shape().to_vec(),
                });
            }
            width = layer.out_dim();
        }
        Ok(MlpModel {
            input_dim,
            monotone,
            activation,
            input,
            layers,
            activate_input: false,
            activate_output: false,
        })
    }

    /// Single linear layer `x · w + bias` with one output.
    pub fn linear(weights: &[f64], bias: f64) -> Result<Self> {
        let layer = Dense::new(
            Tensor::matrix(weights.len(), 1, weights.to_vec())?,
            Tensor::vector(vec![bias]),
        )?;
        Self::from_layers(InputLayer::Joint(layer), Vec::new(), Activation::Relu, Vec::new())
    }

    pub fn with_activated_output(mut self, on: bool) -> Self {
        self.activate_output = on;
        self
    }

    pub fn activates_output(&self) -> bool {
        self.activate_output
    }

    pub fn with_activated_input(mut self, on: bool) -> Self {
        self.activate_input = on;
        self
    }

    pub fn activates_input(&self) -> bool {
        self.activate_input
    }

    pub fn monotone(&self) -> &[usize] {
        &self.monotone
    }

    pub fn set_monotone(&mut self, dims: Vec<usize>) -> Result<()> {
        validate_dims(&dims, self.input_dim)?;
        if let InputLayer::Split { monotone, .. } = &self.input {
            if monotone.in_dim() != dims.len() {
                return Err(Error::invalid("split model monotone set has fixed size"));
            }
        }
        self.monotone = dims;
        Ok(())
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn is_split(&self) -> bool {
        matches!(self.input, InputLayer::Split { .. })
    }

    pub fn input_layer(&self) -> &InputLayer {
        &self.input
    }

    pub fn input_layer_mut(&mut self) -> &mut InputLayer {
        &mut self.input
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    /// Input dimensions outside the monotone set, ascending.
    pub fn other_dims(&self) -> Vec<usize> {
        (0..self.input_dim).filter(|d| !self.monotone.contains(d)).collect()
    }

    fn depth(&self) -> usize {
        1 + self.layers.len()
    }
}

impl Model for MlpModel {
    fn input_dim(&self) -> usize {
        self.input_dim
    }

    fn output_dim(&self) -> usize {
        match (self.layers.last(), &self.input) {
            (Some(l), _) => l.out_dim(),
            (None, InputLayer::Joint(d)) => d.out_dim(),
            (None, InputLayer::Split { monotone, other }) => monotone.out_dim() + other.out_dim(),
        }
    }

    fn parameters(&self) -> Vec<&Tensor> {
        let mut out = match &self.input {
            InputLayer::Joint(d) => vec![&d.weight, &d.bias],
            InputLayer::Split { monotone, other } => {
                vec![&monotone.weight, &monotone.bias, &other.weight, &other.bias]
            }
        };
        for l in &self.layers {
            out.push(&l.weight);
            out.push(&l.bias);
        }
        out
    }

    fn parameters_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = match &mut self.input {
            InputLayer::Joint(d) => vec![&mut d.weight, &mut d.bias],
            InputLayer::Split { monotone, other } => vec![
                &mut monotone.weight,
                &mut monotone.bias,
                &mut other.weight,
                &mut other.bias,
            ],
        };
        for l in &mut self.layers {
            out.push(&mut l.weight);
            out.push(&mut l.bias);
        }
        out
    }

    fn forward<'t>(&self, params: &[Var<'t>], x: Var<'t>) -> Result<Var<'t>> {
        let shape = x.shape();
        if shape.len() != 2 || shape[1] != self.input_dim {
            return Err(Error::ShapeMismatch {
                op: "model input",
                left: shape,
                right: vec![self.input_dim],
            });
        }
        let depth = self.depth();
        let act = |h: Var<'t>, layer: usize| {
            if layer + 1 < depth || self.activate_output {
                self.activation.apply(h)
            } else {
                Ok(h)
            }
        };
        let x = if self.activate_input {
            self.activation.apply(x)?
        } else {
            x
        };
        let (mut h, mut p) = match &self.input {
            InputLayer::Joint(_) => (Dense::apply(params[0], params[1], x)?, 2),
            InputLayer::Split { .. } => {
                let xm = x.select_cols(&self.monotone)?;
                let xo = x.select_cols(&self.other_dims())?;
                let hm = Dense::apply(params[0], params[1], xm)?;
                let ho = Dense::apply(params[2], params[3], xo)?;
                (Var::concat_cols(&[hm, ho])?, 4)
            }
        };
        h = act(h, 0)?;
        for i in 0..self.layers.len() {
            h = Dense::apply(params[p], params[p + 1], h)?;
            h = act(h, i + 1)?;
            p += 2;
        }
        Ok(h)
    }
}

/// Gradients of the model output with respect to the input columns `dims`,
/// as a `[n, dims.len()]` tape node that stays differentiable with respect
/// to `params`.
///
/// `component` selects an output column of a multi-output model; a
/// single-output model may pass `None`.
pub fn input_gradients_on<'t, M: Model + ?Sized>(
    model: &M,
    params: &[Var<'t>],
    x: Var<'t>,
    dims: &[usize],
    component: Option<usize>,
) -> Result<Var<'t>> {
    validate_dims(dims, model.input_dim())?;
    let out = model.forward(params, x)?;
    let scalar_out = match component {
        None if model.output_dim() == 1 => out,
        None => {
            return Err(Error::invalid(
                "input gradients of a multi-output model need a selected component",
            ))
        }
        Some(k) if k < model.output_dim() => out.slice_cols(k, 1)?,
        Some(k) => return Err(Error::invalid(format!("output component {k} out of range"))),
    };
    // Rows are independent, so the gradient of the summed output is the
    // per-row input gradient.
    let total = scalar_out.sum()?;
    let g = x.tape().grad(total, &[x])?[0];
    g.select_cols(dims)
}

/// Evaluates `∂h(x)/∂x_i` for `i` in `dims` at a single point.
pub fn input_gradients<M: Model + ?Sized>(model: &M, x: &[f64], dims: &[usize]) -> Result<Vec<f64>> {
    let t = Tensor::matrix(1, x.len(), x.to_vec())?;
    Ok(input_gradients_batch(model, &t, dims)?.into_data())
}

/// Per-row input gradients for a `[n, D]` batch, returned as `[n, dims.len()]`.
pub fn input_gradients_batch<M: Model + ?Sized>(model: &M, x: &Tensor, dims: &[usize]) -> Result<Tensor> {
    check_input(model.input_dim(), x)?;
    let tape = Tape::new();
    let params = model.bind(&tape)?;
    let xv = tape.var(x.clone())?;
    let g = input_gradients_on(model, &params, xv, dims, None)?;
    Ok((*g.value()).clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn linear_prediction_is_dot_product() {
        let m = MlpModel::linear(&[2.0, -1.0], 0.0).unwrap();
        assert_eq!(m.predict(&[1.0, 1.0]).unwrap(), vec![1.0]);
    }

    #[test]
    fn zero_weights_give_bias() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let cfg = MlpConfig {
            input_dim: 3,
            output_dim: 2,
            depth: 3,
            hidden: 5,
            activation: Activation::Tanh,
            split_input: false,
            monotone: vec![],
        };
        let mut m = MlpModel::new(&cfg, &mut rng).unwrap();
        let n = m.parameters().len();
        for (i, p) in m.parameters_mut().into_iter().enumerate() {
            let v = if i + 1 == n { 0.25 } else { 0.0 };
            p.data_mut().iter_mut().for_each(|x| *x = v);
        }
        assert_eq!(m.predict(&[9.0, -4.0, 1.5]).unwrap(), vec![0.25, 0.25]);
    }

    #[test]
    fn identity_relu_layer_clamps_negative() {
        let layer = Dense::new(Tensor::matrix(1, 1, vec![1.0]).unwrap(), Tensor::vector(vec![0.0])).unwrap();
        let m = MlpModel::from_layers(InputLayer::Joint(layer), Vec::new(), Activation::Relu, vec![])
            .unwrap()
            .with_activated_output(true);
        assert_eq!(m.predict(&[-3.0]).unwrap(), vec![0.0]);
    }

    #[test]
    fn wrong_input_width_is_rejected() {
        let m = MlpModel::linear(&[2.0, -1.0], 0.0).unwrap();
        assert!(matches!(m.predict(&[1.0]), Err(Error::ShapeMismatch { .. })));
    }

    #[test]
    fn linear_input_gradients() {
        let m = MlpModel::linear(&[-2.0, 3.0], 0.5).unwrap();
        assert_eq!(input_gradients(&m, &[0.3, 0.7], &[0, 1]).unwrap(), vec![-2.0, 3.0]);
    }

    #[test]
    fn multi_output_needs_component() {
        let layer = Dense::new(Tensor::matrix(1, 2, vec![1.0, 2.0]).unwrap(), Tensor::zeros(&[2])).unwrap();
        let m = MlpModel::from_layers(InputLayer::Joint(layer), vec![], Activation::Relu, vec![]).unwrap();
        assert!(input_gradients(&m, &[1.0], &[0]).is_err());
        let tape = Tape::new();
        let p = m.bind(&tape).unwrap();
        let x = tape.var(Tensor::matrix(1, 1, vec![1.0]).unwrap()).unwrap();
        let g = input_gradients_on(&m, &p, x, &[0], Some(1)).unwrap();
        assert_eq!(g.value().data(), &[2.0]);
    }

    #[test]
    fn layer_widths_chain() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let cfg = MlpConfig {
            split_input: true,
            hidden: 7,
            ..MlpConfig::regression(5, vec![1, 3])
        };
        let m = MlpModel::new(&cfg, &mut rng).unwrap();
        let shapes: Vec<Vec<usize>> = m.parameters().iter().map(|p| p.shape().to_vec()).collect();
        assert_eq!(
            shapes,
            vec![
                vec![2, 4],
                vec![4],
                vec![3, 3],
                vec![3],
                vec![7, 7],
                vec![7],
                vec![7, 1],
                vec![1]
            ]
        );
        assert_eq!(m.output_dim(), 1);
    }

    #[test]
    fn split_model_with_zeroed_other_block_ignores_other_inputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let cfg = MlpConfig {
            split_input: true,
            hidden: 8,
            activation: Activation::Tanh,
            ..MlpConfig::regression(6, vec![0, 4])
        };
        let mut m = MlpModel::new(&cfg, &mut rng).unwrap();
        if let InputLayer::Split { other, .. } = m.input_layer_mut() {
            other.weight.data_mut().iter_mut().for_each(|w| *w = 0.0);
        }
        let base = [0.3, -1.0, 2.0, 0.5, -0.7, 1.1];
        let y0 = m.predict(&base).unwrap()[0];
        for d in [1, 2, 3, 5] {
            let mut x = base;
            x[d] += 17.0;
            let y = m.predict(&x).unwrap()[0];
            assert!((y - y0).abs() <= 1e-12, "dim {d}: {y} vs {y0}");
        }
        let mut x = base;
        x[0] += 1.0;
        assert!((m.predict(&x).unwrap()[0] - y0).abs() > 1e-6);
    }

    #[test]
    fn split_requires_proper_monotone_set() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let all = MlpConfig {
            split_input: true,
            ..MlpConfig::regression(2, vec![0, 1])
        };
        assert!(MlpModel::new(&all, &mut rng).is_err());
        let dup = MlpConfig::regression(3, vec![1, 1]);
        assert!(MlpModel::new(&dup, &mut rng).is_err());
    }
}
