use rand::Rng;

use super::{check_input, Activation, MlpConfig, MlpModel, Model};
use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Partition of a width-`W` layer into `classes` contiguous slices of
/// `⌊W / classes⌋` units each. Slice `k` belongs to class `k`; any leftover
/// units at the end belong to no slice.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SliceLayout {
    pub classes: usize,
    pub width: usize,
}

impl SliceLayout {
    pub fn new(width: usize, classes: usize) -> Result<Self> {
        if classes < 2 {
            return Err(Error::invalid("a sliced layer needs at least two classes"));
        }
        if width < classes {
            return Err(Error::invalid(format!(
                "layer width {width} is smaller than the class count {classes}"
            )));
        }
        Ok(SliceLayout { classes, width })
    }

    pub fn slice_size(&self) -> usize {
        self.width / self.classes
    }

    pub fn range(&self, class: usize) -> std::ops::Range<usize> {
        let s = self.slice_size();
        class * s..(class + 1) * s
    }
}

/// `T_k = Σ_{w ∈ S_k} a_w` for one activation vector.
pub fn slice_totals_from_activations(acts: &[f64], layout: SliceLayout) -> Result<Vec<f64>> {
    if acts.len() != layout.width {
        return Err(Error::ShapeMismatch {
            op: "slice totals",
            left: vec![acts.len()],
            right: vec![layout.width],
        });
    }
    Ok((0..layout.classes)
        .map(|k| acts[layout.range(k)].iter().sum())
        .collect())
}

#[derive(Clone, Debug, PartialEq)]
pub struct SlicedConfig {
    pub input_dim: usize,
    pub classes: usize,
    /// Dense layers in the trunk; the pre-activation output of the last one
    /// is the sliced layer.
    pub trunk_depth: usize,
    pub trunk_hidden: usize,
    /// Width `W` of the sliced layer.
    pub slice_layer_width: usize,
    /// Hidden width of the head. The head first applies the activation to
    /// the sliced layer; with 0 it is then a single linear map.
    pub head_hidden: usize,
    pub activation: Activation,
}

impl SlicedConfig {
    pub fn new(input_dim: usize, classes: usize) -> Self {
        SlicedConfig {
            input_dim,
            classes,
            trunk_depth: 2,
            trunk_hidden: 64,
            slice_layer_width: 16 * classes,
            head_hidden: 0,
            activation: Activation::Relu,
        }
    }
}

/// A classifier whose trunk ends in a slice-partitioned linear layer
/// followed by a head (activation, then dense layers) producing one logit
/// per class. `T_k` and `O_k` are taken at the pre-activation sliced layer,
/// so each unit's gate ties its slice total to its contribution to the
/// logits.
#[derive(Clone, Debug, PartialEq)]
pub struct SlicedClassifier {
    trunk: MlpModel,
    head: MlpModel,
    layout: SliceLayout,
}

impl SlicedClassifier {
    pub fn new<R: Rng + ?Sized>(config: &SlicedConfig, rng: &mut R) -> Result<Self> {
        let trunk = MlpModel::new(
            &MlpConfig {
                input_dim: config.input_dim,
                output_dim: config.slice_layer_width,
                depth: config.trunk_depth,
                hidden: config.trunk_hidden,
                activation: config.activation,
                split_input: false,
                monotone: Vec::new(),
            },
            rng,
        )?;
        let head = MlpModel::new(
            &MlpConfig {
                input_dim: config.slice_layer_width,
                output_dim: config.classes,
                depth: if config.head_hidden == 0 { 1 } else { 2 },
                hidden: config.head_hidden,
                activation: config.activation,
                split_input: false,
                monotone: Vec::new(),
            },
            rng,
        )?
        .with_activated_input(true);
        Self::from_parts(trunk, head, config.classes)
    }

    /// Assembles a classifier from a trunk (whose output is the sliced
    /// layer) and a head mapping that layer to `classes` logits.
    pub fn from_parts(trunk: MlpModel, head: MlpModel, classes: usize) -> Result<Self> {
        let width = trunk.output_dim();
        if head.input_dim() != width || head.output_dim() != classes {
            return Err(Error::ShapeMismatch {
                op: "sliced classifier",
                left: vec![width, classes],
                right: vec![head.input_dim(), head.output_dim()],
            });
        }
        Ok(SlicedClassifier {
            trunk,
            head,
            layout: SliceLayout::new(width, classes)?,
        })
    }

    pub fn layout(&self) -> SliceLayout {
        self.layout
    }

    pub fn classes(&self) -> usize {
        self.layout.classes
    }

    pub fn trunk(&self) -> &MlpModel {
        &self.trunk
    }

    pub fn head(&self) -> &MlpModel {
        &self.head
    }

    fn split_params<'a, 't>(&self, params: &'a [Var<'t>]) -> (&'a [Var<'t>], &'a [Var<'t>]) {
        params.split_at(self.trunk.parameters().len())
    }

    /// Sliced-layer activations `[n, W]` and logits `[n, K]`.
    pub fn forward_parts<'t>(&self, params: &[Var<'t>], x: Var<'t>) -> Result<(Var<'t>, Var<'t>)> {
        let (tp, hp) = self.split_params(params);
        let acts = self.trunk.forward(tp, x)?;
        let logits = self.head.forward(hp, acts)?;
        Ok((acts, logits))
    }

    /// `O_k = Σ_{w ∈ S_k} ∂h_k/∂a_w` for every row, as a `[n, K]` node that
    /// remains differentiable with respect to the parameters.
    pub fn slice_total_gradients_on<'t>(&self, acts: Var<'t>, logits: Var<'t>) -> Result<Var<'t>> {
        let tape = acts.tape();
        let size = self.layout.slice_size();
        let mut cols = Vec::with_capacity(self.layout.classes);
        for k in 0..self.layout.classes {
            let total = logits.slice_cols(k, 1)?.sum()?;
            let g = tape.grad(total, &[acts])?[0];
            cols.push(g.slice_cols(k * size, size)?.sum_cols()?);
        }
        Var::concat_cols(&cols)
    }

    /// `T_k` for every row of a batch, `[n, K]`.
    pub fn slice_totals_batch(&self, x: &Tensor) -> Result<Tensor> {
        let acts = self.trunk.predict_batch(x)?;
        let rows: Vec<Vec<f64>> = (0..acts.rows())
            .map(|i| slice_totals_from_activations(acts.row(i), self.layout))
            .collect::<Result<_>>()?;
        Tensor::new(
            vec![rows.len(), self.layout.classes],
            rows.into_iter().flatten().collect(),
        )
    }

    pub fn slice_total_activation(&self, x: &[f64]) -> Result<Vec<f64>> {
        let t = Tensor::matrix(1, x.len(), x.to_vec())?;
        Ok(self.slice_totals_batch(&t)?.into_data())
    }

    /// `O_k` values for every row of a batch, `[n, K]`.
    pub fn slice_total_gradients_batch(&self, x: &Tensor) -> Result<Tensor> {
        check_input(self.input_dim(), x)?;
        let tape = Tape::new();
        let params = self.bind(&tape)?;
        let xv = tape.constant(x.clone())?;
        let (acts, logits) = self.forward_parts(&params, xv)?;
        let o = self.slice_total_gradients_on(acts, logits)?;
        Ok((*o.value()).clone())
    }

    pub fn slice_total_gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        let t = Tensor::matrix(1, x.len(), x.to_vec())?;
        Ok(self.slice_total_gradients_batch(&t)?.into_data())
    }
}

impl Model for SlicedClassifier {
    fn input_dim(&self) -> usize {
        self.trunk.input_dim()
    }

    fn output_dim(&self) -> usize {
        self.layout.classes
    }

    fn parameters(&self) -> Vec<&Tensor> {
        let mut p = self.trunk.parameters();
        p.extend(self.head.parameters());
        p
    }

    fn parameters_mut(&mut self) -> Vec<&mut Tensor> {
        let mut p = self.trunk.parameters_mut();
        p.extend(self.head.parameters_mut());
        p
    }

    fn forward<'t>(&self, params: &[Var<'t>], x: Var<'t>) -> Result<Var<'t>> {
        Ok(self.forward_parts(params, x)?.1)
    }

    fn as_sliced(&self) -> Option<&SlicedClassifier> {
        Some(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{Dense, InputLayer};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Trunk = identity on a width-`w` input (ReLU-activated), head
    /// `h_k = c · T_k`.
    fn summing_classifier(w: usize, classes: usize, c: f64) -> SlicedClassifier {
        let mut eye = vec![0.0; w * w];
        for i in 0..w {
            eye[i * w + i] = 1.0;
        }
        let trunk_layer = Dense::new(Tensor::matrix(w, w, eye).unwrap(), Tensor::zeros(&[w])).unwrap();
        let trunk = MlpModel::from_layers(InputLayer::Joint(trunk_layer), vec![], Activation::Relu, vec![])
            .unwrap()
            .with_activated_output(true);
        let layout = SliceLayout::new(w, classes).unwrap();
        let mut head_w = vec![0.0; w * classes];
        for k in 0..classes {
            for u in layout.range(k) {
                head_w[u * classes + k] = c;
            }
        }
        let head_layer = Dense::new(Tensor::matrix(w, classes, head_w).unwrap(), Tensor::zeros(&[classes])).unwrap();
        let head = MlpModel::from_layers(InputLayer::Joint(head_layer), vec![], Activation::Relu, vec![]).unwrap();
        SlicedClassifier::from_parts(trunk, head, classes).unwrap()
    }

    #[test]
    fn totals_sum_each_slice() {
        let layout = SliceLayout::new(4, 2).unwrap();
        assert_eq!(
            slice_totals_from_activations(&[0.5, 0.5, 1.0, 2.0], layout).unwrap(),
            vec![1.0, 3.0]
        );
        assert_eq!(
            slice_totals_from_activations(&[0.0; 4], layout).unwrap(),
            vec![0.0, 0.0]
        );
        assert_eq!(
            slice_totals_from_activations(&[0.5, 0.5, 2.0, 1.0], layout).unwrap(),
            vec![1.0, 3.0]
        );
    }

    #[test]
    fn leftover_units_belong_to_no_slice() {
        let layout = SliceLayout::new(7, 3).unwrap();
        assert_eq!(layout.slice_size(), 2);
        assert_eq!(layout.range(2), 4..6);
        let t = slice_totals_from_activations(&[1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 100.0], layout).unwrap();
        assert_eq!(t, vec![2.0, 2.0, 2.0]);
    }

    #[test]
    fn model_totals_match_direct_activations() {
        let m = summing_classifier(4, 2, 1.0);
        assert_eq!(m.slice_total_activation(&[0.5, 0.5, 1.0, 2.0]).unwrap(), vec![1.0, 3.0]);
    }

    #[test]
    fn total_gradient_of_summing_head_is_slice_size() {
        let m = summing_classifier(10, 2, 1.0);
        let x: Vec<f64> = (0..10).map(|i| i as f64 * 0.1 - 0.3).collect();
        assert_eq!(m.slice_total_gradient(&x).unwrap(), vec![5.0, 5.0]);
        let scaled = summing_classifier(10, 2, -2.5);
        assert_eq!(scaled.slice_total_gradient(&x).unwrap(), vec![-12.5, -12.5]);
    }

    #[test]
    fn shape_errors() {
        let m = summing_classifier(4, 2, 1.0);
        assert!(m.slice_total_activation(&[1.0]).is_err());
        assert!(slice_totals_from_activations(&[1.0], m.layout()).is_err());
        assert!(SliceLayout::new(3, 1).is_err());
        assert!(SliceLayout::new(3, 4).is_err());
    }

    #[test]
    fn parameter_order_is_trunk_then_head() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let m = SlicedClassifier::new(&SlicedConfig::new(3, 4), &mut rng).unwrap();
        let n_trunk = m.trunk().parameters().len();
        assert_eq!(m.parameters().len(), n_trunk + m.head().parameters().len());
        assert_eq!(m.output_dim(), 4);
        assert_eq!(m.parameters()[n_trunk].shape(), &[64, 4]);
    }
}
