//! Small differentiable classifiers: linear softmax and one hidden ReLU layer.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::losses::{softmax, CompositeLoss, GradeLabel};
use crate::metrics::PredictionSet;
use crate::{math, rng};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    LinearSoftmax,
    OneHiddenLayer,
}

/// Dense affine map `y = W x + b`, `W` stored row-major (`outputs x inputs`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub outputs: usize,
    pub inputs: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Layer {
    fn zeros(outputs: usize, inputs: usize) -> Self {
        Layer { outputs, inputs, weight: vec![0.0; outputs * inputs], bias: vec![0.0; outputs] }
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.weight
            .chunks(self.inputs)
            .zip(&self.bias)
            .map(|(row, b)| row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + b)
            .collect()
    }

    fn check(&self) -> Result<()> {
        if self.weight.len() != self.outputs * self.inputs {
            return Err(Error::InvalidDimension {
                what: "layer weight",
                expected: self.outputs * self.inputs,
                got: self.weight.len(),
            });
        }
        if self.bias.len() != self.outputs {
            return Err(Error::InvalidDimension { what: "layer bias", expected: self.outputs, got: self.bias.len() });
        }
        if self.weight.iter().chain(&self.bias).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite model parameter".into()));
        }
        Ok(())
    }
}

/// Classifier parameters. A linear model has one layer (`C x D`); the hidden
/// model has `H x D` followed by `C x H`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ModelRepr", into = "ModelRepr")]
pub struct Model {
    kind: ModelKind,
    input_dim: usize,
    hidden_dim: usize,
    num_classes: usize,
    layers: Vec<Layer>,
}

#[derive(Serialize, Deserialize)]
struct ModelRepr {
    kind: ModelKind,
    input_dim: usize,
    hidden_dim: usize,
    num_classes: usize,
    layers: Vec<Layer>,
}

impl TryFrom<ModelRepr> for Model {
    type Error = Error;
    fn try_from(r: ModelRepr) -> Result<Self> {
        Model::from_layers(r.kind, r.input_dim, r.hidden_dim, r.num_classes, r.layers)
    }
}

impl From<Model> for ModelRepr {
    fn from(m: Model) -> Self {
        ModelRepr {
            kind: m.kind,
            input_dim: m.input_dim,
            hidden_dim: m.hidden_dim,
            num_classes: m.num_classes,
            layers: m.layers,
        }
    }
}

fn layer_shapes(kind: ModelKind, d: usize, h: usize, c: usize) -> Result<Vec<(usize, usize)>> {
    if d == 0 {
        return Err(Error::InvalidDimension { what: "input dimension", expected: 1, got: 0 });
    }
    if c < 2 {
        return Err(Error::InvalidDimension { what: "class count", expected: 2, got: c });
    }
    match kind {
        ModelKind::LinearSoftmax if h != 0 => {
            Err(Error::InvalidDimension { what: "hidden dimension of a linear model", expected: 0, got: h })
        }
        ModelKind::LinearSoftmax => Ok(vec![(c, d)]),
        ModelKind::OneHiddenLayer if h == 0 => {
            Err(Error::InvalidDimension { what: "hidden dimension", expected: 1, got: 0 })
        }
        ModelKind::OneHiddenLayer => Ok(vec![(h, d), (c, h)]),
    }
}

impl Model {
    /// Weights uniform in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`, zero biases.
    pub fn init(kind: ModelKind, input_dim: usize, hidden_dim: usize, num_classes: usize, seed: u64) -> Result<Self> {
        let shapes = layer_shapes(kind, input_dim, hidden_dim, num_classes)?;
        let mut rng = rng::seeded(seed);
        let layers = shapes
            .into_iter()
            .map(|(out, inp)| {
                let bound = 1.0 / math::sqrt(inp as f64);
                let mut layer = Layer::zeros(out, inp);
                layer.weight.iter_mut().for_each(|w| *w = rng.random_range(-bound..=bound));
                layer
            })
            .collect();
        Ok(Model { kind, input_dim, hidden_dim, num_classes, layers })
    }

    /// All-zero parameters.
    pub fn zeros(kind: ModelKind, input_dim: usize, hidden_dim: usize, num_classes: usize) -> Result<Self> {
        let layers = layer_shapes(kind, input_dim, hidden_dim, num_classes)?
            .into_iter()
            .map(|(o, i)| Layer::zeros(o, i))
            .collect();
        Ok(Model { kind, input_dim, hidden_dim, num_classes, layers })
    }

    /// Validated construction from explicit layers.
    pub fn from_layers(
        kind: ModelKind,
        input_dim: usize,
        hidden_dim: usize,
        num_classes: usize,
        layers: Vec<Layer>,
    ) -> Result<Self> {
        let shapes = layer_shapes(kind, input_dim, hidden_dim, num_classes)?;
        if shapes.len() != layers.len() {
            return Err(Error::InvalidDimension { what: "layer count", expected: shapes.len(), got: layers.len() });
        }
        for ((out, inp), layer) in shapes.into_iter().zip(&layers) {
            if layer.outputs != out || layer.inputs != inp {
                return Err(Error::InvalidInput(format!(
                    "layer shape {}x{} does not match expected {out}x{inp}",
                    layer.outputs, layer.inputs
                )));
            }
            layer.check()?;
        }
        Ok(Model { kind, input_dim, hidden_dim, num_classes, layers })
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn hidden_dim(&self) -> usize {
        self.hidden_dim
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim {
            return Err(Error::InvalidDimension { what: "feature vector", expected: self.input_dim, got: x.len() });
        }
        Ok(())
    }

    /// Logits for one feature vector.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        Ok(match self.kind {
            ModelKind::LinearSoftmax => self.layers[0].apply(x),
            ModelKind::OneHiddenLayer => {
                let mut h = self.layers[0].apply(x);
                h.iter_mut().for_each(|v| *v = v.max(0.0));
                self.layers[1].apply(&h)
            }
        })
    }

    /// Loss value and parameter gradient for one example.
    pub fn loss_and_gradient(&self, x: &[f64], y: GradeLabel, loss: &CompositeLoss) -> Result<(f64, Gradient)> {
        self.check_input(x)?;
        let mut grad = Gradient::zeros_like(self);
        let (value, dz, hidden) = match self.kind {
            ModelKind::LinearSoftmax => {
                let z = self.layers[0].apply(x);
                let lv = loss.evaluate(&z, y)?;
                (lv.value, lv.gradient.unwrap_or_default(), None)
            }
            ModelKind::OneHiddenLayer => {
                let mut h = self.layers[0].apply(x);
                h.iter_mut().for_each(|v| *v = v.max(0.0));
                let z = self.layers[1].apply(&h);
                let lv = loss.evaluate(&z, y)?;
                (lv.value, lv.gradient.unwrap_or_default(), Some(h))
            }
        };
        match hidden {
            None => outer_into(&mut grad.layers[0], &dz, x),
            Some(h) => {
                outer_into(&mut grad.layers[1], &dz, &h);
                let top = &self.layers[1];
                // back through W2 and the ReLU (inactive units have h == 0)
                let dh: Vec<f64> = (0..top.inputs)
                    .map(|k| {
                        if h[k] > 0.0 {
                            (0..top.outputs).map(|c| top.weight[c * top.inputs + k] * dz[c]).sum()
                        } else {
                            0.0
                        }
                    })
                    .collect();
                outer_into(&mut grad.layers[0], &dh, x);
            }
        }
        Ok((value, grad))
    }

    /// `params -= scale * grad`.
    pub fn step(&mut self, grad: &Gradient, scale: f64) {
        for (p, g) in self.params_mut().zip(grad.values()) {
            *p -= scale * g;
        }
    }

    /// Every weight and bias, layer by layer (weights before biases).
    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers.iter_mut().flat_map(|l| l.weight.iter_mut().chain(l.bias.iter_mut()))
    }

    pub fn params(&self) -> impl Iterator<Item = f64> + '_ {
        self.layers.iter().flat_map(|l| l.weight.iter().chain(&l.bias).copied())
    }

    pub fn predict_proba(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(softmax(&self.forward(x)?)?.into_inner())
    }

    /// Class probabilities for every row of `data`, paired with its labels.
    pub fn predict(&self, data: &Dataset) -> Result<PredictionSet> {
        if data.num_classes() != self.num_classes {
            return Err(Error::InvalidDimension {
                what: "dataset class count",
                expected: self.num_classes,
                got: data.num_classes(),
            });
        }
        let mut probs = Vec::with_capacity(data.len() * self.num_classes);
        for i in 0..data.len() {
            probs.extend(self.predict_proba(data.row(i))?);
        }
        PredictionSet::new(self.num_classes, data.labels().to_vec(), probs)
    }
}

fn outer_into(layer: &mut Layer, delta: &[f64], input: &[f64]) {
    for (r, d) in delta.iter().enumerate() {
        for (w, v) in layer.weight[r * layer.inputs..(r + 1) * layer.inputs].iter_mut().zip(input) {
            *w += d * v;
        }
        layer.bias[r] += d;
    }
}

/// Parameter gradient with the same layout as a [`Model`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    layers: Vec<Layer>,
}

impl Gradient {
    pub fn zeros_like(model: &Model) -> Self {
        Gradient { layers: model.layers.iter().map(|l| Layer::zeros(l.outputs, l.inputs)).collect() }
    }

    pub fn add(&mut self, other: &Gradient) {
        for (a, b) in self.values_mut().zip(other.values()) {
            *a += b;
        }
    }

    /// Same order as [`Model::params`].
    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.layers.iter().flat_map(|l| l.weight.iter().chain(&l.bias).copied())
    }

    fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers.iter_mut().flat_map(|l| l.weight.iter_mut().chain(l.bias.iter_mut()))
    }
}
