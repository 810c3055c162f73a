//! Fully-connected classification head over frozen proposal features.

mod gradcheck;
pub mod loss;
mod optim;

use ndarray::{Array1, Array2, ArrayView1, Axis, Zip};
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::synth::SynthDataset;
use crate::types::PredictionVector;

pub use gradcheck::grad_check;
pub use loss::{Loss, LossConfig, LossKind};
pub use optim::{sgd_step, OptState};

/// Layer widths of a head: `input -> hidden... -> outputs`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeadSpec {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    /// `C + 1`, background included.
    pub num_outputs: usize,
}

impl HeadSpec {
    pub fn new(input_dim: usize, hidden: Vec<usize>, num_outputs: usize) -> Self {
        Self {
            input_dim,
            hidden,
            num_outputs,
        }
    }

    pub fn num_layers(&self) -> usize {
        self.hidden.len() + 1
    }

    fn dims(&self) -> Vec<usize> {
        let mut dims = vec![self.input_dim];
        dims.extend(&self.hidden);
        dims.push(self.num_outputs);
        dims
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    /// `outputs x inputs`.
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Layer {
    pub fn zeros(outputs: usize, inputs: usize) -> Self {
        Self {
            weight: Array2::zeros((outputs, inputs)),
            bias: Array1::zeros(outputs),
        }
    }

    pub fn num_params(&self) -> usize {
        self.weight.len() + self.bias.len()
    }
}

/// Head weights. Hidden layers use a rectifier; the last layer emits logits.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadParams {
    pub layers: Vec<Layer>,
}

/// Activations kept for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardPass {
    /// Input of every layer; `inputs[0]` is the feature batch.
    pub inputs: Vec<Array2<f64>>,
    pub logits: Array2<f64>,
}

impl ForwardPass {
    pub fn probabilities(&self) -> Array2<f64> {
        let mut probs = self.logits.clone();
        for mut row in probs.rows_mut() {
            let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
            row.mapv_inplace(|v| (v - max).exp());
            let sum = row.sum();
            row /= sum;
        }
        probs
    }
}

/// Features and labels of a training batch.
#[derive(Debug, Clone)]
pub struct Batch {
    pub features: Array2<f64>,
    pub labels: Vec<usize>,
}

impl Batch {
    pub fn new(features: Array2<f64>, labels: Vec<usize>) -> Result<Self> {
        if features.nrows() != labels.len() {
            return Err(Error::DimensionMismatch {
                expected: features.nrows(),
                actual: labels.len(),
            });
        }
        Ok(Self { features, labels })
    }

    pub fn from_proposals(dataset: &SynthDataset, indices: &[usize]) -> Self {
        let dim = dataset.feature_dim();
        let mut features = Array2::zeros((indices.len(), dim));
        let mut labels = Vec::with_capacity(indices.len());
        for (row, &i) in indices.iter().enumerate() {
            let p = &dataset.proposals[i];
            features
                .row_mut(row)
                .assign(&ArrayView1::from(p.features.as_slice()));
            labels.push(p.assigned_label);
        }
        Self { features, labels }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

impl HeadParams {
    /// He-normal weights, zero biases.
    pub fn init(spec: &HeadSpec, rng: &mut Rng) -> Self {
        let dims = spec.dims();
        let layers = dims
            .windows(2)
            .map(|w| {
                let (inputs, outputs) = (w[0], w[1]);
                let normal = Normal::new(0.0, (2.0 / inputs as f64).sqrt()).expect("finite std");
                Layer {
                    weight: Array2::from_shape_simple_fn((outputs, inputs), || normal.sample(rng)),
                    bias: Array1::zeros(outputs),
                }
            })
            .collect();
        Self { layers }
    }

    pub fn zeros(spec: &HeadSpec) -> Self {
        let dims = spec.dims();
        Self {
            layers: dims.windows(2).map(|w| Layer::zeros(w[1], w[0])).collect(),
        }
    }

    /// Zero-valued parameters of the same shape.
    pub fn zeros_like(&self) -> Self {
        Self {
            layers: self
                .layers
                .iter()
                .map(|l| Layer::zeros(l.weight.nrows(), l.weight.ncols()))
                .collect(),
        }
    }

    pub fn spec(&self) -> HeadSpec {
        HeadSpec {
            input_dim: self.input_dim(),
            hidden: self.layers[..self.layers.len() - 1]
                .iter()
                .map(|l| l.weight.nrows())
                .collect(),
            num_outputs: self.num_outputs(),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weight.ncols()
    }

    pub fn num_outputs(&self) -> usize {
        self.layers
            .last()
            .expect("at least one layer")
            .weight
            .nrows()
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(Layer::num_params).sum()
    }

    fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::InvalidHead("no layers".into()));
        }
        for (i, pair) in self.layers.windows(2).enumerate() {
            if pair[0].weight.nrows() != pair[1].weight.ncols() {
                return Err(Error::InvalidHead(format!(
                    "layer {i} emits {} values but layer {} takes {}",
                    pair[0].weight.nrows(),
                    i + 1,
                    pair[1].weight.ncols()
                )));
            }
        }
        for (i, layer) in self.layers.iter().enumerate() {
            if layer.bias.len() != layer.weight.nrows() {
                return Err(Error::InvalidHead(format!(
                    "layer {i} bias length mismatch"
                )));
            }
            if layer
                .weight
                .iter()
                .chain(layer.bias.iter())
                .any(|v| !v.is_finite())
            {
                return Err(Error::NonFinite { layer: i });
            }
        }
        Ok(())
    }

    /// Logits and per-layer inputs for a feature batch (`n x d`).
    pub fn forward(&self, features: &Array2<f64>) -> Result<ForwardPass> {
        if features.ncols() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                actual: features.ncols(),
            });
        }
        let last = self.layers.len() - 1;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut current = features.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            let mut out = current.dot(&layer.weight.t());
            out += &layer.bias;
            if i < last {
                out.mapv_inplace(|v| v.max(0.0));
            }
            inputs.push(current);
            current = out;
        }
        Ok(ForwardPass {
            inputs,
            logits: current,
        })
    }

    /// Softmax probabilities for every row of `features`.
    pub fn predict(&self, features: &Array2<f64>) -> Result<Vec<PredictionVector>> {
        let probs = self.forward(features)?.probabilities();
        Ok(probs
            .rows()
            .into_iter()
            .map(|r| PredictionVector(r.to_vec()))
            .collect())
    }

    /// Probabilities for every proposal of `dataset`, in proposal order.
    pub fn predict_dataset(&self, dataset: &SynthDataset) -> Result<Vec<PredictionVector>> {
        let all: Vec<usize> = (0..dataset.proposals.len()).collect();
        let mut out = Vec::with_capacity(all.len());
        for chunk in all.chunks(4096) {
            out.extend(self.predict(&Batch::from_proposals(dataset, chunk).features)?);
        }
        Ok(out)
    }

    /// Mean loss over `batch` and its gradient for every parameter.
    pub fn backward(&self, batch: &Batch, loss: &Loss) -> Result<(f64, HeadParams)> {
        let (per_sample, grads) = self.backward_per_sample(batch, loss)?;
        Ok((per_sample.iter().sum::<f64>() / batch.len() as f64, grads))
    }

    /// Per-sample losses and the gradient of their mean.
    pub fn backward_per_sample(
        &self,
        batch: &Batch,
        loss: &Loss,
    ) -> Result<(Vec<f64>, HeadParams)> {
        if batch.is_empty() {
            return Err(Error::InvalidConfig("empty batch".into()));
        }
        let pass = self.forward(&batch.features)?;
        let n = batch.len() as f64;
        let mut delta = Array2::zeros(pass.logits.raw_dim());
        let mut losses = Vec::with_capacity(batch.len());
        for ((logits, mut d), &label) in pass
            .logits
            .rows()
            .into_iter()
            .zip(delta.rows_mut())
            .zip(&batch.labels)
        {
            if label >= self.num_outputs() {
                return Err(Error::UnknownClass(label));
            }
            let logits = logits.to_vec();
            let mut g = vec![0.0; logits.len()];
            losses.push(loss.sample(&logits, label, &mut g));
            for (dst, v) in d.iter_mut().zip(g) {
                *dst = v / n;
            }
        }

        let mut grads = self.zeros_like();
        for i in (0..self.layers.len()).rev() {
            if delta.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite { layer: i });
            }
            let input = &pass.inputs[i];
            grads.layers[i].weight = delta.t().dot(input);
            grads.layers[i].bias = delta.sum_axis(Axis(0));
            if i > 0 {
                let mut upstream = delta.dot(&self.layers[i].weight);
                // `input` is the rectified output of layer i - 1.
                Zip::from(&mut upstream).and(input).for_each(|u, &a| {
                    if a <= 0.0 {
                        *u = 0.0;
                    }
                });
                delta = upstream;
            }
        }
        Ok((losses, grads))
    }

    /// All parameters flattened layer by layer, weights (row-major) then bias.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for layer in &self.layers {
            out.extend(layer.weight.iter());
            out.extend(layer.bias.iter());
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&HeadFile::from(self))?)
    }

    pub fn from_json(json: &str) -> Result<Self> {
        let file: HeadFile = serde_json::from_str(json)?;
        file.try_into()
    }
}

#[derive(Serialize, Deserialize)]
struct LayerFile {
    rows: usize,
    cols: usize,
    weight: Vec<f64>,
    bias: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct HeadFile {
    layers: Vec<LayerFile>,
}

impl From<&HeadParams> for HeadFile {
    fn from(params: &HeadParams) -> Self {
        HeadFile {
            layers: params
                .layers
                .iter()
                .map(|l| LayerFile {
                    rows: l.weight.nrows(),
                    cols: l.weight.ncols(),
                    weight: l.weight.iter().copied().collect(),
                    bias: l.bias.to_vec(),
                })
                .collect(),
        }
    }
}

impl TryFrom<HeadFile> for HeadParams {
    type Error = Error;

    fn try_from(file: HeadFile) -> Result<Self> {
        let layers = file
            .layers
            .into_iter()
            .enumerate()
            .map(|(i, l)| {
                let weight = Array2::from_shape_vec((l.rows, l.cols), l.weight)
                    .map_err(|e| Error::InvalidHead(format!("layer {i}: {e}")))?;
                Ok(Layer {
                    weight,
                    bias: Array1::from(l.bias),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let params = HeadParams { layers };
        params.validate()?;
        Ok(params)
    }
}
