use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, NodeId, Tensor};
use crate::error::{Error, Result};
use crate::hardware::lut::check_homogeneous;
use crate::hardware::{MeasurementRecord, MetricKind};
use crate::optim::Adam;

/// Training recipe for [`MlpPredictor::fit`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MlpTrainConfig {
    pub hidden: Vec<usize>,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
}

impl Default for MlpTrainConfig {
    fn default() -> Self {
        Self {
            hidden: vec![128, 64],
            epochs: 200,
            batch_size: 256,
            lr: 1e-3,
        }
    }
}

/// Fully connected regressor from a flattened L×K encoding to one cost.
/// Hidden layers use relu, the output is linear. Inputs and targets are
/// standardized with training statistics kept inside the model, and every
/// public query answers in original units.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MlpDoc", into = "MlpDoc")]
pub struct MlpPredictor {
    metric_kind: MetricKind,
    num_layers: usize,
    num_ops: usize,
    weights: Vec<Tensor<f64>>,
    biases: Vec<Tensor<f64>>,
    input_mean: Tensor<f64>,
    input_inv_scale: Tensor<f64>,
    target_mean: f64,
    target_scale: f64,
}

/// On-disk form: weights as nested arrays, `weights[i][r][c]` for layer `i`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MlpDoc {
    metric_kind: MetricKind,
    num_layers: usize,
    num_ops: usize,
    layer_sizes: Vec<usize>,
    weights: Vec<Vec<Vec<f64>>>,
    biases: Vec<Vec<f64>>,
    input_mean: Vec<f64>,
    input_inv_scale: Vec<f64>,
    target_mean: f64,
    target_scale: f64,
}

impl From<MlpPredictor> for MlpDoc {
    fn from(m: MlpPredictor) -> Self {
        let mut layer_sizes = vec![m.input_dim()];
        layer_sizes.extend(m.weights.iter().map(|w| w.cols()));
        MlpDoc {
            metric_kind: m.metric_kind,
            num_layers: m.num_layers,
            num_ops: m.num_ops,
            layer_sizes,
            weights: m
                .weights
                .iter()
                .map(|w| (0..w.rows()).map(|r| w.row(r).to_vec()).collect())
                .collect(),
            biases: m.biases.iter().map(|b| b.data().to_vec()).collect(),
            input_mean: m.input_mean.into_data(),
            input_inv_scale: m.input_inv_scale.into_data(),
            target_mean: m.target_mean,
            target_scale: m.target_scale,
        }
    }
}

impl TryFrom<MlpDoc> for MlpPredictor {
    type Error = Error;

    fn try_from(d: MlpDoc) -> Result<Self> {
        let weights = d
            .weights
            .iter()
            .map(|w| Tensor::from_rows(w))
            .collect::<Result<Vec<_>>>()?;
        let biases = d
            .biases
            .iter()
            .map(|b| Tensor::new(vec![1, b.len()], b.clone()))
            .collect::<Result<Vec<_>>>()?;
        let dim = d.num_layers * d.num_ops;
        let m = MlpPredictor {
            metric_kind: d.metric_kind,
            num_layers: d.num_layers,
            num_ops: d.num_ops,
            weights,
            biases,
            input_mean: Tensor::new(vec![1, d.input_mean.len()], d.input_mean)?,
            input_inv_scale: Tensor::new(vec![1, d.input_inv_scale.len()], d.input_inv_scale)?,
            target_mean: d.target_mean,
            target_scale: d.target_scale,
        };
        m.validate()?;
        let mut sizes = vec![dim];
        sizes.extend(m.weights.iter().map(|w| w.cols()));
        if sizes != d.layer_sizes {
            return Err(Error::Validation(format!(
                "layer_sizes {:?} disagree with weights {:?}",
                d.layer_sizes, sizes
            )));
        }
        Ok(m)
    }
}

impl MlpPredictor {
    /// Fresh network with identity standardization. `hidden = []` gives a
    /// single linear layer.
    pub fn new<R: Rng + ?Sized>(
        num_layers: usize,
        num_ops: usize,
        hidden: &[usize],
        metric_kind: MetricKind,
        rng: &mut R,
    ) -> Result<Self> {
        let dim = num_layers * num_ops;
        if dim == 0 || hidden.contains(&0) {
            return Err(Error::Parameter(format!(
                "MLP needs positive sizes, got input {dim} and hidden {hidden:?}"
            )));
        }
        let mut sizes = vec![dim];
        sizes.extend_from_slice(hidden);
        sizes.push(1);
        let (mut weights, mut biases) = (Vec::new(), Vec::new());
        for w in sizes.windows(2) {
            let bound = 1.0 / (w[0] as f64).sqrt();
            let mut draw = |n: usize| -> Vec<f64> {
                (0..n).map(|_| rng.random_range(-bound..bound)).collect()
            };
            weights.push(Tensor::new(vec![w[0], w[1]], draw(w[0] * w[1]))?);
            biases.push(Tensor::new(vec![1, w[1]], draw(w[1]))?);
        }
        Ok(Self {
            metric_kind,
            num_layers,
            num_ops,
            weights,
            biases,
            input_mean: Tensor::zeros(&[1, dim]),
            input_inv_scale: Tensor::full(&[1, dim], 1.0),
            target_mean: 0.0,
            target_scale: 1.0,
        })
    }

    /// Builds a network from explicit parts; mainly for tests and tooling.
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        num_layers: usize,
        num_ops: usize,
        metric_kind: MetricKind,
        weights: Vec<Tensor<f64>>,
        biases: Vec<Tensor<f64>>,
        input_mean: Vec<f64>,
        input_inv_scale: Vec<f64>,
        target: (f64, f64),
    ) -> Result<Self> {
        let m = Self {
            metric_kind,
            num_layers,
            num_ops,
            weights,
            biases,
            input_mean: Tensor::new(vec![1, input_mean.len()], input_mean)?,
            input_inv_scale: Tensor::new(vec![1, input_inv_scale.len()], input_inv_scale)?,
            target_mean: target.0,
            target_scale: target.1,
        };
        m.validate()?;
        Ok(m)
    }

    fn validate(&self) -> Result<()> {
        let dim = self.input_dim();
        if dim == 0 || self.weights.is_empty() || self.weights.len() != self.biases.len() {
            return Err(Error::Validation(
                "MLP needs matching, non-empty weight and bias lists".into(),
            ));
        }
        let mut fan_in = dim;
        for (w, b) in self.weights.iter().zip(&self.biases) {
            if w.shape() != [fan_in, w.cols()] || b.shape() != [1, w.cols()] {
                return Err(Error::Validation(format!(
                    "layer shapes {:?}/{:?} do not chain from width {fan_in}",
                    w.shape(),
                    b.shape()
                )));
            }
            fan_in = w.cols();
        }
        if fan_in != 1 {
            return Err(Error::Validation(format!(
                "output width {fan_in}, expected 1"
            )));
        }
        if self.input_mean.len() != dim || self.input_inv_scale.len() != dim {
            return Err(Error::Validation(
                "standardization statistics have the wrong length".into(),
            ));
        }
        let finite = self
            .weights
            .iter()
            .chain(&self.biases)
            .all(Tensor::is_finite)
            && self.input_mean.is_finite()
            && self.input_inv_scale.is_finite()
            && self.target_mean.is_finite()
            && self.target_scale.is_finite();
        if !finite {
            return Err(Error::Validation("MLP has non-finite parameters".into()));
        }
        Ok(())
    }

    pub fn metric_kind(&self) -> MetricKind {
        self.metric_kind
    }

    pub fn num_layers(&self) -> usize {
        self.num_layers
    }

    pub fn num_ops(&self) -> usize {
        self.num_ops
    }

    pub fn input_dim(&self) -> usize {
        self.num_layers * self.num_ops
    }

    pub fn weights(&self) -> &[Tensor<f64>] {
        &self.weights
    }

    pub fn target_stats(&self) -> (f64, f64) {
        (self.target_mean, self.target_scale)
    }

    fn check_shape(&self, encoding: &Tensor<f64>) -> Result<()> {
        if encoding.shape() != [self.num_layers, self.num_ops] {
            return Err(Error::Dimension {
                op: "mlp_predict",
                lhs: vec![self.num_layers, self.num_ops],
                rhs: encoding.shape().to_vec(),
            });
        }
        Ok(())
    }

    /// Standardized rows → standardized output, on plain tensors.
    fn network(&self, mut h: Tensor<f64>) -> Result<Tensor<f64>> {
        let last = self.weights.len() - 1;
        for (i, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            h = h.matmul(w)?;
            let n = h.cols();
            for (j, v) in h.data_mut().iter_mut().enumerate() {
                *v += b.data()[j % n];
            }
            if i < last {
                h = h.map(|v| if v > 0.0 { v } else { 0.0 });
            }
        }
        Ok(h)
    }

    fn standardize_into(&self, encoding: &Tensor<f64>, out: &mut [f64]) {
        for (((o, &x), &m), &s) in out
            .iter_mut()
            .zip(encoding.data())
            .zip(self.input_mean.data())
            .zip(self.input_inv_scale.data())
        {
            *o = (x + -m) * s;
        }
    }

    pub fn predict(&self, encoding: &Tensor<f64>) -> Result<f64> {
        Ok(self.predict_batch(std::slice::from_ref(encoding))?[0])
    }

    /// Row-independent batch evaluation; each entry is bitwise identical
    /// to the corresponding single [`predict`](Self::predict).
    pub fn predict_batch(&self, encodings: &[Tensor<f64>]) -> Result<Vec<f64>> {
        let d = self.input_dim();
        let mut x = vec![0.0; encodings.len() * d];
        for (e, row) in encodings.iter().zip(x.chunks_mut(d)) {
            self.check_shape(e)?;
            self.standardize_into(e, row);
        }
        let y = self.network(Tensor::new(vec![encodings.len(), d], x)?)?;
        Ok(y.data()
            .iter()
            .map(|&v| v * self.target_scale + self.target_mean)
            .collect())
    }

    /// In-graph prediction for an L×K encoding node; the result is a 1×1
    /// node in original units and carries gradients back to the encoding.
    pub fn predict_node(&self, g: &mut Graph<f64>, encoding: NodeId) -> Result<NodeId> {
        self.check_shape(g.value(encoding))?;
        let flat = g.slice(encoding, 0, vec![1, self.input_dim()])?;
        let neg_mean = g.constant(self.input_mean.map(|m| -m));
        let centered = g.add_bias(flat, neg_mean)?;
        let inv = g.constant(self.input_inv_scale.clone());
        let mut h = g.mul(centered, inv)?;
        let last = self.weights.len() - 1;
        for (i, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let wn = g.constant(w.clone());
            let bn = g.constant(b.clone());
            let z = g.matmul(h, wn)?;
            h = g.add_bias(z, bn)?;
            if i < last {
                h = g.relu(h)?;
            }
        }
        let scaled = g.scale(h, self.target_scale)?;
        let mean = g.constant(Tensor::full(&[1, 1], self.target_mean));
        g.add(scaled, mean)
    }

    /// ∂predict/∂encoding in original units, from one reverse pass.
    pub fn predict_grad(&self, encoding: &Tensor<f64>) -> Result<Tensor<f64>> {
        self.check_shape(encoding)?;
        let mut g = Graph::new();
        let e = g.param(encoding.clone());
        let y = self.predict_node(&mut g, e)?;
        g.backward(y)?;
        Ok(g.grad(e)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(encoding.shape())))
    }

    /// Trains on `train` by mini-batch MSE with Adam and reports the RMSE on
    /// `valid` in original units (NaN when `valid` is empty).
    pub fn fit<R: Rng + ?Sized>(
        train: &[MeasurementRecord],
        valid: &[MeasurementRecord],
        cfg: &MlpTrainConfig,
        rng: &mut R,
    ) -> Result<(Self, f64)> {
        let first = train
            .first()
            .ok_or_else(|| Error::Fit("no training records".into()))?;
        let (l_count, k_count, kind) = (
            first.arch.num_layers(),
            first.arch.num_ops(),
            first.metric_kind,
        );
        check_homogeneous(train, l_count, k_count, kind)?;
        check_homogeneous(valid, l_count, k_count, kind)?;
        if cfg.batch_size == 0 || !(cfg.lr > 0.0) {
            return Err(Error::Parameter(
                "batch_size and lr must be positive".into(),
            ));
        }

        let mut model = Self::new(l_count, k_count, &cfg.hidden, kind, rng)?;
        let n = train.len();
        let d = model.input_dim();
        let encs: Vec<Tensor<f64>> = train.iter().map(MeasurementRecord::encoding).collect();

        let mut mean = vec![0.0; d];
        for e in &encs {
            for (m, &x) in mean.iter_mut().zip(e.data()) {
                *m += x;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        let mut var = vec![0.0; d];
        for e in &encs {
            for ((v, &x), &m) in var.iter_mut().zip(e.data()).zip(&mean) {
                *v += (x - m) * (x - m);
            }
        }
        model.input_mean = Tensor::new(vec![1, d], mean)?;
        model.input_inv_scale = Tensor::new(
            vec![1, d],
            var.iter()
                .map(|&v| {
                    let sd = (v / n as f64).sqrt();
                    if sd > 1e-12 {
                        1.0 / sd
                    } else {
                        1.0
                    }
                })
                .collect(),
        )?;
        let y_mean = train.iter().map(|r| r.value).sum::<f64>() / n as f64;
        let y_sd = (train
            .iter()
            .map(|r| (r.value - y_mean).powi(2))
            .sum::<f64>()
            / n as f64)
            .sqrt();
        model.target_mean = y_mean;
        model.target_scale = if y_sd > 1e-12 { y_sd } else { 1.0 };

        let mut x = vec![0.0; n * d];
        for (e, row) in encs.iter().zip(x.chunks_mut(d)) {
            model.standardize_into(e, row);
        }
        let x = Tensor::new(vec![n, d], x)?;
        let y = Tensor::new(
            vec![n, 1],
            train
                .iter()
                .map(|r| (r.value - model.target_mean) / model.target_scale)
                .collect(),
        )?;

        let mut adam = Adam::new(0.0);
        let mut order: Vec<usize> = (0..n).collect();
        for _ in 0..cfg.epochs {
            order.shuffle(rng);
            for batch in order.chunks(cfg.batch_size) {
                let xb = x.gather_rows(batch)?;
                let yb = y.gather_rows(batch)?;
                let mut g = Graph::new();
                let (ws, bs): (Vec<NodeId>, Vec<NodeId>) = model
                    .weights
                    .iter()
                    .zip(&model.biases)
                    .map(|(w, b)| (g.param(w.clone()), g.param(b.clone())))
                    .unzip();
                let mut h = g.constant(xb);
                for (i, (&w, &b)) in ws.iter().zip(&bs).enumerate() {
                    let z = g.matmul(h, w)?;
                    h = g.add_bias(z, b)?;
                    if i + 1 < ws.len() {
                        h = g.relu(h)?;
                    }
                }
                let target = g.constant(yb);
                let diff = g.sub(h, target)?;
                let sq = g.mul(diff, diff)?;
                let loss = g.mean(sq)?;
                g.backward(loss)?;
                let grads: Vec<Option<Tensor<f64>>> = ws
                    .iter()
                    .zip(&bs)
                    .flat_map(|(&w, &b)| [g.grad(w).cloned(), g.grad(b).cloned()])
                    .collect();
                let mut params: Vec<Tensor<f64>> = model
                    .weights
                    .drain(..)
                    .zip(model.biases.drain(..))
                    .flat_map(|(w, b)| [w, b])
                    .collect();
                adam.step(&mut params, &grads, cfg.lr)?;
                let mut it = params.into_iter();
                while let (Some(w), Some(b)) = (it.next(), it.next()) {
                    model.weights.push(w);
                    model.biases.push(b);
                }
            }
        }

        let rmse = if valid.is_empty() {
            f64::NAN
        } else {
            let encs: Vec<Tensor<f64>> = valid.iter().map(MeasurementRecord::encoding).collect();
            residuals(&model.predict_batch(&encs)?, valid).rmse
        };
        Ok((model, rmse))
    }
}

/// Summary of `predicted − measured` over a record set.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ResidualStats {
    pub rmse: f64,
    /// Mean residual; negative when the model under-predicts.
    pub bias: f64,
    /// RMSE after subtracting the mean residual.
    pub debiased_rmse: f64,
}

pub fn residuals(predicted: &[f64], records: &[MeasurementRecord]) -> ResidualStats {
    let n = records.len().max(1) as f64;
    let res: Vec<f64> = predicted
        .iter()
        .zip(records)
        .map(|(p, r)| p - r.value)
        .collect();
    let bias = res.iter().sum::<f64>() / n;
    let mse = res.iter().map(|r| r * r).sum::<f64>() / n;
    let centered = res.iter().map(|r| (r - bias).powi(2)).sum::<f64>() / n;
    ResidualStats {
        rmse: mse.sqrt(),
        bias,
        debiased_rmse: centered.sqrt(),
    }
}
