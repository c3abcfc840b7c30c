//! Dense regression network with a quantization layer as its first stage.
//!
//! The network is a plain MLP (ReLU hidden layers, inverted dropout, linear
//! scalar head) trained with minibatch Adam on MSE loss. The quantization
//! layer in front is one of: nothing (full precision), fixed hard
//! thresholds applied during both training and inference, or a trainable
//! soft layer that is hardened by rounding for inference.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::quant::{decode_midpoint, encode, quantize_bitwise, DecoderKind, ThresholdSet};
use crate::soft::{SoftMode, SoftQuantLayer, TemperatureSchedule};

#[derive(Debug, Clone)]
pub struct DenseLayer {
    /// Row-major, out_dim x in_dim.
    weights: Vec<f64>,
    bias: Vec<f64>,
    in_dim: usize,
    out_dim: usize,
}

impl DenseLayer {
    pub fn glorot(in_dim: usize, out_dim: usize, rng: &mut impl Rng) -> Self {
        let limit = (6.0 / (in_dim + out_dim) as f64).sqrt();
        let weights = (0..in_dim * out_dim)
            .map(|_| rng.random_range(-limit..limit))
            .collect();
        DenseLayer { weights, bias: vec![0.0; out_dim], in_dim, out_dim }
    }

    pub fn from_parts(weights: Vec<f64>, bias: Vec<f64>, in_dim: usize, out_dim: usize) -> Result<Self> {
        if weights.len() != in_dim * out_dim {
            return Err(Error::DimensionMismatch {
                context: "dense layer weights",
                expected: in_dim * out_dim,
                got: weights.len(),
            });
        }
        if bias.len() != out_dim {
            return Err(Error::DimensionMismatch {
                context: "dense layer bias",
                expected: out_dim,
                got: bias.len(),
            });
        }
        Ok(DenseLayer { weights, bias, in_dim, out_dim })
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    /// `out[b][o] = bias[o] + sum_i input[b][i] * w[o][i]`
    pub fn forward_linear(&self, input: &Matrix) -> Matrix {
        let mut out = Matrix::zeros(input.rows(), self.out_dim);
        for b in 0..input.rows() {
            let row = input.row(b);
            let orow = out.row_mut(b);
            for o in 0..self.out_dim {
                let w = &self.weights[o * self.in_dim..(o + 1) * self.in_dim];
                let mut acc = self.bias[o];
                for (x, wi) in row.iter().zip(w) {
                    acc += x * wi;
                }
                orow[o] = acc;
            }
        }
        out
    }
}

/// Input transform applied ahead of the dense stack.
#[derive(Debug, Clone)]
pub enum QuantLayer {
    /// Hard thresholds, fixed: quantize during training and inference.
    Fixed { decoder: DecoderKind, sets: Vec<ThresholdSet> },
    /// Trainable soft thresholds; hardened by rounding at inference.
    Soft(SoftQuantLayer),
}

impl QuantLayer {
    pub fn feature_count(&self) -> usize {
        match self {
            QuantLayer::Fixed { sets, .. } => sets.len(),
            QuantLayer::Soft(l) => l.feature_count(),
        }
    }

    pub fn output_width(&self) -> usize {
        match self {
            QuantLayer::Fixed { decoder, sets } => match decoder {
                DecoderKind::Bitwise => sets.iter().map(|s| s.thresholds().len()).sum(),
                DecoderKind::Identity | DecoderKind::Midpoint => sets.len(),
            },
            QuantLayer::Soft(l) => l.output_width(),
        }
    }

    /// What the hard (inference-time) decode produces.
    pub fn decoder_kind(&self) -> DecoderKind {
        match self {
            QuantLayer::Fixed { decoder, .. } => *decoder,
            QuantLayer::Soft(l) => match l.mode() {
                SoftMode::Sum => DecoderKind::Identity,
                SoftMode::Bitwise => DecoderKind::Bitwise,
            },
        }
    }

    pub fn bit_width(&self) -> u8 {
        match self {
            QuantLayer::Fixed { sets, .. } => sets[0].bit_width(),
            QuantLayer::Soft(l) => l.bit_width(),
        }
    }
}

/// Writes the decoded value of `code` for one feature into `out`.
///
/// Identity: the code itself. Midpoint: interval midpoint. Bitwise: M
/// staircase bits as 0.0 / 1.0. `out` must be 1 wide for the scalar kinds
/// and M wide for bitwise.
pub fn decode_code_into(
    kind: DecoderKind,
    code: u16,
    set: &ThresholdSet,
    out: &mut [f64],
) -> Result<()> {
    match kind {
        DecoderKind::Identity => {
            out[0] = code as f64;
        }
        DecoderKind::Midpoint => {
            out[0] = decode_midpoint(crate::quant::Code(code), set)?;
        }
        DecoderKind::Bitwise => {
            for (m, o) in out.iter_mut().enumerate() {
                *o = if (m as u16) < code { 1.0 } else { 0.0 };
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct DenseNet {
    input_dim: usize,
    quant: Option<QuantLayer>,
    hidden: Vec<DenseLayer>,
    output: DenseLayer,
    dropout_rate: f64,
}

impl DenseNet {
    /// Builds a net with Glorot-initialized dense layers. `hidden_layers`
    /// layers of `hidden_width` neurons each, then a scalar head.
    pub fn new(
        input_dim: usize,
        quant: Option<QuantLayer>,
        hidden_layers: usize,
        hidden_width: usize,
        dropout_rate: f64,
        init_seed: u64,
    ) -> Result<Self> {
        if !(0.0..1.0).contains(&dropout_rate) {
            return Err(Error::InvalidConfig(format!(
                "dropout rate must be in [0, 1), got {dropout_rate}"
            )));
        }
        if let Some(q) = &quant {
            if q.feature_count() != input_dim {
                return Err(Error::DimensionMismatch {
                    context: "quant layer feature count",
                    expected: input_dim,
                    got: q.feature_count(),
                });
            }
        }
        let d0 = quant.as_ref().map_or(input_dim, QuantLayer::output_width);
        let mut rng = ChaCha8Rng::seed_from_u64(init_seed);
        let mut hidden = Vec::with_capacity(hidden_layers);
        let mut prev = d0;
        for _ in 0..hidden_layers {
            hidden.push(DenseLayer::glorot(prev, hidden_width, &mut rng));
            prev = hidden_width;
        }
        let output = DenseLayer::glorot(prev, 1, &mut rng);
        Ok(DenseNet { input_dim, quant, hidden, output, dropout_rate })
    }

    pub fn from_parts(
        input_dim: usize,
        quant: Option<QuantLayer>,
        hidden: Vec<DenseLayer>,
        output: DenseLayer,
        dropout_rate: f64,
    ) -> Result<Self> {
        let mut prev = quant.as_ref().map_or(input_dim, QuantLayer::output_width);
        for layer in &hidden {
            if layer.in_dim != prev {
                return Err(Error::DimensionMismatch {
                    context: "hidden layer input",
                    expected: prev,
                    got: layer.in_dim,
                });
            }
            prev = layer.out_dim;
        }
        if output.in_dim != prev || output.out_dim != 1 {
            return Err(Error::DimensionMismatch {
                context: "output layer",
                expected: prev,
                got: output.in_dim,
            });
        }
        Ok(DenseNet { input_dim, quant, hidden, output, dropout_rate })
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn quant(&self) -> Option<&QuantLayer> {
        self.quant.as_ref()
    }

    pub fn quant_mut(&mut self) -> Option<&mut QuantLayer> {
        self.quant.as_mut()
    }

    pub fn hidden_layers(&self) -> &[DenseLayer] {
        &self.hidden
    }

    pub fn output_layer(&self) -> &DenseLayer {
        &self.output
    }

    pub fn dropout_rate(&self) -> f64 {
        self.dropout_rate
    }

    pub fn set_dropout_rate(&mut self, rate: f64) {
        self.dropout_rate = rate;
    }

    /// Total trainable parameter count (weights, biases, thresholds).
    pub fn param_count(&self) -> u64 {
        let dense: usize = self
            .hidden
            .iter()
            .chain(std::iter::once(&self.output))
            .map(|l| l.weights.len() + l.bias.len())
            .sum();
        let thresholds = match &self.quant {
            Some(QuantLayer::Soft(l)) => l.thresholds_flat().len(),
            _ => 0,
        };
        (dense + thresholds) as u64
    }

    /// The hard per-feature quantizers this net uses at inference, if any.
    pub fn hardened_threshold_sets(&self) -> Result<Option<Vec<ThresholdSet>>> {
        match &self.quant {
            None => Ok(None),
            Some(QuantLayer::Fixed { sets, .. }) => Ok(Some(sets.clone())),
            Some(QuantLayer::Soft(l)) => Ok(Some(l.harden()?)),
        }
    }

    fn check_batch(&self, batch: &Matrix) -> Result<()> {
        if batch.cols() != self.input_dim {
            return Err(Error::DimensionMismatch {
                context: "input batch width",
                expected: self.input_dim,
                got: batch.cols(),
            });
        }
        Ok(())
    }

    /// Inference-path input transform: hard quantization for every
    /// feature. For full-precision nets this is the input itself.
    ///
    /// Fixed layers decode through their (sorted) threshold sets. A
    /// still-soft layer is evaluated in trained threshold order, which is
    /// the exact rounding of its training-time output; sorting is deferred
    /// to `canonicalized` so bitwise components never detach from their
    /// weight columns.
    pub fn decoded_eval_input(&self, batch: &Matrix) -> Result<Matrix> {
        self.check_batch(batch)?;
        match &self.quant {
            None => Ok(batch.clone()),
            Some(QuantLayer::Soft(layer)) => {
                let width = layer.output_width();
                let mut out = Matrix::zeros(batch.rows(), width);
                for b in 0..batch.rows() {
                    layer.hard_forward_row(batch.row(b), out.row_mut(b));
                }
                Ok(out)
            }
            Some(QuantLayer::Fixed { decoder, sets }) => {
                let kind = *decoder;
                let width = self.quant.as_ref().unwrap().output_width();
                let per = width / self.input_dim;
                let mut out = Matrix::zeros(batch.rows(), width);
                for b in 0..batch.rows() {
                    let row = batch.row(b);
                    let orow = out.row_mut(b);
                    for (k, set) in sets.iter().enumerate() {
                        let code = encode(row[k], set).value();
                        decode_code_into(kind, code, set, &mut orow[k * per..(k + 1) * per])?;
                    }
                }
                Ok(out)
            }
        }
    }

    /// Deployment form of the network: a trained soft layer becomes a
    /// fixed hard layer with sorted thresholds, and in bitwise mode the
    /// first dense layer's weight columns are permuted along with the
    /// thresholds so the function is unchanged. Already-hard nets come
    /// back as plain clones.
    pub fn canonicalized(&self) -> Result<DenseNet> {
        let layer = match &self.quant {
            Some(QuantLayer::Soft(l)) => l,
            _ => return Ok(self.clone()),
        };
        let (sets, perms) = layer.harden_with_permutation()?;
        let decoder = self.quant.as_ref().unwrap().decoder_kind();
        let mut net = self.clone();
        if layer.mode() == SoftMode::Bitwise {
            let m = layer.thresholds_per_feature();
            let first = net
                .hidden
                .first_mut()
                .unwrap_or(&mut net.output);
            let old = first.weights.clone();
            for o in 0..first.out_dim {
                let row = &mut first.weights[o * first.in_dim..(o + 1) * first.in_dim];
                let old_row = &old[o * first.in_dim..(o + 1) * first.in_dim];
                for (k, perm) in perms.iter().enumerate() {
                    for (slot, &src) in perm.iter().enumerate() {
                        row[k * m + slot] = old_row[k * m + src];
                    }
                }
            }
        }
        net.quant = Some(QuantLayer::Fixed { decoder, sets });
        Ok(net)
    }

    /// Dense stack only (no quantization, no dropout). This is the
    /// server-side half of split inference.
    pub fn forward_dense(&self, z: &Matrix) -> Result<Vec<f64>> {
        let d0 = self.quant.as_ref().map_or(self.input_dim, QuantLayer::output_width);
        if z.cols() != d0 {
            return Err(Error::DimensionMismatch {
                context: "dense stack input width",
                expected: d0,
                got: z.cols(),
            });
        }
        let mut act = None;
        for layer in &self.hidden {
            let mut next = layer.forward_linear(act.as_ref().unwrap_or(z));
            for v in next.data_mut() {
                *v = v.max(0.0);
            }
            act = Some(next);
        }
        let out = self.output.forward_linear(act.as_ref().unwrap_or(z));
        Ok((0..out.rows()).map(|b| out.get(b, 0)).collect())
    }

    /// Eval-mode prediction: hard quantization then the dense stack.
    pub fn predict(&self, batch: &Matrix) -> Result<Vec<f64>> {
        let z = self.decoded_eval_input(batch)?;
        self.forward_dense(&z)
    }

    /// Forward pass: soft quantization and dropout when training, hard
    /// quantization and no dropout otherwise.
    pub fn forward(&self, batch: &Matrix, training: bool, rng: &mut impl Rng) -> Result<Vec<f64>> {
        if training {
            Ok(self.forward_train(batch, rng)?.predictions)
        } else {
            self.predict(batch)
        }
    }

    /// Training-mode forward keeping every intermediate needed by
    /// `backward`.
    pub fn forward_train(&self, batch: &Matrix, rng: &mut impl Rng) -> Result<ForwardCache> {
        self.check_batch(batch)?;
        let rows = batch.rows();

        // Quantization stage.
        let (quant_out, sigmoids) = match &self.quant {
            None => (batch.clone(), None),
            Some(QuantLayer::Fixed { .. }) => (self.decoded_eval_input(batch)?, None),
            Some(QuantLayer::Soft(layer)) => {
                let width = layer.output_width();
                let m_total = layer.thresholds_flat().len();
                let mut out = Matrix::zeros(rows, width);
                let mut sig = Matrix::zeros(rows, m_total);
                for b in 0..rows {
                    layer.forward_soft_row(batch.row(b), out.row_mut(b), sig.row_mut(b));
                }
                (out, Some(sig))
            }
        };

        // Hidden stack with inverted dropout.
        let keep = 1.0 - self.dropout_rate;
        let mut activations: Vec<Matrix> = Vec::with_capacity(self.hidden.len());
        let mut relu_outs: Vec<Matrix> = Vec::with_capacity(self.hidden.len());
        let mut masks: Vec<Option<Matrix>> = Vec::with_capacity(self.hidden.len());
        for layer in &self.hidden {
            let input = activations.last().unwrap_or(&quant_out);
            let mut z = layer.forward_linear(input);
            for v in z.data_mut() {
                *v = v.max(0.0);
            }
            relu_outs.push(z.clone());
            let mask = if self.dropout_rate > 0.0 {
                let mut m = Matrix::zeros(z.rows(), z.cols());
                for v in m.data_mut() {
                    *v = if rng.random::<f64>() < keep { 1.0 / keep } else { 0.0 };
                }
                for (v, mk) in z.data_mut().iter_mut().zip(m.data()) {
                    *v *= mk;
                }
                Some(m)
            } else {
                None
            };
            masks.push(mask);
            activations.push(z);
        }
        let last = activations.last().unwrap_or(&quant_out);
        let out = self.output.forward_linear(last);
        let predictions = (0..rows).map(|b| out.get(b, 0)).collect();
        Ok(ForwardCache { quant_out, sigmoids, relu_outs, activations, masks, predictions })
    }

    /// Reverse pass for MSE loss (mean over the batch) given a cache from
    /// `forward_train` on the same batch.
    pub fn backward(&self, cache: &ForwardCache, targets: &[f64]) -> Result<Gradients> {
        let rows = cache.quant_out.rows();
        if targets.len() != rows {
            return Err(Error::DimensionMismatch {
                context: "target length",
                expected: rows,
                got: targets.len(),
            });
        }
        // dL/dpred for L = mean (pred - y)^2
        let dpred: Vec<f64> = cache
            .predictions
            .iter()
            .zip(targets)
            .map(|(p, y)| 2.0 * (p - y) / rows as f64)
            .collect();

        let last_act = cache.activations.last().unwrap_or(&cache.quant_out);
        let mut out_grad = LayerGrad::zeros(&self.output);
        let mut d_act = Matrix::zeros(rows, self.output.in_dim);
        for b in 0..rows {
            let d = dpred[b];
            out_grad.bias[0] += d;
            let arow = last_act.row(b);
            for i in 0..self.output.in_dim {
                out_grad.weights[i] += d * arow[i];
            }
            let drow = d_act.row_mut(b);
            for (i, g) in drow.iter_mut().enumerate() {
                *g = d * self.output.weights[i];
            }
        }

        let mut hidden_grads: Vec<LayerGrad> =
            self.hidden.iter().map(LayerGrad::zeros).collect();
        for l in (0..self.hidden.len()).rev() {
            let layer = &self.hidden[l];
            let input = if l == 0 { &cache.quant_out } else { &cache.activations[l - 1] };
            let relu = &cache.relu_outs[l];
            let mask = &cache.masks[l];
            let mut d_prev = Matrix::zeros(rows, layer.in_dim);
            let grad = &mut hidden_grads[l];
            for b in 0..rows {
                let d_out_row = d_act.row(b);
                let relu_row = relu.row(b);
                let in_row = input.row(b);
                let dprev_row = d_prev.row_mut(b);
                for o in 0..layer.out_dim {
                    let mut dz = d_out_row[o];
                    if let Some(m) = mask {
                        dz *= m.get(b, o);
                    }
                    if relu_row[o] <= 0.0 {
                        continue;
                    }
                    grad.bias[o] += dz;
                    let wrow = &layer.weights[o * layer.in_dim..(o + 1) * layer.in_dim];
                    let grow = &mut grad.weights[o * layer.in_dim..(o + 1) * layer.in_dim];
                    for i in 0..layer.in_dim {
                        grow[i] += dz * in_row[i];
                        dprev_row[i] += dz * wrow[i];
                    }
                }
            }
            d_act = d_prev;
        }

        // d_act now holds the gradient at the quantization layer output.
        let thresholds = match &self.quant {
            Some(QuantLayer::Soft(layer)) => {
                let sig = cache
                    .sigmoids
                    .as_ref()
                    .expect("soft forward caches sigmoids");
                let mut g = vec![0.0; layer.thresholds_flat().len()];
                for b in 0..rows {
                    layer.backward_row(d_act.row(b), sig.row(b), &mut g);
                }
                Some(g)
            }
            _ => None,
        };

        Ok(Gradients { hidden: hidden_grads, output: out_grad, thresholds })
    }

    /// Mutable views of every parameter block, in the canonical order used
    /// by the optimizer: hidden (weights, bias) pairs, output (weights,
    /// bias), then soft thresholds.
    pub fn param_blocks_mut(&mut self) -> Vec<&mut [f64]> {
        let mut blocks: Vec<&mut [f64]> = Vec::new();
        for layer in self.hidden.iter_mut() {
            let DenseLayer { weights, bias, .. } = layer;
            blocks.push(weights);
            blocks.push(bias);
        }
        {
            let DenseLayer { weights, bias, .. } = &mut self.output;
            blocks.push(weights);
            blocks.push(bias);
        }
        if let Some(QuantLayer::Soft(l)) = &mut self.quant {
            blocks.push(l.thresholds_flat_mut());
        }
        blocks
    }
}

#[derive(Debug, Clone)]
pub struct ForwardCache {
    quant_out: Matrix,
    sigmoids: Option<Matrix>,
    relu_outs: Vec<Matrix>,
    activations: Vec<Matrix>,
    masks: Vec<Option<Matrix>>,
    pub predictions: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct LayerGrad {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl LayerGrad {
    fn zeros(layer: &DenseLayer) -> Self {
        LayerGrad {
            weights: vec![0.0; layer.weights.len()],
            bias: vec![0.0; layer.bias.len()],
        }
    }
}

/// Per-parameter gradients mirroring the network's shapes.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub hidden: Vec<LayerGrad>,
    pub output: LayerGrad,
    pub thresholds: Option<Vec<f64>>,
}

impl Gradients {
    /// Blocks in the same canonical order as `DenseNet::param_blocks_mut`.
    pub fn blocks(&self) -> Vec<&[f64]> {
        let mut blocks: Vec<&[f64]> = Vec::new();
        for g in &self.hidden {
            blocks.push(&g.weights);
            blocks.push(&g.bias);
        }
        blocks.push(&self.output.weights);
        blocks.push(&self.output.bias);
        if let Some(t) = &self.thresholds {
            blocks.push(t);
        }
        blocks
    }
}

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// Adam state (first/second moment buffers), lazily shaped on first step.
#[derive(Debug, Clone, Default)]
pub struct Adam {
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new() -> Self {
        Adam::default()
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, params: &mut [&mut [f64]], grads: &[&[f64]], lr: f64) {
        assert_eq!(params.len(), grads.len(), "parameter/gradient block mismatch");
        if self.m.is_empty() {
            self.m = params.iter().map(|p| vec![0.0; p.len()]).collect();
            self.v = params.iter().map(|p| vec![0.0; p.len()]).collect();
        }
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - ADAM_BETA1.powi(t);
        let bc2 = 1.0 - ADAM_BETA2.powi(t);
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            for i in 0..p.len() {
                m[i] = ADAM_BETA1 * m[i] + (1.0 - ADAM_BETA1) * g[i];
                v[i] = ADAM_BETA2 * v[i] + (1.0 - ADAM_BETA2) * g[i] * g[i];
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                p[i] -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
            }
        }
    }
}

/// One Adam update of the whole network from a gradient tape.
pub fn adam_step(net: &mut DenseNet, opt: &mut Adam, tape: &Gradients, lr: f64) {
    let grads = tape.blocks();
    let mut params = net.param_blocks_mut();
    opt.step(&mut params, &grads, lr);
}

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: u32,
    pub dropout_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
    pub schedule: TemperatureSchedule,
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch size must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::InvalidConfig(format!(
                "dropout rate must be in [0, 1), got {}",
                self.dropout_rate
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    /// Mean training MSE per epoch, in the order the batches were seen.
    pub epoch_losses: Vec<f64>,
}

pub fn mse(predictions: &[f64], targets: &[f64]) -> f64 {
    assert_eq!(predictions.len(), targets.len());
    if predictions.is_empty() {
        return 0.0;
    }
    predictions
        .iter()
        .zip(targets)
        .map(|(p, y)| (p - y) * (p - y))
        .sum::<f64>()
        / predictions.len() as f64
}

/// Minibatch Adam training. Fully deterministic given the config seed: the
/// same seed yields bit-identical parameters and loss history. The
/// temperature (when a soft layer is present) follows the schedule once per
/// epoch and lands on its final value after the last epoch.
pub fn train(net: &mut DenseNet, x: &Matrix, y: &[f64], cfg: &TrainConfig) -> Result<TrainReport> {
    cfg.validate()?;
    if x.rows() != y.len() {
        return Err(Error::DimensionMismatch {
            context: "training rows vs targets",
            expected: x.rows(),
            got: y.len(),
        });
    }
    net.set_dropout_rate(cfg.dropout_rate);
    let soft = matches!(net.quant(), Some(QuantLayer::Soft(_)));
    if soft && cfg.schedule.total_epochs != cfg.epochs && cfg.epochs > 0 {
        return Err(Error::InvalidConfig(format!(
            "temperature schedule spans {} epochs but training runs {}",
            cfg.schedule.total_epochs, cfg.epochs
        )));
    }
    let mut report = TrainReport { epoch_losses: Vec::with_capacity(cfg.epochs as usize) };
    if cfg.epochs == 0 {
        return Ok(report);
    }
    let n = x.rows();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut opt = Adam::new();
    let mut order: Vec<usize> = (0..n).collect();
    for epoch in 0..cfg.epochs {
        if soft {
            let tau = cfg.schedule.tau_at(epoch)?;
            if let Some(QuantLayer::Soft(l)) = net.quant_mut() {
                l.set_tau(tau)?;
            }
        }
        shuffle(&mut order, &mut rng);
        let mut epoch_sse = 0.0;
        for (batch_idx, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let xb = x.select_rows(chunk);
            let yb: Vec<f64> = chunk.iter().map(|&i| y[i]).collect();
            let cache = net.forward_train(&xb, &mut rng)?;
            let loss = mse(&cache.predictions, &yb);
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, batch: batch_idx });
            }
            epoch_sse += loss * chunk.len() as f64;
            let tape = net.backward(&cache, &yb)?;
            adam_step(net, &mut opt, &tape, cfg.learning_rate);
        }
        report.epoch_losses.push(epoch_sse / n as f64);
    }
    if soft {
        let tau = cfg.schedule.tau_at(cfg.epochs)?;
        if let Some(QuantLayer::Soft(l)) = net.quant_mut() {
            l.set_tau(tau)?;
        }
    }
    Ok(report)
}

/// Fisher-Yates with the given RNG; kept local so the shuffle order is part
/// of this crate's determinism contract rather than a dependency's.
fn shuffle(order: &mut [usize], rng: &mut impl Rng) {
    for i in (1..order.len()).rev() {
        let j = rng.random_range(0..=i);
        order.swap(i, j);
    }
}

/// Linear head reproducing midpoint decoding from a staircase bit vector:
/// bias v_0 and weights w_m = v_m - v_{m-1}.
pub fn midpoint_head(set: &ThresholdSet) -> Result<(Vec<f64>, f64)> {
    let m = set.max_code() as usize;
    let values: Vec<f64> = (0..=m)
        .map(|c| decode_midpoint(crate::quant::Code(c as u16), set))
        .collect::<Result<_>>()?;
    let weights = (1..=m).map(|i| values[i] - values[i - 1]).collect();
    Ok((weights, values[0]))
}

/// Builds the stacked bitwise input for a batch under fixed threshold sets.
/// Test and tooling helper; the training path does this internally.
pub fn bitwise_input(batch: &Matrix, sets: &[ThresholdSet]) -> Matrix {
    let m: usize = sets.iter().map(|s| s.thresholds().len()).sum();
    let mut out = Matrix::zeros(batch.rows(), m);
    for b in 0..batch.rows() {
        let row = batch.row(b);
        let orow = out.row_mut(b);
        let mut offset = 0;
        for (k, set) in sets.iter().enumerate() {
            let bits = quantize_bitwise(row[k], set);
            for (j, &bit) in bits.bits().iter().enumerate() {
                orow[offset + j] = if bit { 1.0 } else { 0.0 };
            }
            offset += bits.len();
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quant::{fit_quantile, quantize_midpoint};
    use rand::Rng;

    fn schedule(epochs: u32) -> TemperatureSchedule {
        TemperatureSchedule::exponential(0.001, epochs.max(1)).unwrap()
    }

    fn cfg(epochs: u32, lr: f64, seed: u64) -> TrainConfig {
        TrainConfig {
            learning_rate: lr,
            epochs,
            dropout_rate: 0.0,
            batch_size: 16,
            seed,
            schedule: schedule(epochs),
        }
    }

    #[test]
    fn zero_weight_net_predicts_zero() {
        let hidden = vec![DenseLayer::from_parts(vec![0.0; 6], vec![0.0; 2], 3, 2).unwrap()];
        let output = DenseLayer::from_parts(vec![0.0; 2], vec![0.0], 2, 1).unwrap();
        let net = DenseNet::from_parts(3, None, hidden, output, 0.0).unwrap();
        let batch = Matrix::from_rows(&[vec![1.0, -2.0, 3.0], vec![0.5, 0.5, 0.5]]);
        assert_eq!(net.predict(&batch).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn identity_single_layer() {
        let output = DenseLayer::from_parts(vec![1.0], vec![0.0], 1, 1).unwrap();
        let net = DenseNet::from_parts(1, None, vec![], output, 0.0).unwrap();
        let batch = Matrix::from_rows(&[vec![0.25], vec![-7.5]]);
        assert_eq!(net.predict(&batch).unwrap(), vec![0.25, -7.5]);
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let net = DenseNet::new(3, None, 1, 4, 0.0, 1).unwrap();
        let batch = Matrix::from_rows(&[vec![1.0, 2.0]]);
        assert!(matches!(
            net.predict(&batch),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn midpoint_head_reproduces_midpoint_quantization() {
        let mut rng = ChaCha8Rng::seed_from_u64(51);
        let data: Vec<f64> = (0..500).map(|_| rng.random_range(-2.0..2.0)).collect();
        let set = fit_quantile(&data, 3).unwrap();
        let (w, b) = midpoint_head(&set).unwrap();
        let m = set.max_code() as usize;
        let layer = DenseLayer::from_parts(w, vec![b], m, 1).unwrap();
        for _ in 0..1000 {
            let x = rng.random_range(-3.0..3.0);
            let input = bitwise_input(&Matrix::from_rows(&[vec![x]]), std::slice::from_ref(&set));
            let got = layer.forward_linear(&input).get(0, 0);
            let expect = quantize_midpoint(x, &set);
            assert!(
                (got - expect).abs() <= 1e-12 * expect.abs().max(1.0),
                "x={x}: {got} vs {expect}"
            );
        }
    }

    #[test]
    fn backward_zero_error_gives_zero_gradients() {
        let mut net = DenseNet::new(2, None, 1, 3, 0.0, 7).unwrap();
        let batch = Matrix::from_rows(&[vec![0.3, -0.4], vec![1.0, 0.2]]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let cache = net.forward_train(&batch, &mut rng).unwrap();
        let targets = cache.predictions.clone();
        let tape = net.backward(&cache, &targets).unwrap();
        for block in tape.blocks() {
            assert!(block.iter().all(|&g| g == 0.0));
        }
        // And a zero-gradient Adam step leaves parameters untouched.
        let before: Vec<Vec<f64>> = net.param_blocks_mut().iter().map(|b| b.to_vec()).collect();
        let mut opt = Adam::new();
        adam_step(&mut net, &mut opt, &tape, 0.1);
        let after: Vec<Vec<f64>> = net.param_blocks_mut().iter().map(|b| b.to_vec()).collect();
        assert_eq!(before, after);
    }

    #[test]
    fn single_neuron_weight_gradient_closed_form() {
        let output = DenseLayer::from_parts(vec![0.7], vec![0.1], 1, 1).unwrap();
        let net = DenseNet::from_parts(1, None, vec![], output, 0.0).unwrap();
        let x = 1.3;
        let y = -0.4;
        let batch = Matrix::from_rows(&[vec![x]]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let cache = net.forward_train(&batch, &mut rng).unwrap();
        let pred = cache.predictions[0];
        let tape = net.backward(&cache, &[y]).unwrap();
        assert!((tape.output.weights[0] - 2.0 * (pred - y) * x).abs() < 1e-14);
        assert!((tape.output.bias[0] - 2.0 * (pred - y)).abs() < 1e-14);
    }

    // Finite differences are only meaningful away from ReLU kinks: a unit
    // whose pre-activation sits within the step size of zero flips sign
    // under perturbation and corrupts the difference quotient.
    fn assert_relu_margin(net: &DenseNet, batch: &Matrix, margin: f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let cache = net.forward_train(batch, &mut rng).unwrap();
        let mut input = cache.quant_out.clone();
        for (l, layer) in net.hidden.iter().enumerate() {
            let z = layer.forward_linear(&input);
            let closest = z.data().iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
            assert!(
                closest > margin,
                "layer {l} has a pre-activation {closest} from the ReLU kink; pick another seed"
            );
            input = cache.activations[l].clone();
        }
    }

    fn finite_difference_check(net: &DenseNet, batch: &Matrix, targets: &[f64]) {
        assert_relu_margin(net, batch, 1e-3);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let cache = net.forward_train(batch, &mut rng).unwrap();
        let tape = net.backward(&cache, targets).unwrap();
        let grads: Vec<Vec<f64>> = tape.blocks().iter().map(|b| b.to_vec()).collect();

        let loss_of = |n: &DenseNet| {
            let mut r = ChaCha8Rng::seed_from_u64(0);
            let c = n.forward_train(batch, &mut r).unwrap();
            mse(&c.predictions, targets)
        };
        let h = 1e-5;
        for (bi, block) in grads.iter().enumerate() {
            for j in 0..block.len() {
                let mut up = net.clone();
                up.param_blocks_mut()[bi][j] += h;
                let mut dn = net.clone();
                dn.param_blocks_mut()[bi][j] -= h;
                let fd = (loss_of(&up) - loss_of(&dn)) / (2.0 * h);
                let an = grads[bi][j];
                let denom = an.abs().max(fd.abs()).max(1e-6);
                assert!(
                    ((an - fd) / denom).abs() < 1e-4,
                    "block {bi} param {j}: analytic {an} vs fd {fd}"
                );
            }
        }
    }

    #[test]
    fn gradients_match_finite_differences_fp() {
        let net = DenseNet::new(3, None, 2, 4, 0.0, 101).unwrap();
        let batch = Matrix::from_rows(&[
            vec![0.5, -0.2, 0.8],
            vec![-1.0, 0.3, 0.1],
            vec![0.2, 0.9, -0.6],
        ]);
        finite_difference_check(&net, &batch, &[0.3, -0.5, 1.2]);
    }

    #[test]
    fn gradients_match_finite_differences_soft_modes() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let data: Vec<f64> = (0..200).map(|_| rng.random_range(-1.5..1.5)).collect();
        for mode in [SoftMode::Sum, SoftMode::Bitwise] {
            let sets = vec![
                fit_quantile(&data, 2).unwrap(),
                fit_quantile(&data[50..], 2).unwrap(),
            ];
            let layer = SoftQuantLayer::new(sets, 0.9, mode).unwrap();
            let net = DenseNet::new(2, Some(QuantLayer::Soft(layer)), 1, 4, 0.0, 21).unwrap();
            let batch = Matrix::from_rows(&[vec![0.4, -0.3], vec![-0.9, 1.1]]);
            finite_difference_check(&net, &batch, &[0.7, -0.2]);
        }
    }

    #[test]
    fn adam_descends_constant_gradient() {
        let mut p = vec![0.0f64];
        let mut opt = Adam::new();
        for _ in 0..50 {
            let mut blocks = [p.as_mut_slice()];
            opt.step(&mut blocks, &[&[1.0]], 0.01);
        }
        assert!(p[0] < 0.0);
    }

    #[test]
    fn adam_converges_on_quadratic() {
        // f(p) = (p - 3)^2, minimizer 3.
        let mut p = vec![0.0f64];
        let mut opt = Adam::new();
        for _ in 0..2000 {
            let g = 2.0 * (p[0] - 3.0);
            let mut blocks = [p.as_mut_slice()];
            opt.step(&mut blocks, &[&[g]], 0.01);
        }
        assert!((p[0] - 3.0).abs() < 1e-3, "got {}", p[0]);
    }

    #[test]
    fn train_fits_linear_data() {
        let xs: Vec<Vec<f64>> = (0..200).map(|i| vec![(i as f64 - 100.0) / 100.0]).collect();
        let ys: Vec<f64> = xs.iter().map(|r| 2.0 * r[0]).collect();
        let x = Matrix::from_rows(&xs);
        let mut net = DenseNet::new(1, None, 0, 0, 0.0, 5).unwrap();
        train(&mut net, &x, &ys, &cfg(200, 0.05, 77)).unwrap();
        let preds = net.predict(&x).unwrap();
        assert!(mse(&preds, &ys) < 1e-3);
    }

    #[test]
    fn zero_epochs_leaves_net_unchanged() {
        let mut net = DenseNet::new(2, None, 1, 4, 0.0, 9).unwrap();
        let reference = net.clone();
        let x = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]);
        let report = train(&mut net, &x, &[0.0, 1.0], &cfg(0, 0.01, 1)).unwrap();
        assert!(report.epoch_losses.is_empty());
        let mut a = net;
        let mut b = reference;
        assert_eq!(a.param_blocks_mut(), b.param_blocks_mut());
    }

    #[test]
    fn same_seed_same_history() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let xs: Vec<Vec<f64>> = (0..64)
            .map(|_| vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)])
            .collect();
        let ys: Vec<f64> = xs.iter().map(|r| r[0] - r[1]).collect();
        let x = Matrix::from_rows(&xs);
        let c = TrainConfig { dropout_rate: 0.3, ..cfg(5, 0.01, 123) };
        let run = || {
            let mut net = DenseNet::new(2, None, 2, 8, 0.3, 55).unwrap();
            train(&mut net, &x, &ys, &c).unwrap().epoch_losses
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn exploding_training_reports_epoch_and_batch() {
        let xs: Vec<Vec<f64>> = (0..32).map(|i| vec![1e155 * (i + 1) as f64]).collect();
        let ys = vec![0.0; 32];
        let x = Matrix::from_rows(&xs);
        let mut net = DenseNet::new(1, None, 1, 4, 0.0, 3).unwrap();
        match train(&mut net, &x, &ys, &cfg(3, 1.0, 8)) {
            Err(Error::NonFiniteLoss { .. }) => {}
            other => panic!("expected NonFiniteLoss, got {other:?}"),
        }
    }

    #[test]
    fn dropout_eval_is_identity_and_mean_preserving() {
        let mut net = DenseNet::new(1, None, 1, 1, 0.4, 2).unwrap();
        // Force a known hidden activation: w=1, b=1 so relu output is 2 for x=1.
        {
            let mut blocks = net.param_blocks_mut();
            blocks[0][0] = 1.0;
            blocks[1][0] = 1.0;
            blocks[2][0] = 1.0;
            blocks[3][0] = 0.0;
        }
        let batch = Matrix::from_rows(&[vec![1.0]]);
        // Eval: dropout off, prediction is exactly relu(1 + 1) = 2.
        assert_eq!(net.predict(&batch).unwrap(), vec![2.0]);

        // Training: the masked activation averages to its input.
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let trials = 100_000;
        let mut acc = 0.0;
        for _ in 0..trials {
            let cache = net.forward_train(&batch, &mut rng).unwrap();
            acc += cache.predictions[0];
        }
        let mean = acc / trials as f64;
        assert!((mean - 2.0).abs() < 0.02 * 2.0, "mean {mean}");
    }

    #[test]
    fn fixed_bitwise_quant_layer_shapes() {
        let data: Vec<f64> = (0..100).map(|i| i as f64 / 10.0).collect();
        let sets = vec![fit_quantile(&data, 2).unwrap(), fit_quantile(&data, 2).unwrap()];
        let q = QuantLayer::Fixed { decoder: DecoderKind::Bitwise, sets };
        assert_eq!(q.output_width(), 6);
        let net = DenseNet::new(2, Some(q), 1, 4, 0.0, 1).unwrap();
        let batch = Matrix::from_rows(&[vec![2.0, 7.0]]);
        let z = net.decoded_eval_input(&batch).unwrap();
        assert_eq!(z.cols(), 6);
        for v in z.data() {
            assert!(*v == 0.0 || *v == 1.0);
        }
    }

    #[test]
    fn canonicalized_bitwise_net_keeps_its_function() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let data: Vec<f64> = (0..300).map(|_| rng.random_range(-2.0..2.0)).collect();
        let sets = vec![fit_quantile(&data, 3).unwrap(), fit_quantile(&data[7..], 3).unwrap()];
        let layer = SoftQuantLayer::new(sets, 0.01, SoftMode::Bitwise).unwrap();
        let mut net = DenseNet::new(2, Some(QuantLayer::Soft(layer)), 1, 5, 0.0, 33).unwrap();
        // Scramble the trained order the way gradient steps can.
        if let Some(QuantLayer::Soft(l)) = net.quant_mut() {
            let th = l.thresholds_flat_mut();
            th.swap(0, 4);
            th.swap(2, 6);
            th.swap(8, 13);
        }
        let canonical = net.canonicalized().unwrap();
        match canonical.quant().unwrap() {
            QuantLayer::Fixed { decoder, sets } => {
                assert_eq!(*decoder, DecoderKind::Bitwise);
                for set in sets {
                    let th = set.thresholds();
                    assert!(th.windows(2).all(|w| w[0] < w[1]));
                }
            }
            other => panic!("expected fixed quant, got {other:?}"),
        }
        let batch = Matrix::from_rows(
            &(0..200)
                .map(|_| vec![rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)])
                .collect::<Vec<_>>(),
        );
        let before = net.predict(&batch).unwrap();
        let after = canonical.predict(&batch).unwrap();
        for (a, b) in before.iter().zip(&after) {
            // Same function; only the summation order differs.
            assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0), "{a} vs {b}");
        }
    }

    #[test]
    fn soft_net_eval_uses_hardened_thresholds() {
        let data: Vec<f64> = (0..100).map(|i| i as f64 / 50.0 - 1.0).collect();
        let sets = vec![fit_quantile(&data, 2).unwrap()];
        let layer = SoftQuantLayer::new(sets, 1e-5, SoftMode::Sum).unwrap();
        let net = DenseNet::new(1, Some(QuantLayer::Soft(layer)), 0, 0, 0.0, 4).unwrap();
        // Identity decode feeds the integer code into the head.
        let z = net
            .decoded_eval_input(&Matrix::from_rows(&[vec![-2.0], vec![0.0], vec![2.0]]))
            .unwrap();
        assert_eq!(z.get(0, 0), 0.0);
        assert_eq!(z.get(2, 0), 3.0);
    }
}
