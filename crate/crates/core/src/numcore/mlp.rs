//! Dense network family shared by actors and critics.
//!
//! Hidden block: linear -> dropout (train only) -> layer-norm (optional) -> relu.
//! The output layer is a bare linear map. Inputs are row-major batches
//! (`batch x features`); single vectors go through as a batch of one.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use super::rng::RngStream;
use crate::error::{Error, Result};

/// Variance floor inside the layer-norm square root.
pub const LAYER_NORM_EPS: f64 = 1e-5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputHead {
    Linear,
    /// Output is `[mean..., log_std...]`, split by the consumer.
    GaussianPair,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NormAffine {
    pub gain: Array1<f64>,
    pub shift: Array1<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    /// `out x in`.
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
    pub norm: Option<NormAffine>,
}

impl Dense {
    pub fn fan_in(&self) -> usize {
        self.weight.ncols()
    }

    pub fn fan_out(&self) -> usize {
        self.weight.nrows()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MlpParams {
    pub layers: Vec<Dense>,
    pub dropout_rate: f64,
    pub hidden_activation: Activation,
    pub output_head: OutputHead,
}

/// Layer sizes plus the per-block options; enough to rebuild a network shape.
#[derive(Clone, Debug, PartialEq)]
pub struct MlpShape {
    pub sizes: Vec<usize>,
    pub layer_norm: bool,
    pub dropout_rate: f64,
    pub output_head: OutputHead,
}

impl MlpShape {
    pub fn new(sizes: &[usize], layer_norm: bool, dropout_rate: f64, head: OutputHead) -> Self {
        Self {
            sizes: sizes.to_vec(),
            layer_norm,
            dropout_rate,
            output_head: head,
        }
    }

    fn check(&self) -> Result<()> {
        if self.sizes.len() < 2 || self.sizes.contains(&0) {
            return Err(Error::config(format!(
                "network needs at least an input and an output size, all positive; got {:?}",
                self.sizes
            )));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::config(format!(
                "dropout_rate must lie in [0, 1), got {}",
                self.dropout_rate
            )));
        }
        Ok(())
    }
}

impl MlpParams {
    /// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights and biases; unit gain, zero shift.
    pub fn init(shape: &MlpShape, rng: &mut RngStream) -> Result<Self> {
        Self::build(shape, |fan_in, _| {
            let bound = 1.0 / (fan_in as f64).sqrt();
            rng.uniform_range(-bound, bound)
        })
    }

    pub fn zeros(shape: &MlpShape) -> Result<Self> {
        let mut p = Self::build(shape, |_, _| 0.0)?;
        for layer in &mut p.layers {
            if let Some(norm) = &mut layer.norm {
                norm.gain.fill(0.0);
            }
        }
        Ok(p)
    }

    fn build(shape: &MlpShape, mut draw: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        shape.check()?;
        let n = shape.sizes.len() - 1;
        let mut layers = Vec::with_capacity(n);
        for k in 0..n {
            let (fan_in, fan_out) = (shape.sizes[k], shape.sizes[k + 1]);
            let weight = Array2::from_shape_fn((fan_out, fan_in), |_| draw(fan_in, fan_out));
            let bias = Array1::from_shape_fn(fan_out, |_| draw(fan_in, fan_out));
            let hidden = k + 1 < n;
            let norm = (hidden && shape.layer_norm).then(|| NormAffine {
                gain: Array1::ones(fan_out),
                shift: Array1::zeros(fan_out),
            });
            layers.push(Dense { weight, bias, norm });
        }
        Ok(Self {
            layers,
            dropout_rate: shape.dropout_rate,
            hidden_activation: Activation::Relu,
            output_head: shape.output_head,
        })
    }

    pub fn shape(&self) -> MlpShape {
        let mut sizes = vec![self.input_dim()];
        sizes.extend(self.layers.iter().map(Dense::fan_out));
        MlpShape {
            sizes,
            layer_norm: self.layers.iter().any(|l| l.norm.is_some()),
            dropout_rate: self.dropout_rate,
            output_head: self.output_head,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].fan_in()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].fan_out()
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for t in z.tensors_mut() {
            t.fill(0.0);
        }
        z
    }

    /// Checks every structural invariant and that all entries are finite.
    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::config("network has no layers"));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::config(format!(
                "dropout_rate must lie in [0, 1), got {}",
                self.dropout_rate
            )));
        }
        for (k, layer) in self.layers.iter().enumerate() {
            if layer.bias.len() != layer.fan_out() {
                return Err(Error::config(format!("layer {k}: bias length mismatch")));
            }
            if k > 0 && layer.fan_in() != self.layers[k - 1].fan_out() {
                return Err(Error::config(format!(
                    "layer {k}: fan-in {} does not match previous fan-out {}",
                    layer.fan_in(),
                    self.layers[k - 1].fan_out()
                )));
            }
            if let Some(norm) = &layer.norm {
                if k + 1 == self.layers.len() {
                    return Err(Error::config("output layer cannot carry a layer norm"));
                }
                if norm.gain.len() != layer.fan_out() || norm.shift.len() != layer.fan_out() {
                    return Err(Error::config(format!("layer {k}: norm affine length mismatch")));
                }
            }
        }
        if self.tensors().iter().any(|t| t.iter().any(|v| !v.is_finite())) {
            return Err(Error::numeric("non-finite parameter entry"));
        }
        Ok(())
    }

    /// Parameter tensors in a fixed order: per layer weight, bias, then gain/shift if present.
    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut out = Vec::with_capacity(self.layers.len() * 4);
        for layer in &self.layers {
            out.push(layer.weight.as_slice().expect("standard layout"));
            out.push(layer.bias.as_slice().expect("standard layout"));
            if let Some(norm) = &layer.norm {
                out.push(norm.gain.as_slice().expect("standard layout"));
                out.push(norm.shift.as_slice().expect("standard layout"));
            }
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::with_capacity(self.layers.len() * 4);
        for layer in &mut self.layers {
            out.push(layer.weight.as_slice_mut().expect("standard layout"));
            out.push(layer.bias.as_slice_mut().expect("standard layout"));
            if let Some(norm) = &mut layer.norm {
                out.push(norm.gain.as_slice_mut().expect("standard layout"));
                out.push(norm.shift.as_slice_mut().expect("standard layout"));
            }
        }
        out
    }

    pub fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.tensors().concat()
    }

    pub fn set_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.num_params() {
            return Err(Error::config(format!(
                "flat parameter vector has {} entries, network has {}",
                flat.len(),
                self.num_params()
            )));
        }
        let mut offset = 0;
        for t in self.tensors_mut() {
            t.copy_from_slice(&flat[offset..offset + t.len()]);
            offset += t.len();
        }
        Ok(())
    }

    /// SHA-256 over every parameter's bit pattern, in tensor order.
    pub fn digest(&self) -> [u8; 32] {
        use sha2::{Digest, Sha256};
        let mut h = Sha256::new();
        for t in self.tensors() {
            for v in t {
                h.update(v.to_bits().to_le_bytes());
            }
        }
        h.finalize().into()
    }

    pub fn same_shape(&self, other: &MlpParams) -> bool {
        self.layers.len() == other.layers.len()
            && self.layers.iter().zip(&other.layers).all(|(a, b)| {
                a.weight.dim() == b.weight.dim()
                    && a.bias.len() == b.bias.len()
                    && a.norm.as_ref().map(|n| n.gain.len()) == b.norm.as_ref().map(|n| n.gain.len())
            })
    }

    pub(crate) fn ensure_same_shape(&self, other: &MlpParams, what: &str) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::config(format!("{what}: parameter shapes differ")))
        }
    }
}

/// How dropout behaves in a forward pass.
pub enum Mode<'a> {
    /// Fresh inverted-dropout masks drawn from the stream.
    Train(&'a mut RngStream),
    /// Replays masks recorded by an earlier train-mode pass (one per hidden layer).
    Frozen(&'a [Option<Array2<f64>>]),
    Eval,
}

/// Everything backward needs from a forward pass.
#[derive(Clone, Debug)]
pub struct ForwardCache {
    inputs: Vec<Array2<f64>>,
    masks: Vec<Option<Array2<f64>>>,
    normalized: Vec<Option<(Array2<f64>, Array1<f64>)>>,
    pre_activation: Vec<Array2<f64>>,
}

impl ForwardCache {
    /// Dropout masks (entries 0 or 1/(1-p)) per hidden layer; `None` where no dropout ran.
    pub fn masks(&self) -> &[Option<Array2<f64>>] {
        &self.masks
    }

    pub fn batch_size(&self) -> usize {
        self.inputs[0].nrows()
    }
}

fn dropout_mask(rows: usize, cols: usize, rate: f64, rng: &mut RngStream) -> Array2<f64> {
    use rand::RngCore;
    let keep = 1.0 - rate;
    // keep iff u32 < keep * 2^32; each u64 draw supplies two u32s, low half first
    let threshold = (keep * 4_294_967_296.0) as u64;
    let scale = 1.0 / keep;
    let pick = |bits: u64| if bits < threshold { scale } else { 0.0 };
    let n = rows * cols;
    let mut data = Vec::with_capacity(n);
    while data.len() + 1 < n {
        let word = rng.next_u64();
        data.push(pick(word & 0xffff_ffff));
        data.push(pick(word >> 32));
    }
    if data.len() < n {
        data.push(pick(u64::from(rng.next_u32())));
    }
    Array2::from_shape_vec((rows, cols), data).expect("mask length matches shape")
}

/// Per-row layer normalization; returns (xhat, 1/sqrt(var + eps)).
pub fn normalize_rows(h: &Array2<f64>) -> (Array2<f64>, Array1<f64>) {
    let width = h.ncols();
    let mut xhat = h.as_standard_layout().into_owned();
    let mut inv_std = Array1::zeros(h.nrows());
    let data = xhat.as_slice_mut().expect("standard layout");
    for (row, inv) in data.chunks_exact_mut(width.max(1)).zip(inv_std.iter_mut()) {
        let mean = row.iter().sum::<f64>() / width as f64;
        let mut var = 0.0;
        for v in row.iter_mut() {
            *v -= mean;
            var += *v * *v;
        }
        *inv = 1.0 / (var / width as f64 + LAYER_NORM_EPS).sqrt();
        for v in row.iter_mut() {
            *v *= *inv;
        }
    }
    (xhat, inv_std)
}

/// Batched forward pass. `input` is `batch x fan_in`.
pub fn forward_batch(
    params: &MlpParams,
    input: ArrayView2<f64>,
    mut mode: Mode<'_>,
) -> Result<(Array2<f64>, ForwardCache)> {
    if input.ncols() != params.input_dim() {
        return Err(Error::config(format!(
            "input width {} does not match network fan-in {}",
            input.ncols(),
            params.input_dim()
        )));
    }
    if input.iter().any(|v| !v.is_finite()) {
        return Err(Error::numeric("non-finite network input"));
    }
    let n_hidden = params.layers.len() - 1;
    if let Mode::Frozen(masks) = &mode {
        if masks.len() != n_hidden {
            return Err(Error::config(format!(
                "expected {n_hidden} frozen masks, got {}",
                masks.len()
            )));
        }
    }

    let mut cache = ForwardCache {
        inputs: Vec::with_capacity(params.layers.len()),
        masks: Vec::with_capacity(n_hidden),
        normalized: Vec::with_capacity(n_hidden),
        pre_activation: Vec::with_capacity(n_hidden),
    };
    let mut x = input.to_owned();
    for (k, layer) in params.layers.iter().enumerate() {
        let mut z = x.dot(&layer.weight.t());
        z += &layer.bias;
        cache.inputs.push(x);
        if k == n_hidden {
            return Ok((z, cache));
        }

        let mask = match &mut mode {
            Mode::Train(rng) if params.dropout_rate > 0.0 => {
                Some(dropout_mask(z.nrows(), z.ncols(), params.dropout_rate, rng))
            }
            Mode::Frozen(masks) => masks[k].clone(),
            _ => None,
        };
        if let Some(m) = &mask {
            if m.dim() != z.dim() {
                return Err(Error::config(format!("layer {k}: dropout mask shape mismatch")));
            }
            z *= m;
        }
        cache.masks.push(mask);

        let y = match &layer.norm {
            Some(norm) => {
                let (xhat, inv_std) = normalize_rows(&z);
                let mut y = &xhat * &norm.gain;
                y += &norm.shift;
                cache.normalized.push(Some((xhat, inv_std)));
                y
            }
            None => {
                cache.normalized.push(None);
                z
            }
        };
        x = y.mapv(|v| v.max(0.0));
        cache.pre_activation.push(y);
    }
    unreachable!("loop returns at the output layer")
}

/// Single-vector convenience wrapper around [`forward_batch`].
pub fn forward(params: &MlpParams, input: &[f64], mode: Mode<'_>) -> Result<(Vec<f64>, ForwardCache)> {
    let view = ArrayView2::from_shape((1, input.len()), input)
        .map_err(|e| Error::config(e.to_string()))?;
    let (out, cache) = forward_batch(params, view, mode)?;
    Ok((out.into_raw_vec_and_offset().0, cache))
}

/// Reverse pass. `output_grad` is dLoss/dOutput per row; parameter gradients are
/// summed over the batch. Also returns dLoss/dInput.
pub fn backward(
    params: &MlpParams,
    cache: &ForwardCache,
    output_grad: ArrayView2<f64>,
) -> Result<(MlpParams, Array2<f64>)> {
    let n_layers = params.layers.len();
    if cache.inputs.len() != n_layers {
        return Err(Error::config("forward cache does not belong to this network"));
    }
    let batch = cache.batch_size();
    if output_grad.dim() != (batch, params.output_dim()) {
        return Err(Error::config(format!(
            "output gradient shape {:?} does not match ({batch}, {})",
            output_grad.dim(),
            params.output_dim()
        )));
    }

    let mut grads = params.zeros_like();
    let mut delta = output_grad.to_owned();
    for k in (0..n_layers).rev() {
        let layer = &params.layers[k];
        if k < n_layers - 1 {
            // relu
            let y = &cache.pre_activation[k];
            delta.zip_mut_with(y, |d, &v| {
                if v <= 0.0 {
                    *d = 0.0
                }
            });
            if let (Some(norm), Some((xhat, inv_std))) = (&layer.norm, &cache.normalized[k]) {
                grads.layers[k].norm = Some(NormAffine {
                    gain: (&delta * xhat).sum_axis(Axis(0)),
                    shift: delta.sum_axis(Axis(0)),
                });

                let dxhat = &delta * &norm.gain;
                let width = dxhat.ncols() as f64;
                let mut dh = dxhat.clone();
                for ((mut row, xrow), inv) in dh
                    .rows_mut()
                    .into_iter()
                    .zip(xhat.rows())
                    .zip(inv_std.iter())
                {
                    let mean_d = row.sum() / width;
                    let mean_dx = row.iter().zip(xrow.iter()).map(|(a, b)| a * b).sum::<f64>() / width;
                    row.zip_mut_with(&xrow, |d, &xh| *d = inv * (*d - mean_d - xh * mean_dx));
                }
                delta = dh;
            }
            if let Some(m) = &cache.masks[k] {
                delta *= m;
            }
        }
        grads.layers[k].weight = delta.t().dot(&cache.inputs[k]).as_standard_layout().into_owned();
        grads.layers[k].bias = delta.sum_axis(Axis(0));
        delta = delta.dot(&layer.weight);
    }
    Ok((grads, delta))
}
