//! Layer stack shared by the quantum network and the classical baseline.
//!
//! Activations are `channels x height x width` tensors stored
//! channel-major, then row-major. A network's flat parameter vector is the
//! concatenation of its layers' parameters in layer order; within a dense
//! layer the weights come row-major (`out x in`) followed by the bias.

use std::fmt;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::cnn::{ConvLayer, MaxPoolLayer};
use crate::error::{shape_err, Error, Result};
use crate::kernel::{KernelConfig, KernelParams, Patch, QuantumKernel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Shape {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl Shape {
    pub const fn new(channels: usize, height: usize, width: usize) -> Self {
        Self {
            channels,
            height,
            width,
        }
    }

    pub const fn image(height: usize, width: usize) -> Self {
        Self::new(1, height, width)
    }

    pub const fn len(&self) -> usize {
        self.channels * self.height * self.width
    }

    pub const fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}", self.channels, self.height, self.width)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Shape,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Shape, data: Vec<f64>) -> Result<Self> {
        if data.len() != shape.len() {
            return Err(shape_err(format!(
                "shape {shape} needs {} values, got {}",
                shape.len(),
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Shape) -> Self {
        Self {
            shape,
            data: vec![0.0; shape.len()],
        }
    }

    /// A single-channel image.
    pub fn image(height: usize, width: usize, pixels: Vec<f64>) -> Result<Self> {
        Self::new(Shape::image(height, width), pixels)
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, c: usize, r: usize, col: usize) -> f64 {
        self.data[(c * self.shape.height + r) * self.shape.width + col]
    }
}

/// Spatial output size of a convolution, `(w_in - f + 2p) / s + 1`.
///
/// Fails when the filter does not fit or the division is inexact.
pub fn conv_output_dim(w_in: usize, f: usize, p: usize, s: usize) -> Result<usize> {
    if f == 0 || s == 0 {
        return Err(Error::Config(format!(
            "filter size {f} and stride {s} must be positive"
        )));
    }
    let padded = w_in + 2 * p;
    if padded < f {
        return Err(Error::Config(format!(
            "filter {f} does not fit input {w_in} with padding {p}"
        )));
    }
    let span = padded - f;
    if !span.is_multiple_of(s) {
        return Err(Error::Config(format!(
            "conv output dimension (W_in - F + 2P)/S + 1 = ({w_in} - {f} + 2*{p})/{s} + 1 is not an integer"
        )));
    }
    Ok(span / s + 1)
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Whether stochastic layers are active.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// One swept quantum filter. Single channel in, single channel out.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantumConvLayer {
    kernel: QuantumKernel,
    params: KernelParams,
    stride: usize,
    padding: usize,
}

impl QuantumConvLayer {
    pub fn new(config: KernelConfig, stride: usize, padding: usize) -> Result<Self> {
        if stride == 0 {
            return Err(Error::Config("stride must be positive".into()));
        }
        Ok(Self {
            kernel: QuantumKernel::new(config),
            params: KernelParams::zeros(&config),
            stride,
            padding,
        })
    }

    pub fn kernel(&self) -> &QuantumKernel {
        &self.kernel
    }

    pub fn params(&self) -> &KernelParams {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut KernelParams {
        &mut self.params
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    pub fn padding(&self) -> usize {
        self.padding
    }

    pub fn filter_size(&self) -> usize {
        self.kernel.config().filter_size()
    }

    pub fn output_shape(&self, input: Shape) -> Result<Shape> {
        if input.channels != 1 {
            return Err(Error::Config(format!(
                "quantum convolution takes one channel, input has {}",
                input.channels
            )));
        }
        let f = self.filter_size();
        let h = conv_output_dim(input.height, f, self.padding, self.stride)?;
        let w = conv_output_dim(input.width, f, self.padding, self.stride)?;
        Ok(Shape::image(h, w))
    }

    /// Pixel coordinates covered by the patch at output position `(r, c)`;
    /// `None` marks zero padding.
    fn patch_coords(&self, input: Shape, r: usize, c: usize) -> impl Iterator<Item = Option<usize>> + '_ {
        let f = self.filter_size();
        let (top, left) = (r * self.stride, c * self.stride);
        (0..f * f).map(move |k| {
            let row = (top + k / f).checked_sub(self.padding)?;
            let col = (left + k % f).checked_sub(self.padding)?;
            (row < input.height && col < input.width).then(|| row * input.width + col)
        })
    }

    /// Extracts every swept patch, row-major over output positions.
    pub fn patches(&self, input: &Tensor) -> Result<Vec<Patch>> {
        let out = self.output_shape(input.shape)?;
        let f = self.filter_size();
        let mut patches = Vec::with_capacity(out.height * out.width);
        for r in 0..out.height {
            for c in 0..out.width {
                let pixels = self
                    .patch_coords(input.shape, r, c)
                    .map(|idx| idx.map_or(0.0, |i| input.data[i]))
                    .collect();
                patches.push(Patch::new(f, pixels)?);
            }
        }
        Ok(patches)
    }

    /// Evaluates the filter at every sweep position.
    pub fn forward(&self, input: &Tensor) -> Result<Tensor> {
        let (out, _) = self.forward_cached(input)?;
        Ok(out)
    }

    fn forward_cached(&self, input: &Tensor) -> Result<(Tensor, Vec<Patch>)> {
        let shape = self.output_shape(input.shape)?;
        let patches = self.patches(input)?;
        let values = patches
            .par_iter()
            .map(|p| self.kernel.forward(p, &self.params))
            .collect::<Result<Vec<_>>>()?;
        Ok((Tensor::new(shape, values)?, patches))
    }

    fn backward(
        &self,
        input: Shape,
        patches: &[Patch],
        grad_out: &[f64],
        need_input: bool,
    ) -> Result<(Vec<f64>, Option<Vec<f64>>)> {
        let out = self.output_shape(input)?;
        let per_position = patches
            .par_iter()
            .zip(grad_out.par_iter())
            .map(|(patch, &u)| {
                if u == 0.0 {
                    return Ok(None);
                }
                self.kernel.gradients(patch, &self.params, need_input).map(Some)
            })
            .collect::<Result<Vec<_>>>()?;

        // Sequential reduction keeps the sum independent of thread count.
        let mut dparams = vec![0.0; self.params.values().len()];
        let mut dinput = need_input.then(|| vec![0.0; input.len()]);
        for (pos, grads) in per_position.into_iter().enumerate() {
            let Some(grads) = grads else { continue };
            let u = grad_out[pos];
            for (acc, g) in dparams.iter_mut().zip(&grads.params) {
                *acc += u * g;
            }
            if let (Some(dinput), Some(gin)) = (dinput.as_mut(), grads.input.as_ref()) {
                let (r, c) = (pos / out.width, pos % out.width);
                for (idx, g) in self.patch_coords(input, r, c).zip(gin) {
                    if let Some(i) = idx {
                        dinput[i] += u * g;
                    }
                }
            }
        }
        Ok((dparams, dinput))
    }
}

/// Fully connected affine layer.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    inputs: usize,
    outputs: usize,
    /// Row-major `outputs x inputs`.
    weights: Vec<f64>,
    bias: Vec<f64>,
}

impl DenseLayer {
    pub fn new(inputs: usize, outputs: usize) -> Result<Self> {
        if inputs == 0 || outputs == 0 {
            return Err(Error::Config(format!(
                "dense layer {inputs}->{outputs} has an empty side"
            )));
        }
        Ok(Self {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            bias: vec![0.0; outputs],
        })
    }

    pub fn with_params(inputs: usize, outputs: usize, weights: Vec<f64>, bias: Vec<f64>) -> Result<Self> {
        let mut layer = Self::new(inputs, outputs)?;
        if weights.len() != inputs * outputs || bias.len() != outputs {
            return Err(shape_err(format!(
                "dense {inputs}->{outputs} needs {} weights and {outputs} biases",
                inputs * outputs
            )));
        }
        layer.weights = weights;
        layer.bias = bias;
        Ok(layer)
    }

    pub fn inputs(&self) -> usize {
        self.inputs
    }

    pub fn outputs(&self) -> usize {
        self.outputs
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn param_count(&self) -> usize {
        self.inputs * self.outputs + self.outputs
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.inputs {
            return Err(shape_err(format!(
                "dense layer expects {} inputs, got {}",
                self.inputs,
                x.len()
            )));
        }
        Ok(self
            .weights
            .chunks_exact(self.inputs)
            .zip(&self.bias)
            .map(|(row, b)| row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + b)
            .collect())
    }

    fn backward(&self, x: &[f64], grad_out: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut dparams = Vec::with_capacity(self.param_count());
        for &g in grad_out {
            dparams.extend(x.iter().map(|v| g * v));
        }
        dparams.extend_from_slice(grad_out);
        let mut dx = vec![0.0; self.inputs];
        for (row, &g) in self.weights.chunks_exact(self.inputs).zip(grad_out) {
            for (d, w) in dx.iter_mut().zip(row) {
                *d += g * w;
            }
        }
        (dparams, dx)
    }
}

/// Inverted dropout: survivors are scaled by `1 / (1 - rate)` during
/// training, and evaluation is the identity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DropoutLayer {
    rate: f64,
}

impl DropoutLayer {
    pub fn new(rate: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::Config(format!("dropout rate {rate} outside [0, 1)")));
        }
        Ok(Self { rate })
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    /// Returns the output and the applied per-element scale (0 or
    /// `1 / (1 - rate)`; all ones in eval mode).
    pub fn forward(&self, x: &[f64], mode: Mode, rng: &mut dyn RngCore) -> (Vec<f64>, Vec<f64>) {
        if mode == Mode::Eval || self.rate == 0.0 {
            return (x.to_vec(), vec![1.0; x.len()]);
        }
        let keep = 1.0 / (1.0 - self.rate);
        let mask: Vec<f64> = x
            .iter()
            .map(|_| if rng.random::<f64>() < self.rate { 0.0 } else { keep })
            .collect();
        let out = x.iter().zip(&mask).map(|(v, m)| v * m).collect();
        (out, mask)
    }

    /// Seeded convenience wrapper around [`DropoutLayer::forward`].
    pub fn forward_seeded(&self, x: &[f64], mode: Mode, seed: u64) -> (Vec<f64>, Vec<f64>) {
        self.forward(x, mode, &mut ChaCha8Rng::seed_from_u64(seed))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    QuantumConv(QuantumConvLayer),
    Conv(ConvLayer),
    Relu,
    MaxPool(MaxPoolLayer),
    Dropout(DropoutLayer),
    /// Flattens its input.
    Dense(DenseLayer),
}

/// Per-layer state retained between forward and backward.
#[derive(Debug, Clone)]
enum LayerCache {
    None,
    Patches(Vec<Patch>),
    Mask(Vec<f64>),
    Argmax(Vec<usize>),
}

impl Layer {
    pub fn output_shape(&self, input: Shape) -> Result<Shape> {
        match self {
            Layer::QuantumConv(l) => l.output_shape(input),
            Layer::Conv(l) => l.output_shape(input),
            Layer::MaxPool(l) => l.output_shape(input),
            Layer::Relu | Layer::Dropout(_) => Ok(input),
            Layer::Dense(l) => {
                if input.len() != l.inputs {
                    return Err(Error::Config(format!(
                        "dense layer expects {} inputs, previous layer yields {input} = {}",
                        l.inputs,
                        input.len()
                    )));
                }
                Ok(Shape::new(l.outputs, 1, 1))
            }
        }
    }

    pub fn param_count(&self) -> usize {
        match self {
            Layer::QuantumConv(l) => l.params.values().len(),
            Layer::Conv(l) => l.param_count(),
            Layer::Dense(l) => l.param_count(),
            Layer::Relu | Layer::MaxPool(_) | Layer::Dropout(_) => 0,
        }
    }

    fn write_params(&self, out: &mut Vec<f64>) {
        match self {
            Layer::QuantumConv(l) => out.extend_from_slice(l.params.values()),
            Layer::Conv(l) => out.extend_from_slice(l.weights()),
            Layer::Dense(l) => {
                out.extend_from_slice(&l.weights);
                out.extend_from_slice(&l.bias);
            }
            Layer::Relu | Layer::MaxPool(_) | Layer::Dropout(_) => {}
        }
    }

    fn read_params(&mut self, src: &[f64]) {
        match self {
            Layer::QuantumConv(l) => l.params.values_mut().copy_from_slice(src),
            Layer::Conv(l) => l.weights_mut().copy_from_slice(src),
            Layer::Dense(l) => {
                let (w, b) = src.split_at(l.weights.len());
                l.weights.copy_from_slice(w);
                l.bias.copy_from_slice(b);
            }
            Layer::Relu | Layer::MaxPool(_) | Layer::Dropout(_) => {}
        }
    }

    fn initialize(&mut self, rng: &mut ChaCha8Rng) {
        use std::f64::consts::PI;
        match self {
            Layer::QuantumConv(l) => {
                for v in l.params.values_mut() {
                    *v = rng.random_range(-PI..=PI);
                }
            }
            Layer::Conv(l) => {
                let bound = 1.0 / (l.fan_in() as f64).sqrt();
                for v in l.weights_mut() {
                    *v = rng.random_range(-bound..=bound);
                }
            }
            Layer::Dense(l) => {
                let bound = 1.0 / (l.inputs as f64).sqrt();
                for v in &mut l.weights {
                    *v = rng.random_range(-bound..=bound);
                }
                l.bias.fill(0.0);
            }
            Layer::Relu | Layer::MaxPool(_) | Layer::Dropout(_) => {}
        }
    }

    fn forward(&self, input: &Tensor, mode: Mode, rng: &mut dyn RngCore) -> Result<(Tensor, LayerCache)> {
        match self {
            Layer::QuantumConv(l) => {
                let (out, patches) = l.forward_cached(input)?;
                Ok((out, LayerCache::Patches(patches)))
            }
            Layer::Conv(l) => Ok((l.forward(input)?, LayerCache::None)),
            Layer::Relu => {
                let data = input.data.iter().map(|&v| v.max(0.0)).collect();
                Ok((Tensor::new(input.shape, data)?, LayerCache::None))
            }
            Layer::MaxPool(l) => {
                let (out, argmax) = l.forward(input)?;
                Ok((out, LayerCache::Argmax(argmax)))
            }
            Layer::Dropout(l) => {
                let (data, mask) = l.forward(&input.data, mode, rng);
                Ok((Tensor::new(input.shape, data)?, LayerCache::Mask(mask)))
            }
            Layer::Dense(l) => {
                let data = l.forward(&input.data)?;
                Ok((Tensor::new(Shape::new(l.outputs, 1, 1), data)?, LayerCache::None))
            }
        }
    }

    fn backward(
        &self,
        input: &Tensor,
        cache: &LayerCache,
        grad_out: &[f64],
        need_input: bool,
    ) -> Result<(Vec<f64>, Option<Vec<f64>>)> {
        match (self, cache) {
            (Layer::QuantumConv(l), LayerCache::Patches(patches)) => {
                l.backward(input.shape, patches, grad_out, need_input)
            }
            (Layer::Conv(l), _) => {
                let (dw, dx) = l.backward(input, grad_out)?;
                Ok((dw, need_input.then_some(dx)))
            }
            (Layer::Relu, _) => {
                let dx = input
                    .data
                    .iter()
                    .zip(grad_out)
                    .map(|(&x, &g)| if x > 0.0 { g } else { 0.0 })
                    .collect();
                Ok((Vec::new(), Some(dx)))
            }
            (Layer::MaxPool(_), LayerCache::Argmax(argmax)) => {
                let mut dx = vec![0.0; input.shape.len()];
                for (&src, &g) in argmax.iter().zip(grad_out) {
                    dx[src] += g;
                }
                Ok((Vec::new(), Some(dx)))
            }
            (Layer::Dropout(_), LayerCache::Mask(mask)) => {
                let dx = grad_out.iter().zip(mask).map(|(g, m)| g * m).collect();
                Ok((Vec::new(), Some(dx)))
            }
            (Layer::Dense(l), _) => {
                let (dp, dx) = l.backward(&input.data, grad_out);
                Ok((dp, Some(dx)))
            }
            _ => Err(Error::State("layer cache does not match layer kind".into())),
        }
    }
}

/// Activations kept from the last training-mode forward pass.
#[derive(Debug, Clone)]
struct ForwardCache {
    /// Input to each layer.
    inputs: Vec<Tensor>,
    caches: Vec<LayerCache>,
    probs: Vec<f64>,
}

/// A validated layer stack ending in a softmax over `classes` outputs.
#[derive(Debug, Clone)]
pub struct Network {
    input: Shape,
    layers: Vec<Layer>,
    shapes: Vec<Shape>,
    classes: usize,
    cache: Option<ForwardCache>,
}

impl Network {
    /// Validates the shape chain; the final layer must yield `classes`
    /// values.
    pub fn new(input: Shape, layers: Vec<Layer>, classes: usize) -> Result<Self> {
        if classes < 2 {
            return Err(Error::Config(format!("need at least 2 classes, got {classes}")));
        }
        let mut shapes = vec![input];
        for layer in &layers {
            let next = layer.output_shape(*shapes.last().expect("non-empty"))?;
            shapes.push(next);
        }
        let out = shapes.last().expect("non-empty");
        if out.len() != classes {
            return Err(Error::Config(format!(
                "network output {out} has {} values, expected {classes} classes",
                out.len()
            )));
        }
        Ok(Self {
            input,
            layers,
            shapes,
            classes,
            cache: None,
        })
    }

    pub fn input_shape(&self) -> Shape {
        self.input
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    /// Output shape of every layer, preceded by the input shape.
    pub fn shapes(&self) -> &[Shape] {
        &self.shapes
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Layer::param_count).sum()
    }

    /// Per-layer parameter counts, in layer order.
    pub fn param_counts(&self) -> Vec<usize> {
        self.layers.iter().map(Layer::param_count).collect()
    }

    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for layer in &self.layers {
            layer.write_params(&mut out);
        }
        out
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.param_count() {
            return Err(shape_err(format!(
                "network has {} parameters, got {}",
                self.param_count(),
                params.len()
            )));
        }
        let mut offset = 0;
        for layer in &mut self.layers {
            let n = layer.param_count();
            layer.read_params(&params[offset..offset + n]);
            offset += n;
        }
        Ok(())
    }

    /// Seeded initialization: quantum angles uniform in `[-pi, pi]`, weights
    /// uniform in `+-1/sqrt(fan_in)`, biases zero.
    pub fn initialize(&mut self, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for layer in &mut self.layers {
            layer.initialize(&mut rng);
        }
    }

    /// Sets the rate of every dropout layer.
    pub fn set_dropout(&mut self, rate: f64) -> Result<()> {
        for layer in &mut self.layers {
            if let Layer::Dropout(d) = layer {
                *d = DropoutLayer::new(rate)?;
            }
        }
        Ok(())
    }

    fn check_input(&self, image: &Tensor) -> Result<()> {
        if image.shape != self.input {
            return Err(shape_err(format!(
                "network takes {} input, got {}",
                self.input, image.shape
            )));
        }
        Ok(())
    }

    /// Eval-mode class probabilities. Does not touch the training cache.
    pub fn predict(&self, image: &Tensor) -> Result<Vec<f64>> {
        self.check_input(image)?;
        // Eval mode draws nothing from the generator.
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut act = image.clone();
        for layer in &self.layers {
            act = layer.forward(&act, Mode::Eval, &mut rng)?.0;
        }
        Ok(softmax(&act.data))
    }

    /// Eval-mode branch pattern: the sign of every ReLU input and the argmax
    /// of every pooling window. Two parameter vectors with equal patterns
    /// lie in the same piecewise-smooth region of the loss.
    pub fn activation_pattern(&self, image: &Tensor) -> Result<Vec<usize>> {
        self.check_input(image)?;
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut pattern = Vec::new();
        let mut act = image.clone();
        for layer in &self.layers {
            let (next, cache) = layer.forward(&act, Mode::Eval, &mut rng)?;
            match (layer, cache) {
                (Layer::Relu, _) => pattern.extend(act.data.iter().map(|&v| usize::from(v > 0.0))),
                (_, LayerCache::Argmax(idx)) => pattern.extend(idx),
                _ => {}
            }
            act = next;
        }
        Ok(pattern)
    }

    /// Forward pass. In train mode dropout masks come from `rng` and all
    /// activations are cached for [`Network::backward`].
    pub fn forward(&mut self, image: &Tensor, mode: Mode, rng: &mut dyn RngCore) -> Result<Vec<f64>> {
        self.check_input(image)?;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut act = image.clone();
        for layer in &self.layers {
            let (next, cache) = layer.forward(&act, mode, rng)?;
            inputs.push(act);
            caches.push(cache);
            act = next;
        }
        let probs = softmax(&act.data);
        self.cache = match mode {
            Mode::Train => Some(ForwardCache {
                inputs,
                caches,
                probs: probs.clone(),
            }),
            Mode::Eval => None,
        };
        Ok(probs)
    }

    /// Gradient of the cross-entropy loss for `label` with respect to every
    /// parameter, in [`Network::params`] order. Consumes the cache left by
    /// the last training-mode forward pass.
    pub fn backward(&mut self, label: usize) -> Result<Vec<f64>> {
        if label >= self.classes {
            return Err(Error::Index {
                index: label,
                limit: self.classes,
            });
        }
        let cache = self
            .cache
            .take()
            .ok_or_else(|| Error::State("backward called without a training-mode forward pass".into()))?;

        let mut grad: Vec<f64> = cache.probs.clone();
        grad[label] -= 1.0;

        let mut per_layer = vec![Vec::new(); self.layers.len()];
        for (idx, layer) in self.layers.iter().enumerate().rev() {
            if idx == 0 && layer.param_count() == 0 {
                break;
            }
            let (dp, dx) = layer.backward(&cache.inputs[idx], &cache.caches[idx], &grad, idx > 0)?;
            per_layer[idx] = dp;
            match dx {
                Some(dx) => grad = dx,
                None => break,
            }
        }
        Ok(per_layer.concat())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conv_output_dim_cases() {
        assert_eq!(conv_output_dim(30, 3, 0, 1).unwrap(), 28);
        assert_eq!(conv_output_dim(28, 2, 0, 2).unwrap(), 14);
        assert!(matches!(conv_output_dim(30, 3, 0, 2), Err(Error::Config(_))));
        assert!(matches!(conv_output_dim(2, 5, 1, 1), Err(Error::Config(_))));
        assert_eq!(conv_output_dim(2, 5, 2, 1).unwrap(), 2);
    }

    #[test]
    fn softmax_cases() {
        assert_eq!(softmax(&[0.0, 0.0]), vec![0.5, 0.5]);
        for p in softmax(&[7.0, 7.0, 7.0]) {
            assert!((p - 1.0 / 3.0).abs() < 1e-15);
        }
        let p = softmax(&[2f64.ln(), 0.0]);
        assert!((p[0] - 2.0 / 3.0).abs() < 1e-15 && (p[1] - 1.0 / 3.0).abs() < 1e-15);
        let p = softmax(&[500.0, -500.0, 0.0]);
        assert!(p.iter().all(|v| v.is_finite() && (0.0..=1.0).contains(v)));
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn dense_identity_and_bias() {
        let eye = DenseLayer::with_params(3, 3, vec![1., 0., 0., 0., 1., 0., 0., 0., 1.], vec![0.; 3]).unwrap();
        assert_eq!(eye.forward(&[1.5, -2.0, 0.25]).unwrap(), vec![1.5, -2.0, 0.25]);
        let b = DenseLayer::with_params(2, 2, vec![0.; 4], vec![0.7, -0.1]).unwrap();
        assert_eq!(b.forward(&[3.0, 4.0]).unwrap(), vec![0.7, -0.1]);
        assert!(matches!(b.forward(&[1.0]), Err(Error::Shape(_))));
    }

    #[test]
    fn dropout_modes() {
        let d = DropoutLayer::new(0.5).unwrap();
        let x = [1.0, 2.0, 3.0];
        assert_eq!(d.forward_seeded(&x, Mode::Eval, 3).0, x.to_vec());
        let z = DropoutLayer::new(0.0).unwrap();
        assert_eq!(z.forward_seeded(&x, Mode::Train, 3).0, x.to_vec());
        let (out, mask) = d.forward_seeded(&[1.0; 64], Mode::Train, 3);
        assert!(out.iter().all(|&v| v == 0.0 || v == 2.0));
        assert_eq!(out, mask);
        assert!(DropoutLayer::new(1.0).is_err());
        assert!(DropoutLayer::new(-0.1).is_err());
    }

    #[test]
    fn empty_network() {
        let net = Network::new(Shape::new(2, 1, 1), vec![], 2).unwrap();
        assert_eq!(net.param_count(), 0);
        assert_eq!(
            net.predict(&Tensor::new(Shape::new(2, 1, 1), vec![0.0, 0.0]).unwrap())
                .unwrap(),
            vec![0.5, 0.5]
        );
    }

    #[test]
    fn backward_requires_forward() {
        let mut net = Network::new(
            Shape::new(2, 1, 1),
            vec![Layer::Dense(DenseLayer::new(2, 2).unwrap())],
            2,
        )
        .unwrap();
        assert!(matches!(net.backward(0), Err(Error::State(_))));
        let x = Tensor::new(Shape::new(2, 1, 1), vec![0.3, -0.2]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        net.forward(&x, Mode::Eval, &mut rng).unwrap();
        assert!(matches!(net.backward(0), Err(Error::State(_))));
        net.forward(&x, Mode::Train, &mut rng).unwrap();
        assert!(net.backward(5).is_err());
    }

    #[test]
    fn shape_chain_rejected_at_build() {
        let conv = QuantumConvLayer::new(KernelConfig::new(3, 1).unwrap(), 2, 0).unwrap();
        let err = Network::new(Shape::image(30, 30), vec![Layer::QuantumConv(conv)], 2).unwrap_err();
        assert!(err.to_string().contains("not an integer"), "{err}");
    }
}
