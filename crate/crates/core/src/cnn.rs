//! Classical convolution and max pooling for the baseline CNN.

use crate::error::{shape_err, Error, Result};
use crate::network::{conv_output_dim, Shape, Tensor};

/// Multi-channel 2-D convolution without bias.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer {
    in_channels: usize,
    out_channels: usize,
    filter: usize,
    stride: usize,
    padding: usize,
    /// `out x in x filter x filter`.
    weights: Vec<f64>,
}

impl ConvLayer {
    pub fn new(in_channels: usize, out_channels: usize, filter: usize, stride: usize, padding: usize) -> Result<Self> {
        if in_channels == 0 || out_channels == 0 || filter == 0 || stride == 0 {
            return Err(Error::Config(format!(
                "conv layer {in_channels}->{out_channels} filter {filter} stride {stride} has a zero dimension"
            )));
        }
        Ok(Self {
            in_channels,
            out_channels,
            filter,
            stride,
            padding,
            weights: vec![0.0; out_channels * in_channels * filter * filter],
        })
    }

    pub fn with_weights(mut self, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != self.weights.len() {
            return Err(shape_err(format!(
                "conv layer needs {} weights, got {}",
                self.weights.len(),
                weights.len()
            )));
        }
        self.weights = weights;
        Ok(self)
    }

    pub fn in_channels(&self) -> usize {
        self.in_channels
    }

    pub fn out_channels(&self) -> usize {
        self.out_channels
    }

    pub fn filter(&self) -> usize {
        self.filter
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    pub fn padding(&self) -> usize {
        self.padding
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub(crate) fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    pub fn param_count(&self) -> usize {
        self.weights.len()
    }

    pub(crate) fn fan_in(&self) -> usize {
        self.in_channels * self.filter * self.filter
    }

    pub fn output_shape(&self, input: Shape) -> Result<Shape> {
        if input.channels != self.in_channels {
            return Err(Error::Config(format!(
                "conv layer expects {} channels, input {input} has {}",
                self.in_channels, input.channels
            )));
        }
        Ok(Shape::new(
            self.out_channels,
            conv_output_dim(input.height, self.filter, self.padding, self.stride)?,
            conv_output_dim(input.width, self.filter, self.padding, self.stride)?,
        ))
    }

    /// Input coordinate for output `(r, c)` and filter tap `(ky, kx)`, or
    /// `None` in the padding.
    #[inline]
    fn source(&self, input: Shape, r: usize, c: usize, ky: usize, kx: usize) -> Option<(usize, usize)> {
        let row = (r * self.stride + ky).checked_sub(self.padding)?;
        let col = (c * self.stride + kx).checked_sub(self.padding)?;
        (row < input.height && col < input.width).then_some((row, col))
    }

    #[inline]
    fn weight_index(&self, o: usize, i: usize, ky: usize, kx: usize) -> usize {
        ((o * self.in_channels + i) * self.filter + ky) * self.filter + kx
    }

    pub fn forward(&self, input: &Tensor) -> Result<Tensor> {
        let ishape = input.shape();
        let oshape = self.output_shape(ishape)?;
        let mut out = Vec::with_capacity(oshape.len());
        for o in 0..self.out_channels {
            for r in 0..oshape.height {
                for c in 0..oshape.width {
                    let mut acc = 0.0;
                    for i in 0..self.in_channels {
                        for ky in 0..self.filter {
                            for kx in 0..self.filter {
                                if let Some((y, x)) = self.source(ishape, r, c, ky, kx) {
                                    acc += self.weights[self.weight_index(o, i, ky, kx)] * input.get(i, y, x);
                                }
                            }
                        }
                    }
                    out.push(acc);
                }
            }
        }
        Tensor::new(oshape, out)
    }

    /// Returns `(d weights, d input)`.
    pub fn backward(&self, input: &Tensor, grad_out: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let ishape = input.shape();
        let oshape = self.output_shape(ishape)?;
        if grad_out.len() != oshape.len() {
            return Err(shape_err(format!(
                "conv upstream gradient has {} values, expected {}",
                grad_out.len(),
                oshape.len()
            )));
        }
        let mut dw = vec![0.0; self.weights.len()];
        let mut dx = vec![0.0; ishape.len()];
        let mut g = grad_out.iter();
        for o in 0..self.out_channels {
            for r in 0..oshape.height {
                for c in 0..oshape.width {
                    let u = *g.next().expect("length checked");
                    if u == 0.0 {
                        continue;
                    }
                    for i in 0..self.in_channels {
                        for ky in 0..self.filter {
                            for kx in 0..self.filter {
                                if let Some((y, x)) = self.source(ishape, r, c, ky, kx) {
                                    let w = self.weight_index(o, i, ky, kx);
                                    dw[w] += u * input.get(i, y, x);
                                    dx[(i * ishape.height + y) * ishape.width + x] += u * self.weights[w];
                                }
                            }
                        }
                    }
                }
            }
        }
        Ok((dw, dx))
    }
}

/// Max pooling with floor semantics on dimensions the window does not
/// divide. Ties go to the first maximum in row-major window order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MaxPoolLayer {
    window: usize,
    stride: usize,
}

impl MaxPoolLayer {
    pub fn new(window: usize, stride: usize) -> Result<Self> {
        if window == 0 || stride == 0 {
            return Err(Error::Config("pool window and stride must be positive".into()));
        }
        Ok(Self { window, stride })
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    fn out_dim(&self, n: usize) -> Result<usize> {
        if n < self.window {
            return Err(Error::Config(format!(
                "pool window {} larger than input {n}",
                self.window
            )));
        }
        Ok((n - self.window) / self.stride + 1)
    }

    pub fn output_shape(&self, input: Shape) -> Result<Shape> {
        Ok(Shape::new(
            input.channels,
            self.out_dim(input.height)?,
            self.out_dim(input.width)?,
        ))
    }

    /// Pooled tensor and, per output, the flat input index it came from.
    pub fn forward(&self, input: &Tensor) -> Result<(Tensor, Vec<usize>)> {
        let ishape = input.shape();
        let oshape = self.output_shape(ishape)?;
        let mut out = Vec::with_capacity(oshape.len());
        let mut argmax = Vec::with_capacity(oshape.len());
        let data = input.data();
        for ch in 0..ishape.channels {
            for r in 0..oshape.height {
                for c in 0..oshape.width {
                    let mut best = (usize::MAX, f64::NEG_INFINITY);
                    for dy in 0..self.window {
                        for dx in 0..self.window {
                            let idx = (ch * ishape.height + r * self.stride + dy) * ishape.width + c * self.stride + dx;
                            if best.0 == usize::MAX || data[idx] > best.1 {
                                best = (idx, data[idx]);
                            }
                        }
                    }
                    argmax.push(best.0);
                    out.push(best.1);
                }
            }
        }
        Ok((Tensor::new(oshape, out)?, argmax))
    }
}
