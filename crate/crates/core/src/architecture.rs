//! Model descriptors that build validated [`Network`]s.

use crate::cnn::{ConvLayer, MaxPoolLayer};
use crate::error::{Error, Result};
use crate::kernel::KernelConfig;
use crate::network::{DenseLayer, DropoutLayer, Layer, Network, QuantumConvLayer, Shape};

/// Two stacked quantum convolutions, dropout, and a dense softmax head.
///
/// [`QcnnArchitecture::reference`] is the 472-parameter configuration: a 3x3
/// filter at stride 1 (30 -> 28), a 2x2 filter at stride 2 (28 -> 14), and a
/// 196 -> 2 dense layer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QcnnArchitecture {
    pub input_size: usize,
    pub filter1: usize,
    pub stride1: usize,
    pub filter2: usize,
    pub stride2: usize,
    pub depth: usize,
    pub padding: usize,
    pub dropout: f64,
    pub classes: usize,
}

impl QcnnArchitecture {
    pub fn reference() -> Self {
        Self {
            input_size: 30,
            filter1: 3,
            stride1: 1,
            filter2: 2,
            stride2: 2,
            depth: 2,
            padding: 0,
            dropout: 0.0,
            classes: 2,
        }
    }

    pub fn build(&self) -> Result<Network> {
        let conv1 = QuantumConvLayer::new(KernelConfig::new(self.filter1, self.depth)?, self.stride1, self.padding)?;
        let conv2 = QuantumConvLayer::new(KernelConfig::new(self.filter2, self.depth)?, self.stride2, self.padding)?;
        let input = Shape::image(self.input_size, self.input_size);
        let mid = conv1.output_shape(input)?;
        let flat = conv2.output_shape(mid)?.len();
        Network::new(
            input,
            vec![
                Layer::QuantumConv(conv1),
                Layer::QuantumConv(conv2),
                Layer::Dropout(DropoutLayer::new(self.dropout)?),
                Layer::Dense(DenseLayer::new(flat, self.classes)?),
            ],
            self.classes,
        )
    }
}

impl Default for QcnnArchitecture {
    fn default() -> Self {
        Self::reference()
    }
}

/// Baseline: two bias-free same-padded convolutions, each followed by ReLU
/// and 2x2 max pooling, then a dense softmax head.
///
/// The 30x30 default is the 498-parameter configuration
/// (30 -> 30 -> 15 -> 15 -> 7, dense 98 -> 2).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CnnArchitecture {
    pub input_size: usize,
    pub channels1: usize,
    pub channels2: usize,
    pub filter: usize,
    pub classes: usize,
}

impl CnnArchitecture {
    pub fn reference() -> Self {
        Self {
            input_size: 30,
            channels1: 4,
            channels2: 2,
            filter: 5,
            classes: 2,
        }
    }

    pub fn build(&self) -> Result<Network> {
        if self.filter.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "same padding needs an odd filter, got {}",
                self.filter
            )));
        }
        let pad = self.filter / 2;
        let input = Shape::image(self.input_size, self.input_size);
        let conv1 = ConvLayer::new(1, self.channels1, self.filter, 1, pad)?;
        let conv2 = ConvLayer::new(self.channels1, self.channels2, self.filter, 1, pad)?;
        let pool = MaxPoolLayer::new(2, 2)?;
        let s1 = pool.output_shape(conv1.output_shape(input)?)?;
        let s2 = pool.output_shape(conv2.output_shape(s1)?)?;
        Network::new(
            input,
            vec![
                Layer::Conv(conv1),
                Layer::Relu,
                Layer::MaxPool(pool),
                Layer::Conv(conv2),
                Layer::Relu,
                Layer::MaxPool(pool),
                Layer::Dense(DenseLayer::new(s2.len(), self.classes)?),
            ],
            self.classes,
        )
    }
}

impl Default for CnnArchitecture {
    fn default() -> Self {
        Self::reference()
    }
}

/// Either model family.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Architecture {
    Qcnn(QcnnArchitecture),
    Cnn(CnnArchitecture),
}

impl Architecture {
    pub fn build(&self) -> Result<Network> {
        match self {
            Architecture::Qcnn(a) => a.build(),
            Architecture::Cnn(a) => a.build(),
        }
    }

    pub fn input_size(&self) -> usize {
        match self {
            Architecture::Qcnn(a) => a.input_size,
            Architecture::Cnn(a) => a.input_size,
        }
    }

    pub fn classes(&self) -> usize {
        match self {
            Architecture::Qcnn(a) => a.classes,
            Architecture::Cnn(a) => a.classes,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Architecture::Qcnn(_) => "qcnn",
            Architecture::Cnn(_) => "cnn",
        }
    }
}
