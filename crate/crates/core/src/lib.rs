//! Hybrid quantum-classical convolutional network on a dense statevector
//! simulator, with a classical CNN baseline and a synthetic
//! particle-trajectory image generator.
//!
//! The quantum filter ([`kernel`]) is a variational circuit evaluated on
//! each image patch; its gradients come from the parameter-shift rule, so
//! the whole network ([`network`]) trains end to end with RMSProp
//! ([`training`]).

pub mod architecture;
pub mod cnn;
pub mod data;
pub mod error;
pub mod gradcheck;
pub mod kernel;
pub mod network;
pub mod statevector;
pub mod training;

pub use architecture::{Architecture, CnnArchitecture, QcnnArchitecture};
pub use data::{Dataset, GeneratorConfig, ParticleClass};
pub use error::{Error, Result};
pub use kernel::{KernelConfig, KernelParams, Patch, QuantumKernel};
pub use network::{Mode, Network, Shape, Tensor};
pub use statevector::{MeasurementCounts, StateVector};
pub use training::{EpochMetrics, RmsProp, TrainConfig};
