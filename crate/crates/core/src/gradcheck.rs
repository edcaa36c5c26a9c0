//! Finite-difference verification of the analytic and shift-rule gradients.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::kernel::{KernelConfig, KernelParams, Patch, QuantumKernel};
use crate::network::{Mode, Network, Tensor};
use crate::training::cross_entropy;

/// Step for kernel-level central differences.
pub const KERNEL_STEP: f64 = 1e-4;
/// Step for loss-level central differences.
pub const NETWORK_STEP: f64 = 1e-3;
/// Denominator floor for relative deviations; with a 1e-4 relative
/// tolerance this is a 1e-6 absolute floor.
pub const RELATIVE_FLOOR: f64 = 1e-2;

/// Worst deviation found by one check.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Deviation {
    pub max_abs: f64,
    pub max_rel: f64,
    /// Index of the component with the largest scored deviation.
    pub worst_index: usize,
    /// The scored deviation at `worst_index` (absolute or relative,
    /// depending on the check).
    pub worst_score: f64,
    pub checked: usize,
    /// Components whose difference stencil crossed a ReLU or pooling kink,
    /// where central differences do not estimate the derivative.
    pub skipped: usize,
}

impl Deviation {
    fn record(&mut self, index: usize, analytic: f64, numeric: f64, relative_score: bool) {
        let abs = (analytic - numeric).abs();
        let rel = abs / analytic.abs().max(numeric.abs()).max(RELATIVE_FLOOR);
        self.max_abs = self.max_abs.max(abs);
        self.max_rel = self.max_rel.max(rel);
        let score = if relative_score { rel } else { abs };
        if score > self.worst_score || self.checked == 0 {
            self.worst_score = score;
            self.worst_index = index;
        }
        self.checked += 1;
    }

    pub fn passes(&self, tolerance: f64) -> bool {
        self.worst_score <= tolerance
    }
}

/// Shift-rule parameter and pixel gradients versus central differences
/// (absolute deviation) over `instances` random patches and parameters.
/// Parameter components are indexed first, then pixels.
pub fn check_kernel(filter_size: usize, depth: usize, instances: usize, seed: u64) -> Result<Deviation> {
    let config = KernelConfig::new(filter_size, depth)?;
    let kernel = QuantumKernel::new(config);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut dev = Deviation::default();
    let np = config.param_count();
    for _ in 0..instances {
        let pixels: Vec<f64> = (0..config.num_qubits()).map(|_| rng.random_range(-2.0..2.0)).collect();
        let theta: Vec<f64> = (0..np).map(|_| rng.random_range(-PI..PI)).collect();
        let patch = Patch::new(filter_size, pixels.clone())?;
        let params = KernelParams::new(theta.clone(), &config)?;
        let grads = kernel.gradients(&patch, &params, true)?;

        for (j, &g) in grads.params.iter().enumerate() {
            let numeric = central_difference(theta[j], KERNEL_STEP, |v| {
                let mut t = theta.clone();
                t[j] = v;
                kernel.forward(&patch, &KernelParams::new(t, &config)?)
            })?;
            dev.record(j, g, numeric, false);
        }
        for (i, &g) in grads.input.as_deref().unwrap_or_default().iter().enumerate() {
            let numeric = central_difference(pixels[i], KERNEL_STEP, |v| {
                let mut px = pixels.clone();
                px[i] = v;
                kernel.forward(&Patch::new(filter_size, px)?, &params)
            })?;
            dev.record(np + i, g, numeric, false);
        }
    }
    Ok(dev)
}

/// Backpropagated loss gradient versus central differences of the
/// cross-entropy (relative deviation). Dropout should be disabled.
///
/// Components whose `+-h` probes change the network's activation pattern
/// are counted in [`Deviation::skipped`] instead of scored.
pub fn check_network(network: &mut Network, image: &Tensor, label: usize) -> Result<Deviation> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    network.forward(image, Mode::Train, &mut rng)?;
    let analytic = network.backward(label)?;
    let params = network.params();
    let mut probe = network.clone();
    let base_pattern = network.activation_pattern(image)?;
    let mut dev = Deviation::default();
    for (j, &g) in analytic.iter().enumerate() {
        let mut smooth = true;
        let numeric = central_difference(params[j], NETWORK_STEP, |v| {
            let mut p = params.clone();
            p[j] = v;
            probe.set_params(&p)?;
            smooth &= probe.activation_pattern(image)? == base_pattern;
            cross_entropy(&probe.predict(image)?, label)
        })?;
        if smooth {
            dev.record(j, g, numeric, true);
        } else {
            dev.skipped += 1;
        }
    }
    Ok(dev)
}

fn central_difference(x: f64, h: f64, mut f: impl FnMut(f64) -> Result<f64>) -> Result<f64> {
    Ok((f(x + h)? - f(x - h)?) / (2.0 * h))
}
