//! The quantum convolutional filter: a variational circuit applied to one
//! n x n image patch.
//!
//! Circuit, for `q = n*n` qubits starting from `|0...0>`:
//!
//! 1. encoding: on qubit `i`, `Ry(atan x_i)` then `Rz(atan x_i^2)`;
//! 2. `depth` repeats of a CNOT ring `(0,1), (1,2), ..., (q-2,q-1), (q-1,0)`
//!    followed by `R(alpha, beta, gamma)` on every qubit;
//! 3. readout of the Pauli-Z expectation of qubit 0.
//!
//! Pixel `k` of the row-major patch drives qubit `k`. Parameters are laid out
//! `[block][qubit][alpha, beta, gamma]`.
//!
//! Every angle in the circuit is the argument of a Pauli rotation, so exact
//! derivatives come from the two-term shift rule.

use std::f64::consts::FRAC_PI_2;

use crate::error::{shape_err, Error, Result};
use crate::statevector::{rot_matrix, ry_then_rz_matrix, StateVector, MAX_QUBITS};

const SHIFT: f64 = FRAC_PI_2;

/// Shape of one quantum filter.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KernelConfig {
    filter_size: usize,
    depth: usize,
}

impl KernelConfig {
    pub fn new(filter_size: usize, depth: usize) -> Result<Self> {
        if filter_size == 0 || depth == 0 {
            return Err(Error::Config(format!(
                "kernel needs positive filter size and depth, got {filter_size} and {depth}"
            )));
        }
        if filter_size * filter_size > MAX_QUBITS {
            return Err(Error::Config(format!(
                "filter size {filter_size} needs {} qubits, limit is {MAX_QUBITS}",
                filter_size * filter_size
            )));
        }
        Ok(Self { filter_size, depth })
    }

    pub fn filter_size(&self) -> usize {
        self.filter_size
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn num_qubits(&self) -> usize {
        self.filter_size * self.filter_size
    }

    /// `3 * n^2 * depth`.
    pub fn param_count(&self) -> usize {
        3 * self.num_qubits() * self.depth
    }
}

/// Trainable rotation angles of one filter.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelParams(Vec<f64>);

impl KernelParams {
    pub fn new(values: Vec<f64>, config: &KernelConfig) -> Result<Self> {
        if values.len() != config.param_count() {
            return Err(shape_err(format!(
                "kernel expects {} parameters, got {}",
                config.param_count(),
                values.len()
            )));
        }
        Ok(Self(values))
    }

    pub fn zeros(config: &KernelConfig) -> Self {
        Self(vec![0.0; config.param_count()])
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }

    /// Index of `(block, qubit, component)` in the flat layout; `component`
    /// is 0 for alpha, 1 for beta, 2 for gamma.
    pub fn index(config: &KernelConfig, block: usize, qubit: usize, component: usize) -> usize {
        (block * config.num_qubits() + qubit) * 3 + component
    }
}

/// A square block of pixels, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Patch {
    size: usize,
    pixels: Vec<f64>,
}

impl Patch {
    pub fn new(size: usize, pixels: Vec<f64>) -> Result<Self> {
        if pixels.len() != size * size {
            return Err(shape_err(format!(
                "{size}x{size} patch needs {} pixels, got {}",
                size * size,
                pixels.len()
            )));
        }
        Ok(Self { size, pixels })
    }

    pub fn zeros(size: usize) -> Self {
        Self {
            size,
            pixels: vec![0.0; size * size],
        }
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }
}

/// Gradients of one filter evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelGradients {
    pub params: Vec<f64>,
    /// Per-pixel derivative, present when requested.
    pub input: Option<Vec<f64>>,
}

/// A configured quantum filter. Evaluation is pure; one kernel may be shared
/// across threads.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QuantumKernel {
    config: KernelConfig,
}

impl QuantumKernel {
    pub fn new(config: KernelConfig) -> Self {
        Self { config }
    }

    pub fn config(&self) -> &KernelConfig {
        &self.config
    }

    pub fn param_count(&self) -> usize {
        self.config.param_count()
    }

    fn check(&self, patch: &Patch, params: &KernelParams) -> Result<()> {
        if patch.size != self.config.filter_size {
            return Err(shape_err(format!(
                "patch is {0}x{0}, kernel is {1}x{1}",
                patch.size, self.config.filter_size
            )));
        }
        if params.0.len() != self.config.param_count() {
            return Err(shape_err(format!(
                "kernel expects {} parameters, got {}",
                self.config.param_count(),
                params.0.len()
            )));
        }
        Ok(())
    }

    /// Encodes the patch into a fresh register.
    pub fn encode(&self, patch: &Patch) -> Result<StateVector> {
        if patch.size != self.config.filter_size {
            return Err(shape_err(format!(
                "patch is {0}x{0}, kernel is {1}x{1}",
                patch.size, self.config.filter_size
            )));
        }
        let (ry, rz) = encoding_angles(&patch.pixels);
        let mut state = StateVector::new_zero_state(self.config.num_qubits())?;
        for q in 0..ry.len() {
            state.apply_single(q, &ry_then_rz_matrix(ry[q], rz[q]))?;
        }
        Ok(state)
    }

    /// Filter output `<Z_0>` in `[-1, 1]`.
    pub fn forward(&self, patch: &Patch, params: &KernelParams) -> Result<f64> {
        self.check(patch, params)?;
        let (ry, rz) = encoding_angles(&patch.pixels);
        Ok(self.evaluate(&ry, &rz, &params.0))
    }

    /// Parameter-shift derivative of the output with respect to every
    /// circuit parameter.
    pub fn grad_params(&self, patch: &Patch, params: &KernelParams) -> Result<Vec<f64>> {
        Ok(self.gradients(patch, params, false)?.params)
    }

    /// Derivative of the output with respect to every pixel of the patch.
    pub fn grad_input(&self, patch: &Patch, params: &KernelParams) -> Result<Vec<f64>> {
        Ok(self.gradients(patch, params, true)?.input.unwrap_or_default())
    }

    /// Parameter gradients, plus pixel gradients when `with_input` is set.
    ///
    /// Costs `2 * param_count` circuit evaluations, and `4 * n^2` more for
    /// the pixels.
    pub fn gradients(&self, patch: &Patch, params: &KernelParams, with_input: bool) -> Result<KernelGradients> {
        self.check(patch, params)?;
        let (mut ry, mut rz) = encoding_angles(&patch.pixels);
        let mut theta = params.0.clone();

        let mut grad = Vec::with_capacity(theta.len());
        for j in 0..theta.len() {
            let orig = theta[j];
            theta[j] = orig + SHIFT;
            let plus = self.evaluate(&ry, &rz, &theta);
            theta[j] = orig - SHIFT;
            let minus = self.evaluate(&ry, &rz, &theta);
            theta[j] = orig;
            grad.push(0.5 * (plus - minus));
        }

        let input = with_input.then(|| {
            patch
                .pixels
                .iter()
                .enumerate()
                .map(|(i, &x)| {
                    let dy = shift_derivative(&mut ry, i, |a| self.evaluate(a, &rz, &theta));
                    let dz = shift_derivative(&mut rz, i, |a| self.evaluate(&ry, a, &theta));
                    // d atan(x)/dx and d atan(x^2)/dx
                    let x2 = x * x;
                    dy / (1.0 + x2) + dz * 2.0 * x / (1.0 + x2 * x2)
                })
                .collect()
        });

        Ok(KernelGradients { params: grad, input })
    }

    /// Runs the circuit for precomputed encoding angles.
    fn evaluate(&self, ry: &[f64], rz: &[f64], theta: &[f64]) -> f64 {
        let nq = self.config.num_qubits();
        let mut state = StateVector::new_zero_state(nq).expect("validated qubit count");
        for q in 0..nq {
            state
                .apply_single(q, &ry_then_rz_matrix(ry[q], rz[q]))
                .expect("qubit in range");
        }
        for block in theta.chunks_exact(3 * nq) {
            if nq > 1 {
                for q in 0..nq - 1 {
                    state.apply_cnot(q, q + 1).expect("distinct qubits");
                }
                state.apply_cnot(nq - 1, 0).expect("distinct qubits");
            }
            for (q, angles) in block.chunks_exact(3).enumerate() {
                state
                    .apply_single(q, &rot_matrix(angles[0], angles[1], angles[2]))
                    .expect("qubit in range");
            }
        }
        state.expectation_z(0).expect("qubit 0 exists")
    }
}

fn encoding_angles(pixels: &[f64]) -> (Vec<f64>, Vec<f64>) {
    pixels.iter().map(|&x| (x.atan(), (x * x).atan())).unzip()
}

fn shift_derivative(angles: &mut [f64], i: usize, eval: impl Fn(&[f64]) -> f64) -> f64 {
    let orig = angles[i];
    angles[i] = orig + SHIFT;
    let plus = eval(angles);
    angles[i] = orig - SHIFT;
    let minus = eval(angles);
    angles[i] = orig;
    0.5 * (plus - minus)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kernel(n: usize, d: usize) -> QuantumKernel {
        QuantumKernel::new(KernelConfig::new(n, d).unwrap())
    }

    #[test]
    fn param_counts() {
        assert_eq!(KernelConfig::new(3, 2).unwrap().param_count(), 54);
        assert_eq!(KernelConfig::new(2, 2).unwrap().param_count(), 24);
        assert_eq!(KernelConfig::new(1, 1).unwrap().param_count(), 3);
        assert_eq!(KernelConfig::new(3, 1).unwrap().num_qubits(), 9);
        assert!(KernelConfig::new(4, 1).is_err());
        assert!(KernelConfig::new(2, 0).is_err());
    }

    #[test]
    fn zero_patch_zero_params_is_identity() {
        for (n, d) in [(1, 1), (2, 1), (2, 2), (3, 2)] {
            let k = kernel(n, d);
            let cfg = *k.config();
            let out = k.forward(&Patch::zeros(n), &KernelParams::zeros(&cfg)).unwrap();
            assert_eq!(out, 1.0);
            let g = k.grad_params(&Patch::zeros(n), &KernelParams::zeros(&cfg)).unwrap();
            assert!(g.iter().all(|v| v.abs() < 1e-12), "{g:?}");
        }
    }

    #[test]
    fn encode_special_values() {
        let k = kernel(1, 1);
        let s = k.encode(&Patch::zeros(1)).unwrap();
        assert_eq!(s, StateVector::new_zero_state(1).unwrap());

        // x = 1 gives Ry(pi/4): <Z> = cos(pi/4).
        let s = k.encode(&Patch::new(1, vec![1.0]).unwrap()).unwrap();
        assert!((s.expectation_z(0).unwrap() - std::f64::consts::FRAC_PI_4.cos()).abs() < 1e-15);

        let s = k.encode(&Patch::new(1, vec![1e300]).unwrap()).unwrap();
        assert!((s.norm_sqr() - 1.0).abs() < 1e-12);
        assert!(s.expectation_z(0).unwrap().abs() < 1e-12);
    }

    #[test]
    fn single_qubit_beta_derivative() {
        let k = kernel(1, 1);
        let cfg = *k.config();
        for beta in [0.3, 1.1] {
            let params = KernelParams::new(vec![0.0, beta, 0.0], &cfg).unwrap();
            let out = k.forward(&Patch::zeros(1), &params).unwrap();
            assert!((out - f64::cos(beta)).abs() < 1e-14);
            let g = k.grad_params(&Patch::zeros(1), &params).unwrap();
            assert!((g[1] + f64::sin(beta)).abs() < 1e-14);
        }
    }

    #[test]
    fn single_qubit_input_derivative() {
        // Zero params: out = cos(atan x), d/dx = -sin(atan x) / (1 + x^2).
        let k = kernel(1, 1);
        let params = KernelParams::zeros(k.config());
        for x in [0.0_f64, 1.0] {
            let patch = Patch::new(1, vec![x]).unwrap();
            let g = k.grad_input(&patch, &params).unwrap();
            let expected = -x.atan().sin() / (1.0 + x * x);
            assert!((g[0] - expected).abs() < 1e-14, "x={x}: {} vs {expected}", g[0]);
        }
    }

    #[test]
    fn shape_errors() {
        let k = kernel(2, 1);
        let params = KernelParams::zeros(k.config());
        assert!(matches!(k.forward(&Patch::zeros(3), &params), Err(Error::Shape(_))));
        assert!(KernelParams::new(vec![0.0; 5], k.config()).is_err());
        assert!(Patch::new(2, vec![0.0; 3]).is_err());
    }
}
