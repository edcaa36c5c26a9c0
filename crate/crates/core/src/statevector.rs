//! Dense statevector simulator.
//!
//! Qubit 0 is the most significant bit of the basis-state index, so for a
//! two-qubit state the amplitudes are ordered `|00>, |01>, |10>, |11>` with
//! the left digit belonging to qubit 0.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Largest register the simulator will allocate.
pub const MAX_QUBITS: usize = 12;

type Matrix2 = [[Complex64; 2]; 2];

/// Complex amplitudes of an n-qubit pure state.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    num_qubits: usize,
    amplitudes: Vec<Complex64>,
}

/// Outcome tallies from repeatedly measuring one qubit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MeasurementCounts {
    pub zeros: u64,
    pub ones: u64,
    pub shots: u64,
}

impl MeasurementCounts {
    pub fn new(zeros: u64, ones: u64) -> Result<Self> {
        let shots = zeros + ones;
        if shots == 0 {
            return Err(Error::Argument("measurement counts need at least one shot".into()));
        }
        Ok(Self { zeros, ones, shots })
    }

    /// Empirical probability of reading 1.
    pub fn probability_one(&self) -> f64 {
        self.ones as f64 / self.shots as f64
    }

    /// Empirical Pauli-Z expectation, `P(0) - P(1)`.
    pub fn expectation_z(&self) -> f64 {
        (self.zeros as f64 - self.ones as f64) / self.shots as f64
    }
}

impl StateVector {
    /// The all-zeros basis state `|0...0>`.
    pub fn new_zero_state(num_qubits: usize) -> Result<Self> {
        if num_qubits == 0 || num_qubits > MAX_QUBITS {
            return Err(Error::Config(format!(
                "qubit count {num_qubits} outside 1..={MAX_QUBITS}"
            )));
        }
        let mut amplitudes = vec![Complex64::new(0.0, 0.0); 1 << num_qubits];
        amplitudes[0] = Complex64::new(1.0, 0.0);
        Ok(Self { num_qubits, amplitudes })
    }

    /// Builds a state from raw amplitudes. The vector must have power-of-two
    /// length; it is not renormalized.
    pub fn from_amplitudes(amplitudes: Vec<Complex64>) -> Result<Self> {
        let len = amplitudes.len();
        if len < 2 || !len.is_power_of_two() {
            return Err(Error::Shape(format!(
                "amplitude count {len} is not a power of two >= 2"
            )));
        }
        let num_qubits = len.trailing_zeros() as usize;
        if num_qubits > MAX_QUBITS {
            return Err(Error::Config(format!(
                "qubit count {num_qubits} outside 1..={MAX_QUBITS}"
            )));
        }
        Ok(Self { num_qubits, amplitudes })
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    /// Sum of squared amplitude magnitudes.
    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|c| c.norm_sqr()).sum()
    }

    fn check_qubit(&self, qubit: usize) -> Result<()> {
        if qubit >= self.num_qubits {
            return Err(Error::Index {
                index: qubit,
                limit: self.num_qubits,
            });
        }
        Ok(())
    }

    fn mask(&self, qubit: usize) -> usize {
        1 << (self.num_qubits - 1 - qubit)
    }

    /// Applies an arbitrary 2x2 matrix to one qubit.
    pub fn apply_single(&mut self, qubit: usize, m: &Matrix2) -> Result<&mut Self> {
        self.check_qubit(qubit)?;
        let mask = self.mask(qubit);
        let dim = self.amplitudes.len();
        let mut block = 0;
        while block < dim {
            for i in block..block + mask {
                let j = i | mask;
                let a0 = self.amplitudes[i];
                let a1 = self.amplitudes[j];
                self.amplitudes[i] = m[0][0] * a0 + m[0][1] * a1;
                self.amplitudes[j] = m[1][0] * a0 + m[1][1] * a1;
            }
            block += mask << 1;
        }
        Ok(self)
    }

    /// `Ry(theta) = [[cos t/2, -sin t/2], [sin t/2, cos t/2]]`.
    pub fn apply_ry(&mut self, qubit: usize, theta: f64) -> Result<&mut Self> {
        self.apply_single(qubit, &ry_matrix(theta))
    }

    /// `Rz(phi) = diag(e^{-i phi/2}, e^{+i phi/2})`.
    pub fn apply_rz(&mut self, qubit: usize, phi: f64) -> Result<&mut Self> {
        self.check_qubit(qubit)?;
        let lo = Complex64::from_polar(1.0, -phi / 2.0);
        let hi = Complex64::from_polar(1.0, phi / 2.0);
        let mask = self.mask(qubit);
        for (i, amp) in self.amplitudes.iter_mut().enumerate() {
            *amp *= if i & mask == 0 { lo } else { hi };
        }
        Ok(self)
    }

    /// General rotation `R(alpha, beta, gamma) = Rz(gamma) Ry(beta) Rz(alpha)`;
    /// `alpha` acts first.
    pub fn apply_rot(&mut self, qubit: usize, alpha: f64, beta: f64, gamma: f64) -> Result<&mut Self> {
        self.apply_single(qubit, &rot_matrix(alpha, beta, gamma))
    }

    /// Flips `target` on every basis state whose `control` bit is set.
    pub fn apply_cnot(&mut self, control: usize, target: usize) -> Result<&mut Self> {
        self.check_qubit(control)?;
        self.check_qubit(target)?;
        if control == target {
            return Err(Error::Argument(format!(
                "CNOT control and target are both qubit {control}"
            )));
        }
        let cmask = self.mask(control);
        let tmask = self.mask(target);
        for i in 0..self.amplitudes.len() {
            if i & cmask != 0 && i & tmask == 0 {
                self.amplitudes.swap(i, i | tmask);
            }
        }
        Ok(self)
    }

    /// Probability of measuring 1 on `qubit`.
    pub fn probability_one(&self, qubit: usize) -> Result<f64> {
        self.check_qubit(qubit)?;
        let mask = self.mask(qubit);
        Ok(self
            .amplitudes
            .iter()
            .enumerate()
            .filter(|(i, _)| i & mask != 0)
            .map(|(_, c)| c.norm_sqr())
            .sum())
    }

    /// Pauli-Z expectation `P(0) - P(1)` of one qubit.
    pub fn expectation_z(&self, qubit: usize) -> Result<f64> {
        self.check_qubit(qubit)?;
        let mask = self.mask(qubit);
        let z: f64 = self
            .amplitudes
            .iter()
            .enumerate()
            .map(|(i, c)| if i & mask == 0 { c.norm_sqr() } else { -c.norm_sqr() })
            .sum();
        Ok(z.clamp(-1.0, 1.0))
    }

    /// Draws `shots` independent measurements of one qubit. The state is not
    /// collapsed.
    pub fn sample_qubit(&self, qubit: usize, shots: u64, seed: u64) -> Result<MeasurementCounts> {
        if shots == 0 {
            return Err(Error::Argument("shots must be at least 1".into()));
        }
        let p1 = self.probability_one(qubit)?.clamp(0.0, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ones = (0..shots).filter(|_| rng.random_bool(p1)).count() as u64;
        MeasurementCounts::new(shots - ones, ones)
    }
}

pub(crate) fn ry_matrix(theta: f64) -> Matrix2 {
    let (s, c) = (theta / 2.0).sin_cos();
    [
        [Complex64::new(c, 0.0), Complex64::new(-s, 0.0)],
        [Complex64::new(s, 0.0), Complex64::new(c, 0.0)],
    ]
}

/// `Rz(phi) * Ry(theta)`: the encoding pair, Ry applied first.
pub(crate) fn ry_then_rz_matrix(theta: f64, phi: f64) -> Matrix2 {
    let (s, c) = (theta / 2.0).sin_cos();
    let lo = Complex64::from_polar(1.0, -phi / 2.0);
    let hi = Complex64::from_polar(1.0, phi / 2.0);
    [[lo * c, lo * -s], [hi * s, hi * c]]
}

pub(crate) fn rot_matrix(alpha: f64, beta: f64, gamma: f64) -> Matrix2 {
    // Rz(gamma) Ry(beta) Rz(alpha), multiplied out.
    let (s, c) = (beta / 2.0).sin_cos();
    let sum = (alpha + gamma) / 2.0;
    let diff = (alpha - gamma) / 2.0;
    [
        [Complex64::from_polar(c, -sum), Complex64::from_polar(-s, diff)],
        [Complex64::from_polar(s, -diff), Complex64::from_polar(c, sum)],
    ]
}
