//! Dense-matrix reference simulator built from Kronecker products.

#![allow(dead_code)]

use num_complex::Complex64 as C;

pub type Mat = Vec<Vec<C>>;

pub fn c(re: f64, im: f64) -> C {
    C::new(re, im)
}

pub fn identity(n: usize) -> Mat {
    (0..n)
        .map(|i| (0..n).map(|j| if i == j { c(1.0, 0.0) } else { c(0.0, 0.0) }).collect())
        .collect()
}

pub fn kron(a: &Mat, b: &Mat) -> Mat {
    let (n, m) = (a.len(), b.len());
    let mut out = vec![vec![c(0.0, 0.0); n * m]; n * m];
    for i in 0..n {
        for j in 0..n {
            for k in 0..m {
                for l in 0..m {
                    out[i * m + k][j * m + l] = a[i][j] * b[k][l];
                }
            }
        }
    }
    out
}

pub fn matmul(a: &Mat, b: &Mat) -> Mat {
    let n = a.len();
    let mut out = vec![vec![c(0.0, 0.0); n]; n];
    for i in 0..n {
        for k in 0..n {
            for j in 0..n {
                out[i][j] += a[i][k] * b[k][j];
            }
        }
    }
    out
}

pub fn matvec(a: &Mat, v: &[C]) -> Vec<C> {
    a.iter()
        .map(|row| row.iter().zip(v).map(|(x, y)| x * y).sum())
        .collect()
}

pub fn ry(theta: f64) -> Mat {
    let (s, co) = (theta / 2.0).sin_cos();
    vec![vec![c(co, 0.0), c(-s, 0.0)], vec![c(s, 0.0), c(co, 0.0)]]
}

pub fn rz(phi: f64) -> Mat {
    vec![
        vec![C::from_polar(1.0, -phi / 2.0), c(0.0, 0.0)],
        vec![c(0.0, 0.0), C::from_polar(1.0, phi / 2.0)],
    ]
}

/// `Rz(gamma) Ry(beta) Rz(alpha)`.
pub fn rot(alpha: f64, beta: f64, gamma: f64) -> Mat {
    matmul(&rz(gamma), &matmul(&ry(beta), &rz(alpha)))
}

/// Lifts a single-qubit gate to `n` qubits; qubit 0 is the leftmost factor.
pub fn on_qubit(gate: &Mat, qubit: usize, n: usize) -> Mat {
    let id = identity(2);
    let mut out = vec![vec![c(1.0, 0.0)]];
    for q in 0..n {
        out = kron(&out, if q == qubit { gate } else { &id });
    }
    out
}

/// CNOT as a permutation matrix over basis states.
pub fn cnot(control: usize, target: usize, n: usize) -> Mat {
    let dim = 1 << n;
    let bit = |q: usize| 1 << (n - 1 - q);
    // Row j holds a single one, at the basis state CNOT maps onto j.
    (0..dim)
        .map(|j| {
            let src = if j & bit(control) != 0 { j ^ bit(target) } else { j };
            (0..dim).map(|k| c(f64::from(u8::from(k == src)), 0.0)).collect()
        })
        .collect()
}

pub fn zero_state(n: usize) -> Vec<C> {
    let mut v = vec![c(0.0, 0.0); 1 << n];
    v[0] = c(1.0, 0.0);
    v
}

/// `<Z>` on `qubit` of a state vector.
pub fn expect_z(v: &[C], qubit: usize) -> f64 {
    let n = v.len().trailing_zeros() as usize;
    let bit = 1 << (n - 1 - qubit);
    v.iter()
        .enumerate()
        .map(|(i, a)| if i & bit == 0 { a.norm_sqr() } else { -a.norm_sqr() })
        .sum()
}

/// Every gate of the filter circuit as a full `2^n x 2^n` matrix, in
/// application order: encoding, then per block a CNOT ring and a rotation
/// on every qubit.
pub fn kernel_gates(pixels: &[f64], theta: &[f64], depth: usize) -> Vec<Mat> {
    let n = pixels.len();
    let mut gates = Vec::new();
    for (q, &x) in pixels.iter().enumerate() {
        let enc = matmul(&rz((x * x).atan()), &ry(x.atan()));
        gates.push(on_qubit(&enc, q, n));
    }
    for d in 0..depth {
        if n > 1 {
            for i in 0..n - 1 {
                gates.push(cnot(i, i + 1, n));
            }
            gates.push(cnot(n - 1, 0, n));
        }
        for q in 0..n {
            let t = &theta[(d * n + q) * 3..(d * n + q) * 3 + 3];
            gates.push(on_qubit(&rot(t[0], t[1], t[2]), q, n));
        }
    }
    gates
}

pub fn kernel_unitary(pixels: &[f64], theta: &[f64], depth: usize) -> Mat {
    kernel_gates(pixels, theta, depth)
        .iter()
        .fold(identity(1 << pixels.len()), |u, g| matmul(g, &u))
}

pub fn kernel_reference(pixels: &[f64], theta: &[f64], depth: usize) -> f64 {
    let state = kernel_gates(pixels, theta, depth)
        .iter()
        .fold(zero_state(pixels.len()), |v, g| matvec(g, &v));
    expect_z(&state, 0)
}
