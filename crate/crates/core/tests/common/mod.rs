//! Independent reference implementations shared by the integration tests.
//!
//! Nothing here calls into the circuit builders or simulator: gates are
//! written down as explicit matrices, lifted to the full register with
//! Kronecker products and multiplied out densely.

#![allow(dead_code)]

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use num_complex::Complex64;

pub type Dense = Vec<Vec<Complex64>>;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

pub fn identity(dim: usize) -> Dense {
    (0..dim).map(|i| (0..dim).map(|j| c(if i == j { 1.0 } else { 0.0 }, 0.0)).collect()).collect()
}

pub fn kron(a: &Dense, b: &Dense) -> Dense {
    let (ra, rb) = (a.len(), b.len());
    let mut out = vec![vec![c(0.0, 0.0); ra * rb]; ra * rb];
    for i in 0..ra {
        for j in 0..ra {
            for k in 0..rb {
                for l in 0..rb {
                    out[i * rb + k][j * rb + l] = a[i][j] * b[k][l];
                }
            }
        }
    }
    out
}

pub fn matmul(a: &Dense, b: &Dense) -> Dense {
    let n = a.len();
    let mut out = vec![vec![c(0.0, 0.0); n]; n];
    for i in 0..n {
        for k in 0..n {
            if a[i][k] == c(0.0, 0.0) {
                continue;
            }
            for j in 0..n {
                out[i][j] += a[i][k] * b[k][j];
            }
        }
    }
    out
}

pub fn hadamard() -> Dense {
    let h = FRAC_1_SQRT_2;
    vec![vec![c(h, 0.0), c(h, 0.0)], vec![c(h, 0.0), c(-h, 0.0)]]
}

pub fn ry(angle: f64) -> Dense {
    let (s, co) = (angle / 2.0).sin_cos();
    vec![vec![c(co, 0.0), c(-s, 0.0)], vec![c(s, 0.0), c(co, 0.0)]]
}

pub fn phase(angle: f64) -> Dense {
    vec![vec![c(1.0, 0.0), c(0.0, 0.0)], vec![c(0.0, 0.0), Complex64::from_polar(1.0, angle)]]
}

/// Lifts a one-qubit gate to `n` qubits. Qubit 0 is the least significant
/// index bit, so it is the rightmost Kronecker factor.
pub fn lift(gate: &Dense, target: usize, n: usize) -> Dense {
    let mut full = vec![vec![c(1.0, 0.0)]];
    for q in (0..n).rev() {
        let factor = if q == target { gate.clone() } else { identity(2) };
        full = kron(&full, &factor);
    }
    full
}

/// Controlled-NOT as an explicit permutation matrix.
pub fn cnot(control: usize, target: usize, n: usize) -> Dense {
    let dim = 1 << n;
    let mut m = vec![vec![c(0.0, 0.0); dim]; dim];
    for k in 0..dim {
        let image = if k >> control & 1 == 1 { k ^ (1 << target) } else { k };
        m[image][k] = c(1.0, 0.0);
    }
    m
}

pub fn all_pairs(n: usize) -> Vec<(usize, usize)> {
    (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect()
}

/// Accumulates `U ← G·U` gate by gate.
pub struct Circuit {
    pub n: usize,
    pub unitary: Dense,
}

impl Circuit {
    pub fn new(n: usize) -> Self {
        Circuit { n, unitary: identity(1 << n) }
    }

    fn push(&mut self, g: Dense) {
        self.unitary = matmul(&g, &self.unitary);
    }

    pub fn h(&mut self, t: usize) {
        let g = lift(&hadamard(), t, self.n);
        self.push(g);
    }

    pub fn ry(&mut self, t: usize, a: f64) {
        let g = lift(&ry(a), t, self.n);
        self.push(g);
    }

    pub fn p(&mut self, t: usize, a: f64) {
        let g = lift(&phase(a), t, self.n);
        self.push(g);
    }

    pub fn cx(&mut self, ctl: usize, t: usize) {
        let g = cnot(ctl, t, self.n);
        self.push(g);
    }

    /// Second-order ZZ map: H layer, single phases 2zᵢ, then for every pair
    /// a CX-conjugated phase 2(π−zᵢ)(π−zⱼ) on the second qubit.
    pub fn zz_feature_map(&mut self, z: &[f64], reps: usize) {
        for _ in 0..reps {
            for i in 0..self.n {
                self.h(i);
            }
            for (i, &zi) in z.iter().enumerate() {
                self.p(i, 2.0 * zi);
            }
            for (i, j) in all_pairs(self.n) {
                self.cx(i, j);
                self.p(j, 2.0 * (PI - z[i]) * (PI - z[j]));
                self.cx(i, j);
            }
        }
    }

    /// RY layer, then per rep a full CX ladder followed by another RY layer.
    pub fn real_amplitudes(&mut self, theta: &[f64], reps: usize) {
        let n = self.n;
        for i in 0..n {
            self.ry(i, theta[i]);
        }
        for r in 0..reps {
            for (i, j) in all_pairs(n) {
                self.cx(i, j);
            }
            for i in 0..n {
                self.ry(i, theta[(r + 1) * n + i]);
            }
        }
    }

    /// `U|0…0⟩`: the first column.
    pub fn state(&self) -> Vec<Complex64> {
        self.unitary.iter().map(|row| row[0]).collect()
    }
}

pub fn fidelity(a: &[Complex64], b: &[Complex64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum::<Complex64>().norm_sqr()
}

/// Dominant eigenpairs by power iteration with deflation, for symmetric
/// positive semidefinite matrices given as row vectors.
pub fn power_eigenvalues(a: &[Vec<f64>], count: usize, iters: usize) -> Vec<f64> {
    let n = a.len();
    let mut m: Vec<Vec<f64>> = a.to_vec();
    let mut out = Vec::new();
    for k in 0..count {
        let mut v: Vec<f64> = (0..n).map(|i| 1.0 + ((i * 7 + k * 3) % 5) as f64 * 0.1).collect();
        let mut lambda = 0.0;
        for _ in 0..iters {
            let w: Vec<f64> = (0..n).map(|i| (0..n).map(|j| m[i][j] * v[j]).sum()).collect();
            let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm == 0.0 {
                break;
            }
            lambda = norm;
            v = w.iter().map(|x| x / norm).collect();
        }
        out.push(lambda);
        for i in 0..n {
            for j in 0..n {
                m[i][j] -= lambda * v[i] * v[j];
            }
        }
    }
    out
}
