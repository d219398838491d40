//! Statevector simulation of the two circuit families used by the kernel:
//! the second-order ZZ feature map and the RY/CX real-amplitudes ansatz.
//!
//! Qubit 0 is the least significant bit of the amplitude index.

use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QsimError {
    #[error("qubit index {index} out of range for {n_qubits} qubits")]
    QubitRange { index: usize, n_qubits: usize },
    #[error("controlled gate with control == target ({0})")]
    SameQubits(usize),
    #[error("expected {expected} values, got {got}")]
    Length { expected: usize, got: usize },
    #[error("reps must be at least 1")]
    Reps,
    #[error("statevector for {0} qubits is too large")]
    TooManyQubits(usize),
}

pub type Result<T> = std::result::Result<T, QsimError>;

/// Largest register the simulator accepts.
pub const MAX_QUBITS: usize = 26;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum GateOp {
    H { target: usize },
    Ry { target: usize, angle: f64 },
    Phase { target: usize, angle: f64 },
    Cx { control: usize, target: usize },
}

impl GateOp {
    pub fn target(&self) -> usize {
        match *self {
            GateOp::H { target }
            | GateOp::Ry { target, .. }
            | GateOp::Phase { target, .. }
            | GateOp::Cx { target, .. } => target,
        }
    }

    /// Inverse gate (H and CX are self-inverse).
    pub fn inverse(&self) -> GateOp {
        match *self {
            GateOp::Ry { target, angle } => GateOp::Ry { target, angle: -angle },
            GateOp::Phase { target, angle } => GateOp::Phase { target, angle: -angle },
            g => g,
        }
    }

    fn validate(&self, n_qubits: usize) -> Result<()> {
        let check = |index: usize| {
            if index >= n_qubits {
                Err(QsimError::QubitRange { index, n_qubits })
            } else {
                Ok(())
            }
        };
        check(self.target())?;
        if let GateOp::Cx { control, target } = *self {
            check(control)?;
            if control == target {
                return Err(QsimError::SameQubits(control));
            }
        }
        Ok(())
    }
}

impl fmt::Display for GateOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            GateOp::H { target } => write!(f, "h q[{target}]"),
            GateOp::Ry { target, angle } => write!(f, "ry({angle:.17e}) q[{target}]"),
            GateOp::Phase { target, angle } => write!(f, "p({angle:.17e}) q[{target}]"),
            GateOp::Cx { control, target } => write!(f, "cx q[{control}], q[{target}]"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CircuitSpec {
    pub n_qubits: usize,
    pub ops: Vec<GateOp>,
}

impl CircuitSpec {
    pub fn new(n_qubits: usize) -> Self {
        CircuitSpec { n_qubits, ops: Vec::new() }
    }

    pub fn push(&mut self, op: GateOp) -> Result<()> {
        op.validate(self.n_qubits)?;
        self.ops.push(op);
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.ops.iter().try_for_each(|op| op.validate(self.n_qubits))
    }

    pub fn inverse(&self) -> CircuitSpec {
        CircuitSpec { n_qubits: self.n_qubits, ops: self.ops.iter().rev().map(GateOp::inverse).collect() }
    }
}

/// One gate per line, OpenQASM-like, for diffing against other simulators.
impl fmt::Display for CircuitSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "qreg q[{}];", self.n_qubits)?;
        for op in &self.ops {
            writeln!(f, "{op};")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Statevector {
    n_qubits: usize,
    amplitudes: Vec<Complex64>,
}

impl Statevector {
    /// `|0…0⟩`.
    pub fn zero(n_qubits: usize) -> Result<Self> {
        if n_qubits > MAX_QUBITS {
            return Err(QsimError::TooManyQubits(n_qubits));
        }
        let mut amplitudes = vec![Complex64::new(0.0, 0.0); 1 << n_qubits];
        amplitudes[0] = Complex64::new(1.0, 0.0);
        Ok(Statevector { n_qubits, amplitudes })
    }

    /// Computational basis state `|index⟩`.
    pub fn basis(n_qubits: usize, index: usize) -> Result<Self> {
        let mut s = Self::zero(n_qubits)?;
        if index >= s.amplitudes.len() {
            return Err(QsimError::Length { expected: s.amplitudes.len(), got: index });
        }
        s.amplitudes[0] = Complex64::new(0.0, 0.0);
        s.amplitudes[index] = Complex64::new(1.0, 0.0);
        Ok(s)
    }

    pub fn from_amplitudes(n_qubits: usize, amplitudes: Vec<Complex64>) -> Result<Self> {
        if amplitudes.len() != 1 << n_qubits {
            return Err(QsimError::Length { expected: 1 << n_qubits, got: amplitudes.len() });
        }
        Ok(Statevector { n_qubits, amplitudes })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum()
    }

    /// `⟨self|other⟩`.
    pub fn inner(&self, other: &Statevector) -> Complex64 {
        assert_eq!(self.n_qubits, other.n_qubits, "statevector sizes differ");
        self.amplitudes
            .iter()
            .zip(&other.amplitudes)
            .fold(Complex64::new(0.0, 0.0), |acc, (a, b)| acc + a.conj() * b)
    }

    /// `|⟨self|other⟩|²`.
    pub fn fidelity(&self, other: &Statevector) -> f64 {
        self.inner(other).norm_sqr()
    }

    pub fn apply(&mut self, op: &GateOp) -> Result<()> {
        op.validate(self.n_qubits)?;
        self.apply_unchecked(op);
        Ok(())
    }

    pub fn apply_circuit(&mut self, circuit: &CircuitSpec) -> Result<()> {
        if circuit.n_qubits != self.n_qubits {
            return Err(QsimError::Length { expected: self.n_qubits, got: circuit.n_qubits });
        }
        circuit.validate()?;
        circuit.ops.iter().for_each(|op| self.apply_unchecked(op));
        Ok(())
    }

    fn apply_unchecked(&mut self, op: &GateOp) {
        let amps = &mut self.amplitudes;
        match *op {
            GateOp::H { target } => {
                let bit = 1usize << target;
                let h = FRAC_1_SQRT_2;
                for i in 0..amps.len() {
                    if i & bit == 0 {
                        let (a, b) = (amps[i], amps[i | bit]);
                        amps[i] = (a + b) * h;
                        amps[i | bit] = (a - b) * h;
                    }
                }
            }
            GateOp::Ry { target, angle } => {
                let bit = 1usize << target;
                let (s, c) = (angle / 2.0).sin_cos();
                for i in 0..amps.len() {
                    if i & bit == 0 {
                        let (a, b) = (amps[i], amps[i | bit]);
                        amps[i] = a * c - b * s;
                        amps[i | bit] = a * s + b * c;
                    }
                }
            }
            GateOp::Phase { target, angle } => {
                let bit = 1usize << target;
                let phase = Complex64::from_polar(1.0, angle);
                for (i, a) in amps.iter_mut().enumerate() {
                    if i & bit != 0 {
                        *a *= phase;
                    }
                }
            }
            GateOp::Cx { control, target } => {
                let cbit = 1usize << control;
                let tbit = 1usize << target;
                for i in 0..amps.len() {
                    if i & cbit != 0 && i & tbit == 0 {
                        amps.swap(i, i | tbit);
                    }
                }
            }
        }
    }
}

/// Which qubit pairs are coupled by the entangling layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Entanglement {
    /// Every pair `(i, j)` with `i < j`, lexicographic.
    #[default]
    Full,
    /// Nearest neighbours `(i, i+1)`.
    Linear,
}

impl Entanglement {
    pub fn pairs(self, n_qubits: usize) -> Vec<(usize, usize)> {
        match self {
            Entanglement::Full => (0..n_qubits)
                .flat_map(|i| ((i + 1)..n_qubits).map(move |j| (i, j)))
                .collect(),
            Entanglement::Linear => (1..n_qubits).map(|i| (i - 1, i)).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMapConfig {
    pub n_qubits: usize,
    pub reps: usize,
    pub entanglement: Vec<(usize, usize)>,
}

impl FeatureMapConfig {
    pub fn new(n_qubits: usize, reps: usize, entanglement: Entanglement) -> Self {
        FeatureMapConfig { n_qubits, reps, entanglement: entanglement.pairs(n_qubits) }
    }

    /// Single rep, full entanglement.
    pub fn standard(n_qubits: usize) -> Self {
        Self::new(n_qubits, 1, Entanglement::Full)
    }

    pub fn validate(&self) -> Result<()> {
        if self.reps == 0 {
            return Err(QsimError::Reps);
        }
        validate_pairs(&self.entanglement, self.n_qubits)
    }

    /// ZZ feature map: per rep a Hadamard layer, `P(2zᵢ)` on each qubit, then
    /// for every coupled pair `CX(i→j) · P(2(π−zᵢ)(π−zⱼ)) on j · CX(i→j)`.
    pub fn build(&self, z: &[f64]) -> Result<CircuitSpec> {
        self.validate()?;
        if z.len() != self.n_qubits {
            return Err(QsimError::Length { expected: self.n_qubits, got: z.len() });
        }
        let mut c = CircuitSpec::new(self.n_qubits);
        for _ in 0..self.reps {
            for q in 0..self.n_qubits {
                c.ops.push(GateOp::H { target: q });
            }
            for (q, &zq) in z.iter().enumerate() {
                c.ops.push(GateOp::Phase { target: q, angle: 2.0 * zq });
            }
            for &(i, j) in &self.entanglement {
                let angle = 2.0 * (PI - z[i]) * (PI - z[j]);
                c.ops.push(GateOp::Cx { control: i, target: j });
                c.ops.push(GateOp::Phase { target: j, angle });
                c.ops.push(GateOp::Cx { control: i, target: j });
            }
        }
        Ok(c)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnsatzConfig {
    pub n_qubits: usize,
    pub reps: usize,
    pub entanglement: Vec<(usize, usize)>,
}

impl AnsatzConfig {
    pub fn new(n_qubits: usize, reps: usize, entanglement: Entanglement) -> Self {
        AnsatzConfig { n_qubits, reps, entanglement: entanglement.pairs(n_qubits) }
    }

    pub fn standard(n_qubits: usize) -> Self {
        Self::new(n_qubits, 1, Entanglement::Full)
    }

    pub fn param_count(&self) -> usize {
        self.n_qubits * (self.reps + 1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.reps == 0 {
            return Err(QsimError::Reps);
        }
        validate_pairs(&self.entanglement, self.n_qubits)
    }

    /// RY layer, then per rep a CX entangling layer followed by another RY layer.
    pub fn build(&self, theta: &[f64]) -> Result<CircuitSpec> {
        self.validate()?;
        if theta.len() != self.param_count() {
            return Err(QsimError::Length { expected: self.param_count(), got: theta.len() });
        }
        let n = self.n_qubits;
        let mut c = CircuitSpec::new(n);
        let ry_layer = |c: &mut CircuitSpec, params: &[f64]| {
            for (q, &angle) in params.iter().enumerate() {
                c.ops.push(GateOp::Ry { target: q, angle });
            }
        };
        ry_layer(&mut c, &theta[..n]);
        for rep in 0..self.reps {
            for &(i, j) in &self.entanglement {
                c.ops.push(GateOp::Cx { control: i, target: j });
            }
            ry_layer(&mut c, &theta[(rep + 1) * n..(rep + 2) * n]);
        }
        Ok(c)
    }
}

fn validate_pairs(pairs: &[(usize, usize)], n_qubits: usize) -> Result<()> {
    for &(i, j) in pairs {
        GateOp::Cx { control: i, target: j }.validate(n_qubits)?;
    }
    Ok(())
}

/// Order in which the trainable and data-encoding circuits act on `|0…0⟩`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum StateOrdering {
    /// `V(z)·U(θ)|0⟩`: the ansatz prepares a trainable reference state that
    /// the feature map then rotates. The kernel depends on θ.
    #[default]
    AnsatzFirst,
    /// `U(θ)·V(z)|0⟩`. The same unitary U is applied to every sample, so it
    /// cancels in every overlap and the kernel is independent of θ.
    FeatureMapFirst,
}

pub fn prepare_state(
    fm: &FeatureMapConfig,
    an: &AnsatzConfig,
    z: &[f64],
    theta: &[f64],
    ordering: StateOrdering,
) -> Result<Statevector> {
    if fm.n_qubits != an.n_qubits {
        return Err(QsimError::Length { expected: fm.n_qubits, got: an.n_qubits });
    }
    let feature = fm.build(z)?;
    let ansatz = an.build(theta)?;
    let mut state = Statevector::zero(fm.n_qubits)?;
    match ordering {
        StateOrdering::AnsatzFirst => {
            state.apply_circuit(&ansatz)?;
            state.apply_circuit(&feature)?;
        }
        StateOrdering::FeatureMapFirst => {
            state.apply_circuit(&feature)?;
            state.apply_circuit(&ansatz)?;
        }
    }
    Ok(state)
}
