//! Fidelity kernels `K(zᵢ, zₖ; θ) = |⟨Φ(zᵢ; θ)|Φ(zₖ; θ)⟩|²` over simulated states.
//!
//! Each sample's state is prepared once per θ; Gram entries are then plain
//! inner products, computed in parallel over the upper triangle.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fingerprint;
use crate::linalg::Matrix;
use crate::parallel::{self, Parallelism};
use crate::qsim::{self, AnsatzConfig, FeatureMapConfig, QsimError, StateOrdering, Statevector};

#[derive(Debug, Error)]
pub enum QkernelError {
    #[error(transparent)]
    Qsim(#[from] QsimError),
    #[error("latent dimension {got} does not match {expected} qubits")]
    Dimension { got: usize, expected: usize },
    #[error("kernel csv line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, QkernelError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelKind {
    SymmetricTrain,
    RectangularEval,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelMatrix {
    pub values: Matrix,
    pub kind: KernelKind,
    pub theta_fingerprint: u64,
    pub n_qubits: usize,
}

impl KernelMatrix {
    /// Row-major CSV, one matrix row per line, 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        write_matrix_csv(&mut w, &self.values)
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> std::io::Result<()> {
        let f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_csv(f)
    }
}

pub fn write_matrix_csv<W: Write>(w: &mut W, m: &Matrix) -> std::io::Result<()> {
    let mut out = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    for row in m.row_iter() {
        out.write_record(row.iter().map(|v| format!("{v:.16e}")))?;
    }
    out.flush()
}

/// Parses a matrix written by [`write_matrix_csv`].
pub fn read_matrix_csv<R: Read>(r: R) -> Result<Matrix> {
    let reader = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).from_reader(r);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for record in reader.into_records() {
        let line_of = |p: Option<&csv::Position>| p.map_or(0, |p| p.line() as usize);
        let record = record.map_err(|e| QkernelError::Parse { line: line_of(e.position()), msg: e.to_string() })?;
        let row = record
            .iter()
            .map(str::parse::<f64>)
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| QkernelError::Parse { line: line_of(record.position()), msg: e.to_string() })?;
        rows.push(row);
    }
    Matrix::from_rows(&rows).map_err(|e| QkernelError::Parse { line: 0, msg: e.to_string() })
}

/// Circuit configuration and execution strategy for kernel evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantumKernel {
    pub feature_map: FeatureMapConfig,
    pub ansatz: AnsatzConfig,
    #[serde(default)]
    pub ordering: StateOrdering,
    #[serde(default)]
    pub parallelism: Parallelism,
}

impl QuantumKernel {
    /// Single-rep, fully entangled circuits in ansatz-first order.
    pub fn standard(n_qubits: usize) -> Self {
        QuantumKernel {
            feature_map: FeatureMapConfig::standard(n_qubits),
            ansatz: AnsatzConfig::standard(n_qubits),
            ordering: StateOrdering::AnsatzFirst,
            parallelism: Parallelism::default(),
        }
    }

    pub fn with_ordering(mut self, ordering: StateOrdering) -> Self {
        self.ordering = ordering;
        self
    }

    pub fn with_parallelism(mut self, parallelism: Parallelism) -> Self {
        self.parallelism = parallelism;
        self
    }

    pub fn n_qubits(&self) -> usize {
        self.feature_map.n_qubits
    }

    pub fn param_count(&self) -> usize {
        self.ansatz.param_count()
    }

    fn check_latents(&self, latents: &Matrix) -> Result<()> {
        if latents.cols() != self.n_qubits() {
            return Err(QkernelError::Dimension { got: latents.cols(), expected: self.n_qubits() });
        }
        Ok(())
    }

    /// Prepared `Φ(z; θ)` for a single sample.
    pub fn state(&self, z: &[f64], theta: &[f64]) -> Result<Statevector> {
        Ok(qsim::prepare_state(&self.feature_map, &self.ansatz, z, theta, self.ordering)?)
    }

    /// Prepared states for every row of `latents`.
    pub fn states(&self, latents: &Matrix, theta: &[f64]) -> Result<Vec<Statevector>> {
        self.check_latents(latents)?;
        self.feature_map.validate()?;
        let ansatz = self.ansatz.build(theta)?;
        let n = latents.rows();
        let prepared = match self.ordering {
            StateOrdering::AnsatzFirst => {
                let mut reference = Statevector::zero(self.n_qubits())?;
                reference.apply_circuit(&ansatz)?;
                parallel::map_range(n, self.parallelism, |i| -> Result<Statevector> {
                    let mut s = reference.clone();
                    s.apply_circuit(&self.feature_map.build(latents.row(i))?)?;
                    Ok(s)
                })
            }
            StateOrdering::FeatureMapFirst => parallel::map_range(n, self.parallelism, |i| {
                let mut s = Statevector::zero(self.n_qubits())?;
                s.apply_circuit(&self.feature_map.build(latents.row(i))?)?;
                s.apply_circuit(&ansatz)?;
                Ok(s)
            }),
        };
        prepared.into_iter().collect()
    }

    pub fn entry(&self, z1: &[f64], z2: &[f64], theta: &[f64]) -> Result<f64> {
        for z in [z1, z2] {
            if z.len() != self.n_qubits() {
                return Err(QkernelError::Dimension { got: z.len(), expected: self.n_qubits() });
            }
        }
        Ok(self.state(z1, theta)?.fidelity(&self.state(z2, theta)?))
    }

    /// Symmetric N×N Gram matrix with an exact unit diagonal.
    pub fn train_kernel(&self, latents: &Matrix, theta: &[f64]) -> Result<KernelMatrix> {
        let states = self.states(latents, theta)?;
        let n = states.len();
        let pairs: Vec<(usize, usize)> =
            (0..n).flat_map(|i| ((i + 1)..n).map(move |j| (i, j))).collect();
        let vals = parallel::map_slice(&pairs, self.parallelism, |&(i, j)| states[i].fidelity(&states[j]));
        let mut m = Matrix::identity(n);
        for (&(i, j), v) in pairs.iter().zip(vals) {
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
        Ok(KernelMatrix {
            values: m,
            kind: KernelKind::SymmetricTrain,
            theta_fingerprint: fingerprint::of_f64s(theta),
            n_qubits: self.n_qubits(),
        })
    }

    /// M×N cross kernel between evaluation and training latents.
    pub fn eval_kernel(&self, eval: &Matrix, train: &Matrix, theta: &[f64]) -> Result<KernelMatrix> {
        self.check_latents(train)?;
        if eval.rows() > 0 {
            self.check_latents(eval)?;
        } else if eval.cols() != 0 && eval.cols() != self.n_qubits() {
            return Err(QkernelError::Dimension { got: eval.cols(), expected: self.n_qubits() });
        }
        let train_states = self.states(train, theta)?;
        let eval_states = if eval.rows() == 0 { Vec::new() } else { self.states(eval, theta)? };
        let n = train_states.len();
        let rows = parallel::map_slice(&eval_states, self.parallelism, |e| {
            train_states.iter().map(|t| e.fidelity(t)).collect::<Vec<f64>>()
        });
        let values = Matrix::new(eval_states.len(), n, rows.concat())
            .expect("fidelities are finite");
        Ok(KernelMatrix {
            values,
            kind: KernelKind::RectangularEval,
            theta_fingerprint: fingerprint::of_f64s(theta),
            n_qubits: self.n_qubits(),
        })
    }
}
