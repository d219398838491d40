//! Quantum kernel alignment: SPSA over the ansatz parameters against either
//! the summed one-vs-one SVM dual optimum or a kernel–target alignment loss.

use std::io::{BufRead, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ksvm::{self, SvmConfig, SvmError};
use crate::linalg::Matrix;
use crate::qkernel::{QkernelError, QuantumKernel};

#[derive(Debug, Error)]
pub enum QkaError {
    #[error(transparent)]
    Kernel(#[from] QkernelError),
    #[error(transparent)]
    Svm(#[from] SvmError),
    #[error("objective returned {value} at iteration {iteration}")]
    NonFinite { iteration: usize, value: f64, state: Box<QkaState> },
    #[error("kernel has zero Frobenius norm")]
    ZeroNorm,
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid SPSA config: {0}")]
    Config(String),
    #[error("trace line {line}: {msg}")]
    Trace { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, QkaError>;

/// `Tᵢₖ = 1` iff samples `i` and `k` share a label.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetKernel(pub Matrix);

pub fn target_matrix(labels: &[usize]) -> TargetKernel {
    let n = labels.len();
    TargetKernel(Matrix::from_fn(n, n, |i, k| if labels[i] == labels[k] { 1.0 } else { 0.0 }))
}

/// Negative Frobenius alignment `−⟨K, T⟩ / (‖K‖‖T‖)`; lower is better.
pub fn kta_loss(kernel: &Matrix, target: &TargetKernel) -> Result<f64> {
    let t = &target.0;
    if kernel.shape() != t.shape() {
        return Err(QkaError::Shape(format!("kernel {:?} vs target {:?}", kernel.shape(), t.shape())));
    }
    let inner: f64 = kernel.as_slice().iter().zip(t.as_slice()).map(|(a, b)| a * b).sum();
    let denom = kernel.frobenius_norm() * t.frobenius_norm();
    if denom == 0.0 {
        return Err(QkaError::ZeroNorm);
    }
    Ok(-inner / denom)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairLoss {
    pub positive: usize,
    pub negative: usize,
    pub objective: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvcLoss {
    pub value: f64,
    pub pairs: Vec<PairLoss>,
    /// False if any pairwise solver hit its iteration cap.
    pub converged: bool,
}

/// Sum over class pairs of the optimal binary dual objective
/// `Σα − ½ΣΣ αᵢαⱼyᵢyⱼKᵢⱼ` at box constraint `c_reg`. Minimising it widens
/// the margins the kernel affords every pair.
pub fn svc_loss(kernel: &Matrix, labels: &[usize], n_classes: usize, c_reg: f64) -> Result<SvcLoss> {
    let model = ksvm::fit_multiclass(kernel, labels, n_classes, &SvmConfig::precomputed(c_reg))?;
    let pairs: Vec<PairLoss> = model
        .pairs
        .iter()
        .map(|p| PairLoss {
            positive: p.positive,
            negative: p.negative,
            objective: p.model.objective,
            converged: p.model.converged,
        })
        .collect();
    Ok(SvcLoss {
        value: pairs.iter().map(|p| p.objective).sum(),
        converged: pairs.iter().all(|p| p.converged),
        pairs,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SpsaConfig {
    pub maxiter: usize,
    pub learning_rate: f64,
    pub perturbation: f64,
    pub blocking: bool,
    pub allowed_increase: f64,
    pub resamplings: usize,
    pub seed: u64,
}

impl Default for SpsaConfig {
    fn default() -> Self {
        SpsaConfig {
            maxiter: 30,
            learning_rate: 0.02,
            perturbation: 0.05,
            blocking: true,
            allowed_increase: 0.002,
            resamplings: 1,
            seed: 0,
        }
    }
}

impl SpsaConfig {
    /// `maxiter = 0` is accepted and yields an empty run.
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(QkaError::Config("learning_rate must be positive".into()));
        }
        if !(self.perturbation > 0.0 && self.perturbation.is_finite()) {
            return Err(QkaError::Config("perturbation must be positive".into()));
        }
        if self.resamplings == 0 {
            return Err(QkaError::Config("resamplings must be at least 1".into()));
        }
        if !(self.allowed_increase >= 0.0) {
            return Err(QkaError::Config("allowed_increase must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iteration: usize,
    /// Objective at the candidate when blocking, otherwise the mean of the
    /// perturbed evaluations.
    pub loss: f64,
    pub accepted: bool,
    /// Parameters after this iteration.
    pub theta: Vec<f64>,
    /// Exact objective at `theta`, when known.
    pub current_loss: Option<f64>,
    /// RNG stream position after this iteration, for resuming. Written as a
    /// decimal string since JSON numbers cannot carry 128 bits.
    #[serde(with = "u128_string")]
    pub rng_word_pos: u128,
}

mod u128_string {
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &u128, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&v.to_string())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<u128, D::Error> {
        String::deserialize(d)?.parse().map_err(D::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QkaState {
    pub theta: Vec<f64>,
    pub trace: Vec<TraceRecord>,
    pub initial_loss: f64,
    pub current_loss: Option<f64>,
    pub evaluations: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum TraceLine {
    Header { initial_theta: Vec<f64>, initial_loss: f64, evaluations: usize },
    Iteration(TraceRecord),
}

impl QkaState {
    pub fn accepted_count(&self) -> usize {
        self.trace.iter().filter(|r| r.accepted).count()
    }

    /// Sequence of accepted objective values, starting with the initial one.
    pub fn accepted_losses(&self) -> Vec<f64> {
        std::iter::once(self.initial_loss)
            .chain(self.trace.iter().filter(|r| r.accepted).filter_map(|r| r.current_loss))
            .collect()
    }

    /// Line-delimited JSON: one header record then one record per iteration.
    pub fn write_trace<W: Write>(&self, initial_theta: &[f64], mut w: W) -> Result<()> {
        let header = TraceLine::Header {
            initial_theta: initial_theta.to_vec(),
            initial_loss: self.initial_loss,
            evaluations: self.evaluations,
        };
        writeln!(w, "{}", serde_json::to_string(&header).expect("serialisable"))?;
        for rec in &self.trace {
            writeln!(w, "{}", serde_json::to_string(&TraceLine::Iteration(rec.clone())).expect("serialisable"))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_trace<R: BufRead>(r: R) -> Result<QkaState> {
        let mut state: Option<QkaState> = None;
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let parsed: TraceLine = serde_json::from_str(&line)
                .map_err(|e| QkaError::Trace { line: i + 1, msg: e.to_string() })?;
            match (parsed, state.as_mut()) {
                (TraceLine::Header { initial_theta, initial_loss, evaluations }, None) => {
                    state = Some(QkaState {
                        theta: initial_theta,
                        trace: Vec::new(),
                        initial_loss,
                        current_loss: Some(initial_loss),
                        evaluations,
                    });
                }
                (TraceLine::Iteration(rec), Some(s)) => {
                    s.theta = rec.theta.clone();
                    if rec.accepted || rec.current_loss.is_some() {
                        s.current_loss = rec.current_loss;
                    }
                    s.trace.push(rec);
                }
                _ => return Err(QkaError::Trace { line: i + 1, msg: "unexpected record".into() }),
            }
        }
        state.ok_or(QkaError::Trace { line: 0, msg: "missing header".into() })
    }
}

/// Two-sided simultaneous-perturbation gradient estimate along `delta`.
pub fn spsa_gradient<F>(objective: &mut F, theta: &[f64], c: f64, delta: &[f64]) -> Result<(Vec<f64>, f64, f64)>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    let plus: Vec<f64> = theta.iter().zip(delta).map(|(t, d)| t + c * d).collect();
    let minus: Vec<f64> = theta.iter().zip(delta).map(|(t, d)| t - c * d).collect();
    let fp = objective(&plus)?;
    let fm = objective(&minus)?;
    let scale = (fp - fm) / (2.0 * c);
    Ok((delta.iter().map(|d| scale / d).collect(), fp, fm))
}

pub fn rademacher(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 }).collect()
}

/// Minimises `objective` from `theta0` with constant-gain SPSA.
pub fn spsa_minimize<F>(mut objective: F, theta0: &[f64], cfg: &SpsaConfig) -> Result<QkaState>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    cfg.validate()?;
    let initial_loss = objective(theta0)?;
    let state = QkaState {
        theta: theta0.to_vec(),
        trace: Vec::new(),
        initial_loss,
        current_loss: Some(initial_loss),
        evaluations: 1,
    };
    if !initial_loss.is_finite() {
        return Err(QkaError::NonFinite { iteration: 0, value: initial_loss, state: Box::new(state) });
    }
    run_iterations(&mut objective, state, cfg, ChaCha8Rng::seed_from_u64(cfg.seed))
}

/// Continues a run (for instance one read back with [`QkaState::read_trace`])
/// up to `cfg.maxiter` total iterations, picking up the RNG stream where the
/// last record left it.
pub fn spsa_resume<F>(mut objective: F, state: QkaState, cfg: &SpsaConfig) -> Result<QkaState>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    if let Some(last) = state.trace.last() {
        rng.set_word_pos(last.rng_word_pos);
    }
    run_iterations(&mut objective, state, cfg, rng)
}

fn run_iterations<F>(objective: &mut F, mut state: QkaState, cfg: &SpsaConfig, mut rng: ChaCha8Rng) -> Result<QkaState>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    let p = state.theta.len();
    for iteration in state.trace.len()..cfg.maxiter {
        let mut grad = vec![0.0; p];
        let mut estimate = 0.0;
        for _ in 0..cfg.resamplings {
            let delta = rademacher(&mut rng, p);
            let (g, fp, fm) = spsa_gradient(objective, &state.theta, cfg.perturbation, &delta)?;
            state.evaluations += 2;
            for v in [fp, fm] {
                if !v.is_finite() {
                    return Err(QkaError::NonFinite { iteration, value: v, state: Box::new(state) });
                }
            }
            grad.iter_mut().zip(&g).for_each(|(a, b)| *a += b);
            estimate += 0.5 * (fp + fm);
        }
        let r = cfg.resamplings as f64;
        grad.iter_mut().for_each(|g| *g /= r);
        estimate /= r;
        let candidate: Vec<f64> =
            state.theta.iter().zip(&grad).map(|(t, g)| t - cfg.learning_rate * g).collect();

        let (loss, accepted) = if cfg.blocking {
            let fc = objective(&candidate)?;
            state.evaluations += 1;
            if !fc.is_finite() {
                return Err(QkaError::NonFinite { iteration, value: fc, state: Box::new(state) });
            }
            let current = state.current_loss.expect("blocking runs track the current loss");
            let accepted = fc <= current + cfg.allowed_increase;
            if accepted {
                state.theta = candidate;
                state.current_loss = Some(fc);
            }
            (fc, accepted)
        } else {
            state.theta = candidate;
            state.current_loss = None;
            (estimate, true)
        };
        state.trace.push(TraceRecord {
            iteration,
            loss,
            accepted,
            theta: state.theta.clone(),
            current_loss: state.current_loss,
            rng_word_pos: rng.get_word_pos(),
        });
    }
    Ok(state)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    #[default]
    Svc,
    Kta,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ThetaInit {
    #[default]
    Zeros,
    /// Uniform in `[−half_width, half_width]`.
    Uniform {
        half_width: f64,
        #[serde(default)]
        seed: u64,
    },
}

impl ThetaInit {
    pub fn draw(&self, n: usize) -> Vec<f64> {
        match *self {
            ThetaInit::Zeros => vec![0.0; n],
            ThetaInit::Uniform { half_width, seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                (0..n).map(|_| rng.random_range(-half_width..=half_width)).collect()
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignOptions {
    pub spsa: SpsaConfig,
    pub loss: LossKind,
    /// Box constraint used inside the SVC loss.
    pub c_reg: f64,
    pub init: ThetaInit,
}

impl Default for AlignOptions {
    fn default() -> Self {
        AlignOptions { spsa: SpsaConfig::default(), loss: LossKind::Svc, c_reg: 1.0, init: ThetaInit::Zeros }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Alignment {
    pub initial_theta: Vec<f64>,
    pub state: QkaState,
    /// Exact objective at the final parameters.
    pub final_loss: f64,
    /// Number of training Gram matrices built.
    pub kernel_builds: usize,
    /// Objective evaluations whose SVC solve hit the iteration cap.
    pub unconverged_svc: usize,
}

/// Alignment objective at `theta`, and whether every SVC solve converged.
pub fn alignment_loss(
    latents: &Matrix,
    labels: &[usize],
    n_classes: usize,
    kernel: &QuantumKernel,
    theta: &[f64],
    opts: &AlignOptions,
) -> Result<(f64, bool)> {
    let k = kernel.train_kernel(latents, theta)?;
    match opts.loss {
        LossKind::Svc => {
            let l = svc_loss(&k.values, labels, n_classes, opts.c_reg)?;
            Ok((l.value, l.converged))
        }
        LossKind::Kta => Ok((kta_loss(&k.values, &target_matrix(labels))?, true)),
    }
}

/// Aligns `kernel` to the training labels by SPSA over the ansatz parameters.
pub fn align(
    latents: &Matrix,
    labels: &[usize],
    n_classes: usize,
    kernel: &QuantumKernel,
    opts: &AlignOptions,
) -> Result<Alignment> {
    if latents.rows() != labels.len() {
        return Err(QkaError::Shape(format!("{} latents for {} labels", latents.rows(), labels.len())));
    }
    let theta0 = opts.init.draw(kernel.param_count());
    let mut builds = 0usize;
    let mut unconverged = 0usize;
    let mut objective = |theta: &[f64]| -> Result<f64> {
        let (value, converged) = alignment_loss(latents, labels, n_classes, kernel, theta, opts)?;
        builds += 1;
        if !converged {
            unconverged += 1;
        }
        Ok(value)
    };
    let state = spsa_minimize(&mut objective, &theta0, &opts.spsa)?;
    let final_loss = match state.current_loss {
        Some(l) => l,
        None => objective(&state.theta)?,
    };
    Ok(Alignment { initial_theta: theta0, state, final_loss, kernel_builds: builds, unconverged_svc: unconverged })
}
