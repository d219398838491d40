//! C-SVC by sequential minimal optimisation, with precomputed, linear and
//! RBF kernels, and a one-vs-one multiclass wrapper.
//!
//! The solver works on the LIBSVM form of the dual,
//! `min ½αᵀQα − eᵀα` with `Qᵢⱼ = yᵢyⱼKᵢⱼ`, `0 ≤ α ≤ C`, `yᵀα = 0`,
//! choosing the maximal violating pair at every step.

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::linalg::{self, Matrix};
use crate::metrics;
use crate::parallel::{self, Parallelism};

pub const DEFAULT_TOL: f64 = 1e-3;
pub const DEFAULT_MAX_ITER: usize = 100_000;
/// Variance floor used by `gamma = "scale"`.
pub const SCALE_VARIANCE_FLOOR: f64 = 1e-12;
const TAU: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum SvmError {
    #[error("{labels} labels for {rows} training rows")]
    LabelCount { labels: usize, rows: usize },
    #[error("binary labels must be +1 or -1, got {0}")]
    BinaryLabel(f64),
    #[error("binary problem needs both classes present")]
    MissingClass,
    #[error("class {0} has no training samples")]
    EmptyClass(usize),
    #[error("label {label} out of range for {n_classes} classes")]
    LabelRange { label: usize, n_classes: usize },
    #[error("precomputed kernel must be square over the training set, got {rows}x{cols}")]
    KernelShape { rows: usize, cols: usize },
    #[error("evaluation input has {got} columns, expected {expected}")]
    EvalShape { got: usize, expected: usize },
    #[error("C must be positive, got {0}")]
    InvalidC(f64),
    #[error("tolerance must be positive, got {0}")]
    InvalidTol(f64),
    #[error("need at least two classes")]
    TooFewClasses,
    #[error("empty model-selection grid")]
    EmptyGrid,
}

pub type Result<T> = std::result::Result<T, SvmError>;

/// RBF width: a fixed value or `1 / (d · Var(X))` over the training matrix.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Gamma {
    #[default]
    Scale,
    Fixed(f64),
}

impl Serialize for Gamma {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Gamma::Scale => s.serialize_str("scale"),
            Gamma::Fixed(g) => s.serialize_f64(*g),
        }
    }
}

impl<'de> Deserialize<'de> for Gamma {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Str(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(g) => Ok(Gamma::Fixed(g)),
            Raw::Str(s) if s == "scale" => Ok(Gamma::Scale),
            Raw::Str(s) => Err(serde::de::Error::custom(format!("unknown gamma mode {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SvmKernel {
    /// Training input is an N×N Gram matrix; evaluation input is M×N.
    #[default]
    Precomputed,
    Linear,
    Rbf {
        #[serde(default)]
        gamma: Gamma,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvmConfig {
    pub c_reg: f64,
    pub kernel: SvmKernel,
    pub tol: f64,
    pub max_iter: usize,
    #[serde(default)]
    pub parallelism: Parallelism,
}

impl Default for SvmConfig {
    fn default() -> Self {
        SvmConfig {
            c_reg: 1.0,
            kernel: SvmKernel::Precomputed,
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
            parallelism: Parallelism::default(),
        }
    }
}

impl SvmConfig {
    pub fn precomputed(c_reg: f64) -> Self {
        SvmConfig { c_reg, ..Default::default() }
    }

    pub fn linear(c_reg: f64) -> Self {
        SvmConfig { c_reg, kernel: SvmKernel::Linear, ..Default::default() }
    }

    pub fn rbf(c_reg: f64, gamma: Gamma) -> Self {
        SvmConfig { c_reg, kernel: SvmKernel::Rbf { gamma }, ..Default::default() }
    }

    fn validate(&self) -> Result<()> {
        if !(self.c_reg > 0.0) || !self.c_reg.is_finite() {
            return Err(SvmError::InvalidC(self.c_reg));
        }
        if !(self.tol > 0.0) {
            return Err(SvmError::InvalidTol(self.tol));
        }
        Ok(())
    }
}

/// Kernel with any `"scale"` gamma already resolved against training data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ResolvedKernel {
    Precomputed,
    Linear,
    Rbf { gamma: f64 },
}

impl ResolvedKernel {
    fn resolve(kernel: SvmKernel, train: &Matrix) -> Self {
        match kernel {
            SvmKernel::Precomputed => ResolvedKernel::Precomputed,
            SvmKernel::Linear => ResolvedKernel::Linear,
            SvmKernel::Rbf { gamma: Gamma::Fixed(g) } => ResolvedKernel::Rbf { gamma: g },
            SvmKernel::Rbf { gamma: Gamma::Scale } => ResolvedKernel::Rbf { gamma: gamma_scale(train) },
        }
    }

    fn gram(&self, x: &Matrix) -> Matrix {
        match *self {
            ResolvedKernel::Precomputed => x.clone(),
            ResolvedKernel::Linear => x.gram_rows(),
            ResolvedKernel::Rbf { gamma } => rbf_kernel(x, x, gamma),
        }
    }

    fn cross(&self, eval: &Matrix, train: &Matrix) -> Matrix {
        match *self {
            ResolvedKernel::Precomputed => eval.clone(),
            ResolvedKernel::Linear => linear_kernel(eval, train),
            ResolvedKernel::Rbf { gamma } => rbf_kernel(eval, train, gamma),
        }
    }
}

/// `γ = 1 / (d · Var(X))`, population variance over all entries of `x`.
pub fn gamma_scale(x: &Matrix) -> f64 {
    let vals = x.as_slice();
    let n = vals.len().max(1) as f64;
    let mean = vals.iter().sum::<f64>() / n;
    let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    1.0 / (x.cols().max(1) as f64 * var.max(SCALE_VARIANCE_FLOOR))
}

pub fn linear_kernel(x1: &Matrix, x2: &Matrix) -> Matrix {
    Matrix::from_fn(x1.rows(), x2.rows(), |i, j| linalg::dot(x1.row(i), x2.row(j)))
}

/// `Kᵢⱼ = exp(−γ‖x1ᵢ − x2ⱼ‖²)`.
pub fn rbf_kernel(x1: &Matrix, x2: &Matrix, gamma: f64) -> Matrix {
    assert_eq!(x1.cols(), x2.cols(), "feature dimensions differ");
    Matrix::from_fn(x1.rows(), x2.rows(), |i, j| {
        (-gamma * linalg::squared_distance(x1.row(i), x2.row(j))).exp()
    })
}

/// Raw dual solution over a Gram matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DualSolution {
    pub alpha: Vec<f64>,
    pub bias: f64,
    pub iterations: usize,
    pub converged: bool,
    /// `Σα − ½ΣΣ αᵢαⱼyᵢyⱼKᵢⱼ` at the returned point.
    pub objective: f64,
}

pub fn dual_objective(k: &Matrix, y: &[f64], alpha: &[f64]) -> f64 {
    let n = y.len();
    let mut quad = 0.0;
    for i in 0..n {
        if alpha[i] == 0.0 {
            continue;
        }
        for j in 0..n {
            quad += alpha[i] * alpha[j] * y[i] * y[j] * k[(i, j)];
        }
    }
    alpha.iter().sum::<f64>() - 0.5 * quad
}

/// SMO with maximal-violating-pair working-set selection.
pub fn solve_dual(k: &Matrix, y: &[f64], c: f64, tol: f64, max_iter: usize) -> DualSolution {
    let n = y.len();
    let q = |i: usize, j: usize| y[i] * y[j] * k[(i, j)];
    let mut alpha = vec![0.0; n];
    let mut grad = vec![-1.0; n];
    let in_up = |a: f64, yt: f64| (yt > 0.0 && a < c) || (yt < 0.0 && a > 0.0);
    let in_low = |a: f64, yt: f64| (yt > 0.0 && a > 0.0) || (yt < 0.0 && a < c);

    let mut iterations = 0;
    let mut converged = false;
    loop {
        let mut gmax = f64::NEG_INFINITY;
        let mut gmin = f64::INFINITY;
        let (mut i, mut j) = (usize::MAX, usize::MAX);
        for t in 0..n {
            let v = -y[t] * grad[t];
            if in_up(alpha[t], y[t]) && v > gmax {
                gmax = v;
                i = t;
            }
            if in_low(alpha[t], y[t]) && v < gmin {
                gmin = v;
                j = t;
            }
        }
        if i == usize::MAX || j == usize::MAX || gmax - gmin < tol {
            converged = true;
            break;
        }
        if iterations == max_iter {
            break;
        }
        iterations += 1;

        let (old_i, old_j) = (alpha[i], alpha[j]);
        let (qii, qjj, qij) = (q(i, i), q(j, j), q(i, j));
        if y[i] != y[j] {
            let quad = (qii + qjj + 2.0 * qij).max(TAU);
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let quad = (qii + qjj - 2.0 * qij).max(TAU);
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > c {
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }
        let (di, dj) = (alpha[i] - old_i, alpha[j] - old_j);
        for (t, g) in grad.iter_mut().enumerate() {
            *g += q(t, i) * di + q(t, j) * dj;
        }
    }

    // b = −ρ, ρ averaged over free vectors or the midpoint of the feasible band
    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut free, mut sum_free) = (0usize, 0.0);
    for t in 0..n {
        let yg = y[t] * grad[t];
        let at_upper = alpha[t] >= c;
        let at_lower = alpha[t] <= 0.0;
        if at_upper {
            if y[t] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if at_lower {
            if y[t] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            free += 1;
            sum_free += yg;
        }
    }
    let rho = if free > 0 {
        sum_free / free as f64
    } else if ub.is_finite() && lb.is_finite() {
        0.5 * (ub + lb)
    } else if ub.is_finite() {
        ub
    } else {
        lb.max(0.0)
    };

    let objective = dual_objective(k, y, &alpha);
    DualSolution { alpha, bias: -rho, iterations, converged, objective }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinarySvmModel {
    pub kernel: ResolvedKernel,
    /// Row indices into the training set the model was fitted against.
    pub support_indices: Vec<usize>,
    /// `αᵢ·yᵢ` per support vector.
    pub dual_coefs: Vec<f64>,
    pub bias: f64,
    /// Training-set size; the column count precomputed evaluation kernels must have.
    pub n_train: usize,
    /// Support vector features for non-precomputed kernels.
    pub support_vectors: Option<Matrix>,
    pub converged: bool,
    pub iterations: usize,
    pub objective: f64,
}

impl BinarySvmModel {
    /// `f(x) = Σ coefₛ K(x, xₛ) + b` for every evaluation row.
    pub fn decision_function(&self, eval: &Matrix) -> Result<Vec<f64>> {
        match self.kernel {
            ResolvedKernel::Precomputed => {
                if eval.cols() != self.n_train {
                    return Err(SvmError::EvalShape { got: eval.cols(), expected: self.n_train });
                }
                Ok(eval
                    .row_iter()
                    .map(|r| {
                        self.support_indices.iter().zip(&self.dual_coefs).map(|(&s, c)| c * r[s]).sum::<f64>()
                            + self.bias
                    })
                    .collect())
            }
            kernel => {
                let sv = self.support_vectors.as_ref().expect("feature kernels keep support vectors");
                if eval.cols() != sv.cols() && !self.support_indices.is_empty() {
                    return Err(SvmError::EvalShape { got: eval.cols(), expected: sv.cols() });
                }
                let k = kernel.cross(eval, sv);
                Ok(k.row_iter().map(|r| linalg::dot(r, &self.dual_coefs) + self.bias).collect())
            }
        }
    }

    pub fn predict_sign(&self, eval: &Matrix) -> Result<Vec<f64>> {
        Ok(self.decision_function(eval)?.into_iter().map(|d| if d > 0.0 { 1.0 } else { -1.0 }).collect())
    }
}

fn check_binary_labels(y: &[f64]) -> Result<()> {
    if let Some(&bad) = y.iter().find(|&&v| v != 1.0 && v != -1.0) {
        return Err(SvmError::BinaryLabel(bad));
    }
    if !y.contains(&1.0) || !y.contains(&-1.0) {
        return Err(SvmError::MissingClass);
    }
    Ok(())
}

fn fit_with_gram(gram: &Matrix, features: Option<&Matrix>, y: &[f64], kernel: ResolvedKernel, cfg: &SvmConfig) -> BinarySvmModel {
    let sol = solve_dual(gram, y, cfg.c_reg, cfg.tol, cfg.max_iter);
    let support_indices: Vec<usize> = (0..y.len()).filter(|&i| sol.alpha[i] > 0.0).collect();
    let dual_coefs = support_indices.iter().map(|&i| sol.alpha[i] * y[i]).collect();
    let support_vectors = features.map(|x| x.select_rows(&support_indices));
    BinarySvmModel {
        kernel,
        support_indices,
        dual_coefs,
        bias: sol.bias,
        n_train: y.len(),
        support_vectors,
        converged: sol.converged,
        iterations: sol.iterations,
        objective: sol.objective,
    }
}

/// Fits a binary C-SVC. `input` is the Gram matrix for precomputed kernels,
/// otherwise the N×d feature matrix.
pub fn fit_binary(input: &Matrix, y: &[f64], cfg: &SvmConfig) -> Result<BinarySvmModel> {
    cfg.validate()?;
    if input.rows() != y.len() {
        return Err(SvmError::LabelCount { labels: y.len(), rows: input.rows() });
    }
    check_binary_labels(y)?;
    let kernel = ResolvedKernel::resolve(cfg.kernel, input);
    if kernel == ResolvedKernel::Precomputed && !input.is_square() {
        return Err(SvmError::KernelShape { rows: input.rows(), cols: input.cols() });
    }
    let gram = kernel.gram(input);
    let features = (kernel != ResolvedKernel::Precomputed).then_some(input);
    Ok(fit_with_gram(&gram, features, y, kernel, cfg))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairModel {
    /// Class mapped to `+1`.
    pub positive: usize,
    /// Class mapped to `−1`.
    pub negative: usize,
    pub model: BinarySvmModel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MulticlassSvmModel {
    pub n_classes: usize,
    pub n_train: usize,
    pub kernel: ResolvedKernel,
    /// One entry per class pair `(a, b)`, `a < b`, in lexicographic order.
    pub pairs: Vec<PairModel>,
}

/// One-vs-one fit: one binary model per class pair on that pair's rows only,
/// kept in original dataset order. Support indices refer to the full training set.
pub fn fit_multiclass(input: &Matrix, labels: &[usize], n_classes: usize, cfg: &SvmConfig) -> Result<MulticlassSvmModel> {
    cfg.validate()?;
    if n_classes < 2 {
        return Err(SvmError::TooFewClasses);
    }
    if input.rows() != labels.len() {
        return Err(SvmError::LabelCount { labels: labels.len(), rows: input.rows() });
    }
    if let Some(&label) = labels.iter().find(|&&l| l >= n_classes) {
        return Err(SvmError::LabelRange { label, n_classes });
    }
    let mut counts = vec![0usize; n_classes];
    labels.iter().for_each(|&l| counts[l] += 1);
    if let Some(c) = counts.iter().position(|&c| c == 0) {
        return Err(SvmError::EmptyClass(c));
    }
    let kernel = ResolvedKernel::resolve(cfg.kernel, input);
    if kernel == ResolvedKernel::Precomputed && !input.is_square() {
        return Err(SvmError::KernelShape { rows: input.rows(), cols: input.cols() });
    }
    let full_gram = kernel.gram(input);

    let class_pairs: Vec<(usize, usize)> =
        (0..n_classes).flat_map(|a| ((a + 1)..n_classes).map(move |b| (a, b))).collect();
    let pairs = parallel::map_slice(&class_pairs, cfg.parallelism, |&(a, b)| {
        let idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == a || labels[i] == b).collect();
        let y: Vec<f64> = idx.iter().map(|&i| if labels[i] == a { 1.0 } else { -1.0 }).collect();
        let gram = full_gram.submatrix(&idx, &idx);
        let mut model = fit_with_gram(&gram, None, &y, kernel, cfg);
        model.support_indices = model.support_indices.iter().map(|&s| idx[s]).collect();
        model.n_train = labels.len();
        if kernel != ResolvedKernel::Precomputed {
            model.support_vectors = Some(input.select_rows(&model.support_indices));
        }
        PairModel { positive: a, negative: b, model }
    });
    Ok(MulticlassSvmModel { n_classes, n_train: labels.len(), kernel, pairs })
}

/// One-vs-one vote. Ties go to the class with the largest summed decision
/// value (`+d` for the positive class of a pair, `−d` for the negative), then
/// to the lowest class id.
pub fn vote(n_classes: usize, decisions: impl IntoIterator<Item = (usize, usize, f64)>) -> usize {
    let mut votes = vec![0usize; n_classes];
    let mut confidence = vec![0.0f64; n_classes];
    for (pos, neg, d) in decisions {
        if d > 0.0 {
            votes[pos] += 1;
        } else {
            votes[neg] += 1;
        }
        confidence[pos] += d;
        confidence[neg] -= d;
    }
    let mut best = 0;
    for c in 1..n_classes {
        let better = votes[c] > votes[best] || (votes[c] == votes[best] && confidence[c] > confidence[best]);
        if better {
            best = c;
        }
    }
    best
}

impl MulticlassSvmModel {
    pub fn converged(&self) -> bool {
        self.pairs.iter().all(|p| p.model.converged)
    }

    /// Per-pair decision values, one vector per pair in `self.pairs` order.
    pub fn decision_values(&self, eval: &Matrix) -> Result<Vec<Vec<f64>>> {
        if self.kernel == ResolvedKernel::Precomputed && eval.cols() != self.n_train {
            return Err(SvmError::EvalShape { got: eval.cols(), expected: self.n_train });
        }
        self.pairs.iter().map(|p| p.model.decision_function(eval)).collect()
    }

    pub fn predict(&self, eval: &Matrix) -> Result<Vec<usize>> {
        let dec = self.decision_values(eval)?;
        Ok((0..eval.rows())
            .map(|r| {
                vote(self.n_classes, self.pairs.iter().zip(&dec).map(|(p, d)| (p.positive, p.negative, d[r])))
            })
            .collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridEntry {
    pub c: f64,
    pub val_macro_f1: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSearch {
    pub best_c: f64,
    pub entries: Vec<GridEntry>,
}

/// Picks the C maximising validation macro-F1; ties go to the smaller C.
#[allow(clippy::too_many_arguments)]
pub fn grid_search_c(
    train: &Matrix,
    train_labels: &[usize],
    val: &Matrix,
    val_labels: &[usize],
    n_classes: usize,
    grid: &[f64],
    base: &SvmConfig,
) -> Result<GridSearch> {
    if grid.is_empty() {
        return Err(SvmError::EmptyGrid);
    }
    let mut sorted: Vec<f64> = grid.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();
    let mut entries = Vec::with_capacity(sorted.len());
    let mut best: Option<(f64, f64)> = None;
    for c in sorted {
        let cfg = SvmConfig { c_reg: c, ..*base };
        let model = fit_multiclass(train, train_labels, n_classes, &cfg)?;
        let pred = model.predict(val)?;
        let f1 = metrics::classification_report(val_labels, &pred, n_classes)
            .map(|r| r.macro_f1)
            .unwrap_or(0.0);
        if best.is_none_or(|(_, b)| f1 > b) {
            best = Some((c, f1));
        }
        entries.push(GridEntry { c, val_macro_f1: f1, converged: model.converged() });
    }
    Ok(GridSearch { best_c: best.expect("grid is non-empty").0, entries })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn blobs(seed: u64, centers: &[[f64; 2]], per: usize, std: f64) -> (Matrix, Vec<usize>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for (c, m) in centers.iter().enumerate() {
            for _ in 0..per {
                let dx: f64 = StandardNormal.sample(&mut rng);
                let dy: f64 = StandardNormal.sample(&mut rng);
                rows.push([m[0] + std * dx, m[1] + std * dy]);
                labels.push(c);
            }
        }
        (Matrix::from_rows(&rows).unwrap(), labels)
    }

    #[test]
    fn two_point_hand_solution() {
        let k = Matrix::identity(2);
        let m = fit_binary(&k, &[1.0, -1.0], &SvmConfig::precomputed(10.0)).unwrap();
        assert!(m.converged);
        assert_eq!(m.support_indices, vec![0, 1]);
        assert!((m.dual_coefs[0] - 1.0).abs() < 1e-12);
        assert!((m.dual_coefs[1] + 1.0).abs() < 1e-12);
        assert!(m.bias.abs() < 1e-12);
        assert!((m.objective - 1.0).abs() < 1e-12);
    }

    #[test]
    fn separable_blobs_linear() {
        let (x, labels) = blobs(1, &[[-3.0, 0.0], [3.0, 0.0]], 20, 0.5);
        let y: Vec<f64> = labels.iter().map(|&l| if l == 0 { 1.0 } else { -1.0 }).collect();
        let m = fit_binary(&x, &y, &SvmConfig::linear(1.0)).unwrap();
        assert_eq!(m.predict_sign(&x).unwrap(), y);

        let gram = linear_kernel(&x, &x);
        let mp = fit_binary(&gram, &y, &SvmConfig::precomputed(1.0)).unwrap();
        let direct: Vec<f64> = m.predict_sign(&x).unwrap();
        assert_eq!(mp.predict_sign(&gram).unwrap(), direct);
    }

    #[test]
    fn validation_errors() {
        let k = Matrix::identity(2);
        assert_eq!(fit_binary(&k, &[1.0, 1.0], &SvmConfig::default()), Err(SvmError::MissingClass));
        assert_eq!(fit_binary(&k, &[1.0, 0.0], &SvmConfig::default()), Err(SvmError::BinaryLabel(0.0)));
        assert_eq!(fit_binary(&k, &[1.0, -1.0], &SvmConfig::precomputed(0.0)), Err(SvmError::InvalidC(0.0)));
        assert!(matches!(
            fit_binary(&Matrix::zeros(2, 3), &[1.0, -1.0], &SvmConfig::default()),
            Err(SvmError::KernelShape { .. })
        ));
        assert_eq!(fit_multiclass(&k, &[0, 2], 3, &SvmConfig::default()), Err(SvmError::EmptyClass(1)));
        let model = fit_binary(&k, &[1.0, -1.0], &SvmConfig::default()).unwrap();
        assert!(matches!(model.decision_function(&Matrix::zeros(1, 3)), Err(SvmError::EvalShape { .. })));
    }

    #[test]
    fn iteration_cap_flags_non_convergence() {
        let (x, labels) = blobs(2, &[[0.0, 0.0], [0.5, 0.0]], 15, 1.0);
        let y: Vec<f64> = labels.iter().map(|&l| if l == 0 { 1.0 } else { -1.0 }).collect();
        let cfg = SvmConfig { max_iter: 1, ..SvmConfig::linear(10.0) };
        let m = fit_binary(&x, &y, &cfg).unwrap();
        assert!(!m.converged);
        assert_eq!(m.iterations, 1);
    }

    #[test]
    fn multiclass_two_classes_reduces_to_binary() {
        let (x, labels) = blobs(3, &[[-2.0, 0.0], [2.0, 1.0]], 10, 1.0);
        let y: Vec<f64> = labels.iter().map(|&l| if l == 0 { 1.0 } else { -1.0 }).collect();
        let bin = fit_binary(&x, &y, &SvmConfig::rbf(1.0, Gamma::Scale)).unwrap();
        let multi = fit_multiclass(&x, &labels, 2, &SvmConfig::rbf(1.0, Gamma::Scale)).unwrap();
        assert_eq!(multi.pairs.len(), 1);
        assert_eq!(multi.pairs[0].model, bin);
    }

    #[test]
    fn twelve_classes_give_66_models() {
        let labels: Vec<usize> = (0..24).map(|i| i % 12).collect();
        let x = Matrix::from_fn(24, 3, |i, j| ((i % 12) * (j + 1)) as f64 + 0.01 * i as f64);
        let m = fit_multiclass(&x, &labels, 12, &SvmConfig::linear(1.0)).unwrap();
        assert_eq!(m.pairs.len(), 66);
        let mut seen: Vec<(usize, usize)> = m.pairs.iter().map(|p| (p.positive, p.negative)).collect();
        seen.dedup();
        assert_eq!(seen.len(), 66);
    }

    #[test]
    fn three_blobs_rbf_generalise() {
        let centers = [[0.0, 0.0], [6.0, 0.0], [0.0, 6.0]];
        let (x, labels) = blobs(4, &centers, 20, 1.0);
        let (xt, lt) = blobs(40, &centers, 30, 1.0);
        let m = fit_multiclass(&x, &labels, 3, &SvmConfig::rbf(1.0, Gamma::Scale)).unwrap();
        let pred = m.predict(&xt).unwrap();
        let acc = pred.iter().zip(&lt).filter(|(a, b)| a == b).count() as f64 / lt.len() as f64;
        assert!(acc >= 0.95, "accuracy {acc}");
        assert_eq!(m.predict(&x).unwrap(), labels);

        // row permutation commutes with prediction
        let perm: Vec<usize> = (0..xt.rows()).rev().collect();
        let pp = m.predict(&xt.select_rows(&perm)).unwrap();
        assert!(perm.iter().enumerate().all(|(k, &i)| pp[k] == pred[i]));
    }

    #[test]
    fn vote_tie_breaks() {
        // cyclic tie: 0 beats 1, 1 beats 2, 2 beats 0
        let d = [(0, 1, 0.5), (0, 2, -0.2), (1, 2, 0.9)];
        // confidences: c0 = 0.5 - 0.2 = 0.3, c1 = -0.5 + 0.9 = 0.4, c2 = 0.2 - 0.9 = -0.7
        assert_eq!(vote(3, d), 1);
        let sym = [(0, 1, 1.0), (0, 2, -1.0), (1, 2, 1.0)];
        // all confidences equal (0) → lowest id
        assert_eq!(vote(3, sym), 0);
        assert_eq!(vote(2, [(0, 1, 0.0)]), 1);
    }

    #[test]
    fn rbf_values() {
        let a = Matrix::from_rows(&[[0.0], [1.0]]).unwrap();
        let k = rbf_kernel(&a, &a, 1.0);
        assert_eq!(k[(0, 0)], 1.0);
        assert_eq!(k[(1, 1)], 1.0);
        assert!((k[(0, 1)] - 0.36787944117144233).abs() < 1e-15);
        // ±1 entries: unit variance
        let x = Matrix::from_rows(&[[1.0, -1.0, 1.0], [-1.0, 1.0, -1.0]]).unwrap();
        assert!((gamma_scale(&x) - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(gamma_scale(&Matrix::zeros(3, 2)), 1.0 / (2.0 * SCALE_VARIANCE_FLOOR));
    }

    #[test]
    fn random_problems_satisfy_kkt() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..10 {
            let n = rng.random_range(4..30);
            let x = Matrix::from_fn(n, 3, |_, _| rng.random_range(-2.0..2.0));
            let mut y: Vec<f64> = (0..n).map(|i| if x[(i, 0)] + 0.3 * x[(i, 1)] > 0.0 { 1.0 } else { -1.0 }).collect();
            y[0] = 1.0;
            y[1] = -1.0;
            let c = [0.1, 1.0, 10.0][rng.random_range(0..3)];
            let k = rbf_kernel(&x, &x, 0.5);
            let sol = solve_dual(&k, &y, c, 1e-3, DEFAULT_MAX_ITER);
            assert!(sol.converged);
            for i in 0..n {
                let f: f64 = (0..n).map(|j| sol.alpha[j] * y[j] * k[(i, j)]).sum::<f64>() + sol.bias;
                let m = y[i] * f;
                let a = sol.alpha[i];
                assert!((0.0..=c).contains(&a));
                if a == 0.0 {
                    assert!(m >= 1.0 - 1e-3, "{m}");
                } else if a < c {
                    assert!((m - 1.0).abs() <= 1e-3, "{m}");
                } else {
                    assert!(m <= 1.0 + 1e-3, "{m}");
                }
            }
            let eq: f64 = sol.alpha.iter().zip(&y).map(|(a, b)| a * b).sum();
            assert!(eq.abs() < 1e-6);
        }
    }

    #[test]
    fn grid_search_prefers_smaller_c_on_ties() {
        let centers = [[0.0, 0.0], [8.0, 0.0], [0.0, 8.0]];
        let (x, labels) = blobs(6, &centers, 8, 0.5);
        let (xv, lv) = blobs(7, &centers, 3, 0.5);
        let gram = linear_kernel(&x, &x);
        let val = linear_kernel(&xv, &x);
        let gs = grid_search_c(&gram, &labels, &val, &lv, 3, &[10.0, 0.1, 1.0], &SvmConfig::default()).unwrap();
        assert_eq!(gs.entries.iter().map(|e| e.c).collect::<Vec<_>>(), vec![0.1, 1.0, 10.0]);
        let best = gs.entries.iter().map(|e| e.val_macro_f1).fold(f64::MIN, f64::max);
        let first = gs.entries.iter().find(|e| e.val_macro_f1 == best).unwrap().c;
        assert_eq!(gs.best_c, first);
        assert_eq!(
            grid_search_c(&gram, &labels, &val, &lv, 3, &[], &SvmConfig::default()),
            Err(SvmError::EmptyGrid)
        );
    }

    #[test]
    fn gamma_serde_forms() {
        let k: SvmKernel = serde_json::from_str(r#"{"kind":"rbf","gamma":"scale"}"#).unwrap();
        assert_eq!(k, SvmKernel::Rbf { gamma: Gamma::Scale });
        let k: SvmKernel = serde_json::from_str(r#"{"kind":"rbf","gamma":0.25}"#).unwrap();
        assert_eq!(k, SvmKernel::Rbf { gamma: Gamma::Fixed(0.25) });
        assert!(serde_json::from_str::<SvmKernel>(r#"{"kind":"rbf","gamma":"auto"}"#).is_err());
    }
}
