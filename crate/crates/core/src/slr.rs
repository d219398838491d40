//! Supervised latent restructuring: PCA denoising followed by Fisher LDA.
//!
//! Both stages are fitted on the training partition only; the returned
//! models are immutable and every `transform` borrows them shared.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::datagen::Dataset;
use crate::fingerprint::Fnv64;
use crate::linalg::{self, LinalgError, Matrix};

/// Relative ridge added to the within-class scatter when it is not positive definite.
pub const WITHIN_SCATTER_RIDGE: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum SlrError {
    #[error("need at least 2 training samples, got {0}")]
    TooFewSamples(usize),
    #[error("d_pca = {requested} exceeds min(N-1, D) = {max}")]
    PcaDimension { requested: usize, max: usize },
    #[error("d_out = {requested} exceeds C-1 = {max}")]
    LdaDimension { requested: usize, max: usize },
    #[error("class {class} has {count} training samples, LDA needs at least 2")]
    SmallClass { class: usize, count: usize },
    #[error("label {label} out of range for {n_classes} classes")]
    LabelRange { label: usize, n_classes: usize },
    #[error("{labels} labels for {rows} rows")]
    LabelCount { labels: usize, rows: usize },
    #[error("input has {got} columns, model expects {expected}")]
    Columns { got: usize, expected: usize },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

pub type Result<T> = std::result::Result<T, SlrError>;

/// Flips each column so its largest-magnitude entry is positive.
fn fix_column_signs(m: &mut Matrix) {
    for j in 0..m.cols() {
        let mut best = 0.0f64;
        for i in 0..m.rows() {
            let v = m[(i, j)];
            if v.abs() > best.abs() {
                best = v;
            }
        }
        if best < 0.0 {
            for i in 0..m.rows() {
                m[(i, j)] = -m[(i, j)];
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    /// Training mean embedding.
    pub mean: Vec<f64>,
    /// D × d_pca, orthonormal columns.
    pub components: Matrix,
    /// Covariance eigenvalues (1/(N−1) normalisation), descending.
    pub explained_variance: Vec<f64>,
}

impl PcaModel {
    /// Top-`d_pca` principal axes of the training covariance.
    ///
    /// When `D ≤ N` the D×D covariance is decomposed directly. Wider inputs
    /// go through the N×N Gram matrix of the centred data instead, which
    /// shares the non-zero spectrum and is far smaller in that regime.
    pub fn fit(x: &Matrix, d_pca: usize) -> Result<Self> {
        let (n, d) = x.shape();
        if n < 2 {
            return Err(SlrError::TooFewSamples(n));
        }
        let max = (n - 1).min(d);
        if d_pca > max {
            return Err(SlrError::PcaDimension { requested: d_pca, max });
        }
        let mean = x.column_means();
        let centred = x.sub_row_vector(&mean)?;
        let denom = (n - 1) as f64;

        let (mut components, explained_variance) = if d <= n {
            let cov = centred.gram_cols().scale(1.0 / denom);
            let eig = linalg::sym_eigen(&cov)?;
            let vals = eig.eigenvalues[..d_pca].iter().map(|v| v.max(0.0)).collect();
            (eig.eigenvectors.leading_cols(d_pca), vals)
        } else {
            let gram = centred.gram_rows().scale(1.0 / denom);
            let eig = linalg::sym_eigen(&gram)?;
            let top = eig.eigenvalues[0].max(0.0);
            let mut cols: Vec<Vec<f64>> = Vec::with_capacity(d_pca);
            let mut vals = Vec::with_capacity(d_pca);
            for k in 0..d_pca {
                let lambda = eig.eigenvalues[k].max(0.0);
                let u = eig.eigenvectors.column(k);
                let col = if lambda > 1e-12 * top && lambda > 0.0 {
                    // v = Xcᵀ u / sqrt((N−1) λ)
                    let scale = 1.0 / (denom * lambda).sqrt();
                    let mut v = vec![0.0; d];
                    for (i, ui) in u.iter().enumerate() {
                        for (vj, xij) in v.iter_mut().zip(centred.row(i)) {
                            *vj += ui * xij;
                        }
                    }
                    v.iter_mut().for_each(|x| *x *= scale);
                    orthonormalize(&cols, v)
                } else {
                    None
                };
                let col = col.unwrap_or_else(|| complete_basis(&cols, d));
                cols.push(col);
                vals.push(lambda);
            }
            (Matrix::from_fn(d, d_pca, |i, j| cols[j][i]), vals)
        };
        fix_column_signs(&mut components);
        Ok(PcaModel { mean, components, explained_variance })
    }

    pub fn input_dim(&self) -> usize {
        self.mean.len()
    }

    pub fn output_dim(&self) -> usize {
        self.components.cols()
    }

    /// Row `i` of the result is `Wᵀ(xᵢ − μ)`.
    pub fn transform(&self, x: &Matrix) -> Result<Matrix> {
        if x.cols() != self.input_dim() {
            return Err(SlrError::Columns { got: x.cols(), expected: self.input_dim() });
        }
        Ok(project_rows(x, &self.mean, &self.components))
    }
}

fn project_rows(x: &Matrix, mean: &[f64], w: &Matrix) -> Matrix {
    let k = w.cols();
    let mut out = Matrix::zeros(x.rows(), k);
    let mut centred = vec![0.0; mean.len()];
    for i in 0..x.rows() {
        for ((c, v), m) in centred.iter_mut().zip(x.row(i)).zip(mean) {
            *c = v - m;
        }
        let row = out.row_mut(i);
        for (p, c) in centred.iter().enumerate() {
            if *c == 0.0 {
                continue;
            }
            for (o, wv) in row.iter_mut().zip(w.row(p)) {
                *o += c * wv;
            }
        }
    }
    out
}

/// Gram–Schmidt step; `None` if `v` is (numerically) in the span of `basis`.
fn orthonormalize(basis: &[Vec<f64>], mut v: Vec<f64>) -> Option<Vec<f64>> {
    let before = linalg::dot(&v, &v).sqrt();
    for _ in 0..2 {
        for b in basis {
            let p = linalg::dot(&v, b);
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= p * y);
        }
    }
    let norm = linalg::dot(&v, &v).sqrt();
    if norm <= 1e-8 * before.max(1e-300) {
        return None;
    }
    v.iter_mut().for_each(|x| *x /= norm);
    Some(v)
}

fn complete_basis(basis: &[Vec<f64>], d: usize) -> Vec<f64> {
    (0..d)
        .find_map(|j| {
            let mut e = vec![0.0; d];
            e[j] = 1.0;
            orthonormalize(basis, e)
        })
        .expect("basis of size < d can always be extended")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LdaModel {
    /// Centering applied before projection (training mean in PCA space).
    pub mean: Vec<f64>,
    /// d_pca × d_out, generalised eigenvectors of `S_b v = λ S_w v`.
    pub projection: Matrix,
    /// Generalised eigenvalues paired with the projection columns.
    pub eigenvalues: Vec<f64>,
    /// Absolute ridge added to `S_w` during the fit (0 when none was needed).
    pub ridge: f64,
}

/// Within- and between-class scatter matrices (unnormalised sums).
pub fn scatter_matrices(x: &Matrix, labels: &[usize], n_classes: usize) -> (Matrix, Matrix) {
    let d = x.cols();
    let mean = x.column_means();
    let mut sums = vec![vec![0.0; d]; n_classes];
    let mut counts = vec![0usize; n_classes];
    for (row, &y) in x.row_iter().zip(labels) {
        counts[y] += 1;
        sums[y].iter_mut().zip(row).for_each(|(s, v)| *s += v);
    }
    let class_means: Vec<Vec<f64>> = sums
        .into_iter()
        .zip(&counts)
        .map(|(s, &c)| s.into_iter().map(|v| if c > 0 { v / c as f64 } else { 0.0 }).collect())
        .collect();

    let mut centred = x.clone();
    for (i, &y) in labels.iter().enumerate() {
        centred.row_mut(i).iter_mut().zip(&class_means[y]).for_each(|(v, m)| *v -= m);
    }
    let within = centred.gram_cols();

    let mut between = Matrix::zeros(d, d);
    for (mu, &c) in class_means.iter().zip(&counts) {
        if c == 0 {
            continue;
        }
        let diff: Vec<f64> = mu.iter().zip(&mean).map(|(a, b)| a - b).collect();
        for i in 0..d {
            for j in i..d {
                between[(i, j)] += c as f64 * diff[i] * diff[j];
            }
        }
    }
    for i in 0..d {
        for j in 0..i {
            between[(i, j)] = between[(j, i)];
        }
    }
    (within, between)
}

impl LdaModel {
    /// Fisher LDA by Cholesky-whitening the within-class scatter.
    pub fn fit(x: &Matrix, labels: &[usize], n_classes: usize, d_out: usize) -> Result<Self> {
        let (n, d) = x.shape();
        if labels.len() != n {
            return Err(SlrError::LabelCount { labels: labels.len(), rows: n });
        }
        if let Some(&label) = labels.iter().find(|&&y| y >= n_classes) {
            return Err(SlrError::LabelRange { label, n_classes });
        }
        let max = n_classes.saturating_sub(1);
        if d_out > max {
            return Err(SlrError::LdaDimension { requested: d_out, max });
        }
        if d_out > d {
            return Err(SlrError::LdaDimension { requested: d_out, max: d });
        }
        let mut counts = vec![0usize; n_classes];
        labels.iter().for_each(|&y| counts[y] += 1);
        if let Some((class, &count)) = counts.iter().enumerate().find(|(_, &c)| c < 2) {
            return Err(SlrError::SmallClass { class, count });
        }

        let mean = x.column_means();
        let (within, between) = scatter_matrices(x, labels, n_classes);

        let (l, ridge) = match linalg::cholesky(&within) {
            Ok(l) => (l, 0.0),
            Err(LinalgError::NotPositiveDefinite { .. }) => {
                let tr = within.trace();
                let ridge = if tr > 0.0 {
                    WITHIN_SCATTER_RIDGE * tr / d as f64
                } else {
                    WITHIN_SCATTER_RIDGE
                };
                let reg = within.add(&Matrix::identity(d).scale(ridge))?;
                (linalg::cholesky(&reg)?, ridge)
            }
            Err(e) => return Err(e.into()),
        };

        // M = L⁻¹ S_b L⁻ᵀ
        let a = linalg::solve_lower_matrix(&l, &between)?;
        let m = linalg::solve_lower_matrix(&l, &a.transpose())?;
        let m = Matrix::from_fn(d, d, |i, j| 0.5 * (m[(i, j)] + m[(j, i)]));
        let eig = linalg::sym_eigen(&m)?;

        let lt = l.transpose();
        let u = eig.eigenvectors.leading_cols(d_out);
        let mut projection = linalg::solve_upper_matrix(&lt, &u)?;
        fix_column_signs(&mut projection);
        Ok(LdaModel { mean, projection, eigenvalues: eig.eigenvalues[..d_out].to_vec(), ridge })
    }

    pub fn input_dim(&self) -> usize {
        self.mean.len()
    }

    pub fn output_dim(&self) -> usize {
        self.projection.cols()
    }

    pub fn transform(&self, x: &Matrix) -> Result<Matrix> {
        if x.cols() != self.input_dim() {
            return Err(SlrError::Columns { got: x.cols(), expected: self.input_dim() });
        }
        Ok(project_rows(x, &self.mean, &self.projection))
    }
}

/// Fitted PCA → LDA projection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlrModel {
    pub pca: PcaModel,
    pub lda: LdaModel,
}

impl SlrModel {
    pub fn fit(train: &Dataset, d_pca: usize, d_out: usize) -> Result<Self> {
        let pca = PcaModel::fit(&train.features, d_pca)?;
        let z = pca.transform(&train.features)?;
        let lda = LdaModel::fit(&z, &train.labels, train.n_classes(), d_out)?;
        Ok(SlrModel { pca, lda })
    }

    pub fn d_pca(&self) -> usize {
        self.pca.output_dim()
    }

    pub fn d_out(&self) -> usize {
        self.lda.output_dim()
    }

    pub fn transform_pca(&self, x: &Matrix) -> Result<Matrix> {
        self.pca.transform(x)
    }

    pub fn transform(&self, x: &Matrix) -> Result<Matrix> {
        self.lda.transform(&self.pca.transform(x)?)
    }

    pub fn fingerprint(&self) -> u64 {
        let mut h = Fnv64::new();
        h.f64s(&self.pca.mean)
            .f64s(self.pca.components.as_slice())
            .f64s(&self.pca.explained_variance)
            .f64s(&self.lda.mean)
            .f64s(self.lda.projection.as_slice())
            .f64s(&self.lda.eigenvalues)
            .f64s(&[self.lda.ridge]);
        h.finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{make_blobs, BlobSpec};
    use crate::metrics::silhouette;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
        StandardNormal.sample(rng)
    }

    #[test]
    fn rank_two_subspace() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = Matrix::from_fn(20, 5, |_, j| if j == 1 || j == 3 { gaussian(&mut rng) } else { 0.0 });
        let pca = PcaModel::fit(&x, 4).unwrap();
        let top = pca.explained_variance[0];
        let nonzero = pca.explained_variance.iter().filter(|v| **v > 1e-9 * top).count();
        assert_eq!(nonzero, 2);
    }

    #[test]
    fn pca_dimension_bounds() {
        let x = Matrix::zeros(4, 10);
        assert!(matches!(PcaModel::fit(&x, 4), Err(SlrError::PcaDimension { max: 3, .. })));
        assert!(matches!(PcaModel::fit(&Matrix::zeros(1, 3), 1), Err(SlrError::TooFewSamples(1))));
        // constant data is legal and has an all-zero spectrum
        let pca = PcaModel::fit(&Matrix::zeros(5, 3), 3).unwrap();
        assert!(pca.explained_variance.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn gram_route_matches_covariance_route() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        // 12 samples in 30 dimensions: wide input takes the Gram route
        let x = Matrix::from_fn(12, 30, |_, j| gaussian(&mut rng) * (1.0 + j as f64 * 0.3));
        let wide = PcaModel::fit(&x, 6).unwrap();
        let mean = x.column_means();
        let c = x.sub_row_vector(&mean).unwrap().gram_cols().scale(1.0 / 11.0);
        let eig = linalg::sym_eigen(&c).unwrap();
        for k in 0..6 {
            assert!((wide.explained_variance[k] - eig.eigenvalues[k]).abs() < 1e-9 * eig.eigenvalues[0]);
            let a = wide.components.column(k);
            let b = eig.eigenvectors.column(k);
            assert!((linalg::dot(&a, &b).abs() - 1.0).abs() < 1e-8);
        }
        let gram = wide.components.gram_cols();
        assert!(gram.max_abs_diff(&Matrix::identity(6)) < 1e-8);
    }

    #[test]
    fn transform_centering_and_axes() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = Matrix::from_fn(30, 4, |_, j| gaussian(&mut rng) * (j + 1) as f64);
        let pca = PcaModel::fit(&x, 3).unwrap();
        let mu = Matrix::from_rows(&[pca.mean.clone(), pca.mean.clone()]).unwrap();
        let z = pca.transform(&mu).unwrap();
        assert!(z.as_slice().iter().all(|v| *v == 0.0));

        for j in 0..3 {
            let v = pca.components.column(j);
            let p: Vec<f64> = pca.mean.iter().zip(&v).map(|(m, c)| m + c).collect();
            let z = pca.transform(&Matrix::from_rows(&[p]).unwrap()).unwrap();
            for k in 0..3 {
                let expected = if k == j { 1.0 } else { 0.0 };
                assert!((z[(0, k)] - expected).abs() < 1e-12);
            }
        }
        assert!(matches!(pca.transform(&Matrix::zeros(1, 5)), Err(SlrError::Columns { .. })));
    }

    #[test]
    fn row_by_row_equals_batch() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let x = Matrix::from_fn(15, 6, |_, _| gaussian(&mut rng));
        let pca = PcaModel::fit(&x, 4).unwrap();
        let batch = pca.transform(&x).unwrap();
        for i in 0..15 {
            let single = pca.transform(&x.select_rows(&[i])).unwrap();
            assert_eq!(single.row(0), batch.row(i));
        }
    }

    #[test]
    fn lda_dimension_rule() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let labels: Vec<usize> = (0..48).map(|i| i % 12).collect();
        let x = Matrix::from_fn(48, 16, |i, j| gaussian(&mut rng) + if j == i % 12 { 3.0 } else { 0.0 });
        assert!(LdaModel::fit(&x, &labels, 12, 11).is_ok());
        assert!(matches!(
            LdaModel::fit(&x, &labels, 12, 12),
            Err(SlrError::LdaDimension { requested: 12, max: 11 })
        ));
    }

    #[test]
    fn lda_rejects_small_class() {
        let x = Matrix::from_fn(5, 2, |i, j| (i + j) as f64);
        let labels = vec![0, 0, 1, 1, 2];
        assert!(matches!(
            LdaModel::fit(&x, &labels, 3, 1),
            Err(SlrError::SmallClass { class: 2, count: 1 })
        ));
    }

    #[test]
    fn lda_recovers_fisher_direction() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for c in 0..2 {
            for _ in 0..200 {
                let cx = if c == 0 { 0.0 } else { 4.0 };
                rows.push([cx + gaussian(&mut rng), gaussian(&mut rng)]);
                labels.push(c);
            }
        }
        let x = Matrix::from_rows(&rows).unwrap();
        let lda = LdaModel::fit(&x, &labels, 2, 1).unwrap();
        let w = lda.projection.column(0);
        let cos = w[0] / linalg::dot(&w, &w).sqrt();
        assert!(cos.abs() >= 0.99, "cos {cos}");
        // sign convention: largest entry positive
        assert!(w[0] > 0.0);
    }

    #[test]
    fn identical_means_give_no_direction() {
        // each class is symmetric about the origin
        let pts = [[1.0, 0.5], [-1.0, -0.5], [0.3, -2.0], [-0.3, 2.0]];
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for c in 0..2 {
            for p in &pts {
                let s = if c == 0 { 1.0 } else { 0.7 };
                rows.push([p[0] * s, p[1] / s]);
                labels.push(c);
            }
        }
        let x = Matrix::from_rows(&rows).unwrap();
        let lda = LdaModel::fit(&x, &labels, 2, 1).unwrap();
        assert!(lda.eigenvalues.iter().all(|v| v.abs() <= 1e-8));
    }

    #[test]
    fn rayleigh_quotients_descend() {
        let data = make_blobs(&BlobSpec {
            n_classes: 5,
            dim: 12,
            samples_per_class: 12,
            class_separation: 3.0,
            within_std: 1.0,
            distractor_dims: 4,
            distractor_std: 4.0,
            seed: 8,
        });
        let model = SlrModel::fit(&data, 10, 4).unwrap();
        let z = model.transform_pca(&data.features).unwrap();
        let (sw, sb) = scatter_matrices(&z, &data.labels, 5);
        let q: Vec<f64> = (0..4)
            .map(|k| {
                let v = model.lda.projection.column(k);
                let num = linalg::dot(&v, &sb.mat_vec(&v).unwrap());
                let den = linalg::dot(&v, &sw.mat_vec(&v).unwrap());
                num / den
            })
            .collect();
        for w in q.windows(2) {
            assert!(w[0] >= w[1] - 1e-9, "{q:?}");
        }
        for (a, b) in q.iter().zip(&model.lda.eigenvalues) {
            assert!((a - b).abs() < 1e-8 * b.abs().max(1.0));
        }
    }

    #[test]
    fn transforms_leave_model_untouched() {
        let data = make_blobs(&BlobSpec { seed: 3, ..BlobSpec::default() });
        let model = SlrModel::fit(&data, 8, 2).unwrap();
        let before = serde_json::to_string(&model).unwrap();
        let fp = model.fingerprint();
        let other = make_blobs(&BlobSpec { seed: 99, ..BlobSpec::default() });
        let out = model.transform(&other.features).unwrap();
        assert_eq!(out.shape(), (other.features.rows(), 2));
        assert_eq!(serde_json::to_string(&model).unwrap(), before);
        assert_eq!(model.fingerprint(), fp);
        let composed = model.lda.transform(&model.transform_pca(&other.features).unwrap()).unwrap();
        assert_eq!(composed, out);
    }

    #[test]
    fn lda_beats_pca_on_distractor_blobs() {
        let data = make_blobs(&BlobSpec {
            n_classes: 4,
            dim: 20,
            samples_per_class: 15,
            class_separation: 2.0,
            within_std: 1.0,
            distractor_dims: 14,
            distractor_std: 10.0,
            seed: 5,
        });
        let model = SlrModel::fit(&data, 20, 3).unwrap();
        let pca = model.transform_pca(&data.features).unwrap();
        let lda = model.transform(&data.features).unwrap();
        let s_pca = silhouette(&pca, &data.labels).unwrap();
        let s_lda = silhouette(&lda, &data.labels).unwrap();
        assert!(s_lda > s_pca, "{s_lda} <= {s_pca}");
    }
}
