//! Embedding datasets: CSV ingestion, synthetic blobs and balanced sampling.
//!
//! CSV layout is a header `f0,f1,…,f{D−1},label` followed by one row per
//! sample. Labels may be arbitrary strings and are mapped to dense ids in order
//! of first appearance. Features are written with 17 significant digits so a
//! save/load cycle is bit-exact.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::Matrix;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("header has no \"label\" column")]
    MissingLabel,
    #[error("file has no header row")]
    Empty,
    #[error("invalid blob spec: {0}")]
    Spec(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Feature matrix with one integer class id per row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub features: Matrix,
    pub labels: Vec<usize>,
    pub class_names: Vec<String>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_classes()];
        self.labels.iter().for_each(|&l| counts[l] += 1);
        counts
    }

    /// Rows at `idx`, keeping the parent's class-id space.
    pub fn subset(&self, idx: &[usize]) -> Dataset {
        Dataset {
            features: self.features.select_rows(idx),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            class_names: self.class_names.clone(),
        }
    }

    pub fn write_csv<W: Write>(&self, w: W) -> std::io::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut header: Vec<String> = (0..self.dim()).map(|j| format!("f{j}")).collect();
        header.push("label".into());
        out.write_record(&header)?;
        for (row, &label) in self.features.row_iter().zip(&self.labels) {
            let mut record: Vec<String> = row.iter().map(|v| format!("{v:.16e}")).collect();
            record.push(self.class_names[label].clone());
            out.write_record(&record)?;
        }
        out.flush()
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> std::io::Result<()> {
        self.write_csv(std::io::BufWriter::new(std::fs::File::create(path)?))
    }
}

pub fn load_csv(path: impl AsRef<Path>) -> Result<Dataset, DataError> {
    read_csv(std::fs::File::open(path)?)
}

pub fn read_csv<R: Read>(r: R) -> Result<Dataset, DataError> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
    let line_of = |e: &csv::Error| e.position().map_or(0, |p| p.line() as usize);
    let columns: Vec<String> = match reader.headers() {
        Ok(h) if !h.is_empty() && !(h.len() == 1 && h[0].is_empty()) => h.iter().map(String::from).collect(),
        Ok(_) => return Err(DataError::Empty),
        Err(e) => return Err(DataError::Parse { line: line_of(&e), msg: e.to_string() }),
    };
    let label_col = columns.iter().position(|c| c == "label").ok_or(DataError::MissingLabel)?;

    let mut data = Vec::new();
    let mut labels = Vec::new();
    let mut class_names: Vec<String> = Vec::new();
    let mut ids: HashMap<String, usize> = HashMap::new();
    for record in reader.records() {
        let record = record.map_err(|e| DataError::Parse { line: line_of(&e), msg: e.to_string() })?;
        let lineno = record.position().map_or(0, |p| p.line() as usize);
        for (j, f) in record.iter().enumerate() {
            if j == label_col {
                continue;
            }
            let v: f64 = f.parse().map_err(|_| DataError::Parse {
                line: lineno,
                msg: format!("malformed number {f:?} in column {:?}", columns[j]),
            })?;
            if !v.is_finite() {
                return Err(DataError::Parse { line: lineno, msg: format!("non-finite value {f:?}") });
            }
            data.push(v);
        }
        let name = &record[label_col];
        let id = *ids.entry(name.to_string()).or_insert_with(|| {
            class_names.push(name.to_string());
            class_names.len() - 1
        });
        labels.push(id);
    }
    let features = Matrix::new(labels.len(), columns.len() - 1, data)
        .map_err(|e| DataError::Parse { line: 0, msg: e.to_string() })?;
    Ok(Dataset { features, labels, class_names })
}

/// Gaussian class blobs whose signal lives in the leading
/// `dim − distractor_dims` coordinates; the remaining coordinates are
/// class-independent noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BlobSpec {
    pub n_classes: usize,
    pub dim: usize,
    pub samples_per_class: usize,
    /// Radius of the sphere class means are drawn on.
    pub class_separation: f64,
    pub within_std: f64,
    pub distractor_dims: usize,
    pub distractor_std: f64,
    pub seed: u64,
}

impl Default for BlobSpec {
    fn default() -> Self {
        BlobSpec {
            n_classes: 3,
            dim: 8,
            samples_per_class: 10,
            class_separation: 3.0,
            within_std: 1.0,
            distractor_dims: 0,
            distractor_std: 0.0,
            seed: 0,
        }
    }
}

impl BlobSpec {
    pub fn validate(&self) -> Result<(), DataError> {
        if self.n_classes == 0 || self.dim == 0 || self.samples_per_class == 0 {
            return Err(DataError::Spec("counts must be at least 1".into()));
        }
        if self.distractor_dims > self.dim {
            return Err(DataError::Spec(format!(
                "distractor_dims {} exceeds dim {}",
                self.distractor_dims, self.dim
            )));
        }
        for (name, v) in [
            ("class_separation", self.class_separation),
            ("within_std", self.within_std),
            ("distractor_std", self.distractor_std),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(DataError::Spec(format!("{name} must be finite and non-negative")));
            }
        }
        Ok(())
    }
}

/// Panics on an invalid spec; call [`BlobSpec::validate`] first for untrusted input.
pub fn make_blobs(spec: &BlobSpec) -> Dataset {
    spec.validate().expect("invalid blob spec");
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let signal = spec.dim - spec.distractor_dims;
    let mut normal = move || -> f64 { StandardNormal.sample(&mut rng) };

    let means: Vec<Vec<f64>> = (0..spec.n_classes)
        .map(|_| {
            let v: Vec<f64> = (0..signal).map(|_| normal()).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm == 0.0 {
                v
            } else {
                v.into_iter().map(|x| x * spec.class_separation / norm).collect()
            }
        })
        .collect();

    let n = spec.n_classes * spec.samples_per_class;
    let mut data = Vec::with_capacity(n * spec.dim);
    let mut labels = Vec::with_capacity(n);
    for (c, mean) in means.iter().enumerate() {
        for _ in 0..spec.samples_per_class {
            for m in mean {
                data.push(m + spec.within_std * normal());
            }
            for _ in 0..spec.distractor_dims {
                data.push(spec.distractor_std * normal());
            }
            labels.push(c);
        }
    }
    Dataset {
        features: Matrix::new(n, spec.dim, data).expect("finite samples"),
        labels,
        class_names: (0..spec.n_classes).map(|c| format!("class{c}")).collect(),
    }
}

/// Draws consecutive, disjoint per-class quotas: split `k` takes up to
/// `per_class[k]` samples of each class from what earlier splits left over.
/// Returns row indices per split, sorted into dataset order.
pub fn balanced_split_indices(labels: &[usize], n_classes: usize, per_class: &[usize], seed: u64) -> Vec<Vec<usize>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pools: Vec<Vec<usize>> = vec![Vec::new(); n_classes];
    for (i, &l) in labels.iter().enumerate() {
        pools[l].push(i);
    }
    for pool in &mut pools {
        pool.shuffle(&mut rng);
    }
    let mut offsets = vec![0usize; n_classes];
    per_class
        .iter()
        .map(|&quota| {
            let mut idx = Vec::new();
            for (pool, off) in pools.iter().zip(offsets.iter_mut()) {
                let take = quota.min(pool.len() - *off);
                idx.extend_from_slice(&pool[*off..*off + take]);
                *off += take;
            }
            idx.sort_unstable();
            idx
        })
        .collect()
}

/// Up to `per_class` samples of every class, drawn without replacement.
pub fn balanced_subset(data: &Dataset, per_class: usize, seed: u64) -> Dataset {
    let idx = balanced_split_indices(&data.labels, data.n_classes(), &[per_class], seed);
    data.subset(&idx[0])
}

/// Sequential train / validation / test draw.
pub fn balanced_splits(data: &Dataset, per_class: &[usize], seed: u64) -> Vec<(Dataset, Vec<usize>)> {
    balanced_split_indices(&data.labels, data.n_classes(), per_class, seed)
        .into_iter()
        .map(|idx| (data.subset(&idx), idx))
        .collect()
}
