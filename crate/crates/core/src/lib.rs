//! Hybrid small-data classification pipeline.
//!
//! Deep embeddings are compressed by a supervised PCA→LDA restructuring
//! ([`slr`]), rescaled into a bounded angle interval ([`aalr`]), encoded into
//! simulated parameterized circuits ([`qsim`]) whose pairwise fidelities form a
//! trainable kernel ([`qkernel`]). Kernel parameters are aligned to the class
//! structure with SPSA ([`qka`]) and the result feeds a one-vs-one kernel SVM
//! ([`ksvm`]). [`metrics`] measures both classification quality and latent
//! geometry, [`datagen`] handles ingestion and synthetic data, and
//! [`pipeline`] strings everything together for the CLI.

pub mod aalr;
pub mod datagen;
pub mod fingerprint;
pub mod ksvm;
pub mod linalg;
pub mod metrics;
pub mod parallel;
pub mod persist;
pub mod pipeline;
pub mod qka;
pub mod qkernel;
pub mod qsim;
pub mod slr;

pub use aalr::AalrScaler;
pub use datagen::{BlobSpec, Dataset};
pub use linalg::{Matrix, SymEigen};
pub use qkernel::{KernelMatrix, QuantumKernel};
pub use slr::SlrModel;
