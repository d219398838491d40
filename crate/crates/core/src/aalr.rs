//! Angle-aware latent rescaling.
//!
//! Each latent coordinate is mapped affinely into `[a, b]` using extrema taken
//! from the training latents:
//!
//! ```text
//! z̃ = a + (b − a) · (z − min) / (max − min + ε)
//! ```
//!
//! Evaluation rows outside the training range are not clipped.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fingerprint::Fnv64;
use crate::linalg::Matrix;

pub const DEFAULT_EPSILON: f64 = 1e-8;

#[derive(Debug, Error, PartialEq)]
pub enum AalrError {
    #[error("cannot fit a scaler on an empty matrix")]
    Empty,
    #[error("interval [{a}, {b}] is empty or reversed")]
    Interval { a: f64, b: f64 },
    #[error("epsilon must be finite and non-negative, got {0}")]
    Epsilon(f64),
    #[error("input has {got} columns, scaler expects {expected}")]
    Columns { got: usize, expected: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub low: f64,
    pub high: f64,
}

impl Default for Interval {
    fn default() -> Self {
        Interval { low: 0.0, high: 1.0 }
    }
}

impl Interval {
    pub fn zero_to_pi() -> Self {
        Interval { low: 0.0, high: std::f64::consts::PI }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AalrScaler {
    pub z_min: Vec<f64>,
    pub z_max: Vec<f64>,
    pub a: f64,
    pub b: f64,
    pub epsilon: f64,
}

impl AalrScaler {
    /// Fits with the default `[0, 1]` interval and ε = 1e-8.
    pub fn fit(train: &Matrix) -> Result<Self, AalrError> {
        Self::fit_with(train, Interval::default(), DEFAULT_EPSILON)
    }

    pub fn fit_with(train: &Matrix, interval: Interval, epsilon: f64) -> Result<Self, AalrError> {
        if !(interval.high > interval.low) {
            return Err(AalrError::Interval { a: interval.low, b: interval.high });
        }
        if !epsilon.is_finite() || epsilon < 0.0 {
            return Err(AalrError::Epsilon(epsilon));
        }
        if train.rows() == 0 {
            return Err(AalrError::Empty);
        }
        let d = train.cols();
        let mut z_min = vec![f64::INFINITY; d];
        let mut z_max = vec![f64::NEG_INFINITY; d];
        for row in train.row_iter() {
            for (j, &v) in row.iter().enumerate() {
                z_min[j] = z_min[j].min(v);
                z_max[j] = z_max[j].max(v);
            }
        }
        Ok(AalrScaler { z_min, z_max, a: interval.low, b: interval.high, epsilon })
    }

    pub fn dim(&self) -> usize {
        self.z_min.len()
    }

    #[inline]
    pub fn scale_value(&self, j: usize, z: f64) -> f64 {
        self.a + (self.b - self.a) * (z - self.z_min[j]) / (self.z_max[j] - self.z_min[j] + self.epsilon)
    }

    pub fn transform(&self, x: &Matrix) -> Result<Matrix, AalrError> {
        if x.cols() != self.dim() {
            return Err(AalrError::Columns { got: x.cols(), expected: self.dim() });
        }
        Ok(Matrix::from_fn(x.rows(), x.cols(), |i, j| self.scale_value(j, x[(i, j)])))
    }

    pub fn fingerprint(&self) -> u64 {
        Fnv64::new()
            .f64s(&self.z_min)
            .f64s(&self.z_max)
            .f64s(&[self.a, self.b, self.epsilon])
            .finish()
    }
}
