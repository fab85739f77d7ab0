use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::matrix::{Matrix, StoredMatrix};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Named parameter matrices; a matrix's position is its gradient slot
/// relative to the owner's slot offset.
#[derive(Debug, Clone, Default)]
pub struct ParamSet<T> {
    names: Vec<String>,
    values: Vec<Matrix<T>>,
}

impl<T: Scalar> ParamSet<T> {
    pub fn new() -> Self {
        ParamSet {
            names: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn push(&mut self, name: impl Into<String>, m: Matrix<T>) -> usize {
        self.names.push(name.into());
        self.values.push(m);
        self.values.len() - 1
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, i: usize) -> &Matrix<T> {
        &self.values[i]
    }

    pub fn get_mut(&mut self, i: usize) -> &mut Matrix<T> {
        &mut self.values[i]
    }

    pub fn values_mut(&mut self) -> impl Iterator<Item = &mut Matrix<T>> {
        self.values.iter_mut()
    }

    pub fn count_scalars(&self) -> usize {
        self.values.iter().map(|m| m.rows() * m.cols()).sum()
    }

    pub fn to_stored(&self, prefix: &str, out: &mut BTreeMap<String, StoredMatrix>) {
        for (n, v) in self.names.iter().zip(&self.values) {
            out.insert(format!("{prefix}{n}"), StoredMatrix::from(v));
        }
    }

    /// Overwrites every parameter from `stored`; shapes must match.
    pub fn load_stored(&mut self, prefix: &str, stored: &BTreeMap<String, StoredMatrix>) -> Result<()> {
        for (n, v) in self.names.iter().zip(self.values.iter_mut()) {
            let key = format!("{prefix}{n}");
            let s = stored
                .get(&key)
                .ok_or_else(|| Error::Checkpoint(format!("missing parameter {key}")))?;
            let m = s
                .to_matrix::<T>()
                .filter(|m| m.shape() == v.shape())
                .ok_or_else(|| Error::Checkpoint(format!("shape mismatch for {key}")))?;
            *v = m;
        }
        Ok(())
    }
}

pub fn normal<T: Scalar, R: Rng>(rng: &mut R, rows: usize, cols: usize, std: f64) -> Matrix<T> {
    let dist = Normal::new(0.0, std).expect("finite standard deviation");
    Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| T::of(dist.sample(rng))).collect())
}

/// Glorot-normal initialization for a `fan_in × fan_out` projection.
pub fn glorot<T: Scalar, R: Rng>(rng: &mut R, fan_in: usize, fan_out: usize) -> Matrix<T> {
    normal(rng, fan_in, fan_out, (2.0 / (fan_in + fan_out) as f64).sqrt())
}
