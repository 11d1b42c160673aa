//! k-ary sketches: a linear, fixed-size summary of a keyed stream that
//! supports per-key and second-moment estimates, forecasting in sketch
//! space, and change detection on forecast errors.

mod change;
mod defeat;
mod forecast;

pub use change::{change_detect, ChangeReport};
pub use defeat::{defeat_pipeline, format_key, hash_key, DefeatConfig, DefeatReport};
pub use forecast::{forecast, forecast_series, one_step_forecasts, ForecastModel};

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::hashing::{hash_family, PolyHash};
use crate::linalg::median;

pub const DEFAULT_HASHES: usize = 5;
pub const DEFAULT_BUCKETS: usize = 1024;

/// `H` rows (one per hash function) of `K` buckets.
#[derive(Debug, Clone, PartialEq)]
pub struct KarySketch {
    table: DMatrix<f64>,
    hashes: Vec<PolyHash>,
    seed: u64,
}

impl KarySketch {
    pub fn new(h: usize, k: usize, seed: u64) -> Result<Self> {
        if h == 0 || k < 2 {
            return Err(Error::config(format!("sketch needs H >= 1 and K >= 2, got H = {h}, K = {k}")));
        }
        Ok(Self { table: DMatrix::zeros(h, k), hashes: hash_family(h, seed), seed })
    }

    pub fn h(&self) -> usize {
        self.table.nrows()
    }

    pub fn k(&self) -> usize {
        self.table.ncols()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn table(&self) -> &DMatrix<f64> {
        &self.table
    }

    /// Bucket of `key` in row `i`.
    pub fn bucket(&self, i: usize, key: u64) -> usize {
        self.hashes[i].bucket(key, self.k())
    }

    pub fn update(&mut self, key: u64, u: f64) {
        for i in 0..self.h() {
            let b = self.bucket(i, key);
            self.table[(i, b)] += u;
        }
    }

    /// Total of all updates (the common row sum).
    pub fn sum(&self) -> f64 {
        self.table.row(0).sum()
    }

    /// Unbiased estimate of the value aggregated under `key`.
    pub fn estimate(&self, key: u64) -> f64 {
        let k = self.k() as f64;
        let est: Vec<f64> = (0..self.h())
            .map(|i| {
                let sum = self.table.row(i).sum();
                (self.table[(i, self.bucket(i, key))] - sum / k) / (1.0 - 1.0 / k)
            })
            .collect();
        median(&est)
    }

    /// Unbiased estimate of the second moment `Σ v_a²`.
    pub fn estimate_f2(&self) -> f64 {
        let k = self.k() as f64;
        let est: Vec<f64> = self
            .table
            .row_iter()
            .map(|r| {
                let sum = r.sum();
                k / (k - 1.0) * r.norm_squared() - sum * sum / (k - 1.0)
            })
            .collect();
        median(&est)
    }

    /// Empty sketch sharing shape and hash functions.
    pub fn zeros_like(&self) -> Self {
        Self { table: DMatrix::zeros(self.h(), self.k()), hashes: self.hashes.clone(), seed: self.seed }
    }

    pub fn compatible(&self, other: &Self) -> bool {
        self.table.shape() == other.table.shape() && self.hashes == other.hashes
    }

    pub(crate) fn check_compatible(&self, other: &Self) -> Result<()> {
        if self.compatible(other) {
            Ok(())
        } else {
            Err(Error::contract("sketches differ in shape or hash functions"))
        }
    }

    /// Sketch with the same hashing and the given table.
    pub fn with_table(&self, table: DMatrix<f64>) -> Result<Self> {
        if table.shape() != self.table.shape() {
            return Err(Error::contract("table shape does not match sketch"));
        }
        Ok(Self { table, hashes: self.hashes.clone(), seed: self.seed })
    }

    /// Bucket-wise `self + c·other`.
    pub fn combine(&self, c: f64, other: &Self) -> Result<Self> {
        self.check_compatible(other)?;
        self.with_table(&self.table + &other.table * c)
    }
}
