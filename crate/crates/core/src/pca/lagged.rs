//! Lag-augmented PCA: principal components of rows `(x(k), x(k−1), …,
//! x(k−J+1))`, which capture temporal as well as spatial correlation.

use nalgebra::DMatrix;

use super::fit_pca;
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct LaggedPca {
    /// Reconstruction of rows `J−1..m` of the input.
    pub approximation: DMatrix<f64>,
    /// Input minus reconstruction on the same rows.
    pub residual: DMatrix<f64>,
    /// First input row covered by the outputs.
    pub first_row: usize,
    /// Number of principal components used.
    pub components: usize,
}

/// Stacks `J` lags, keeps the top `L·M` components (capped at `N·J`) and
/// reconstructs the current-time block.
pub fn lagged_pca(x: &DMatrix<f64>, lags: usize, keep_axes: usize, keep_modes: usize) -> Result<LaggedPca> {
    let (m, n) = x.shape();
    if lags == 0 || lags >= m {
        return Err(Error::contract(format!("lag count {lags} must satisfy 1 <= J < m = {m}")));
    }
    if keep_axes == 0 || keep_modes == 0 {
        return Err(Error::config("lagged PCA must keep at least one axis and one mode"));
    }
    let rows = m - lags + 1;
    let width = n * lags;
    let stacked = DMatrix::from_fn(rows, width, |r, c| {
        let (lag, col) = (c / n, c % n);
        x[(r + lags - 1 - lag, col)]
    });
    let means = DMatrix::from_fn(1, width, |_, c| stacked.column(c).mean());
    let centred = DMatrix::from_fn(rows, width, |r, c| stacked[(r, c)] - means[(0, c)]);
    let model = fit_pca(&centred)?;
    let q = (keep_axes * keep_modes).min(width);
    let vq = model.axes().columns(0, q);
    let recon = (&centred * vq) * vq.transpose();
    let approximation = DMatrix::from_fn(rows, n, |r, c| recon[(r, c)] + means[(0, c)]);
    let residual = x.rows(lags - 1, rows) - &approximation;
    Ok(LaggedPca { approximation, residual, first_row: lags - 1, components: q })
}
