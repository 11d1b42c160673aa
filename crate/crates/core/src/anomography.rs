//! Anomography: extract anomalous link traffic with a spatial or temporal
//! transform, then infer anomalous OD flows from `ỹ = A x̃` per time bin.
//!
//! Link matrices here are time × links, so the spatial transform acts on
//! each row and the temporal ones filter each link's column over time.

use std::f64::consts::PI;
use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::Alarm;
use crate::error::{Error, Result};
use crate::linalg::{mad, median, pseudo_inverse};
use crate::par;
use crate::pca::fit_normalized;
use crate::sketch::{forecast_series, ForecastModel};
use crate::wavelet::{remove_low_frequencies, FilterBank};

#[derive(Debug, Clone, PartialEq)]
pub enum Transform {
    /// `I - P` with `P` onto the top `k` link-space axes.
    SpatialPca { k: usize },
    /// `I - P` with `P` onto the top `k` axes in time.
    TemporalPca { k: usize },
    /// Drops harmonics `k ≤ c` and `k ≥ n - c`.
    Fourier { c: usize },
    /// Keeps the `c` finest wavelet levels.
    Wavelet { c: usize },
    /// One-step forecast errors of an ARIMA model.
    Arima { d: usize, ar: Vec<f64>, ma: Vec<f64> },
}

impl Transform {
    pub fn name(&self) -> &'static str {
        match self {
            Self::SpatialPca { .. } => "spatial_pca",
            Self::TemporalPca { .. } => "temporal_pca",
            Self::Fourier { .. } => "fourier",
            Self::Wavelet { .. } => "wavelet",
            Self::Arima { .. } => "arima",
        }
    }
}

fn map_columns(y: &DMatrix<f64>, f: impl Fn(&[f64]) -> Result<Vec<f64>> + Sync) -> Result<DMatrix<f64>> {
    let cols = par::try_map_range(y.ncols(), |j| f(y.column(j).as_slice()))?;
    Ok(DMatrix::from_fn(y.nrows(), y.ncols(), |i, j| cols[j][i]))
}

/// Direct `O(n²)` DFT with the `1/n` factor on the forward side.
pub fn dft(x: &[f64]) -> Vec<(f64, f64)> {
    let n = x.len();
    (0..n)
        .map(|k| {
            let (mut re, mut im) = (0.0, 0.0);
            for (i, v) in x.iter().enumerate() {
                let w = -2.0 * PI * (k * i % n) as f64 / n as f64;
                re += v * w.cos();
                im += v * w.sin();
            }
            (re / n as f64, im / n as f64)
        })
        .collect()
}

/// Real part of the inverse of [`dft`].
pub fn idft(f: &[(f64, f64)]) -> Vec<f64> {
    let n = f.len();
    (0..n)
        .map(|i| {
            f.iter()
                .enumerate()
                .map(|(k, (re, im))| {
                    let w = 2.0 * PI * (k * i % n) as f64 / n as f64;
                    re * w.cos() - im * w.sin()
                })
                .sum()
        })
        .collect()
}

fn fourier_highpass(x: &[f64], c: usize) -> Vec<f64> {
    let n = x.len();
    let mut f = dft(x);
    for (k, v) in f.iter_mut().enumerate() {
        if k <= c || k >= n - c {
            *v = (0.0, 0.0);
        }
    }
    idft(&f)
}

pub fn apply_transform(y: &DMatrix<f64>, transform: &Transform) -> Result<DMatrix<f64>> {
    let (t, m) = y.shape();
    if t < 2 || m == 0 {
        return Err(Error::contract("link matrix needs at least two time bins and one link"));
    }
    match transform {
        Transform::SpatialPca { k } => {
            let (model, x) = fit_normalized(y, false)?;
            let model = model.with_k(*k)?;
            let p = model.projector();
            Ok(&x * (DMatrix::identity(m, m) - p))
        }
        Transform::TemporalPca { k } => {
            let (model, x) = fit_normalized(&y.transpose(), false)?;
            let model = model.with_k(*k)?;
            let p = model.projector();
            Ok(((DMatrix::identity(t, t) - p) * x.transpose()).into_owned())
        }
        Transform::Fourier { c } => {
            if *c == 0 || 2 * c >= t {
                return Err(Error::config(format!("fourier cutoff {c} must lie in 1..{}", t.div_ceil(2))));
            }
            map_columns(y, |col| Ok(fourier_highpass(col, *c)))
        }
        Transform::Wavelet { c } => {
            let bank = FilterBank::default();
            map_columns(y, |col| remove_low_frequencies(col, &bank, *c))
        }
        Transform::Arima { d, ar, ma } => {
            let model = ForecastModel::Arima { d: *d, ar: ar.clone(), ma: ma.clone() };
            model.validate()?;
            map_columns(y, |col| {
                let f = forecast_series(&model, col)?;
                Ok(col.iter().zip(&f).map(|(v, p)| p.map_or(0.0, |p| v - p)).collect())
            })
        }
    }
}

/// Minimum-norm least-squares solution through the SVD.
pub fn solve_pseudoinverse(a: &DMatrix<f64>, y: &DVector<f64>) -> Result<DVector<f64>> {
    check_problem(a, y)?;
    Ok(pseudo_inverse(a) * y)
}

fn check_problem(a: &DMatrix<f64>, y: &DVector<f64>) -> Result<()> {
    if a.nrows() != y.len() {
        return Err(Error::contract(format!("routing matrix has {} rows, measurement has {}", a.nrows(), y.len())));
    }
    if a.iter().any(|v| !v.is_finite()) || y.iter().any(|v| !v.is_finite()) {
        return Err(Error::contract("inference inputs must be finite"));
    }
    if a.iter().all(|v| *v == 0.0) {
        return Err(Error::degenerate("routing matrix is zero"));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct OmpResult {
    pub x: DVector<f64>,
    pub support: Vec<usize>,
    /// Residual norm before the first and after every iteration.
    pub residual_norms: Vec<f64>,
}

/// Orthogonal matching pursuit: pick the column most correlated with the
/// residual, refit on the support, stop after `k` atoms or once the
/// residual norm is at most `tol`.
pub fn solve_omp(a: &DMatrix<f64>, y: &DVector<f64>, k: usize, tol: f64) -> Result<OmpResult> {
    check_problem(a, y)?;
    let n = a.ncols();
    if k > n {
        return Err(Error::contract(format!("sparsity {k} exceeds the {n} unknowns")));
    }
    let norms: Vec<f64> = (0..n).map(|j| a.column(j).norm()).collect();
    let mut support: Vec<usize> = Vec::new();
    let mut x = DVector::zeros(n);
    let mut r = y.clone();
    let mut residual_norms = vec![r.norm()];
    while support.len() < k && r.norm() > tol {
        let corr = a.transpose() * &r;
        let best = (0..n)
            .filter(|j| norms[*j] > 0.0 && !support.contains(j))
            .max_by(|&i, &j| (corr[i].abs() / norms[i]).total_cmp(&(corr[j].abs() / norms[j])).then(j.cmp(&i)));
        let Some(j) = best else { break };
        support.push(j);
        let sub = DMatrix::from_fn(a.nrows(), support.len(), |i, c| a[(i, support[c])]);
        let coef = pseudo_inverse(&sub) * y;
        x.fill(0.0);
        for (c, &s) in support.iter().enumerate() {
            x[s] = coef[c];
        }
        r = y - a * &x;
        residual_norms.push(r.norm());
    }
    Ok(OmpResult { x, support, residual_norms })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Solver {
    PseudoInverse,
    Omp { k: usize, tol: f64 },
}

/// Flags `|x̃ - median| > mad_mult · MAD`, with median and MAD taken over
/// the nonzero entries of all bins and the threshold never below `min_abs`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlarmRule {
    pub mad_mult: f64,
    pub min_abs: f64,
}

impl Default for AlarmRule {
    fn default() -> Self {
        Self { mad_mult: 5.0, min_abs: 1e-9 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnomographyResult {
    pub y_tilde: DMatrix<f64>,
    /// Time × flows.
    pub x_tilde: DMatrix<f64>,
    pub alarms: Vec<Alarm>,
}

impl AnomographyResult {
    /// `time,flow,value` rows.
    pub fn x_csv(&self) -> String {
        let mut out = String::from("time,flow,value\n");
        for t in 0..self.x_tilde.nrows() {
            for j in 0..self.x_tilde.ncols() {
                let _ = writeln!(out, "{t},{j},{:.6}", self.x_tilde[(t, j)]);
            }
        }
        out
    }
}

pub fn anomography_pipeline(y: &DMatrix<f64>, a: &DMatrix<f64>, transform: &Transform, solver: &Solver, rule: &AlarmRule) -> Result<AnomographyResult> {
    if y.ncols() != a.nrows() {
        return Err(Error::contract(format!("{} link series but the routing matrix has {} links", y.ncols(), a.nrows())));
    }
    let y_tilde = apply_transform(y, transform)?;
    let pinv = matches!(solver, Solver::PseudoInverse).then(|| pseudo_inverse(a));
    let rows = par::try_map_range(y_tilde.nrows(), |t| -> Result<DVector<f64>> {
        let yt: DVector<f64> = y_tilde.row(t).transpose();
        match solver {
            Solver::PseudoInverse => {
                check_problem(a, &yt)?;
                Ok(pinv.as_ref().expect("computed for this solver") * yt)
            }
            Solver::Omp { k, tol } => Ok(solve_omp(a, &yt, *k, *tol)?.x),
        }
    })?;
    let x_tilde = DMatrix::from_fn(rows.len(), a.ncols(), |t, j| rows[t][j]);
    // Sparse solvers leave most entries at exactly zero, so the robust
    // scale is pooled over the nonzero entries of every bin.
    let pool: Vec<f64> = x_tilde.iter().copied().filter(|v| *v != 0.0).collect();
    let mut alarms = Vec::new();
    if pool.is_empty() {
        return Ok(AnomographyResult { y_tilde, x_tilde, alarms });
    }
    let centre = median(&pool);
    let th = (rule.mad_mult * mad(&pool)).max(rule.min_abs);
    for (t, x) in rows.iter().enumerate() {
        for (j, v) in x.iter().enumerate() {
            let dev = (v - centre).abs();
            if *v != 0.0 && dev > th {
                alarms.push(Alarm::new(t, "anomography", dev, th).with_keys(vec![format!("flow{j}")]));
            }
        }
    }
    Ok(AnomographyResult { y_tilde, x_tilde, alarms })
}
