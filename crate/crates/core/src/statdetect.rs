//! Statistical change tests: the AR-residual likelihood ratio between a
//! learning and a test window, the correlation operator that combines
//! per-variable indicators, and the ASTUTE equilibrium test on flow deltas.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::{Alarm, TrafficMatrix};
use crate::error::{Error, Result};
use crate::linalg::{normal_quantile, sym_eigen, SymEigen};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GlrConfig {
    /// AR order.
    pub p: usize,
    /// Learning window length.
    pub n_l: usize,
    /// Test window length.
    pub n_s: usize,
}

impl Default for GlrConfig {
    fn default() -> Self {
        Self { p: 2, n_l: 24, n_s: 12 }
    }
}

impl GlrConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_l <= self.p + 1 || self.n_s <= self.p + 1 {
            return Err(Error::contract(format!(
                "windows ({}, {}) must exceed the AR order {} plus the intercept",
                self.n_l, self.n_s, self.p
            )));
        }
        Ok(())
    }
}

/// Lagged regression rows `[1, x_{t-1}, …, x_{t-p}] → x_t` of one window.
fn lagged_rows(x: &[f64], p: usize, rows: &mut Vec<Vec<f64>>, target: &mut Vec<f64>) {
    for t in p..x.len() {
        let mut r = Vec::with_capacity(p + 1);
        r.push(1.0);
        r.extend((1..=p).map(|k| x[t - k]));
        rows.push(r);
        target.push(x[t]);
    }
}

/// Least-squares residual variance `RSS / (N - p)` over the given windows
/// sharing one set of AR coefficients.
fn ar_residual_variance(windows: &[&[f64]], p: usize) -> Result<f64> {
    let (mut rows, mut target) = (Vec::new(), Vec::new());
    for w in windows {
        lagged_rows(w, p, &mut rows, &mut target);
    }
    let n = rows.len();
    let x = DMatrix::from_fn(n, p + 1, |i, j| rows[i][j]);
    let y = DVector::from_vec(target);
    let svd = x.clone().svd(true, true);
    let beta = svd.solve(&y, 1e-12).map_err(|e| Error::degenerate(format!("AR fit failed: {e}")))?;
    let rss = (&y - &x * beta).norm_squared();
    let scale = y.iter().map(|v| v * v).sum::<f64>() / n as f64;
    let var = rss / n as f64;
    if !(var > 1e-24 * scale.max(1e-300)) {
        return Err(Error::degenerate("degenerate window: zero residual variance"));
    }
    Ok(var)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GlrResult {
    pub eta: f64,
    pub var_learn: f64,
    pub var_test: f64,
    pub var_pooled: f64,
}

/// Likelihood ratio between the learning window ending at `t_split` and the
/// test window starting there. Values near 1 indicate a change.
pub fn ar_glr(series: &[f64], t_split: usize, cfg: &GlrConfig) -> Result<GlrResult> {
    cfg.validate()?;
    if t_split < cfg.n_l || t_split + cfg.n_s > series.len() {
        return Err(Error::contract(format!(
            "windows of {} and {} samples around {t_split} do not fit a series of {}",
            cfg.n_l,
            cfg.n_s,
            series.len()
        )));
    }
    let learn = &series[t_split - cfg.n_l..t_split];
    let test = &series[t_split..t_split + cfg.n_s];
    let var_learn = ar_residual_variance(&[learn], cfg.p)?;
    let var_test = ar_residual_variance(&[test], cfg.p)?;
    let var_pooled = ar_residual_variance(&[learn, test], cfg.p)?;
    let (nl, ns) = ((cfg.n_l - cfg.p) as f64, (cfg.n_s - cfg.p) as f64);
    // η = a / (a + b) with log a = -N̂_L ln δ_L - N̂_S ln δ_S, log b = -(N̂_L + N̂_S) ln δ_P
    let log_a = -nl * var_learn.ln() - ns * var_test.ln();
    let log_b = -(nl + ns) * var_pooled.ln();
    let eta = 1.0 / (1.0 + (log_b - log_a).exp());
    Ok(GlrResult { eta, var_learn, var_test, var_pooled })
}

/// `η` at every admissible split point (entries before `n_l` and after
/// `len - n_s` are `None`).
pub fn glr_series(series: &[f64], cfg: &GlrConfig) -> Result<Vec<Option<f64>>> {
    cfg.validate()?;
    Ok((0..series.len())
        .map(|t| {
            if t < cfg.n_l || t + cfg.n_s > series.len() {
                None
            } else {
                ar_glr(series, t, cfg).ok().map(|r| r.eta)
            }
        })
        .collect())
}

#[derive(Debug, Clone)]
pub struct AnomalyOperator {
    pub a: DMatrix<f64>,
    pub eigen: SymEigen,
}

/// Off-diagonals are the absolute time-averaged products of indicator
/// columns; each diagonal is one minus its row's off-diagonal sum.
pub fn build_operator(history: &DMatrix<f64>) -> Result<AnomalyOperator> {
    let (t, m) = history.shape();
    if t == 0 || m == 0 {
        return Err(Error::contract("operator needs at least one time step and one variable"));
    }
    let mut a = DMatrix::zeros(m, m);
    for i in 0..m {
        for j in (i + 1)..m {
            let v = (history.column(i).dot(&history.column(j)) / t as f64).abs();
            a[(i, j)] = v;
            a[(j, i)] = v;
        }
    }
    for i in 0..m {
        let off: f64 = (0..m).filter(|&j| j != i).map(|j| a[(i, j)]).sum();
        a[(i, i)] = 1.0 - off;
    }
    let eigen = sym_eigen(&a)?;
    Ok(AnomalyOperator { a, eigen })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Combined {
    pub energy: f64,
    pub threshold: f64,
    pub alarm: bool,
}

/// `E = Σ c_i² λ_i` from the eigen-decomposition of `φ`. `anomalous` picks
/// the eigenvalues (by descending rank) that stand for anomalous states;
/// the alarm threshold is their minimum, all eigenvalues by default.
pub fn combined_measure(phi: &DVector<f64>, op: &AnomalyOperator, anomalous: Option<&[usize]>) -> Result<Combined> {
    let m = op.a.nrows();
    if phi.len() != m {
        return Err(Error::contract(format!("indicator vector has {} entries, operator is {m}×{m}", phi.len())));
    }
    let c = op.eigen.vectors.transpose() * phi;
    let energy: f64 = c.iter().zip(op.eigen.values.iter()).map(|(ci, l)| ci * ci * l).sum();
    let threshold = match anomalous {
        Some(idx) => {
            if idx.is_empty() || idx.iter().any(|&i| i >= m) {
                return Err(Error::config("anomalous eigenvalue set must be non-empty and in range"));
            }
            idx.iter().map(|&i| op.eigen.values[i]).fold(f64::INFINITY, f64::min)
        }
        None => op.eigen.values.min(),
    };
    // an all-quiet vector never alarms, even with a negative eigenvalue
    Ok(Combined { energy, threshold, alarm: energy > threshold && energy > 0.0 })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AstuteResult {
    pub mean: f64,
    pub sigma: f64,
    pub ci: (f64, f64),
    pub alarm: bool,
}

/// Mean volume change across flows with its `(1-p)` confidence interval;
/// an alarm when the interval excludes zero.
pub fn astute_test(before: &[f64], after: &[f64], p: f64) -> Result<AstuteResult> {
    if before.len() != after.len() {
        return Err(Error::contract("slot volume vectors differ in length"));
    }
    let f = before.len();
    if f < 2 {
        return Err(Error::contract("ASTUTE needs at least two flows"));
    }
    let z = normal_quantile(1.0 - p / 2.0)?;
    let deltas: Vec<f64> = after.iter().zip(before).map(|(a, b)| a - b).collect();
    let mean = deltas.iter().sum::<f64>() / f as f64;
    let sigma = (deltas.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / (f - 1) as f64).sqrt();
    let half = z * sigma / (f as f64).sqrt();
    let ci = (mean - half, mean + half);
    let alarm = if sigma == 0.0 { mean != 0.0 } else { ci.0 > 0.0 || ci.1 < 0.0 };
    Ok(AstuteResult { mean, sigma, ci, alarm })
}

/// ASTUTE over consecutive bins of a time × flow volume matrix; flows
/// silent in both bins of a pair are left out.
pub fn astute_series(tm: &TrafficMatrix, p: f64) -> Result<(Vec<AstuteResult>, Vec<Alarm>)> {
    let v = tm.values();
    let mut results = Vec::new();
    let mut alarms = Vec::new();
    for i in 0..v.nrows().saturating_sub(1) {
        let (mut b, mut a) = (Vec::new(), Vec::new());
        for f in 0..v.ncols() {
            if v[(i, f)] != 0.0 || v[(i + 1, f)] != 0.0 {
                b.push(v[(i, f)]);
                a.push(v[(i + 1, f)]);
            }
        }
        let r = if b.len() >= 2 {
            astute_test(&b, &a, p)?
        } else {
            AstuteResult { mean: 0.0, sigma: 0.0, ci: (0.0, 0.0), alarm: false }
        };
        if r.alarm {
            let half = (r.ci.1 - r.ci.0) / 2.0;
            alarms.push(Alarm::new(i + 1, "astute", r.mean.abs(), half));
        }
        results.push(r);
    }
    Ok((results, alarms))
}
