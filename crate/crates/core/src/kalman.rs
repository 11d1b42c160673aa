//! Kalman filtering of a linear state-space traffic model and statistical
//! tests on the filter residuals, with ROC evaluation.
//!
//! The model is `Y_t = A X_t + N_t`, `X_{t+1} = C X_t + W_t` with noise
//! covariances `R` and `Q`. The filter yields the innovation `ε`, the state
//! correction `η = Kε`, its covariance `S` and the residual `τ` the detectors
//! consume.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{mad, sym_eigen, MAD_TO_SIGMA};
use crate::wavelet::a_trous_haar;

#[derive(Debug, Clone, PartialEq)]
pub struct StateSpaceModel {
    /// Measurement (routing) matrix, m × n.
    pub a: DMatrix<f64>,
    /// State transition, n × n.
    pub c: DMatrix<f64>,
    pub q: DMatrix<f64>,
    pub r: DMatrix<f64>,
}

fn check_psd(m: &DMatrix<f64>, what: &str) -> Result<()> {
    let e = sym_eigen(m).map_err(|_| Error::contract(format!("{what} must be symmetric")))?;
    let tol = 1e-8 * m.amax().max(1.0);
    if e.values.iter().any(|v| *v < -tol) {
        return Err(Error::contract(format!("{what} must be positive semidefinite")));
    }
    Ok(())
}

impl StateSpaceModel {
    pub fn new(a: DMatrix<f64>, c: DMatrix<f64>, q: DMatrix<f64>, r: DMatrix<f64>) -> Result<Self> {
        let m = Self { a, c, q, r };
        m.validate()?;
        Ok(m)
    }

    pub fn scalar(a: f64, c: f64, q: f64, r: f64) -> Result<Self> {
        let s = |v| DMatrix::from_element(1, 1, v);
        Self::new(s(a), s(c), s(q), s(r))
    }

    pub fn n_states(&self) -> usize {
        self.c.nrows()
    }

    pub fn n_obs(&self) -> usize {
        self.a.nrows()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.c.nrows();
        let m = self.a.nrows();
        if !self.c.is_square() || self.a.ncols() != n || self.q.shape() != (n, n) || self.r.shape() != (m, m) {
            return Err(Error::contract(format!(
                "inconsistent model dimensions: A {:?}, C {:?}, Q {:?}, R {:?}",
                self.a.shape(),
                self.c.shape(),
                self.q.shape(),
                self.r.shape()
            )));
        }
        check_psd(&self.q, "Q")?;
        check_psd(&self.r, "R")
    }

    /// Draws states and observations starting from `x0`.
    pub fn simulate(&self, x0: &DVector<f64>, steps: usize, seed: u64) -> Result<(Vec<DVector<f64>>, Vec<DVector<f64>>)> {
        self.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let lq = noise_factor(&self.q)?;
        let lr = noise_factor(&self.r)?;
        let std = Normal::new(0.0, 1.0).expect("unit normal");
        let mut draw = |l: &DMatrix<f64>| -> DVector<f64> {
            let z = DVector::from_iterator(l.ncols(), (0..l.ncols()).map(|_| std.sample(&mut rng)));
            l * z
        };
        let mut x = x0.clone();
        let (mut xs, mut ys) = (Vec::with_capacity(steps), Vec::with_capacity(steps));
        for _ in 0..steps {
            x = &self.c * &x + draw(&lq);
            ys.push(&self.a * &x + draw(&lr));
            xs.push(x.clone());
        }
        Ok((xs, ys))
    }
}

/// `L` with `L Lᵀ = M` for a PSD matrix (via its eigendecomposition).
fn noise_factor(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let e = sym_eigen(m)?;
    let d = DMatrix::from_diagonal(&e.values.map(|v| v.max(0.0).sqrt()));
    Ok(&e.vectors * d)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterStep {
    /// `x̂_{t|t-1}` and `P_{t|t-1}`.
    pub x_pred: DVector<f64>,
    pub p_pred: DMatrix<f64>,
    pub gain: DMatrix<f64>,
    pub innovation: DVector<f64>,
    /// `A P_{t|t-1} Aᵀ + R`.
    pub innovation_cov: DMatrix<f64>,
    /// `x̂_{t|t}` and `P_{t|t}`.
    pub x_filt: DVector<f64>,
    pub p_filt: DMatrix<f64>,
    /// `η = Kε` and its covariance `S`.
    pub eta: DVector<f64>,
    pub s: DMatrix<f64>,
    pub tau: DVector<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FilterTrace {
    pub steps: Vec<FilterStep>,
    pub warnings: Vec<String>,
}

impl FilterTrace {
    /// Component `i` of `τ` over time.
    pub fn tau_series(&self, i: usize) -> Vec<f64> {
        self.steps.iter().map(|s| s.tau[i]).collect()
    }

    pub fn innovation_series(&self, i: usize) -> Vec<f64> {
        self.steps.iter().map(|s| s.innovation[i]).collect()
    }

    /// `√P_{t|t}` for state `i`, the scale of the variance test.
    pub fn scale_series(&self, i: usize) -> Vec<f64> {
        self.steps.iter().map(|s| s.p_filt[(i, i)].max(0.0).sqrt()).collect()
    }
}

/// Inverse of a symmetric matrix; near-singular input gets `1e-9·trace`
/// added to its diagonal first.
fn regularized_inverse(m: &DMatrix<f64>, what: &str, t: usize, warnings: &mut Vec<String>) -> DMatrix<f64> {
    if let Some(ch) = m.clone().cholesky() {
        let inv = ch.inverse();
        if inv.iter().all(|v| v.is_finite()) && m.amax() * inv.amax() < 1e12 {
            return inv;
        }
    }
    let n = m.nrows();
    let jitter = (1e-9 * m.trace()).max(1e-12);
    warnings.push(format!("step {t}: {what} singular, regularized with jitter {jitter:.3e}"));
    (m + DMatrix::identity(n, n) * jitter).try_inverse().unwrap_or_else(|| DMatrix::zeros(n, n))
}

pub fn kalman_filter(model: &StateSpaceModel, ys: &[DVector<f64>], x0: &DVector<f64>, p0: &DMatrix<f64>) -> Result<FilterTrace> {
    kalman_filter_varying(|_| model, ys, x0, p0)
}

/// Filter with per-step matrices: `model_at(t)` supplies the model for
/// observation `t`.
pub fn kalman_filter_varying<'a>(
    model_at: impl Fn(usize) -> &'a StateSpaceModel,
    ys: &[DVector<f64>],
    x0: &DVector<f64>,
    p0: &DMatrix<f64>,
) -> Result<FilterTrace> {
    let first = model_at(0);
    first.validate()?;
    let n = first.n_states();
    if x0.len() != n || p0.shape() != (n, n) {
        return Err(Error::contract("initial state and covariance must match the model"));
    }
    check_psd(p0, "P0")?;
    let mut trace = FilterTrace::default();
    let (mut x, mut p) = (x0.clone(), p0.clone());
    let eye = DMatrix::<f64>::identity(n, n);
    for (t, y) in ys.iter().enumerate() {
        let m = model_at(t);
        if t > 0 {
            m.validate()?;
        }
        if y.len() != m.n_obs() {
            return Err(Error::contract(format!("observation {t} has {} entries, model expects {}", y.len(), m.n_obs())));
        }
        let x_pred = &m.c * &x;
        let p_pred = &m.c * &p * m.c.transpose() + &m.q;
        let innovation_cov = &m.a * &p_pred * m.a.transpose() + &m.r;
        let inv = regularized_inverse(&innovation_cov, "innovation covariance", t, &mut trace.warnings);
        let gain = &p_pred * m.a.transpose() * inv;
        let innovation = y - &m.a * &x_pred;
        let x_filt = &x_pred + &gain * &innovation;
        let ika = &eye - &gain * &m.a;
        let p_filt = &ika * &p_pred * ika.transpose() + &gain * &m.r * gain.transpose();
        let p_filt = (&p_filt + p_filt.transpose()) * 0.5;
        check_psd(&p_filt, "P_{t|t}").map_err(|_| Error::Domain(format!("covariance lost definiteness at step {t}")))?;
        let eta = &gain * &innovation;
        let s = &gain * &innovation_cov * gain.transpose();
        let s = (&s + s.transpose()) * 0.5;
        let s_inv = regularized_inverse(&s, "residual covariance S", t, &mut trace.warnings);
        let tau = -(&gain * &m.a * &p_pred * s_inv * &eta);
        x = x_filt.clone();
        p = p_filt.clone();
        trace.steps.push(FilterStep { x_pred, p_pred, gain, innovation, innovation_cov, x_filt, p_filt, eta, s, tau });
    }
    Ok(trace)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Method {
    /// `|τ_t| > T_h·scale_t`.
    Variance { threshold: f64 },
    /// Gaussian mean-shift CUSUM from `mu0` to `mu1`.
    Cusum { mu0: f64, mu1: f64, sigma: Option<f64>, threshold: f64 },
    /// CUSUM with the level replaced by the window mean, maximised over the
    /// candidate change points in the last `window` samples.
    Glr { window: usize, sigma: Option<f64>, threshold: f64 },
    /// Per-scale variance tests on Haar details; alarm when at least
    /// `quorum` scales fire.
    Multiscale { levels: usize, threshold: f64, quorum: Option<usize> },
    /// Local over global variance of the detrended signal.
    VarShift { levels: usize, window: usize, threshold: f64 },
}

impl Method {
    pub const NAMES: [&'static str; 5] = ["variance", "cusum", "glr", "multiscale", "var_shift"];

    pub fn name(&self) -> &'static str {
        match self {
            Self::Variance { .. } => "variance",
            Self::Cusum { .. } => "cusum",
            Self::Glr { .. } => "glr",
            Self::Multiscale { .. } => "multiscale",
            Self::VarShift { .. } => "var_shift",
        }
    }

    /// Default parameters for a method name.
    pub fn by_name(name: &str) -> Result<Self> {
        Ok(match name {
            "variance" => Self::Variance { threshold: 3.0 },
            "cusum" => Self::Cusum { mu0: 0.0, mu1: 1.0, sigma: None, threshold: 5.0 },
            "glr" => Self::Glr { window: 20, sigma: None, threshold: 8.0 },
            "multiscale" => Self::Multiscale { levels: 4, threshold: 3.0, quorum: None },
            "var_shift" => Self::VarShift { levels: 4, window: 8, threshold: 3.0 },
            other => {
                return Err(Error::config(format!("unknown detection method '{other}'; expected one of {}", Self::NAMES.join(", "))))
            }
        })
    }

    pub fn threshold(&self) -> f64 {
        match *self {
            Self::Variance { threshold }
            | Self::Cusum { threshold, .. }
            | Self::Glr { threshold, .. }
            | Self::Multiscale { threshold, .. }
            | Self::VarShift { threshold, .. } => threshold,
        }
    }

    pub fn with_threshold(mut self, t: f64) -> Self {
        match &mut self {
            Self::Variance { threshold }
            | Self::Cusum { threshold, .. }
            | Self::Glr { threshold, .. }
            | Self::Multiscale { threshold, .. }
            | Self::VarShift { threshold, .. } => *threshold = t,
        }
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    /// Test statistic per step; alarms are where it exceeds the threshold.
    pub scores: Vec<f64>,
    pub alarms: Vec<usize>,
    /// CUSUM change-time estimate at the first alarm.
    pub change_time: Option<usize>,
}

/// Robust global scale: MAD-based, falling back to the RMS.
fn robust_sigma(x: &[f64]) -> f64 {
    let s = mad(x) * MAD_TO_SIGMA;
    if s > 0.0 {
        s
    } else {
        (x.iter().map(|v| v * v).sum::<f64>() / x.len().max(1) as f64).sqrt()
    }
}

fn cusum_scores(s: &[f64]) -> (Vec<f64>, Vec<usize>) {
    let (mut acc, mut min, mut argmin) = (0.0, f64::INFINITY, 0);
    let mut g = Vec::with_capacity(s.len());
    let mut arg = Vec::with_capacity(s.len());
    for (k, v) in s.iter().enumerate() {
        acc += v;
        if acc < min {
            min = acc;
            argmin = k;
        }
        g.push(acc - min);
        arg.push(argmin);
    }
    (g, arg)
}

/// Runs one detector over a residual series. `scale` feeds the variance
/// test and defaults to a robust global scale of `tau`.
pub fn detect(tau: &[f64], scale: Option<&[f64]>, method: &Method) -> Result<Detection> {
    if tau.iter().any(|v| !v.is_finite()) {
        return Err(Error::contract("residuals must be finite"));
    }
    if let Some(s) = scale {
        if s.len() != tau.len() {
            return Err(Error::contract("scale series length differs from the residuals"));
        }
    }
    let n = tau.len();
    let sigma_or = |s: Option<f64>| s.unwrap_or_else(|| robust_sigma(tau));
    let mut change_time = None;
    let scores: Vec<f64> = match *method {
        Method::Variance { .. } => {
            let global = robust_sigma(tau);
            (0..n)
                .map(|t| {
                    let sc = scale.map_or(global, |s| s[t]);
                    if sc > 0.0 {
                        tau[t].abs() / sc
                    } else if tau[t] == 0.0 {
                        0.0
                    } else {
                        f64::INFINITY
                    }
                })
                .collect()
        }
        Method::Cusum { mu0, mu1, sigma, threshold } => {
            let sd = sigma_or(sigma);
            if !(sd > 0.0) {
                return Ok(Detection { scores: vec![0.0; n], alarms: vec![], change_time: None });
            }
            let s: Vec<f64> = tau.iter().map(|x| (mu1 - mu0) / (sd * sd) * (x - 0.5 * (mu0 + mu1))).collect();
            let (g, arg) = cusum_scores(&s);
            change_time = g.iter().position(|v| *v > threshold).map(|k| arg[k]);
            g
        }
        Method::Glr { window, sigma, .. } => {
            if window == 0 {
                return Err(Error::config("GLR window must be positive"));
            }
            let sd = sigma_or(sigma);
            if !(sd > 0.0) {
                return Ok(Detection { scores: vec![0.0; n], alarms: vec![], change_time: None });
            }
            (0..n)
                .map(|k| {
                    let mut sum = 0.0;
                    let mut best: f64 = 0.0;
                    for j in (k.saturating_sub(window - 1)..=k).rev() {
                        sum += tau[j];
                        let len = (k - j + 1) as f64;
                        let mu = sum / len;
                        best = best.max(len * mu * mu / (2.0 * sd * sd));
                    }
                    best
                })
                .collect()
        }
        Method::Multiscale { levels, quorum, .. } => {
            if levels == 0 {
                return Err(Error::config("multiscale needs at least one level"));
            }
            let q = quorum.unwrap_or(levels.div_ceil(2)).clamp(1, levels);
            let (_, details) = a_trous_haar(tau, levels);
            let normed: Vec<Vec<f64>> = details
                .iter()
                .map(|d| {
                    let sd = robust_sigma(d);
                    d.iter().map(|v| if sd > 0.0 { v.abs() / sd } else { 0.0 }).collect()
                })
                .collect();
            // the q-th largest per-scale statistic exceeds T_h iff q scales fire
            (0..n)
                .map(|t| {
                    let mut v: Vec<f64> = normed.iter().map(|d| d[t]).collect();
                    v.sort_by(|a, b| b.total_cmp(a));
                    v[q - 1]
                })
                .collect()
        }
        Method::VarShift { levels, window, .. } => {
            if window < 2 {
                return Err(Error::config("variance-shift window must be at least 2"));
            }
            let (trend, _) = a_trous_haar(tau, levels);
            let d: Vec<f64> = tau.iter().zip(&trend).map(|(x, a)| x - a).collect();
            let m = d.iter().sum::<f64>() / n.max(1) as f64;
            let global = d.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n.max(1) as f64;
            (0..n)
                .map(|t| {
                    let hi = (t.saturating_sub(window / 2) + window).min(n);
                    let lo = hi.saturating_sub(window);
                    let w = &d[lo..hi];
                    let wm = w.iter().sum::<f64>() / w.len() as f64;
                    let local = w.iter().map(|v| (v - wm) * (v - wm)).sum::<f64>() / w.len() as f64;
                    if global > 0.0 {
                        local / global
                    } else {
                        0.0
                    }
                })
                .collect()
        }
    };
    let th = method.threshold();
    let alarms = (0..n).filter(|&t| scores[t] > th).collect();
    Ok(Detection { scores, alarms, change_time })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Roc {
    /// `(fpr, tpr)` sorted by false-positive rate.
    pub points: Vec<(f64, f64)>,
    pub auc: f64,
}

impl Roc {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("fpr,tpr\n");
        for (f, t) in &self.points {
            let _ = writeln!(out, "{f:.6},{t:.6}");
        }
        let _ = writeln!(out, "auc={:.6}", self.auc);
        out
    }
}

/// Threshold sweep from the highest score down; tied scores enter together.
pub fn roc_curve(scores: &[f64], labels: &[bool]) -> Result<Roc> {
    if scores.len() != labels.len() {
        return Err(Error::contract("scores and labels differ in length"));
    }
    let pos = labels.iter().filter(|l| **l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::degenerate("ROC needs at least one positive and one negative label"));
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < idx.len() {
        let s = scores[idx[i]];
        while i < idx.len() && scores[idx[i]] == s {
            if labels[idx[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push((fp as f64 / neg as f64, tp as f64 / pos as f64));
    }
    let auc = points.windows(2).map(|w| (w[1].0 - w[0].0) * (w[1].1 + w[0].1) / 2.0).sum();
    Ok(Roc { points, auc })
}

/// Scalar benchmark series: an AR(1) state seen through noise, filtered with
/// the true model, with a mean shift added to the observations.
#[derive(Debug, Clone, PartialEq)]
pub struct ShiftBenchmark {
    pub tau: Vec<f64>,
    pub scale: Vec<f64>,
    pub labels: Vec<bool>,
}

pub fn mean_shift_benchmark(len: usize, shift_start: usize, shift_len: usize, shift_sigmas: f64, seed: u64) -> Result<ShiftBenchmark> {
    if shift_start + shift_len > len {
        return Err(Error::contract("shift window runs past the series"));
    }
    let model = StateSpaceModel::scalar(1.0, 0.9, 0.1, 1.0)?;
    let x0 = DVector::zeros(1);
    let (_, mut ys) = model.simulate(&x0, len, seed)?;
    // shift measured in units of the observation standard deviation
    let obs: Vec<f64> = ys.iter().map(|y| y[0]).collect();
    let sd = {
        let m = obs.iter().sum::<f64>() / len as f64;
        (obs.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / len as f64).sqrt()
    };
    for y in &mut ys[shift_start..shift_start + shift_len] {
        y[0] += shift_sigmas * sd;
    }
    let trace = kalman_filter(&model, &ys, &x0, &DMatrix::identity(1, 1))?;
    let labels = (0..len).map(|t| t >= shift_start && t < shift_start + shift_len).collect();
    Ok(ShiftBenchmark { tau: trace.tau_series(0), scale: trace.scale_series(0), labels })
}

/// AUC of each detector on one benchmark series.
pub fn benchmark_aucs(b: &ShiftBenchmark, methods: &[Method]) -> Result<Vec<(String, f64)>> {
    methods
        .iter()
        .map(|m| {
            let d = detect(&b.tau, Some(&b.scale), m)?;
            Ok((m.name().to_string(), roc_curve(&d.scores, &b.labels)?.auc))
        })
        .collect()
}

/// Threshold giving the target false-positive rate on a null score series
/// (its `1 - fpr` quantile).
pub fn threshold_for_fpr(null_scores: &[f64], fpr: f64) -> Result<f64> {
    if null_scores.is_empty() || !(fpr > 0.0 && fpr < 1.0) {
        return Err(Error::contract("need null scores and 0 < fpr < 1"));
    }
    let mut v = null_scores.to_vec();
    v.sort_by(f64::total_cmp);
    let i = (((1.0 - fpr) * v.len() as f64).ceil() as usize).clamp(1, v.len()) - 1;
    Ok(v[i])
}
