//! Subspace method: principal axes of a traffic matrix split into a normal
//! and a residual subspace, squared-prediction-error detection with the
//! Q-statistic threshold, and single-direction anomaly identification.

mod entropy;
mod lagged;

pub use entropy::{
    entropy_tensor, multiway_recast, sample_entropy, EntropyMatrix, EntropyTensor,
};
pub use lagged::{lagged_pca, LaggedPca};

use nalgebra::{DMatrix, DVector};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};
use crate::linalg::{normal_quantile, sym_eigen};

/// Column-centred (optionally unit-variance) copy of a traffic matrix.
#[derive(Debug, Clone)]
pub struct Normalized {
    pub x: DMatrix<f64>,
    pub means: DVector<f64>,
    pub scales: DVector<f64>,
}

/// Subtracts column means; with `unit_variance` also divides by the
/// population standard deviation. Constant columns stay at zero with scale 1.
pub fn normalize_columns(a: &DMatrix<f64>, unit_variance: bool) -> Result<Normalized> {
    let (m, n) = a.shape();
    if m < 2 {
        return Err(Error::contract("normalization needs at least two rows"));
    }
    let means = DVector::from_iterator(n, a.column_iter().map(|c| c.mean()));
    let mut x = a.clone();
    let mut scales = DVector::from_element(n, 1.0);
    for j in 0..n {
        let mu = means[j];
        x.column_mut(j).apply(|v| *v -= mu);
        if unit_variance {
            let sd = (x.column(j).norm_squared() / m as f64).sqrt();
            if sd > 1e-12 * (1.0 + mu.abs()) {
                scales[j] = sd;
                x.column_mut(j).apply(|v| *v /= sd);
            } else {
                x.column_mut(j).fill(0.0);
            }
        }
    }
    Ok(Normalized { x, means, scales })
}

/// Principal axes of a centred matrix plus the normal-subspace dimension.
#[derive(Debug, Clone)]
pub struct PcaModel {
    axes: DMatrix<f64>,
    variances: DVector<f64>,
    k: usize,
    col_means: DVector<f64>,
    col_scales: DVector<f64>,
}

/// Fits axes as eigenvectors of `C = XᵀX / m` (maximum-variance directions).
/// `k` starts at `n`; set it with [`PcaModel::with_k`] or [`split_subspace`].
pub fn fit_pca(x: &DMatrix<f64>) -> Result<PcaModel> {
    let (m, n) = x.shape();
    if m == 0 || n == 0 {
        return Err(Error::contract("cannot fit PCA on an empty matrix"));
    }
    let c = x.transpose() * x / m as f64;
    let eig = sym_eigen(&c)?;
    let variances = eig.values.map(|v| v.max(0.0));
    Ok(PcaModel {
        axes: eig.vectors,
        variances,
        k: n,
        col_means: DVector::zeros(n),
        col_scales: DVector::from_element(n, 1.0),
    })
}

/// Normalizes `a` and fits in one step, remembering the normalization so
/// new raw rows can be mapped with [`PcaModel::normalize_row`].
pub fn fit_normalized(a: &DMatrix<f64>, unit_variance: bool) -> Result<(PcaModel, DMatrix<f64>)> {
    let norm = normalize_columns(a, unit_variance)?;
    let mut model = fit_pca(&norm.x)?;
    model.col_means = norm.means;
    model.col_scales = norm.scales;
    Ok((model, norm.x))
}

impl PcaModel {
    pub fn n(&self) -> usize {
        self.axes.ncols()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn axes(&self) -> &DMatrix<f64> {
        &self.axes
    }

    pub fn variances(&self) -> &DVector<f64> {
        &self.variances
    }

    pub fn col_means(&self) -> &DVector<f64> {
        &self.col_means
    }

    pub fn col_scales(&self) -> &DVector<f64> {
        &self.col_scales
    }

    pub fn with_k(mut self, k: usize) -> Result<Self> {
        if k == 0 || k > self.n() {
            return Err(Error::config(format!("normal subspace dimension {k} outside 1..={}", self.n())));
        }
        self.k = k;
        Ok(self)
    }

    /// Fraction of total variance captured by the first `j` axes.
    pub fn captured_fraction(&self, j: usize) -> f64 {
        let total = self.variances.sum();
        if total == 0.0 {
            return 1.0;
        }
        self.variances.rows(0, j.min(self.n())).sum() / total
    }

    /// Variances of the residual axes `k+1..n`.
    pub fn residual_variances(&self) -> Vec<f64> {
        self.variances.iter().skip(self.k).copied().collect()
    }

    /// `P = V_k V_kᵀ`, the projector onto the normal subspace.
    pub fn projector(&self) -> DMatrix<f64> {
        let vk = self.axes.columns(0, self.k);
        vk * vk.transpose()
    }

    /// `(I − P)x`.
    pub fn residual(&self, x: &DVector<f64>) -> DVector<f64> {
        let vk = self.axes.columns(0, self.k);
        x - vk * (vk.transpose() * x)
    }

    pub fn spe(&self, x: &DVector<f64>) -> f64 {
        self.residual(x).norm_squared()
    }

    /// Maps a raw measurement row into the model's normalized coordinates.
    pub fn normalize_row(&self, raw: &DVector<f64>) -> DVector<f64> {
        (raw - &self.col_means).component_div(&self.col_scales)
    }
}

/// Result of the sequential 3σ axis scan.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SubspaceSplit {
    /// Normal-subspace dimension, clamped to at least 1.
    pub k: usize,
    /// Index of the first axis whose projection crossed the threshold.
    pub first_crossing: Option<usize>,
    /// The unclamped scan result was 0 or `n`.
    pub degenerate: bool,
}

impl SubspaceSplit {
    /// `k` restricted to `1..=n−1` so the residual subspace is nonempty.
    pub fn detection_k(&self, n: usize) -> usize {
        self.k.min(n.saturating_sub(1)).max(1)
    }
}

/// Scans projections `u_1..u_n` in order and stops at the first one with a
/// sample more than `sigma_mult` standard deviations from its mean.
pub fn split_subspace(x: &DMatrix<f64>, model: &PcaModel, sigma_mult: f64) -> SubspaceSplit {
    let n = model.n();
    let mut first = None;
    for i in 0..n {
        let u = x * model.axes.column(i);
        let m = u.len() as f64;
        let mu = u.mean();
        let sd = (u.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / m).sqrt();
        if sd <= 1e-12 {
            continue;
        }
        if u.iter().any(|v| (v - mu).abs() > sigma_mult * sd) {
            first = Some(i);
            break;
        }
    }
    let raw = first.unwrap_or(n);
    let degenerate = raw == 0 || raw == n;
    if degenerate {
        log::warn!("subspace split is degenerate (k = {raw} of {n}); clamping");
    }
    SubspaceSplit { k: raw.max(1), first_crossing: first, degenerate }
}

/// Q-statistic threshold on the SPE at confidence `1 − alpha`, computed from
/// the residual-axis variances. Falls back to the scaled chi-square
/// approximation with matching first two moments when the power-transform
/// form is undefined (`h₀ ≤ 0` or a non-positive base).
pub fn q_threshold(residual_variances: &[f64], alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Domain(format!("alpha must lie in (0,1), got {alpha}")));
    }
    let lam: Vec<f64> = residual_variances.iter().map(|v| v.max(0.0)).collect();
    let phi = |p: i32| lam.iter().map(|l| l.powi(p)).sum::<f64>();
    let (phi1, phi2, phi3) = (phi(1), phi(2), phi(3));
    if phi1 <= 0.0 {
        return Err(Error::degenerate("empty residual subspace"));
    }
    let h0 = 1.0 - 2.0 * phi1 * phi3 / (3.0 * phi2 * phi2);
    let c = normal_quantile(1.0 - alpha)?;
    if h0 > 1e-6 {
        let base = c * (2.0 * phi2 * h0 * h0).sqrt() / phi1 + phi2 * h0 * (h0 - 1.0) / (phi1 * phi1) + 1.0;
        if base > 0.0 {
            return Ok(phi1 * base.powf(1.0 / h0));
        }
    }
    let g = phi2 / phi1;
    let dof = phi1 * phi1 / phi2;
    let chi = ChiSquared::new(dof).map_err(|e| Error::Domain(e.to_string()))?;
    Ok(g * chi.inverse_cdf(1.0 - alpha))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpeDecision {
    pub spe: f64,
    pub threshold: f64,
    pub alarm: bool,
}

/// Tests a normalized measurement against the Q-statistic threshold.
pub fn spe_detect(x: &DVector<f64>, model: &PcaModel, alpha: f64) -> Result<SpeDecision> {
    let threshold = q_threshold(&model.residual_variances(), alpha)?;
    let spe = model.spe(x);
    Ok(SpeDecision { spe, threshold, alarm: spe > threshold })
}

/// A candidate anomaly: a unit-norm direction in measurement space.
#[derive(Debug, Clone, PartialEq)]
pub struct AnomalyDirection {
    theta: DVector<f64>,
    pub label: String,
}

impl AnomalyDirection {
    /// Normalizes `v` to unit length.
    pub fn new(v: DVector<f64>, label: impl Into<String>) -> Result<Self> {
        let norm = v.norm();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::contract("anomaly direction must be a nonzero finite vector"));
        }
        Ok(Self { theta: v / norm, label: label.into() })
    }

    pub fn theta(&self) -> &DVector<f64> {
        &self.theta
    }

    /// One direction per coordinate axis (`θ_i = e_i`).
    pub fn unit_axes(labels: &[String]) -> Vec<Self> {
        let n = labels.len();
        labels
            .iter()
            .enumerate()
            .map(|(i, l)| Self { theta: DVector::from_fn(n, |j, _| if i == j { 1.0 } else { 0.0 }), label: l.clone() })
            .collect()
    }

    /// One direction per routing-matrix column (a flow's footprint on links).
    pub fn routing_columns(a: &DMatrix<f64>, labels: &[String]) -> Result<Vec<Self>> {
        (0..a.ncols())
            .map(|j| Self::new(a.column(j).into_owned(), labels.get(j).cloned().unwrap_or_else(|| j.to_string())))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Identification {
    /// Index into the candidate list.
    pub index: usize,
    /// Estimated magnitude `f̂`.
    pub magnitude: f64,
    /// `x − x̂₁`: the traffic attributed to the anomaly.
    pub anomalous: DVector<f64>,
    /// Candidates skipped because `(I − P)θ` vanishes.
    pub undetectable: Vec<usize>,
}

/// Picks the candidate whose removal leaves the smallest residual and
/// quantifies its contribution.
pub fn identify_quantify(x: &DVector<f64>, model: &PcaModel, directions: &[AnomalyDirection]) -> Result<Identification> {
    let x2 = model.residual(x);
    let mut best: Option<(usize, f64, f64)> = None;
    let mut skipped = Vec::new();
    for (i, d) in directions.iter().enumerate() {
        let t2 = model.residual(&d.theta);
        let nn = t2.norm_squared();
        if nn.sqrt() <= 1e-9 {
            skipped.push(i);
            continue;
        }
        let f = t2.dot(&x2) / nn;
        // (I − P)x̂₁ = x₂ − θ₂ f̂
        let rem = (&x2 - &t2 * f).norm();
        if best.is_none_or(|(_, _, r)| rem < r) {
            best = Some((i, f, rem));
        }
    }
    match best {
        Some((index, magnitude, _)) => Ok(Identification {
            index,
            magnitude,
            anomalous: &directions[index].theta * magnitude,
            undetectable: skipped,
        }),
        None => Err(Error::Degenerate(format!(
            "no detectable candidate; undetectable: {}",
            skipped.iter().map(|&i| directions[i].label.as_str()).collect::<Vec<_>>().join(", ")
        ))),
    }
}

/// Greedy multi-direction identification: repeatedly removes the best
/// candidate until the SPE falls below the threshold. Returns the chosen
/// candidate indices in removal order.
pub fn greedy_identify(
    x: &DVector<f64>,
    model: &PcaModel,
    directions: &[AnomalyDirection],
    alpha: f64,
    max_steps: usize,
) -> Result<Vec<usize>> {
    let threshold = q_threshold(&model.residual_variances(), alpha)?;
    let mut cur = x.clone();
    let mut chosen = Vec::new();
    while model.spe(&cur) > threshold && chosen.len() < max_steps {
        let id = identify_quantify(&cur, model, directions)?;
        if chosen.contains(&id.index) {
            break;
        }
        cur -= &id.anomalous;
        chosen.push(id.index);
    }
    Ok(chosen)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Detectability {
    /// Smallest magnitude guaranteed to be detected.
    Bound(f64),
    /// The direction lies in the normal subspace.
    Undetectable,
}

/// Sufficient detectable magnitude `2δ_α / ‖(I − P)θ‖` with `δ_α² = Q`.
pub fn detectability_bound(theta: &DVector<f64>, model: &PcaModel, alpha: f64) -> Result<Detectability> {
    let r = model.residual(theta).norm();
    if r <= 1e-9 {
        return Ok(Detectability::Undetectable);
    }
    let delta = q_threshold(&model.residual_variances(), alpha)?.sqrt();
    Ok(Detectability::Bound(2.0 * delta / r))
}

#[cfg(test)]
mod tests;
