//! Framelet filter-bank analysis and synthesis, the low/mid/high band split
//! and the local-variability detector built on it.
//!
//! Each level filters the current low-pass signal with every filter of the
//! bank and keeps every other sample, so level `j` coefficients sit `2^j`
//! samples apart. Boundaries are periodic per level; signals whose length is
//! not a multiple of `2^levels` are padded by reflection and cropped again on
//! synthesis.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{mean, variance};

/// Deepest level used by the band split.
pub const MAX_LEVELS: usize = 12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterBank {
    pub lowpass: Vec<f64>,
    pub highpass: Vec<Vec<f64>>,
    pub dual_lowpass: Vec<f64>,
    pub dual_highpass: Vec<Vec<f64>>,
}

impl FilterBank {
    /// A bank with explicit synthesis duals. Taps are used as given; for the
    /// orthonormal-style transform the lowpass should sum to `√2`.
    pub fn new(lowpass: Vec<f64>, highpass: Vec<Vec<f64>>, dual_lowpass: Vec<f64>, dual_highpass: Vec<Vec<f64>>) -> Result<Self> {
        if lowpass.is_empty() || highpass.is_empty() || highpass.len() != dual_highpass.len() {
            return Err(Error::config("filter bank needs a lowpass and matching highpass/dual lists"));
        }
        for h in &highpass {
            if h.iter().sum::<f64>().abs() > 1e-12 {
                return Err(Error::config("every highpass filter needs a vanishing moment"));
            }
        }
        Ok(Self { lowpass, highpass, dual_lowpass, dual_highpass })
    }

    /// A bank that is its own dual (tight frame).
    pub fn tight(lowpass: Vec<f64>, highpass: Vec<Vec<f64>>) -> Result<Self> {
        Self::new(lowpass.clone(), highpass.clone(), lowpass, highpass)
    }

    /// Cubic B-spline framelet: lowpass `[1,4,6,4,1]/16` with four highpass
    /// filters of 1 to 4 vanishing moments, all scaled by `√2`.
    pub fn spline_framelet() -> Self {
        let s = std::f64::consts::SQRT_2;
        let r6 = 6f64.sqrt();
        let scale = |v: [f64; 5], d: f64| v.iter().map(|x| s * x / d).collect::<Vec<f64>>();
        Self::tight(
            scale([1.0, 4.0, 6.0, 4.0, 1.0], 16.0),
            vec![
                scale([1.0, 2.0, 0.0, -2.0, -1.0], 8.0),
                scale([r6, 0.0, -2.0 * r6, 0.0, r6], 16.0),
                scale([1.0, -2.0, 0.0, 2.0, -1.0], 8.0),
                scale([1.0, -4.0, 6.0, -4.0, 1.0], 16.0),
            ],
        )
        .expect("valid taps")
    }

    pub fn haar() -> Self {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        Self::tight(vec![h, h], vec![vec![h, -h]]).expect("valid taps")
    }

    pub fn n_highpass(&self) -> usize {
        self.highpass.len()
    }
}

impl Default for FilterBank {
    fn default() -> Self {
        Self::spline_framelet()
    }
}

/// Coefficients of a multi-level analysis. `highpass[j][i]` holds filter
/// `i` at level `j + 1`; `lowpass` is the coarsest approximation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandDecomposition {
    pub highpass: Vec<Vec<Vec<f64>>>,
    pub lowpass: Vec<f64>,
    /// Original signal length before padding.
    pub len: usize,
}

impl BandDecomposition {
    pub fn levels(&self) -> usize {
        self.highpass.len()
    }

    pub fn n_coefficients(&self) -> usize {
        self.lowpass.len() + self.highpass.iter().flatten().map(Vec::len).sum::<usize>()
    }

    fn map(&self, keep_low: bool, keep_level: impl Fn(usize) -> bool) -> Self {
        let mut d = self.clone();
        if !keep_low {
            d.lowpass.iter_mut().for_each(|c| *c = 0.0);
        }
        for (j, level) in d.highpass.iter_mut().enumerate() {
            if !keep_level(j + 1) {
                level.iter_mut().flatten().for_each(|c| *c = 0.0);
            }
        }
        d
    }
}

fn analyze_level(x: &[f64], filt: &[f64]) -> Vec<f64> {
    let n = x.len();
    let off = (filt.len() - 1) / 2;
    (0..n / 2)
        .map(|m| {
            filt.iter()
                .enumerate()
                .map(|(k, g)| g * x[(2 * m + k + n * filt.len() - off) % n])
                .sum()
        })
        .collect()
}

fn synthesize_level(c: &[f64], filt: &[f64], out: &mut [f64]) {
    let n = out.len();
    let off = (filt.len() - 1) / 2;
    for (m, &v) in c.iter().enumerate() {
        for (k, g) in filt.iter().enumerate() {
            out[(2 * m + k + n * filt.len() - off) % n] += g * v;
        }
    }
}

/// Reflects `x` about its last sample up to a multiple of `block`; callers
/// guarantee `x.len() >= block`, so the padding never runs past the start.
fn reflect_pad(x: &[f64], block: usize) -> Vec<f64> {
    let n = x.len();
    let pad = n.div_ceil(block) * block - n;
    let mut out = x.to_vec();
    out.extend((1..=pad).map(|i| x[n - 1 - i]));
    out
}

pub fn analyze(x: &[f64], bank: &FilterBank, levels: usize) -> Result<BandDecomposition> {
    if levels == 0 {
        return Err(Error::contract("analysis needs at least one level"));
    }
    let min = 1usize.checked_shl(levels as u32).ok_or_else(|| Error::contract("too many levels"))?;
    if x.len() < min {
        return Err(Error::contract(format!(
            "signal of length {} is too short for {levels} levels; need at least {min} samples",
            x.len()
        )));
    }
    let mut low = reflect_pad(x, min);
    let mut highpass = Vec::with_capacity(levels);
    for _ in 0..levels {
        highpass.push(bank.highpass.iter().map(|h| analyze_level(&low, h)).collect());
        low = analyze_level(&low, &bank.lowpass);
    }
    Ok(BandDecomposition { highpass, lowpass: low, len: x.len() })
}

pub fn synthesize(d: &BandDecomposition, bank: &FilterBank) -> Result<Vec<f64>> {
    let mut low = d.lowpass.clone();
    for level in d.highpass.iter().rev() {
        if level.len() != bank.dual_highpass.len() || level.iter().any(|c| c.len() != low.len()) {
            return Err(Error::contract("decomposition shape does not match the filter bank"));
        }
        let mut out = vec![0.0; 2 * low.len()];
        synthesize_level(&low, &bank.dual_lowpass, &mut out);
        for (c, h) in level.iter().zip(&bank.dual_highpass) {
            synthesize_level(c, h, &mut out);
        }
        low = out;
    }
    if low.len() < d.len {
        return Err(Error::contract("decomposition shorter than its recorded signal length"));
    }
    low.truncate(d.len);
    Ok(low)
}

/// Number of levels the band split uses for a signal of length `n`.
pub fn split_depth(n: usize) -> usize {
    (usize::BITS - 1 - n.max(1).leading_zeros()).min(MAX_LEVELS as u32) as usize
}

/// Level counts `(high, mid)`; the remaining levels and the final lowpass
/// form the low band. At full depth this is levels 1–5, 6–8 and 9 upward.
pub fn band_levels(depth: usize) -> (usize, usize) {
    (((5 * depth) as f64 / 12.0).ceil() as usize, ((3 * depth) as f64 / 12.0).ceil() as usize)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bands {
    pub low: Vec<f64>,
    pub mid: Vec<f64>,
    pub high: Vec<f64>,
}

/// Splits `x` into low, mid and high frequency parts. High-band
/// coefficients with magnitude below `high_threshold` are dropped.
pub fn band_split(x: &[f64], bank: &FilterBank, high_threshold: f64) -> Result<Bands> {
    let depth = split_depth(x.len());
    if depth == 0 {
        return Err(Error::contract("band split needs at least 2 samples"));
    }
    let d = analyze(x, bank, depth)?;
    let (h, m) = band_levels(depth);
    let low = synthesize(&d.map(true, |j| j > h + m), bank)?;
    let mid = synthesize(&d.map(false, |j| j > h && j <= h + m), bank)?;
    let mut hd = d.map(false, |j| j <= h);
    hd.highpass.iter_mut().flatten().flatten().for_each(|c| {
        if c.abs() < high_threshold {
            *c = 0.0
        }
    });
    let high = synthesize(&hd, bank)?;
    Ok(Bands { low, mid, high })
}

/// Keeps only the `c` finest levels: everything coarser, including the
/// final lowpass, is zeroed before synthesis.
pub fn remove_low_frequencies(x: &[f64], bank: &FilterBank, c: usize) -> Result<Vec<f64>> {
    let depth = split_depth(x.len()).max(1);
    let d = analyze(x, bank, depth)?;
    synthesize(&d.map(false, |j| j <= c), bank)
}

/// Undecimated causal Haar cascade: `a^j_t = (a^{j-1}_t + a^{j-1}_{t-2^{j-1}})/2`
/// and `d^j = a^{j-1} - a^j`, so `x = a^L + Σ d^j` sample by sample. Samples
/// before the start are taken equal to the first one.
pub fn a_trous_haar(x: &[f64], levels: usize) -> (Vec<f64>, Vec<Vec<f64>>) {
    let mut approx = x.to_vec();
    let mut details = Vec::with_capacity(levels);
    for j in 0..levels {
        let lag = 1usize << j;
        let next: Vec<f64> = (0..approx.len()).map(|t| 0.5 * (approx[t] + approx[t.saturating_sub(lag)])).collect();
        details.push(approx.iter().zip(&next).map(|(a, b)| a - b).collect());
        approx = next;
    }
    (approx, details)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VariabilityConfig {
    /// Local window length in samples.
    pub window: usize,
    pub w_high: f64,
    pub w_mid: f64,
    pub threshold: f64,
}

impl Default for VariabilityConfig {
    fn default() -> Self {
        Self { window: 12, w_high: 0.5, w_mid: 0.5, threshold: 2.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Peak {
    pub start: usize,
    /// Exclusive end.
    pub end: usize,
    pub at: usize,
    pub height: f64,
}

impl Peak {
    pub fn width(&self) -> usize {
        self.end - self.start
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VSignal {
    pub v: Vec<f64>,
    pub peaks: Vec<Peak>,
    pub warnings: Vec<String>,
}

fn standardize(x: &[f64], what: &str, warnings: &mut Vec<String>) -> Vec<f64> {
    let m = mean(x);
    let sd = variance(x).sqrt();
    if sd > 1e-12 * (1.0 + m.abs()) {
        x.iter().map(|v| (v - m) / sd).collect()
    } else {
        warnings.push(format!("{what} part has zero variance; left unnormalized"));
        x.iter().map(|v| v - m).collect()
    }
}

/// Variance over a centred window (shifted inward at the ends).
fn local_variance(x: &[f64], window: usize) -> Vec<f64> {
    let n = x.len();
    let (mut s1, mut s2) = (vec![0.0; n + 1], vec![0.0; n + 1]);
    for (i, v) in x.iter().enumerate() {
        s1[i + 1] = s1[i] + v;
        s2[i + 1] = s2[i] + v * v;
    }
    (0..n)
        .map(|t| {
            let hi = (t.saturating_sub(window / 2) + window).min(n);
            let lo = hi.saturating_sub(window);
            let k = (hi - lo) as f64;
            let m = (s1[hi] - s1[lo]) / k;
            ((s2[hi] - s2[lo]) / k - m * m).max(0.0)
        })
        .collect()
}

/// Weighted local variability of the normalised mid and high bands. Runs
/// above the threshold form peaks; runs separated by less than one window
/// are merged, since both edges of a burst light up on their own.
pub fn local_variability_detect(mid: &[f64], high: &[f64], cfg: &VariabilityConfig) -> Result<VSignal> {
    if cfg.window < 2 {
        return Err(Error::contract("local window must be at least 2"));
    }
    if mid.len() != high.len() {
        return Err(Error::contract("mid and high parts differ in length"));
    }
    let mut warnings = Vec::new();
    let m = standardize(mid, "mid", &mut warnings);
    let h = standardize(high, "high", &mut warnings);
    let (lm, lh) = (local_variance(&m, cfg.window), local_variance(&h, cfg.window));
    let v: Vec<f64> = lm.iter().zip(&lh).map(|(a, b)| cfg.w_mid * a + cfg.w_high * b).collect();
    let mut peaks: Vec<Peak> = Vec::new();
    let mut t = 0;
    while t < v.len() {
        if v[t] > cfg.threshold {
            let start = t;
            while t < v.len() && v[t] > cfg.threshold {
                t += 1;
            }
            let start = match peaks.last() {
                Some(p) if start - p.end < cfg.window => peaks.pop().expect("checked").start,
                _ => start,
            };
            let at = (start..t).max_by(|&a, &b| v[a].total_cmp(&v[b])).expect("non-empty run");
            peaks.push(Peak { start, end: t, at, height: v[at] });
        } else {
            t += 1;
        }
    }
    Ok(VSignal { v, peaks, warnings })
}

/// Band split followed by local-variability detection.
pub fn wavelet_detect(x: &[f64], bank: &FilterBank, high_threshold: f64, cfg: &VariabilityConfig) -> Result<(Bands, VSignal)> {
    let bands = band_split(x, bank, high_threshold)?;
    let v = local_variability_detect(&bands.mid, &bands.high, cfg)?;
    Ok((bands, v))
}

#[cfg(test)]
mod tests;
