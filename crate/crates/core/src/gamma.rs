//! Multi-resolution Gamma-law detection over hashed sub-traces. Each hash
//! function splits the packet trace into `M` sub-traces; each sub-trace is
//! aggregated at dyadic levels and fitted with a Gamma law per level; a
//! bucket whose parameters sit far from the reference across levels raises
//! an alarm, and keys are identified by intersecting across hash functions.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::data::{Binning, FlowRecord};
use crate::error::{Error, Result};
use crate::hashing::hash_family;
use crate::linalg::{mean, sample_variance, variance};
use crate::par;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaParams {
    /// Shape.
    pub alpha: f64,
    /// Scale.
    pub beta: f64,
}

impl GammaParams {
    pub fn mean(&self) -> f64 {
        self.alpha * self.beta
    }

    pub fn variance(&self) -> f64 {
        self.alpha * self.beta * self.beta
    }
}

/// Moment matching: `α = mean²/var`, `β = var/mean`.
pub fn fit_gamma(series: &[f64]) -> Result<GammaParams> {
    if series.len() < 8 {
        return Err(Error::Insufficient(format!("Gamma fit needs at least 8 samples, got {}", series.len())));
    }
    let mu = mean(series);
    let var = variance(series);
    if !(mu > 0.0) || !(var > 0.0) {
        return Err(Error::degenerate("degenerate series"));
    }
    Ok(GammaParams { alpha: mu * mu / var, beta: var / mu })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum KeySelector {
    Sip,
    Dip,
}

impl KeySelector {
    pub fn key(self, r: &FlowRecord) -> u64 {
        u64::from(match self {
            Self::Sip => r.sip,
            Self::Dip => r.dip,
        })
    }
}

/// Which population of sub-traces forms the reference for a bucket.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Reference {
    /// The other buckets of the same hash function.
    Buckets,
    /// The same bucket index under the other hash functions.
    Hashes,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultiResConfig {
    /// Hash-function count `N`.
    pub n_hashes: usize,
    /// Table size `M`.
    pub buckets: usize,
    /// Number of dyadic levels `J`.
    pub levels: usize,
    /// Finest aggregation level in seconds.
    pub base_bin: f64,
    pub lambda: f64,
    pub seed: u64,
    pub reference: Reference,
    /// Also alarm on the scale parameter.
    pub use_beta: bool,
    /// A key is reported when its buckets alarm under at least this many hash
    /// functions (`N` means a strict intersection).
    pub quorum: usize,
}

impl Default for MultiResConfig {
    fn default() -> Self {
        Self {
            n_hashes: 8,
            buckets: 16,
            levels: 4,
            base_bin: 0.1,
            lambda: 3.0,
            seed: 1,
            reference: Reference::Buckets,
            use_beta: false,
            quorum: 8,
        }
    }
}

impl MultiResConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_hashes == 0 || self.levels == 0 || self.buckets < 2 {
            return Err(Error::config("need N >= 1, J >= 1 and M >= 2"));
        }
        if !(self.base_bin > 0.0) || !(self.lambda > 0.0) {
            return Err(Error::config("base bin and lambda must be positive"));
        }
        if self.quorum == 0 || self.quorum > self.n_hashes {
            return Err(Error::config("quorum must lie in 1..=N"));
        }
        Ok(())
    }

    /// Aggregation level `j` in seconds (`δ_j = 2^j δ_0`).
    pub fn level_width(&self, j: usize) -> f64 {
        self.base_bin * (1u64 << j) as f64
    }
}

/// Per `(n, m)` bucket: the aggregated series at each level and the keys
/// seen in it.
#[derive(Debug, Clone, PartialEq)]
pub struct Aggregated {
    pub n_hashes: usize,
    pub buckets: usize,
    /// `series[n][m][j]`.
    pub series: Vec<Vec<Vec<Vec<f64>>>>,
    pub keys: Vec<Vec<BTreeSet<u64>>>,
}

/// `x_{2δ}(t) = x_δ(t) + x_δ(t+δ)` on non-overlapping pairs.
pub fn dyadic_levels(base: &[f64], levels: usize) -> Vec<Vec<f64>> {
    let mut out = vec![base.to_vec()];
    for _ in 1..levels {
        let prev = out.last().expect("at least one level");
        out.push(prev.chunks(2).map(|c| c.iter().sum()).collect());
    }
    out
}

/// Splits packets into sub-traces by hash bucket and aggregates packet
/// counts at every level. The base series is zero-padded to a multiple of
/// `2^(J−1)` bins so every level conserves mass.
pub fn split_and_aggregate(records: &[FlowRecord], key: KeySelector, cfg: &MultiResConfig) -> Result<Aggregated> {
    cfg.validate()?;
    let binning = Binning::covering(records, cfg.base_bin)?;
    let block = 1usize << (cfg.levels - 1);
    let n_base = binning.n_bins(records).div_ceil(block) * block;
    if n_base / block < 8 {
        return Err(Error::Insufficient(format!(
            "window covers {} samples at the coarsest level, need at least 8",
            n_base / block
        )));
    }
    let hashes = hash_family(cfg.n_hashes, cfg.seed);
    let per_hash = par::map_range(cfg.n_hashes, |n| {
        let mut base = vec![vec![0.0; n_base]; cfg.buckets];
        let mut keys = vec![BTreeSet::new(); cfg.buckets];
        for r in records {
            let k = key.key(r);
            let m = hashes[n].bucket(k, cfg.buckets);
            base[m][binning.index(r.t)] += r.packets as f64;
            keys[m].insert(k);
        }
        let series: Vec<Vec<Vec<f64>>> = base.iter().map(|b| dyadic_levels(b, cfg.levels)).collect();
        (series, keys)
    });
    let (series, keys) = per_hash.into_iter().unzip();
    Ok(Aggregated { n_hashes: cfg.n_hashes, buckets: cfg.buckets, series, keys })
}

/// Gamma fits per `(n, m, j)`; `None` where the series is degenerate.
pub fn fit_all(agg: &Aggregated) -> Vec<Vec<Vec<Option<GammaParams>>>> {
    par::map_range(agg.n_hashes, |n| {
        agg.series[n].iter().map(|levels| levels.iter().map(|s| fit_gamma(s).ok()).collect()).collect()
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BucketScore {
    pub n: usize,
    pub m: usize,
    pub d_alpha: f64,
    pub d_beta: f64,
    pub alarm: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GammaReport {
    pub scores: Vec<BucketScore>,
    /// Keys whose buckets alarm under at least `quorum` hash functions.
    pub keys: Vec<u64>,
}

/// `D² = (1/J) Σ_j (θ_j − ref_j)² / var_j` against the leave-one-out
/// reference. Levels whose reference is unusable are skipped.
fn mahalanobis(values: &[Option<f64>], refs: &[Vec<f64>]) -> f64 {
    let mut acc = 0.0;
    let mut used = 0;
    for (v, pop) in values.iter().zip(refs) {
        let Some(v) = v else { continue };
        if pop.len() < 2 {
            continue;
        }
        let var = sample_variance(pop);
        if var > 0.0 {
            let d = v - mean(pop);
            acc += d * d / var;
            used += 1;
        }
    }
    if used == 0 {
        0.0
    } else {
        (acc / used as f64).sqrt()
    }
}

/// Scores every bucket and identifies keys. `params[n][m][j]`.
pub fn gamma_detect(params: &[Vec<Vec<Option<GammaParams>>>], keys: &[Vec<BTreeSet<u64>>], cfg: &MultiResConfig) -> Result<GammaReport> {
    cfg.validate()?;
    let n_h = params.len();
    let m_b = params.first().map_or(0, |p| p.len());
    let peers = match cfg.reference {
        Reference::Buckets => m_b,
        Reference::Hashes => n_h,
    };
    if peers < 3 {
        return Err(Error::Insufficient("the leave-one-out reference needs at least 3 sketch outputs".into()));
    }
    let levels = cfg.levels;
    let pick = |f: fn(&GammaParams) -> f64, n: usize, m: usize, j: usize| params[n][m].get(j).copied().flatten().map(|p| f(&p));
    let alpha = |p: &GammaParams| p.alpha;
    let beta = |p: &GammaParams| p.beta;
    let mut scores = Vec::with_capacity(n_h * m_b);
    for n in 0..n_h {
        for m in 0..m_b {
            let peer_idx: Vec<(usize, usize)> = match cfg.reference {
                Reference::Buckets => (0..m_b).filter(|&o| o != m).map(|o| (n, o)).collect(),
                Reference::Hashes => (0..n_h).filter(|&o| o != n).map(|o| (o, m)).collect(),
            };
            let score = |f: fn(&GammaParams) -> f64| {
                let vals: Vec<Option<f64>> = (0..levels).map(|j| pick(f, n, m, j)).collect();
                let refs: Vec<Vec<f64>> = (0..levels)
                    .map(|j| peer_idx.iter().filter_map(|&(a, b)| pick(f, a, b, j)).collect())
                    .collect();
                mahalanobis(&vals, &refs)
            };
            let d_alpha = score(alpha);
            let d_beta = score(beta);
            let alarm = d_alpha > cfg.lambda || (cfg.use_beta && d_beta > cfg.lambda);
            scores.push(BucketScore { n, m, d_alpha, d_beta, alarm });
        }
    }
    let mut votes: std::collections::BTreeMap<u64, usize> = std::collections::BTreeMap::new();
    for n in 0..n_h {
        let mut hit: BTreeSet<u64> = BTreeSet::new();
        for s in scores.iter().filter(|s| s.n == n && s.alarm) {
            hit.extend(keys[n][s.m].iter().copied());
        }
        for k in hit {
            *votes.entry(k).or_default() += 1;
        }
    }
    let keys = votes.into_iter().filter(|&(_, v)| v >= cfg.quorum).map(|(k, _)| k).collect();
    Ok(GammaReport { scores, keys })
}

/// Split, aggregate, fit and detect in one call.
pub fn gamma_pipeline(records: &[FlowRecord], key: KeySelector, cfg: &MultiResConfig) -> Result<GammaReport> {
    let agg = split_and_aggregate(records, key, cfg)?;
    gamma_detect(&fit_all(&agg), &agg.keys, cfg)
}
