//! Anomaly extraction: histogram clones per flow feature flag intervals by
//! the change in KL distance, the offending feature values are isolated by
//! iterative bin removal and intersected across clones, and the flows that
//! carry them are summarized by frequent item-set mining.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::data::{Alarm, Binning, Feature, FlowRecord};
use crate::error::{Error, Result};
use crate::hashing::{hash_family, PolyHash};
use crate::linalg::{mad, MAD_TO_SIGMA};
use crate::par;

/// `Σ p_i log2(p_i / q_i)`; infinite when some `q_i = 0 < p_i`.
pub fn kl_distance(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::contract("distributions differ in length"));
    }
    for d in [p, q] {
        let s: f64 = d.iter().sum();
        if (s - 1.0).abs() > 1e-9 || d.iter().any(|v| !(*v >= 0.0)) {
            return Err(Error::contract(format!("distribution sums to {s}, expected 1")));
        }
    }
    let mut d = 0.0;
    for (pi, qi) in p.iter().zip(q) {
        if *pi == 0.0 {
            continue;
        }
        if *qi == 0.0 {
            return Ok(f64::INFINITY);
        }
        d += pi * (pi / qi).log2();
    }
    Ok(d.max(0.0))
}

/// A hash-binned histogram of one feature over one interval.
#[derive(Debug, Clone, PartialEq)]
pub struct HistogramClone {
    pub m: usize,
    pub hash: PolyHash,
    pub bins: Vec<f64>,
}

impl HistogramClone {
    pub fn new(m: usize, hash: PolyHash) -> Self {
        Self { m, hash, bins: vec![0.0; m] }
    }

    pub fn bin_of(&self, value: u64) -> usize {
        self.hash.bucket(value, self.m)
    }

    pub fn add(&mut self, value: u64, count: f64) {
        let b = self.bin_of(value);
        self.bins[b] += count;
    }

    pub fn total(&self) -> f64 {
        self.bins.iter().sum()
    }
}

/// Counts plus a pseudo-count per bin, normalized.
pub fn smoothed(counts: &[f64], pseudo: f64) -> Vec<f64> {
    let total: f64 = counts.iter().sum::<f64>() + pseudo * counts.len() as f64;
    if total <= 0.0 {
        return vec![1.0 / counts.len() as f64; counts.len()];
    }
    counts.iter().map(|c| (c + pseudo) / total).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KlConfig {
    pub training: usize,
    pub sigma_mult: f64,
    /// Pseudo-count added to every bin so empty bins keep the distance finite.
    pub pseudo: f64,
}

impl Default for KlConfig {
    fn default() -> Self {
        Self { training: 20, sigma_mult: 3.0, pseudo: 0.5 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KlSeries {
    /// `D` of each interval against the previous one; 0 for the first.
    pub d: Vec<f64>,
    /// First difference of `d`; 0 for the first two intervals.
    pub delta: Vec<f64>,
    pub sigma: f64,
    pub threshold: f64,
    /// Alarms after the training intervals.
    pub alarms: Vec<bool>,
}

/// KL distance of each interval's clone counts from the previous interval,
/// with alarms where its first difference reaches `sigma_mult · σ̂`.
pub fn kl_detect(counts: &[Vec<f64>], cfg: &KlConfig) -> Result<KlSeries> {
    let n = counts.len();
    if cfg.training < 2 || n < cfg.training + 2 {
        return Err(Error::Insufficient(format!("{n} intervals cannot cover {} training intervals plus two", cfg.training)));
    }
    let mut d = vec![0.0; n];
    for t in 1..n {
        d[t] = kl_distance(&smoothed(&counts[t - 1], cfg.pseudo), &smoothed(&counts[t], cfg.pseudo))?;
    }
    let mut delta = vec![0.0; n];
    for t in 2..n {
        delta[t] = d[t] - d[t - 1];
    }
    let sigma = MAD_TO_SIGMA * mad(&delta[2..cfg.training + 2]);
    if !(sigma > 0.0) {
        return Err(Error::degenerate("KL differences are constant over training; use more training intervals"));
    }
    let threshold = cfg.sigma_mult * sigma;
    let alarms = (0..n).map(|t| t >= cfg.training + 2 && delta[t] >= threshold).collect();
    Ok(KlSeries { d, delta, sigma, threshold, alarms })
}

/// Bins whose simulated removal brings `Δ D` under `threshold`: the bin
/// with the largest `|p_i - q_i|` is reset to its reference share each
/// round. Empty when the change is already under the threshold.
pub fn identify_bins(prev: &[f64], cur: &[f64], d_prev: f64, threshold: f64, pseudo: f64) -> Result<Vec<usize>> {
    let m = prev.len();
    let p = smoothed(prev, pseudo);
    let total: f64 = cur.iter().sum();
    let mut cur = cur.to_vec();
    let mut bins = Vec::new();
    loop {
        let q = smoothed(&cur, pseudo);
        if kl_distance(&p, &q)? - d_prev < threshold {
            return Ok(bins);
        }
        if bins.len() == m {
            return Err(Error::degenerate("bin removal did not bring the distance under the threshold"));
        }
        let i = (0..m)
            .filter(|i| !bins.contains(i))
            .max_by(|&a, &b| (p[a] - q[a]).abs().total_cmp(&(p[b] - q[b]).abs()).then(b.cmp(&a)))
            .expect("some bin is left");
        bins.push(i);
        cur[i] = p[i] * total;
    }
}

/// Values landing in an identified bin of every clone.
pub fn identify_values(values: &BTreeSet<u64>, clones: &[(&HistogramClone, &[usize])]) -> BTreeSet<u64> {
    if clones.is_empty() {
        return BTreeSet::new();
    }
    values.iter().copied().filter(|v| clones.iter().all(|(c, bins)| bins.contains(&c.bin_of(*v)))).collect()
}

pub type Item = (Feature, u64);

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct ItemSet {
    /// Sorted by feature; features are distinct.
    pub items: Vec<Item>,
    pub support: usize,
}

impl fmt::Display for ItemSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let items: Vec<String> = self.items.iter().map(|(ft, v)| format!("{}={}", ft.name(), ft.format_value(*v))).collect();
        write!(f, "{}  {}  {}", self.items.len(), items.join(","), self.support)
    }
}

/// The seven items of a flow record.
pub fn transaction(r: &FlowRecord) -> Vec<Item> {
    Feature::ALL.iter().map(|f| (*f, r.feature(*f))).collect()
}

fn is_subset(a: &[Item], b: &[Item]) -> bool {
    a.iter().all(|x| b.binary_search(x).is_ok())
}

/// Level-wise frequent item-set mining keeping only sets with support at
/// least `min_support` that are not contained in a frequent set one item
/// larger.
pub fn apriori(transactions: &[Vec<Item>], min_support: usize) -> Result<Vec<ItemSet>> {
    if min_support == 0 {
        return Err(Error::config("minimum support must be at least 1"));
    }
    let txs: Vec<Vec<Item>> = transactions
        .iter()
        .map(|t| {
            let mut t = t.clone();
            t.sort();
            t.dedup();
            t
        })
        .collect();
    for t in &txs {
        if t.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::contract("a transaction repeats a feature"));
        }
    }
    let mut singles: HashMap<Item, usize> = HashMap::new();
    for t in &txs {
        for it in t {
            *singles.entry(*it).or_insert(0) += 1;
        }
    }
    let mut level: BTreeMap<Vec<Item>, usize> =
        singles.into_iter().filter(|(_, s)| *s >= min_support).map(|(it, s)| (vec![it], s)).collect();
    let mut out = Vec::new();
    while !level.is_empty() {
        let sets: Vec<&Vec<Item>> = level.keys().collect();
        let mut candidates: BTreeSet<Vec<Item>> = BTreeSet::new();
        for (i, a) in sets.iter().enumerate() {
            for b in &sets[i + 1..] {
                let k = a.len();
                if a[..k - 1] != b[..k - 1] {
                    break;
                }
                if a[k - 1].0 == b[k - 1].0 {
                    continue;
                }
                let mut c = a.to_vec();
                c.push(b[k - 1]);
                // every k-subset must itself be frequent
                let all_frequent = (0..c.len()).all(|skip| {
                    let sub: Vec<Item> = c.iter().enumerate().filter(|(j, _)| *j != skip).map(|(_, x)| *x).collect();
                    level.contains_key(&sub)
                });
                if all_frequent {
                    candidates.insert(c);
                }
            }
        }
        let next: BTreeMap<Vec<Item>, usize> = candidates
            .into_iter()
            .map(|c| {
                let s = txs.iter().filter(|t| is_subset(&c, t)).count();
                (c, s)
            })
            .filter(|(_, s)| *s >= min_support)
            .collect();
        for (set, support) in &level {
            if !next.keys().any(|n| is_subset(set, n)) {
                out.push(ItemSet { items: set.clone(), support: *support });
            }
        }
        level = next;
    }
    out.sort_by(|a, b| b.items.len().cmp(&a.items.len()).then(b.support.cmp(&a.support)).then(a.items.cmp(&b.items)));
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractConfig {
    pub features: Vec<Feature>,
    /// Clones per feature.
    pub clones: usize,
    /// Bins per clone.
    pub bins: usize,
    pub interval: f64,
    pub kl: KlConfig,
    /// Clones that must alarm before a feature is examined; a majority by default.
    pub votes: Option<usize>,
    /// Features that must alarm together before flows are flagged.
    pub min_features: usize,
    pub min_support: usize,
    pub seed: u64,
}

impl Default for ExtractConfig {
    fn default() -> Self {
        Self {
            features: vec![Feature::Sip, Feature::Dip, Feature::Sp, Feature::Dp, Feature::Packets, Feature::Bytes],
            clones: 3,
            bins: 256,
            interval: 300.0,
            kl: KlConfig::default(),
            votes: None,
            min_features: 2,
            min_support: 50,
            seed: 1,
        }
    }
}

impl ExtractConfig {
    pub fn votes(&self) -> usize {
        self.votes.unwrap_or(self.clones / 2 + 1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.features.is_empty() || self.clones == 0 || self.bins < 2 {
            return Err(Error::config("extraction needs features, at least one clone and two bins"));
        }
        if self.votes() == 0 || self.votes() > self.clones {
            return Err(Error::config(format!("votes {} must lie in 1..={}", self.votes(), self.clones)));
        }
        if !(self.interval > 0.0) || !(self.kl.sigma_mult > 0.0) || self.kl.pseudo < 0.0 {
            return Err(Error::config("interval and threshold multiplier must be positive"));
        }
        if self.min_features == 0 || self.min_features > self.features.len() {
            return Err(Error::config(format!("min_features {} must lie in 1..={}", self.min_features, self.features.len())));
        }
        if self.min_support == 0 {
            return Err(Error::config("minimum support must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Finding {
    pub t_index: usize,
    /// Identified values per alarmed feature.
    pub values: BTreeMap<Feature, BTreeSet<u64>>,
    /// Flows carrying at least one identified value.
    pub flagged: usize,
    pub itemsets: Vec<ItemSet>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExtractReport {
    pub alarms: Vec<Alarm>,
    pub findings: Vec<Finding>,
}

struct FeatureRun {
    feature: Feature,
    clones: Vec<Vec<HistogramClone>>,
    series: Vec<KlSeries>,
}

/// Histogram detectors, value identification, then item-set mining on the
/// flagged flows of each alarmed interval.
pub fn extract_pipeline(records: &[FlowRecord], cfg: &ExtractConfig) -> Result<ExtractReport> {
    cfg.validate()?;
    let binning = Binning::covering(records, cfg.interval)?;
    let n = binning.n_bins(records);
    let mut by_interval: Vec<Vec<&FlowRecord>> = vec![Vec::new(); n];
    for r in records {
        by_interval[binning.index(r.t)].push(r);
    }
    let hashes = hash_family(cfg.features.len() * cfg.clones, cfg.seed);
    let runs = par::try_map_range(cfg.features.len(), |fi| -> Result<FeatureRun> {
        let feature = cfg.features[fi];
        let mut clones = Vec::with_capacity(cfg.clones);
        let mut series = Vec::with_capacity(cfg.clones);
        for c in 0..cfg.clones {
            let h = hashes[fi * cfg.clones + c];
            let per: Vec<HistogramClone> = by_interval
                .iter()
                .map(|rs| {
                    let mut hc = HistogramClone::new(cfg.bins, h);
                    for r in rs {
                        hc.add(r.feature(feature), 1.0);
                    }
                    hc
                })
                .collect();
            let counts: Vec<Vec<f64>> = per.iter().map(|hc| hc.bins.clone()).collect();
            series.push(kl_detect(&counts, &cfg.kl)?);
            clones.push(per);
        }
        Ok(FeatureRun { feature, clones, series })
    })?;

    let mut alarms = Vec::new();
    let mut findings = Vec::new();
    for t in 0..n {
        let mut values: BTreeMap<Feature, BTreeSet<u64>> = BTreeMap::new();
        let voting: Vec<(&FeatureRun, Vec<usize>)> = runs
            .iter()
            .map(|run| (run, (0..cfg.clones).filter(|&c| run.series[c].alarms[t]).collect::<Vec<usize>>()))
            .filter(|(_, hit)| hit.len() >= cfg.votes())
            .collect();
        if voting.len() < cfg.min_features {
            continue;
        }
        for (run, hit) in voting {
            let mut collected = Vec::with_capacity(hit.len());
            for &c in &hit {
                let s = &run.series[c];
                let bins = identify_bins(&run.clones[c][t - 1].bins, &run.clones[c][t].bins, s.d[t - 1], s.threshold, cfg.kl.pseudo)?;
                collected.push((&run.clones[c][t], bins));
            }
            let present: BTreeSet<u64> = by_interval[t].iter().map(|r| r.feature(run.feature)).collect();
            let refs: Vec<(&HistogramClone, &[usize])> = collected.iter().map(|(c, b)| (*c, b.as_slice())).collect();
            let v = identify_values(&present, &refs);
            let score = hit.iter().map(|&c| run.series[c].delta[t] / run.series[c].threshold).fold(0.0, f64::max);
            alarms.push(
                Alarm::new(t, format!("extract:{}", run.feature.name()), score, 1.0)
                    .with_keys(v.iter().map(|x| format!("{}={}", run.feature.name(), run.feature.format_value(*x))).collect()),
            );
            if !v.is_empty() {
                values.insert(run.feature, v);
            }
        }
        if values.is_empty() {
            continue;
        }
        let flagged: Vec<Vec<Item>> = by_interval[t]
            .iter()
            .filter(|r| values.iter().any(|(f, vs)| vs.contains(&r.feature(*f))))
            .map(|r| transaction(r))
            .collect();
        let itemsets = apriori(&flagged, cfg.min_support)?;
        findings.push(Finding { t_index: t, values, flagged: flagged.len(), itemsets });
    }
    Ok(ExtractReport { alarms, findings })
}

#[cfg(test)]
mod tests;
