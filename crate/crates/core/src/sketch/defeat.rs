//! Sketch-subspace pipeline: entropy of hashed histogram-sketches per
//! feature, multi-way subspace detection per hash function, voting across
//! hash functions and key identification by intersection.

use std::collections::{BTreeMap, BTreeSet};
use std::net::Ipv4Addr;

use nalgebra::DVector;

use crate::data::{Alarm, Binning, Feature, FlowRecord, Histogram};
use crate::error::{Error, Result};
use crate::hashing::hash_family;
use crate::par;
use crate::pca::{
    fit_normalized, greedy_identify, multiway_recast, q_threshold, sample_entropy, split_subspace, AnomalyDirection,
    EntropyTensor,
};

#[derive(Debug, Clone, PartialEq)]
pub struct DefeatConfig {
    /// Number of hash functions (sketches per feature).
    pub m: usize,
    /// Buckets per sketch.
    pub s: usize,
    /// Votes needed to declare an anomaly.
    pub l: usize,
    pub seed: u64,
    pub bin_width: f64,
    pub alpha: f64,
    pub sigma_mult: f64,
    /// Upper bound on greedy identification steps per hash.
    pub max_identify: usize,
}

impl Default for DefeatConfig {
    fn default() -> Self {
        Self { m: 4, s: 16, l: 3, seed: 1, bin_width: 300.0, alpha: 0.001, sigma_mult: 3.0, max_identify: 4 }
    }
}

impl DefeatConfig {
    pub fn validate(&self) -> Result<()> {
        if self.m == 0 || self.l == 0 || self.l > self.m {
            return Err(Error::config(format!("vote threshold l = {} must satisfy 1 <= l <= m = {}", self.l, self.m)));
        }
        if self.s < 2 {
            return Err(Error::config("sketch size must be at least 2"));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) || !(self.bin_width > 0.0) {
            return Err(Error::config("alpha must lie in (0,1) and the bin width be positive"));
        }
        Ok(())
    }
}

/// First 21 bits of the source address followed by the first 21 bits of the
/// destination address.
pub fn hash_key(sip: u32, dip: u32) -> u64 {
    (u64::from(sip >> 11) << 21) | u64::from(dip >> 11)
}

pub fn format_key(key: u64) -> String {
    let sip = Ipv4Addr::from(((key >> 21) as u32) << 11);
    let dip = Ipv4Addr::from(((key & 0x1f_ffff) as u32) << 11);
    format!("{sip}/21-{dip}/21")
}

#[derive(Debug, Clone, PartialEq)]
pub struct DefeatReport {
    pub alarms: Vec<Alarm>,
    /// Detection bits, time × hash function.
    pub bits: Vec<Vec<bool>>,
    /// SPE over its threshold, time × hash function.
    pub ratios: Vec<Vec<f64>>,
    /// Normal-subspace dimension chosen per hash function.
    pub k: Vec<usize>,
}

struct HashResult {
    bits: Vec<bool>,
    spe: Vec<f64>,
    threshold: f64,
    k: usize,
    /// Anomalous buckets per alarmed time bin.
    buckets: BTreeMap<usize, BTreeSet<usize>>,
}

type Sketches = Vec<[Histogram; 4]>;

fn empty_sketches(n: usize) -> Sketches {
    (0..n).map(|_| Feature::ADDRESS_PORT.map(Histogram::new)).collect()
}

pub fn defeat_pipeline(per_router: &[Vec<FlowRecord>], cfg: &DefeatConfig) -> Result<DefeatReport> {
    cfg.validate()?;
    let all: Vec<FlowRecord> = per_router.iter().flatten().copied().collect();
    let binning = Binning::covering(&all, cfg.bin_width)?;
    let n_bins = binning.n_bins(&all);
    if n_bins < 2 {
        return Err(Error::Insufficient("the pipeline needs at least two time bins".into()));
    }
    let hashes = hash_family(cfg.m, cfg.seed);
    let s = cfg.s;
    let mut keys_at: Vec<BTreeSet<u64>> = vec![BTreeSet::new(); n_bins];
    for r in &all {
        keys_at[binning.index(r.t)].insert(hash_key(r.sip, r.dip));
    }

    let per_hash = par::try_map_range(cfg.m, |j| -> Result<HashResult> {
        let h = hashes[j];
        // local histogram-sketches per router, summed into the global one
        let mut global = empty_sketches(n_bins * s);
        for records in per_router {
            let mut local = empty_sketches(n_bins * s);
            for r in records {
                let cell = binning.index(r.t) * s + h.bucket(hash_key(r.sip, r.dip), s);
                for (f, feat) in Feature::ADDRESS_PORT.iter().enumerate() {
                    local[cell][f].add(r.feature(*feat), r.packets);
                }
            }
            for (g, l) in global.iter_mut().zip(local) {
                for (gf, lf) in g.iter_mut().zip(l) {
                    for (v, c) in lf.counts {
                        gf.add(v, c);
                    }
                }
            }
        }
        let mut tensor = EntropyTensor::zeros(n_bins, s);
        for t in 0..n_bins {
            for b in 0..s {
                for f in 0..4 {
                    tensor.set(t, b, f, sample_entropy(&global[t * s + b][f]).unwrap_or(0.0));
                }
            }
        }
        let em = multiway_recast(&tensor);
        let (model, x) = fit_normalized(&em.values, true)?;
        let split = split_subspace(&x, &model, cfg.sigma_mult);
        let model = model.with_k(split.detection_k(x.ncols()))?;
        let threshold = q_threshold(&model.residual_variances(), cfg.alpha)?;
        let dirs = AnomalyDirection::unit_axes(&em.labels());
        let mut bits = Vec::with_capacity(n_bins);
        let mut spe = Vec::with_capacity(n_bins);
        let mut buckets = BTreeMap::new();
        for t in 0..n_bins {
            let row: DVector<f64> = x.row(t).transpose();
            let e = model.spe(&row);
            let hit = e > threshold;
            if hit {
                let cols = greedy_identify(&row, &model, &dirs, cfg.alpha, cfg.max_identify)?;
                buckets.insert(t, cols.into_iter().map(|c| c % s).collect());
            }
            bits.push(hit);
            spe.push(e);
        }
        Ok(HashResult { bits, spe, threshold, k: model.k(), buckets })
    })?;

    let mut alarms = Vec::new();
    for t in 0..n_bins {
        let votes = per_hash.iter().filter(|h| h.bits[t]).count();
        if votes < cfg.l {
            continue;
        }
        let mut inter: Option<BTreeSet<u64>> = None;
        for (j, hr) in per_hash.iter().enumerate() {
            let Some(bs) = hr.buckets.get(&t) else { continue };
            let keys: BTreeSet<u64> = keys_at[t].iter().copied().filter(|&k| bs.contains(&hashes[j].bucket(k, s))).collect();
            inter = Some(match inter {
                None => keys,
                Some(prev) => prev.intersection(&keys).copied().collect(),
            });
        }
        let score = per_hash.iter().map(|h| h.spe[t] / h.threshold).fold(0.0, f64::max);
        alarms.push(
            Alarm::new(t, "defeat", votes as f64, cfg.l as f64)
                .with_keys(inter.unwrap_or_default().into_iter().map(format_key).collect()),
        );
        log::debug!("defeat alarm at bin {t}: {votes} votes, max SPE ratio {score:.2}");
    }
    let bits = (0..n_bins).map(|t| per_hash.iter().map(|h| h.bits[t]).collect()).collect();
    let ratios = (0..n_bins).map(|t| per_hash.iter().map(|h| h.spe[t] / h.threshold).collect()).collect();
    Ok(DefeatReport { alarms, bits, ratios, k: per_hash.iter().map(|h| h.k).collect() })
}
