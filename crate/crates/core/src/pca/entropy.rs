//! Sample entropy of feature histograms and the multi-way entropy layout.

use std::collections::BTreeMap;

use nalgebra::DMatrix;

use crate::data::{Binning, Feature, FlowRecord, Histogram};
use crate::error::{Error, Result};

/// `H = −Σ (n_i/S) log2(n_i/S)` in bits.
pub fn sample_entropy(h: &Histogram) -> Result<f64> {
    let s = h.total();
    if s == 0 {
        return Err(Error::degenerate("empty histogram"));
    }
    Ok(entropy_of_counts(h.counts.values().copied(), s))
}

pub(crate) fn entropy_of_counts(counts: impl Iterator<Item = u64>, total: u64) -> f64 {
    let s = total as f64;
    let h: f64 = counts
        .filter(|&c| c > 0)
        .map(|c| {
            let p = c as f64 / s;
            -p * p.log2()
        })
        .sum();
    h.max(0.0)
}

/// Entropy tensor `H(t, p, k)` with `k` over SIP, DIP, SP, DP.
#[derive(Debug, Clone, PartialEq)]
pub struct EntropyTensor {
    t: usize,
    p: usize,
    data: Vec<f64>,
}

impl EntropyTensor {
    pub fn zeros(t: usize, p: usize) -> Self {
        Self { t, p, data: vec![0.0; t * p * 4] }
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.t, self.p)
    }

    fn idx(&self, t: usize, p: usize, k: usize) -> usize {
        assert!(t < self.t && p < self.p && k < 4, "entropy tensor index out of range");
        (t * self.p + p) * 4 + k
    }

    pub fn get(&self, t: usize, p: usize, k: usize) -> f64 {
        self.data[self.idx(t, p, k)]
    }

    pub fn set(&mut self, t: usize, p: usize, k: usize, v: f64) {
        let i = self.idx(t, p, k);
        self.data[i] = v;
    }
}

/// Entropy matrix `H(t, 4p)` with column blocks SIP | DIP | SP | DP.
#[derive(Debug, Clone, PartialEq)]
pub struct EntropyMatrix {
    pub values: DMatrix<f64>,
    pub flows: usize,
}

impl EntropyMatrix {
    /// Column index of flow `p`, feature block `k`.
    pub fn column(&self, p: usize, k: usize) -> usize {
        k * self.flows + p
    }

    /// Inverse of [`multiway_recast`].
    pub fn to_tensor(&self) -> EntropyTensor {
        let mut out = EntropyTensor::zeros(self.values.nrows(), self.flows);
        for t in 0..self.values.nrows() {
            for p in 0..self.flows {
                for k in 0..4 {
                    out.set(t, p, k, self.values[(t, self.column(p, k))]);
                }
            }
        }
        out
    }

    /// Column labels such as `srcIP/3`.
    pub fn labels(&self) -> Vec<String> {
        let mut v = Vec::with_capacity(4 * self.flows);
        for f in Feature::ADDRESS_PORT {
            for p in 0..self.flows {
                v.push(format!("{}/{p}", f.name()));
            }
        }
        v
    }
}

pub fn multiway_recast(h: &EntropyTensor) -> EntropyMatrix {
    let (t, p) = h.dims();
    let values = DMatrix::from_fn(t, 4 * p, |i, j| h.get(i, j % p, j / p));
    EntropyMatrix { values, flows: p }
}

/// Builds the entropy tensor from flow records. `flow_of` assigns each record
/// to one of `p` flows (or drops it); empty cells get entropy 0.
pub fn entropy_tensor(
    records: &[FlowRecord],
    binning: &Binning,
    n_bins: usize,
    p: usize,
    flow_of: impl Fn(&FlowRecord) -> Option<usize>,
) -> EntropyTensor {
    let mut cells: BTreeMap<(usize, usize), [Histogram; 4]> = BTreeMap::new();
    for r in records {
        let t = binning.index(r.t);
        let Some(f) = flow_of(r) else { continue };
        if t >= n_bins || f >= p {
            continue;
        }
        let hs = cells
            .entry((t, f))
            .or_insert_with(|| Feature::ADDRESS_PORT.map(Histogram::new));
        for (k, feat) in Feature::ADDRESS_PORT.iter().enumerate() {
            hs[k].add(r.feature(*feat), r.packets);
        }
    }
    let mut out = EntropyTensor::zeros(n_bins, p);
    for ((t, f), hs) in &cells {
        for (k, h) in hs.iter().enumerate() {
            out.set(*t, *f, k, sample_entropy(h).unwrap_or(0.0));
        }
    }
    out
}
