//! Hierarchical heavy hitters over prefix tries. A 1-bit trie grows a
//! node only after its parent has seen more than the split threshold `T_s`,
//! so memory stays bounded; volumes that arrived before a node existed are
//! estimated afterwards with one of three missed-traffic rules. Pairs of
//! prefixes are tracked by cross-producting two tries.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::net::Ipv4Addr;

use serde::{Deserialize, Serialize};

use crate::data::FlowRecord;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MissRule {
    CopyAll,
    NoCopy,
    Splitting,
}

impl MissRule {
    pub const ALL: [MissRule; 3] = [MissRule::CopyAll, MissRule::NoCopy, MissRule::Splitting];

    pub fn name(self) -> &'static str {
        match self {
            Self::CopyAll => "copy_all",
            Self::NoCopy => "no_copy",
            Self::Splitting => "splitting",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|r| r.name() == s)
    }
}

/// How the per-dimension missed-traffic estimates of a prefix pair combine.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PairMiss {
    /// The larger of the two estimates.
    Max,
    /// Their sum, which keeps copy_all an upper bound.
    Sum,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HhhConfig {
    pub phi: f64,
    pub epsilon: f64,
    /// Key width in bits (32 for IPv4).
    pub width: u32,
    /// Fixed split threshold; otherwise `ε·S/W` from `expected_total`.
    pub split_threshold: Option<f64>,
    pub expected_total: Option<f64>,
}

impl Default for HhhConfig {
    fn default() -> Self {
        Self { phi: 0.05, epsilon: 0.01, width: 32, split_threshold: None, expected_total: None }
    }
}

impl HhhConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.phi > 0.0) || !(self.epsilon > 0.0 && self.epsilon <= 1.0) {
            return Err(Error::config("phi must be positive and epsilon in (0,1]"));
        }
        if self.width == 0 || self.width > 63 {
            return Err(Error::config("key width must lie in 1..=63"));
        }
        Ok(())
    }

    /// `T_s`, using `total` when neither a fixed threshold nor an expected
    /// total is configured.
    pub fn threshold(&self, total: f64) -> Result<f64> {
        self.validate()?;
        let ts = self
            .split_threshold
            .unwrap_or_else(|| self.epsilon * self.expected_total.unwrap_or(total) / self.width as f64);
        if !(ts > 0.0) {
            return Err(Error::config("split threshold must be positive"));
        }
        Ok(ts)
    }
}

/// A prefix of a `width`-bit key: the top `len` bits, stored right-aligned.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Prefix {
    pub len: u32,
    pub bits: u64,
    pub width: u32,
}

impl Prefix {
    pub fn of(key: u64, len: u32, width: u32) -> Self {
        Self { len, bits: if len == 0 { 0 } else { key >> (width - len) }, width }
    }

    pub fn root(width: u32) -> Self {
        Self { len: 0, bits: 0, width }
    }

    pub fn parent(&self) -> Option<Self> {
        (self.len > 0).then(|| Self { len: self.len - 1, bits: self.bits >> 1, width: self.width })
    }

    pub fn contains(&self, key: u64) -> bool {
        Self::of(key, self.len, self.width).bits == self.bits
    }

    /// Whether `self` is `other` or one of its ancestors.
    pub fn covers(&self, other: &Prefix) -> bool {
        self.len <= other.len && (other.bits >> (other.len - self.len)) == self.bits
    }

    /// Bit `depth` (0-based from the most significant) of `key`.
    fn bit(key: u64, depth: u32, width: u32) -> usize {
        ((key >> (width - 1 - depth)) & 1) as usize
    }
}

impl fmt::Display for Prefix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.width == 32 {
            let addr = if self.len == 0 { 0 } else { (self.bits << (32 - self.len)) as u32 };
            write!(f, "{}/{}", Ipv4Addr::from(addr), self.len)
        } else {
            for i in (0..self.len).rev() {
                write!(f, "{}", (self.bits >> i) & 1)?;
            }
            write!(f, "*")
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrieNode {
    pub prefix: Prefix,
    pub children: [Option<usize>; 2],
    pub parent: Option<usize>,
    pub fringe: bool,
    /// Traffic absorbed while this node was a fringe node.
    pub volume: f64,
    /// Traffic charged here at full key depth.
    pub subtotal: f64,
}

impl TrieNode {
    pub fn depth(&self) -> u32 {
        self.prefix.len
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trie {
    nodes: Vec<TrieNode>,
    width: u32,
    ts: f64,
    total: f64,
}

impl Trie {
    pub fn new(width: u32, split_threshold: f64) -> Result<Self> {
        if width == 0 || width > 63 || !(split_threshold > 0.0) {
            return Err(Error::config("trie needs width in 1..=63 and a positive split threshold"));
        }
        let root = TrieNode { prefix: Prefix::root(width), children: [None, None], parent: None, fringe: true, volume: 0.0, subtotal: 0.0 };
        Ok(Self { nodes: vec![root], width, ts: split_threshold, total: 0.0 })
    }

    pub fn nodes(&self) -> &[TrieNode] {
        &self.nodes
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn split_threshold(&self) -> f64 {
        self.ts
    }

    pub fn total(&self) -> f64 {
        self.total
    }

    /// Charges `value` to the longest-matching node, converting a full
    /// fringe node to internal and creating at most one child. Returns the
    /// index of the charged node.
    pub fn update(&mut self, key: u64, value: f64) -> Result<usize> {
        if value > self.ts {
            return Err(Error::contract(format!("value {value} exceeds the split threshold {}", self.ts)));
        }
        if !(value >= 0.0) {
            return Err(Error::contract("values must be non-negative"));
        }
        if key >> self.width != 0 {
            return Err(Error::contract(format!("key {key} wider than {} bits", self.width)));
        }
        self.total += value;
        let mut i = 0;
        loop {
            let node = &mut self.nodes[i];
            let depth = node.depth();
            if node.fringe {
                if node.volume + value <= self.ts {
                    node.volume += value;
                    return Ok(i);
                }
                node.fringe = false;
                if depth == self.width {
                    node.subtotal += value;
                    return Ok(i);
                }
            } else if depth == self.width {
                node.subtotal += value;
                return Ok(i);
            }
            let b = Prefix::bit(key, depth, self.width);
            i = match self.nodes[i].children[b] {
                Some(c) => c,
                None => {
                    let c = self.nodes.len();
                    self.nodes.push(TrieNode {
                        prefix: Prefix::of(key, depth + 1, self.width),
                        children: [None, None],
                        parent: Some(i),
                        fringe: true,
                        volume: 0.0,
                        subtotal: 0.0,
                    });
                    self.nodes[i].children[b] = Some(c);
                    c
                }
            };
        }
    }

    /// Charged node's prefix length for a key update (convenience for 2-D).
    pub fn update_len(&mut self, key: u64, value: f64) -> Result<Prefix> {
        let i = self.update(key, value)?;
        Ok(self.nodes[i].prefix)
    }

    /// Number of internal nodes at each depth `0..=W`.
    pub fn internal_per_depth(&self) -> Vec<usize> {
        let mut v = vec![0; self.width as usize + 1];
        for n in self.nodes.iter().filter(|n| !n.fringe) {
            v[n.depth() as usize] += 1;
        }
        v
    }

    /// Deepest existing node covering `p`.
    fn longest_match(&self, p: &Prefix) -> usize {
        let mut i = 0;
        loop {
            let d = self.nodes[i].depth();
            if d == p.len {
                return i;
            }
            let b = ((p.bits >> (p.len - d - 1)) & 1) as usize;
            match self.nodes[i].children[b] {
                Some(c) => i = c,
                None => return i,
            }
        }
    }

    /// Reconstructs subtree volumes and missed-traffic estimates.
    pub fn finalize(&self) -> FinalTrie<'_> {
        let n = self.nodes.len();
        // children always come after their parent in `nodes`
        let mut below = vec![0.0; n];
        for i in (0..n).rev() {
            let node = &self.nodes[i];
            let own = node.volume + node.subtotal + below[i];
            if let Some(p) = node.parent {
                below[p] += own;
            }
        }
        let recon: Vec<f64> = (0..n).map(|i| self.nodes[i].volume + self.nodes[i].subtotal + below[i]).collect();
        let mut miss_copy = vec![0.0; n];
        let mut miss_split = vec![0.0; n];
        for i in 0..n {
            let node = &self.nodes[i];
            let pass_copy = miss_copy[i] + node.volume;
            let pass_split = miss_split[i] + node.volume;
            let kids: Vec<usize> = node.children.iter().flatten().copied().collect();
            let kid_total: f64 = kids.iter().map(|&c| recon[c]).sum();
            for c in kids {
                miss_copy[c] = pass_copy;
                miss_split[c] = if kid_total > 0.0 { pass_split * recon[c] / kid_total } else { 0.0 };
            }
        }
        FinalTrie { trie: self, recon, miss_copy, miss_split }
    }
}

/// A trie after reconstruction; answers per-prefix volume estimates.
#[derive(Debug, Clone)]
pub struct FinalTrie<'a> {
    trie: &'a Trie,
    recon: Vec<f64>,
    miss_copy: Vec<f64>,
    miss_split: Vec<f64>,
}

impl FinalTrie<'_> {
    pub fn trie(&self) -> &Trie {
        self.trie
    }

    /// Traffic counted after the prefix's node was created (0 if absent).
    pub fn reconstructed(&self, p: &Prefix) -> f64 {
        let i = self.trie.longest_match(p);
        if self.trie.nodes[i].prefix == *p {
            self.recon[i]
        } else {
            0.0
        }
    }

    /// Estimated traffic that arrived before the prefix's node existed.
    pub fn missed(&self, p: &Prefix, rule: MissRule) -> f64 {
        let i = self.trie.longest_match(p);
        let node = &self.trie.nodes[i];
        let exact = node.prefix == *p;
        match rule {
            MissRule::NoCopy => 0.0,
            MissRule::CopyAll if exact => self.miss_copy[i],
            // all of the deepest covering node's own volume may belong to p
            MissRule::CopyAll => self.miss_copy[i] + node.volume,
            MissRule::Splitting if exact => self.miss_split[i],
            MissRule::Splitting => 0.0,
        }
    }

    pub fn estimate(&self, p: &Prefix, rule: MissRule) -> f64 {
        self.reconstructed(p) + self.missed(p, rule)
    }

    /// Estimates for every prefix that has a node.
    pub fn estimates(&self, rule: MissRule) -> BTreeMap<Prefix, f64> {
        self.trie.nodes.iter().map(|n| (n.prefix, self.estimate(&n.prefix, rule))).collect()
    }
}

/// Prefixes whose estimate reaches `φS`, largest first.
pub fn detect_hhh<K: Clone + Ord>(estimates: &BTreeMap<K, f64>, phi: f64, total: f64) -> Result<Vec<(K, f64)>> {
    if !(total > 0.0) {
        return Err(Error::degenerate("total traffic must be positive"));
    }
    let cut = phi * total;
    let mut out: Vec<(K, f64)> = estimates.iter().filter(|(_, &v)| v >= cut).map(|(k, v)| (k.clone(), *v)).collect();
    out.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    Ok(out)
}

/// A flow larger than `ts` is fed as equal pieces no larger than `ts`, as
/// if its packets arrived in batches.
fn pieces(value: f64, ts: f64) -> (usize, f64) {
    let n = (value / ts).ceil().max(1.0) as usize;
    (n, value / n as f64)
}

/// Builds a byte-weighted trie over the keys chosen by `key`.
pub fn hhh1d(records: &[FlowRecord], cfg: &HhhConfig, key: impl Fn(&FlowRecord) -> u64) -> Result<Trie> {
    let total: f64 = records.iter().map(|r| r.bytes as f64).sum();
    let ts = cfg.threshold(total)?;
    let mut trie = Trie::new(cfg.width, ts)?;
    for r in records {
        let (n, v) = pieces(r.bytes as f64, ts);
        for _ in 0..n {
            trie.update(key(r), v)?;
        }
    }
    Ok(trie)
}

/// Two tries plus a `(W+1)×(W+1)` array of hash tables keyed by the
/// longest-matching prefix pair.
#[derive(Debug, Clone)]
pub struct Grid2D {
    pub src: Trie,
    pub dst: Trie,
    tables: HashMap<(u32, u32), HashMap<(u64, u64), f64>>,
}

impl Grid2D {
    pub fn new(width: u32, split_threshold: f64) -> Result<Self> {
        Ok(Self { src: Trie::new(width, split_threshold)?, dst: Trie::new(width, split_threshold)?, tables: HashMap::new() })
    }

    pub fn update(&mut self, src: u64, dst: u64, value: f64) -> Result<()> {
        let p1 = self.src.update_len(src, value)?;
        let p2 = self.dst.update_len(dst, value)?;
        let t = self.tables.entry((p1.len, p2.len)).or_default();
        *t.entry((p1.bits, p2.bits)).or_insert(0.0) += value;
        Ok(())
    }

    /// Raw table entries `((p1, p2), volume)`.
    pub fn entries(&self) -> Vec<((Prefix, Prefix), f64)> {
        let w = self.src.width();
        let mut v: Vec<((Prefix, Prefix), f64)> = self
            .tables
            .iter()
            .flat_map(|(&(l1, l2), t)| {
                t.iter().map(move |(&(b1, b2), &vol)| {
                    ((Prefix { len: l1, bits: b1, width: w }, Prefix { len: l2, bits: b2, width: w }), vol)
                })
            })
            .collect();
        v.sort_by_key(|a| a.0);
        v
    }

    /// Two-pass ancestor propagation (first along the source dimension by
    /// decreasing length, then along the destination dimension).
    pub fn finalize(&self, combine: PairMiss) -> Final2D<'_> {
        let mut acc: BTreeMap<(Prefix, Prefix), f64> = BTreeMap::new();
        for (k, v) in self.entries() {
            *acc.entry(k).or_insert(0.0) += v;
        }
        let w = self.src.width();
        for l1 in (1..=w).rev() {
            let level: Vec<((Prefix, Prefix), f64)> = acc.iter().filter(|(k, _)| k.0.len == l1).map(|(k, v)| (*k, *v)).collect();
            for ((p1, p2), v) in level {
                *acc.entry((p1.parent().expect("len >= 1"), p2)).or_insert(0.0) += v;
            }
        }
        for l2 in (1..=w).rev() {
            let level: Vec<((Prefix, Prefix), f64)> = acc.iter().filter(|(k, _)| k.1.len == l2).map(|(k, v)| (*k, *v)).collect();
            for ((p1, p2), v) in level {
                *acc.entry((p1, p2.parent().expect("len >= 1"))).or_insert(0.0) += v;
            }
        }
        Final2D { src: self.src.finalize(), dst: self.dst.finalize(), recon: acc, combine }
    }
}

#[derive(Debug, Clone)]
pub struct Final2D<'a> {
    pub src: FinalTrie<'a>,
    pub dst: FinalTrie<'a>,
    recon: BTreeMap<(Prefix, Prefix), f64>,
    combine: PairMiss,
}

impl Final2D<'_> {
    pub fn reconstructed(&self, p1: &Prefix, p2: &Prefix) -> f64 {
        self.recon.get(&(*p1, *p2)).copied().unwrap_or(0.0)
    }

    pub fn estimate(&self, p1: &Prefix, p2: &Prefix, rule: MissRule) -> f64 {
        let (a, b) = (self.src.missed(p1, rule), self.dst.missed(p2, rule));
        let miss = match self.combine {
            PairMiss::Max => a.max(b),
            PairMiss::Sum => a + b,
        };
        self.reconstructed(p1, p2) + miss
    }

    /// Estimates for every pair present after reconstruction.
    pub fn estimates(&self, rule: MissRule) -> BTreeMap<(Prefix, Prefix), f64> {
        self.recon.keys().map(|k| (*k, self.estimate(&k.0, &k.1, rule))).collect()
    }
}

/// Source/destination address pairs weighted by bytes.
pub fn hhh2d(records: &[FlowRecord], cfg: &HhhConfig) -> Result<Grid2D> {
    let total: f64 = records.iter().map(|r| r.bytes as f64).sum();
    let ts = cfg.threshold(total)?;
    let mut g = Grid2D::new(cfg.width, ts)?;
    let shift = 32u32.saturating_sub(cfg.width);
    for r in records {
        let (n, v) = pieces(r.bytes as f64, ts);
        for _ in 0..n {
            g.update(u64::from(r.sip >> shift), u64::from(r.dip >> shift), v)?;
        }
    }
    Ok(g)
}
