//! Shared data model: flow records, traffic matrices, feature histograms and
//! the uniform alarm record.

mod binning;
pub mod io;

pub use binning::{
    bin_traffic, feature_histogram, links_to_matrix, Binning, SeriesKey, Volume,
    DEFAULT_BIN_WIDTH,
};

use std::collections::BTreeMap;
use std::fmt;
use std::net::Ipv4Addr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One flow observation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowRecord {
    /// Seconds since epoch.
    pub t: f64,
    pub sip: u32,
    pub dip: u32,
    pub sp: u16,
    pub dp: u16,
    pub proto: u8,
    pub packets: u64,
    pub bytes: u64,
}

impl FlowRecord {
    /// Checks the record invariants (finite time, at least one packet, at
    /// least one byte per packet).
    pub fn validate(&self) -> Result<()> {
        if !self.t.is_finite() {
            return Err(Error::contract("flow timestamp must be finite"));
        }
        if self.packets == 0 {
            return Err(Error::contract("flow must carry at least one packet"));
        }
        if self.bytes < self.packets {
            return Err(Error::contract(format!(
                "bytes ({}) smaller than packets ({})",
                self.bytes, self.packets
            )));
        }
        Ok(())
    }

    pub fn feature(&self, f: Feature) -> u64 {
        match f {
            Feature::Sip => self.sip as u64,
            Feature::Dip => self.dip as u64,
            Feature::Sp => self.sp as u64,
            Feature::Dp => self.dp as u64,
            Feature::Proto => self.proto as u64,
            Feature::Packets => self.packets,
            Feature::Bytes => self.bytes,
        }
    }

    /// The 5-tuple packed for use as a map key.
    pub fn five_tuple(&self) -> (u32, u32, u16, u16, u8) {
        (self.sip, self.dip, self.sp, self.dp, self.proto)
    }
}

/// The seven flow features used by histogram and item-set detectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Feature {
    Sip,
    Dip,
    Sp,
    Dp,
    Proto,
    Packets,
    Bytes,
}

impl Feature {
    pub const ALL: [Feature; 7] = [
        Feature::Sip,
        Feature::Dip,
        Feature::Sp,
        Feature::Dp,
        Feature::Proto,
        Feature::Packets,
        Feature::Bytes,
    ];

    /// SIP, DIP, SP, DP: the entropy features.
    pub const ADDRESS_PORT: [Feature; 4] = [Feature::Sip, Feature::Dip, Feature::Sp, Feature::Dp];

    pub fn name(self) -> &'static str {
        match self {
            Feature::Sip => "SIP",
            Feature::Dip => "DIP",
            Feature::Sp => "SP",
            Feature::Dp => "DP",
            Feature::Proto => "proto",
            Feature::Packets => "packets",
            Feature::Bytes => "bytes",
        }
    }

    /// Renders a feature value; addresses come out dotted-quad.
    pub fn format_value(self, v: u64) -> String {
        match self {
            Feature::Sip | Feature::Dip => Ipv4Addr::from(v as u32).to_string(),
            _ => v.to_string(),
        }
    }

    pub fn parse(s: &str) -> Option<Feature> {
        match s.to_ascii_lowercase().as_str() {
            "sip" => Some(Feature::Sip),
            "dip" => Some(Feature::Dip),
            "sp" => Some(Feature::Sp),
            "dp" => Some(Feature::Dp),
            "proto" | "protocol" => Some(Feature::Proto),
            "packets" => Some(Feature::Packets),
            "bytes" => Some(Feature::Bytes),
            _ => None,
        }
    }
}

impl fmt::Display for Feature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Time × series matrix of volumes (or entropies). Row `i` covers
/// `[t0 + i·bin_width, t0 + (i+1)·bin_width)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrafficMatrix {
    values: DMatrix<f64>,
    bin_width: f64,
    series_ids: Vec<String>,
    t0: f64,
}

impl TrafficMatrix {
    pub fn new(values: DMatrix<f64>, bin_width: f64, series_ids: Vec<String>, t0: f64) -> Result<Self> {
        if values.nrows() == 0 || values.ncols() == 0 {
            return Err(Error::contract("traffic matrix needs at least one row and one column"));
        }
        if series_ids.len() != values.ncols() {
            return Err(Error::contract(format!(
                "{} series ids for {} columns",
                series_ids.len(),
                values.ncols()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::contract("traffic matrix values must be finite"));
        }
        if !(bin_width > 0.0) {
            return Err(Error::contract("bin width must be positive"));
        }
        Ok(Self { values, bin_width, series_ids, t0 })
    }

    /// Wraps a raw matrix with unit bins and numeric series labels.
    pub fn from_matrix(values: DMatrix<f64>) -> Result<Self> {
        let ids = (0..values.ncols()).map(|j| j.to_string()).collect();
        Self::new(values, 1.0, ids, 0.0)
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn into_values(self) -> DMatrix<f64> {
        self.values
    }

    pub fn bin_width(&self) -> f64 {
        self.bin_width
    }

    pub fn series_ids(&self) -> &[String] {
        &self.series_ids
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn n_bins(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_series(&self) -> usize {
        self.values.ncols()
    }
}

/// Empirical histogram of one feature: value → count.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Histogram {
    pub feature: Feature,
    pub counts: BTreeMap<u64, u64>,
}

impl Histogram {
    pub fn new(feature: Feature) -> Self {
        Self { feature, counts: BTreeMap::new() }
    }

    pub fn add(&mut self, value: u64, count: u64) {
        if count > 0 {
            *self.counts.entry(value).or_insert(0) += count;
        }
    }

    /// Packet-weighted histogram of `feature` over `records`.
    pub fn from_records<'a>(feature: Feature, records: impl IntoIterator<Item = &'a FlowRecord>) -> Self {
        let mut h = Self::new(feature);
        for r in records {
            h.add(r.feature(feature), r.packets);
        }
        h
    }

    /// Sample size S.
    pub fn total(&self) -> u64 {
        self.counts.values().sum()
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }
}

/// Uniform detector output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Alarm {
    pub t_index: usize,
    pub detector: String,
    pub score: f64,
    pub threshold: f64,
    pub keys: Vec<String>,
}

impl Alarm {
    pub fn new(t_index: usize, detector: impl Into<String>, score: f64, threshold: f64) -> Self {
        Self { t_index, detector: detector.into(), score, threshold, keys: Vec::new() }
    }

    pub fn with_keys(mut self, keys: Vec<String>) -> Self {
        self.keys = keys;
        self
    }
}

pub(crate) fn fmt_ip(v: u32) -> String {
    Ipv4Addr::from(v).to_string()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(t: f64, packets: u64, bytes: u64) -> FlowRecord {
        FlowRecord { t, sip: 1, dip: 2, sp: 3, dp: 4, proto: 6, packets, bytes }
    }

    #[test]
    fn record_invariants() {
        assert!(rec(0.0, 1, 1).validate().is_ok());
        assert!(rec(0.0, 0, 1).validate().is_err());
        assert!(rec(0.0, 5, 4).validate().is_err());
        assert!(rec(f64::NAN, 1, 40).validate().is_err());
    }

    #[test]
    fn matrix_rejects_non_finite() {
        let m = DMatrix::from_row_slice(1, 2, &[1.0, f64::INFINITY]);
        assert!(TrafficMatrix::from_matrix(m).is_err());
        assert!(TrafficMatrix::from_matrix(DMatrix::zeros(0, 2)).is_err());
    }

    #[test]
    fn feature_names_round_trip() {
        for f in Feature::ALL {
            assert_eq!(Feature::parse(f.name()), Some(f));
        }
        assert_eq!(Feature::Dip.format_value(0x0a000001), "10.0.0.1");
    }
}
