use std::collections::BTreeMap;

use nalgebra::DMatrix;

use super::io::LinkRecord;
use super::{fmt_ip, Feature, FlowRecord, Histogram, TrafficMatrix};
use crate::error::{Error, Result};

/// Five-minute bins.
pub const DEFAULT_BIN_WIDTH: f64 = 300.0;

/// Which flow counter is aggregated into a traffic matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Volume {
    #[default]
    Bytes,
    Packets,
}

impl Volume {
    pub fn of(self, r: &FlowRecord) -> f64 {
        match self {
            Volume::Bytes => r.bytes as f64,
            Volume::Packets => r.packets as f64,
        }
    }
}

/// Selects the series (matrix column) a record contributes to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeriesKey {
    /// One column per distinct value of a feature.
    Feature(Feature),
    /// One column per (SIP, DIP) pair.
    SrcDst,
    /// One column per 5-tuple.
    FiveTuple,
    /// A single aggregate column.
    Total,
}

impl SeriesKey {
    pub fn label(self, r: &FlowRecord) -> String {
        match self {
            SeriesKey::Feature(f) => f.format_value(r.feature(f)),
            SeriesKey::SrcDst => format!("{}>{}", fmt_ip(r.sip), fmt_ip(r.dip)),
            SeriesKey::FiveTuple => format!(
                "{}:{}>{}:{}/{}",
                fmt_ip(r.sip),
                r.sp,
                fmt_ip(r.dip),
                r.dp,
                r.proto
            ),
            SeriesKey::Total => "total".to_string(),
        }
    }
}

/// Fixed-width time bins anchored at `t0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Binning {
    pub t0: f64,
    pub width: f64,
}

impl Binning {
    pub fn new(t0: f64, width: f64) -> Result<Self> {
        if !(width > 0.0) || !width.is_finite() {
            return Err(Error::contract("bin width must be positive and finite"));
        }
        Ok(Self { t0, width })
    }

    /// Anchors bins on the multiple of `width` at or below the earliest record.
    pub fn covering(records: &[FlowRecord], width: f64) -> Result<Self> {
        let tmin = records
            .iter()
            .map(|r| r.t)
            .fold(f64::INFINITY, f64::min);
        if !tmin.is_finite() {
            return Err(Error::contract("cannot bin an empty record list"));
        }
        Self::new((tmin / width).floor() * width, width)
    }

    pub fn index(&self, t: f64) -> usize {
        let i = ((t - self.t0) / self.width).floor();
        if i <= 0.0 {
            0
        } else {
            i as usize
        }
    }

    pub fn n_bins(&self, records: &[FlowRecord]) -> usize {
        records.iter().map(|r| self.index(r.t) + 1).max().unwrap_or(0)
    }
}

/// Aggregates records into a time × series volume matrix. Columns are ordered
/// by label so the result does not depend on record order.
pub fn bin_traffic(
    records: &[FlowRecord],
    bin_width: f64,
    key: SeriesKey,
    volume: Volume,
) -> Result<TrafficMatrix> {
    let binning = Binning::covering(records, bin_width)?;
    let n_bins = binning.n_bins(records);
    let mut cols: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for r in records {
        let col = cols.entry(key.label(r)).or_insert_with(|| vec![0.0; n_bins]);
        col[binning.index(r.t)] += volume.of(r);
    }
    let ids: Vec<String> = cols.keys().cloned().collect();
    let values = DMatrix::from_fn(n_bins, ids.len(), |i, j| cols[&ids[j]][i]);
    TrafficMatrix::new(values, bin_width, ids, binning.t0)
}

/// Packet-weighted histogram of `feature` over the records that fall in one bin.
pub fn feature_histogram(records: &[FlowRecord], feature: Feature, binning: &Binning, bin_index: usize) -> Histogram {
    Histogram::from_records(feature, records.iter().filter(|r| binning.index(r.t) == bin_index))
}

/// Bins link measurements into a time × link matrix. Link ids that all parse
/// as integers are ordered numerically, otherwise lexically.
pub fn links_to_matrix(records: &[LinkRecord], bin_width: f64) -> Result<TrafficMatrix> {
    let tmin = records.iter().map(|r| r.t).fold(f64::INFINITY, f64::min);
    if !tmin.is_finite() {
        return Err(Error::contract("cannot bin an empty link list"));
    }
    let binning = Binning::new((tmin / bin_width).floor() * bin_width, bin_width)?;
    let n_bins = records.iter().map(|r| binning.index(r.t) + 1).max().unwrap_or(0);
    let mut ids: Vec<String> = records.iter().map(|r| r.link_id.clone()).collect();
    ids.sort();
    ids.dedup();
    if ids.iter().all(|s| s.parse::<i64>().is_ok()) {
        ids.sort_by_key(|s| s.parse::<i64>().unwrap());
    }
    let col_of: BTreeMap<&str, usize> = ids.iter().enumerate().map(|(j, s)| (s.as_str(), j)).collect();
    let mut values = DMatrix::zeros(n_bins, ids.len());
    for r in records {
        values[(binning.index(r.t), col_of[r.link_id.as_str()])] += r.bytes;
    }
    TrafficMatrix::new(values, bin_width, ids, binning.t0)
}
