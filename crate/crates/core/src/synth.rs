//! Seeded synthetic traffic: flow records with a diurnal background and
//! optional injected anomalies, per-packet streams, and OD-flow / link
//! matrices over a random routing.

use std::net::Ipv4Addr;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, LogNormal, Normal, Poisson};

use crate::data::FlowRecord;
use crate::error::{Error, Result};

/// Popular service ports with relative weights.
const SERVICES: [(u16, f64); 8] = [(80, 30.0), (443, 35.0), (53, 12.0), (25, 6.0), (22, 4.0), (110, 3.0), (993, 5.0), (123, 5.0)];

#[derive(Debug, Clone, PartialEq)]
pub struct TrafficConfig {
    pub n_bins: usize,
    pub bin_width: f64,
    /// Mean number of flows per bin at the diurnal midpoint.
    pub flows_per_bin: f64,
    pub n_sources: usize,
    pub n_dests: usize,
    /// Relative amplitude of the daily cycle, in `[0, 1)`.
    pub diurnal: f64,
    pub period_bins: f64,
    pub seed: u64,
}

impl Default for TrafficConfig {
    fn default() -> Self {
        Self {
            n_bins: 96,
            bin_width: 300.0,
            flows_per_bin: 400.0,
            n_sources: 200,
            n_dests: 60,
            diurnal: 0.3,
            period_bins: 288.0,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Anomaly {
    /// One very large point-to-point transfer.
    Alpha { bin: usize, sip: u32, dip: u32, packets: u64 },
    /// Many sources flooding one destination port.
    Dos { bin: usize, dip: u32, dp: u16, sources: usize },
    /// One source probing many ports on one destination.
    PortScan { bin: usize, sip: u32, dip: u32, ports: usize },
    /// One source probing one port on many destinations.
    NetScan { bin: usize, sip: u32, targets: usize, dp: u16 },
}

impl Anomaly {
    pub fn bin(&self) -> usize {
        match self {
            Self::Alpha { bin, .. } | Self::Dos { bin, .. } | Self::PortScan { bin, .. } | Self::NetScan { bin, .. } => *bin,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Alpha { .. } => "alpha",
            Self::Dos { .. } => "dos",
            Self::PortScan { .. } => "portscan",
            Self::NetScan { .. } => "netscan",
        }
    }
}

/// Source hosts live in 10.0.0.0/8, spread across /21 prefixes.
pub fn source_ip(i: usize) -> u32 {
    u32::from(Ipv4Addr::new(10, 0, 0, 0)) + ((i as u32 % 64) << 11) + (i as u32 / 64) + 1
}

/// Destination hosts live in 172.16.0.0/12, spread across /21 prefixes.
pub fn dest_ip(i: usize) -> u32 {
    u32::from(Ipv4Addr::new(172, 16, 0, 0)) + ((i as u32 % 128) << 11) + (i as u32 / 128) + 1
}

fn pick_weighted(rng: &mut impl Rng, weights: &[f64], total: f64) -> usize {
    let mut u = rng.random::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        if u < *w {
            return i;
        }
        u -= w;
    }
    weights.len() - 1
}

/// Background flows plus the requested anomalies, sorted by time.
pub fn flows(cfg: &TrafficConfig, anomalies: &[Anomaly]) -> Result<Vec<FlowRecord>> {
    if cfg.n_bins == 0 || !(cfg.bin_width > 0.0) || cfg.n_sources == 0 || cfg.n_dests == 0 {
        return Err(Error::config("synthetic traffic needs bins, a positive bin width and hosts"));
    }
    if !(0.0..1.0).contains(&cfg.diurnal) || !(cfg.flows_per_bin > 0.0) {
        return Err(Error::config("diurnal amplitude must lie in [0,1) and the flow rate be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    // Zipf-like host popularity
    let src_w: Vec<f64> = (1..=cfg.n_sources).map(|r| 1.0 / (r as f64).powf(0.8)).collect();
    let dst_w: Vec<f64> = (1..=cfg.n_dests).map(|r| 1.0 / (r as f64).powf(0.9)).collect();
    let svc_w: Vec<f64> = SERVICES.iter().map(|s| s.1).collect();
    let (src_t, dst_t, svc_t): (f64, f64, f64) = (src_w.iter().sum(), dst_w.iter().sum(), svc_w.iter().sum());
    let pkt_dist = LogNormal::new(1.5, 0.6).map_err(|e| Error::Domain(e.to_string()))?;
    let mut out = Vec::new();
    for b in 0..cfg.n_bins {
        let phase = 2.0 * std::f64::consts::PI * b as f64 / cfg.period_bins;
        let rate = cfg.flows_per_bin * (1.0 + cfg.diurnal * phase.sin());
        let count = Poisson::new(rate).map_err(|e| Error::Domain(e.to_string()))?.sample(&mut rng) as usize;
        for _ in 0..count {
            let sip = source_ip(pick_weighted(&mut rng, &src_w, src_t));
            let dip = dest_ip(pick_weighted(&mut rng, &dst_w, dst_t));
            let (dp, _) = SERVICES[pick_weighted(&mut rng, &svc_w, svc_t)];
            let proto = if dp == 53 || dp == 123 { 17 } else { 6 };
            let draw: f64 = pkt_dist.sample(&mut rng);
            let packets = (draw.ceil() as u64).max(1);
            let size = rng.random_range(40..1500u64);
            out.push(FlowRecord {
                t: (b as f64 + rng.random::<f64>()) * cfg.bin_width,
                sip,
                dip,
                sp: rng.random_range(1024..=65535),
                dp,
                proto,
                packets,
                bytes: packets * size,
            });
        }
    }
    for a in anomalies {
        if a.bin() >= cfg.n_bins {
            return Err(Error::config(format!("anomaly bin {} outside 0..{}", a.bin(), cfg.n_bins)));
        }
        inject(&mut out, a, cfg.bin_width, &mut rng);
    }
    out.sort_by(|a, b| a.t.total_cmp(&b.t));
    Ok(out)
}

fn inject(out: &mut Vec<FlowRecord>, a: &Anomaly, width: f64, rng: &mut impl Rng) {
    let t0 = a.bin() as f64 * width;
    let at = |rng: &mut dyn rand::RngCore| t0 + rng.random::<f64>() * width;
    match *a {
        Anomaly::Alpha { sip, dip, packets, .. } => out.push(FlowRecord {
            t: at(rng),
            sip,
            dip,
            sp: rng.random_range(1024..=65535),
            dp: 5001,
            proto: 6,
            packets,
            bytes: packets * 1500,
        }),
        Anomaly::Dos { dip, dp, sources, .. } => {
            for _ in 0..sources {
                let t = at(rng);
                out.push(FlowRecord { t, sip: rng.random(), dip, sp: rng.random_range(1024..=65535), dp, proto: 6, packets: 2, bytes: 80 });
            }
        }
        Anomaly::PortScan { sip, dip, ports, .. } => {
            for p in 0..ports {
                let t = at(rng);
                out.push(FlowRecord { t, sip, dip, sp: 40000, dp: 1 + p as u16, proto: 6, packets: 1, bytes: 40 });
            }
        }
        Anomaly::NetScan { sip, targets, dp, .. } => {
            for i in 0..targets {
                let t = at(rng);
                let dip = u32::from(Ipv4Addr::new(192, 168, 0, 0)) + i as u32;
                out.push(FlowRecord { t, sip, dip, sp: 40000, dp, proto: 6, packets: 1, bytes: 40 });
            }
        }
    }
}

/// Splits records across `routers` ingress points by source prefix.
pub fn split_by_router(records: &[FlowRecord], routers: usize) -> Vec<Vec<FlowRecord>> {
    let mut out = vec![Vec::new(); routers.max(1)];
    for r in records {
        let idx = ((r.sip >> 11) as usize).wrapping_mul(2654435761) % out.len();
        out[idx].push(*r);
    }
    out
}

/// Single-packet records for a set of `(sip, dip)` keys, each a Poisson
/// process with the given rate (packets per second) over `[0, duration)`.
pub fn poisson_packets(keys: &[(u32, u32)], rate: f64, duration: f64, seed: u64) -> Result<Vec<FlowRecord>> {
    let gap = Exp::new(rate).map_err(|e| Error::Domain(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for &(sip, dip) in keys {
        let mut t = gap.sample(&mut rng);
        while t < duration {
            out.push(packet(t, sip, dip, rng.random_range(1024..=65535), 80));
            t += gap.sample(&mut rng);
        }
    }
    out.sort_by(|a, b| a.t.total_cmp(&b.t));
    Ok(out)
}

/// A low-rate scanner: bursts of `burst` packets spaced `spacing` seconds
/// apart, with burst starts a Poisson process of rate `burst_rate`.
pub fn bursty_scan(sip: u32, dip_base: u32, burst: usize, spacing: f64, burst_rate: f64, duration: f64, seed: u64) -> Result<Vec<FlowRecord>> {
    let gap = Exp::new(burst_rate).map_err(|e| Error::Domain(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    let mut t = gap.sample(&mut rng);
    let mut port = 1u16;
    while t < duration {
        for i in 0..burst {
            let ti = t + i as f64 * spacing;
            if ti < duration {
                out.push(packet(ti, sip, dip_base, 40000, port));
                port = port.wrapping_add(1).max(1);
            }
        }
        t += gap.sample(&mut rng);
    }
    Ok(out)
}

fn packet(t: f64, sip: u32, dip: u32, sp: u16, dp: u16) -> FlowRecord {
    FlowRecord { t, sip, dip, sp, dp, proto: 6, packets: 1, bytes: 60 }
}

/// OD-flow matrix (time × flows) from a gravity model with a daily cycle
/// and multiplicative noise.
pub fn od_traffic(n_bins: usize, n_flows: usize, period_bins: f64, noise: f64, seed: u64) -> Result<DMatrix<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mass = Exp::new(1.0).map_err(|e| Error::Domain(e.to_string()))?;
    let size: Vec<f64> = (0..n_flows).map(|_| 1e6 * (0.2 + mass.sample(&mut rng))).collect();
    let phase: Vec<f64> = (0..n_flows).map(|_| rng.random_range(-0.3..0.3)).collect();
    let eps = Normal::new(0.0, noise).map_err(|e| Error::Domain(e.to_string()))?;
    Ok(DMatrix::from_fn(n_bins, n_flows, |t, j| {
        let w = 2.0 * std::f64::consts::PI * t as f64 / period_bins + phase[j];
        (size[j] * (1.0 + 0.4 * w.sin()) * (1.0 + eps.sample(&mut rng))).max(0.0)
    }))
}

/// Random 0/1 routing matrix (links × flows): every flow crosses between
/// one and `max_hops` distinct links and no two flows share a footprint
/// when that can be avoided.
pub fn random_routing(n_links: usize, n_flows: usize, max_hops: usize, seed: u64) -> Result<DMatrix<f64>> {
    if n_links == 0 || n_flows == 0 || max_hops == 0 {
        return Err(Error::config("routing needs links, flows and at least one hop"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut a = DMatrix::zeros(n_links, n_flows);
    let mut seen = std::collections::HashSet::new();
    for j in 0..n_flows {
        for attempt in 0..50 {
            let hops = rng.random_range(1..=max_hops.min(n_links));
            let mut links: Vec<usize> = rand::seq::index::sample(&mut rng, n_links, hops).into_vec();
            links.sort_unstable();
            if seen.insert(links.clone()) || attempt == 49 {
                for l in links {
                    a[(l, j)] = 1.0;
                }
                break;
            }
        }
    }
    Ok(a)
}
