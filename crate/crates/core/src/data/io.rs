//! Text formats: flow CSV, link CSV, routing matrix files and JSON-lines alarms.

use std::io::{BufRead, Write};
use std::net::Ipv4Addr;

use nalgebra::DMatrix;

use super::{Alarm, FlowRecord};
use crate::error::{Error, Result};

pub const FLOW_HEADER: &str = "t,sip,dip,sp,dp,proto,packets,bytes";
pub const LINK_HEADER: &str = "t,link_id,bytes";

/// One link-load measurement.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkRecord {
    pub t: f64,
    pub link_id: String,
    pub bytes: f64,
}

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse { line, msg: msg.into() }
}

fn check_header(first: Option<(usize, &str)>, expected: &str) -> Result<()> {
    match first {
        Some((_, h)) if h.trim().replace(' ', "") == expected => Ok(()),
        Some((_, h)) => Err(parse_err(1, format!("expected header `{expected}`, found `{}`", h.trim()))),
        None => Err(parse_err(1, format!("missing header `{expected}`"))),
    }
}

fn field<T: std::str::FromStr>(line: usize, name: &str, s: &str) -> Result<T> {
    s.trim()
        .parse::<T>()
        .map_err(|_| parse_err(line, format!("invalid {name} `{}`", s.trim())))
}

fn ip(line: usize, name: &str, s: &str) -> Result<u32> {
    s.trim()
        .parse::<Ipv4Addr>()
        .map(u32::from)
        .map_err(|_| parse_err(line, format!("invalid {name} address `{}`", s.trim())))
}

/// Parses flow CSV text. Blank lines are skipped; line numbers in errors are
/// 1-based and include the header.
pub fn parse_flow_records(text: &str) -> Result<Vec<FlowRecord>> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    check_header(lines.next(), FLOW_HEADER)?;
    let mut out = Vec::new();
    for (no, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 8 {
            return Err(parse_err(no, format!("expected 8 fields, found {}", f.len())));
        }
        let rec = FlowRecord {
            t: field(no, "t", f[0])?,
            sip: ip(no, "sip", f[1])?,
            dip: ip(no, "dip", f[2])?,
            sp: field(no, "sp", f[3])?,
            dp: field(no, "dp", f[4])?,
            proto: field(no, "proto", f[5])?,
            packets: field(no, "packets", f[6])?,
            bytes: field(no, "bytes", f[7])?,
        };
        rec.validate().map_err(|e| parse_err(no, e.to_string()))?;
        out.push(rec);
    }
    Ok(out)
}

pub fn read_flow_records(r: impl BufRead) -> Result<Vec<FlowRecord>> {
    parse_flow_records(&read_all(r)?)
}

pub fn write_flow_records(mut w: impl Write, records: &[FlowRecord]) -> Result<()> {
    writeln!(w, "{FLOW_HEADER}")?;
    for r in records {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            fmt_time(r.t),
            Ipv4Addr::from(r.sip),
            Ipv4Addr::from(r.dip),
            r.sp,
            r.dp,
            r.proto,
            r.packets,
            r.bytes
        )?;
    }
    Ok(())
}

fn fmt_time(t: f64) -> String {
    if t.fract() == 0.0 && t.abs() < 1e15 {
        format!("{}", t as i64)
    } else {
        format!("{t:.6}")
    }
}

pub fn parse_link_records(text: &str) -> Result<Vec<LinkRecord>> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    check_header(lines.next(), LINK_HEADER)?;
    let mut out = Vec::new();
    for (no, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 3 {
            return Err(parse_err(no, format!("expected 3 fields, found {}", f.len())));
        }
        let t: f64 = field(no, "t", f[0])?;
        let bytes: f64 = field(no, "bytes", f[2])?;
        if !t.is_finite() || !bytes.is_finite() {
            return Err(parse_err(no, "non-finite value"));
        }
        out.push(LinkRecord { t, link_id: f[1].trim().to_string(), bytes });
    }
    Ok(out)
}

pub fn write_link_records(mut w: impl Write, records: &[LinkRecord]) -> Result<()> {
    writeln!(w, "{LINK_HEADER}")?;
    for r in records {
        writeln!(w, "{},{},{}", fmt_time(r.t), r.link_id, r.bytes)?;
    }
    Ok(())
}

/// Routing matrix: first line `m n`, then `m` rows of `n` reals.
pub fn parse_routing_matrix(text: &str) -> Result<DMatrix<f64>> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l))
        .filter(|(_, l)| !l.trim().is_empty());
    let (no, dims) = lines.next().ok_or_else(|| parse_err(1, "empty routing file"))?;
    let d: Vec<&str> = dims.split_whitespace().collect();
    if d.len() != 2 {
        return Err(parse_err(no, "expected `m n` dimension line"));
    }
    let m: usize = field(no, "row count", d[0])?;
    let n: usize = field(no, "column count", d[1])?;
    let mut vals = Vec::with_capacity(m * n);
    let mut rows = 0;
    for (no, line) in lines {
        let row: Vec<f64> = line
            .split_whitespace()
            .map(|s| field::<f64>(no, "entry", s))
            .collect::<Result<_>>()?;
        if row.len() != n {
            return Err(parse_err(no, format!("expected {n} entries, found {}", row.len())));
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(parse_err(no, "non-finite entry"));
        }
        vals.extend(row);
        rows += 1;
    }
    if rows != m {
        return Err(parse_err(no, format!("expected {m} rows, found {rows}")));
    }
    Ok(DMatrix::from_row_slice(m, n, &vals))
}

pub fn write_routing_matrix(mut w: impl Write, a: &DMatrix<f64>) -> Result<()> {
    writeln!(w, "{} {}", a.nrows(), a.ncols())?;
    for i in 0..a.nrows() {
        let row: Vec<String> = (0..a.ncols()).map(|j| format!("{}", a[(i, j)])).collect();
        writeln!(w, "{}", row.join(" "))?;
    }
    Ok(())
}

/// One JSON object per line.
pub fn write_alarms(mut w: impl Write, alarms: &[Alarm]) -> Result<()> {
    for a in alarms {
        serde_json::to_writer(&mut w, a).map_err(std::io::Error::other)?;
        writeln!(w)?;
    }
    Ok(())
}

pub fn parse_alarms(text: &str) -> Result<Vec<Alarm>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| parse_err(i + 1, e.to_string())))
        .collect()
}

fn read_all(mut r: impl BufRead) -> Result<String> {
    let mut s = String::new();
    r.read_to_string(&mut s)?;
    Ok(s)
}
