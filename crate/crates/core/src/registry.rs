//! RIR delegated-extended statistics.
//!
//! Produces date-correct country ASN sets and the allocated IPv4 address
//! space of a country, decomposed into a minimal set of aligned CIDRs.

use std::collections::BTreeSet;
use std::io::BufRead;
use std::net::Ipv4Addr;

use chrono::NaiveDate;
use ipnet::Ipv4Net;
use serde::{Deserialize, Serialize};

/// Statuses counted as allocated unless configured otherwise.
pub const DEFAULT_STATUSES: [&str; 2] = ["allocated", "assigned"];

pub fn default_statuses() -> BTreeSet<String> {
    DEFAULT_STATUSES.iter().map(|s| s.to_string()).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResourceKind {
    Asn,
    Ipv4,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct AllocationRecord {
    pub registry: String,
    pub country: String,
    pub kind: ResourceKind,
    /// First ASN, or the first IPv4 address as an integer.
    pub start: u32,
    pub count: u32,
    pub status: String,
    pub snapshot_date: NaiveDate,
}

impl AllocationRecord {
    pub fn start_addr(&self) -> Ipv4Addr {
        Ipv4Addr::from(self.start)
    }

    /// Last resource in the record, or `None` when `start + count - 1` overflows.
    pub fn last(&self) -> Option<u32> {
        self.start.checked_add(self.count.checked_sub(1)?)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reject {
    /// 1-based line number, or 0 for rejects raised after parsing.
    pub line: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DelegatedFile {
    pub records: Vec<AllocationRecord>,
    pub rejects: Vec<Reject>,
    pub skipped_ipv6: usize,
}

/// A CIDR from the decomposition of one allocation record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct AllocatedPrefix {
    pub cidr: Ipv4Net,
    /// Interval of the record this CIDR was cut from.
    pub source_start: Ipv4Addr,
    pub source_count: u32,
}

impl AllocatedPrefix {
    /// A prefix not tied to any registry record (its own interval).
    pub fn bare(cidr: Ipv4Net) -> Self {
        let size = 1u64 << (32 - cidr.prefix_len());
        AllocatedPrefix {
            cidr,
            source_start: cidr.network(),
            source_count: size.min(u32::MAX as u64) as u32,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrefixSet {
    pub prefixes: BTreeSet<AllocatedPrefix>,
    /// Number of delegated records that contributed.
    pub record_count: usize,
    pub rejects: Vec<Reject>,
}

impl PrefixSet {
    pub fn cidrs(&self) -> BTreeSet<Ipv4Net> {
        self.prefixes.iter().map(|p| p.cidr).collect()
    }
}

/// Parse pipe-separated delegated-extended text.
///
/// Version, summary and comment lines are ignored, IPv6 records are counted
/// and skipped, and any malformed record lands in `rejects` without stopping
/// the parse. No status filtering happens here.
pub fn parse_delegated<R: BufRead>(stream: R, snapshot_date: NaiveDate) -> std::io::Result<DelegatedFile> {
    let mut out = DelegatedFile::default();
    for (idx, line) in stream.lines().enumerate() {
        let line = line?;
        let lineno = idx + 1;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('|').collect();
        // version line: 2|ripencc|serial|records|start|end|utcoffset
        if fields.first().is_some_and(|f| f.chars().all(|c| c.is_ascii_digit() || c == '.')) {
            continue;
        }
        // summary line: registry|*|type|*|count|summary
        if fields.last() == Some(&"summary") {
            continue;
        }
        match parse_record(&fields, snapshot_date) {
            Ok(Some(rec)) => out.records.push(rec),
            Ok(None) => out.skipped_ipv6 += 1,
            Err(reason) => out.rejects.push(Reject { line: lineno, reason }),
        }
    }
    Ok(out)
}

fn parse_record(fields: &[&str], snapshot_date: NaiveDate) -> Result<Option<AllocationRecord>, String> {
    if fields.len() < 7 {
        return Err(format!("expected at least 7 fields, found {}", fields.len()));
    }
    let kind = match fields[2] {
        "asn" => ResourceKind::Asn,
        "ipv4" => ResourceKind::Ipv4,
        "ipv6" => return Ok(None),
        other => return Err(format!("unknown resource type {other:?}")),
    };
    let start = match kind {
        ResourceKind::Asn => fields[3]
            .parse::<u32>()
            .map_err(|_| format!("invalid ASN {:?}", fields[3]))?,
        ResourceKind::Ipv4 => fields[3]
            .parse::<Ipv4Addr>()
            .map_err(|_| format!("invalid IPv4 address {:?}", fields[3]))?
            .into(),
    };
    let count = fields[4]
        .parse::<u32>()
        .map_err(|_| format!("invalid count {:?}", fields[4]))?;
    if count == 0 {
        return Err("count must be at least 1".into());
    }
    let rec = AllocationRecord {
        registry: fields[0].to_string(),
        country: fields[1].to_ascii_uppercase(),
        kind,
        start,
        count,
        status: fields[6].to_ascii_lowercase(),
        snapshot_date,
    };
    if rec.last().is_none() {
        return Err(format!("{} + {} overflows the number space", fields[3], count));
    }
    Ok(Some(rec))
}

fn matches<'a>(
    records: impl IntoIterator<Item = &'a AllocationRecord>,
    kind: ResourceKind,
    country: &str,
    statuses: &BTreeSet<String>,
) -> Vec<&'a AllocationRecord> {
    records
        .into_iter()
        .filter(|r| r.kind == kind && r.country.eq_ignore_ascii_case(country) && statuses.contains(&r.status))
        .collect()
}

/// ASNs delegated to `country`, each record expanded over its count.
pub fn country_asns<'a>(
    records: impl IntoIterator<Item = &'a AllocationRecord>,
    country: &str,
    statuses: &BTreeSet<String>,
) -> BTreeSet<u32> {
    matches(records, ResourceKind::Asn, country, statuses)
        .into_iter()
        .flat_map(|r| {
            let end = r.start as u64 + r.count as u64;
            (r.start as u64..end.min(u32::MAX as u64 + 1)).map(|a| a as u32)
        })
        .collect()
}

/// Allocated IPv4 space of `country` as a set of decomposed CIDRs.
pub fn country_prefixes<'a>(
    records: impl IntoIterator<Item = &'a AllocationRecord>,
    country: &str,
    statuses: &BTreeSet<String>,
) -> PrefixSet {
    let mut out = PrefixSet::default();
    for r in matches(records, ResourceKind::Ipv4, country, statuses) {
        match decompose(r.start, r.count) {
            Some(cidrs) => {
                out.record_count += 1;
                out.prefixes.extend(cidrs.into_iter().map(|cidr| AllocatedPrefix {
                    cidr,
                    source_start: r.start_addr(),
                    source_count: r.count,
                }));
            }
            None => out.rejects.push(Reject {
                line: 0,
                reason: format!("{} + {} overflows past 255.255.255.255", r.start_addr(), r.count),
            }),
        }
    }
    out
}

/// Greedy largest-aligned-block decomposition of `[start, start + count)`.
///
/// Returns `None` if the interval runs past the end of the IPv4 space or
/// `count` is zero.
pub fn decompose(start: u32, count: u32) -> Option<Vec<Ipv4Net>> {
    if count == 0 {
        return None;
    }
    let mut cur = start as u64;
    let end = cur + count as u64;
    if end > 1 << 32 {
        return None;
    }
    let mut out = Vec::new();
    while cur < end {
        let align = if cur == 0 { 1u64 << 32 } else { 1u64 << cur.trailing_zeros() };
        let remaining = end - cur;
        let fit = 1u64 << (63 - remaining.leading_zeros());
        let size = align.min(fit);
        let len = 32 - size.trailing_zeros() as u8;
        out.push(Ipv4Net::new(Ipv4Addr::from(cur as u32), len).expect("len <= 32"));
        cur += size;
    }
    Some(out)
}
