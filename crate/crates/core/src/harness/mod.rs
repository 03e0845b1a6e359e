//! Deterministic fixtures and reference implementations for tests.
//!
//! Scripted probe transports, ground-truth probe plans, a TABLE_DUMP_V2
//! writer, a brute-force coverage oracle, and seeded generators of small
//! random universes.

pub mod fixtures;

use std::collections::{BTreeMap, BTreeSet};
use std::io::{self, BufRead, Write};
use std::net::Ipv4Addr;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use chrono::{DateTime, TimeZone, Utc};
use ipnet::Ipv4Net;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::prober::{derive_target, OutcomeKind, ProbeError, ProbeResponse, ProbeTarget, Transport};
use crate::registry::{decompose, AllocatedPrefix};
use crate::rib_ingest::{
    AsPath, PathSegment, RouteEntry, SegmentKind, ATTR_AS_PATH, ATTR_FLAG_EXTENDED_LENGTH, MRT_TABLE_DUMP_V2,
    PEER_TYPE_AS4, SUBTYPE_PEER_INDEX_TABLE, SUBTYPE_RIB_IPV4_UNICAST,
};
use crate::verdicts::Verdict;

pub const SCRIPT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("noise rate {0} must lie in [0, 0.5)")]
    Noise(f64),
    #[error("{0} has no canonical outcome triple")]
    NoCanonicalTriple(Verdict),
    #[error("runs must be at least 1")]
    NoRuns,
    #[error("invalid route entry {index}: {reason}")]
    InvalidEntry { index: usize, reason: String },
    #[error("script line {line}: {reason}")]
    Script { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Outcomes for ports 80, 443 and 179 that realize each definite verdict.
pub fn canonical_triple(v: Verdict) -> Option<[OutcomeKind; 3]> {
    use OutcomeKind::*;
    match v {
        Verdict::NullRoute => Some([Timeout, Timeout, Timeout]),
        Verdict::Reachable => Some([SynAck, Timeout, Timeout]),
        Verdict::BgpWithdraw => Some([Timeout, IcmpUnreachable, Timeout]),
        Verdict::FirewallAcl => Some([Timeout, Timeout, Rst]),
        Verdict::Ambiguous => None,
    }
}

/// Port order of [`canonical_triple`].
pub const TRIPLE_PORTS: [u16; 3] = [80, 443, 179];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptEntry {
    pub outcome: OutcomeKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rtt_ms: Option<f64>,
    /// When set, the transport reports a probe error instead of an outcome.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl ScriptEntry {
    pub fn outcome(outcome: OutcomeKind, rtt_ms: Option<f64>) -> Self {
        ScriptEntry {
            outcome,
            rtt_ms,
            error: None,
        }
    }
}

/// Scripted answers keyed by (address, port, attempt). An entry with no
/// attempt answers every attempt that lacks a specific entry; anything
/// unscripted gets the default outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportScript {
    pub version: u32,
    pub default: OutcomeKind,
    pub started_at: DateTime<Utc>,
    pub entries: BTreeMap<(Ipv4Addr, u16, Option<u32>), ScriptEntry>,
}

impl Default for TransportScript {
    fn default() -> Self {
        TransportScript {
            version: SCRIPT_VERSION,
            default: OutcomeKind::Timeout,
            started_at: DateTime::UNIX_EPOCH,
            entries: BTreeMap::new(),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct ScriptHeader {
    version: u32,
    default: OutcomeKind,
    started_at: DateTime<Utc>,
}

#[derive(Serialize, Deserialize)]
struct ScriptLine {
    address: Ipv4Addr,
    port: u16,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    attempt: Option<u32>,
    #[serde(flatten)]
    entry: ScriptEntry,
}

impl TransportScript {
    pub fn set(&mut self, address: Ipv4Addr, port: u16, attempt: Option<u32>, entry: ScriptEntry) {
        self.entries.insert((address, port, attempt), entry);
    }

    pub fn lookup(&self, address: Ipv4Addr, port: u16, attempt: u32) -> ScriptEntry {
        self.entries
            .get(&(address, port, Some(attempt)))
            .or_else(|| self.entries.get(&(address, port, None)))
            .cloned()
            .unwrap_or_else(|| ScriptEntry::outcome(self.default, None))
    }

    /// Header line, then one line per entry in key order.
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> io::Result<()> {
        let header = ScriptHeader {
            version: self.version,
            default: self.default,
            started_at: self.started_at,
        };
        serde_json::to_writer(&mut out, &header)?;
        out.write_all(b"\n")?;
        for (&(address, port, attempt), entry) in &self.entries {
            let line = ScriptLine {
                address,
                port,
                attempt,
                entry: entry.clone(),
            };
            serde_json::to_writer(&mut out, &line)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn read_jsonl<R: BufRead>(input: R) -> Result<Self, HarnessError> {
        let mut lines = input.lines().enumerate().filter(|(_, l)| match l {
            Ok(s) => !s.trim().is_empty(),
            Err(_) => true,
        });
        let (_, first) = lines.next().ok_or(HarnessError::Script {
            line: 1,
            reason: "missing header line".into(),
        })?;
        let header: ScriptHeader = serde_json::from_str(&first?).map_err(|e| HarnessError::Script {
            line: 1,
            reason: format!("bad header: {e}"),
        })?;
        if header.version != SCRIPT_VERSION {
            return Err(HarnessError::Script {
                line: 1,
                reason: format!("unsupported script version {}", header.version),
            });
        }
        let mut script = TransportScript {
            version: header.version,
            default: header.default,
            started_at: header.started_at,
            entries: BTreeMap::new(),
        };
        for (i, line) in lines {
            let line: ScriptLine = serde_json::from_str(&line?).map_err(|e| HarnessError::Script {
                line: i + 1,
                reason: e.to_string(),
            })?;
            script.set(line.address, line.port, line.attempt, line.entry);
        }
        Ok(script)
    }
}

/// One probe send as seen by a [`ScriptedTransport`].
#[derive(Debug, Clone, PartialEq)]
pub struct SendRecord {
    pub at: Instant,
    pub address: Ipv4Addr,
    pub port: u16,
    pub attempt: u32,
}

/// Replays a [`TransportScript`] and logs every send with its time.
#[derive(Debug)]
pub struct ScriptedTransport {
    script: TransportScript,
    setup_error: Option<String>,
    delay: Duration,
    log: Mutex<Vec<SendRecord>>,
}

impl ScriptedTransport {
    pub fn new(script: TransportScript) -> Self {
        ScriptedTransport {
            script,
            setup_error: None,
            delay: Duration::ZERO,
            log: Mutex::new(Vec::new()),
        }
    }

    /// A transport whose setup fails with `reason`.
    pub fn failing(reason: &str) -> Self {
        ScriptedTransport {
            setup_error: Some(reason.to_string()),
            ..Self::new(TransportScript::default())
        }
    }

    /// Hold every probe for `delay` before answering.
    pub fn with_delay(mut self, delay: Duration) -> Self {
        self.delay = delay;
        self
    }

    pub fn script(&self) -> &TransportScript {
        &self.script
    }

    pub fn sends(&self) -> Vec<SendRecord> {
        self.log.lock().unwrap_or_else(|p| p.into_inner()).clone()
    }
}

impl Transport for ScriptedTransport {
    fn prepare(&self) -> Result<(), ProbeError> {
        match &self.setup_error {
            Some(e) => Err(ProbeError::Setup(e.clone())),
            None => Ok(()),
        }
    }

    fn probe(&self, addr: Ipv4Addr, port: u16, attempt: u32, _timeout: Duration) -> Result<ProbeResponse, String> {
        self.log.lock().unwrap_or_else(|p| p.into_inner()).push(SendRecord {
            at: Instant::now(),
            address: addr,
            port,
            attempt,
        });
        if !self.delay.is_zero() {
            std::thread::sleep(self.delay);
        }
        let entry = self.script.lookup(addr, port, attempt);
        match entry.error {
            Some(e) => Err(e),
            None => Ok(ProbeResponse {
                outcome: entry.outcome,
                rtt_ms: entry.rtt_ms,
            }),
        }
    }

    fn now(&self) -> DateTime<Utc> {
        self.script.started_at
    }
}

/// Planted verdict per prefix and the share of runs that get a different
/// verdict's outcomes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthPlan {
    pub verdicts: BTreeMap<Ipv4Net, Verdict>,
    pub noise: f64,
    pub seed: u64,
}

impl GroundTruthPlan {
    pub fn validate(&self) -> Result<(), HarnessError> {
        if !(self.noise.is_finite() && (0.0..0.5).contains(&self.noise)) {
            return Err(HarnessError::Noise(self.noise));
        }
        if let Some(v) = self.verdicts.values().find(|v| canonical_triple(**v).is_none()) {
            return Err(HarnessError::NoCanonicalTriple(*v));
        }
        Ok(())
    }

    /// Probe targets for every planted prefix, in prefix order.
    pub fn targets(&self) -> Vec<ProbeTarget> {
        self.verdicts.keys().map(|p| derive_target(*p)).collect()
    }

    /// Number of runs per prefix that carry noise.
    pub fn noised_runs(&self, runs: u32) -> u32 {
        (self.noise * runs as f64).floor() as u32
    }
}

/// Start time stamped on run `run` of a plan-derived script.
pub fn run_start(run: u32) -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2026, 1, 16, 0, 0, 0).single().expect("valid date")
        + chrono::Duration::hours(12 * run as i64)
}

/// One script per run. Each prefix gets `floor(noise × runs)` noised runs,
/// placed uniformly at random, where a uniformly chosen other verdict's
/// canonical outcomes replace the planted ones.
pub fn script_from_plan(plan: &GroundTruthPlan, runs: u32) -> Result<Vec<TransportScript>, HarnessError> {
    plan.validate()?;
    if runs == 0 {
        return Err(HarnessError::NoRuns);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(plan.seed);
    let mut scripts: Vec<TransportScript> = (0..runs)
        .map(|r| TransportScript {
            started_at: run_start(r),
            ..TransportScript::default()
        })
        .collect();
    let k = plan.noised_runs(runs) as usize;
    let definite = [Verdict::NullRoute, Verdict::Reachable, Verdict::BgpWithdraw, Verdict::FirewallAcl];

    for (prefix, &truth) in &plan.verdicts {
        let addr = derive_target(*prefix).target_address;
        let noised: BTreeSet<usize> = rand::seq::index::sample(&mut rng, runs as usize, k).into_iter().collect();
        for (r, script) in scripts.iter_mut().enumerate() {
            let v = if noised.contains(&r) {
                let others: Vec<Verdict> = definite.iter().copied().filter(|&o| o != truth).collect();
                *others.choose(&mut rng).expect("three alternatives")
            } else {
                truth
            };
            let triple = canonical_triple(v).expect("validated");
            for (port, outcome) in TRIPLE_PORTS.into_iter().zip(triple) {
                if outcome == OutcomeKind::Timeout {
                    continue;
                }
                let rtt = outcome
                    .has_rtt()
                    .then(|| (rng.gen_range(50..2500) as f64) / 10.0);
                script.set(addr, port, None, ScriptEntry::outcome(outcome, rtt));
            }
        }
    }
    Ok(scripts)
}

/// A peer in the synthetic peer index table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SynthPeer {
    pub bgp_id: Ipv4Addr,
    pub address: Ipv4Addr,
    pub asn: u32,
    pub as4: bool,
}

impl SynthPeer {
    pub fn numbered(i: u16) -> Self {
        let a = Ipv4Addr::from(u32::from(Ipv4Addr::new(198, 18, 0, 1)) + i as u32);
        SynthPeer {
            bgp_id: a,
            address: a,
            asn: 64_512 + i as u32,
            as4: true,
        }
    }
}

/// TABLE_DUMP_V2 writer: a peer index table followed by one
/// RIB_IPV4_UNICAST record per entry.
#[derive(Debug, Clone)]
pub struct RibWriter {
    pub peers: Vec<SynthPeer>,
    pub timestamp: u32,
    pub collector_id: Ipv4Addr,
    pub view_name: String,
}

impl RibWriter {
    /// Writer with enough numbered peers for every `peer_index` in `entries`.
    pub fn for_entries(entries: &[RouteEntry]) -> Self {
        let n = entries.iter().map(|e| e.peer_index as usize + 1).max().unwrap_or(0);
        RibWriter {
            peers: (0..n).map(|i| SynthPeer::numbered(i as u16)).collect(),
            timestamp: 0,
            collector_id: Ipv4Addr::new(192, 0, 2, 254),
            view_name: String::new(),
        }
    }

    pub fn write(&self, entries: &[RouteEntry]) -> Result<Vec<u8>, HarnessError> {
        let mut out = Vec::new();
        self.write_to(entries, &mut out)?;
        Ok(out)
    }

    pub fn write_to<W: Write>(&self, entries: &[RouteEntry], mut out: W) -> Result<(), HarnessError> {
        let mut body = Vec::new();
        body.extend_from_slice(&u32::from(self.collector_id).to_be_bytes());
        body.extend_from_slice(&(self.view_name.len() as u16).to_be_bytes());
        body.extend_from_slice(self.view_name.as_bytes());
        body.extend_from_slice(&(self.peers.len() as u16).to_be_bytes());
        for p in &self.peers {
            body.push(if p.as4 { PEER_TYPE_AS4 } else { 0 });
            body.extend_from_slice(&u32::from(p.bgp_id).to_be_bytes());
            body.extend_from_slice(&u32::from(p.address).to_be_bytes());
            if p.as4 {
                body.extend_from_slice(&p.asn.to_be_bytes());
            } else {
                body.extend_from_slice(&(p.asn as u16).to_be_bytes());
            }
        }
        self.record(SUBTYPE_PEER_INDEX_TABLE, &body, &mut out)?;

        for (seq, e) in entries.iter().enumerate() {
            validate_entry(seq, e, self.peers.len())?;
            body.clear();
            body.extend_from_slice(&(seq as u32).to_be_bytes());
            let plen = e.prefix.prefix_len();
            body.push(plen);
            let nbytes = (plen as usize).div_ceil(8);
            body.extend_from_slice(&e.prefix.network().octets()[..nbytes]);
            body.extend_from_slice(&1u16.to_be_bytes());
            body.extend_from_slice(&e.peer_index.to_be_bytes());
            body.extend_from_slice(&self.timestamp.to_be_bytes());
            let attrs = encode_attributes(&e.path);
            body.extend_from_slice(&(attrs.len() as u16).to_be_bytes());
            body.extend_from_slice(&attrs);
            self.record(SUBTYPE_RIB_IPV4_UNICAST, &body, &mut out)?;
        }
        Ok(())
    }

    fn record<W: Write>(&self, subtype: u16, body: &[u8], out: &mut W) -> io::Result<()> {
        out.write_all(&self.timestamp.to_be_bytes())?;
        out.write_all(&MRT_TABLE_DUMP_V2.to_be_bytes())?;
        out.write_all(&subtype.to_be_bytes())?;
        out.write_all(&(body.len() as u32).to_be_bytes())?;
        out.write_all(body)
    }
}

fn validate_entry(index: usize, e: &RouteEntry, peers: usize) -> Result<(), HarnessError> {
    let bad = |reason: String| HarnessError::InvalidEntry { index, reason };
    if e.prefix.trunc() != e.prefix {
        return Err(bad(format!("{} has host bits set", e.prefix)));
    }
    if e.peer_index as usize >= peers {
        return Err(bad(format!("peer index {} without a peer", e.peer_index)));
    }
    if e.origin != e.path.origin() {
        return Err(bad("origin does not match the AS path".into()));
    }
    if let Some(s) = e.path.segments.iter().find(|s| s.asns.len() > 255) {
        return Err(bad(format!("segment of {} ASNs exceeds 255", s.asns.len())));
    }
    Ok(())
}

fn encode_attributes(path: &AsPath) -> Vec<u8> {
    let mut value = Vec::new();
    for seg in &path.segments {
        value.push(seg.kind.code());
        value.push(seg.asns.len() as u8);
        for a in &seg.asns {
            value.extend_from_slice(&a.to_be_bytes());
        }
    }
    let mut attrs = vec![0x40, 1, 1, 0]; // ORIGIN = IGP
    if value.len() > 255 {
        attrs.extend_from_slice(&[0x40 | ATTR_FLAG_EXTENDED_LENGTH, ATTR_AS_PATH]);
        attrs.extend_from_slice(&(value.len() as u16).to_be_bytes());
    } else {
        attrs.extend_from_slice(&[0x40, ATTR_AS_PATH, value.len() as u8]);
    }
    attrs.extend_from_slice(&value);
    attrs.extend_from_slice(&[0x40, 3, 4, 192, 0, 2, 1]); // NEXT_HOP
    attrs
}

/// Serialize `entries` as a TABLE_DUMP_V2 RIB.
pub fn synth_rib(entries: &[RouteEntry]) -> Result<Vec<u8>, HarnessError> {
    RibWriter::for_entries(entries).write(entries)
}

fn interval(p: &Ipv4Net) -> (u32, u32) {
    (u32::from(p.network()), u32::from(p.broadcast()))
}

/// Allocated prefixes that share at least one address with an announced
/// prefix, by pairwise interval comparison.
pub fn coverage_oracle(allocated: &BTreeSet<Ipv4Net>, announced: &BTreeSet<Ipv4Net>) -> BTreeSet<Ipv4Net> {
    allocated
        .iter()
        .filter(|a| {
            let (alo, ahi) = interval(a);
            announced.iter().any(|b| {
                let (blo, bhi) = interval(b);
                alo <= bhi && blo <= ahi
            })
        })
        .copied()
        .collect()
}

/// A random allocated/announced pair confined to one /16.
#[derive(Debug, Clone)]
pub struct SmallUniverse {
    pub block: Ipv4Net,
    pub allocated: BTreeSet<AllocatedPrefix>,
    pub announced: BTreeSet<Ipv4Net>,
}

impl SmallUniverse {
    pub fn allocated_cidrs(&self) -> BTreeSet<Ipv4Net> {
        self.allocated.iter().map(|p| p.cidr).collect()
    }
}

/// Allocations are decomposed from random disjoint records; announcements
/// are random prefixes of length 14 to 30, mostly inside the block.
pub fn random_universe(seed: u64) -> SmallUniverse {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base = (rng.gen_range(1u32..224) << 24) | (rng.gen::<u8>() as u32) << 16;
    let block = Ipv4Net::new(Ipv4Addr::from(base), 16).expect("valid /16");

    let mut allocated = BTreeSet::new();
    let mut at: u64 = base as u64;
    let end = base as u64 + (1 << 16);
    while at < end {
        let len = rng.gen_range(1u64..=4096).min(end - at);
        if rng.gen_bool(0.5) {
            let start = at as u32;
            for cidr in decompose(start, len as u32).expect("inside the block") {
                allocated.insert(AllocatedPrefix {
                    cidr,
                    source_start: Ipv4Addr::from(start),
                    source_count: len as u32,
                });
            }
        }
        at += len + rng.gen_range(0..2048);
    }

    let n = rng.gen_range(0..40);
    let announced = (0..n)
        .map(|_| {
            let plen = rng.gen_range(14u8..=30);
            let addr = if rng.gen_bool(0.9) {
                base | rng.gen_range(0u32..1 << 16)
            } else {
                rng.gen::<u32>()
            };
            Ipv4Net::new(Ipv4Addr::from(addr), plen).expect("length in range").trunc()
        })
        .collect();
    SmallUniverse {
        block,
        allocated,
        announced,
    }
}

/// Random valid route entries for round-trip checks.
pub fn random_entries(rng: &mut impl Rng, n: usize) -> Vec<RouteEntry> {
    (0..n)
        .map(|_| {
            let plen = rng.gen_range(0u8..=32);
            let prefix = Ipv4Net::new(Ipv4Addr::from(rng.gen::<u32>()), plen)
                .expect("length in range")
                .trunc();
            let mut segments = Vec::new();
            for _ in 0..rng.gen_range(0..4) {
                let kind = match rng.gen_range(0..10) {
                    0 => SegmentKind::Set,
                    1 => SegmentKind::ConfedSequence,
                    2 => SegmentKind::ConfedSet,
                    _ => SegmentKind::Sequence,
                };
                let asns = (0..rng.gen_range(1..6))
                    .map(|_| if rng.gen_bool(0.3) { rng.gen_range(1..65_536) } else { rng.gen() })
                    .collect();
                segments.push(PathSegment { kind, asns });
            }
            RouteEntry::new(prefix, AsPath { segments }, rng.gen_range(0..4))
        })
        .collect()
}

/// Convenience for seeded shuffles in fixture builders.
pub(crate) fn shuffled<T>(mut v: Vec<T>, rng: &mut ChaCha8Rng) -> Vec<T> {
    v.shuffle(rng);
    v
}
