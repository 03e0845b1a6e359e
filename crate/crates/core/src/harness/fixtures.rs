//! Builders for the bundled fixture set.
//!
//! Every file under `fixtures/` is produced here from fixed seeds, so the
//! bundle can be regenerated and checked byte for byte.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::net::Ipv4Addr;

use chrono::NaiveDate;
use flate2::write::GzEncoder;
use ipnet::Ipv4Net;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{script_from_plan, shuffled, GroundTruthPlan, RibWriter, ScriptedTransport, SynthPeer};
use crate::passive::{write_series_csv, HostSnapshot};
use crate::prober::{sweep, write_observations, SweepPolicy};
use crate::rib_ingest::{AsPath, RouteEntry};
use crate::verdicts::{write_consensus_csv, ConsensusRecord, Verdict};

pub const COUNTRY: &str = "IR";
pub const CONTROL_COUNTRY: &str = "TR";

/// ASN records delegated to the country: (first ASN, count). 668 in total.
pub const COUNTRY_ASN_RECORDS: [(u32, u32); 8] = [
    (4_200_000_000, 300),
    (4_200_001_000, 200),
    (4_200_002_000, 100),
    (4_200_003_000, 50),
    (4_200_004_000, 10),
    (4_200_005_000, 5),
    (4_200_006_000, 2),
    (4_200_007_000, 1),
];
pub const FOREIGN_ASN: u32 = 4_210_000_000;
const GATEWAY_ASN: u32 = 49_666;
const TRANSIT_ASNS: [u32; 3] = [1299, 3356, 174];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FixtureFile {
    /// Path relative to the fixture root.
    pub path: String,
    pub bytes: Vec<u8>,
}

fn file(path: impl Into<String>, bytes: Vec<u8>) -> FixtureFile {
    FixtureFile {
        path: path.into(),
        bytes,
    }
}

fn ymd(y: i32, m: u32, d: u32) -> NaiveDate {
    NaiveDate::from_ymd_opt(y, m, d).expect("valid fixture date")
}

/// Every bundled fixture, in a stable order.
pub fn build_all() -> Vec<FixtureFile> {
    let mut out = Vec::new();
    for ev in coverage_events() {
        out.extend(ev.build().files());
    }
    out.extend(probe_files());
    out.extend(consensus_files());
    out.extend(passive_files());
    out.extend(ascomp_files());
    out
}

// ---------------------------------------------------------------- coverage

/// One RIB snapshot of a coverage event.
#[derive(Debug, Clone, Copy)]
pub struct SnapshotSpec {
    pub date: NaiveDate,
    pub phase: &'static str,
    pub covered: usize,
    pub announced: usize,
}

/// One event's allocated universe and its snapshots.
#[derive(Debug, Clone)]
pub struct CoverageEventSpec {
    pub event: &'static str,
    pub base: Ipv4Addr,
    pub allocated: usize,
    pub delegated_date: NaiveDate,
    pub seed: u64,
    pub snapshots: Vec<SnapshotSpec>,
}

pub fn coverage_events() -> Vec<CoverageEventSpec> {
    let s = |date, phase, covered, announced| SnapshotSpec {
        date,
        phase,
        covered,
        announced,
    };
    vec![
        CoverageEventSpec {
            event: "2019",
            base: Ipv4Addr::new(10, 0, 0, 0),
            allocated: 1454,
            delegated_date: ymd(2019, 11, 10),
            seed: 2019,
            snapshots: vec![
                s(ymd(2019, 11, 10), "B", 1237, 6078),
                s(ymd(2019, 11, 17), "O", 1240, 6090),
                s(ymd(2019, 11, 20), "D", 906, 4118),
                s(ymd(2019, 11, 21), "D", 795, 3950),
            ],
        },
        CoverageEventSpec {
            event: "2022",
            base: Ipv4Addr::new(10, 64, 0, 0),
            allocated: 1640,
            delegated_date: ymd(2022, 9, 14),
            seed: 2022,
            snapshots: vec![
                s(ymd(2022, 9, 14), "B", 1451, 7816),
                s(ymd(2022, 9, 25), "D", 1423, 7809),
            ],
        },
        CoverageEventSpec {
            event: "E1",
            base: Ipv4Addr::new(10, 128, 0, 0),
            allocated: 1896,
            delegated_date: ymd(2026, 1, 5),
            seed: 2026,
            snapshots: vec![
                s(ymd(2026, 1, 5), "B", 1661, 8563),
                s(ymd(2026, 1, 10), "O", 1640, 8256),
                s(ymd(2026, 1, 12), "D", 1555, 7661),
            ],
        },
    ]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Slot {
    /// One /22 record.
    Full,
    /// A 768-address record: a /23 and a /24.
    Split,
    /// A /23 record in a /22 whose other half is unallocated.
    Half,
}

#[derive(Debug, Clone, Copy)]
struct Alloc {
    cidr: Ipv4Net,
    slot: Ipv4Net,
    kind: Slot,
}

/// A built coverage event: the delegated file and the RIB entries per snapshot.
#[derive(Debug, Clone)]
pub struct CoverageEvent {
    pub spec: CoverageEventSpec,
    pub delegated: String,
    pub ribs: Vec<(SnapshotSpec, Vec<RouteEntry>)>,
}

impl CoverageEventSpec {
    pub fn delegated_path(&self) -> String {
        format!("rib/delegated-{}.txt", self.event.to_lowercase())
    }

    pub fn bview_path(&self, date: NaiveDate) -> String {
        // one bzip2 file keeps that decompression path exercised end to end
        let ext = if date == ymd(2019, 11, 21) { "bz2" } else { "gz" };
        format!("rib/bview.{}.{ext}", date.format("%Y%m%d"))
    }

    pub fn build(&self) -> CoverageEvent {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let (splits, halves) = (6, 8);
        let fulls = self.allocated - 2 * splits - halves;
        let mut kinds = vec![Slot::Split; splits];
        kinds.extend(vec![Slot::Half; halves]);
        kinds.extend(vec![Slot::Full; fulls]);
        let kinds = shuffled(kinds, &mut rng);

        let base = u32::from(self.base);
        let mut allocs = Vec::new();
        let mut records = Vec::new();
        for (j, kind) in kinds.iter().enumerate() {
            let start = base + (j as u32) * 1024;
            let slot = net(start, 22);
            match kind {
                Slot::Full => {
                    records.push((start, 1024));
                    allocs.push(Alloc { cidr: slot, slot, kind: *kind });
                }
                Slot::Split => {
                    records.push((start, 768));
                    allocs.push(Alloc { cidr: net(start, 23), slot, kind: *kind });
                    allocs.push(Alloc { cidr: net(start + 512, 24), slot, kind: *kind });
                }
                Slot::Half => {
                    records.push((start, 512));
                    allocs.push(Alloc { cidr: net(start, 23), slot, kind: *kind });
                }
            }
        }
        assert_eq!(allocs.len(), self.allocated);
        let end = base + kinds.len() as u32 * 1024;

        let delegated = self.delegated_text(&records, end);
        let order = shuffled((0..allocs.len()).collect::<Vec<_>>(), &mut rng);
        let asns: Vec<u32> = COUNTRY_ASN_RECORDS
            .iter()
            .flat_map(|&(s, c)| s..s + c)
            .collect();
        let origin_of: Vec<u32> = (0..allocs.len()).map(|_| asns[rng.gen_range(0..asns.len())]).collect();
        let mode_of: Vec<u32> = (0..allocs.len()).map(|_| rng.gen_range(0..10)).collect();

        let ribs = self
            .snapshots
            .iter()
            .map(|snap| {
                let entries = snapshot_entries(snap, &allocs, &order, &origin_of, &mode_of, base, end);
                (*snap, entries)
            })
            .collect();
        CoverageEvent {
            spec: self.clone(),
            delegated,
            ribs,
        }
    }

    fn delegated_text(&self, records: &[(u32, u32)], end: u32) -> String {
        let date = self.delegated_date.format("%Y%m%d");
        let mut lines = Vec::new();
        let v4 = records.len() + 3;
        let asn = COUNTRY_ASN_RECORDS.len() + 1;
        lines.push(format!("2|ripencc|{date}|{}|19830705|{date}|+0100", v4 + asn + 1));
        lines.push(format!("ripencc|*|asn|*|{asn}|summary"));
        lines.push(format!("ripencc|*|ipv4|*|{v4}|summary"));
        lines.push("ripencc|*|ipv6|*|1|summary".into());
        for (s, c) in COUNTRY_ASN_RECORDS {
            lines.push(format!("ripencc|{COUNTRY}|asn|{s}|{c}|20050101|allocated"));
        }
        lines.push(format!("ripencc|{CONTROL_COUNTRY}|asn|{FOREIGN_ASN}|1|20050101|allocated"));
        for &(s, c) in records {
            lines.push(format!(
                "ripencc|{COUNTRY}|ipv4|{}|{c}|20100101|allocated",
                Ipv4Addr::from(s)
            ));
        }
        lines.push(format!(
            "ripencc|{COUNTRY}|ipv4|{}|1024|20100101|reserved",
            Ipv4Addr::from(end)
        ));
        lines.push(format!(
            "ripencc|{CONTROL_COUNTRY}|ipv4|{}|2048|20100101|allocated",
            Ipv4Addr::from(end + 1024)
        ));
        lines.push(format!("ripencc|{COUNTRY}|ipv4|{}|512|20100101|available", Ipv4Addr::from(end + 4096)));
        lines.push(format!("ripencc|{COUNTRY}|ipv6|2001:db8::|32|20100101|allocated"));
        lines.join("\n") + "\n"
    }
}

fn net(start: u32, len: u8) -> Ipv4Net {
    Ipv4Net::new(Ipv4Addr::from(start), len).expect("valid fixture prefix")
}

fn path_to(origin: u32, salt: usize) -> AsPath {
    AsPath::sequence([TRANSIT_ASNS[salt % TRANSIT_ASNS.len()], GATEWAY_ASN, origin])
}

/// Routes for one snapshot: the first `covered` allocations in `order` get a
/// covering route, padding more-specifics inside them bring the
/// country-originated count to `announced`, and a handful of foreign and
/// default routes sit alongside.
fn snapshot_entries(
    snap: &SnapshotSpec,
    allocs: &[Alloc],
    order: &[usize],
    origin_of: &[u32],
    mode_of: &[u32],
    base: u32,
    end: u32,
) -> Vec<RouteEntry> {
    let covered = &order[..snap.covered];
    let mut routes: BTreeMap<Ipv4Net, AsPath> = BTreeMap::new();
    let mut padding_hosts = Vec::new();

    for &i in covered {
        let a = allocs[i];
        let origin = origin_of[i];
        let (prefix, path) = match a.kind {
            Slot::Full => match mode_of[i] {
                0..=6 => (a.cidr, path_to(origin, i)),
                7 | 8 => (net(u32::from(a.cidr.network()) + 256, 24), path_to(origin, i)),
                _ => (a.cidr, path_to(origin, i).push_set([origin, FOREIGN_ASN])),
            },
            Slot::Split => (a.cidr, path_to(origin, i)),
            Slot::Half => (a.slot, path_to(origin, i)),
        };
        routes.insert(prefix, path);
        if a.kind == Slot::Full {
            padding_hosts.push((i, prefix));
        }
    }

    let need = snap
        .announced
        .checked_sub(routes.len())
        .expect("announced count at least the covered count");
    let mut added = 0;
    'outer: for round in 0.. {
        let mut progressed = false;
        for &(i, cover) in &padding_hosts {
            let subs: Vec<Ipv4Net> = (23..=25)
                .flat_map(|len| allocs[i].cidr.subnets(len).expect("longer prefix"))
                .filter(|s| *s != cover)
                .collect();
            if let Some(p) = subs.get(round) {
                progressed = true;
                if added == need {
                    break 'outer;
                }
                routes.insert(*p, path_to(origin_of[i], round));
                added += 1;
            }
        }
        if !progressed {
            break;
        }
    }
    assert_eq!(added, need, "not enough room for padding routes on {}", snap.date);

    let mut entries: Vec<RouteEntry> = Vec::new();
    for (n, (prefix, path)) in routes.into_iter().enumerate() {
        entries.push(RouteEntry::new(prefix, path.clone(), 0));
        if n % 7 == 0 {
            entries.push(RouteEntry::new(prefix, path.clone(), 1));
        }
        if n % 11 == 0 {
            entries.push(RouteEntry::new(prefix, path, 2));
        }
    }

    // Foreign routes: never part of the country's announced set.
    let foreign = AsPath::sequence([TRANSIT_ASNS[0], FOREIGN_ASN]);
    entries.push(RouteEntry::new(net(base & 0xff00_0000, 8), foreign.clone(), 0));
    for &i in order[snap.covered..].iter().step_by(50) {
        entries.push(RouteEntry::new(allocs[i].cidr, foreign.clone(), 1));
    }
    entries.push(RouteEntry::new(net(end + 1024, 22), foreign, 0));
    // A default route from a country AS is ignored by the origin filter.
    entries.push(RouteEntry::new(
        net(0, 0),
        path_to(COUNTRY_ASN_RECORDS[0].0, 0),
        0,
    ));
    entries.sort_by_key(|e| (e.prefix, e.peer_index));
    entries
}

fn rib_writer() -> RibWriter {
    let mut peers: Vec<SynthPeer> = (0..3).map(SynthPeer::numbered).collect();
    peers[2].as4 = false;
    RibWriter {
        peers,
        timestamp: 0,
        collector_id: Ipv4Addr::new(192, 0, 2, 254),
        view_name: String::new(),
    }
}

fn gzip(bytes: &[u8]) -> Vec<u8> {
    let mut enc = GzEncoder::new(Vec::new(), flate2::Compression::default());
    enc.write_all(bytes).expect("in-memory write");
    enc.finish().expect("in-memory write")
}

fn bzip(bytes: &[u8]) -> Vec<u8> {
    let mut enc = bzip2::write::BzEncoder::new(Vec::new(), bzip2::Compression::default());
    enc.write_all(bytes).expect("in-memory write");
    enc.finish().expect("in-memory write")
}

impl CoverageEvent {
    pub fn files(&self) -> Vec<FixtureFile> {
        let mut out = vec![file(self.spec.delegated_path(), self.delegated.clone().into_bytes())];
        let writer = rib_writer();
        for (snap, entries) in &self.ribs {
            let raw = writer.write(entries).expect("fixture entries are valid");
            let path = self.spec.bview_path(snap.date);
            let bytes = if path.ends_with(".bz2") { bzip(&raw) } else { gzip(&raw) };
            out.push(file(path, bytes));
        }
        out
    }
}

// ---------------------------------------------------------------- probing

pub const PROBE_RUNS: u32 = 5;
pub const PROBE_VANTAGES: [&str; 2] = ["amsterdam", "frankfurt"];

/// Small planted-truth plan behind the bundled replay scripts.
pub fn probe_plan(seed: u64) -> GroundTruthPlan {
    let mix = [
        Verdict::NullRoute,
        Verdict::NullRoute,
        Verdict::NullRoute,
        Verdict::Reachable,
        Verdict::NullRoute,
        Verdict::BgpWithdraw,
        Verdict::NullRoute,
        Verdict::FirewallAcl,
    ];
    let verdicts = (0..24u32)
        .map(|i| (net(u32::from(Ipv4Addr::new(10, 200, 0, 0)) + (i << 8), 24), mix[i as usize % mix.len()]))
        .collect();
    GroundTruthPlan {
        verdicts,
        noise: 0.2,
        seed,
    }
}

fn probe_files() -> Vec<FixtureFile> {
    let mut out = Vec::new();
    let plan = probe_plan(7);
    let targets: String = plan.verdicts.keys().map(|p| format!("{p}\n")).collect();
    out.push(file("probe/targets.txt", targets.into_bytes()));

    let mut observations = Vec::new();
    for (v, vantage) in PROBE_VANTAGES.iter().enumerate() {
        let plan = probe_plan(7 + v as u64);
        let scripts = script_from_plan(&plan, PROBE_RUNS).expect("valid plan");
        for (run, script) in scripts.into_iter().enumerate() {
            if v == 0 {
                let mut buf = Vec::new();
                script.write_jsonl(&mut buf).expect("in-memory write");
                out.push(file(format!("probe/replay-run{run}.jsonl"), buf));
            }
            let policy = SweepPolicy {
                rate_per_sec: 1e6,
                max_in_flight: 4,
                vantage_id: vantage.to_string(),
                run_id: run as u32,
                ..SweepPolicy::default()
            };
            let transport = ScriptedTransport::new(script);
            observations.extend(sweep(&plan.targets(), &transport, &policy).expect("scripted sweep"));
        }
    }
    let mut buf = Vec::new();
    write_observations(&observations, &mut buf).expect("in-memory write");
    out.push(file("probe/observations.jsonl", buf));
    out
}

/// Prefix count and per-vantage consensus counts (NR, RE, BW, FA, AM) with
/// the number of sweeps, as published for the five vantages.
pub const CONSENSUS_PREFIXES: usize = 4571;
pub const CONSENSUS_TABLE: [(&str, usize, [usize; 5]); 5] = [
    ("amsterdam", 34, [4416, 92, 57, 6, 0]),
    ("frankfurt", 34, [4453, 95, 17, 6, 0]),
    ("istanbul", 33, [4444, 97, 24, 6, 0]),
    ("new-york", 34, [4410, 97, 57, 6, 1]),
    ("singapore", 34, [4451, 94, 20, 6, 0]),
];

pub fn consensus_path(vantage: &str) -> String {
    format!("probe/consensus-{vantage}.csv")
}

/// Consensus records for one vantage that realize its row of
/// [`CONSENSUS_TABLE`].
pub fn consensus_records(vantage: &str) -> Vec<ConsensusRecord> {
    let (_, runs, counts) = *CONSENSUS_TABLE
        .iter()
        .find(|(v, ..)| *v == vantage)
        .expect("known vantage");
    let mut rng = ChaCha8Rng::seed_from_u64(4571);
    let prefixes: Vec<Ipv4Net> = (0..CONSENSUS_PREFIXES as u32)
        .map(|i| net(u32::from(Ipv4Addr::new(10, 96, 0, 0)) + (i << 8), 24))
        .collect();
    let order = shuffled((0..CONSENSUS_PREFIXES).collect::<Vec<_>>(), &mut rng);

    // Shared layout: the firewalled prefixes come first, then a pool of
    // reachable ones, then a pool of withdrawn ones; vantages take a prefix
    // of each pool.
    let [_, re, bw, fa, am] = counts;
    let mut planted = vec![Verdict::NullRoute; CONSENSUS_PREFIXES];
    for &i in &order[..fa] {
        planted[i] = Verdict::FirewallAcl;
    }
    for &i in &order[6..6 + re] {
        planted[i] = Verdict::Reachable;
    }
    for &i in &order[200..200 + bw] {
        planted[i] = Verdict::BgpWithdraw;
    }
    for &i in &order[300..300 + am] {
        planted[i] = Verdict::Ambiguous;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(vantage.bytes().map(u64::from).sum());
    let definite = [Verdict::NullRoute, Verdict::Reachable, Verdict::BgpWithdraw, Verdict::FirewallAcl];
    prefixes
        .iter()
        .zip(planted)
        .map(|(p, truth)| {
            let runs_v: Vec<Verdict> = if truth == Verdict::Ambiguous {
                let half = runs / 2 - 1;
                let mut v = vec![Verdict::NullRoute; half];
                v.extend(vec![Verdict::FirewallAcl; half]);
                v.extend(vec![Verdict::Reachable; runs - 2 * half]);
                v
            } else {
                let noisy = rng.gen_range(0..3);
                let mut v = vec![truth; runs - noisy];
                for _ in 0..noisy {
                    let others: Vec<Verdict> = definite.iter().copied().filter(|o| *o != truth).collect();
                    v.push(others[rng.gen_range(0..others.len())]);
                }
                v
            };
            ConsensusRecord::from_runs(*p, vantage, &runs_v).expect("non-empty runs")
        })
        .collect()
}

fn consensus_files() -> Vec<FixtureFile> {
    CONSENSUS_TABLE
        .iter()
        .map(|(v, ..)| {
            let mut buf = Vec::new();
            write_consensus_csv(&consensus_records(v), &mut buf).expect("in-memory write");
            file(consensus_path(v), buf)
        })
        .collect()
}

// ---------------------------------------------------------------- passive

/// Daily totals, in millions, for January through March 2026.
/// January 9 to 11 are missing.
pub const IR_TOTALS: [(u32, u32, f64); 86] = [
    (1, 1, 0.929656), (1, 2, 0.926326), (1, 3, 0.907998), (1, 4, 0.908580), (1, 5, 0.938219),
    (1, 6, 0.935289), (1, 7, 0.935832), (1, 8, 1.175816), (1, 12, 0.046255), (1, 13, 0.088053),
    (1, 14, 0.041878), (1, 15, 0.041203), (1, 16, 0.040206), (1, 17, 0.062299), (1, 18, 0.062079),
    (1, 19, 0.043996), (1, 20, 0.068616), (1, 21, 0.039101), (1, 22, 0.035171), (1, 23, 0.028608),
    (1, 24, 0.018990), (1, 25, 0.183906), (1, 26, 0.260316), (1, 27, 0.739529), (1, 28, 1.365648),
    (1, 29, 2.100154), (1, 30, 2.558558), (1, 31, 2.869442), (2, 1, 3.083596), (2, 2, 3.200091),
    (2, 3, 3.234574), (2, 4, 3.258631), (2, 5, 3.273822), (2, 6, 3.288994), (2, 7, 3.293202),
    (2, 8, 3.318275), (2, 9, 3.325594), (2, 10, 3.330856), (2, 11, 3.329903), (2, 12, 3.329201),
    (2, 13, 3.332433), (2, 14, 3.336867), (2, 15, 3.357376), (2, 16, 3.370097), (2, 17, 3.372907),
    (2, 18, 3.391253), (2, 19, 3.405477), (2, 20, 3.410410), (2, 21, 3.398724), (2, 22, 3.410070),
    (2, 23, 3.424094), (2, 24, 3.451277), (2, 25, 3.470394), (2, 26, 3.481772), (2, 27, 3.477204),
    (2, 28, 3.469568), (3, 1, 3.396330), (3, 2, 0.402466), (3, 3, 0.110140), (3, 4, 0.065973),
    (3, 5, 0.063966), (3, 6, 0.062980), (3, 7, 0.060595), (3, 8, 0.058885), (3, 9, 0.055361),
    (3, 10, 0.073073), (3, 11, 0.044344), (3, 12, 0.040992), (3, 13, 0.036332), (3, 14, 0.028664),
    (3, 15, 0.023012), (3, 16, 0.060977), (3, 17, 0.081347), (3, 18, 0.009873), (3, 19, 0.045380),
    (3, 20, 0.053362), (3, 21, 0.018846), (3, 22, 0.010850), (3, 23, 0.011145), (3, 24, 0.034931),
    (3, 25, 0.011532), (3, 26, 0.011761), (3, 27, 0.011771), (3, 28, 0.011496), (3, 29, 0.011342),
    (3, 30, 0.010989),
];

/// Active counts pinned at the key dates.
pub const IR_ACTIVE: [(u32, u32, u64); 8] = [
    (1, 7, 798_000),
    (1, 8, 1_020_000),
    (1, 12, 44_400),
    (2, 28, 3_160_000),
    (3, 1, 30_211),
    (3, 2, 56_000),
    (3, 3, 90_400),
    (3, 15, 22_000),
];

pub const REFERENCE_DATE: (i32, u32, u32) = (2026, 1, 7);

fn ir_pending_rate(m: u32, d: u32) -> f64 {
    match (m, d) {
        (1, 1..=8) => 0.15,
        (1, 9..=26) => 0.04,
        (1, _) | (2, _) => 0.09,
        _ => 0.10,
    }
}

pub fn ir_series() -> Vec<HostSnapshot> {
    IR_TOTALS
        .iter()
        .map(|&(m, d, millions)| {
            let total = (millions * 1e6).round() as u64;
            let date = ymd(2026, m, d);
            match IR_ACTIVE.iter().find(|(am, ad, _)| (*am, *ad) == (m, d)) {
                Some(&(_, _, active)) => HostSnapshot::from_active(date, total, active, COUNTRY),
                None => {
                    let pending = (total as f64 * ir_pending_rate(m, d)).round() as u64;
                    HostSnapshot::new(date, total, pending, COUNTRY)
                }
            }
            .expect("fixture counts are consistent")
        })
        .collect()
}

/// Monthly 2025 totals for the country, then the reference date.
pub fn ir_baseline() -> Vec<HostSnapshot> {
    let monthly = [
        1_012_000, 965_000, 910_000, 948_000, 1_003_000, 1_170_000, 1_082_000, 1_041_000, 987_000, 1_121_000,
        1_058_000, 972_000,
    ];
    let mut out: Vec<HostSnapshot> = monthly
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            HostSnapshot::new(ymd(2025, i as u32 + 1, 15), t, (t as f64 * 0.15).round() as u64, COUNTRY)
                .expect("pending below total")
        })
        .collect();
    let (y, m, d) = REFERENCE_DATE;
    out.push(
        ir_series()
            .into_iter()
            .find(|s| s.date == ymd(y, m, d))
            .expect("reference date in series"),
    );
    out
}

pub fn tr_series(inflated: bool) -> Vec<HostSnapshot> {
    let mut rng = ChaCha8Rng::seed_from_u64(90);
    IR_TOTALS
        .iter()
        .map(|&(m, d, _)| {
            let date = ymd(2026, m, d);
            let mut total = 1_300_000 + rng.gen_range(0..50_000) - 25_000;
            if inflated && date >= ymd(2026, 1, 27) && date <= ymd(2026, 3, 1) {
                total = total * 16 / 10;
            }
            HostSnapshot::new(date, total, total * 12 / 100, CONTROL_COUNTRY).expect("pending below total")
        })
        .collect()
}

pub fn tr_baseline() -> Vec<HostSnapshot> {
    let monthly = [
        1_290_000, 1_250_000, 1_310_000, 1_275_000, 1_330_000, 1_350_000, 1_320_000, 1_260_000, 1_300_000,
        1_285_000, 1_340_000, 1_305_000,
    ];
    let mut out: Vec<HostSnapshot> = monthly
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            HostSnapshot::new(ymd(2025, i as u32 + 1, 15), t, t * 12 / 100, CONTROL_COUNTRY).expect("pending below total")
        })
        .collect();
    let (y, m, d) = REFERENCE_DATE;
    out.push(
        tr_series(false)
            .into_iter()
            .find(|s| s.date == ymd(y, m, d))
            .expect("reference date in series"),
    );
    out
}

fn series_file(path: &str, series: &[HostSnapshot]) -> FixtureFile {
    let mut buf = Vec::new();
    write_series_csv(series, &mut buf).expect("in-memory write");
    file(path, buf)
}

fn passive_files() -> Vec<FixtureFile> {
    vec![
        series_file("passive/series-ir.csv", &ir_series()),
        series_file("passive/baseline-ir.csv", &ir_baseline()),
        series_file("passive/control-tr.csv", &tr_series(false)),
        series_file("passive/control-tr-inflated.csv", &tr_series(true)),
        series_file("passive/baseline-tr.csv", &tr_baseline()),
    ]
}

// ---------------------------------------------------------------- AS composition

/// Dates of the composition table.
pub fn ascomp_dates() -> [NaiveDate; 6] {
    [
        ymd(2026, 1, 7),
        ymd(2026, 1, 16),
        ymd(2026, 3, 1),
        ymd(2026, 3, 2),
        ymd(2026, 3, 15),
        ymd(2026, 3, 17),
    ]
}

/// Category totals per date, in [`ascomp_dates`] order. Category order:
/// state telecom, mobile, mobile infra, commercial ISP, academic, CDN, other.
pub const CATEGORY_TOTALS: [[u64; 6]; 7] = [
    [101_000, 1_300, 278_000, 29_000, 800, 700],
    [2_900, 60, 34_000, 10_000, 2_500, 601],
    [3_600, 200, 8_400, 1_800, 0, 500],
    [727_000, 33_000, 2_495_000, 295_000, 9_523, 21_101],
    [13_200, 600, 214_000, 20_000, 7_077, 49_656],
    [12_000, 1_300, 24_000, 4_800, 1_100, 2_000],
    [77_000, 3_900, 326_000, 39_000, 0, 0],
];

/// Named ASes: (ASN, name, metadata label, category row, counts per date).
pub const NAMED_ASES: [(u32, &str, &str, usize, [u64; 6]); 7] = [
    (58224, "TCI - Telecommunication Company of Iran", "isp", 3, [500_000, 20_000, 1_340_000, 150_000, 2_368, 9_000]),
    (197207, "MCCI - Mobile Communication Company of Iran", "mobile", 1, [1_800, 40, 10_130, 6_000, 2_237, 601]),
    (205585, "ArvanCloud", "isp", 5, [1_031, 1_027, 1_028, 1_026, 1_025, 1_026]),
    (29068, "University of Tehran", "", 4, [55, 10, 21_350, 2_500, 2_077, 16_597]),
    (12660, "Sharif University of Technology", "", 4, [400, 30, 9_000, 900, 1_200, 4_855]),
    (6736, "IRANET-IPM", "", 4, [523, 20, 66_404, 5_000, 800, 6_000]),
    (49666, "TIC - Telecommunication Infrastructure Company", "government", 0, [40_000, 500, 100_000, 10_000, 300, 300]),
];

/// Unnamed ASes that fill each category up to its total: (ASN, name,
/// metadata label, category row, weight).
pub const FILLER_ASES: [(u32, &str, &str, usize, u64); 17] = [
    (64600, "Data Communication Co", "state", 0, 5),
    (64601, "Provincial Gov Network", "", 0, 3),
    (64602, "Rightel Cellular", "", 1, 2),
    (64603, "Taliya Mobile", "cellular", 1, 1),
    (64604, "Tower Backhaul Services", "mobile_infra", 2, 3),
    (64605, "Radio Access Transport", "mobile-infrastructure", 2, 2),
    (64606, "Pars Online", "isp", 3, 5),
    (64607, "Shatel", "isp", 3, 4),
    (64608, "Asiatech Data Transfer", "", 3, 3),
    (64609, "Afranet", "broadband-isp", 3, 2),
    (64610, "Amirkabir University", "", 4, 3),
    (64611, "Institute for Research in Fundamental Sciences", "education", 4, 2),
    (64612, "Iran Cloud Hosting", "", 5, 3),
    (64613, "Derak CDN", "hosting", 5, 2),
    (64614, "Saman Bank", "business", 6, 4),
    (64615, "Holding Group", "", 6, 3),
    (64616, "Industrial Park Services", "enterprise", 6, 2),
];

pub const KEYWORD_RULES_JSON: &str = r#"[
  {"pattern": "universit|academ|research|\\bIPM\\b", "category": "academic"},
  {"pattern": "mobile|cellular", "category": "mobile"},
  {"pattern": "cloud|cdn|hosting", "category": "cdn"},
  {"pattern": "\\bgov\\b|government|state", "category": "state_telecom"},
  {"pattern": "backhaul|tower", "category": "mobile_infra"},
  {"pattern": "telecom|isp|online|data transfer|net\\b|afranet|shatel", "category": "commercial_isp"}
]
"#;

pub const OVERRIDES_JSON: &str = r#"{
  "205585": {"category": "cdn", "note": "CDN operator listed under a transit label"},
  "64609": "commercial_isp"
}
"#;

/// Split `total` over `weights` by largest remainder.
fn apportion(total: u64, weights: &[u64]) -> Vec<u64> {
    let sum: u64 = weights.iter().sum();
    let mut shares: Vec<u64> = weights.iter().map(|w| total * w / sum).collect();
    let mut rem: Vec<(u64, usize)> = weights
        .iter()
        .enumerate()
        .map(|(i, w)| ((total * w) % sum, i))
        .collect();
    rem.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    let short = total - shares.iter().sum::<u64>();
    for &(_, i) in rem.iter().take(short as usize) {
        shares[i] += 1;
    }
    shares
}

/// Host counts keyed by (date, ASN); zero counts are left out.
pub fn ascomp_counts() -> BTreeMap<(NaiveDate, u32), u64> {
    let dates = ascomp_dates();
    let mut out = BTreeMap::new();
    for (row, totals) in CATEGORY_TOTALS.iter().enumerate() {
        let named: Vec<_> = NAMED_ASES.iter().filter(|a| a.3 == row).collect();
        let fillers: Vec<_> = FILLER_ASES.iter().filter(|a| a.3 == row).collect();
        let weights: Vec<u64> = fillers.iter().map(|f| f.4).collect();
        for (di, &date) in dates.iter().enumerate() {
            let named_sum: u64 = named.iter().map(|a| a.4[di]).sum();
            let rest = totals[di]
                .checked_sub(named_sum)
                .expect("named ASes fit inside their category total");
            for a in &named {
                if a.4[di] > 0 {
                    out.insert((date, a.0), a.4[di]);
                }
            }
            for (f, share) in fillers.iter().zip(apportion(rest, &weights)) {
                if share > 0 {
                    out.insert((date, f.0), share);
                }
            }
        }
    }
    out
}

fn ascomp_files() -> Vec<FixtureFile> {
    let mut counts = Vec::new();
    crate::ascomp::write_counts_csv(&ascomp_counts(), &mut counts).expect("in-memory write");

    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["asn", "name", "category"]).expect("in-memory write");
    let mut meta: BTreeSet<(u32, &str, &str)> = NAMED_ASES.iter().map(|a| (a.0, a.1, a.2)).collect();
    meta.extend(FILLER_ASES.iter().map(|a| (a.0, a.1, a.2)));
    for (asn, name, label) in meta {
        w.write_record([asn.to_string(), name.to_string(), label.to_string()])
            .expect("in-memory write");
    }
    let metadata = w.into_inner().expect("in-memory write");

    vec![
        file("ascomp/counts.csv", counts),
        file("ascomp/metadata.csv", metadata),
        file("ascomp/rules.json", KEYWORD_RULES_JSON.as_bytes().to_vec()),
        file("ascomp/overrides.json", OVERRIDES_JSON.as_bytes().to_vec()),
    ]
}
