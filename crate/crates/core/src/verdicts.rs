//! Per-run verdicts, per-prefix consensus and per-vantage distributions.

use std::collections::BTreeMap;
use std::fmt;
use std::io;

use ipnet::Ipv4Net;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::prober::{OutcomeKind, ProbeObservation};

/// Application ports whose answers prove forwarding-plane delivery.
pub const APP_PORTS: [u16; 2] = [80, 443];
/// Routing-plane port.
pub const BGP_PORT: u16 = 179;

#[derive(Debug, Error, PartialEq)]
pub enum VerdictError {
    #[error("consensus needs at least one run")]
    NoRuns,
    #[error("no consensus records given")]
    NoRecords,
    #[error("records mix vantage ids {0:?} and {1:?}")]
    MixedVantage(String, String),
    #[error("cross-vantage spread needs at least two distributions, got {0}")]
    TooFewVantages(usize),
    #[error("observation for {prefix} (vantage {vantage}, run {run}) probed ports {found:?}, expected {expected:?}")]
    PortConfig {
        prefix: Ipv4Net,
        vantage: String,
        run: u32,
        found: Vec<u16>,
        expected: Vec<u16>,
    },
    #[error("unknown verdict {0:?}")]
    UnknownVerdict(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Verdict {
    NullRoute,
    Reachable,
    BgpWithdraw,
    FirewallAcl,
    Ambiguous,
}

impl Verdict {
    pub const ALL: [Verdict; 5] = [
        Verdict::NullRoute,
        Verdict::Reachable,
        Verdict::BgpWithdraw,
        Verdict::FirewallAcl,
        Verdict::Ambiguous,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::NullRoute => "NULL_ROUTE",
            Verdict::Reachable => "REACHABLE",
            Verdict::BgpWithdraw => "BGP_WITHDRAW",
            Verdict::FirewallAcl => "FIREWALL_ACL",
            Verdict::Ambiguous => "AMBIGUOUS",
        }
    }

    /// Two-letter column label used in summary tables.
    pub fn abbrev(self) -> &'static str {
        match self {
            Verdict::NullRoute => "NR",
            Verdict::Reachable => "RE",
            Verdict::BgpWithdraw => "BW",
            Verdict::FirewallAcl => "FA",
            Verdict::Ambiguous => "AM",
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Verdict {
    type Err = VerdictError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Verdict::ALL
            .into_iter()
            .find(|v| v.as_str().eq_ignore_ascii_case(s) || v.abbrev().eq_ignore_ascii_case(s))
            .ok_or_else(|| VerdictError::UnknownVerdict(s.to_string()))
    }
}

/// Classify one run's outcomes on ports 80, 443 and 179.
///
/// Rules are evaluated in order and the first match wins:
/// 1. all three time out: `NULL_ROUTE`
/// 2. SYN-ACK on 80 or 443: `REACHABLE`
/// 3. any ICMP unreachable: `BGP_WITHDRAW`
/// 4. 80 and 443 time out, 179 answers RST: `FIREWALL_ACL`
/// 5. RST on 80 or 443: `REACHABLE`
/// 6. anything else: `AMBIGUOUS`
pub fn classify(o80: OutcomeKind, o443: OutcomeKind, o179: OutcomeKind) -> Verdict {
    use OutcomeKind::*;
    let all = [o80, o443, o179];
    if all.iter().all(|&o| o == Timeout) {
        Verdict::NullRoute
    } else if o80 == SynAck || o443 == SynAck {
        Verdict::Reachable
    } else if all.contains(&IcmpUnreachable) {
        Verdict::BgpWithdraw
    } else if o80 == Timeout && o443 == Timeout && o179 == Rst {
        Verdict::FirewallAcl
    } else if o80 == Rst || o443 == Rst {
        Verdict::Reachable
    } else {
        Verdict::Ambiguous
    }
}

fn expected_ports() -> Vec<u16> {
    vec![APP_PORTS[0], BGP_PORT, APP_PORTS[1]]
}

/// Classify a probe observation; it must cover exactly ports 80, 443 and 179.
pub fn classify_observation(obs: &ProbeObservation) -> Result<Verdict, VerdictError> {
    let found: Vec<u16> = obs.outcomes.keys().copied().collect();
    let expected = expected_ports();
    if found != expected {
        return Err(VerdictError::PortConfig {
            prefix: obs.prefix,
            vantage: obs.vantage_id.clone(),
            run: obs.run_id,
            found,
            expected,
        });
    }
    let o = |p: u16| obs.outcomes[&p].outcome;
    Ok(classify(o(80), o(443), o(179)))
}

/// Strict-majority vote. Returns the winning verdict and its support; with
/// no strict majority the result is `AMBIGUOUS` carrying the plurality
/// fraction as support.
pub fn consensus(run_verdicts: &[Verdict]) -> Result<(Verdict, f64), VerdictError> {
    if run_verdicts.is_empty() {
        return Err(VerdictError::NoRuns);
    }
    let counts = tally(run_verdicts);
    Ok(consensus_from_counts(&counts, run_verdicts.len()))
}

fn tally(vs: &[Verdict]) -> BTreeMap<Verdict, usize> {
    let mut counts = BTreeMap::new();
    for &v in vs {
        *counts.entry(v).or_insert(0usize) += 1;
    }
    counts
}

fn consensus_from_counts(counts: &BTreeMap<Verdict, usize>, total: usize) -> (Verdict, f64) {
    let top = counts.values().copied().max().unwrap_or(0);
    let support = top as f64 / total as f64;
    match counts.iter().find(|(_, &c)| 2 * c > total) {
        Some((&v, _)) => (v, support),
        None => (Verdict::Ambiguous, support),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsensusRecord {
    pub prefix: Ipv4Net,
    pub vantage_id: String,
    /// Multiset of per-run verdicts.
    pub run_verdicts: BTreeMap<Verdict, usize>,
    pub consensus: Verdict,
    pub support: f64,
}

impl ConsensusRecord {
    pub fn from_runs(prefix: Ipv4Net, vantage_id: &str, runs: &[Verdict]) -> Result<Self, VerdictError> {
        let (consensus, support) = consensus(runs)?;
        Ok(ConsensusRecord {
            prefix,
            vantage_id: vantage_id.to_string(),
            run_verdicts: tally(runs),
            consensus,
            support,
        })
    }

    pub fn runs(&self) -> usize {
        self.run_verdicts.values().sum()
    }
}

/// Group observations by (vantage, prefix) and vote across runs.
///
/// All observations must probe the same port set. Output is sorted by
/// vantage then prefix.
pub fn consensus_from_observations(obs: &[ProbeObservation]) -> Result<Vec<ConsensusRecord>, VerdictError> {
    let mut groups: BTreeMap<(String, Ipv4Net), Vec<Verdict>> = BTreeMap::new();
    for o in obs {
        let v = classify_observation(o)?;
        groups.entry((o.vantage_id.clone(), o.prefix)).or_default().push(v);
    }
    groups
        .into_iter()
        .map(|((vantage, prefix), runs)| ConsensusRecord::from_runs(prefix, &vantage, &runs))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerdictDistribution {
    pub vantage_id: String,
    pub runs: usize,
    pub prefixes: usize,
    pub counts: BTreeMap<Verdict, usize>,
    pub fractions: BTreeMap<Verdict, f64>,
}

impl VerdictDistribution {
    pub fn pct(&self, v: Verdict) -> f64 {
        self.fractions.get(&v).copied().unwrap_or(0.0) * 100.0
    }

    pub fn count(&self, v: Verdict) -> usize {
        self.counts.get(&v).copied().unwrap_or(0)
    }
}

/// Consensus verdict counts and fractions for one vantage.
///
/// `runs` is the largest per-prefix run count among the records.
pub fn distribution(records: &[ConsensusRecord], vantage_id: &str) -> Result<VerdictDistribution, VerdictError> {
    distribution_with_runs(records, vantage_id, records.iter().map(|r| r.runs()).max().unwrap_or(0))
}

pub fn distribution_with_runs(
    records: &[ConsensusRecord],
    vantage_id: &str,
    runs: usize,
) -> Result<VerdictDistribution, VerdictError> {
    if records.is_empty() {
        return Err(VerdictError::NoRecords);
    }
    if let Some(r) = records.iter().find(|r| r.vantage_id != vantage_id) {
        return Err(VerdictError::MixedVantage(vantage_id.to_string(), r.vantage_id.clone()));
    }
    let mut counts: BTreeMap<Verdict, usize> = Verdict::ALL.iter().map(|&v| (v, 0)).collect();
    for r in records {
        *counts.get_mut(&r.consensus).expect("all verdicts present") += 1;
    }
    let total = records.len() as f64;
    let fractions = counts.iter().map(|(&v, &c)| (v, c as f64 / total)).collect();
    Ok(VerdictDistribution {
        vantage_id: vantage_id.to_string(),
        runs,
        prefixes: records.len(),
        counts,
        fractions,
    })
}

/// Split records per vantage and build one distribution each, sorted by id.
pub fn distributions_by_vantage(records: &[ConsensusRecord]) -> Result<Vec<VerdictDistribution>, VerdictError> {
    let mut by: BTreeMap<&str, Vec<ConsensusRecord>> = BTreeMap::new();
    for r in records {
        by.entry(r.vantage_id.as_str()).or_default().push(r.clone());
    }
    by.into_iter().map(|(v, recs)| distribution(&recs, v)).collect()
}

/// Max minus min fraction of `verdict` across vantages, in percentage points.
pub fn cross_vantage_spread(dists: &[VerdictDistribution], verdict: Verdict) -> Result<f64, VerdictError> {
    if dists.len() < 2 {
        return Err(VerdictError::TooFewVantages(dists.len()));
    }
    let pcts = dists.iter().map(|d| d.pct(verdict));
    let (lo, hi) = pcts.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p), hi.max(p)));
    Ok(hi - lo)
}

/// Per-prefix consensus CSV: `prefix,vantage,consensus,support,runs`.
pub fn write_consensus_csv<W: io::Write>(records: &[ConsensusRecord], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["prefix", "vantage", "consensus", "support", "runs"])?;
    for r in records {
        w.write_record([
            r.prefix.to_string(),
            r.vantage_id.clone(),
            r.consensus.to_string(),
            format!("{:.4}", r.support),
            r.runs().to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Read a consensus CSV back. Only the consensus verdict and run count are
/// recoverable, so `run_verdicts` holds the consensus verdict's share and
/// lumps the remainder under `AMBIGUOUS`.
pub fn read_consensus_csv<R: io::Read>(input: R) -> Result<Vec<ConsensusRecord>, Box<dyn std::error::Error + Send + Sync>> {
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(input);
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row?;
        let get = |i: usize| row.get(i).ok_or_else(|| format!("consensus CSV row has {} fields", row.len()));
        let prefix: Ipv4Net = get(0)?.parse()?;
        let vantage_id = get(1)?.to_string();
        let consensus: Verdict = get(2)?.parse()?;
        let support: f64 = get(3)?.parse()?;
        let runs: usize = get(4)?.parse()?;
        let agreeing = (support * runs as f64).round() as usize;
        let mut run_verdicts = BTreeMap::new();
        if agreeing > 0 {
            run_verdicts.insert(consensus, agreeing);
        }
        if runs > agreeing {
            *run_verdicts.entry(Verdict::Ambiguous).or_insert(0) += runs - agreeing;
        }
        out.push(ConsensusRecord {
            prefix,
            vantage_id,
            run_verdicts,
            consensus,
            support,
        });
    }
    Ok(out)
}

/// Summary CSV, one row per vantage with count and percentage per verdict.
pub fn write_summary_csv<W: io::Write>(dists: &[VerdictDistribution], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["vantage".to_string(), "runs".into(), "prefixes".into()];
    for v in Verdict::ALL {
        header.push(v.abbrev().to_lowercase());
        header.push(format!("{}_pct", v.abbrev().to_lowercase()));
    }
    w.write_record(&header)?;
    for d in dists {
        let mut row = vec![d.vantage_id.clone(), d.runs.to_string(), d.prefixes.to_string()];
        for v in Verdict::ALL {
            row.push(d.count(v).to_string());
            row.push(format!("{:.1}", d.pct(v)));
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
