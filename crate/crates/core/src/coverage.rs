//! BGP coverage of allocated address space and withdrawal between snapshots.

use std::collections::BTreeSet;
use std::io;

use chrono::NaiveDate;
use ipnet::Ipv4Net;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::registry::AllocatedPrefix;

/// Net coverage loss (percentage points) at or beyond which a diff counts
/// as a withdrawal event.
pub const DEFAULT_WITHDRAWAL_THRESHOLD_PP: f64 = 5.0;

#[derive(Debug, Error, PartialEq)]
pub enum CoverageError {
    #[error("allocated prefix set is empty; coverage fraction is undefined")]
    EmptyAllocation,
    #[error("allocated universes differ between {from} and {to}: symmetric difference of {size} prefixes")]
    UniverseMismatch { from: NaiveDate, to: NaiveDate, size: usize },
}

/// Binary trie over announced prefixes, keyed on prefix bits.
///
/// Nodes exist only on paths leading to an inserted prefix, so reaching a
/// node at depth `len(P)` while walking `P`'s bits means some announced
/// prefix is equal to or more specific than `P`.
#[derive(Debug, Clone)]
pub struct ContainmentIndex {
    nodes: Vec<Node>,
    len: usize,
}

#[derive(Debug, Clone, Copy, Default)]
struct Node {
    children: [u32; 2],
    terminal: bool,
}

const NIL: u32 = 0;

impl ContainmentIndex {
    pub fn new<'a>(prefixes: impl IntoIterator<Item = &'a Ipv4Net>) -> Self {
        let mut idx = ContainmentIndex {
            nodes: vec![Node::default()],
            len: 0,
        };
        for p in prefixes {
            idx.insert(p);
        }
        idx
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    fn insert(&mut self, p: &Ipv4Net) {
        let bits = u32::from(p.network());
        let mut at = 0usize;
        for depth in 0..p.prefix_len() {
            let b = ((bits >> (31 - depth)) & 1) as usize;
            let next = self.nodes[at].children[b];
            at = if next == NIL {
                self.nodes.push(Node::default());
                let id = (self.nodes.len() - 1) as u32;
                self.nodes[at].children[b] = id;
                id as usize
            } else {
                next as usize
            };
        }
        if !self.nodes[at].terminal {
            self.nodes[at].terminal = true;
            self.len += 1;
        }
    }

    /// True if an indexed prefix equals, contains, or is contained in `p`.
    pub fn covers(&self, p: &Ipv4Net) -> bool {
        if self.len == 0 {
            return false;
        }
        let bits = u32::from(p.network());
        let mut at = 0usize;
        for depth in 0..p.prefix_len() {
            if self.nodes[at].terminal {
                return true; // aggregate
            }
            let b = ((bits >> (31 - depth)) & 1) as usize;
            let next = self.nodes[at].children[b];
            if next == NIL {
                return false;
            }
            at = next as usize;
        }
        // exact match or a more-specific below this node
        true
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageResult {
    pub date: NaiveDate,
    pub announced_count: usize,
    pub allocated_count: usize,
    pub covered_count: usize,
    pub coverage_fraction: f64,
    pub covered: BTreeSet<AllocatedPrefix>,
    pub uncovered: BTreeSet<AllocatedPrefix>,
}

impl CoverageResult {
    pub fn coverage_pct(&self) -> f64 {
        self.coverage_fraction * 100.0
    }
}

/// Classify every allocated prefix as covered or uncovered by `announced`.
pub fn compute_coverage(
    allocated: &BTreeSet<AllocatedPrefix>,
    announced: &BTreeSet<Ipv4Net>,
    date: NaiveDate,
) -> Result<CoverageResult, CoverageError> {
    if allocated.is_empty() {
        return Err(CoverageError::EmptyAllocation);
    }
    let index = ContainmentIndex::new(announced);
    let (covered, uncovered): (BTreeSet<_>, BTreeSet<_>) =
        allocated.iter().copied().partition(|p| index.covers(&p.cidr));
    let covered_count = covered.len();
    Ok(CoverageResult {
        date,
        announced_count: announced.len(),
        allocated_count: allocated.len(),
        covered_count,
        coverage_fraction: covered_count as f64 / allocated.len() as f64,
        covered,
        uncovered,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WithdrawalDiff {
    pub from_date: NaiveDate,
    pub to_date: NaiveDate,
    pub lost: BTreeSet<AllocatedPrefix>,
    pub gained: BTreeSet<AllocatedPrefix>,
    pub net_pp: f64,
    pub threshold_pp: f64,
    pub withdrawal_event: bool,
}

impl WithdrawalDiff {
    /// Prefixes withdrawn net of re-announcements.
    pub fn net_lost(&self) -> i64 {
        self.lost.len() as i64 - self.gained.len() as i64
    }
}

pub fn diff_coverage(before: &CoverageResult, after: &CoverageResult) -> Result<WithdrawalDiff, CoverageError> {
    diff_coverage_with(before, after, DEFAULT_WITHDRAWAL_THRESHOLD_PP)
}

/// Compare two coverage results over the same allocated universe.
pub fn diff_coverage_with(
    before: &CoverageResult,
    after: &CoverageResult,
    threshold_pp: f64,
) -> Result<WithdrawalDiff, CoverageError> {
    let universe = |r: &CoverageResult| -> BTreeSet<Ipv4Net> {
        r.covered.iter().chain(r.uncovered.iter()).map(|p| p.cidr).collect()
    };
    let (u_before, u_after) = (universe(before), universe(after));
    if u_before != u_after {
        return Err(CoverageError::UniverseMismatch {
            from: before.date,
            to: after.date,
            size: u_before.symmetric_difference(&u_after).count(),
        });
    }
    let after_covered: BTreeSet<Ipv4Net> = after.covered.iter().map(|p| p.cidr).collect();
    let before_covered: BTreeSet<Ipv4Net> = before.covered.iter().map(|p| p.cidr).collect();
    let lost = before
        .covered
        .iter()
        .filter(|p| !after_covered.contains(&p.cidr))
        .copied()
        .collect();
    let gained = after
        .covered
        .iter()
        .filter(|p| !before_covered.contains(&p.cidr))
        .copied()
        .collect();
    let net_pp = (after.coverage_fraction - before.coverage_fraction) * 100.0;
    Ok(WithdrawalDiff {
        from_date: before.date,
        to_date: after.date,
        lost,
        gained,
        net_pp,
        threshold_pp,
        withdrawal_event: net_pp <= -threshold_pp,
    })
}

/// One row of the coverage table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageRow {
    pub date: NaiveDate,
    pub event: String,
    pub phase: String,
    pub announced: usize,
    pub covered: usize,
    pub coverage_pct: f64,
}

impl CoverageRow {
    pub fn from_result(r: &CoverageResult, event: &str, phase: &str) -> Self {
        CoverageRow {
            date: r.date,
            event: event.to_string(),
            phase: phase.to_string(),
            announced: r.announced_count,
            covered: r.covered_count,
            coverage_pct: r.coverage_pct(),
        }
    }
}

/// CSV with columns `date,event,phase,announced,covered,coverage_pct`.
pub fn write_coverage_csv<W: io::Write>(rows: &[CoverageRow], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["date", "event", "phase", "announced", "covered", "coverage_pct"])?;
    for r in rows {
        w.write_record([
            r.date.to_string(),
            r.event.clone(),
            r.phase.clone(),
            r.announced.to_string(),
            r.covered.to_string(),
            format!("{:.1}", r.coverage_pct),
        ])?;
    }
    w.flush()?;
    Ok(())
}
