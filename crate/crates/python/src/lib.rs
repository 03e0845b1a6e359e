//! Python bindings for shutdownlens.
//!
//! Prefixes travel as CIDR strings, dates as `YYYY-MM-DD` strings and
//! verdicts/outcomes as their upper-case names. Library errors raise
//! `ValueError`; unreadable files raise `OSError`.

use std::collections::{BTreeSet, HashMap};
use std::fs::File;
use std::io::BufReader;
use std::net::Ipv4Addr;

use chrono::NaiveDate;
use ipnet::Ipv4Net;
use pyo3::exceptions::{PyOSError, PyValueError};
use pyo3::prelude::*;

use shutdownlens_core::ascomp::{self, Category};
use shutdownlens_core::coverage::compute_coverage;
use shutdownlens_core::passive::{self, BaselineBand, CountBasis, HostSnapshot, PendingSplit};
use shutdownlens_core::prober::{self, OutcomeKind};
use shutdownlens_core::registry::{self, AllocatedPrefix};
use shutdownlens_core::rib_ingest::{self, RibSnapshot};
use shutdownlens_core::verdicts::{self, Verdict};

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn date(s: &str) -> PyResult<NaiveDate> {
    NaiveDate::parse_from_str(s, "%Y-%m-%d").map_err(|e| value_err(format!("invalid date {s:?}: {e}")))
}

fn net(s: &str) -> PyResult<Ipv4Net> {
    s.parse::<Ipv4Net>().map_err(|_| value_err(format!("invalid IPv4 prefix {s:?}")))
}

fn open(path: &str) -> PyResult<File> {
    File::open(path).map_err(|e| PyOSError::new_err(format!("{path}: {e}")))
}

fn outcome(s: &str) -> PyResult<OutcomeKind> {
    [OutcomeKind::SynAck, OutcomeKind::Rst, OutcomeKind::Timeout, OutcomeKind::IcmpUnreachable]
        .into_iter()
        .find(|k| k.as_str().eq_ignore_ascii_case(s))
        .ok_or_else(|| value_err(format!("unknown outcome {s:?}")))
}

/// Address probed inside a prefix.
#[pyfunction]
fn derive_target(prefix: &str) -> PyResult<String> {
    Ok(prober::derive_target(net(prefix)?).target_address.to_string())
}

/// Verdict for one run's outcomes on ports 80, 443 and 179.
#[pyfunction]
fn classify(o80: &str, o443: &str, o179: &str) -> PyResult<&'static str> {
    Ok(verdicts::classify(outcome(o80)?, outcome(o443)?, outcome(o179)?).as_str())
}

/// Strict-majority consensus: `(verdict, support)`.
#[pyfunction]
fn consensus(run_verdicts: Vec<String>) -> PyResult<(&'static str, f64)> {
    let vs: Vec<Verdict> = run_verdicts.iter().map(|v| v.parse().map_err(value_err)).collect::<PyResult<_>>()?;
    let (v, support) = verdicts::consensus(&vs).map_err(value_err)?;
    Ok((v.as_str(), support))
}

/// Max minus min percentage of `verdict` across vantages, each given as a
/// list of consensus verdicts.
#[pyfunction]
fn cross_vantage_spread(by_vantage: HashMap<String, Vec<String>>, verdict: &str) -> PyResult<f64> {
    let target: Verdict = verdict.parse().map_err(value_err)?;
    let mut names: Vec<&String> = by_vantage.keys().collect();
    names.sort();
    let mut dists = Vec::new();
    for name in names {
        let recs = by_vantage[name]
            .iter()
            .enumerate()
            .map(|(i, v)| {
                let prefix = Ipv4Net::new(Ipv4Addr::from(i as u32), 32).expect("host route");
                verdicts::ConsensusRecord::from_runs(prefix, name, &[v.parse().map_err(value_err)?]).map_err(value_err)
            })
            .collect::<PyResult<Vec<_>>>()?;
        dists.push(verdicts::distribution(&recs, name).map_err(value_err)?);
    }
    verdicts::cross_vantage_spread(&dists, target).map_err(value_err)
}

/// Minimal aligned CIDR cover of `count` addresses from `start`.
#[pyfunction]
fn decompose(start: &str, count: u32) -> PyResult<Vec<String>> {
    let addr: Ipv4Addr = start.parse().map_err(|_| value_err(format!("invalid IPv4 address {start:?}")))?;
    registry::decompose(u32::from(addr), count)
        .map(|v| v.iter().map(|n| n.to_string()).collect())
        .ok_or_else(|| value_err(format!("{count} addresses from {start} is empty or runs past 255.255.255.255")))
}

/// Allocated IPv4 prefixes and ASNs of a country in a delegated-extended file.
#[pyclass(module = "shutdownlens", frozen)]
struct Delegation {
    #[pyo3(get)]
    prefixes: Vec<String>,
    #[pyo3(get)]
    asns: Vec<u32>,
    #[pyo3(get)]
    rejects: Vec<(usize, String)>,
    allocated: BTreeSet<AllocatedPrefix>,
}

#[pyfunction]
#[pyo3(signature = (path, country, snapshot_date = "1970-01-01", statuses = None))]
fn parse_delegated(path: &str, country: &str, snapshot_date: &str, statuses: Option<Vec<String>>) -> PyResult<Delegation> {
    let d = registry::parse_delegated(BufReader::new(open(path)?), date(snapshot_date)?)
        .map_err(|e| PyOSError::new_err(format!("{path}: {e}")))?;
    let statuses: BTreeSet<String> = match statuses {
        Some(s) => s.into_iter().collect(),
        None => registry::default_statuses(),
    };
    let set = registry::country_prefixes(&d.records, country, &statuses);
    Ok(Delegation {
        prefixes: set.prefixes.iter().map(|p| p.cidr.to_string()).collect(),
        asns: registry::country_asns(&d.records, country, &statuses).into_iter().collect(),
        rejects: d.rejects.iter().map(|r| (r.line, r.reason.clone())).collect(),
        allocated: set.prefixes,
    })
}

#[pymethods]
impl Delegation {
    fn __len__(&self) -> usize {
        self.allocated.len()
    }

    fn __repr__(&self) -> String {
        format!("<Delegation {} prefixes, {} ASNs>", self.allocated.len(), self.asns.len())
    }

    /// Coverage of this allocation by a parsed RIB's announcements from this country's ASNs.
    fn coverage(&self, rib: &Rib) -> PyResult<Coverage> {
        let asns: BTreeSet<u32> = self.asns.iter().copied().collect();
        let announced = rib_ingest::originated_prefixes(&rib.inner, &asns);
        let r = compute_coverage(&self.allocated, &announced, rib.inner.capture_date).map_err(value_err)?;
        Ok(Coverage::from(r))
    }
}

/// A parsed RIB snapshot.
#[pyclass(module = "shutdownlens", frozen)]
struct Rib {
    inner: RibSnapshot,
}

#[pyfunction]
fn parse_bview(path: &str, capture_date: &str) -> PyResult<Rib> {
    let inner = rib_ingest::parse_bview(open(path)?, date(capture_date)?).map_err(|e| value_err(format!("{path}: {e}")))?;
    Ok(Rib { inner })
}

#[pymethods]
impl Rib {
    #[getter]
    fn peer_count(&self) -> usize {
        self.inner.peer_count
    }

    #[getter]
    fn capture_date(&self) -> String {
        self.inner.capture_date.to_string()
    }

    fn __len__(&self) -> usize {
        self.inner.entries.len()
    }

    /// Prefixes whose origin set includes one of `asns`.
    fn originated(&self, asns: Vec<u32>) -> Vec<String> {
        let asns: BTreeSet<u32> = asns.into_iter().collect();
        rib_ingest::originated_prefixes(&self.inner, &asns).iter().map(|n| n.to_string()).collect()
    }

    /// `(prefix, as_path, peer_index)` for every entry.
    fn entries(&self) -> Vec<(String, Vec<u32>, u16)> {
        self.inner
            .entries
            .iter()
            .map(|e| (e.prefix.to_string(), e.path.asns().collect(), e.peer_index))
            .collect()
    }
}

#[pyclass(module = "shutdownlens", frozen)]
struct Coverage {
    #[pyo3(get)]
    date: String,
    #[pyo3(get)]
    announced_count: usize,
    #[pyo3(get)]
    allocated_count: usize,
    #[pyo3(get)]
    covered_count: usize,
    #[pyo3(get)]
    coverage_pct: f64,
    #[pyo3(get)]
    covered: Vec<String>,
    #[pyo3(get)]
    uncovered: Vec<String>,
}

impl From<shutdownlens_core::coverage::CoverageResult> for Coverage {
    fn from(r: shutdownlens_core::coverage::CoverageResult) -> Self {
        Coverage {
            date: r.date.to_string(),
            announced_count: r.announced_count,
            allocated_count: r.allocated_count,
            covered_count: r.covered_count,
            coverage_pct: r.coverage_pct(),
            covered: r.covered.iter().map(|p| p.cidr.to_string()).collect(),
            uncovered: r.uncovered.iter().map(|p| p.cidr.to_string()).collect(),
        }
    }
}

#[pymethods]
impl Coverage {
    fn __repr__(&self) -> String {
        format!("<Coverage {} {}/{} = {:.1}%>", self.date, self.covered_count, self.allocated_count, self.coverage_pct)
    }
}

/// Which `allocated` prefixes have a covering announcement in `announced`.
#[pyfunction]
#[pyo3(signature = (allocated, announced, on_date = "1970-01-01"))]
fn coverage(allocated: Vec<String>, announced: Vec<String>, on_date: &str) -> PyResult<Coverage> {
    let allocated: BTreeSet<AllocatedPrefix> = allocated
        .iter()
        .map(|s| {
            let cidr = net(s)?.trunc();
            Ok(AllocatedPrefix {
                cidr,
                source_start: cidr.network(),
                source_count: (1u64 << (32 - cidr.prefix_len())).min(u32::MAX as u64) as u32,
            })
        })
        .collect::<PyResult<_>>()?;
    let announced: BTreeSet<Ipv4Net> = announced.iter().map(|s| net(s).map(|n| n.trunc())).collect::<PyResult<_>>()?;
    Ok(compute_coverage(&allocated, &announced, date(on_date)?).map_err(value_err)?.into())
}

/// Baseline band built from `(date, total, pending)` rows.
#[pyclass(module = "shutdownlens", frozen)]
struct Baseline {
    inner: BaselineBand,
}

fn snapshots(rows: Vec<(String, u64, u64)>) -> PyResult<Vec<HostSnapshot>> {
    let mut out: Vec<HostSnapshot> = rows
        .into_iter()
        .map(|(d, total, pending)| HostSnapshot::new(date(&d)?, total, pending, "").map_err(value_err))
        .collect::<PyResult<_>>()?;
    out.sort_by_key(|s| s.date);
    Ok(out)
}

#[pymethods]
impl Baseline {
    #[new]
    fn new(rows: Vec<(String, u64, u64)>, reference_date: &str) -> PyResult<Self> {
        let inner = passive::build_baseline(&snapshots(rows)?, date(reference_date)?).map_err(value_err)?;
        Ok(Baseline { inner })
    }

    #[getter]
    fn reference(&self) -> u64 {
        self.inner.reference
    }

    #[getter]
    fn low(&self) -> u64 {
        self.inner.low
    }

    #[getter]
    fn high(&self) -> u64 {
        self.inner.high
    }

    fn __repr__(&self) -> String {
        format!("<Baseline reference {} band {}..{}>", self.inner.reference, self.inner.low, self.inner.high)
    }
}

/// Signed percent change of `active` against the baseline reference.
#[pyfunction]
fn reduction(active: u64, baseline: &Baseline) -> PyResult<f64> {
    passive::reduction(active, &baseline.inner).map_err(value_err)
}

/// `(active_fraction, pending_fraction, carryover)`, or None for an empty snapshot.
#[pyfunction]
#[pyo3(signature = (total, pending, carryover_threshold = passive::DEFAULT_CARRYOVER_THRESHOLD))]
fn decompose_pending(total: u64, pending: u64, carryover_threshold: f64) -> PyResult<Option<(f64, f64, bool)>> {
    let s = HostSnapshot::new(NaiveDate::MIN, total, pending, "").map_err(value_err)?;
    Ok(match passive::decompose_pending_with(&s, carryover_threshold) {
        PendingSplit::Split {
            active_fraction,
            pending_fraction,
            carryover,
        } => Some((active_fraction, pending_fraction, carryover)),
        PendingSplit::EmptySnapshot => None,
    })
}

/// First date whose count falls below `threshold × reference`.
/// `basis` is `"active"` or `"total"`.
#[pyfunction]
#[pyo3(signature = (rows, baseline, threshold = passive::DEFAULT_ONSET_THRESHOLD, basis = "active"))]
fn detect_onset(rows: Vec<(String, u64, u64)>, baseline: &Baseline, threshold: f64, basis: &str) -> PyResult<Option<String>> {
    let basis = match basis {
        "active" => CountBasis::Active,
        "total" => CountBasis::Total,
        other => return Err(value_err(format!("basis must be \"active\" or \"total\", got {other:?}"))),
    };
    let onset = passive::detect_onset(&snapshots(rows)?, &baseline.inner, threshold, basis).map_err(value_err)?;
    Ok(onset.map(|o| o.date.to_string()))
}

/// `(category, source)` for one AS. Rules and overrides are JSON text.
#[pyfunction]
#[pyo3(signature = (asn, name, metadata_category = None, rules_json = None, overrides_json = None))]
fn categorize(
    asn: u32,
    name: &str,
    metadata_category: Option<&str>,
    rules_json: Option<&str>,
    overrides_json: Option<&str>,
) -> PyResult<(&'static str, String)> {
    let rules = match rules_json {
        Some(j) => ascomp::load_keyword_rules(j).map_err(value_err)?,
        None => Vec::new(),
    };
    let overrides: HashMap<u32, Category> = match overrides_json {
        Some(j) => ascomp::load_overrides(j).map_err(value_err)?,
        None => HashMap::new(),
    };
    let r = ascomp::categorize(asn, name, metadata_category, &rules, &overrides);
    Ok((r.category.as_str(), format!("{:?}", r.source).to_lowercase()))
}

#[pymodule(name = "shutdownlens")]
fn shutdownlens_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<Delegation>()?;
    m.add_class::<Rib>()?;
    m.add_class::<Coverage>()?;
    m.add_class::<Baseline>()?;
    m.add_function(wrap_pyfunction!(derive_target, m)?)?;
    m.add_function(wrap_pyfunction!(classify, m)?)?;
    m.add_function(wrap_pyfunction!(consensus, m)?)?;
    m.add_function(wrap_pyfunction!(cross_vantage_spread, m)?)?;
    m.add_function(wrap_pyfunction!(decompose, m)?)?;
    m.add_function(wrap_pyfunction!(parse_delegated, m)?)?;
    m.add_function(wrap_pyfunction!(parse_bview, m)?)?;
    m.add_function(wrap_pyfunction!(coverage, m)?)?;
    m.add_function(wrap_pyfunction!(reduction, m)?)?;
    m.add_function(wrap_pyfunction!(decompose_pending, m)?)?;
    m.add_function(wrap_pyfunction!(detect_onset, m)?)?;
    m.add_function(wrap_pyfunction!(categorize, m)?)?;
    Ok(())
}
