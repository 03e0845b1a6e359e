//! Passive-scan host-count time series.
//!
//! Headline scan counts include hosts waiting out the provider's eviction
//! window, so onset and severity are computed on *active* hosts (total
//! minus pending). Missing dates are annotated, never interpolated.

use std::collections::BTreeMap;
use std::io;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_ONSET_THRESHOLD: f64 = 0.5;
pub const DEFAULT_CARRYOVER_THRESHOLD: f64 = 0.80;
pub const DEFAULT_INFLATION_RATIO: f64 = 1.5;
pub const MIN_BASELINE_SNAPSHOTS: usize = 3;

#[derive(Debug, Error, PartialEq)]
pub enum PassiveError {
    #[error("pending count {pending} exceeds total {total} on {date}")]
    PendingExceedsTotal { date: NaiveDate, total: u64, pending: u64 },
    #[error("baseline needs at least {MIN_BASELINE_SNAPSHOTS} snapshots, got {0}")]
    TooFewBaselineSnapshots(usize),
    #[error("reference date {0} is not among the baseline snapshots")]
    ReferenceMissing(NaiveDate),
    #[error("baseline reference count is zero")]
    ZeroReference,
    #[error("series is not sorted by date (at {0})")]
    Unsorted(NaiveDate),
    #[error("line {line}: {reason}")]
    Csv { line: usize, reason: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HostSnapshot {
    pub date: NaiveDate,
    pub total: u64,
    pub pending: u64,
    pub country: String,
}

impl HostSnapshot {
    pub fn new(date: NaiveDate, total: u64, pending: u64, country: &str) -> Result<Self, PassiveError> {
        if pending > total {
            return Err(PassiveError::PendingExceedsTotal { date, total, pending });
        }
        Ok(HostSnapshot {
            date,
            total,
            pending,
            country: country.to_string(),
        })
    }

    /// Build from a total and an active count.
    pub fn from_active(date: NaiveDate, total: u64, active: u64, country: &str) -> Result<Self, PassiveError> {
        if active > total {
            return Err(PassiveError::PendingExceedsTotal { date, total, pending: 0 });
        }
        Self::new(date, total, total - active, country)
    }

    pub fn active(&self) -> u64 {
        self.total - self.pending
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineBand {
    pub low: u64,
    pub high: u64,
    pub reference: u64,
    pub reference_date: NaiveDate,
    pub source_dates: Vec<NaiveDate>,
}

impl BaselineBand {
    pub fn contains(&self, total: u64) -> bool {
        (self.low..=self.high).contains(&total)
    }
}

/// Band over snapshot totals; the reference is the total on `reference_date`.
pub fn build_baseline(snapshots: &[HostSnapshot], reference_date: NaiveDate) -> Result<BaselineBand, PassiveError> {
    if snapshots.len() < MIN_BASELINE_SNAPSHOTS {
        return Err(PassiveError::TooFewBaselineSnapshots(snapshots.len()));
    }
    let reference = snapshots
        .iter()
        .find(|s| s.date == reference_date)
        .ok_or(PassiveError::ReferenceMissing(reference_date))?
        .total;
    let low = snapshots.iter().map(|s| s.total).min().expect("non-empty");
    let high = snapshots.iter().map(|s| s.total).max().expect("non-empty");
    let mut source_dates: Vec<NaiveDate> = snapshots.iter().map(|s| s.date).collect();
    source_dates.sort();
    Ok(BaselineBand {
        low,
        high,
        reference,
        reference_date,
        source_dates,
    })
}

/// Signed change of `active` against the band reference, in percent.
///
/// Callers round to one decimal for reporting.
pub fn reduction(active: u64, band: &BaselineBand) -> Result<f64, PassiveError> {
    if band.reference == 0 {
        return Err(PassiveError::ZeroReference);
    }
    Ok(-100.0 * (1.0 - active as f64 / band.reference as f64))
}

/// Round to one decimal place, the reporting precision for percentages.
pub fn round1(x: f64) -> f64 {
    let r = (x * 10.0).round() / 10.0;
    if r == 0.0 {
        0.0
    } else {
        r
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum PendingSplit {
    Split {
        active_fraction: f64,
        pending_fraction: f64,
        carryover: bool,
    },
    EmptySnapshot,
}

pub fn decompose_pending(s: &HostSnapshot) -> PendingSplit {
    decompose_pending_with(s, DEFAULT_CARRYOVER_THRESHOLD)
}

/// Active and pending fractions of the total; `carryover` marks dates whose
/// visible count is dominated by the eviction queue.
pub fn decompose_pending_with(s: &HostSnapshot, carryover_threshold: f64) -> PendingSplit {
    if s.total == 0 {
        return PendingSplit::EmptySnapshot;
    }
    let pending_fraction = s.pending as f64 / s.total as f64;
    PendingSplit::Split {
        active_fraction: 1.0 - pending_fraction,
        pending_fraction,
        carryover: pending_fraction >= carryover_threshold,
    }
}

/// Which count onset detection looks at.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CountBasis {
    Active,
    Total,
}

impl CountBasis {
    fn of(self, s: &HostSnapshot) -> u64 {
        match self {
            CountBasis::Active => s.active(),
            CountBasis::Total => s.total,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Onset {
    pub date: NaiveDate,
    /// Missing days immediately before the onset, as an inclusive range.
    pub gap: Option<(NaiveDate, NaiveDate)>,
}

fn check_sorted(series: &[HostSnapshot]) -> Result<(), PassiveError> {
    match series.windows(2).find(|w| w[1].date <= w[0].date) {
        Some(w) => Err(PassiveError::Unsorted(w[1].date)),
        None => Ok(()),
    }
}

/// First date whose count falls below `threshold × reference`.
pub fn detect_onset(
    series: &[HostSnapshot],
    band: &BaselineBand,
    threshold: f64,
    basis: CountBasis,
) -> Result<Option<Onset>, PassiveError> {
    check_sorted(series)?;
    let cutoff = threshold * band.reference as f64;
    let Some(i) = series.iter().position(|s| (basis.of(s) as f64) < cutoff) else {
        return Ok(None);
    };
    let date = series[i].date;
    let gap = i
        .checked_sub(1)
        .map(|p| series[p].date)
        .and_then(|prev| {
            let first_missing = prev.succ_opt()?;
            let last_missing = date.pred_opt()?;
            (first_missing <= last_missing).then_some((first_missing, last_missing))
        });
    Ok(Some(Onset { date, gap }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnomalyWindow {
    pub start: NaiveDate,
    pub end: NaiveDate,
    pub peak_ratio: f64,
    pub peak_date: NaiveDate,
}

/// Maximal runs of consecutive series points where `total / reference`
/// reaches `ratio_threshold` while the control country's total on the same
/// date stays inside its own band. A date with no control observation fails
/// the control gate.
pub fn detect_inflation(
    series: &[HostSnapshot],
    band: &BaselineBand,
    control: &[HostSnapshot],
    control_band: &BaselineBand,
    ratio_threshold: f64,
) -> Result<Vec<AnomalyWindow>, PassiveError> {
    check_sorted(series)?;
    if band.reference == 0 {
        return Err(PassiveError::ZeroReference);
    }
    let control: BTreeMap<NaiveDate, u64> = control.iter().map(|s| (s.date, s.total)).collect();
    let ratio = |s: &HostSnapshot| s.total as f64 / band.reference as f64;
    let flagged = |s: &HostSnapshot| {
        ratio(s) >= ratio_threshold && control.get(&s.date).is_some_and(|&c| control_band.contains(c))
    };

    let mut windows = Vec::new();
    let mut i = 0;
    while i < series.len() {
        if !flagged(&series[i]) {
            i += 1;
            continue;
        }
        let start = i;
        while i < series.len() && flagged(&series[i]) {
            i += 1;
        }
        let run = &series[start..i];
        let peak = run
            .iter()
            .max_by(|a, b| ratio(a).total_cmp(&ratio(b)))
            .expect("non-empty run");
        windows.push(AnomalyWindow {
            start: run[0].date,
            end: run[run.len() - 1].date,
            peak_ratio: ratio(peak),
            peak_date: peak.date,
        });
    }
    Ok(windows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PassiveConfig {
    pub onset_threshold: f64,
    pub carryover_threshold: f64,
    pub inflation_ratio: f64,
}

impl Default for PassiveConfig {
    fn default() -> Self {
        PassiveConfig {
            onset_threshold: DEFAULT_ONSET_THRESHOLD,
            carryover_threshold: DEFAULT_CARRYOVER_THRESHOLD,
            inflation_ratio: DEFAULT_INFLATION_RATIO,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DateRow {
    pub date: NaiveDate,
    pub total: u64,
    pub active: u64,
    pub pending_pct: Option<f64>,
    pub reduction_pct: f64,
    pub carryover: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventAnalysis {
    pub country: String,
    pub band: BaselineBand,
    pub onset: Option<Onset>,
    /// Onset computed on headline totals, for comparison.
    pub total_onset: Option<Onset>,
    pub floor_date: Option<NaiveDate>,
    pub floor_active: Option<u64>,
    pub reduction_pp: BTreeMap<NaiveDate, f64>,
    pub carryover_dates: Vec<NaiveDate>,
    pub anomaly_windows: Vec<AnomalyWindow>,
    pub rows: Vec<DateRow>,
}

/// Full analysis of one series.
///
/// The event window runs from the active-count onset to the end of the
/// series; the floor is the minimum active count inside it. `key_dates`
/// restricts which dates get a reduction entry (all dates when empty).
/// Inflation detection runs only when a control series and band are given.
pub fn analyze(
    series: &[HostSnapshot],
    band: &BaselineBand,
    control: Option<(&[HostSnapshot], &BaselineBand)>,
    key_dates: &[NaiveDate],
    cfg: &PassiveConfig,
) -> Result<EventAnalysis, PassiveError> {
    check_sorted(series)?;
    let onset = detect_onset(series, band, cfg.onset_threshold, CountBasis::Active)?;
    let total_onset = detect_onset(series, band, cfg.onset_threshold, CountBasis::Total)?;

    let floor = onset.as_ref().and_then(|o| {
        series
            .iter()
            .filter(|s| s.date >= o.date)
            .min_by_key(|s| (s.active(), s.date))
    });

    let mut rows = Vec::with_capacity(series.len());
    let mut reduction_pp = BTreeMap::new();
    let mut carryover_dates = Vec::new();
    for s in series {
        let red = reduction(s.active(), band)?;
        let (pending_pct, carry) = match decompose_pending_with(s, cfg.carryover_threshold) {
            PendingSplit::Split {
                pending_fraction,
                carryover,
                ..
            } => (Some(pending_fraction * 100.0), carryover),
            PendingSplit::EmptySnapshot => (None, false),
        };
        if carry {
            carryover_dates.push(s.date);
        }
        if key_dates.is_empty() || key_dates.contains(&s.date) {
            reduction_pp.insert(s.date, red);
        }
        rows.push(DateRow {
            date: s.date,
            total: s.total,
            active: s.active(),
            pending_pct,
            reduction_pct: red,
            carryover: carry,
        });
    }

    let anomaly_windows = match control {
        Some((c, cb)) => detect_inflation(series, band, c, cb, cfg.inflation_ratio)?,
        None => Vec::new(),
    };

    Ok(EventAnalysis {
        country: series.first().map(|s| s.country.clone()).unwrap_or_default(),
        band: band.clone(),
        onset,
        total_onset,
        floor_date: floor.map(|s| s.date),
        floor_active: floor.map(|s| s.active()),
        reduction_pp,
        carryover_dates,
        anomaly_windows,
        rows,
    })
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SeriesFile {
    pub snapshots: Vec<HostSnapshot>,
    /// Lines whose pending column was blank (treated as zero).
    pub blank_pending_lines: Vec<usize>,
}

impl SeriesFile {
    pub fn for_country(&self, country: &str) -> Vec<HostSnapshot> {
        self.snapshots
            .iter()
            .filter(|s| s.country.eq_ignore_ascii_case(country))
            .cloned()
            .collect()
    }
}

/// Read `date,total,pending,country` CSV. Output is sorted by date.
pub fn read_series_csv<R: io::Read>(input: R) -> Result<SeriesFile, PassiveError> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(input);
    let mut out = SeriesFile::default();
    for (i, row) in rdr.records().enumerate() {
        let line = i + 2;
        let err = |reason: String| PassiveError::Csv { line, reason };
        let row = row.map_err(|e| err(e.to_string()))?;
        if row.len() < 4 {
            return Err(err(format!("expected 4 columns, found {}", row.len())));
        }
        let date: NaiveDate = row[0].parse().map_err(|_| err(format!("invalid date {:?}", &row[0])))?;
        let total: u64 = row[1].parse().map_err(|_| err(format!("invalid total {:?}", &row[1])))?;
        let pending: u64 = if row[2].is_empty() {
            out.blank_pending_lines.push(line);
            0
        } else {
            row[2].parse().map_err(|_| err(format!("invalid pending {:?}", &row[2])))?
        };
        let snap = HostSnapshot::new(date, total, pending, &row[3]).map_err(|e| err(e.to_string()))?;
        out.snapshots.push(snap);
    }
    out.snapshots.sort_by(|a, b| (a.date, &a.country).cmp(&(b.date, &b.country)));
    Ok(out)
}

pub fn write_series_csv<W: io::Write>(series: &[HostSnapshot], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["date", "total", "pending", "country"])?;
    for s in series {
        w.write_record([s.date.to_string(), s.total.to_string(), s.pending.to_string(), s.country.clone()])?;
    }
    w.flush()?;
    Ok(())
}

/// Per-date table: `date,censys_count,active_hosts,pending_pct,reduction_pct,carryover`.
pub fn write_table_csv<W: io::Write>(analysis: &EventAnalysis, out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["date", "phase", "censys_count", "active_hosts", "pending_pct", "reduction_pct", "carryover"])?;
    let onset = analysis.onset.as_ref().map(|o| o.date);
    let total_onset = analysis.total_onset.as_ref().map(|o| o.date);
    for r in &analysis.rows {
        let phase = if Some(r.date) == onset {
            "onset"
        } else if Some(r.date) == analysis.floor_date {
            "floor"
        } else if Some(r.date) == total_onset {
            "total-count onset"
        } else if onset.is_some_and(|o| r.date < o) {
            "pre-onset"
        } else if onset.is_some() {
            "event"
        } else {
            "no onset"
        };
        w.write_record([
            r.date.to_string(),
            phase.to_string(),
            r.total.to_string(),
            r.active.to_string(),
            r.pending_pct.map(|p| format!("{p:.1}")).unwrap_or_default(),
            format!("{:.1}", round1(r.reduction_pct)),
            r.carryover.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
