//! AS categorization and per-category host composition.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::io;

use chrono::NaiveDate;
use regex::{Regex, RegexBuilder};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_EXEMPTION_THRESHOLD: f64 = 0.95;

#[derive(Debug, Error)]
pub enum AsCompError {
    #[error("no AS record for ASN(s) {0:?}")]
    UnknownAsns(Vec<u32>),
    #[error("attribution needs two distinct dates, got {0} twice")]
    SameDates(NaiveDate),
    #[error("no host counts for {0}")]
    MissingDate(NaiveDate),
    #[error("invalid keyword pattern {pattern:?}: {source}")]
    Pattern { pattern: String, source: regex::Error },
    #[error("line {line}: {reason}")]
    Csv { line: usize, reason: String },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    StateTelecom,
    Mobile,
    MobileInfra,
    CommercialIsp,
    Academic,
    Cdn,
    Other,
}

impl Category {
    pub const ALL: [Category; 7] = [
        Category::StateTelecom,
        Category::Mobile,
        Category::MobileInfra,
        Category::CommercialIsp,
        Category::Academic,
        Category::Cdn,
        Category::Other,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Category::StateTelecom => "state_telecom",
            Category::Mobile => "mobile",
            Category::MobileInfra => "mobile_infra",
            Category::CommercialIsp => "commercial_isp",
            Category::Academic => "academic",
            Category::Cdn => "cdn",
            Category::Other => "other",
        }
    }

    /// Map a metadata label onto a category. Unrecognized labels give `None`.
    pub fn from_label(label: &str) -> Option<Self> {
        let l = label.trim().to_ascii_lowercase().replace(['-', ' '], "_");
        let c = match l.as_str() {
            "state_telecom" | "government" | "state" => Category::StateTelecom,
            "mobile" | "cellular" => Category::Mobile,
            "mobile_infra" | "mobile_infrastructure" => Category::MobileInfra,
            "commercial_isp" | "isp" => Category::CommercialIsp,
            "academic" | "education" | "university" | "research" => Category::Academic,
            "cdn" | "hosting" | "content" | "cloud" => Category::Cdn,
            "other" | "business" => Category::Other,
            _ => return None,
        };
        Some(c)
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CategorySource {
    Metadata,
    Keyword,
    Override,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AsRecord {
    pub asn: u32,
    pub name: String,
    pub category: Category,
    pub source: CategorySource,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KeywordRuleSpec {
    pub pattern: String,
    pub category: Category,
}

/// A compiled, case-insensitive keyword rule.
#[derive(Debug, Clone)]
pub struct KeywordRule {
    pub pattern: Regex,
    pub category: Category,
}

impl KeywordRule {
    pub fn new(pattern: &str, category: Category) -> Result<Self, AsCompError> {
        let re = RegexBuilder::new(pattern)
            .case_insensitive(true)
            .build()
            .map_err(|source| AsCompError::Pattern {
                pattern: pattern.to_string(),
                source,
            })?;
        Ok(KeywordRule { pattern: re, category })
    }
}

/// Compile keyword rules from JSON: `[{"pattern": "...", "category": "..."}]`.
pub fn load_keyword_rules(json: &str) -> Result<Vec<KeywordRule>, AsCompError> {
    let specs: Vec<KeywordRuleSpec> = serde_json::from_str(json)?;
    specs.iter().map(|s| KeywordRule::new(&s.pattern, s.category)).collect()
}

/// Override file: `{"205585": "cdn", ...}` (ASN keys as strings).
pub fn load_overrides(json: &str) -> Result<HashMap<u32, Category>, AsCompError> {
    #[derive(Deserialize)]
    struct Entry {
        category: Category,
    }
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Value {
        Bare(Category),
        Full(Entry),
    }
    let raw: BTreeMap<String, Value> = serde_json::from_str(json)?;
    raw.into_iter()
        .map(|(k, v)| {
            let asn = k
                .trim_start_matches("AS")
                .parse::<u32>()
                .map_err(|_| AsCompError::Csv {
                    line: 0,
                    reason: format!("override key {k:?} is not an ASN"),
                })?;
            let c = match v {
                Value::Bare(c) => c,
                Value::Full(e) => e.category,
            };
            Ok((asn, c))
        })
        .collect()
}

/// Assign a category to one AS.
///
/// An override always wins. A recognized metadata label comes next; only
/// when metadata is absent or unrecognized are the keyword rules consulted,
/// first match wins. Anything left over is `other`.
pub fn categorize(
    asn: u32,
    name: &str,
    metadata_category: Option<&str>,
    keyword_rules: &[KeywordRule],
    overrides: &HashMap<u32, Category>,
) -> AsRecord {
    let (category, source) = if let Some(&c) = overrides.get(&asn) {
        (c, CategorySource::Override)
    } else if let Some(c) = metadata_category.and_then(Category::from_label) {
        (c, CategorySource::Metadata)
    } else if let Some(rule) = keyword_rules.iter().find(|r| r.pattern.is_match(name)) {
        (rule.category, CategorySource::Keyword)
    } else {
        (Category::Other, CategorySource::Metadata)
    };
    AsRecord {
        asn,
        name: name.to_string(),
        category,
        source,
    }
}

/// Host counts keyed by (date, ASN).
pub type HostCounts = BTreeMap<(NaiveDate, u32), u64>;

pub fn dates(counts: &HostCounts) -> BTreeSet<NaiveDate> {
    counts.keys().map(|(d, _)| *d).collect()
}

fn counts_on(counts: &HostCounts, date: NaiveDate) -> impl Iterator<Item = (u32, u64)> + '_ {
    counts
        .range((date, 0)..=(date, u32::MAX))
        .map(|(&(_, asn), &h)| (asn, h))
}

fn check_known(counts: &HostCounts, records: &HashMap<u32, AsRecord>) -> Result<(), AsCompError> {
    let unknown: BTreeSet<u32> = counts
        .keys()
        .map(|(_, a)| *a)
        .filter(|a| !records.contains_key(a))
        .collect();
    if unknown.is_empty() {
        Ok(())
    } else {
        Err(AsCompError::UnknownAsns(unknown.into_iter().collect()))
    }
}

fn category_totals(
    counts: &HostCounts,
    records: &HashMap<u32, AsRecord>,
    date: NaiveDate,
) -> BTreeMap<Category, u64> {
    let mut totals: BTreeMap<Category, u64> = Category::ALL.iter().map(|&c| (c, 0)).collect();
    for (asn, hosts) in counts_on(counts, date) {
        *totals.get_mut(&records[&asn].category).expect("all categories") += hosts;
    }
    totals
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompositionCell {
    pub date: NaiveDate,
    pub category: Category,
    pub hosts: u64,
    pub share: f64,
}

/// Per-date, per-category host sums and shares of the daily total.
pub fn composition(counts: &HostCounts, records: &HashMap<u32, AsRecord>) -> Result<Vec<CompositionCell>, AsCompError> {
    check_known(counts, records)?;
    let mut out = Vec::new();
    for date in dates(counts) {
        let totals = category_totals(counts, records, date);
        let day: u64 = totals.values().sum();
        for (category, hosts) in totals {
            out.push(CompositionCell {
                date,
                category,
                hosts,
                share: if day == 0 { 0.0 } else { hosts as f64 / day as f64 },
            });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExemptionFinding {
    pub asn: u32,
    pub baseline_hosts: u64,
    pub min_event_hosts: u64,
    pub min_event_date: NaiveDate,
    pub retention: f64,
    pub exempt: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExemptionReport {
    pub baseline_date: NaiveDate,
    pub event_dates: Vec<NaiveDate>,
    pub threshold: f64,
    /// Sorted by retention, highest first.
    pub findings: Vec<ExemptionFinding>,
    /// ASNs left out, with the reason.
    pub skipped: Vec<(u32, String)>,
}

impl ExemptionReport {
    pub fn exempt(&self) -> impl Iterator<Item = &ExemptionFinding> {
        self.findings.iter().filter(|f| f.exempt)
    }

    pub fn get(&self, asn: u32) -> Option<&ExemptionFinding> {
        self.findings.iter().find(|f| f.asn == asn)
    }
}

/// Retention of every AS: its lowest event-date count over its baseline count.
/// An AS absent on an event date counts as zero hosts there.
pub fn exemptions(
    counts: &HostCounts,
    baseline_date: NaiveDate,
    event_dates: &[NaiveDate],
    threshold: f64,
) -> Result<ExemptionReport, AsCompError> {
    let known = dates(counts);
    for d in std::iter::once(&baseline_date).chain(event_dates) {
        if !known.contains(d) {
            return Err(AsCompError::MissingDate(*d));
        }
    }
    let asns: BTreeSet<u32> = counts.keys().map(|(_, a)| *a).collect();
    let mut findings = Vec::new();
    let mut skipped = Vec::new();
    for asn in asns {
        let base = counts.get(&(baseline_date, asn)).copied().unwrap_or(0);
        if base == 0 {
            skipped.push((asn, format!("zero hosts on baseline date {baseline_date}")));
            continue;
        }
        let Some((min_date, min_hosts)) = event_dates
            .iter()
            .map(|&d| (d, counts.get(&(d, asn)).copied().unwrap_or(0)))
            .min_by_key(|&(d, h)| (h, d))
        else {
            skipped.push((asn, "no event dates".into()));
            continue;
        };
        let retention = min_hosts as f64 / base as f64;
        findings.push(ExemptionFinding {
            asn,
            baseline_hosts: base,
            min_event_hosts: min_hosts,
            min_event_date: min_date,
            retention,
            exempt: retention >= threshold,
        });
    }
    findings.sort_by(|a, b| b.retention.total_cmp(&a.retention).then(a.asn.cmp(&b.asn)));
    Ok(ExemptionReport {
        baseline_date,
        event_dates: event_dates.to_vec(),
        threshold,
        findings,
        skipped,
    })
}

/// Ratio of two counts; a zero starting count reports `New`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Growth {
    Ratio(f64),
    New,
}

impl Growth {
    pub fn between(from: u64, to: u64) -> Self {
        if from == 0 {
            Growth::New
        } else {
            Growth::Ratio(to as f64 / from as f64)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryDelta {
    pub category: Category,
    pub from_hosts: u64,
    pub to_hosts: u64,
    pub delta: i64,
    /// Share of the sum of positive category deltas (positive deltas only).
    pub share_of_positive_delta: Option<f64>,
    /// Share of the net change across all categories.
    pub share_of_net_delta: Option<f64>,
    pub anti_correlated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AsDelta {
    pub asn: u32,
    pub category: Category,
    pub from_hosts: u64,
    pub to_hosts: u64,
    pub delta: i64,
    pub growth: Growth,
    pub anti_correlated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryAttribution {
    pub from_date: NaiveDate,
    pub to_date: NaiveDate,
    pub net_delta: i64,
    pub positive_delta_sum: i64,
    pub categories: Vec<CategoryDelta>,
    /// Per-AS deltas, largest absolute change first.
    pub ases: Vec<AsDelta>,
}

impl RecoveryAttribution {
    /// True when no category changed; all shares are then undefined.
    pub fn is_empty(&self) -> bool {
        self.categories.iter().all(|c| c.delta == 0)
    }

    pub fn category(&self, c: Category) -> &CategoryDelta {
        self.categories.iter().find(|d| d.category == c).expect("all categories present")
    }

    pub fn asn(&self, asn: u32) -> Option<&AsDelta> {
        self.ases.iter().find(|d| d.asn == asn)
    }
}

/// Decompose the change between two dates by category and by AS.
///
/// Anything moving against the net direction of change is flagged as
/// anti-correlated.
pub fn recovery_attribution(
    counts: &HostCounts,
    from_date: NaiveDate,
    to_date: NaiveDate,
    records: &HashMap<u32, AsRecord>,
) -> Result<RecoveryAttribution, AsCompError> {
    if from_date == to_date {
        return Err(AsCompError::SameDates(from_date));
    }
    check_known(counts, records)?;
    let known = dates(counts);
    for d in [from_date, to_date] {
        if !known.contains(&d) {
            return Err(AsCompError::MissingDate(d));
        }
    }

    let before = category_totals(counts, records, from_date);
    let after = category_totals(counts, records, to_date);
    let deltas: BTreeMap<Category, i64> = Category::ALL
        .iter()
        .map(|c| (*c, after[c] as i64 - before[c] as i64))
        .collect();
    let net: i64 = deltas.values().sum();
    let positive: i64 = deltas.values().filter(|&&d| d > 0).sum();
    let against = |d: i64| d != 0 && net != 0 && d.signum() != net.signum();

    let categories = Category::ALL
        .iter()
        .map(|&c| {
            let delta = deltas[&c];
            CategoryDelta {
                category: c,
                from_hosts: before[&c],
                to_hosts: after[&c],
                delta,
                share_of_positive_delta: (positive > 0 && delta > 0).then(|| delta as f64 / positive as f64),
                share_of_net_delta: (net != 0).then(|| delta as f64 / net as f64),
                anti_correlated: against(delta),
            }
        })
        .collect();

    let asns: BTreeSet<u32> = counts_on(counts, from_date)
        .chain(counts_on(counts, to_date))
        .map(|(a, _)| a)
        .collect();
    let mut ases: Vec<AsDelta> = asns
        .into_iter()
        .map(|asn| {
            let from_hosts = counts.get(&(from_date, asn)).copied().unwrap_or(0);
            let to_hosts = counts.get(&(to_date, asn)).copied().unwrap_or(0);
            let delta = to_hosts as i64 - from_hosts as i64;
            AsDelta {
                asn,
                category: records[&asn].category,
                from_hosts,
                to_hosts,
                delta,
                growth: Growth::between(from_hosts, to_hosts),
                anti_correlated: against(delta),
            }
        })
        .collect();
    ases.sort_by(|a, b| b.delta.abs().cmp(&a.delta.abs()).then(a.asn.cmp(&b.asn)));

    Ok(RecoveryAttribution {
        from_date,
        to_date,
        net_delta: net,
        positive_delta_sum: positive,
        categories,
        ases,
    })
}

/// Read `date,asn,hosts` CSV. Duplicate (date, asn) rows are summed.
pub fn read_counts_csv<R: io::Read>(input: R) -> Result<HostCounts, AsCompError> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(input);
    let mut out = HostCounts::new();
    for (i, row) in rdr.records().enumerate() {
        let line = i + 2;
        let err = |reason: String| AsCompError::Csv { line, reason };
        let row = row.map_err(|e| err(e.to_string()))?;
        if row.len() < 3 {
            return Err(err(format!("expected 3 columns, found {}", row.len())));
        }
        let date: NaiveDate = row[0].parse().map_err(|_| err(format!("invalid date {:?}", &row[0])))?;
        let asn: u32 = row[1]
            .trim_start_matches("AS")
            .parse()
            .map_err(|_| err(format!("invalid ASN {:?}", &row[1])))?;
        let hosts: u64 = row[2].parse().map_err(|_| err(format!("invalid host count {:?}", &row[2])))?;
        *out.entry((date, asn)).or_insert(0) += hosts;
    }
    Ok(out)
}

pub fn write_counts_csv<W: io::Write>(counts: &HostCounts, out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["date", "asn", "hosts"])?;
    for (&(d, a), &h) in counts {
        w.write_record([d.to_string(), a.to_string(), h.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// One row of AS metadata: `asn,name,category` (category may be blank).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AsMetadata {
    pub asn: u32,
    pub name: String,
    pub category: Option<String>,
}

pub fn read_metadata_csv<R: io::Read>(input: R) -> Result<Vec<AsMetadata>, AsCompError> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(input);
    let mut out = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let line = i + 2;
        let err = |reason: String| AsCompError::Csv { line, reason };
        let row = row.map_err(|e| err(e.to_string()))?;
        if row.len() < 2 {
            return Err(err(format!("expected at least 2 columns, found {}", row.len())));
        }
        let asn: u32 = row[0]
            .trim_start_matches("AS")
            .parse()
            .map_err(|_| err(format!("invalid ASN {:?}", &row[0])))?;
        let category = row.get(2).filter(|c| !c.is_empty()).map(str::to_string);
        out.push(AsMetadata {
            asn,
            name: row[1].to_string(),
            category,
        });
    }
    Ok(out)
}

/// Categorize every metadata row.
pub fn categorize_all(
    metadata: &[AsMetadata],
    keyword_rules: &[KeywordRule],
    overrides: &HashMap<u32, Category>,
) -> HashMap<u32, AsRecord> {
    metadata
        .iter()
        .map(|m| {
            (
                m.asn,
                categorize(m.asn, &m.name, m.category.as_deref(), keyword_rules, overrides),
            )
        })
        .collect()
}

/// Wide composition table: one row per category, one `hosts`/`share_pct`
/// column pair per date, plus a total row.
pub fn write_composition_csv<W: io::Write>(cells: &[CompositionCell], out: W) -> csv::Result<()> {
    let dates: BTreeSet<NaiveDate> = cells.iter().map(|c| c.date).collect();
    let lookup: BTreeMap<(Category, NaiveDate), &CompositionCell> =
        cells.iter().map(|c| ((c.category, c.date), c)).collect();
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["category".to_string()];
    for d in &dates {
        header.push(format!("{d}_hosts"));
        header.push(format!("{d}_share_pct"));
    }
    w.write_record(&header)?;
    for cat in Category::ALL {
        let mut row = vec![cat.to_string()];
        for d in &dates {
            let cell = lookup.get(&(cat, *d));
            row.push(cell.map(|c| c.hosts).unwrap_or(0).to_string());
            row.push(format!("{:.1}", cell.map(|c| c.share).unwrap_or(0.0) * 100.0));
        }
        w.write_record(&row)?;
    }
    let mut total = vec!["total".to_string()];
    for d in &dates {
        let t: u64 = cells.iter().filter(|c| c.date == *d).map(|c| c.hosts).sum();
        total.push(t.to_string());
        total.push("100.0".into());
    }
    w.write_record(&total)?;
    w.flush()?;
    Ok(())
}
