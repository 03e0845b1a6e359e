//! Subcommand implementations. Every command computes all of its reports
//! before writing anything, so a failure leaves the output directory as it was.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use chrono::{NaiveDate, Utc};
use clap::Args;
use serde::Serialize;
use serde_json::Value;

use shutdownlens_core::ascomp::{
    categorize_all, composition, exemptions, load_keyword_rules, load_overrides, read_counts_csv,
    read_metadata_csv, recovery_attribution, write_composition_csv, AsCompError, AsRecord, Category,
    CompositionCell, ExemptionReport, RecoveryAttribution,
};
use shutdownlens_core::coverage::{compute_coverage, diff_coverage_with, write_coverage_csv, CoverageRow, WithdrawalDiff};
use shutdownlens_core::harness::{ScriptedTransport, TransportScript};
use shutdownlens_core::passive::{
    analyze, build_baseline, read_series_csv, round1, write_table_csv, EventAnalysis, HostSnapshot, PassiveConfig,
    SeriesFile,
};
use shutdownlens_core::prober::{
    read_targets, sweep, write_observations, OutcomeKind, ProbeError, SweepPolicy, TcpTransport, Transport,
};
use shutdownlens_core::registry::{country_asns, country_prefixes, parse_delegated};
use shutdownlens_core::rib_ingest::{originated_prefixes, parse_bview};
use shutdownlens_core::verdicts::{
    consensus_from_observations, cross_vantage_spread, distributions_by_vantage, read_consensus_csv,
    write_consensus_csv, write_summary_csv, ConsensusRecord, Verdict, VerdictDistribution,
};
use shutdownlens_core::prober::read_observations;

use crate::config::Config;
use crate::manifest::{Format, Outputs, ReportManifest};
use crate::{usage, Cli, Command, FormatArg, GlobalArgs};

pub fn dispatch(cli: &Cli, out: &mut dyn Write, err: &mut dyn Write) -> anyhow::Result<()> {
    let cfg = Config::load(cli.global.config.as_deref())?;
    let ctx = Ctx {
        global: &cli.global,
        out,
        err,
    };
    match &cli.command {
        Command::Rib(a) => cmd_rib(a, cfg, ctx),
        Command::Probe(a) => cmd_probe(a, cfg, ctx),
        Command::Classify(a) => cmd_classify(a, cfg, ctx),
        Command::Passive(a) => cmd_passive(a, cfg, ctx),
        Command::Ascomp(a) => cmd_ascomp(a, cfg, ctx),
        Command::Report(a) => cmd_report(a, cfg, ctx),
    }
}

struct Ctx<'a> {
    global: &'a GlobalArgs,
    out: &'a mut dyn Write,
    err: &'a mut dyn Write,
}

impl Ctx<'_> {
    fn outputs(&self, subcommand: &str, inputs: &[&Path], cfg: &Config) -> anyhow::Result<Outputs> {
        let started = Utc::now();
        let format = match self.global.format {
            None => Format::Both,
            Some(FormatArg::Csv) => Format::Csv,
            Some(FormatArg::Json) => Format::Json,
        };
        let manifest = ReportManifest::new(subcommand, inputs, cfg.digest())?;
        Ok(Outputs::new(&self.global.out, format, manifest, started))
    }

    fn warn(&mut self, msg: impl std::fmt::Display) {
        let _ = writeln!(self.err, "warning: {msg}");
    }
}

fn require(path: &Path) -> anyhow::Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(usage(format!("input file not found: {}", path.display())))
    }
}

fn open(path: &Path) -> anyhow::Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path).with_context(|| format!("opening {}", path.display()))?))
}

fn read_text(path: &Path) -> anyhow::Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

pub fn parse_date(s: &str) -> Result<NaiveDate, String> {
    NaiveDate::parse_from_str(s.trim(), "%Y-%m-%d").map_err(|e| format!("invalid date {s:?}: {e}"))
}

// --------------------------------------------------------------------- rib

#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotArg {
    pub date: NaiveDate,
    pub event: String,
    pub phase: String,
    pub path: PathBuf,
}

/// `DATE=PATH` or `DATE:EVENT:PHASE=PATH`.
pub fn parse_snapshot(s: &str) -> Result<SnapshotArg, String> {
    let (head, path) = s.split_once('=').ok_or_else(|| format!("expected DATE[:EVENT:PHASE]=PATH, got {s:?}"))?;
    if path.is_empty() {
        return Err(format!("missing path in {s:?}"));
    }
    let mut parts = head.split(':');
    let date = parse_date(parts.next().unwrap_or(""))?;
    let event = parts.next().unwrap_or("").to_string();
    let phase = parts.next().unwrap_or("").to_string();
    if parts.next().is_some() {
        return Err(format!("too many ':' fields in {s:?}"));
    }
    Ok(SnapshotArg {
        date,
        event,
        phase,
        path: PathBuf::from(path),
    })
}

#[derive(Debug, Clone, Args)]
pub struct RibArgs {
    /// RIB snapshot as DATE=PATH or DATE:EVENT:PHASE=PATH (repeatable).
    #[arg(long = "snapshot", value_name = "SPEC", required = true, value_parser = parse_snapshot)]
    pub snapshots: Vec<SnapshotArg>,
    /// RIR delegated-extended file; supplies both the allocated space and the country's ASNs.
    #[arg(long, value_name = "FILE")]
    pub delegated: PathBuf,
    #[arg(long)]
    pub country: Option<String>,
    /// Diff consecutive snapshots and flag withdrawal events.
    #[arg(long)]
    pub diff: bool,
    #[arg(long, value_name = "PP")]
    pub withdrawal_threshold_pp: Option<f64>,
}

#[derive(Debug, Serialize)]
struct SnapshotInfo {
    date: NaiveDate,
    path: String,
    peer_count: usize,
    entries: usize,
    skipped_records: usize,
}

#[derive(Debug, Serialize)]
struct RibReport {
    country: String,
    statuses: Vec<String>,
    country_asns: usize,
    allocated_prefixes: usize,
    delegated_rejects: usize,
    snapshots: Vec<SnapshotInfo>,
    rows: Vec<CoverageRow>,
}

fn cmd_rib(a: &RibArgs, mut cfg: Config, mut ctx: Ctx) -> anyhow::Result<()> {
    if let Some(c) = &a.country {
        cfg.coverage.country = c.to_uppercase();
    }
    if let Some(t) = a.withdrawal_threshold_pp {
        cfg.coverage.withdrawal_threshold_pp = t;
    }
    require(&a.delegated)?;
    for s in &a.snapshots {
        require(&s.path)?;
    }
    if a.diff && a.snapshots.len() < 2 {
        return Err(usage("--diff needs at least two snapshots"));
    }
    let mut snaps = a.snapshots.clone();
    snaps.sort_by_key(|s| s.date);
    if let Some(w) = snaps.windows(2).find(|w| w[0].date == w[1].date) {
        return Err(usage(format!("two snapshots share the date {}", w[0].date)));
    }

    let country = cfg.coverage.country.clone();
    let statuses: BTreeSet<String> = cfg.coverage.statuses.iter().cloned().collect();
    let delegated = parse_delegated(open(&a.delegated)?, snaps[0].date)
        .with_context(|| format!("parsing {}", a.delegated.display()))?;
    if let Some(first) = delegated.rejects.first() {
        ctx.warn(format!(
            "{}: skipped {} malformed line(s), first at line {}: {}",
            a.delegated.display(),
            delegated.rejects.len(),
            first.line,
            first.reason
        ));
    }
    let asns = country_asns(&delegated.records, &country, &statuses);
    let alloc = country_prefixes(&delegated.records, &country, &statuses);
    if alloc.prefixes.is_empty() {
        return Err(anyhow!("{}: no allocated IPv4 space for country {country}", a.delegated.display()));
    }
    if asns.is_empty() {
        ctx.warn(format!("{}: no ASNs delegated to {country}", a.delegated.display()));
    }

    let mut results = Vec::new();
    let mut infos = Vec::new();
    let mut rows = Vec::new();
    for s in &snaps {
        let rib = parse_bview(File::open(&s.path).with_context(|| format!("opening {}", s.path.display()))?, s.date)
            .with_context(|| format!("parsing {}", s.path.display()))?;
        let announced = originated_prefixes(&rib, &asns);
        let cov = compute_coverage(&alloc.prefixes, &announced, s.date)?;
        rows.push(CoverageRow::from_result(&cov, &s.event, &s.phase));
        infos.push(SnapshotInfo {
            date: s.date,
            path: s.path.display().to_string(),
            peer_count: rib.peer_count,
            entries: rib.entries.len(),
            skipped_records: rib.skipped_total(),
        });
        results.push(cov);
    }
    let diffs: Vec<WithdrawalDiff> = if a.diff {
        results
            .windows(2)
            .map(|w| diff_coverage_with(&w[0], &w[1], cfg.coverage.withdrawal_threshold_pp))
            .collect::<Result<_, _>>()?
    } else {
        Vec::new()
    };

    let report = RibReport {
        country: country.clone(),
        statuses: statuses.iter().cloned().collect(),
        country_asns: asns.len(),
        allocated_prefixes: alloc.prefixes.len(),
        delegated_rejects: delegated.rejects.len(),
        snapshots: infos,
        rows: rows.clone(),
    };
    let mut inputs: Vec<&Path> = vec![&a.delegated];
    inputs.extend(snaps.iter().map(|s| s.path.as_path()));
    let mut outs = ctx.outputs("rib", &inputs, &cfg)?;
    outs.csv("coverage.csv", |buf| Ok(write_coverage_csv(&rows, buf)?))?;
    outs.json("coverage.json", &report)?;
    if a.diff {
        outs.json("withdrawal.json", &diffs)?;
    }

    writeln!(ctx.out, "country {country}: {} allocated prefixes, {} ASNs", alloc.prefixes.len(), asns.len())?;
    for r in &rows {
        writeln!(
            ctx.out,
            "{} {} {} announced={} covered={}/{} coverage={:.1}%",
            r.date,
            if r.event.is_empty() { "-" } else { &r.event },
            if r.phase.is_empty() { "-" } else { &r.phase },
            r.announced,
            r.covered,
            alloc.prefixes.len(),
            r.coverage_pct
        )?;
    }
    for d in &diffs {
        writeln!(
            ctx.out,
            "{} -> {}: {:+.2} pp, lost {}, gained {}{}",
            d.from_date,
            d.to_date,
            d.net_pp,
            d.lost.len(),
            d.gained.len(),
            if d.withdrawal_event { ", WITHDRAWAL" } else { "" }
        )?;
    }
    outs.finish()?;
    Ok(())
}

// ------------------------------------------------------------------- probe

#[derive(Debug, Clone, PartialEq)]
pub enum TransportArg {
    Real,
    Replay(PathBuf),
}

pub fn parse_transport(s: &str) -> Result<TransportArg, String> {
    match s.split_once(':') {
        None if s == "real" => Ok(TransportArg::Real),
        Some(("replay", path)) if !path.is_empty() => Ok(TransportArg::Replay(PathBuf::from(path))),
        _ => Err(format!("expected real or replay:FILE, got {s:?}")),
    }
}

#[derive(Debug, Clone, Args)]
pub struct ProbeArgs {
    /// Target prefixes, one CIDR per line.
    #[arg(long, value_name = "FILE")]
    pub targets: PathBuf,
    #[arg(long, value_delimiter = ',')]
    pub ports: Option<Vec<u16>>,
    #[arg(long)]
    pub timeout_ms: Option<u64>,
    #[arg(long)]
    pub retries: Option<u32>,
    /// Probes per second, across all workers.
    #[arg(long)]
    pub rate: Option<f64>,
    #[arg(long)]
    pub max_in_flight: Option<usize>,
    #[arg(long)]
    pub vantage_id: Option<String>,
    #[arg(long, default_value_t = 0)]
    pub run_id: u32,
    /// `real` for live TCP probes, `replay:FILE` for a recorded script.
    #[arg(long, default_value = "real", value_parser = parse_transport)]
    pub transport: TransportArg,
    /// Required with the real transport: confirms the targets may be probed
    /// and the rate is one their operators would accept.
    #[arg(long)]
    pub i_understand_scanning_ethics: bool,
}

#[derive(Debug, Serialize)]
struct ProbeReport {
    transport: String,
    policy: SweepPolicy,
    ports: Vec<u16>,
    targets: usize,
    /// port -> outcome -> count
    outcomes: BTreeMap<u16, BTreeMap<OutcomeKind, usize>>,
}

fn cmd_probe(a: &ProbeArgs, mut cfg: Config, mut ctx: Ctx) -> anyhow::Result<()> {
    let p = &mut cfg.probe;
    if let Some(v) = &a.ports {
        p.ports = v.clone();
    }
    if let Some(v) = a.timeout_ms {
        p.timeout_ms = v;
    }
    if let Some(v) = a.retries {
        p.retries = v;
    }
    if let Some(v) = a.rate {
        p.rate_per_sec = v;
    }
    if let Some(v) = a.max_in_flight {
        p.max_in_flight = v;
    }
    if let Some(v) = &a.vantage_id {
        p.vantage_id = v.clone();
    }
    require(&a.targets)?;
    if let TransportArg::Replay(f) = &a.transport {
        require(f)?;
    }
    let policy = SweepPolicy {
        timeout_ms: p.timeout_ms,
        retries: p.retries,
        max_in_flight: p.max_in_flight,
        rate_per_sec: p.rate_per_sec,
        vantage_id: p.vantage_id.clone(),
        run_id: a.run_id,
    };
    policy.validate().map_err(|e| usage(e.to_string()))?;
    if a.transport == TransportArg::Real && !a.i_understand_scanning_ethics {
        return Err(usage(
            "refusing to send live probes without --i-understand-scanning-ethics; \
             keep the rate low, probe only prefixes you have reason to measure, and honour opt-out requests",
        ));
    }
    let ports = cfg.probe.ports.clone();
    let targets = read_targets(open(&a.targets)?, &ports).with_context(|| format!("reading {}", a.targets.display()))?;

    let (transport, label): (Box<dyn Transport>, String) = match &a.transport {
        TransportArg::Real => (Box::new(TcpTransport), "real".into()),
        TransportArg::Replay(f) => {
            let script = TransportScript::read_jsonl(open(f)?).with_context(|| format!("reading {}", f.display()))?;
            (Box::new(ScriptedTransport::new(script)), "replay".into())
        }
    };
    let obs = sweep(&targets, transport.as_ref(), &policy).map_err(|e| match e {
        ProbeError::Policy(m) => usage(m),
        other => anyhow::Error::new(other),
    })?;

    let mut outcomes: BTreeMap<u16, BTreeMap<OutcomeKind, usize>> = BTreeMap::new();
    for o in &obs {
        for (port, out) in &o.outcomes {
            *outcomes.entry(*port).or_default().entry(out.outcome).or_default() += 1;
        }
    }
    let mut jsonl = Vec::new();
    write_observations(&obs, &mut jsonl)?;
    let report = ProbeReport {
        transport: label,
        policy: policy.clone(),
        ports: ports.clone(),
        targets: targets.len(),
        outcomes,
    };
    let mut inputs: Vec<&Path> = vec![&a.targets];
    if let TransportArg::Replay(f) = &a.transport {
        inputs.push(f);
    }
    let mut outs = ctx.outputs("probe", &inputs, &cfg)?;
    outs.raw("observations.jsonl", jsonl);
    outs.json("probe.json", &report)?;
    if targets.is_empty() {
        ctx.warn(format!("{}: no targets", a.targets.display()));
    }
    writeln!(
        ctx.out,
        "probed {} targets on ports {:?} (vantage {}, run {})",
        targets.len(),
        ports,
        policy.vantage_id,
        policy.run_id
    )?;
    outs.finish()?;
    Ok(())
}

// ---------------------------------------------------------------- classify

#[derive(Debug, Clone, Args)]
pub struct ClassifyArgs {
    /// Observation logs (JSON lines) to classify and vote on.
    #[arg(long, num_args = 1.., value_name = "FILE")]
    pub observations: Vec<PathBuf>,
    /// Precomputed consensus CSVs to summarize.
    #[arg(long, num_args = 1.., value_name = "FILE")]
    pub consensus: Vec<PathBuf>,
    /// Write one consensus CSV per vantage instead of a combined one.
    #[arg(long)]
    pub per_vantage: bool,
}

#[derive(Debug, Serialize)]
struct ClassifyReport {
    prefixes: usize,
    vantages: Vec<VerdictDistribution>,
    /// Max minus min percentage per verdict across vantages.
    spread_pp: BTreeMap<Verdict, f64>,
}

fn cmd_classify(a: &ClassifyArgs, cfg: Config, ctx: Ctx) -> anyhow::Result<()> {
    if a.observations.is_empty() && a.consensus.is_empty() {
        return Err(usage("give at least one --observations or --consensus file"));
    }
    for p in a.observations.iter().chain(&a.consensus) {
        require(p)?;
    }
    let mut records: Vec<ConsensusRecord> = Vec::new();
    if !a.observations.is_empty() {
        let mut obs = Vec::new();
        for p in &a.observations {
            let got = read_observations(open(p)?).with_context(|| format!("reading {}", p.display()))?;
            if got.is_empty() {
                return Err(anyhow!("{}: no observations", p.display()));
            }
            obs.extend(got);
        }
        records.extend(consensus_from_observations(&obs)?);
    }
    for p in &a.consensus {
        let got = read_consensus_csv(open(p)?).map_err(|e| anyhow!("reading {}: {e}", p.display()))?;
        if got.is_empty() {
            return Err(anyhow!("{}: no consensus records", p.display()));
        }
        records.extend(got);
    }
    records.sort_by(|x, y| (&x.vantage_id, x.prefix).cmp(&(&y.vantage_id, y.prefix)));
    if let Some(w) = records.windows(2).find(|w| w[0].vantage_id == w[1].vantage_id && w[0].prefix == w[1].prefix) {
        return Err(anyhow!("prefix {} appears twice for vantage {}", w[0].prefix, w[0].vantage_id));
    }

    let dists = distributions_by_vantage(&records)?;
    let spread_pp: BTreeMap<Verdict, f64> = if dists.len() >= 2 {
        Verdict::ALL
            .iter()
            .map(|&v| Ok((v, cross_vantage_spread(&dists, v)?)))
            .collect::<anyhow::Result<_>>()?
    } else {
        BTreeMap::new()
    };
    let prefixes: BTreeSet<_> = records.iter().map(|r| r.prefix).collect();
    let report = ClassifyReport {
        prefixes: prefixes.len(),
        vantages: dists.clone(),
        spread_pp: spread_pp.clone(),
    };

    let inputs: Vec<&Path> = a.observations.iter().chain(&a.consensus).map(|p| p.as_path()).collect();
    let mut outs = ctx.outputs("classify", &inputs, &cfg)?;
    if a.per_vantage {
        for d in &dists {
            let mine: Vec<ConsensusRecord> = records.iter().filter(|r| r.vantage_id == d.vantage_id).cloned().collect();
            outs.csv(&format!("consensus-{}.csv", d.vantage_id), |buf| Ok(write_consensus_csv(&mine, buf)?))?;
        }
    } else {
        outs.csv("consensus.csv", |buf| Ok(write_consensus_csv(&records, buf)?))?;
    }
    outs.csv("verdict_summary.csv", |buf| Ok(write_summary_csv(&dists, buf)?))?;
    outs.json("classify.json", &report)?;

    writeln!(ctx.out, "{:<12} {:>5} {:>6}  NR/RE/BW/FA/AM", "vantage", "runs", "prefixes")?;
    for d in &dists {
        let cells: Vec<String> = Verdict::ALL.iter().map(|&v| d.count(v).to_string()).collect();
        writeln!(ctx.out, "{:<12} {:>5} {:>6}  {}", d.vantage_id, d.runs, d.prefixes, cells.join("/"))?;
    }
    match spread_pp.get(&Verdict::NullRoute) {
        Some(s) => writeln!(ctx.out, "NR cross-vantage spread: {s:.1} pp")?,
        None => writeln!(ctx.out, "NR cross-vantage spread: n/a (one vantage)")?,
    }
    outs.finish()?;
    Ok(())
}

// ----------------------------------------------------------------- passive

#[derive(Debug, Clone, Args)]
pub struct PassiveArgs {
    /// Host-count series: date,total,pending,country.
    #[arg(long, value_name = "FILE")]
    pub series: PathBuf,
    /// Pre-event snapshots for the baseline band, same columns.
    #[arg(long, value_name = "FILE")]
    pub baseline: PathBuf,
    #[arg(long, value_parser = parse_date)]
    pub reference_date: NaiveDate,
    #[arg(long, default_value = "IR")]
    pub country: String,
    /// Control-country series; without it inflation detection is skipped.
    #[arg(long, value_name = "FILE", requires = "control_baseline")]
    pub control: Option<PathBuf>,
    #[arg(long, value_name = "FILE", requires = "control")]
    pub control_baseline: Option<PathBuf>,
    /// Needed only when the control files hold several countries.
    #[arg(long)]
    pub control_country: Option<String>,
    /// Reference date of the control band (defaults to --reference-date).
    #[arg(long, value_parser = parse_date)]
    pub control_reference_date: Option<NaiveDate>,
    #[arg(long, value_parser = parse_date)]
    pub from: Option<NaiveDate>,
    #[arg(long, value_parser = parse_date)]
    pub to: Option<NaiveDate>,
    /// Dates to report reductions for (default: every date).
    #[arg(long, value_delimiter = ',', value_parser = parse_date)]
    pub key_dates: Vec<NaiveDate>,
    #[arg(long)]
    pub onset_threshold: Option<f64>,
    #[arg(long)]
    pub carryover_threshold: Option<f64>,
    #[arg(long)]
    pub inflation_ratio: Option<f64>,
}

#[derive(Debug, Serialize)]
struct PassiveReport<'a> {
    inflation_checked: bool,
    warnings: &'a [String],
    analysis: &'a EventAnalysis,
}

fn read_series(path: &Path, warnings: &mut Vec<String>) -> anyhow::Result<SeriesFile> {
    let s = read_series_csv(open(path)?).with_context(|| format!("reading {}", path.display()))?;
    if !s.blank_pending_lines.is_empty() {
        warnings.push(format!(
            "{}: {} row(s) with blank pending treated as zero (lines {:?})",
            path.display(),
            s.blank_pending_lines.len(),
            s.blank_pending_lines
        ));
    }
    Ok(s)
}

fn only_country(file: &SeriesFile, path: &Path, wanted: Option<&str>) -> anyhow::Result<Vec<HostSnapshot>> {
    if let Some(c) = wanted {
        return Ok(file.for_country(c));
    }
    let countries: BTreeSet<String> = file.snapshots.iter().map(|s| s.country.to_uppercase()).collect();
    if countries.len() > 1 {
        return Err(usage(format!(
            "{} holds several countries {countries:?}; pick one with --control-country",
            path.display()
        )));
    }
    Ok(file.snapshots.clone())
}

fn cmd_passive(a: &PassiveArgs, mut cfg: Config, mut ctx: Ctx) -> anyhow::Result<()> {
    if let Some(v) = a.onset_threshold {
        cfg.passive.onset_threshold = v;
    }
    if let Some(v) = a.carryover_threshold {
        cfg.passive.carryover_threshold = v;
    }
    if let Some(v) = a.inflation_ratio {
        cfg.passive.inflation_ratio = v;
    }
    let mut inputs: Vec<&Path> = vec![&a.series, &a.baseline];
    inputs.extend(a.control.as_deref());
    inputs.extend(a.control_baseline.as_deref());
    for p in &inputs {
        require(p)?;
    }
    if let (Some(f), Some(t)) = (a.from, a.to) {
        if f > t {
            return Err(usage(format!("--from {f} is after --to {t}")));
        }
    }

    let mut warnings = Vec::new();
    let in_window = |s: &HostSnapshot| a.from.is_none_or(|f| s.date >= f) && a.to.is_none_or(|t| s.date <= t);
    let series: Vec<HostSnapshot> = read_series(&a.series, &mut warnings)?
        .for_country(&a.country)
        .into_iter()
        .filter(in_window)
        .collect();
    if series.is_empty() {
        return Err(anyhow!("{}: no rows for {} in the requested window", a.series.display(), a.country));
    }
    let base_rows = read_series(&a.baseline, &mut warnings)?.for_country(&a.country);
    let band = build_baseline(&base_rows, a.reference_date).with_context(|| format!("baseline {}", a.baseline.display()))?;

    let control = match (&a.control, &a.control_baseline) {
        (Some(cp), Some(cbp)) => {
            let c = only_country(&read_series(cp, &mut warnings)?, cp, a.control_country.as_deref())?;
            let cb_rows = only_country(&read_series(cbp, &mut warnings)?, cbp, a.control_country.as_deref())?;
            let cb = build_baseline(&cb_rows, a.control_reference_date.unwrap_or(a.reference_date))
                .with_context(|| format!("control baseline {}", cbp.display()))?;
            if c.is_empty() {
                return Err(anyhow!("{}: control series is empty", cp.display()));
            }
            Some((c, cb))
        }
        _ => {
            warnings.push("no control series given; inflation detection skipped".to_string());
            None
        }
    };

    let pcfg = PassiveConfig {
        onset_threshold: cfg.passive.onset_threshold,
        carryover_threshold: cfg.passive.carryover_threshold,
        inflation_ratio: cfg.passive.inflation_ratio,
    };
    let analysis = analyze(
        &series,
        &band,
        control.as_ref().map(|(c, b)| (c.as_slice(), b)),
        &a.key_dates,
        &pcfg,
    )?;
    for k in &a.key_dates {
        if !analysis.reduction_pp.contains_key(k) {
            warnings.push(format!("key date {k} is not in the series"));
        }
    }

    let report = PassiveReport {
        inflation_checked: control.is_some(),
        warnings: &warnings,
        analysis: &analysis,
    };
    let mut outs = ctx.outputs("passive", &inputs, &cfg)?;
    outs.csv("passive.csv", |buf| Ok(write_table_csv(&analysis, buf)?))?;
    outs.json("passive.json", &report)?;

    for w in &warnings {
        ctx.warn(w);
    }
    let b = &analysis.band;
    writeln!(
        ctx.out,
        "{}: reference {} on {}, band {}..{}",
        analysis.country, b.reference, b.reference_date, b.low, b.high
    )?;
    match &analysis.onset {
        Some(o) => writeln!(ctx.out, "onset (active hosts): {}", o.date)?,
        None => writeln!(ctx.out, "onset (active hosts): none")?,
    }
    if let Some(o) = &analysis.total_onset {
        writeln!(ctx.out, "onset (headline totals): {}", o.date)?;
    }
    if let (Some(d), Some(n)) = (analysis.floor_date, analysis.floor_active) {
        writeln!(ctx.out, "floor: {n} active hosts on {d}")?;
    }
    if !a.key_dates.is_empty() {
        for (d, r) in &analysis.reduction_pp {
            writeln!(ctx.out, "reduction {d}: {:+.1} pp", round1(*r))?;
        }
    }
    for d in &analysis.carryover_dates {
        writeln!(ctx.out, "carry-over: {d}")?;
    }
    for w in &analysis.anomaly_windows {
        writeln!(
            ctx.out,
            "inflation window {}..{}: peak {:.2}x on {}",
            w.start, w.end, w.peak_ratio, w.peak_date
        )?;
    }
    outs.finish()?;
    Ok(())
}

// ------------------------------------------------------------------ ascomp

#[derive(Debug, Clone, PartialEq)]
pub struct DatePair {
    pub from: NaiveDate,
    pub to: NaiveDate,
}

pub fn parse_date_pair(s: &str) -> Result<DatePair, String> {
    let (f, t) = s.split_once(':').ok_or_else(|| format!("expected FROM:TO, got {s:?}"))?;
    Ok(DatePair {
        from: parse_date(f)?,
        to: parse_date(t)?,
    })
}

#[derive(Debug, Clone, Args)]
pub struct AscompArgs {
    /// Per-AS host counts: date,asn,hosts.
    #[arg(long, value_name = "FILE")]
    pub counts: PathBuf,
    /// AS metadata: asn,name[,category].
    #[arg(long, value_name = "FILE")]
    pub metadata: PathBuf,
    /// Keyword rules JSON.
    #[arg(long, value_name = "FILE")]
    pub rules: Option<PathBuf>,
    /// Manual category overrides JSON.
    #[arg(long, value_name = "FILE")]
    pub overrides: Option<PathBuf>,
    /// Pre-event date for exemption detection.
    #[arg(long, value_parser = parse_date, requires = "event_dates")]
    pub baseline_date: Option<NaiveDate>,
    #[arg(long, value_delimiter = ',', value_parser = parse_date, requires = "baseline_date")]
    pub event_dates: Vec<NaiveDate>,
    /// Attribute the change between two dates (repeatable).
    #[arg(long, value_name = "FROM:TO", value_parser = parse_date_pair)]
    pub attribution: Vec<DatePair>,
    /// Retention at or above which an AS counts as exempt.
    #[arg(long)]
    pub threshold: Option<f64>,
}

#[derive(Debug, Serialize)]
struct AscompReport {
    ases: Vec<AsRecord>,
    composition: Vec<CompositionCell>,
    exemptions: Option<ExemptionReport>,
    attributions: Vec<RecoveryAttribution>,
}

fn cmd_ascomp(a: &AscompArgs, mut cfg: Config, mut ctx: Ctx) -> anyhow::Result<()> {
    if let Some(t) = a.threshold {
        if !(0.0..=1.0).contains(&t) {
            return Err(usage(format!("--threshold must lie in [0, 1], got {t}")));
        }
        cfg.ascomp.exemption_threshold = t;
    }
    let mut inputs: Vec<&Path> = vec![&a.counts, &a.metadata];
    inputs.extend(a.rules.as_deref());
    inputs.extend(a.overrides.as_deref());
    for p in &inputs {
        require(p)?;
    }
    if let Some(p) = a.attribution.iter().find(|p| p.from == p.to) {
        return Err(usage(format!("attribution needs two distinct dates, got {} twice", p.from)));
    }

    let counts = read_counts_csv(open(&a.counts)?).with_context(|| format!("reading {}", a.counts.display()))?;
    let metadata = read_metadata_csv(open(&a.metadata)?).with_context(|| format!("reading {}", a.metadata.display()))?;
    let rules = match &a.rules {
        Some(p) => load_keyword_rules(&read_text(p)?).with_context(|| format!("reading {}", p.display()))?,
        None => Vec::new(),
    };
    let overrides: HashMap<u32, Category> = match &a.overrides {
        Some(p) => load_overrides(&read_text(p)?).with_context(|| format!("reading {}", p.display()))?,
        None => HashMap::new(),
    };
    let records = categorize_all(&metadata, &rules, &overrides);
    let cells = composition(&counts, &records).map_err(|e| match e {
        AsCompError::UnknownAsns(v) => anyhow!(
            "{}: ASN(s) {} have host counts but no row in {}",
            a.counts.display(),
            v.iter().map(|x| format!("AS{x}")).collect::<Vec<_>>().join(", "),
            a.metadata.display()
        ),
        other => other.into(),
    })?;
    let exempt = match a.baseline_date {
        Some(b) => Some(exemptions(&counts, b, &a.event_dates, cfg.ascomp.exemption_threshold)?),
        None => None,
    };
    let attributions: Vec<RecoveryAttribution> = a
        .attribution
        .iter()
        .map(|p| recovery_attribution(&counts, p.from, p.to, &records))
        .collect::<Result<_, _>>()?;

    let mut ases: Vec<AsRecord> = records.values().cloned().collect();
    ases.sort_by_key(|r| r.asn);
    let report = AscompReport {
        ases,
        composition: cells.clone(),
        exemptions: exempt.clone(),
        attributions: attributions.clone(),
    };
    let mut outs = ctx.outputs("ascomp", &inputs, &cfg)?;
    outs.csv("ascomp_composition.csv", |buf| Ok(write_composition_csv(&cells, buf)?))?;
    outs.json("ascomp.json", &report)?;

    let names: HashMap<u32, &str> = metadata.iter().map(|m| (m.asn, m.name.as_str())).collect();
    let dates: BTreeSet<NaiveDate> = cells.iter().map(|c| c.date).collect();
    write!(ctx.out, "{:<16}", "share %")?;
    for d in &dates {
        write!(ctx.out, " {:>10}", d.format("%m-%d").to_string())?;
    }
    writeln!(ctx.out)?;
    for c in Category::ALL {
        write!(ctx.out, "{:<16}", c.as_str())?;
        for d in &dates {
            let share = cells.iter().find(|x| x.date == *d && x.category == c).map_or(0.0, |x| x.share);
            write!(ctx.out, " {:>10.1}", share * 100.0)?;
        }
        writeln!(ctx.out)?;
    }
    if let Some(e) = &exempt {
        for f in e.exempt() {
            writeln!(
                ctx.out,
                "exempt: AS{} {} retention {:.1}% (min {} on {})",
                f.asn,
                names.get(&f.asn).unwrap_or(&""),
                f.retention * 100.0,
                f.min_event_hosts,
                f.min_event_date
            )?;
        }
        for (asn, why) in &e.skipped {
            ctx.warn(format!("exemptions: AS{asn} skipped: {why}"));
        }
    }
    for at in &attributions {
        writeln!(ctx.out, "attribution {} -> {}: net {:+}", at.from_date, at.to_date, at.net_delta)?;
        if at.is_empty() {
            writeln!(ctx.out, "  no change")?;
            continue;
        }
        for c in &at.categories {
            if c.delta == 0 {
                continue;
            }
            writeln!(
                ctx.out,
                "  {:<16} {:+9} net share {:>6} positive share {:>6}{}",
                c.category.as_str(),
                c.delta,
                fmt_pct(c.share_of_net_delta),
                fmt_pct(c.share_of_positive_delta),
                if c.anti_correlated { "  anti-correlated" } else { "" }
            )?;
        }
        for d in at.ases.iter().filter(|d| d.anti_correlated) {
            writeln!(
                ctx.out,
                "  anti-correlated: AS{} {} {:+}",
                d.asn,
                names.get(&d.asn).unwrap_or(&""),
                d.delta
            )?;
        }
    }
    outs.finish()?;
    Ok(())
}

fn fmt_pct(x: Option<f64>) -> String {
    x.map_or_else(|| "-".to_string(), |v| format!("{:.1}%", v * 100.0))
}

// ------------------------------------------------------------------ report

#[derive(Debug, Clone, Args)]
pub struct ReportArgs {
    /// Directory holding JSON reports from earlier subcommands.
    #[arg(long, value_name = "DIR")]
    pub dir: PathBuf,
}

fn cmd_report(a: &ReportArgs, cfg: Config, mut ctx: Ctx) -> anyhow::Result<()> {
    if !a.dir.is_dir() {
        return Err(usage(format!("report directory not found: {}", a.dir.display())));
    }
    let mut files: Vec<PathBuf> = std::fs::read_dir(&a.dir)
        .with_context(|| format!("listing {}", a.dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            let name = p.file_name().and_then(|n| n.to_str()).unwrap_or("");
            name.ends_with(".json") && !name.ends_with(".manifest.json")
        })
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(anyhow!("{}: no JSON reports", a.dir.display()));
    }
    let mut md = String::from("# shutdownlens summary\n");
    for f in &files {
        let v: Value = serde_json::from_str(&read_text(f)?).with_context(|| format!("parsing {}", f.display()))?;
        let (Some(m), Some(r)) = (v.get("manifest"), v.get("report")) else {
            ctx.warn(format!("{}: not a shutdownlens report, skipped", f.display()));
            continue;
        };
        let name = f.file_name().and_then(|n| n.to_str()).unwrap_or_default();
        let sub = m["subcommand"].as_str().unwrap_or("?");
        md.push_str(&format!("\n## {name} ({sub})\n\n"));
        if let Some(inputs) = m["inputs"].as_array() {
            for i in inputs {
                md.push_str(&format!(
                    "- input `{}` sha256 {}\n",
                    i["path"].as_str().unwrap_or("?"),
                    i["sha256"].as_str().unwrap_or("?").get(..12).unwrap_or("?")
                ));
            }
            md.push('\n');
        }
        md.push_str(&summarize(name, r));
    }
    let inputs: Vec<&Path> = files.iter().map(|p| p.as_path()).collect();
    let mut outs = ctx.outputs("report", &inputs, &cfg)?;
    let body = format!("<!-- manifest {} -->\n{md}", outs.manifest().digest());
    outs.raw("summary.md", body.into_bytes());
    writeln!(ctx.out, "summarized {} report(s)", files.len())?;
    outs.finish()?;
    Ok(())
}

fn f(v: &Value) -> f64 {
    v.as_f64().unwrap_or(f64::NAN)
}

fn summarize(name: &str, r: &Value) -> String {
    let mut s = String::new();
    match name {
        "coverage.json" => {
            s.push_str("| date | event | phase | announced | covered | coverage |\n|---|---|---|---|---|---|\n");
            for row in r["rows"].as_array().into_iter().flatten() {
                s.push_str(&format!(
                    "| {} | {} | {} | {} | {} | {:.1}% |\n",
                    row["date"].as_str().unwrap_or(""),
                    row["event"].as_str().unwrap_or(""),
                    row["phase"].as_str().unwrap_or(""),
                    row["announced"],
                    row["covered"],
                    f(&row["coverage_pct"])
                ));
            }
        }
        "withdrawal.json" => {
            for d in r.as_array().into_iter().flatten() {
                s.push_str(&format!(
                    "- {} to {}: {:+.2} pp{}\n",
                    d["from_date"].as_str().unwrap_or(""),
                    d["to_date"].as_str().unwrap_or(""),
                    f(&d["net_pp"]),
                    if d["withdrawal_event"].as_bool() == Some(true) { ", withdrawal" } else { "" }
                ));
            }
        }
        "classify.json" => {
            s.push_str("| vantage | runs | NR | RE | BW | FA | AM |\n|---|---|---|---|---|---|---|\n");
            for d in r["vantages"].as_array().into_iter().flatten() {
                let c = &d["counts"];
                s.push_str(&format!(
                    "| {} | {} | {} | {} | {} | {} | {} |\n",
                    d["vantage_id"].as_str().unwrap_or(""),
                    d["runs"],
                    c["NULL_ROUTE"],
                    c["REACHABLE"],
                    c["BGP_WITHDRAW"],
                    c["FIREWALL_ACL"],
                    c["AMBIGUOUS"]
                ));
            }
            if let Some(nr) = r["spread_pp"].get("NULL_ROUTE") {
                s.push_str(&format!("\nNR cross-vantage spread: {:.1} pp\n", f(nr)));
            }
        }
        "passive.json" => {
            let a = &r["analysis"];
            s.push_str(&format!("- onset (active): {}\n", a["onset"]["date"].as_str().unwrap_or("none")));
            s.push_str(&format!("- onset (totals): {}\n", a["total_onset"]["date"].as_str().unwrap_or("none")));
            if let Some(red) = a["reduction_pp"].as_object() {
                for (d, v) in red {
                    s.push_str(&format!("- reduction {d}: {:+.1} pp\n", round1(f(v))));
                }
            }
            for w in a["anomaly_windows"].as_array().into_iter().flatten() {
                s.push_str(&format!(
                    "- inflation {} to {}, peak {:.2}x on {}\n",
                    w["start"].as_str().unwrap_or(""),
                    w["end"].as_str().unwrap_or(""),
                    f(&w["peak_ratio"]),
                    w["peak_date"].as_str().unwrap_or("")
                ));
            }
        }
        "ascomp.json" => {
            for e in r["exemptions"]["findings"].as_array().into_iter().flatten() {
                if e["exempt"].as_bool() == Some(true) {
                    s.push_str(&format!("- exempt AS{}: retention {:.1}%\n", e["asn"], f(&e["retention"]) * 100.0));
                }
            }
            for at in r["attributions"].as_array().into_iter().flatten() {
                s.push_str(&format!(
                    "- attribution {} to {}: net {}\n",
                    at["from_date"].as_str().unwrap_or(""),
                    at["to_date"].as_str().unwrap_or(""),
                    at["net_delta"]
                ));
                for c in at["categories"].as_array().into_iter().flatten() {
                    if let Some(share) = c["share_of_net_delta"].as_f64() {
                        s.push_str(&format!(
                            "  - {}: {:.1}% of net\n",
                            c["category"].as_str().unwrap_or(""),
                            share * 100.0
                        ));
                    }
                }
            }
        }
        "probe.json" => {
            s.push_str(&format!("- {} targets via {} transport\n", r["targets"], r["transport"].as_str().unwrap_or("")));
        }
        _ => {}
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn snapshot_specs() {
        let s = parse_snapshot("2026-01-05:E1:baseline=rib/a.gz").unwrap();
        assert_eq!((s.event.as_str(), s.phase.as_str()), ("E1", "baseline"));
        assert_eq!(s.path, PathBuf::from("rib/a.gz"));
        let s = parse_snapshot("2026-01-05=x").unwrap();
        assert!(s.event.is_empty());
        assert!(parse_snapshot("2026-01-05").is_err());
        assert!(parse_snapshot("2026-13-05=x").is_err());
        assert!(parse_snapshot("2026-01-05:a:b:c=x").is_err());
    }

    #[test]
    fn transports() {
        assert_eq!(parse_transport("real").unwrap(), TransportArg::Real);
        assert_eq!(parse_transport("replay:f.jsonl").unwrap(), TransportArg::Replay("f.jsonl".into()));
        assert!(parse_transport("replay:").is_err());
        assert!(parse_transport("pcap:x").is_err());
    }

    #[test]
    fn date_pairs() {
        let p = parse_date_pair("2026-03-15:2026-03-17").unwrap();
        assert!(p.from < p.to);
        assert!(parse_date_pair("2026-03-15").is_err());
    }
}
