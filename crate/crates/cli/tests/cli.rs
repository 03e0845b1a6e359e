mod common;

use std::fs::File;

use common::{bin, cli, fixtures, fx, report_files, run_golden};
use serde_json::Value;
use shutdownlens_core::coverage::{compute_coverage, diff_coverage};
use shutdownlens_core::registry::{country_asns, country_prefixes, default_statuses, parse_delegated};
use shutdownlens_core::rib_ingest::{originated_prefixes, parse_bview};
use tempfile::TempDir;

fn out_dir() -> (TempDir, String) {
    let t = TempDir::new().unwrap();
    let p = t.path().join("out").display().to_string();
    (t, p)
}

fn json(path: impl AsRef<std::path::Path>) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn help_and_version_exit_zero() {
    assert_eq!(cli(&["--help"]).code, 0);
    assert_eq!(cli(&["--version"]).code, 0);
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let o = cli(&["rib", "--bogus"]);
    assert_eq!(o.code, 2);
    assert!(o.stderr.contains("--bogus"));
}

#[test]
fn missing_delegated_file_is_usage_error_with_no_output() {
    let (_t, out) = out_dir();
    let snap = format!("2026-01-05={}", fx("rib/bview.20260105.gz"));
    let o = cli(&["--out", &out, "rib", "--delegated", "/nonexistent/delegated.txt", "--snapshot", &snap]);
    assert_eq!(o.code, 2, "{}", o.stderr);
    assert!(o.stderr.contains("/nonexistent/delegated.txt"));
    assert!(!std::path::Path::new(&out).exists());
}

#[test]
fn rib_row_for_the_e1_baseline() {
    let (_t, out) = out_dir();
    let snap = format!("2026-01-05:E1:baseline={}", fx("rib/bview.20260105.gz"));
    let o = cli(&["--out", &out, "rib", "--delegated", &fx("rib/delegated-e1.txt"), "--snapshot", &snap]);
    assert_eq!(o.code, 0, "{}", o.stderr);
    assert!(o.stdout.contains("announced=8563 covered=1661/1896 coverage=87.6%"), "{}", o.stdout);
    let csv = std::fs::read_to_string(format!("{out}/coverage.csv")).unwrap();
    assert!(csv.starts_with("# manifest "));
    assert!(csv.contains("2026-01-05,E1,baseline,8563,1661,87.6"));
    let j = json(format!("{out}/coverage.json"));
    assert_eq!(j["manifest"]["subcommand"], "rib");
    assert_eq!(j["manifest"]["inputs"].as_array().unwrap().len(), 2);
    assert_eq!(j["report"]["allocated_prefixes"], 1896);
}

#[test]
fn rib_diff_equals_the_library_diff() {
    let (_t, out) = out_dir();
    let days = [("2019-11-17", "20191117.gz"), ("2019-11-20", "20191120.gz")];
    let mut args = vec!["--out".to_string(), out.clone(), "rib".into(), "--diff".into(), "--delegated".into()];
    args.push(fx("rib/delegated-2019.txt"));
    for (d, f) in days {
        args.push("--snapshot".into());
        args.push(format!("{d}={}", fx(&format!("rib/bview.{f}"))));
    }
    let o = cli(&args);
    assert_eq!(o.code, 0, "{}", o.stderr);

    let date = |s: &str| s.parse().unwrap();
    let d = parse_delegated(
        std::io::BufReader::new(File::open(fixtures().join("rib/delegated-2019.txt")).unwrap()),
        date(days[0].0),
    )
    .unwrap();
    let asns = country_asns(&d.records, "IR", &default_statuses());
    let alloc = country_prefixes(&d.records, "IR", &default_statuses());
    let cov: Vec<_> = days
        .iter()
        .map(|(day, f)| {
            let rib = parse_bview(File::open(fixtures().join(format!("rib/bview.{f}"))).unwrap(), date(day)).unwrap();
            compute_coverage(&alloc.prefixes, &originated_prefixes(&rib, &asns), date(day)).unwrap()
        })
        .collect();
    let expected = serde_json::to_value(vec![diff_coverage(&cov[0], &cov[1]).unwrap()]).unwrap();
    assert_eq!(json(format!("{out}/withdrawal.json"))["report"], expected);
}

#[test]
fn diff_needs_two_snapshots() {
    let (_t, out) = out_dir();
    let snap = format!("2026-01-05={}", fx("rib/bview.20260105.gz"));
    let o = cli(&["--out", &out, "rib", "--diff", "--delegated", &fx("rib/delegated-e1.txt"), "--snapshot", &snap]);
    assert_eq!(o.code, 2);
}

#[test]
fn corrupt_rib_is_a_data_error_naming_the_file() {
    let t = TempDir::new().unwrap();
    let bad = t.path().join("bad.mrt");
    std::fs::write(&bad, b"\x00\x00\x00\x01\x00\x0d\x00\x01\x00\x00\x00\xff").unwrap();
    let snap = format!("2026-01-05={}", bad.display());
    let out = t.path().join("out").display().to_string();
    let o = cli(&["--out", &out, "rib", "--delegated", &fx("rib/delegated-e1.txt"), "--snapshot", &snap]);
    assert_eq!(o.code, 1, "{}", o.stderr);
    assert!(o.stderr.contains("bad.mrt"));
}

#[test]
fn zero_rate_is_a_usage_error() {
    let (_t, out) = out_dir();
    let replay = format!("replay:{}", fx("probe/replay-run0.jsonl"));
    let o = cli(&["--out", &out, "probe", "--targets", &fx("probe/targets.txt"), "--rate", "0", "--transport", &replay]);
    assert_eq!(o.code, 2);
    assert!(o.stderr.contains("rate"));
}

#[test]
fn real_transport_needs_the_ethics_acknowledgment() {
    let (_t, out) = out_dir();
    let o = cli(&["--out", &out, "probe", "--targets", &fx("probe/targets.txt")]);
    assert_eq!(o.code, 2);
    assert!(o.stderr.contains("--i-understand-scanning-ethics"));
    assert!(!std::path::Path::new(&out).exists());
}

#[test]
fn replay_probe_is_byte_identical_across_runs() {
    let run = |out: &str| {
        let replay = format!("replay:{}", fx("probe/replay-run2.jsonl"));
        let o = cli(&[
            "--out", out, "probe", "--targets", &fx("probe/targets.txt"), "--transport", &replay, "--rate", "100000",
            "--vantage-id", "frankfurt", "--run-id", "2",
        ]);
        assert_eq!(o.code, 0, "{}", o.stderr);
        std::fs::read(format!("{out}/observations.jsonl")).unwrap()
    };
    let (_a, oa) = out_dir();
    let (_b, ob) = out_dir();
    let a = run(&oa);
    assert_eq!(a, run(&ob));
    assert_eq!(String::from_utf8(a).unwrap().lines().count(), 24);
}

#[test]
fn replayed_observations_match_the_fixture_log() {
    let fixture = std::fs::read_to_string(fixtures().join("probe/observations.jsonl")).unwrap();
    for run in 0..5u32 {
        let (_t, out) = out_dir();
        let replay = format!("replay:{}", fx(&format!("probe/replay-run{run}.jsonl")));
        let o = cli(&[
            "--out", &out, "probe", "--targets", &fx("probe/targets.txt"), "--transport", &replay, "--rate", "100000",
            "--vantage-id", "amsterdam", "--run-id", &run.to_string(),
        ]);
        assert_eq!(o.code, 0, "{}", o.stderr);
        for line in std::fs::read_to_string(format!("{out}/observations.jsonl")).unwrap().lines() {
            assert!(fixture.lines().any(|l| l == line), "run {run}: {line}");
        }
    }
}

#[test]
fn classify_prints_the_nr_spread() {
    let (_t, out) = out_dir();
    let mut args = vec!["--out".to_string(), out.clone(), "classify".into(), "--consensus".into()];
    for v in ["amsterdam", "frankfurt", "istanbul", "new-york", "singapore"] {
        args.push(fx(&format!("probe/consensus-{v}.csv")));
    }
    let o = cli(&args);
    assert_eq!(o.code, 0, "{}", o.stderr);
    assert!(o.stdout.contains("NR cross-vantage spread: 0.9 pp"), "{}", o.stdout);
    assert!(o.stdout.contains("4416/92/57/6/0"));
}

#[test]
fn single_run_consensus_is_the_run_itself() {
    let t = TempDir::new().unwrap();
    let one: String = std::fs::read_to_string(fixtures().join("probe/observations.jsonl"))
        .unwrap()
        .lines()
        .filter(|l| l.contains("\"run_id\":0,") && l.contains("amsterdam"))
        .map(|l| format!("{l}\n"))
        .collect();
    let f = t.path().join("one.jsonl");
    std::fs::write(&f, one).unwrap();
    let out = t.path().join("out").display().to_string();
    let o = cli(&["--out", &out, "classify", "--observations", &f.display().to_string()]);
    assert_eq!(o.code, 0, "{}", o.stderr);
    let csv = std::fs::read_to_string(format!("{out}/consensus.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().skip(2).collect();
    assert_eq!(rows.len(), 24);
    assert!(rows.iter().all(|r| r.ends_with(",1.0000,1")), "{csv}");
}

#[test]
fn empty_observation_file_is_an_error() {
    let t = TempDir::new().unwrap();
    let f = t.path().join("empty.jsonl");
    std::fs::write(&f, "").unwrap();
    let out = t.path().join("out").display().to_string();
    let o = cli(&["--out", &out, "classify", "--observations", &f.display().to_string()]);
    assert_eq!(o.code, 1);
    assert!(o.stderr.contains("empty.jsonl"));
}

#[test]
fn mixed_port_configurations_are_rejected() {
    let t = TempDir::new().unwrap();
    let text = std::fs::read_to_string(fixtures().join("probe/observations.jsonl")).unwrap();
    let mut lines: Vec<String> = text.lines().take(3).map(String::from).collect();
    lines[1] = lines[1].replace("\"179\":", "\"22\":");
    let f = t.path().join("mixed.jsonl");
    std::fs::write(&f, lines.join("\n")).unwrap();
    let out = t.path().join("out").display().to_string();
    let o = cli(&["--out", &out, "classify", "--observations", &f.display().to_string()]);
    assert_eq!(o.code, 1);
    assert!(o.stderr.contains("ports"), "{}", o.stderr);
}

fn passive_args(out: &str) -> Vec<String> {
    vec![
        "--out".into(),
        out.into(),
        "passive".into(),
        "--series".into(),
        fx("passive/series-ir.csv"),
        "--baseline".into(),
        fx("passive/baseline-ir.csv"),
        "--reference-date".into(),
        "2026-01-07".into(),
        "--key-dates".into(),
        "2026-01-12,2026-03-01,2026-03-15".into(),
    ]
}

#[test]
fn passive_without_control_warns_and_skips_inflation() {
    let (_t, out) = out_dir();
    let o = cli(&passive_args(&out));
    assert_eq!(o.code, 0, "{}", o.stderr);
    assert!(o.stderr.contains("inflation detection skipped"));
    for r in ["-95.3", "-96.8", "-97.6"] {
        assert!(o.stdout.contains(r), "{}", o.stdout);
    }
    let j = json(format!("{out}/passive.json"));
    assert_eq!(j["report"]["inflation_checked"], false);
    assert!(j["report"]["analysis"]["anomaly_windows"].as_array().unwrap().is_empty());
}

#[test]
fn short_baseline_is_an_error() {
    let t = TempDir::new().unwrap();
    let f = t.path().join("baseline.csv");
    std::fs::write(&f, "date,total,pending,country\n2026-01-07,935832,140375,IR\n2025-12-15,1000000,0,IR\n").unwrap();
    let out = t.path().join("out").display().to_string();
    let mut args = passive_args(&out);
    args[6] = f.display().to_string();
    let o = cli(&args);
    assert_eq!(o.code, 1);
    assert!(o.stderr.contains("at least 3"), "{}", o.stderr);
}

fn ascomp_args(out: &str, counts: &str) -> Vec<String> {
    vec![
        "--out".into(),
        out.into(),
        "ascomp".into(),
        "--counts".into(),
        counts.into(),
        "--metadata".into(),
        fx("ascomp/metadata.csv"),
        "--rules".into(),
        fx("ascomp/rules.json"),
        "--overrides".into(),
        fx("ascomp/overrides.json"),
    ]
}

#[test]
fn ascomp_reports_academic_share() {
    let (_t, out) = out_dir();
    let o = cli(&ascomp_args(&out, &fx("ascomp/counts.csv")));
    assert_eq!(o.code, 0, "{}", o.stderr);
    let line = o.stdout.lines().find(|l| l.starts_with("academic")).unwrap();
    assert!(line.trim_end().ends_with("66.6"), "{line}");
}

#[test]
fn unknown_asn_is_named() {
    let t = TempDir::new().unwrap();
    let mut counts = std::fs::read_to_string(fixtures().join("ascomp/counts.csv")).unwrap();
    counts.push_str("2026-03-17,65999,10\n");
    let f = t.path().join("counts.csv");
    std::fs::write(&f, counts).unwrap();
    let out = t.path().join("out").display().to_string();
    let o = cli(&ascomp_args(&out, &f.display().to_string()));
    assert_eq!(o.code, 1);
    assert!(o.stderr.contains("AS65999"), "{}", o.stderr);
}

#[test]
fn equal_attribution_dates_are_rejected() {
    let (_t, out) = out_dir();
    let mut args = ascomp_args(&out, &fx("ascomp/counts.csv"));
    args.extend(["--attribution".into(), "2026-03-17:2026-03-17".into()]);
    assert_eq!(cli(&args).code, 2);
}

#[test]
fn config_file_overrides_and_digest() {
    let t = TempDir::new().unwrap();
    let cfg = t.path().join("c.toml");
    std::fs::write(&cfg, "[coverage]\nwithdrawal_threshold_pp = 30.0\n").unwrap();
    let out = t.path().join("out").display().to_string();
    let mut args = vec!["--config".to_string(), cfg.display().to_string(), "--out".into(), out.clone()];
    args.extend(["rib".into(), "--diff".into(), "--delegated".into(), fx("rib/delegated-2019.txt")]);
    for (d, f) in [("2019-11-17", "20191117.gz"), ("2019-11-20", "20191120.gz")] {
        args.push("--snapshot".into());
        args.push(format!("{d}={}", fx(&format!("rib/bview.{f}"))));
    }
    let o = cli(&args);
    assert_eq!(o.code, 0, "{}", o.stderr);
    assert!(!o.stdout.contains("WITHDRAWAL"));
    let j = json(format!("{out}/withdrawal.json"));
    assert_ne!(
        j["manifest"]["config_digest"].as_str().unwrap(),
        shutdownlens::config::Config::default().digest()
    );

    std::fs::write(&cfg, "[coverage]\nwithdrawal = 30.0\n").unwrap();
    assert_eq!(cli(&args).code, 2);
}

#[test]
fn format_flag_limits_outputs() {
    let (_t, out) = out_dir();
    let mut args = passive_args(&out);
    args.splice(0..0, ["--format".to_string(), "json".to_string()]);
    assert_eq!(cli(&args).code, 0);
    assert!(std::path::Path::new(&format!("{out}/passive.json")).exists());
    assert!(!std::path::Path::new(&format!("{out}/passive.csv")).exists());
    let m = json(format!("{out}/passive.manifest.json"));
    assert!(m["started_at"].is_string() && m["finished_at"].is_string());
}

#[test]
fn process_exit_codes() {
    let t = TempDir::new().unwrap();
    assert_eq!(bin(t.path(), &["probe", "--targets", "nope.txt"]).code, 2);
    assert_eq!(bin(t.path(), &["report", "--dir", "."]).code, 1);
    assert_eq!(bin(t.path(), &["bogus"]).code, 2);
}

#[test]
fn golden_reports_are_stable() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    run_golden(a.path()).unwrap();
    run_golden(b.path()).unwrap();
    let (fa, fb) = (report_files(a.path()), report_files(b.path()));
    assert!(fa.len() > 30);
    assert_eq!(fa.keys().collect::<Vec<_>>(), fb.keys().collect::<Vec<_>>());
    for (k, v) in &fa {
        assert!(v == &fb[k], "{} differs between runs", k.display());
    }
}
