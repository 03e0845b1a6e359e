#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::Command;

pub fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures")
        .canonicalize()
        .expect("fixtures directory")
}

pub fn fx(rel: &str) -> String {
    fixtures().join(rel).display().to_string()
}

pub struct Outcome {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

/// Run the CLI in-process.
pub fn cli<S: AsRef<str>>(args: &[S]) -> Outcome {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let argv = std::iter::once("shutdownlens".to_string()).chain(args.iter().map(|a| a.as_ref().to_string()));
    let code = shutdownlens::run(argv, &mut out, &mut err);
    Outcome {
        code,
        stdout: String::from_utf8(out).unwrap(),
        stderr: String::from_utf8(err).unwrap(),
    }
}

/// Run the built binary from `cwd`.
pub fn bin<S: AsRef<str>>(cwd: &Path, args: &[S]) -> Outcome {
    let o = Command::new(env!("CARGO_BIN_EXE_shutdownlens"))
        .current_dir(cwd)
        .args(args.iter().map(|a| a.as_ref()))
        .output()
        .expect("spawn shutdownlens");
    Outcome {
        code: o.status.code().unwrap_or(-1),
        stdout: String::from_utf8_lossy(&o.stdout).into_owned(),
        stderr: String::from_utf8_lossy(&o.stderr).into_owned(),
    }
}

type Snaps = &'static [(&'static str, &'static str)];

fn snap(date: &str, event: &str, phase: &str) -> String {
    let compact = date.replace('-', "");
    let ext = if compact == "20191121" { "bz2" } else { "gz" };
    format!("{date}:{event}:{phase}={}", fx(&format!("rib/bview.{compact}.{ext}")))
}

fn s(v: &[&str]) -> Vec<String> {
    v.iter().map(|x| x.to_string()).collect()
}

/// Every subcommand over the bundled fixtures, each into its own relative
/// output directory.
pub fn golden_invocations() -> Vec<Vec<String>> {
    let mut runs = Vec::new();
    let events: [(&str, &str, Snaps); 3] = [
        ("2019", "rib-2019", &[("2019-11-10", "baseline"), ("2019-11-17", "onset"), ("2019-11-20", "deep"), ("2019-11-21", "floor")]),
        ("2022", "rib-2022", &[("2022-09-14", "baseline"), ("2022-09-25", "deep")]),
        ("E1", "rib-e1", &[("2026-01-05", "baseline"), ("2026-01-10", "onset"), ("2026-01-12", "deep")]),
    ];
    for (event, dir, snaps) in events {
        let mut a = s(&["--out", dir, "rib", "--diff", "--delegated"]);
        a.push(fx(&format!("rib/delegated-{}.txt", event.to_lowercase())));
        for (d, p) in snaps {
            a.push("--snapshot".into());
            a.push(snap(d, event, p));
        }
        runs.push(a);
    }
    for run in 0..5 {
        let mut a = s(&["--out", &format!("probe-run{run}"), "probe", "--vantage-id", "amsterdam", "--rate", "100000"]);
        a.extend(["--run-id".into(), run.to_string(), "--targets".into(), fx("probe/targets.txt")]);
        a.extend(["--transport".into(), format!("replay:{}", fx(&format!("probe/replay-run{run}.jsonl")))]);
        runs.push(a);
    }
    let mut a = s(&["--out", "classify", "classify", "--consensus"]);
    for v in ["amsterdam", "frankfurt", "istanbul", "new-york", "singapore"] {
        a.push(fx(&format!("probe/consensus-{v}.csv")));
    }
    runs.push(a);
    runs.push(vec![
        "--out".into(),
        "classify-obs".into(),
        "classify".into(),
        "--per-vantage".into(),
        "--observations".into(),
        fx("probe/observations.jsonl"),
    ]);
    for (dir, control) in [("passive", "control-tr.csv"), ("passive-inflated", "control-tr-inflated.csv")] {
        runs.push(vec![
            "--out".into(),
            dir.into(),
            "passive".into(),
            "--series".into(),
            fx("passive/series-ir.csv"),
            "--baseline".into(),
            fx("passive/baseline-ir.csv"),
            "--reference-date".into(),
            "2026-01-07".into(),
            "--control".into(),
            fx(&format!("passive/{control}")),
            "--control-baseline".into(),
            fx("passive/baseline-tr.csv"),
            "--key-dates".into(),
            "2026-01-12,2026-03-01,2026-03-15".into(),
        ]);
    }
    runs.push(vec![
        "--out".into(),
        "passive-march".into(),
        "passive".into(),
        "--series".into(),
        fx("passive/series-ir.csv"),
        "--baseline".into(),
        fx("passive/baseline-ir.csv"),
        "--reference-date".into(),
        "2026-01-07".into(),
        "--from".into(),
        "2026-02-27".into(),
        "--to".into(),
        "2026-03-15".into(),
    ]);
    runs.push(vec![
        "--out".into(),
        "ascomp".into(),
        "ascomp".into(),
        "--counts".into(),
        fx("ascomp/counts.csv"),
        "--metadata".into(),
        fx("ascomp/metadata.csv"),
        "--rules".into(),
        fx("ascomp/rules.json"),
        "--overrides".into(),
        fx("ascomp/overrides.json"),
        "--baseline-date".into(),
        "2026-03-01".into(),
        "--event-dates".into(),
        "2026-03-02,2026-03-15,2026-03-17".into(),
        "--attribution".into(),
        "2026-03-15:2026-03-17".into(),
        "--attribution".into(),
        "2026-01-07:2026-03-17".into(),
    ]);
    let dirs: Vec<String> = runs.iter().map(|r| r[1].clone()).collect();
    for d in dirs {
        runs.push(vec!["--out".into(), d.clone(), "report".into(), "--dir".into(), d]);
    }
    runs
}

/// Run every golden invocation with the binary inside `root`.
pub fn run_golden(root: &Path) -> Result<(), String> {
    for args in golden_invocations() {
        let o = bin(root, &args);
        if o.code != 0 {
            return Err(format!("{args:?} exited {}: {}", o.code, o.stderr));
        }
    }
    Ok(())
}

/// All report files under `root` except run manifests, which carry wall-clock times.
pub fn report_files(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for e in std::fs::read_dir(&dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else if !p.to_string_lossy().ends_with(".manifest.json") {
                out.insert(p.strip_prefix(root).unwrap().to_path_buf(), std::fs::read(&p).unwrap());
            }
        }
    }
    out
}
