//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

mod common;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::File;
use std::net::Ipv4Addr;
use std::time::{Duration, Instant};

use chrono::NaiveDate;
use ipnet::Ipv4Net;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;
use tempfile::TempDir;

use shutdownlens_core::ascomp::{
    categorize_all, composition, exemptions, load_keyword_rules, load_overrides, read_counts_csv, read_metadata_csv,
    recovery_attribution, Category,
};
use shutdownlens_core::coverage::compute_coverage;
use shutdownlens_core::harness::{coverage_oracle, random_entries, random_universe, synth_rib, SynthPeer, RibWriter};
use shutdownlens_core::passive::{
    analyze, build_baseline, decompose_pending, detect_inflation, detect_onset, read_series_csv, round1, CountBasis,
    HostSnapshot, PassiveConfig, PendingSplit,
};
use shutdownlens_core::prober::OutcomeKind;
use shutdownlens_core::registry::decompose;
use shutdownlens_core::rib_ingest::{parse_bview, AsPath, RouteEntry};
use shutdownlens_core::verdicts::{
    classify, consensus, cross_vantage_spread, distribution, read_consensus_csv, Verdict,
};

use common::{cli, fixtures, fx, report_files, run_golden};

type Check = Result<String, String>;
type Criterion = (&'static str, fn() -> Check);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(x: f64, target: f64, tol: f64, what: &str) -> Result<(), String> {
    ensure((x - target).abs() <= tol + 1e-9, || format!("{what} = {x:.4}, expected {target} ± {tol}"))
}

fn date(s: &str) -> NaiveDate {
    s.parse().unwrap()
}

fn timed(limit: Duration, what: &str, started: Instant) -> Result<Duration, String> {
    let t = started.elapsed();
    ensure(t < limit, || format!("{what} took {t:?}, limit {limit:?}"))?;
    Ok(t)
}

// 1 -----------------------------------------------------------------------

/// Reference table written out case by case.
fn classify_oracle(o: [OutcomeKind; 3]) -> Verdict {
    use OutcomeKind::*;
    let app = [o[0], o[1]];
    let syn = app.contains(&SynAck);
    let icmp = o.contains(&IcmpUnreachable);
    let app_rst = app.contains(&Rst);
    match (o == [Timeout; 3], syn, icmp, app == [Timeout; 2] && o[2] == Rst, app_rst) {
        (true, ..) => Verdict::NullRoute,
        (false, true, ..) => Verdict::Reachable,
        (false, false, true, ..) => Verdict::BgpWithdraw,
        (false, false, false, true, _) => Verdict::FirewallAcl,
        (false, false, false, false, true) => Verdict::Reachable,
        _ => Verdict::Ambiguous,
    }
}

fn c1_classifier_totality() -> Check {
    use OutcomeKind::*;
    let started = Instant::now();
    let kinds = [SynAck, Rst, Timeout, IcmpUnreachable];
    let mut seen = 0;
    let mut null_routes = 0;
    for a in kinds {
        for b in kinds {
            for c in kinds {
                let v = classify(a, b, c);
                ensure(v == classify_oracle([a, b, c]), || format!("({a:?},{b:?},{c:?}) gave {v}"))?;
                null_routes += usize::from(v == Verdict::NullRoute);
                seen += 1;
            }
        }
    }
    ensure(seen == 64, || format!("{seen} triples"))?;
    ensure(null_routes == 1, || format!("{null_routes} triples yield NULL_ROUTE"))?;
    let anchored = [
        ([Timeout, Timeout, Timeout], Verdict::NullRoute),
        ([Timeout, Timeout, Rst], Verdict::FirewallAcl),
        ([SynAck, Timeout, IcmpUnreachable], Verdict::Reachable),
        ([Timeout, IcmpUnreachable, Timeout], Verdict::BgpWithdraw),
        ([Timeout, Timeout, SynAck], Verdict::Ambiguous),
    ];
    for (t, want) in anchored {
        let got = classify(t[0], t[1], t[2]);
        ensure(got == want, || format!("{t:?} gave {got}, expected {want}"))?;
    }
    let t = timed(Duration::from_secs(1), "classification", started)?;
    Ok(format!("64 triples, 1 NULL_ROUTE, anchors hold, {t:?}"))
}

// 2 -----------------------------------------------------------------------

fn c2_consensus() -> Check {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for case in 0..10_000 {
        let truth = Verdict::ALL[rng.gen_range(0..5)];
        let runs = rng.gen_range(1..=34usize);
        let noise = rng.gen_range(0.0..=0.49);
        let noised = (noise * runs as f64).floor() as usize;
        let mut vs: Vec<Verdict> = (0..runs)
            .map(|i| {
                if i < noised {
                    let others: Vec<Verdict> = Verdict::ALL.into_iter().filter(|v| *v != truth).collect();
                    *others.choose(&mut rng).unwrap()
                } else {
                    truth
                }
            })
            .collect();
        vs.shuffle(&mut rng);
        let (v, support) = consensus(&vs).map_err(|e| e.to_string())?;
        let want_support = (runs - noised) as f64 / runs as f64;
        ensure(v == truth && (support - want_support).abs() < 1e-12, || {
            format!("case {case}: {runs} runs, {noised} noised, truth {truth}, got {v} @ {support}")
        })?;
        for _ in 0..3 {
            vs.shuffle(&mut rng);
            ensure(consensus(&vs).map_err(|e| e.to_string())? == (v, support), || {
                format!("case {case}: permutation changed the result")
            })?;
        }
    }
    let t = timed(Duration::from_secs(10), "consensus cases", started)?;
    Ok(format!("10000 cases, 0 failures, {t:?}"))
}

// 3 -----------------------------------------------------------------------

fn c3_vantage_counts() -> Check {
    let table: [(&str, [usize; 5]); 5] = [
        ("amsterdam", [4416, 92, 57, 6, 0]),
        ("frankfurt", [4453, 95, 17, 6, 0]),
        ("istanbul", [4444, 97, 24, 6, 0]),
        ("new-york", [4410, 97, 57, 6, 1]),
        ("singapore", [4451, 94, 20, 6, 0]),
    ];
    let mut dists = Vec::new();
    for (vantage, want) in table {
        let recs = read_consensus_csv(File::open(fixtures().join(format!("probe/consensus-{vantage}.csv"))).unwrap())
            .map_err(|e| e.to_string())?;
        let d = distribution(&recs, vantage).map_err(|e| e.to_string())?;
        let got: Vec<usize> = Verdict::ALL.iter().map(|&v| d.count(v)).collect();
        ensure(got == want, || format!("{vantage}: {got:?} != {want:?}"))?;
        dists.push(d);
    }
    let spread = cross_vantage_spread(&dists, Verdict::NullRoute).map_err(|e| e.to_string())?;
    let by_hand = (4453.0 - 4410.0) / 4571.0 * 100.0;
    within(spread, by_hand, 1e-9, "NR spread vs hand count")?;
    within(spread, 0.9, 0.05, "NR spread")?;
    Ok(format!("25 cells match, NR spread {spread:.3} pp"))
}

// 4 -----------------------------------------------------------------------

fn c4_coverage_oracle() -> Check {
    let started = Instant::now();
    let (mut covered_total, mut empty) = (0, 0);
    for seed in 0..1000u64 {
        let u = random_universe(seed);
        if u.allocated.is_empty() {
            ensure(coverage_oracle(&u.allocated_cidrs(), &u.announced).is_empty(), || format!("seed {seed}"))?;
            empty += 1;
            continue;
        }
        let got = compute_coverage(&u.allocated, &u.announced, date("2026-01-01")).map_err(|e| e.to_string())?;
        let got: BTreeSet<Ipv4Net> = got.covered.iter().map(|p| p.cidr).collect();
        let want = coverage_oracle(&u.allocated_cidrs(), &u.announced);
        ensure(got == want, || format!("seed {seed}: {} vs {} covered", got.len(), want.len()))?;
        covered_total += got.len();
    }
    let t = timed(Duration::from_secs(30), "1000 universes", started)?;
    Ok(format!(
        "1000 universes equal ({empty} with no allocation), {covered_total} covered prefixes total, {t:?}"
    ))
}

// 5 -----------------------------------------------------------------------

fn rib_run(event: &str, snaps: &[(&str, &str)]) -> Result<(Vec<Value>, Vec<Value>), String> {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("out").display().to_string();
    let mut args = vec!["--out".to_string(), out.clone(), "rib".into(), "--diff".into(), "--delegated".into()];
    args.push(fx(&format!("rib/delegated-{}.txt", event.to_lowercase())));
    for (d, file) in snaps {
        args.push("--snapshot".into());
        args.push(format!("{d}:{event}:x={}", fx(&format!("rib/{file}"))));
    }
    let o = cli(&args);
    ensure(o.code == 0, || format!("rib {event}: {}", o.stderr))?;
    let read = |name: &str| -> Value {
        serde_json::from_str(&std::fs::read_to_string(format!("{out}/{name}")).unwrap()).unwrap()
    };
    let rows = read("coverage.json")["report"]["rows"].as_array().unwrap().clone();
    let diffs = read("withdrawal.json")["report"].as_array().unwrap().clone();
    Ok((rows, diffs))
}

fn c5_coverage_snapshots() -> Check {
    let (r19, d19) = rib_run(
        "2019",
        &[
            ("2019-11-10", "bview.20191110.gz"),
            ("2019-11-17", "bview.20191117.gz"),
            ("2019-11-20", "bview.20191120.gz"),
            ("2019-11-21", "bview.20191121.bz2"),
        ],
    )?;
    let (r22, d22) = rib_run("2022", &[("2022-09-14", "bview.20220914.gz"), ("2022-09-25", "bview.20220925.gz")])?;
    let (r26, d26) = rib_run(
        "E1",
        &[
            ("2026-01-05", "bview.20260105.gz"),
            ("2026-01-10", "bview.20260110.gz"),
            ("2026-01-12", "bview.20260112.gz"),
        ],
    )?;
    let pct = |rows: &[Value], d: &str| -> f64 {
        rows.iter().find(|r| r["date"] == d).map(|r| r["coverage_pct"].as_f64().unwrap()).unwrap_or(f64::NAN)
    };
    let e1 = pct(&r26, "2026-01-05");
    within(e1, 87.6, 0.05, "coverage 2026-01-05")?;
    ensure(r26[0]["announced"] == 8563, || format!("announced {}", r26[0]["announced"]))?;
    let deep = pct(&r19, "2019-11-20");
    within(deep, 62.3, 0.05, "coverage 2019-11-20")?;
    let floor = pct(&r19, "2019-11-21");
    within(floor, 54.7, 0.05, "coverage floor 2019-11-21")?;
    let var22 = (pct(&r22, "2022-09-14") - pct(&r22, "2022-09-25")).abs();
    within(var22, 1.7, 0.05, "2022 within-event variation")?;
    let flagged = |d: &[Value]| d.iter().filter(|x| x["withdrawal_event"] == true).count();
    ensure(flagged(&d19) > 0, || "no 2019 pair flagged".into())?;
    ensure(flagged(&d22) == 0 && flagged(&d26) == 0, || {
        format!("non-2019 pairs flagged: 2022 {}, 2026 {}", flagged(&d22), flagged(&d26))
    })?;
    Ok(format!(
        "87.6 -> {e1:.2}, 62.3 -> {deep:.2}, 54.7 -> {floor:.2}, 2022 variation {var22:.3} pp, {} 2019 pair(s) flagged, others none",
        flagged(&d19)
    ))
}

// 6-8 ----------------------------------------------------------------------

fn series(rel: &str, country: &str) -> Vec<HostSnapshot> {
    read_series_csv(File::open(fixtures().join(rel)).unwrap()).unwrap().for_country(country)
}

/// date -> (total, pending), read with plain string handling.
fn raw_rows(rel: &str) -> BTreeMap<String, (f64, f64)> {
    std::fs::read_to_string(fixtures().join(rel))
        .unwrap()
        .lines()
        .skip(1)
        .filter(|l| !l.starts_with('#') && !l.is_empty())
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[0].to_string(), (f[1].parse().unwrap(), f[2].parse().unwrap_or(0.0)))
        })
        .collect()
}

fn c6_reductions() -> Check {
    let s = series("passive/series-ir.csv", "IR");
    let band = build_baseline(&series("passive/baseline-ir.csv", "IR"), date("2026-01-07")).map_err(|e| e.to_string())?;
    let a = analyze(&s, &band, None, &[], &PassiveConfig::default()).map_err(|e| e.to_string())?;
    let raw = raw_rows("passive/series-ir.csv");
    let base = raw_rows("passive/baseline-ir.csv");
    let reference = base["2026-01-07"].0;
    let mut report = Vec::new();
    for (d, want) in [("2026-01-12", -95.3), ("2026-03-01", -96.8), ("2026-03-15", -97.6)] {
        let got = round1(a.reduction_pp[&date(d)]);
        let (t, p) = raw[d];
        let by_hand = ((t - p) - reference) / reference * 100.0;
        within(got, want, 0.1, &format!("reduction {d}"))?;
        within(a.reduction_pp[&date(d)], by_hand, 1e-9, &format!("reduction {d} vs hand"))?;
        report.push(format!("{d} {got:+.1}"));
    }
    let snap = |d: &str| s.iter().find(|x| x.date == date(d)).unwrap().clone();
    let PendingSplit::Split { pending_fraction, .. } = decompose_pending(&snap("2026-03-01")) else {
        return Err("Mar 1 snapshot empty".into());
    };
    within(pending_fraction * 100.0, 99.1, 0.05, "Mar 1 pending %")?;
    let PendingSplit::Split { pending_fraction: p2, carryover, .. } = decompose_pending(&snap("2026-03-02")) else {
        return Err("Mar 2 snapshot empty".into());
    };
    within(p2 * 100.0, 86.1, 0.05, "Mar 2 pending %")?;
    ensure(carryover, || "Mar 2 carry-over flag not set".into())?;
    Ok(format!(
        "{}, Mar 1 pending {:.1}%, Mar 2 carry-over at {:.1}%",
        report.join(", "),
        pending_fraction * 100.0,
        p2 * 100.0
    ))
}

fn c7_onset() -> Check {
    let s: Vec<HostSnapshot> = series("passive/series-ir.csv", "IR")
        .into_iter()
        .filter(|x| x.date >= date("2026-02-27") && x.date <= date("2026-03-15"))
        .collect();
    let band = build_baseline(&series("passive/baseline-ir.csv", "IR"), date("2026-01-07")).map_err(|e| e.to_string())?;
    let thr = PassiveConfig::default().onset_threshold;
    let on = |basis| detect_onset(&s, &band, thr, basis).map_err(|e| e.to_string());
    let active = on(CountBasis::Active)?.map(|o| o.date);
    let total = on(CountBasis::Total)?.map(|o| o.date);
    let scan = |f: &dyn Fn(&HostSnapshot) -> u64| {
        s.iter().find(|x| (f(x) as f64) < thr * band.reference as f64).map(|x| x.date)
    };
    ensure(active == scan(&|x| x.total - x.pending), || format!("active onset {active:?} disagrees with scan"))?;
    ensure(total == scan(&|x| x.total), || format!("total onset {total:?} disagrees with scan"))?;
    ensure(active == Some(date("2026-03-01")), || format!("active onset {active:?}"))?;
    ensure(total == Some(date("2026-03-02")), || format!("total onset {total:?}"))?;
    Ok("active-count onset 2026-03-01, total-count onset 2026-03-02".into())
}

fn c8_inflation() -> Check {
    let s = series("passive/series-ir.csv", "IR");
    let band = build_baseline(&series("passive/baseline-ir.csv", "IR"), date("2026-01-07")).map_err(|e| e.to_string())?;
    let cband = build_baseline(&series("passive/baseline-tr.csv", "TR"), date("2026-01-07")).map_err(|e| e.to_string())?;
    let ratio = PassiveConfig::default().inflation_ratio;
    let flat = series("passive/control-tr.csv", "TR");
    let w = detect_inflation(&s, &band, &flat, &cband, ratio).map_err(|e| e.to_string())?;
    ensure(w.len() == 1, || format!("{} windows with a flat control", w.len()))?;
    let w = &w[0];
    within(w.peak_ratio, 3.7, 0.1, "peak ratio")?;
    ensure(w.peak_date == date("2026-02-26"), || format!("peak on {}", w.peak_date))?;
    let peak_by_hand = s.iter().map(|x| x.total).max().unwrap() as f64 / band.reference as f64;
    within(w.peak_ratio, peak_by_hand, 1e-9, "peak ratio vs series maximum")?;
    let inflated = series("passive/control-tr-inflated.csv", "TR");
    let suppressed = detect_inflation(&s, &band, &inflated, &cband, ratio).map_err(|e| e.to_string())?;
    ensure(suppressed.is_empty(), || format!("{} windows with an inflated control", suppressed.len()))?;
    Ok(format!(
        "one window {}..{}, peak {:.2}x on {}, suppressed by inflated control",
        w.start, w.end, w.peak_ratio, w.peak_date
    ))
}

// 9 -----------------------------------------------------------------------

fn c9_ascomp() -> Check {
    let counts = read_counts_csv(File::open(fixtures().join("ascomp/counts.csv")).unwrap()).map_err(|e| e.to_string())?;
    let meta = read_metadata_csv(File::open(fixtures().join("ascomp/metadata.csv")).unwrap()).map_err(|e| e.to_string())?;
    let rules = load_keyword_rules(&std::fs::read_to_string(fixtures().join("ascomp/rules.json")).unwrap())
        .map_err(|e| e.to_string())?;
    let overrides = load_overrides(&std::fs::read_to_string(fixtures().join("ascomp/overrides.json")).unwrap())
        .map_err(|e| e.to_string())?;
    let records = categorize_all(&meta, &rules, &overrides);
    let cells = composition(&counts, &records).map_err(|e| e.to_string())?;
    let share = |d: &str| {
        cells
            .iter()
            .find(|c| c.date == date(d) && c.category == Category::Academic)
            .map(|c| c.share * 100.0)
            .unwrap_or(f64::NAN)
    };

    // independent tally of academic hosts per date
    let academic: HashMap<u32, bool> = records.iter().map(|(a, r)| (*a, r.category == Category::Academic)).collect();
    let hand = |d: &str| {
        let (mut acad, mut all) = (0u64, 0u64);
        for ((day, asn), h) in &counts {
            if *day == date(d) {
                all += h;
                if academic[asn] {
                    acad += h;
                }
            }
        }
        acad as f64 / all as f64 * 100.0
    };
    for (d, want) in [("2026-03-17", 66.6), ("2026-01-07", 1.4)] {
        within(share(d), want, 0.05, &format!("academic share {d}"))?;
        within(share(d), hand(d), 1e-9, &format!("academic share {d} vs hand tally"))?;
    }

    let at = recovery_attribution(&counts, date("2026-03-15"), date("2026-03-17"), &records).map_err(|e| e.to_string())?;
    let acad = at.category(Category::Academic).share_of_net_delta.unwrap_or(f64::NAN) * 100.0;
    within(acad, 79.5, 0.2, "academic share of recovery")?;
    let mcci = at.asn(197207).ok_or("MCCI missing from attribution")?;
    ensure(mcci.anti_correlated, || format!("MCCI delta {} not flagged", mcci.delta))?;

    let ex = exemptions(
        &counts,
        date("2026-03-01"),
        &[date("2026-03-02"), date("2026-03-15"), date("2026-03-17")],
        0.95,
    )
    .map_err(|e| e.to_string())?;
    let arvan = ex.get(205585).ok_or("ArvanCloud missing from exemptions")?;
    within(arvan.retention * 100.0, 99.7, 0.05, "ArvanCloud retention")?;
    ensure(arvan.exempt, || "ArvanCloud not exempt".into())?;
    let others: Vec<u32> = ex.exempt().map(|f| f.asn).filter(|a| *a != 205585).collect();
    ensure(others.is_empty(), || format!("other exempt ASes {others:?}"))?;
    Ok(format!(
        "academic {:.1}% / {:.1}%, recovery share {acad:.2}%, ArvanCloud {:.1}% exempt, MCCI {:+} anti-correlated",
        share("2026-03-17"),
        share("2026-01-07"),
        arvan.retention * 100.0,
        mcci.delta
    ))
}

// 10 ----------------------------------------------------------------------

fn c10_decomposition() -> Check {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut blocks = 0usize;
    for case in 0..10_000 {
        let count = rng.gen_range(1..=4096u32);
        let start = rng.gen_range(0..=u32::MAX - (count - 1));
        let cidrs = decompose(start, count).ok_or_else(|| format!("case {case}: no decomposition"))?;
        let lo = start as u64;
        let hi = lo + count as u64 - 1;
        let mut next = lo;
        for c in &cidrs {
            let (a, b) = (u32::from(c.network()) as u64, u32::from(c.broadcast()) as u64);
            let size = 1u64 << (32 - c.prefix_len());
            ensure(a % size == 0, || format!("case {case}: {c} not aligned"))?;
            ensure(a == next, || format!("case {case}: gap or overlap at {c}"))?;
            // a block is maximal when its parent leaves the interval
            if c.prefix_len() > 0 {
                let parent = c.supernet().unwrap();
                let (pa, pb) = (u32::from(parent.network()) as u64, u32::from(parent.broadcast()) as u64);
                ensure(pa < lo || pb > hi, || format!("case {case}: {c} could merge into {parent}"))?;
            }
            next = b + 1;
        }
        ensure(next == hi + 1, || format!("case {case}: cover ends at {next}, interval at {}", hi + 1))?;
        blocks += cidrs.len();
    }
    let t = timed(Duration::from_secs(30), "decomposition", started)?;
    Ok(format!("10000 records, {blocks} blocks, all aligned, disjoint, exact and maximal, {t:?}"))
}

// 11 ----------------------------------------------------------------------

fn c11_mrt() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for case in 0..1000 {
        let n = rng.gen_range(0..80);
        let entries = random_entries(&mut rng, n);
        let bytes = synth_rib(&entries).map_err(|e| format!("case {case}: {e}"))?;
        let snap = parse_bview(&bytes[..], date("2026-01-05")).map_err(|e| format!("case {case}: {e}"))?;
        ensure(snap.entries == entries, || format!("case {case}: round trip differs"))?;
    }

    let big: Vec<RouteEntry> = (0..100_000u32)
        .map(|i| {
            let prefix = Ipv4Net::new(Ipv4Addr::from(0x0a00_0000 + (i << 8)), 24).unwrap();
            RouteEntry::new(prefix, AsPath::sequence([3356, 1299, 64_512 + i % 1000]), (i % 3) as u16)
        })
        .collect();
    let writer = RibWriter {
        peers: (0..3).map(SynthPeer::numbered).collect(),
        ..RibWriter::for_entries(&big)
    };
    let bytes = writer.write(&big).map_err(|e| e.to_string())?;
    let started = Instant::now();
    let snap = parse_bview(&bytes[..], date("2026-01-05")).map_err(|e| e.to_string())?;
    let t = timed(Duration::from_secs(10), "100K-entry parse", started)?;
    ensure(snap.entries.len() == 100_000, || format!("{} entries parsed", snap.entries.len()))?;
    Ok(format!("1000 round trips identical, 100000 entries parsed in {t:?}"))
}

// 12 ----------------------------------------------------------------------

fn c12_golden() -> Check {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    run_golden(a.path())?;
    run_golden(b.path())?;
    let (fa, fb) = (report_files(a.path()), report_files(b.path()));
    ensure(fa.keys().eq(fb.keys()), || "different report file sets".into())?;
    for (k, v) in &fa {
        ensure(v == &fb[k], || format!("{} differs", k.display()))?;
    }
    let subs: BTreeSet<String> = fa
        .keys()
        .filter(|k| k.extension().is_some_and(|e| e == "json"))
        .filter_map(|k| {
            let v: Value = serde_json::from_slice(&fa[k]).ok()?;
            v["manifest"]["subcommand"].as_str().map(String::from)
        })
        .chain(fa.keys().filter(|k| k.ends_with("summary.md")).map(|_| "report".to_string()))
        .collect();
    ensure(subs.len() == 6, || format!("subcommands covered: {subs:?}"))?;
    Ok(format!("{} report files byte-identical across two runs of {} subcommands", fa.len(), subs.len()))
}

fn main() {
    let criteria: [Criterion; 12] = [
        ("classifier totality", c1_classifier_totality),
        ("consensus properties", c2_consensus),
        ("per-vantage verdict counts", c3_vantage_counts),
        ("coverage oracle equivalence", c4_coverage_oracle),
        ("coverage snapshots", c5_coverage_snapshots),
        ("active-host reductions", c6_reductions),
        ("onset vs total divergence", c7_onset),
        ("inflation detection", c8_inflation),
        ("AS composition and exemptions", c9_ascomp),
        ("registry decomposition", c10_decomposition),
        ("MRT round trip", c11_mrt),
        ("golden reports", c12_golden),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let res = std::panic::catch_unwind(f).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_else(|| "panicked".into()))
        });
        match res {
            Ok(detail) => println!("criterion {:>2} PASS  {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {name}: {why}", i + 1);
            }
        }
    }
    println!("acceptance: {} of 12 criteria passed", 12 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
