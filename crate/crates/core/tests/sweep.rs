use std::collections::BTreeMap;
use std::net::Ipv4Addr;
use std::time::Duration;

use ipnet::Ipv4Net;
use shutdownlens_core::harness::{
    script_from_plan, GroundTruthPlan, ScriptEntry, ScriptedTransport, TransportScript,
};
use shutdownlens_core::prober::{derive_target, sweep, OutcomeKind, ProbeError, ProbeTarget, SweepPolicy};
use shutdownlens_core::verdicts::{consensus_from_observations, Verdict};

fn targets(n: u32) -> Vec<ProbeTarget> {
    (0..n)
        .map(|i| derive_target(Ipv4Net::new(Ipv4Addr::from(0xc633_6400 + (i << 8)), 24).unwrap()))
        .collect()
}

fn fast(retries: u32) -> SweepPolicy {
    SweepPolicy {
        rate_per_sec: 100_000.0,
        retries,
        max_in_flight: 8,
        vantage_id: "test".into(),
        run_id: 3,
        ..SweepPolicy::default()
    }
}

#[test]
fn three_targets_one_answer() {
    let ts = targets(3);
    let mut script = TransportScript::default();
    script.set(ts[1].target_address, 80, None, ScriptEntry::outcome(OutcomeKind::SynAck, Some(31.0)));
    let obs = sweep(&ts, &ScriptedTransport::new(script), &fast(1)).unwrap();
    assert_eq!(obs.len(), 3);
    for (i, o) in obs.iter().enumerate() {
        assert_eq!(o.prefix, ts[i].prefix);
        assert_eq!(o.run_id, 3);
        assert_eq!(o.vantage_id, "test");
        for (port, out) in &o.outcomes {
            if i == 1 && *port == 80 {
                assert_eq!(out.outcome, OutcomeKind::SynAck);
                assert_eq!(out.rtt_ms, Some(31.0));
                assert_eq!(out.attempts, 1);
            } else {
                assert_eq!(out.outcome, OutcomeKind::Timeout);
                assert_eq!(out.rtt_ms, None);
                assert_eq!(out.attempts, 2);
            }
        }
    }
}

#[test]
fn empty_target_list() {
    let obs = sweep(&[], &ScriptedTransport::new(TransportScript::default()), &fast(1)).unwrap();
    assert!(obs.is_empty());
}

#[test]
fn icmp_passes_through() {
    let ts = targets(1);
    let mut script = TransportScript::default();
    script.set(ts[0].target_address, 179, None, ScriptEntry::outcome(OutcomeKind::IcmpUnreachable, None));
    let obs = sweep(&ts, &ScriptedTransport::new(script), &fast(1)).unwrap();
    assert_eq!(obs[0].outcomes[&179].outcome, OutcomeKind::IcmpUnreachable);
}

#[test]
fn answer_on_retry_records_two_attempts() {
    let ts = targets(1);
    let mut script = TransportScript::default();
    script.set(ts[0].target_address, 443, Some(2), ScriptEntry::outcome(OutcomeKind::Rst, Some(8.0)));
    let obs = sweep(&ts, &ScriptedTransport::new(script), &fast(1)).unwrap();
    let o = &obs[0].outcomes[&443];
    assert_eq!((o.outcome, o.attempts), (OutcomeKind::Rst, 2));
}

#[test]
fn setup_failure_aborts_before_any_probe() {
    let t = ScriptedTransport::failing("raw socket: permission denied");
    match sweep(&targets(2), &t, &fast(1)) {
        Err(ProbeError::Setup(msg)) => assert!(msg.contains("permission")),
        other => panic!("expected setup error, got {other:?}"),
    }
    assert!(t.sends().is_empty());
}

#[test]
fn scripted_sweeps_are_deterministic() {
    let plan = GroundTruthPlan {
        verdicts: targets(30)
            .iter()
            .enumerate()
            .map(|(i, t)| (t.prefix, Verdict::ALL[i % 4]))
            .collect(),
        noise: 0.3,
        seed: 5,
    };
    let script = script_from_plan(&plan, 1).unwrap().remove(0);
    let a = sweep(&plan.targets(), &ScriptedTransport::new(script.clone()), &fast(1)).unwrap();
    let b = sweep(&plan.targets(), &ScriptedTransport::new(script), &fast(1)).unwrap();
    assert_eq!(a, b);
}

#[test]
fn rate_cap_holds_in_every_one_second_window() {
    let rate = 150.0;
    let policy = SweepPolicy {
        rate_per_sec: rate,
        max_in_flight: 4,
        retries: 0,
        ..SweepPolicy::default()
    };
    let t = ScriptedTransport::new(TransportScript::default()).with_delay(Duration::from_millis(3));
    sweep(&targets(80), &t, &policy).unwrap();
    let mut at: Vec<_> = t.sends().into_iter().map(|s| s.at).collect();
    at.sort();
    assert_eq!(at.len(), 240);
    let cap = rate as usize + policy.max_in_flight;
    let mut lo = 0;
    for hi in 0..at.len() {
        while at[hi].duration_since(at[lo]) >= Duration::from_secs(1) {
            lo += 1;
        }
        assert!(hi - lo < cap, "{} sends inside one second", hi - lo + 1);
    }
}

#[test]
fn planted_truth_survives_probe_classify_consensus() {
    for (noise, runs) in [(0.0, 33), (0.3, 33), (0.49, 34)] {
        let verdicts: BTreeMap<Ipv4Net, Verdict> = targets(12)
            .iter()
            .enumerate()
            .map(|(i, t)| (t.prefix, Verdict::ALL[i % 4]))
            .collect();
        let plan = GroundTruthPlan {
            verdicts: verdicts.clone(),
            noise,
            seed: 11,
        };
        let mut obs = Vec::new();
        for (r, script) in script_from_plan(&plan, runs).unwrap().into_iter().enumerate() {
            let policy = SweepPolicy {
                run_id: r as u32,
                ..fast(1)
            };
            obs.extend(sweep(&plan.targets(), &ScriptedTransport::new(script), &policy).unwrap());
        }
        for rec in consensus_from_observations(&obs).unwrap() {
            assert_eq!(rec.consensus, verdicts[&rec.prefix], "noise {noise}");
            assert_eq!(rec.runs(), runs as usize);
        }
    }
}
