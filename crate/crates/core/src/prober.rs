//! Rate-limited TCP reachability sweeps.
//!
//! A sweep probes every configured port of every target through a
//! [`Transport`]. Two transports exist: [`TcpTransport`] for the live
//! network and the scripted replay in [`crate::harness`].

use std::collections::BTreeMap;
use std::io::{self, BufRead, Write};
use std::net::{Ipv4Addr, SocketAddr, TcpStream};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Mutex, OnceLock};
use std::time::{Duration, Instant};

use chrono::{DateTime, Utc};
use ipnet::Ipv4Net;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_PORTS: [u16; 3] = [80, 443, 179];
pub const DEFAULT_TIMEOUT_MS: u64 = 3_000;
pub const DEFAULT_RETRIES: u32 = 1;

#[derive(Debug, Error)]
pub enum ProbeError {
    #[error("transport setup failed: {0}")]
    Setup(String),
    #[error("invalid sweep policy: {0}")]
    Policy(String),
    #[error("line {line}: {source}")]
    Json { line: usize, source: serde_json::Error },
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum OutcomeKind {
    SynAck,
    Rst,
    IcmpUnreachable,
    Timeout,
}

impl OutcomeKind {
    pub const ALL: [OutcomeKind; 4] = [
        OutcomeKind::SynAck,
        OutcomeKind::Rst,
        OutcomeKind::IcmpUnreachable,
        OutcomeKind::Timeout,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            OutcomeKind::SynAck => "SYN_ACK",
            OutcomeKind::Rst => "RST",
            OutcomeKind::IcmpUnreachable => "ICMP_UNREACHABLE",
            OutcomeKind::Timeout => "TIMEOUT",
        }
    }

    /// A TCP-level answer that carries a round-trip time.
    pub fn has_rtt(self) -> bool {
        matches!(self, OutcomeKind::SynAck | OutcomeKind::Rst)
    }
}

impl std::str::FromStr for OutcomeKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        OutcomeKind::ALL
            .into_iter()
            .find(|k| k.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown probe outcome {s:?}"))
    }
}

/// Result of probing one port, after retries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PortOutcome {
    pub outcome: OutcomeKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rtt_ms: Option<f64>,
    pub attempts: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// What a transport reports for a single attempt.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeResponse {
    pub outcome: OutcomeKind,
    pub rtt_ms: Option<f64>,
}

impl ProbeResponse {
    pub fn timeout() -> Self {
        ProbeResponse {
            outcome: OutcomeKind::Timeout,
            rtt_ms: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProbeTarget {
    pub prefix: Ipv4Net,
    pub target_address: Ipv4Addr,
    pub ports: Vec<u16>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeObservation {
    pub prefix: Ipv4Net,
    pub target: Ipv4Addr,
    pub vantage_id: String,
    pub run_id: u32,
    pub started_at: DateTime<Utc>,
    pub outcomes: BTreeMap<u16, PortOutcome>,
}

/// Address probed inside `prefix`: the sixth host when the block holds at
/// least eight addresses, otherwise the first host (or the only address).
pub fn derive_target(prefix: Ipv4Net) -> ProbeTarget {
    derive_target_with_ports(prefix, &DEFAULT_PORTS)
}

pub fn derive_target_with_ports(prefix: Ipv4Net, ports: &[u16]) -> ProbeTarget {
    let prefix = prefix.trunc();
    let base = u32::from(prefix.network());
    let size = 1u64 << (32 - prefix.prefix_len());
    let offset = match size {
        1 => 0,
        s if s >= 8 => 6,
        _ => 1,
    };
    ProbeTarget {
        prefix,
        target_address: Ipv4Addr::from(base + offset),
        ports: ports.to_vec(),
    }
}

/// A way of sending one TCP probe and observing the answer.
pub trait Transport: Sync {
    /// Called once before any probe; failure aborts the sweep.
    fn prepare(&self) -> Result<(), ProbeError> {
        Ok(())
    }

    /// Probe `addr:port`. `attempt` is 1-based. Errors are recorded as
    /// timeouts with the error text attached.
    fn probe(&self, addr: Ipv4Addr, port: u16, attempt: u32, timeout: Duration) -> Result<ProbeResponse, String>;

    fn now(&self) -> DateTime<Utc> {
        Utc::now()
    }
}

/// Live transport: a full TCP connect per probe.
///
/// The first definitive signal wins, which for a blocking connect means a
/// late ICMP error after an RST is never seen.
#[derive(Debug, Default, Clone)]
pub struct TcpTransport;

impl Transport for TcpTransport {
    fn probe(&self, addr: Ipv4Addr, port: u16, _attempt: u32, timeout: Duration) -> Result<ProbeResponse, String> {
        let started = Instant::now();
        let res = TcpStream::connect_timeout(&SocketAddr::from((addr, port)), timeout);
        let rtt = Some(started.elapsed().as_secs_f64() * 1000.0);
        match res {
            Ok(stream) => {
                let _ = stream.shutdown(std::net::Shutdown::Both);
                Ok(ProbeResponse {
                    outcome: OutcomeKind::SynAck,
                    rtt_ms: rtt,
                })
            }
            Err(e) => match classify_connect_error(&e) {
                Some(OutcomeKind::Rst) => Ok(ProbeResponse {
                    outcome: OutcomeKind::Rst,
                    rtt_ms: rtt,
                }),
                Some(kind) => Ok(ProbeResponse {
                    outcome: kind,
                    rtt_ms: None,
                }),
                None => Err(e.to_string()),
            },
        }
    }
}

/// Map a connect error onto a probe outcome. Every ICMP unreachable code
/// collapses into [`OutcomeKind::IcmpUnreachable`].
pub fn classify_connect_error(e: &io::Error) -> Option<OutcomeKind> {
    use io::ErrorKind::*;
    match e.kind() {
        ConnectionRefused => Some(OutcomeKind::Rst),
        HostUnreachable | NetworkUnreachable => Some(OutcomeKind::IcmpUnreachable),
        TimedOut | WouldBlock => Some(OutcomeKind::Timeout),
        _ => None,
    }
}

/// Spaces probe sends at a fixed interval; safe to share between threads.
#[derive(Debug)]
pub struct RateLimiter {
    interval: Duration,
    next: Mutex<Option<Instant>>,
}

impl RateLimiter {
    pub fn per_second(rate: f64) -> Result<Self, ProbeError> {
        if !(rate.is_finite() && rate > 0.0) {
            return Err(ProbeError::Policy(format!("probe rate must be positive, got {rate}")));
        }
        Ok(RateLimiter {
            interval: Duration::from_secs_f64(1.0 / rate),
            next: Mutex::new(None),
        })
    }

    /// Block until the caller may send one probe.
    pub fn acquire(&self) {
        let slot = {
            let mut next = self.next.lock().unwrap_or_else(|p| p.into_inner());
            let now = Instant::now();
            let slot = match *next {
                Some(n) if n > now => n,
                _ => now,
            };
            *next = Some(slot + self.interval);
            slot
        };
        let now = Instant::now();
        if slot > now {
            std::thread::sleep(slot - now);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPolicy {
    pub timeout_ms: u64,
    pub retries: u32,
    pub max_in_flight: usize,
    pub rate_per_sec: f64,
    pub vantage_id: String,
    pub run_id: u32,
}

impl Default for SweepPolicy {
    fn default() -> Self {
        SweepPolicy {
            timeout_ms: DEFAULT_TIMEOUT_MS,
            retries: DEFAULT_RETRIES,
            max_in_flight: 64,
            rate_per_sec: 100.0,
            vantage_id: "local".into(),
            run_id: 0,
        }
    }
}

impl SweepPolicy {
    pub fn validate(&self) -> Result<(), ProbeError> {
        if self.max_in_flight == 0 {
            return Err(ProbeError::Policy("max_in_flight must be at least 1".into()));
        }
        if self.timeout_ms == 0 {
            return Err(ProbeError::Policy("timeout must be positive".into()));
        }
        if !(self.rate_per_sec.is_finite() && self.rate_per_sec > 0.0) {
            return Err(ProbeError::Policy(format!(
                "probe rate must be positive, got {}",
                self.rate_per_sec
            )));
        }
        if self.vantage_id.is_empty() {
            return Err(ProbeError::Policy("vantage id must not be empty".into()));
        }
        Ok(())
    }
}

/// Probe every port of every target. Observations come back in target order.
pub fn sweep<T: Transport + ?Sized>(
    targets: &[ProbeTarget],
    transport: &T,
    policy: &SweepPolicy,
) -> Result<Vec<ProbeObservation>, ProbeError> {
    policy.validate()?;
    for t in targets {
        let mut seen = t.ports.clone();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != t.ports.len() || seen.is_empty() {
            return Err(ProbeError::Policy(format!(
                "target {} must list distinct, non-empty ports",
                t.prefix
            )));
        }
        if !t.prefix.contains(&t.target_address) {
            return Err(ProbeError::Policy(format!(
                "target address {} is outside {}",
                t.target_address, t.prefix
            )));
        }
    }
    transport.prepare()?;

    let jobs: Vec<(usize, u16)> = targets
        .iter()
        .enumerate()
        .flat_map(|(i, t)| t.ports.iter().map(move |&p| (i, p)))
        .collect();
    if jobs.is_empty() {
        return Ok(Vec::new());
    }

    let limiter = RateLimiter::per_second(policy.rate_per_sec)?;
    let timeout = Duration::from_millis(policy.timeout_ms);
    let next_job = AtomicUsize::new(0);
    let started: Vec<OnceLock<DateTime<Utc>>> = targets.iter().map(|_| OnceLock::new()).collect();
    let results: Mutex<Vec<Option<PortOutcome>>> = Mutex::new(vec![None; jobs.len()]);
    let workers = policy.max_in_flight.min(jobs.len());

    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let j = next_job.fetch_add(1, Ordering::Relaxed);
                let Some(&(ti, port)) = jobs.get(j) else { break };
                let target = &targets[ti];
                started[ti].get_or_init(|| transport.now());
                let outcome = probe_port(transport, &limiter, target.target_address, port, timeout, policy.retries);
                results.lock().unwrap_or_else(|p| p.into_inner())[j] = Some(outcome);
            });
        }
    });

    let mut results = results.into_inner().unwrap_or_else(|p| p.into_inner()).into_iter();
    let observations = targets
        .iter()
        .enumerate()
        .map(|(ti, t)| {
            let outcomes = t
                .ports
                .iter()
                .map(|&p| (p, results.next().flatten().expect("every job completes")))
                .collect();
            ProbeObservation {
                prefix: t.prefix,
                target: t.target_address,
                vantage_id: policy.vantage_id.clone(),
                run_id: policy.run_id,
                started_at: *started[ti].get().expect("set by first job"),
                outcomes,
            }
        })
        .collect();
    Ok(observations)
}

fn probe_port<T: Transport + ?Sized>(
    transport: &T,
    limiter: &RateLimiter,
    addr: Ipv4Addr,
    port: u16,
    timeout: Duration,
    retries: u32,
) -> PortOutcome {
    let mut attempt = 0;
    loop {
        attempt += 1;
        limiter.acquire();
        let (resp, error) = match transport.probe(addr, port, attempt, timeout) {
            Ok(r) => (r, None),
            Err(e) => (ProbeResponse::timeout(), Some(e)),
        };
        if resp.outcome == OutcomeKind::Timeout && attempt <= retries {
            continue;
        }
        let rtt_ms = if resp.outcome.has_rtt() { resp.rtt_ms } else { None };
        return PortOutcome {
            outcome: resp.outcome,
            rtt_ms,
            attempts: attempt,
            error,
        };
    }
}

/// Read a target list: one CIDR per line, `#` comments allowed.
pub fn read_targets<R: BufRead>(input: R, ports: &[u16]) -> Result<Vec<ProbeTarget>, ProbeError> {
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let net: Ipv4Net = line
            .parse()
            .map_err(|_| ProbeError::Policy(format!("line {}: invalid IPv4 prefix {line:?}", i + 1)))?;
        out.push(derive_target_with_ports(net, ports));
    }
    Ok(out)
}

pub fn write_observations<W: Write>(obs: &[ProbeObservation], mut out: W) -> io::Result<()> {
    for o in obs {
        serde_json::to_writer(&mut out, o)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_observations<R: BufRead>(input: R) -> Result<Vec<ProbeObservation>, ProbeError> {
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|source| ProbeError::Json { line: i + 1, source })?);
    }
    Ok(out)
}
