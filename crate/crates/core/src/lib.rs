//! Measurement toolkit for nationwide Internet shutdowns: BGP coverage of a
//! country's allocated space, TCP reachability verdicts, and passive-scan
//! host-count analytics.

pub mod ascomp;
pub mod coverage;
pub mod passive;
pub mod prober;
pub mod registry;
pub mod rib_ingest;
pub mod verdicts;
pub mod harness;
