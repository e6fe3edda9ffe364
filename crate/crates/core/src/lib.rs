//! Trace-driven botnet detection engine.
//!
//! The pipeline ingests packet events, assembles bidirectional TCP netflows
//! per time window, detects scanning activity, filters out useless records,
//! clusters hosts by behavioral similarity (flow vectors + payload
//! compression distance), and correlates clusters across windows to score
//! and flag bot-infected hosts. A synthetic trace generator reproduces the
//! evaluation scenarios at desk scale.

pub mod cluster;
pub mod correlate;
pub mod evaluate;
pub mod filter;
pub mod flowgen;
pub mod ingest;
pub mod model;
pub mod pipeline;
pub mod scandetect;
pub mod sim;

pub use model::{Config, HostId, Netflow, PacketEvent, Protocol, ScanAlert};
