//! Queue-aware ride dispatch: spatial model, per-region queueing analysis,
//! demand prediction, batch dispatch algorithms and a batch simulator.

pub mod dispatch;
pub mod domain;
pub mod engine;
pub mod ingest;
pub mod prediction;
pub mod queueing;
pub mod spatial;
pub mod stats;
