//! Resilient average consensus with detection and compensation.
//!
//! The library simulates synchronous-round consensus on undirected graphs
//! where some nodes misbehave (inject errors into their state updates).
//! Normal nodes audit their neighbors through two-hop information sets,
//! credit detected errors to a compensation ledger, release the ledger
//! under an exponentially decaying bound, and isolate nodes whose errors
//! exceed that bound. Two protocol variants are provided:
//!
//! * D-DCC: deterministic links, exact average consensus on the residual
//!   node set.
//! * S-DCC: information sets are lost with probability `1 - p`; a
//!   mean-based scheme compensates undetected errors, giving average
//!   consensus in expectation.
//!
//! A W-MSR baseline, a seeded Monte-Carlo engine and an analysis layer
//! (variance / deviation bounds, 1-D Wasserstein distance) round out the
//! toolkit. All randomness is derived from a single master seed via
//! counter-based streams, so every run is bit-reproducible.

pub mod adversary;
pub mod analysis;
pub mod cli;
pub mod config;
pub mod engine;
pub mod graph;
pub mod msr;
pub mod protocol;
pub mod rng;
