//! Covert multi-hop DSSS routing against a cyclostationary detector.
//!
//! The crate is layered bottom-up: [`topology`] provides channel gains,
//! [`waveform`] and [`cyclo`] synthesize signals and compute the degree of
//! cyclostationarity, [`detector`] calibrates Willie's detection error
//! probability, [`alloc`] computes closed-form per-hop allocations and
//! [`routing`] finds widest and shortest routes. [`scenario`] ties these
//! together for the command-line driver.

pub mod alloc;
pub mod cyclo;
pub mod detector;
pub mod error;
pub mod rng;
pub mod routing;
pub mod scenario;
pub mod topology;
pub mod units;
pub mod waveform;

pub use alloc::{Constraints, HopAllocation, LinkGains, Objective};
pub use detector::{CalibrationTable, DetectorKind, WaveformSpec};
pub use error::{Error, Result};
pub use routing::{HopGraph, Route, RouteMode};
pub use scenario::ScenarioConfig;
pub use topology::{Endpoint, NodeId, Topology};
