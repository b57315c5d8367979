//! Deterministic simulator and analysis toolkit for privacy-preserving
//! crowdsourced object finding.
//!
//! A lost Bluetooth tag is located by polling a population of mobile
//! detectors with framed slotted ALOHA queries. Detectors conceal the real
//! tag response by answering as dummy tags under fresh pseudonyms, so the
//! service provider relaying the traffic cannot tell which detector covers
//! the tag. The owner eliminates candidate detectors round by round, either
//! from full frame vectors (basic scheme) or from a small set of selectively
//! polled bit positions whose real/dummy split is tuned by a chi-squared
//! indistinguishability gate (advanced scheme).
//!
//! The crate is split along the protocol roles:
//!
//! - [`protocol`] — hash family, frame execution, sealed locations
//! - [`world`] — synthetic deployments, spatial index, dummy election
//! - [`owner`] — both owner-side schemes, elimination, retrieval, estimate
//! - [`adversary`] — honest-but-curious provider ranking strategies
//! - [`analysis`] — closed-form performance formulas with oracles
//! - [`harness`] — seeded experiment runs, sweeps, CSV output
//!
//! Every run is a pure function of its configuration and seed: repeated
//! executions produce bit-identical reports and CSV files.

pub mod adversary;
pub mod analysis;
pub mod error;
pub mod harness;
pub mod numeric;
pub mod owner;
pub mod protocol;
pub mod rng;
pub mod world;

pub use error::{Error, Result};
