//! Acoustic relative positioning from a single inaudible-carrier speaker.
//!
//! The pipeline runs transmitter synthesis ([`waveform`]), a simulated
//! propagation channel ([`channel`]), receiver preprocessing ([`frontend`]),
//! carrier phase tracking ([`pll`]), synchronization pulse detection
//! ([`pulsedet`]) and position solving ([`locator`]). The [`eval`] module
//! wires these into scenario runs used by the `relpos` binary.

// Negated comparisons are used on purpose so that NaN inputs are rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channel;
pub mod config;
pub mod error;
pub mod eval;
pub mod frontend;
pub mod io;
pub mod locator;
pub mod par;
pub mod pll;
pub mod pulsedet;
pub mod stream;
pub mod waveform;

pub use error::{Error, Result};
pub use stream::SampleStream;
