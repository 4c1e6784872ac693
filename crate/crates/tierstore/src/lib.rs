//! Two-tier erasure-coded atomic storage, simulated and checked.
//!
//! The crate has four layers:
//!
//! * [`field`] and [`codec`]: prime-field arithmetic and the
//!   repair-bandwidth-optimal regenerating code (symmetric product-matrix
//!   construction) shared by everything else.
//! * [`protocol`]: pure, deterministic state machines for writers, readers,
//!   edge servers, and backend servers, exchanging a closed set of messages.
//! * [`sim`]: a deterministic discrete-event simulator that drives the
//!   automata under configurable delay models, crash schedules, adversarial
//!   strategies, and planted protocol mutations, producing structured traces.
//! * [`check`] and [`metrics`]: trace analyzers for atomicity, liveness,
//!   server invariants, latency bounds, and communication/storage costs,
//!   plus closed-form cost models and the multi-object storage sweep.

pub mod check;
pub mod codec;
pub mod field;
pub mod metrics;
pub mod protocol;
pub mod sim;
