//! Slice-aware OFDMA downlink resource allocation for factory-floor networks.
//!
//! The engine minimises base-station transmit power subject to per-user
//! target rates. Targets come from three slice families: capacity-limited
//! slices steered by a feedback controller, low-latency slices whose
//! delay/jitter/reliability contracts are translated into closed-form
//! rates, and time-sensitive slices with periodic fixed-size packets.
//! When the required power exceeds the budget, an admission-control loop
//! trims capacity-limited targets in proportion to their dual prices.
//!
//! Modules:
//! - [`channel`]: indoor-factory path loss, shadowing and Rayleigh fading.
//! - [`qos`]: QoS-to-rate translation plus an M/M/1 delay-tail simulator.
//! - [`allocator`]: the per-slot dual (ellipsoid) power/subchannel solver.
//! - [`controller`]: capacity-tracking feedback loop for CL slices.
//! - [`admission`]: price-weighted rate readjustment under a power budget.
//! - [`scenario`]: the slot-by-slot closed-loop simulator.
//! - [`io`]: scenario files, `slots.csv` / `run.json` writers.
//! - [`oracle`]: independent reference checks (brute force, queueing,
//!   finite differences) used by `validate-oracle`.

pub mod admission;
pub mod allocator;
pub mod api;
pub mod channel;
pub mod controller;
pub mod error;
pub mod io;
pub mod oracle;
pub mod qos;
pub mod scenario;
pub mod units;

pub use error::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
