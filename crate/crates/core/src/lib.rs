//! Fork-join queueing network whose two branches are rejoined by a
//! marked-pair synchronizer.
//!
//! The crate covers the full pipeline around that network:
//!
//! - [`des`] simulates it event by event and records the synchronizer flows;
//! - [`ck`] solves the stationary two-queue chain for single-channel branches
//!   and derives the conditional service-start rate;
//! - [`stats`] decides whether a stream of timestamps is almost Poisson;
//! - [`analytics`] turns the Poisson occupancy law into memory budgets;
//! - [`experiments`] runs parameter sweeps and reproducibility checks;
//! - [`export`] reads and writes the file formats used by the CLI.
//!
//! ```
//! use fjsync::{params::NetworkParams, des::run_simulation};
//!
//! let p = NetworkParams::new(0.3, 1, 0.8, 1, 0.8).unwrap();
//! let out = run_simulation(&p, 2_000, 7, 0.1).unwrap();
//! assert_eq!(out.in_trace.len(), out.out_trace.len());
//! ```

pub mod analytics;
pub mod ck;
pub mod des;
pub mod error;
pub mod experiments;
pub mod export;
pub mod params;
pub mod rng;
pub mod stats;

pub use error::{Error, Result};
pub use params::{Branch, NetworkParams, ParamSpec};
