//! Profit-driven capacity planning for a server farm whose customers are
//! impatient.
//!
//! The crate is split along the lines of the model it implements:
//!
//! * [`queueing`]: steady-state analysis of the M/M/n+M (Erlang-A) queue,
//!   together with a brute-force stationary-distribution oracle.
//! * [`economics`]: power draw, revenue rate and reconfiguration cost.
//! * [`allocator`]: the binary-search server allocation policy and an
//!   exhaustive reference search.
//! * [`workload`]: arrival, patience and service generators, rate traces and
//!   forecasters.
//! * [`simulator`]: a discrete-event model of the farm that exercises the
//!   allocation policy and measures revenue, energy and losses.
//! * [`stats`]: Student-t confidence intervals.
//!
//! ```
//! use serverfarm::economics::{revenue_rate, EconomicModel};
//! use serverfarm::queueing::SystemParams;
//!
//! let params = SystemParams::new(8000.0, 10.0, 0.1, 1000).unwrap();
//! let per_hour = revenue_rate(&params, &EconomicModel::default()).unwrap() * 3600.0;
//! assert!(per_hour > 140.0 && per_hour < 160.0);
//! ```

#![forbid(unsafe_code)]
#![warn(rust_2018_idioms, missing_debug_implementations)]

pub mod allocator;
pub mod economics;
mod error;
pub mod queueing;
pub mod simulator;
pub mod stats;
pub mod workload;

pub use error::{Error, Result};
