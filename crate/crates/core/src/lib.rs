//! Electricity-price-aware cooling schedules for data centers.
//!
//! The pipeline runs in five stages, one module each:
//!
//! 1. [`ingest`] loads hourly price, outdoor-temperature and workload traces
//!    and aligns them on a common window.
//! 2. [`qfr`] fits quantile Fourier regressions to historical prices and
//!    classifies any `(hour, price)` pair into one of `M` regimes.
//! 3. [`regimes`] estimates time-inhomogeneous regime transition matrices.
//! 4. [`mdp`] builds the cyclic MDP over `(temperature, regime)` states,
//!    solves the average-cost occupancy-measure LP and extracts a policy.
//!    A relative value iteration solver is kept alongside as a cross-check.
//! 5. [`sim`] rolls the resulting policy and the [`controllers`] baselines
//!    through price/temperature/workload traces and tallies costs.
//!
//! [`thermal`] holds the facility physics shared by planning and simulation.
//! [`scenario`] generates synthetic markets and weather for experiments.
//!
//! Regime indices are zero-based throughout: regime `0` is the cheapest band.

pub mod controllers;
pub mod error;
pub mod ingest;
pub mod lp;
pub mod mdp;
pub mod qfr;
pub mod regimes;
pub mod scenario;
pub mod sim;
pub mod thermal;

pub use error::{Error, Result};
