//! Directed preferential attachment graphs and the asymptotic normality of
//! their joint in/out-degree counts.
//!
//! The crate is organized bottom-up:
//!
//! - [`params`]: model parameters and the derived rate constants.
//! - [`sim`]: O(1)-per-step growth of a single graph with incremental degree counts.
//! - [`exact`]: the expected-count recursion and exhaustive enumeration for tiny `n`.
//! - [`limits`]: the limiting joint degree distribution `p_ij` and the concentration envelope.
//! - [`martingale`]: finite-`n` martingale coefficients, their limits `xi`, and the window matrix.
//! - [`covariance`]: drift and jump terms and the final CLT covariance.
//! - [`verify`]: Monte Carlo ensembles and goodness-of-fit checks against the predicted law.

pub mod covariance;
pub mod error;
pub mod exact;
pub mod limits;
pub mod linalg;
pub mod martingale;
pub mod params;
pub mod rng;
pub mod sim;
pub mod stats;
pub mod verify;

pub use error::{Error, Result};
pub use params::{IndexWindow, ModelParams};
