//! Exact finite-sample confidence regions for GARCH(p,q) parameters.
//!
//! The crate is organized bottom-up:
//!
//! - [`garch`]: model types, simulation, variance filtering and residuals.
//! - [`qml`]: Gaussian quasi-likelihood, analytic score, constrained fit and
//!   plug-in asymptotic covariance.
//! - [`scope`]: score-permutation ranks and regions.
//! - [`baselines`]: asymptotic ellipsoid, residual bootstrap and
//!   likelihood-ratio bootstrap regions.
//! - [`harness`]: noise generators, Monte Carlo coverage and relative area.
//! - [`cli`]: configuration, price ingestion and the command implementations
//!   behind the `garch-scope` binary.

pub mod baselines;
pub mod cli;
pub mod error;
pub mod garch;
pub mod harness;
pub mod optim;
pub mod qml;
pub mod rng;
pub mod scope;

pub use error::{Error, Result};
pub use garch::{InitialConditions, Initializer, ModelOrders, ParamVector, SeriesSample};
pub use qml::{QmlConfig, QmlFit};
pub use scope::{PermutationSet, RankField, ScopeConfig};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
