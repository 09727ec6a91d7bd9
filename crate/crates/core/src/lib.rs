//! Copula processes on time grids, Sklar merging and extraction, path-space
//! Wasserstein distances, Karhunen–Loève expansions and robustness bounds.

/// Crate version, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub mod copulas;
pub mod ensemble;
pub mod error;
pub mod grid;
pub mod io;
pub mod kl;
pub mod marginals;
pub mod quad;
pub mod robustness;
pub mod rng;
pub mod sklar;
pub mod stats;
pub mod transport;

pub use copulas::CopulaModel;
pub use ensemble::{CopulaEnsemble, PathArray, ProcessEnsemble};
pub use error::{Error, Result};
pub use grid::TimeGrid;
pub use marginals::{MarginalFamily, Mixing, TimeFn};
