//! Greedy Monte-Carlo (GMC) search for sparse linear regression under an
//! `l0` constraint.
//!
//! The estimator picks `K` columns of a design matrix `A` and fits `y` by
//! least squares on those columns only. The search state is the indicator
//! vector of the chosen columns ([`SparseWeight`]); its energy is the output
//! MSE `||y - A_c x_c||^2 / 2M`. GMC proposes pair flips (drop one active
//! column, add one inactive column), accepts strictly improving ones, and
//! stops once an exhaustive scan of all `K(N-K)` flip neighbours finds no
//! improvement.
//!
//! Modules:
//! - [`linalg`]: minimum-norm least squares on an active set and the energy.
//! - [`factor`]: an updatable orthogonal factorisation giving `O(K^2 + MK)`
//!   energy evaluation per pair flip.
//! - [`gmc`]: the search itself and independent random restarts.
//! - [`datagen`]: planted Gaussian instances.
//! - [`experiments`]: success rates, phase sweeps, convergence scaling and
//!   noisy MSE curves.
//! - [`cv`]: leave-one-out cross-validation over `K`.
//! - [`dataio`]: instance files, CSV ingestion, standardisation, reports.

pub mod cv;
pub mod datagen;
pub mod dataio;
mod error;
pub mod experiments;
pub mod factor;
pub mod gmc;
mod instance;
pub mod linalg;
pub mod seed;

pub use error::{GmcError, Result};
pub use instance::{Instance, SparseWeight};
