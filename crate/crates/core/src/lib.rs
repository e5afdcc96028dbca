//! Sampling-based solver for the general minimum conical hull problem.
//!
//! Given a data matrix `X` and a candidate matrix `Y` sharing a column
//! space, find the `k` rows of `Y` whose cone best covers the rows of `X`.
//! Every access to the data goes through length-square sampling, so the
//! approximate pipeline touches a number of entries independent of the
//! matrix size once the sketch size is fixed.
//!
//! The pieces, bottom to top:
//!
//! * [`matstore`]: sparse store with binary sum trees over each row and
//!   column, giving O(log n) entry-squared sampling.
//! * [`sketch`]: subsampled implicit SVD producing an approximate left
//!   singular basis `Ṽ` that is never materialized unless asked.
//! * [`estimators`]: median-of-means inner products `ṽᵢᵀ H B`.
//! * [`sampler`]: rejection sampling from `P_{Ṽq}` and heuristic
//!   post-selection.
//! * [`dca`]: divide-and-conquer over random projections, exact and
//!   approximate, with voting.
//! * [`snmf`]: synthetic near-separable NMF benchmark and sweeps.
//! * [`cli`]: the `conehull` command line (`gen`, `solve`, `bench`, `sweep`).

pub mod basis;
pub mod cli;
pub mod dca;
pub mod error;
pub mod estimators;
pub mod matstore;
pub mod rng;
pub mod sampler;
pub mod sketch;
pub mod snmf;

pub use basis::{DenseBasis, RowBasis};
pub use dca::{solve, AnchorSet, Ensemble, Mode, SolveConfig};
pub use error::{Error, Result};
pub use matstore::{SampledMatrix, SquareTree};
pub use sketch::{ImplicitBasis, SketchConfig};
