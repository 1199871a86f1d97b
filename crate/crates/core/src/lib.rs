//! Finite-dimensional Karhunen-Loeve surrogates of random processes and
//! fields, with samplers, solvers and Monte Carlo estimators for extremes.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod dynamics;
pub mod ensemble;
pub mod error;
pub mod extremes;
pub mod grid;
pub mod io;
pub mod kernels;
pub mod klmodel;
pub mod marginal;
pub mod pde;
pub mod samplers;
pub mod special;
pub mod studies;

pub use ensemble::{PathEnsemble, SeedRecord};
pub use error::{Error, Result};
pub use grid::{Grid, Quadrature};
pub use kernels::{Kernel, KernelFamily, SpectralBasis};
pub use marginal::Marginal;
pub use samplers::SeededRng;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
