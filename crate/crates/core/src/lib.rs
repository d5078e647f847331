//! Homogenised spectral description of high-contrast periodic Maxwell
//! composites on a periodic Yee grid.

pub mod cell_problem;
pub mod cli;
pub mod config;
pub mod dispersion;
pub mod error;
pub mod gamma_fn;
pub mod geometry;
pub mod grid;
pub mod inclusion_spectrum;
pub mod linalg;
pub mod mat3;
pub mod supercell_validation;

pub use error::{Error, Result};
