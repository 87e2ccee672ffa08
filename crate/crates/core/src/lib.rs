//! Cox continuum percolation on Delaunay street systems.
//!
//! The crate is organised bottom-up: [`lattice`] (parameters, indices,
//! keyed streams), [`geometry`], [`environment`] (the random measure),
//! [`sampler`] (driver marks and the Cox configuration), [`percolation`]
//! (clusters, crossings, exploration) and [`analysis`] (Monte Carlo
//! estimators and inequality reports).

pub mod analysis;
pub mod environment;
pub mod error;
pub mod geometry;
pub mod lattice;
pub mod percolation;
pub mod presets;
pub mod sampler;

pub use error::{Error, Result};
