//! Numerical toolkit for Kakeya-type tube families: multiplicity norms,
//! X-ray estimates, structural statistics and synthetic generators.

pub mod cli;
pub mod error;
pub mod estimate;
pub mod family;
pub mod gen;
pub mod geom;
pub mod io;
pub mod numeric;
pub mod raster;
pub mod structure;

pub use error::{Error, Result};
