//! Winding numbers of one-dimensional two-band Bloch Hamiltonians, read out
//! from the occupation of the post-quench upper band.

pub mod coldatom;
pub mod cp;
pub mod emission;
pub mod error;
pub mod gauge;
pub mod grid;
pub mod io;
pub mod models;
pub mod numerics;
pub mod overlap;

pub use error::{Error, Result};
pub use grid::KGrid;
pub use models::{ModelSpec, Plane};
