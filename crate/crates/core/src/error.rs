use std::io;

use thiserror::Error;

use crate::models::Plane;

/// Everything that can go wrong while building profiles, counting peaks or
/// inverting spectra.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("gapless point at k = {k}: |d|^2 = {gap_sq:e} is below the gap floor")]
    GaplessPoint { k: f64, gap_sq: f64 },

    #[error("model sits on a phase boundary: {0}")]
    CriticalPoint(String),

    #[error("unsupported operation: {0}")]
    Unsupported(String),

    #[error("phase unwrapping failed at sample {index} (step {step:.6} rad); refine the grid")]
    UnwrapFailure { index: usize, step: f64 },

    #[error("winding is not an integer: raw = {raw:.6}, residual = {residual:.3e}")]
    NonIntegerWinding { raw: f64, residual: f64 },

    #[error("plane mismatch: initial model lives in {initial:?}, final model in {final_plane:?}")]
    PlaneMismatch { initial: Plane, final_plane: Plane },

    #[error("singular momentum k = {k}: d_x vanishes")]
    SingularK { k: f64 },

    #[error("gap frequency is not monotone on [0, pi]: {0}")]
    MultiMinimum(String),

    #[error("root finding failed: {0}")]
    RootFindFailure(String),

    #[error("sample {index} has zero shots")]
    ZeroShots { index: usize },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("io: {0}")]
    Io(#[from] io::Error),
}

impl Error {
    /// True for failures of the numerical machinery (as opposed to bad input
    /// or IO).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::GaplessPoint { .. }
                | Error::UnwrapFailure { .. }
                | Error::NonIntegerWinding { .. }
                | Error::SingularK { .. }
                | Error::MultiMinimum(_)
                | Error::RootFindFailure(_)
        )
    }

    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io(_) | Error::Csv(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
