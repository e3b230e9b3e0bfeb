//! Error type shared across the crate.

use thiserror::Error;

/// Everything that can go wrong while building meshes, assembling operators,
/// stepping the wave solver or running an inversion.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid user-facing configuration (geometry, parameters, file contents).
    #[error("configuration error: {0}")]
    Config(String),

    /// Geometric queries that cannot be answered (point outside mesh, degenerate tet).
    #[error("geometry error: {0}")]
    Geometry(String),

    /// A field or trajectory was paired with a mesh or grid it does not belong to.
    #[error("mismatch error: {0}")]
    Mismatch(String),

    /// The explicit time step violates the stability bound.
    #[error("stability error: {0}")]
    Stability(String),

    /// The field blew up during time stepping (NaN or wild growth).
    #[error("divergence at step {step}: {what}")]
    Divergence { step: usize, what: String },

    /// Underlying I/O failure.
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
    pub fn geometry(msg: impl Into<String>) -> Self {
        Error::Geometry(msg.into())
    }
    pub fn mismatch(msg: impl Into<String>) -> Self {
        Error::Mismatch(msg.into())
    }
    pub fn stability(msg: impl Into<String>) -> Self {
        Error::Stability(msg.into())
    }
}
