/// Crate-wide error type.
#[derive(Debug, Clone, thiserror::Error)]
pub enum Error {
    /// A vector or scalar argument contained NaN or infinity.
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    /// An argument had the wrong length or shape.
    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    /// A configuration value violated its documented invariant.
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// An operation precondition was violated at runtime.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// The reference-trajectory seeding solve ended infeasible.
    #[error("reference seeding failed: {0}")]
    Seeding(String),
}

pub type Result<T> = std::result::Result<T, Error>;
