use thiserror::Error;

/// Errors raised by the screening library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScreenError {
    /// A constructor or operation received parameters outside its domain.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// Conditioning on a stage whose acceptance probability is zero.
    #[error("zero capacity at stage {stage:?}: threshold {threshold} admits no mass")]
    ZeroCapacity { stage: Option<usize>, threshold: f64 },

    /// The materialized posterior did not integrate to one.
    #[error("normalization drift {drift:e} exceeds tolerance (increase grid resolution)")]
    NormalizationDrift { drift: f64 },

    /// Too few Monte Carlo samples survived screening for a stable estimate.
    #[error("only {accepted} samples accepted, at least {required} required")]
    InsufficientAcceptance { accepted: u64, required: u64 },

    /// The fixed-threshold solver requires identically distributed noises.
    #[error("fixed-threshold strategy requires identically distributed noises")]
    HeterogeneousNoise,

    /// A root-finding bracket did not contain a sign change.
    #[error("solver bracket failure: {0}")]
    Bracket(String),
}

impl ScreenError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        ScreenError::InvalidParameter(msg.into())
    }

    /// Attach a stage index to a `ZeroCapacity` error that lacks one.
    pub(crate) fn at_stage(self, idx: usize) -> Self {
        match self {
            ScreenError::ZeroCapacity { stage: None, threshold } => ScreenError::ZeroCapacity {
                stage: Some(idx),
                threshold,
            },
            other => other,
        }
    }
}

pub type Result<T> = std::result::Result<T, ScreenError>;
