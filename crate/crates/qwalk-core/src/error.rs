//! Error type shared by all engine modules.

use thiserror::Error;

/// Errors raised by walk evolution, recurrence bookkeeping, the classical
/// baseline, and the experiment model.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A state or coin specification failed its normalization check.
    #[error(
        "not normalized: squared norm {norm_squared} deviates from 1 by more than {tolerance}"
    )]
    NotNormalized { norm_squared: f64, tolerance: f64 },

    /// A coin matrix failed the unitarity check.
    #[error("coin matrix is not unitary: max deviation {deviation} from C\u{2020}C = I")]
    NotUnitary { deviation: f64 },

    /// All amplitude has been absorbed; there is no distribution to report.
    #[error("vanished state")]
    VanishedState,

    /// The conditional state cannot be normalized because nothing survived.
    #[error("fully absorbed")]
    FullyAbsorbed,

    /// A detector record carries no counts at the requested step.
    #[error("no signal at step {step}")]
    NoSignal { step: usize },

    /// The continual record lacks the out-coupled sink counts needed for the
    /// alternative normalization.
    #[error("record carries no sink counts")]
    MissingSinkCounts,

    /// A parameter is outside its documented range.
    #[error("invalid parameter {name}: {message}")]
    InvalidParameter { name: &'static str, message: String },

    /// Lattice dimension outside the supported 1..=3 range.
    #[error("unsupported lattice dimension {dimension} (supported: 1..=3)")]
    UnsupportedDimension { dimension: usize },

    /// Horizon too large for the dense first-return DP at this dimension.
    #[error("horizon {horizon} exceeds the cap {cap} for dimension {dimension}")]
    HorizonTooLarge {
        horizon: usize,
        cap: usize,
        dimension: usize,
    },

    /// The truncated series sums to zero, so the ratio form is undefined.
    #[error("degenerate series: all origin probabilities are zero up to the horizon")]
    DegenerateSeries,

    /// A (position, step) pair off the light cone was passed to time-bin
    /// arithmetic.
    #[error("position {position} at step {step} is off the light cone")]
    OffLightCone { position: i64, step: usize },

    /// The coin matrix does not belong to the half-wave-plate family, so a
    /// plate angle cannot be recovered from it.
    #[error("coin matrix is not in the half-wave-plate family")]
    NotHwpCoin,

    /// An empty series was passed where data is required.
    #[error("empty series")]
    EmptySeries,
}

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;
