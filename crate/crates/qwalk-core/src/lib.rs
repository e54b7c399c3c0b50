//! Simulation engine for measurement-induced dynamics in discrete-time
//! quantum walks on the line.
//!
//! The crate covers four layers:
//!
//! - [`coin`] / [`state`]: exact state-vector evolution of a coined walker
//!   (coin toss, conditional shift, light-cone storage).
//! - [`monitor`]: the two observation schemes — a single measurement at the
//!   final step (reset) versus absorbing sinks at the origin after every step
//!   (continual) — and the recurrence probabilities built from them.
//! - [`classical`]: the classical random-walk baseline on d-dimensional
//!   lattices, with exact dynamic programming, both recurrence formulas, and
//!   a seeded Monte Carlo cross-check.
//! - [`experiment`] / [`timebin`]: a digital twin of the time-multiplexed
//!   photonic loop — homogeneous losses, imperfect sinks, photon counting,
//!   the count-normalization pipeline, systematic-error envelopes, and
//!   arrival-time bookkeeping.

pub mod classical;
pub mod coin;
pub mod error;
pub mod experiment;
pub mod monitor;
pub mod state;
pub mod timebin;

pub use coin::{hadamard_coin, hwp_angle_of, hwp_coin, identity_coin, CoinLabel, CoinSpec};
pub use error::{Error, Result};
pub use state::{
    apply_coin, apply_shift, evolve, evolve_with, initial_state, position_distribution, step,
    InitialSpec, PositionDistribution, WalkState,
};

pub use classical::{
    classical_first_return, classical_origin_probability, classical_reset_recurrence,
    classical_series, monte_carlo_first_return, polya_number_from_p, polya_number_from_q,
    scheme_equivalence_check, ClassicalSeries, LatticeWalkSpec, McFirstReturn, SchemeEquivalence,
    TruncatedPolya,
};
pub use monitor::{
    apply_sink, conditional_distribution, conditional_evolve, continual_recurrence,
    first_return_probability, recurrence_series, reset_probability, reset_recurrence,
    survival_probability, RecurrenceSeries, SinkSchedule, SiteSet,
};

pub use experiment::{
    error_envelope, normalize_continual, normalize_continual_alternative, normalize_reset,
    simulate_counts, simulate_counts_with_noise, snr, ContinualProbabilities, CountChannel,
    CountRecord, CountRow, ErrorRanges, ImperfectionParams, Integration, Scheme,
};
pub use timebin::{arrival_time, check_bin_uniqueness, BinReport, HorizonReport, TimeBinMap};
