//! The two observation schemes and the recurrence probabilities built from
//! them.
//!
//! In the *reset* scheme the walker evolves unitarily and the origin is
//! examined exactly once, at step `t`; repeating the experiment for every
//! `t <= T` yields the recurrence probability
//! `P_r(T) = 1 - prod_t (1 - p(0,t))`.
//!
//! In the *continual* scheme an absorbing sink sits at the origin after every
//! step. The walker's (unnormalized) conditional state after `t` steps is
//! `U (M U)^{t-1} |psi(0)>` where `M` projects out the origin; its squared
//! norm is the survival probability `s_{t-1}`, the origin intensity right
//! before the sink fires at step `t` is the first-return probability
//! `q(0,t)`, and `P(T) = sum_t q(0,t)`.
//!
//! Internally the conditional state is kept unnormalized so survival decays
//! naturally with the norm; normalization happens only at read-out. Within a
//! step the unitary acts first and the sink second, and at the examined step
//! the origin is read before any absorption.

use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};

use crate::coin::{CoinLabel, CoinSpec};
use crate::error::{Error, Result};
use crate::state::{initial_state, position_distribution, step, InitialSpec, WalkState};

/// Which (position, step) pairs a sink schedule absorbs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum SiteSet {
    /// The origin, at every step. This is the schedule used throughout the
    /// recurrence analysis.
    Origin,
    /// A fixed set of positions, absorbed at every step.
    Positions(BTreeSet<i64>),
    /// Explicit (position, step) pairs.
    PositionSteps(BTreeSet<(i64, usize)>),
    /// Every position at every step; mainly useful to exercise total
    /// absorption.
    Everywhere,
}

impl SiteSet {
    fn contains(&self, position: i64, step: usize) -> bool {
        match self {
            SiteSet::Origin => position == 0,
            SiteSet::Positions(set) => set.contains(&position),
            SiteSet::PositionSteps(set) => set.contains(&(position, step)),
            SiteSet::Everywhere => true,
        }
    }
}

/// Programmable absorbing sinks: where they act, how much intensity leaks
/// through, and which coin components they couple out.
///
/// The ideal origin schedule (zero residual, both coins) realizes the
/// projector `1 - |0><0|` on the position space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SinkSchedule {
    sites: SiteSet,
    residual_transmission: f64,
    absorb_r: bool,
    absorb_l: bool,
}

impl Default for SinkSchedule {
    fn default() -> Self {
        Self::ideal_origin()
    }
}

impl SinkSchedule {
    /// Perfect sink at the origin after every step.
    pub fn ideal_origin() -> Self {
        SinkSchedule {
            sites: SiteSet::Origin,
            residual_transmission: 0.0,
            absorb_r: true,
            absorb_l: true,
        }
    }

    /// Origin sink with the given residual intensity transmission.
    pub fn origin_with_residual(residual_transmission: f64) -> Result<Self> {
        Self::new(SiteSet::Origin, residual_transmission)
    }

    /// Sink over an arbitrary site set, absorbing both coin components.
    pub fn new(sites: SiteSet, residual_transmission: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&residual_transmission) {
            return Err(Error::InvalidParameter {
                name: "residual_transmission",
                message: format!("{residual_transmission} is outside [0, 1]"),
            });
        }
        Ok(SinkSchedule {
            sites,
            residual_transmission,
            absorb_r: true,
            absorb_l: true,
        })
    }

    /// Restrict absorption to the given coin components (polarization
    /// sensitive sink).
    pub fn coin_selective(mut self, absorbed: &[CoinLabel]) -> Self {
        self.absorb_r = absorbed.contains(&CoinLabel::R);
        self.absorb_l = absorbed.contains(&CoinLabel::L);
        self
    }

    pub fn residual_transmission(&self) -> f64 {
        self.residual_transmission
    }

    pub fn sites(&self) -> &SiteSet {
        &self.sites
    }

    /// Does this schedule absorb at `(position, step)`?
    pub fn is_absorbed(&self, position: i64, step: usize) -> bool {
        self.sites.contains(position, step)
    }
}

/// Apply the sinks scheduled for `at_step` to a state.
///
/// Absorbed amplitudes are scaled by `sqrt(residual_transmission)` (zeroed
/// for an ideal sink); the state is *not* renormalized, so its squared norm
/// keeps tracking the survival probability. Returns the surviving state and
/// the intensity removed.
pub fn apply_sink(state: &WalkState, schedule: &SinkSchedule, at_step: usize) -> (WalkState, f64) {
    let mut out = state.clone();
    let keep = schedule.residual_transmission.sqrt();
    let mut absorbed = 0.0;
    for x in state.positions() {
        if !schedule.is_absorbed(x, at_step) {
            continue;
        }
        let (r, l) = state.amplitudes_at(x);
        let mut removed = 0.0;
        if schedule.absorb_r {
            removed += r.norm_sqr();
        }
        if schedule.absorb_l {
            removed += l.norm_sqr();
        }
        absorbed += (1.0 - schedule.residual_transmission) * removed;
        out.scale_position(x, keep, (schedule.absorb_r, schedule.absorb_l));
    }
    out.refresh_norm();
    (out, absorbed)
}

/// Probability to find the walker at the origin after `t` undisturbed steps:
/// the total origin intensity of the freely evolved state (the position
/// measurement does not resolve the coin).
pub fn reset_probability(initial: &InitialSpec, coin: &CoinSpec, t: usize) -> f64 {
    let mut state = initial_state(initial);
    for _ in 0..t {
        state = step(&state, coin);
    }
    state.intensity_at(0)
}

/// Conditional state after `t` steps of monitored evolution: the unitary and
/// the sink alternate, with no sink after the final step. Returns the
/// normalized state together with the survival probability `s_{t-1}` it was
/// normalized by.
///
/// Fails with [`Error::FullyAbsorbed`] when nothing survives the monitoring.
pub fn conditional_evolve(
    initial: &InitialSpec,
    coin: &CoinSpec,
    schedule: &SinkSchedule,
    t: usize,
) -> Result<(WalkState, f64)> {
    assert!(t >= 1, "conditional evolution needs at least one step");
    let mut state = initial_state(initial);
    let mut survival = state.norm_squared();
    for k in 1..=t {
        state = step(&state, coin);
        if k < t {
            let (surviving, _) = apply_sink(&state, schedule, k);
            state = surviving;
            survival = state.norm_squared();
        }
    }
    if survival <= 0.0 {
        return Err(Error::FullyAbsorbed);
    }
    let normalized = state.normalized()?;
    Ok((normalized, survival))
}

/// Survival probability `s_t`: the squared norm after `t` rounds of unitary
/// evolution each followed by the scheduled sink.
pub fn survival_probability(
    initial: &InitialSpec,
    coin: &CoinSpec,
    schedule: &SinkSchedule,
    t: usize,
) -> f64 {
    let mut state = initial_state(initial);
    for k in 1..=t {
        state = step(&state, coin);
        let (surviving, _) = apply_sink(&state, schedule, k);
        state = surviving;
    }
    state.norm_squared()
}

/// Conditional probability to find the walker at each position after `t`
/// monitored steps, given that it escaped absorption so far. Sums to one.
pub fn conditional_distribution(
    initial: &InitialSpec,
    coin: &CoinSpec,
    schedule: &SinkSchedule,
    t: usize,
) -> Result<BTreeMap<i64, f64>> {
    let (state, _) = conditional_evolve(initial, coin, schedule, t)?;
    Ok(position_distribution(&state)?.normalized)
}

/// First return probability `q(0,t)` under ideal origin monitoring: the
/// origin intensity of the unnormalized conditional state right before the
/// measurement due at step `t`.
pub fn first_return_probability(initial: &InitialSpec, coin: &CoinSpec, t: usize) -> f64 {
    let schedule = SinkSchedule::ideal_origin();
    let mut state = initial_state(initial);
    for k in 1..=t {
        state = step(&state, coin);
        if k < t {
            let (surviving, _) = apply_sink(&state, &schedule, k);
            state = surviving;
        }
    }
    state.intensity_at(0)
}

/// Per-step recurrence bookkeeping over a horizon `T`. Step indices are
/// 1-based: entry `t - 1` of each series belongs to step `t`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RecurrenceSeries {
    horizon: usize,
    /// `p(0,t)`: origin probability under free evolution (reset scheme).
    origin_probability: Vec<f64>,
    /// `q(0,t)`: first return probability (continual scheme).
    first_return: Vec<f64>,
    /// `s_t`: survival through step `t`, after the sink at `t` fired.
    survival: Vec<f64>,
    /// Cumulative recurrence probability of the continual scheme.
    cumulative_continual: Vec<f64>,
    /// Cumulative recurrence probability of the reset scheme.
    cumulative_reset: Vec<f64>,
}

impl RecurrenceSeries {
    pub fn horizon(&self) -> usize {
        self.horizon
    }

    fn entry(series: &[f64], t: usize) -> f64 {
        assert!(t >= 1 && t <= series.len(), "step {t} out of range");
        series[t - 1]
    }

    /// `p(0,t)` for `1 <= t <= horizon`; requires the reset pass.
    pub fn origin_probability(&self, t: usize) -> f64 {
        Self::entry(&self.origin_probability, t)
    }

    /// `q(0,t)` for `1 <= t <= horizon`; requires the continual pass.
    pub fn first_return(&self, t: usize) -> f64 {
        Self::entry(&self.first_return, t)
    }

    /// Survival `s_t`; `s_0 = 1` by convention.
    pub fn survival(&self, t: usize) -> f64 {
        if t == 0 {
            1.0
        } else {
            Self::entry(&self.survival, t)
        }
    }

    /// Continual-scheme recurrence probability within the first `t` steps.
    pub fn continual(&self, t: usize) -> f64 {
        Self::entry(&self.cumulative_continual, t)
    }

    /// Reset-scheme recurrence probability within the first `t` steps.
    pub fn reset(&self, t: usize) -> f64 {
        Self::entry(&self.cumulative_reset, t)
    }

    pub fn origin_probabilities(&self) -> &[f64] {
        &self.origin_probability
    }

    pub fn first_returns(&self) -> &[f64] {
        &self.first_return
    }

    pub fn survivals(&self) -> &[f64] {
        &self.survival
    }

    pub fn cumulative_continual(&self) -> &[f64] {
        &self.cumulative_continual
    }

    pub fn cumulative_reset(&self) -> &[f64] {
        &self.cumulative_reset
    }

    pub fn has_continual(&self) -> bool {
        !self.first_return.is_empty()
    }

    pub fn has_reset(&self) -> bool {
        !self.origin_probability.is_empty()
    }

    /// Merge the continual fields of one series with the reset fields of
    /// another, over the same horizon.
    pub fn merged(continual: RecurrenceSeries, reset: RecurrenceSeries) -> RecurrenceSeries {
        assert_eq!(continual.horizon, reset.horizon, "horizon mismatch");
        RecurrenceSeries {
            horizon: continual.horizon,
            origin_probability: reset.origin_probability,
            first_return: continual.first_return,
            survival: continual.survival,
            cumulative_continual: continual.cumulative_continual,
            cumulative_reset: reset.cumulative_reset,
        }
    }
}

/// Continual-scheme recurrence up to horizon `T` in a single pass.
///
/// The unnormalized conditional state is carried from step to step, so the
/// whole series costs the same `O(T^2)` as one evolution. Survival entries
/// are independent re-summations of the surviving intensity, not running
/// subtractions, so the bookkeeping identity `s_T = 1 - P(T)` genuinely
/// tests unitarity.
pub fn continual_recurrence(
    initial: &InitialSpec,
    coin: &CoinSpec,
    horizon: usize,
) -> RecurrenceSeries {
    assert!(horizon >= 1, "horizon must be at least 1");
    let schedule = SinkSchedule::ideal_origin();
    let mut state = initial_state(initial);
    let mut first_return = Vec::with_capacity(horizon);
    let mut survival = Vec::with_capacity(horizon);
    let mut cumulative = Vec::with_capacity(horizon);
    let mut total = 0.0;
    for t in 1..=horizon {
        state = step(&state, coin);
        // Origin read-out happens before the sink due at this step fires.
        let q = state.intensity_at(0);
        total += q;
        first_return.push(q);
        cumulative.push(total);
        let (surviving, _) = apply_sink(&state, &schedule, t);
        state = surviving;
        survival.push(state.norm_squared());
    }
    RecurrenceSeries {
        horizon,
        origin_probability: Vec::new(),
        first_return,
        survival,
        cumulative_continual: cumulative,
        cumulative_reset: Vec::new(),
    }
}

/// Reset-scheme recurrence up to horizon `T`: one free evolution pass,
/// reading the origin probability at every step.
pub fn reset_recurrence(
    initial: &InitialSpec,
    coin: &CoinSpec,
    horizon: usize,
) -> RecurrenceSeries {
    assert!(horizon >= 1, "horizon must be at least 1");
    let mut state = initial_state(initial);
    let mut origin_probability = Vec::with_capacity(horizon);
    let mut cumulative = Vec::with_capacity(horizon);
    let mut miss_product = 1.0;
    for _ in 1..=horizon {
        state = step(&state, coin);
        let p = state.intensity_at(0);
        origin_probability.push(p);
        miss_product *= 1.0 - p;
        cumulative.push(1.0 - miss_product);
    }
    RecurrenceSeries {
        horizon,
        origin_probability,
        first_return: Vec::new(),
        survival: Vec::new(),
        cumulative_continual: Vec::new(),
        cumulative_reset: cumulative,
    }
}

/// Both schemes over the same horizon, merged into one series.
pub fn recurrence_series(
    initial: &InitialSpec,
    coin: &CoinSpec,
    horizon: usize,
) -> RecurrenceSeries {
    RecurrenceSeries::merged(
        continual_recurrence(initial, coin, horizon),
        reset_recurrence(initial, coin, horizon),
    )
}
