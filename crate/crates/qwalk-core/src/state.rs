//! State-vector representation of a coined walker on the integer line and
//! its exact unitary evolution.
//!
//! Amplitudes live on the light cone: after `t` steps from the origin only
//! positions with `|x| <= t` and `x = t (mod 2)` can be occupied. Storage is
//! a dense array over `x in [-t, t]` with two complex entries per site, so a
//! `T`-step evolution costs `O(T^2)` work in total.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::coin::{CoinLabel, CoinSpec};
use crate::error::{Error, Result};

/// Tolerance for rejecting non-normalized initial specifications.
pub const INITIAL_NORM_TOL: f64 = 1e-9;

/// Initial condition of a walk: the walker sits at the origin with the given
/// coin amplitudes `(alpha_R, alpha_L)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InitialSpec {
    coin_amplitudes: (C64, C64),
}

impl InitialSpec {
    /// Build an initial coin state, rejecting vectors whose squared norm
    /// deviates from 1 by more than [`INITIAL_NORM_TOL`].
    pub fn new(alpha_r: C64, alpha_l: C64) -> Result<Self> {
        let norm_squared = alpha_r.norm_sqr() + alpha_l.norm_sqr();
        if (norm_squared - 1.0).abs() > INITIAL_NORM_TOL {
            return Err(Error::NotNormalized {
                norm_squared,
                tolerance: INITIAL_NORM_TOL,
            });
        }
        Ok(InitialSpec {
            coin_amplitudes: (alpha_r, alpha_l),
        })
    }

    /// Walker starting in the right-moving coin state (horizontal
    /// polarization).
    pub fn right() -> Self {
        InitialSpec {
            coin_amplitudes: (C64::new(1.0, 0.0), C64::new(0.0, 0.0)),
        }
    }

    /// Walker starting in the left-moving coin state.
    pub fn left() -> Self {
        InitialSpec {
            coin_amplitudes: (C64::new(0.0, 0.0), C64::new(1.0, 0.0)),
        }
    }

    /// The balanced state `(1, i)/sqrt 2`, which spreads symmetrically under
    /// the Hadamard coin.
    pub fn symmetric() -> Self {
        let r = std::f64::consts::FRAC_1_SQRT_2;
        InitialSpec {
            coin_amplitudes: (C64::new(r, 0.0), C64::new(0.0, r)),
        }
    }

    pub fn coin_amplitudes(&self) -> (C64, C64) {
        self.coin_amplitudes
    }
}

/// Wavefunction of the walker at a fixed step: complex amplitude pairs
/// `(a_{x,R}, a_{x,L})` for every position on the light cone.
///
/// States produced by pure unitary evolution keep squared norm 1; states
/// that have passed through absorbing sinks carry their survival probability
/// as the squared norm (no renormalization happens here).
#[derive(Debug, Clone, PartialEq)]
pub struct WalkState {
    step: usize,
    /// `2 * (2 * step + 1)` entries: index `2 * (x + step) + coin`.
    amplitudes: Vec<C64>,
    norm_squared: f64,
}

impl WalkState {
    /// Step counter of this state.
    pub fn step_index(&self) -> usize {
        self.step
    }

    /// Cached squared norm (total intensity).
    pub fn norm_squared(&self) -> f64 {
        self.norm_squared
    }

    /// Amplitude pair at position `x`, zero off the stored cone.
    pub fn amplitudes_at(&self, x: i64) -> (C64, C64) {
        match self.offset_of(x) {
            Some(i) => (self.amplitudes[i], self.amplitudes[i + 1]),
            None => (C64::new(0.0, 0.0), C64::new(0.0, 0.0)),
        }
    }

    /// Single amplitude at `(x, coin)`.
    pub fn amplitude(&self, x: i64, coin: CoinLabel) -> C64 {
        let pair = self.amplitudes_at(x);
        match coin {
            CoinLabel::R => pair.0,
            CoinLabel::L => pair.1,
        }
    }

    /// Total intensity at position `x` (both coin components).
    pub fn intensity_at(&self, x: i64) -> f64 {
        let (r, l) = self.amplitudes_at(x);
        r.norm_sqr() + l.norm_sqr()
    }

    /// Positions within the stored cone, `-step ..= step`.
    pub fn positions(&self) -> impl Iterator<Item = i64> + '_ {
        let t = self.step as i64;
        -t..=t
    }

    /// Occupied positions (nonzero intensity) in ascending order.
    pub fn occupied_positions(&self) -> Vec<i64> {
        self.positions()
            .filter(|&x| self.intensity_at(x) > 0.0)
            .collect()
    }

    fn offset_of(&self, x: i64) -> Option<usize> {
        let t = self.step as i64;
        if x < -t || x > t {
            None
        } else {
            Some(2 * (x + t) as usize)
        }
    }

    fn recompute_norm(&mut self) {
        self.norm_squared = self.amplitudes.iter().map(|a| a.norm_sqr()).sum();
    }

    /// Scale the amplitude pair at `x` in place. Used by sink application;
    /// callers must refresh the cached norm afterwards.
    pub(crate) fn scale_position(&mut self, x: i64, factor: f64, coins: (bool, bool)) {
        if let Some(i) = self.offset_of(x) {
            if coins.0 {
                self.amplitudes[i] *= factor;
            }
            if coins.1 {
                self.amplitudes[i + 1] *= factor;
            }
        }
    }

    /// Scale every R amplitude by `factor_r` and every L amplitude by
    /// `factor_l` (loss modelling), refreshing the cached norm.
    pub(crate) fn scale_coins(&mut self, factor_r: f64, factor_l: f64) {
        for pair in self.amplitudes.chunks_exact_mut(2) {
            pair[0] *= factor_r;
            pair[1] *= factor_l;
        }
        self.recompute_norm();
    }

    pub(crate) fn refresh_norm(&mut self) {
        self.recompute_norm();
    }

    /// Divide all amplitudes by `sqrt(norm_squared)`, e.g. to turn an
    /// unnormalized conditional state into a proper wavefunction.
    pub(crate) fn normalized(mut self) -> Result<Self> {
        if self.norm_squared <= 0.0 {
            return Err(Error::FullyAbsorbed);
        }
        let inv = 1.0 / self.norm_squared.sqrt();
        for a in &mut self.amplitudes {
            *a *= inv;
        }
        self.recompute_norm();
        Ok(self)
    }
}

/// Position-space distribution of a state: raw intensities and, when the
/// state has not fully vanished, the normalized conditional distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PositionDistribution {
    /// Unnormalized intensities `|a_{x,R}|^2 + |a_{x,L}|^2`.
    pub raw: BTreeMap<i64, f64>,
    /// Raw intensities divided by the total, summing to 1.
    pub normalized: BTreeMap<i64, f64>,
}

/// The walker placed at the origin with the given coin state; step 0.
pub fn initial_state(spec: &InitialSpec) -> WalkState {
    let (r, l) = spec.coin_amplitudes();
    let mut state = WalkState {
        step: 0,
        amplitudes: vec![r, l],
        norm_squared: 0.0,
    };
    state.recompute_norm();
    state
}

/// Apply the coin at every occupied position. Leaves the step index alone;
/// the squared norm is preserved up to rounding.
pub fn apply_coin(state: &WalkState, coin: &CoinSpec) -> WalkState {
    let mut out = state.clone();
    for pair in out.amplitudes.chunks_exact_mut(2) {
        let (r, l) = coin.apply((pair[0], pair[1]));
        pair[0] = r;
        pair[1] = l;
    }
    out.recompute_norm();
    out
}

/// Conditional shift: R amplitudes move to `x + 1`, L amplitudes to `x - 1`.
/// The step index advances by one and the norm is preserved exactly.
pub fn apply_shift(state: &WalkState) -> WalkState {
    let t = state.step as i64;
    let new_t = t + 1;
    let mut amplitudes = vec![C64::new(0.0, 0.0); 2 * (2 * state.step + 3)];
    for x in -t..=t {
        let (r, l) = state.amplitudes_at(x);
        // destination index: 2 * (x' + new_t) + coin
        amplitudes[2 * (x + 1 + new_t) as usize] = r;
        amplitudes[2 * (x - 1 + new_t) as usize + 1] = l;
    }
    WalkState {
        step: state.step + 1,
        amplitudes,
        norm_squared: state.norm_squared,
    }
}

/// One full walk step: coin toss followed by the conditional shift.
pub fn step(state: &WalkState, coin: &CoinSpec) -> WalkState {
    apply_shift(&apply_coin(state, coin))
}

/// Evolve `t` steps from the initial condition with no measurements.
pub fn evolve(spec: &InitialSpec, coin: &CoinSpec, t: usize) -> WalkState {
    evolve_with(spec, |_| *coin, t)
}

/// Evolve with a step-dependent coin: `coin_at(k)` tosses before the k-th
/// shift (k = 1..=t). Coins stay homogeneous across positions.
pub fn evolve_with(spec: &InitialSpec, coin_at: impl Fn(usize) -> CoinSpec, t: usize) -> WalkState {
    let mut state = initial_state(spec);
    for k in 1..=t {
        state = step(&state, &coin_at(k));
    }
    state
}

/// Marginalize the coin: per-position intensities, raw and normalized.
///
/// Fails with [`Error::VanishedState`] when all amplitude has been absorbed.
pub fn position_distribution(state: &WalkState) -> Result<PositionDistribution> {
    let mut raw = BTreeMap::new();
    let mut total = 0.0;
    for x in state.positions() {
        let intensity = state.intensity_at(x);
        if intensity > 0.0 {
            raw.insert(x, intensity);
            total += intensity;
        }
    }
    if total <= 0.0 {
        return Err(Error::VanishedState);
    }
    let normalized = raw.iter().map(|(&x, &p)| (x, p / total)).collect();
    Ok(PositionDistribution { raw, normalized })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coin::{hadamard_coin, identity_coin};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use std::f64::consts::FRAC_1_SQRT_2;

    fn from_right() -> WalkState {
        initial_state(&InitialSpec::right())
    }

    #[test]
    fn initial_state_places_walker_at_origin() {
        let state = from_right();
        assert_eq!(state.step_index(), 0);
        assert_abs_diff_eq!(state.amplitude(0, CoinLabel::R).re, 1.0);
        assert_abs_diff_eq!(state.amplitude(0, CoinLabel::L).norm(), 0.0);

        let left = initial_state(&InitialSpec::left());
        assert_abs_diff_eq!(left.amplitude(0, CoinLabel::L).re, 1.0);

        let sym = initial_state(&InitialSpec::symmetric());
        assert_abs_diff_eq!(sym.norm_squared(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn initial_spec_rejects_unnormalized_input() {
        let r = InitialSpec::new(C64::new(0.9, 0.0), C64::new(0.0, 0.0));
        assert!(matches!(r, Err(Error::NotNormalized { .. })));
    }

    #[test]
    fn identity_coin_is_a_no_op() {
        let state = step(&from_right(), &hadamard_coin());
        let after = apply_coin(&state, &identity_coin());
        for x in state.positions() {
            let (a, b) = state.amplitudes_at(x);
            let (c, d) = after.amplitudes_at(x);
            assert_abs_diff_eq!((a - c).norm(), 0.0);
            assert_abs_diff_eq!((b - d).norm(), 0.0);
        }
    }

    #[test]
    fn hadamard_coin_splits_and_recombines() {
        let coined = apply_coin(&from_right(), &hadamard_coin());
        assert_abs_diff_eq!(
            coined.amplitude(0, CoinLabel::R).re,
            FRAC_1_SQRT_2,
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(
            coined.amplitude(0, CoinLabel::L).re,
            FRAC_1_SQRT_2,
            epsilon = 1e-15
        );
        // (1/sqrt2, 1/sqrt2) maps back to (1, 0)
        let recombined = apply_coin(&coined, &hadamard_coin());
        assert_abs_diff_eq!(
            recombined.amplitude(0, CoinLabel::R).re,
            1.0,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            recombined.amplitude(0, CoinLabel::L).norm(),
            0.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn shift_moves_right_and_left_components() {
        let shifted = apply_shift(&from_right());
        assert_eq!(shifted.step_index(), 1);
        assert_abs_diff_eq!(shifted.amplitude(1, CoinLabel::R).re, 1.0);

        let shifted_l = apply_shift(&initial_state(&InitialSpec::left()));
        assert_abs_diff_eq!(shifted_l.amplitude(-1, CoinLabel::L).re, 1.0);

        let coined = apply_coin(&from_right(), &hadamard_coin());
        let both = apply_shift(&coined);
        assert_abs_diff_eq!(both.amplitude(1, CoinLabel::R).re, FRAC_1_SQRT_2);
        assert_abs_diff_eq!(both.amplitude(-1, CoinLabel::L).re, FRAC_1_SQRT_2);
        assert_abs_diff_eq!(both.norm_squared(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn one_hadamard_step() {
        let state = step(&from_right(), &hadamard_coin());
        assert_abs_diff_eq!(state.amplitude(1, CoinLabel::R).re, FRAC_1_SQRT_2);
        assert_abs_diff_eq!(state.amplitude(-1, CoinLabel::L).re, FRAC_1_SQRT_2);
    }

    #[test]
    fn two_hadamard_steps_match_hand_expansion() {
        let coin = hadamard_coin();
        let state = step(&step(&from_right(), &coin), &coin);
        assert_abs_diff_eq!(state.amplitude(2, CoinLabel::R).re, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(state.amplitude(0, CoinLabel::R).re, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(state.amplitude(0, CoinLabel::L).re, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(state.amplitude(-2, CoinLabel::L).re, -0.5, epsilon = 1e-15);
    }

    #[test]
    fn step_dependent_coins_alternate() {
        // Hadamard on odd tosses, identity on even ones: after two steps
        // the superposition just rides outward.
        let coins = |k: usize| {
            if k % 2 == 1 {
                hadamard_coin()
            } else {
                identity_coin()
            }
        };
        let state = evolve_with(&InitialSpec::right(), coins, 2);
        assert_abs_diff_eq!(state.amplitude(2, CoinLabel::R).re, FRAC_1_SQRT_2);
        assert_abs_diff_eq!(state.amplitude(-2, CoinLabel::L).re, FRAC_1_SQRT_2);

        let constant = evolve_with(&InitialSpec::right(), |_| hadamard_coin(), 4);
        assert_eq!(constant, evolve(&InitialSpec::right(), &hadamard_coin(), 4));
    }

    #[test]
    fn identity_coin_walk_is_ballistic() {
        let coin = identity_coin();
        let mut state = from_right();
        for _ in 0..7 {
            state = step(&state, &coin);
        }
        assert_abs_diff_eq!(state.amplitude(7, CoinLabel::R).re, 1.0, epsilon = 1e-15);

        let dist = position_distribution(&state).unwrap();
        assert_eq!(dist.normalized.len(), 1);
        assert_abs_diff_eq!(dist.normalized[&7], 1.0);
    }

    #[test]
    fn position_distribution_small_steps() {
        let coin = hadamard_coin();
        let one = step(&from_right(), &coin);
        let d1 = position_distribution(&one).unwrap();
        assert_abs_diff_eq!(d1.normalized[&1], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(d1.normalized[&-1], 0.5, epsilon = 1e-15);

        let two = step(&one, &coin);
        let d2 = position_distribution(&two).unwrap();
        assert_abs_diff_eq!(d2.normalized[&2], 0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(d2.normalized[&0], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(d2.normalized[&-2], 0.25, epsilon = 1e-15);
    }

    #[test]
    fn position_distribution_errors_on_vanished_state() {
        let mut state = from_right();
        state.scale_position(0, 0.0, (true, true));
        state.refresh_norm();
        assert_eq!(position_distribution(&state), Err(Error::VanishedState));
    }

    #[test]
    fn long_chain_preserves_norm() {
        let coin = hadamard_coin();
        let mut state = initial_state(&InitialSpec::symmetric());
        for _ in 0..1000 {
            state = step(&state, &coin);
        }
        assert_abs_diff_eq!(state.norm_squared(), 1.0, epsilon = 1e-12);
    }

    fn arbitrary_coin() -> impl Strategy<Value = CoinSpec> {
        // Unitaries from the HWP family composed with a phase-free rotation
        // cover enough of U(2) for invariance checks.
        (0.0..std::f64::consts::PI).prop_map(crate::coin::hwp_coin)
    }

    fn arbitrary_initial() -> impl Strategy<Value = InitialSpec> {
        (0.0..std::f64::consts::TAU, 0.0..std::f64::consts::TAU).prop_map(|(a, phi)| {
            let r = a.cos();
            let l = C64::from_polar(a.sin(), phi);
            InitialSpec::new(C64::new(r, 0.0), l).unwrap()
        })
    }

    proptest! {
        #[test]
        fn unitarity_over_random_chains(
            coin in arbitrary_coin(),
            init in arbitrary_initial(),
            steps in 1usize..60,
        ) {
            let mut state = initial_state(&init);
            for _ in 0..steps {
                state = step(&state, &coin);
            }
            prop_assert!((state.norm_squared() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn light_cone_and_parity(
            coin in arbitrary_coin(),
            init in arbitrary_initial(),
            steps in 0usize..40,
        ) {
            let mut state = initial_state(&init);
            for _ in 0..steps {
                state = step(&state, &coin);
            }
            let t = state.step_index() as i64;
            for x in state.occupied_positions() {
                prop_assert!(x.abs() <= t);
                prop_assert_eq!(x.rem_euclid(2), t.rem_euclid(2));
            }
        }

        #[test]
        fn step_is_linear(
            coin in arbitrary_coin(),
            a in arbitrary_initial(),
            b in arbitrary_initial(),
            steps in 1usize..10,
        ) {
            // step(alpha psi1 + beta psi2) = alpha step(psi1) + beta step(psi2)
            let alpha = C64::new(0.6, 0.2);
            let beta = C64::new(-0.3, 0.5);
            let mut sa = initial_state(&a);
            let mut sb = initial_state(&b);
            // combined initial state, built directly from amplitudes
            let (ar, al) = a.coin_amplitudes();
            let (br, bl) = b.coin_amplitudes();
            let mut combined = WalkState {
                step: 0,
                amplitudes: vec![alpha * ar + beta * br, alpha * al + beta * bl],
                norm_squared: 0.0,
            };
            combined.refresh_norm();
            for _ in 0..steps {
                sa = step(&sa, &coin);
                sb = step(&sb, &coin);
                combined = step(&combined, &coin);
            }
            for x in combined.positions() {
                let (cr, cl) = combined.amplitudes_at(x);
                let (sar, sal) = sa.amplitudes_at(x);
                let (sbr, sbl) = sb.amplitudes_at(x);
                prop_assert!((cr - (alpha * sar + beta * sbr)).norm() < 1e-12);
                prop_assert!((cl - (alpha * sal + beta * sbl)).norm() < 1e-12);
            }
        }

        #[test]
        fn hadamard_applied_twice_restores_state(
            init in arbitrary_initial(),
            steps in 0usize..8,
        ) {
            let coin = hadamard_coin();
            let mut state = initial_state(&init);
            for _ in 0..steps {
                state = step(&state, &coin);
            }
            let back = apply_coin(&apply_coin(&state, &coin), &coin);
            for x in state.positions() {
                let (a, b) = state.amplitudes_at(x);
                let (c, d) = back.amplitudes_at(x);
                prop_assert!((a - c).norm() < 1e-12);
                prop_assert!((b - d).norm() < 1e-12);
            }
        }
    }
}
