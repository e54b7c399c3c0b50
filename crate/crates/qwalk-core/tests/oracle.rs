//! Brute-force path-sum oracle.
//!
//! Instead of evolving a state vector, these tests enumerate every coin
//! history of length `t` and sum the product of coin-matrix entries along
//! each path. The oracle shares no code with the engine's evolution or sink
//! machinery, so agreement pins down the dynamics independently.

use num_complex::Complex64 as C64;
use qwalk_core::{
    continual_recurrence, first_return_probability, hadamard_coin, reset_probability,
    reset_recurrence, CoinLabel, CoinSpec, InitialSpec,
};
use std::collections::HashMap;

/// Amplitudes over (position, coin) after `t` steps, summed over all 2^t
/// coin paths. `block_origin` drops every path that revisits the origin at
/// intermediate steps 1..t-1, which is exactly the monitored (conditional)
/// evolution.
fn path_sum(
    initial: &InitialSpec,
    coin: &CoinSpec,
    t: usize,
    block_origin: bool,
) -> HashMap<(i64, CoinLabel), C64> {
    let m = coin.matrix();
    let (alpha_r, alpha_l) = initial.coin_amplitudes();
    let mut acc: HashMap<(i64, CoinLabel), C64> = HashMap::new();
    // One path = the sequence of coin states after each toss.
    for path in 0..(1u64 << t) {
        let mut amplitude;
        let mut coin_state;
        // First toss acts on the initial coin state.
        let first_out = if path & 1 == 0 { 0 } else { 1 }; // 0 = R, 1 = L
        amplitude = m[first_out][0] * alpha_r + m[first_out][1] * alpha_l;
        coin_state = first_out;
        let mut position: i64 = if first_out == 0 { 1 } else { -1 };
        let mut alive = true;
        for step_index in 1..t {
            if block_origin && position == 0 {
                alive = false;
                break;
            }
            let out = if (path >> step_index) & 1 == 0 { 0 } else { 1 };
            amplitude *= m[out][coin_state];
            coin_state = out;
            position += if out == 0 { 1 } else { -1 };
        }
        if !alive || amplitude == C64::new(0.0, 0.0) {
            continue;
        }
        let label = if coin_state == 0 {
            CoinLabel::R
        } else {
            CoinLabel::L
        };
        *acc.entry((position, label)).or_insert(C64::new(0.0, 0.0)) += amplitude;
    }
    acc
}

fn origin_intensity(amps: &HashMap<(i64, CoinLabel), C64>) -> f64 {
    amps.iter()
        .filter(|((x, _), _)| *x == 0)
        .map(|(_, a)| a.norm_sqr())
        .sum()
}

fn oracle_reset_probability(t: usize) -> f64 {
    origin_intensity(&path_sum(&InitialSpec::right(), &hadamard_coin(), t, false))
}

fn oracle_first_return(t: usize) -> f64 {
    origin_intensity(&path_sum(&InitialSpec::right(), &hadamard_coin(), t, true))
}

#[test]
fn oracle_pins_the_small_step_reset_values() {
    assert_eq!(oracle_reset_probability(1), 0.0);
    assert!((oracle_reset_probability(2) - 0.5).abs() < 1e-12);
    assert!((oracle_reset_probability(4) - 0.125).abs() < 1e-12);
    assert!((oracle_reset_probability(6) - 0.125).abs() < 1e-12);
}

#[test]
fn oracle_pins_the_small_step_first_returns() {
    assert_eq!(oracle_first_return(1), 0.0);
    assert!((oracle_first_return(2) - 0.5).abs() < 1e-12);
    assert!((oracle_first_return(4) - 0.125).abs() < 1e-12);
    // The six-step first return vanishes identically for this walk.
    assert!(oracle_first_return(6).abs() < 1e-12);
    assert!((oracle_first_return(8) - 1.0 / 128.0).abs() < 1e-12);
}

#[test]
fn engine_matches_the_path_sum_for_free_evolution() {
    let initial = InitialSpec::right();
    let coin = hadamard_coin();
    for t in 1..=12 {
        let engine = reset_probability(&initial, &coin, t);
        let oracle = oracle_reset_probability(t);
        assert!(
            (engine - oracle).abs() < 1e-12,
            "t={t}: engine {engine} vs oracle {oracle}"
        );
    }
}

#[test]
fn engine_matches_the_path_sum_for_monitored_evolution() {
    let initial = InitialSpec::right();
    let coin = hadamard_coin();
    for t in 1..=12 {
        let engine = first_return_probability(&initial, &coin, t);
        let oracle = oracle_first_return(t);
        assert!(
            (engine - oracle).abs() < 1e-12,
            "t={t}: engine {engine} vs oracle {oracle}"
        );
    }
}

#[test]
fn engine_matches_the_path_sum_for_a_tilted_coin() {
    // Same comparison off the Hadamard point, to catch sign conventions
    // that happen to cancel for symmetric coins.
    let initial = InitialSpec::symmetric();
    let coin = qwalk_core::hwp_coin(0.3);
    for t in 1..=10 {
        let free = path_sum(&initial, &coin, t, false);
        let engine_free = reset_probability(&initial, &coin, t);
        assert!(
            (engine_free - origin_intensity(&free)).abs() < 1e-12,
            "free t={t}"
        );

        let monitored = path_sum(&initial, &coin, t, true);
        let engine_monitored = first_return_probability(&initial, &coin, t);
        assert!(
            (engine_monitored - origin_intensity(&monitored)).abs() < 1e-12,
            "monitored t={t}"
        );
    }
}

#[test]
fn cumulative_recurrence_matches_the_oracle_partial_sums() {
    let initial = InitialSpec::right();
    let coin = hadamard_coin();
    let horizon = 10;
    let continual = continual_recurrence(&initial, &coin, horizon);
    let reset = reset_recurrence(&initial, &coin, horizon);

    let mut q_sum = 0.0;
    let mut miss = 1.0;
    for t in 1..=horizon {
        q_sum += oracle_first_return(t);
        miss *= 1.0 - oracle_reset_probability(t);
        assert!((continual.continual(t) - q_sum).abs() < 1e-12, "P({t})");
        assert!((reset.reset(t) - (1.0 - miss)).abs() < 1e-12, "Pr({t})");
    }

    // The frozen four-step quantities.
    assert!((continual.continual(4) - 0.625).abs() < 1e-12);
    assert!((reset.reset(4) - 0.5625).abs() < 1e-12);
    assert!((continual.survival(2) - 0.5).abs() < 1e-12);
    assert!((continual.survival(4) - 0.375).abs() < 1e-12);
}
