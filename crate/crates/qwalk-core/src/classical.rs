//! Classical random-walk recurrence on d-dimensional integer lattices.
//!
//! Everything here concerns the unbiased nearest-neighbor walk: at every
//! step one of the `2d` neighbors is chosen uniformly. Origin probabilities
//! `p(0,t)` come from the multinomial allocation of steps onto axes combined
//! with the 1D binomial return weights; first-return probabilities `q(0,t)`
//! come from a dense dynamic program with the origin absorbing from step 1
//! onward. A seeded Monte Carlo estimator provides an independent
//! stochastic cross-check of the DP.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coin::CoinSpec;
use crate::error::{Error, Result};
use crate::monitor::recurrence_series;
use crate::state::InitialSpec;

/// Generator identifier recorded in Monte Carlo metadata. Trial blocks of
/// [`MC_BLOCK_SIZE`] draw from independent ChaCha8 streams derived from the
/// master seed, so results are bit-reproducible at any thread count.
pub const MC_RNG_ALGORITHM: &str = "chacha8/stream-per-block";

/// Trials per RNG stream in the Monte Carlo estimator.
pub const MC_BLOCK_SIZE: u64 = 8192;

/// Horizon caps for the dense first-return DP, per dimension.
const Q_DP_CAPS: [usize; 3] = [100_000, 2_000, 200];

/// An unbiased nearest-neighbor walk on the `d`-dimensional integer lattice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatticeWalkSpec {
    dimension: usize,
}

impl LatticeWalkSpec {
    /// Dimensions 1 through 3 are supported.
    pub fn new(dimension: usize) -> Result<Self> {
        if (1..=3).contains(&dimension) {
            Ok(LatticeWalkSpec { dimension })
        } else {
            Err(Error::UnsupportedDimension { dimension })
        }
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    fn q_horizon_cap(&self) -> usize {
        Q_DP_CAPS[self.dimension - 1]
    }
}

/// Classical per-step series and the recurrence numbers derived from it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassicalSeries {
    pub dimension: usize,
    pub horizon: usize,
    /// `p(0,t)` for `t = 1..=horizon`.
    pub origin_probability: Vec<f64>,
    /// `q(0,t)` for `t = 1..=horizon`.
    pub first_return: Vec<f64>,
    /// Truncated first-return sum (continual-scheme recurrence).
    pub polya_from_q: f64,
    /// Pólya number via the origin-probability sum, with truncation flag.
    pub polya_from_p: TruncatedPolya,
    /// Truncated reset-scheme recurrence.
    pub reset_recurrence: f64,
}

/// `1 - 1 / sum_t p(0,t)` evaluated at a finite horizon.
///
/// The defining series diverges for recurrent walks, so the truncated value
/// always undershoots the limit; `truncation_warning` is set when the sum is
/// still visibly growing at the horizon and the value must not be read as
/// the limit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruncatedPolya {
    pub value: f64,
    pub partial_sum: f64,
    pub truncation_warning: bool,
}

/// 1D return weight `u(t) = C(t, t/2) / 2^t` for even `t`, zero otherwise.
/// Computed by the stable ratio recurrence `u(2k) = u(2k-2) (2k-1) / (2k)`.
fn one_dimensional_returns(horizon: usize) -> Vec<f64> {
    let mut u = vec![0.0; horizon + 1];
    u[0] = 1.0;
    let mut value = 1.0;
    let mut t = 2;
    while t <= horizon {
        value *= (t as f64 - 1.0) / t as f64;
        u[t] = value;
        t += 2;
    }
    u
}

/// Log-factorial table `ln(n!)` for `n = 0..=n_max`.
fn log_factorials(n_max: usize) -> Vec<f64> {
    let mut table = vec![0.0; n_max + 1];
    let mut acc = 0.0;
    for (n, slot) in table.iter_mut().enumerate().skip(1) {
        acc += (n as f64).ln();
        *slot = acc;
    }
    table
}

/// Binomial pmf `C(t, k) a^k (1-a)^(t-k)` via the log-factorial table.
fn binomial_pmf(log_fact: &[f64], t: usize, k: usize, a: f64) -> f64 {
    let log = log_fact[t] - log_fact[k] - log_fact[t - k]
        + k as f64 * a.ln()
        + (t - k) as f64 * (1.0 - a).ln();
    log.exp()
}

/// Origin probabilities `p(0,t)` for all `t = 0..=horizon`.
///
/// The d-dimensional value convolves 1D binomial returns over the
/// multinomial allocation of steps onto axes: conditional on one axis
/// receiving `k` of the `t` steps, the remaining steps form a
/// `(d-1)`-dimensional walk.
pub fn origin_probability_series(spec: &LatticeWalkSpec, horizon: usize) -> Vec<f64> {
    let u = one_dimensional_returns(horizon);
    match spec.dimension() {
        1 => u,
        d => {
            let log_fact = log_factorials(horizon);
            let mut lower = u.clone(); // p for the (d-1)-dimensional sub-walk
            for dim in 2..=d {
                let axis_share = 1.0 / dim as f64;
                let mut current = vec![0.0; horizon + 1];
                current[0] = 1.0;
                for t in (2..=horizon).step_by(2) {
                    let mut total = 0.0;
                    for k in (0..=t).step_by(2) {
                        let w = binomial_pmf(&log_fact, t, k, axis_share);
                        total += w * u[k] * lower[t - k];
                    }
                    current[t] = total;
                }
                lower = current;
            }
            lower
        }
    }
}

/// Exact `p(0,t)`: the probability that the walker sits at the origin after
/// `t` steps.
pub fn classical_origin_probability(spec: &LatticeWalkSpec, t: usize) -> f64 {
    origin_probability_series(spec, t)[t]
}

/// First-return probabilities `q(0,t)` for `t = 1..=horizon`, by dynamic
/// programming with the origin absorbing from step 1 onward.
///
/// The DP is dense over the light cone, so horizons are capped per
/// dimension (200 for d = 3) as a memory guard.
pub fn first_return_series(spec: &LatticeWalkSpec, horizon: usize) -> Result<Vec<f64>> {
    let cap = spec.q_horizon_cap();
    if horizon > cap {
        return Err(Error::HorizonTooLarge {
            horizon,
            cap,
            dimension: spec.dimension(),
        });
    }
    Ok(match spec.dimension() {
        1 => first_return_dp_1d(horizon),
        2 => first_return_dp_2d(horizon),
        _ => first_return_dp_3d(horizon),
    })
}

/// Exact `q(0,t)`: probability of the first return to the origin at step `t`.
pub fn classical_first_return(spec: &LatticeWalkSpec, t: usize) -> Result<f64> {
    assert!(t >= 1, "first return needs t >= 1");
    Ok(first_return_series(spec, t)?[t - 1])
}

fn first_return_dp_1d(horizon: usize) -> Vec<f64> {
    let width = 2 * horizon + 1;
    let origin = horizon as isize;
    let idx = |x: isize| (x + origin) as usize;
    let mut prob = vec![0.0; width];
    let mut next = vec![0.0; width];
    prob[idx(0)] = 1.0;
    let mut q = Vec::with_capacity(horizon);
    for t in 1..=horizon {
        next[..].fill(0.0);
        let reach = t as isize;
        for x in -reach..=reach {
            let p = prob[idx(x)];
            if p > 0.0 {
                next[idx(x - 1)] += 0.5 * p;
                next[idx(x + 1)] += 0.5 * p;
            }
        }
        q.push(next[idx(0)]);
        next[idx(0)] = 0.0; // absorbed
        std::mem::swap(&mut prob, &mut next);
    }
    q
}

fn first_return_dp_2d(horizon: usize) -> Vec<f64> {
    let side = 2 * horizon + 1;
    let origin = horizon as isize;
    let idx = |x: isize, y: isize| (x + origin) as usize * side + (y + origin) as usize;
    let mut prob = vec![0.0; side * side];
    let mut next = vec![0.0; side * side];
    prob[idx(0, 0)] = 1.0;
    let mut q = Vec::with_capacity(horizon);
    for t in 1..=horizon {
        let reach = t as isize;
        for x in -reach..=reach {
            let y_span = reach - x.abs();
            for y in -y_span..=y_span {
                next[idx(x, y)] = 0.0;
            }
        }
        for x in -(reach - 1)..=(reach - 1) {
            let y_span = reach - 1 - x.abs();
            for y in -y_span..=y_span {
                let p = prob[idx(x, y)];
                if p > 0.0 {
                    let share = 0.25 * p;
                    next[idx(x - 1, y)] += share;
                    next[idx(x + 1, y)] += share;
                    next[idx(x, y - 1)] += share;
                    next[idx(x, y + 1)] += share;
                }
            }
        }
        q.push(next[idx(0, 0)]);
        next[idx(0, 0)] = 0.0;
        std::mem::swap(&mut prob, &mut next);
    }
    q
}

fn first_return_dp_3d(horizon: usize) -> Vec<f64> {
    let side = 2 * horizon + 1;
    let origin = horizon as isize;
    let idx = |x: isize, y: isize, z: isize| {
        ((x + origin) as usize * side + (y + origin) as usize) * side + (z + origin) as usize
    };
    let mut prob = vec![0.0; side * side * side];
    let mut next = vec![0.0; side * side * side];
    prob[idx(0, 0, 0)] = 1.0;
    let sixth = 1.0 / 6.0;
    let mut q = Vec::with_capacity(horizon);
    for t in 1..=horizon {
        let reach = t as isize;
        for x in -reach..=reach {
            let y_span = reach - x.abs();
            for y in -y_span..=y_span {
                let z_span = y_span - y.abs();
                for z in -z_span..=z_span {
                    next[idx(x, y, z)] = 0.0;
                }
            }
        }
        for x in -(reach - 1)..=(reach - 1) {
            let y_span = reach - 1 - x.abs();
            for y in -y_span..=y_span {
                let z_span = y_span - y.abs();
                for z in -z_span..=z_span {
                    let p = prob[idx(x, y, z)];
                    if p > 0.0 {
                        let share = sixth * p;
                        next[idx(x - 1, y, z)] += share;
                        next[idx(x + 1, y, z)] += share;
                        next[idx(x, y - 1, z)] += share;
                        next[idx(x, y + 1, z)] += share;
                        next[idx(x, y, z - 1)] += share;
                        next[idx(x, y, z + 1)] += share;
                    }
                }
            }
        }
        q.push(next[idx(0, 0, 0)]);
        next[idx(0, 0, 0)] = 0.0;
        std::mem::swap(&mut prob, &mut next);
    }
    q
}

/// Truncated Pólya number from the first-return sum.
pub fn polya_number_from_q(spec: &LatticeWalkSpec, horizon: usize) -> Result<f64> {
    Ok(first_return_series(spec, horizon)?.iter().sum())
}

/// Truncated Pólya number from the origin-probability sum,
/// `1 - 1 / sum_{t<=T} p(0,t)` with the sum taken over the full return
/// series including `p(0,0) = 1`.
///
/// The `t = 0` term is what makes this expression agree with the
/// first-return sum in the limit (the renewal identity links the two
/// generating functions as `Q = 1 - 1/P` with `P` starting at `t = 0`).
///
/// Fails with [`Error::DegenerateSeries`] when every `p(0,t)` with `t >= 1`
/// vanishes, i.e. the horizon is too small to carry any information.
pub fn polya_number_from_p(spec: &LatticeWalkSpec, horizon: usize) -> Result<TruncatedPolya> {
    let p = origin_probability_series(spec, horizon);
    let from_step_one: f64 = p[1..].iter().sum();
    if from_step_one <= 0.0 {
        return Err(Error::DegenerateSeries);
    }
    let partial_sum = 1.0 + from_step_one;
    let half_sum: f64 = 1.0 + p[1..=horizon / 2].iter().sum::<f64>();
    // Still visibly growing at the horizon: do not read the value as the
    // limit.
    let truncation_warning = (partial_sum - half_sum) / partial_sum > 0.01;
    Ok(TruncatedPolya {
        value: 1.0 - 1.0 / partial_sum,
        partial_sum,
        truncation_warning,
    })
}

/// Truncated reset-scheme recurrence `1 - prod_{t<=T} (1 - p(0,t))`.
pub fn classical_reset_recurrence(spec: &LatticeWalkSpec, horizon: usize) -> f64 {
    let p = origin_probability_series(spec, horizon);
    let miss: f64 = p[1..].iter().map(|&v| 1.0 - v).product();
    1.0 - miss
}

/// Full classical series at one horizon.
pub fn classical_series(spec: &LatticeWalkSpec, horizon: usize) -> Result<ClassicalSeries> {
    let p = origin_probability_series(spec, horizon);
    let q = first_return_series(spec, horizon)?;
    let polya_from_q = q.iter().sum();
    let polya_from_p = polya_number_from_p(spec, horizon)?;
    let miss: f64 = p[1..].iter().map(|&v| 1.0 - v).product();
    Ok(ClassicalSeries {
        dimension: spec.dimension(),
        horizon,
        origin_probability: p[1..].to_vec(),
        first_return: q,
        polya_from_q,
        polya_from_p,
        reset_recurrence: 1.0 - miss,
    })
}

/// Monte Carlo estimate of the first-return series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McFirstReturn {
    pub dimension: usize,
    pub horizon: usize,
    pub trials: u64,
    pub seed: u64,
    /// RNG algorithm identifier, for reproducibility metadata.
    pub rng_algorithm: String,
    /// Raw first-return counts per step.
    pub counts: Vec<u64>,
    /// `q_hat(0,t)` for `t = 1..=horizon`.
    pub estimate: Vec<f64>,
    /// Binomial standard errors `sqrt(q(1-q)/n)`.
    pub standard_error: Vec<f64>,
}

/// Estimate `q(0,t)` empirically from independent trials.
///
/// Trials are split into blocks of [`MC_BLOCK_SIZE`]; block `i` draws from
/// ChaCha8 stream `i` of the master seed and blocks run in parallel, so the
/// counts are bit-reproducible regardless of thread count.
pub fn monte_carlo_first_return(
    spec: &LatticeWalkSpec,
    horizon: usize,
    trials: u64,
    seed: u64,
) -> McFirstReturn {
    assert!(trials >= 1, "need at least one trial");
    let d = spec.dimension();
    let blocks = trials.div_ceil(MC_BLOCK_SIZE);
    let counts = (0..blocks)
        .into_par_iter()
        .map(|block| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(block);
            let block_trials = MC_BLOCK_SIZE.min(trials - block * MC_BLOCK_SIZE);
            let mut counts = vec![0u64; horizon];
            for _ in 0..block_trials {
                let mut position = [0i64; 3];
                for t in 1..=horizon {
                    let direction = rng.random_range(0..2 * d);
                    let axis = direction / 2;
                    position[axis] += if direction % 2 == 0 { 1 } else { -1 };
                    if position[..d].iter().all(|&c| c == 0) {
                        counts[t - 1] += 1;
                        break;
                    }
                }
            }
            counts
        })
        .reduce(
            || vec![0u64; horizon],
            |mut a, b| {
                for (slot, v) in a.iter_mut().zip(b) {
                    *slot += v;
                }
                a
            },
        );
    let n = trials as f64;
    let estimate: Vec<f64> = counts.iter().map(|&c| c as f64 / n).collect();
    let standard_error = estimate
        .iter()
        .map(|&q| (q * (1.0 - q) / n).sqrt())
        .collect();
    McFirstReturn {
        dimension: d,
        horizon,
        trials,
        seed,
        rng_algorithm: MC_RNG_ALGORITHM.to_string(),
        counts,
        estimate,
        standard_error,
    }
}

/// Side-by-side recurrence numbers for the classical walk and the quantum
/// walk at the same horizon.
///
/// Classically the two observation schemes trend together (both reach 1 for
/// recurrent walks); for the quantum walk the continual scheme saturates
/// below the reset scheme.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemeEquivalence {
    pub horizon: usize,
    pub classical_continual: f64,
    pub classical_reset: f64,
    pub quantum_continual: f64,
    pub quantum_reset: f64,
}

impl SchemeEquivalence {
    /// Gap `P_r - P` of the quantum pair.
    pub fn quantum_gap(&self) -> f64 {
        self.quantum_reset - self.quantum_continual
    }

    /// Gap of the classical pair.
    pub fn classical_gap(&self) -> f64 {
        self.classical_reset - self.classical_continual
    }
}

/// Compute both classical recurrence numbers and the corresponding quantum
/// pair at horizon `T`.
pub fn scheme_equivalence_check(
    spec: &LatticeWalkSpec,
    initial: &InitialSpec,
    coin: &CoinSpec,
    horizon: usize,
) -> Result<SchemeEquivalence> {
    let classical_continual = polya_number_from_q(spec, horizon)?;
    let classical_reset = classical_reset_recurrence(spec, horizon);
    let quantum = recurrence_series(initial, coin, horizon);
    Ok(SchemeEquivalence {
        horizon,
        classical_continual,
        classical_reset,
        quantum_continual: quantum.continual(horizon),
        quantum_reset: quantum.reset(horizon),
    })
}
