//! Arrival-time arithmetic for the time-multiplexed loop.
//!
//! Every lattice position in every step maps to a unique-in-principle
//! arrival time `t * loop_time + x * position_pitch`. As the walk spreads,
//! bins of consecutive round trips first interleave and eventually land too
//! close to resolve; [`check_bin_uniqueness`] reports both regimes per
//! horizon.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Timing geometry of the loop: round-trip time, per-position pitch and the
/// detection window, all in nanoseconds.
///
/// Adjacent occupied positions differ by two lattice units, i.e. by
/// `2 * position_pitch` in time. The constructor enforces that the loop time
/// is not an integer multiple of that occupied-bin spacing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeBinMap {
    loop_time_ns: f64,
    position_pitch_ns: f64,
    detection_window_ns: f64,
}

impl Default for TimeBinMap {
    fn default() -> Self {
        TimeBinMap {
            loop_time_ns: 2050.0,
            position_pitch_ns: 50.0,
            detection_window_ns: 4.8,
        }
    }
}

impl TimeBinMap {
    pub fn new(
        loop_time_ns: f64,
        position_pitch_ns: f64,
        detection_window_ns: f64,
    ) -> Result<Self> {
        for (name, value) in [
            ("loop_time_ns", loop_time_ns),
            ("position_pitch_ns", position_pitch_ns),
            ("detection_window_ns", detection_window_ns),
        ] {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::InvalidParameter {
                    name,
                    message: format!("{value} must be positive"),
                });
            }
        }
        let spacing = 2.0 * position_pitch_ns;
        let multiple = loop_time_ns / spacing;
        if (multiple - multiple.round()).abs() < 1e-9 {
            return Err(Error::InvalidParameter {
                name: "loop_time_ns",
                message: format!(
                    "loop time {loop_time_ns} is an integer multiple of the occupied-bin spacing {spacing}"
                ),
            });
        }
        Ok(TimeBinMap {
            loop_time_ns,
            position_pitch_ns,
            detection_window_ns,
        })
    }

    pub fn loop_time_ns(&self) -> f64 {
        self.loop_time_ns
    }

    pub fn position_pitch_ns(&self) -> f64 {
        self.position_pitch_ns
    }

    pub fn detection_window_ns(&self) -> f64 {
        self.detection_window_ns
    }
}

/// Arrival time of the pulse at position `x` in step `t`, in nanoseconds.
///
/// Fails for `(x, t)` pairs off the light cone.
pub fn arrival_time(x: i64, t: usize, map: &TimeBinMap) -> Result<f64> {
    let reach = t as i64;
    if x.abs() > reach || (x - reach).rem_euclid(2) != 0 {
        return Err(Error::OffLightCone {
            position: x,
            step: t,
        });
    }
    Ok(t as f64 * map.loop_time_ns + x as f64 * map.position_pitch_ns)
}

/// Bin-occupancy status at one step horizon.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HorizonReport {
    pub horizon: usize,
    /// Do the arrival-time ranges of two different steps overlap?
    pub interlaced: bool,
    /// Smallest gap between bins of different steps, in nanoseconds;
    /// `None` when fewer than two steps are present.
    pub min_cross_step_gap_ns: Option<f64>,
    /// Number of cross-step bin pairs closer than the separation threshold.
    pub colliding_pairs: usize,
}

/// Per-horizon interlacing and collision report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinReport {
    pub min_separation_ns: f64,
    pub horizons: Vec<HorizonReport>,
}

impl BinReport {
    pub fn at(&self, horizon: usize) -> &HorizonReport {
        &self.horizons[horizon]
    }

    /// First horizon at which bins of different steps interleave.
    pub fn first_interlaced(&self) -> Option<usize> {
        self.horizons
            .iter()
            .find(|h| h.interlaced)
            .map(|h| h.horizon)
    }

    /// First horizon with a collision under the separation threshold.
    pub fn first_collision(&self) -> Option<usize> {
        self.horizons
            .iter()
            .find(|h| h.colliding_pairs > 0)
            .map(|h| h.horizon)
    }
}

/// Scan all light-cone bins with `t <= horizon` and report, per step
/// horizon, whether ranges of different steps interleave and whether any two
/// bins of different steps land within `min_separation_ns`.
pub fn check_bin_uniqueness(map: &TimeBinMap, horizon: usize, min_separation_ns: f64) -> BinReport {
    let mut horizons = Vec::with_capacity(horizon + 1);
    // (arrival, step) for every light-cone bin, refreshed per horizon; the
    // cone is small enough that the rescan stays cheap.
    for h in 0..=horizon {
        let mut bins: Vec<(f64, usize)> = Vec::new();
        for t in 0..=h {
            let reach = t as i64;
            let mut x = -reach;
            while x <= reach {
                bins.push((arrival_time(x, t, map).unwrap(), t));
                x += 2;
            }
        }
        bins.sort_by(|a, b| a.0.total_cmp(&b.0));

        let mut interlaced = false;
        let mut min_gap = f64::INFINITY;
        let mut colliding = 0;
        // Range overlap between steps: compare each step's span.
        for t in 0..h {
            let max_t = t as f64 * map.loop_time_ns + t as f64 * map.position_pitch_ns;
            for u in (t + 1)..=h {
                let min_u = u as f64 * map.loop_time_ns - u as f64 * map.position_pitch_ns;
                if max_t >= min_u {
                    interlaced = true;
                }
            }
        }
        // Scan sorted arrivals: for each bin, the nearest later bin of a
        // different step realizes its minimal cross-step gap, and every
        // different-step pair closer than the threshold is a collision.
        for i in 0..bins.len() {
            let mut nearest_cross_seen = false;
            for j in (i + 1)..bins.len() {
                let gap = bins[j].0 - bins[i].0;
                let cross = bins[j].1 != bins[i].1;
                if cross {
                    if !nearest_cross_seen {
                        min_gap = min_gap.min(gap);
                        nearest_cross_seen = true;
                    }
                    if gap < min_separation_ns {
                        colliding += 1;
                    }
                }
                if gap >= min_separation_ns && nearest_cross_seen {
                    break;
                }
            }
        }
        horizons.push(HorizonReport {
            horizon: h,
            interlaced,
            min_cross_step_gap_ns: min_gap.is_finite().then_some(min_gap),
            colliding_pairs: colliding,
        });
    }
    BinReport {
        min_separation_ns,
        horizons,
    }
}
