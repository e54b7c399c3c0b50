//! Digital twin of the time-multiplexed photonic loop.
//!
//! The forward model evolves the walk with per-roundtrip amplitude damping,
//! arm-asymmetric loss, a perturbed coin plate, and (in the continual
//! scheme) an imperfect out-coupling sink; detection turns intensities into
//! expected photon counts with per-polarization efficiencies, a uniform dark
//! floor, and optional Poisson sampling. The normalization pipeline then
//! recovers probabilities from counts exactly the way the measured data is
//! processed: ratios against per-step totals, which cancel homogeneous
//! losses.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::coin::{hwp_angle_of, hwp_coin, CoinLabel, CoinSpec};
use crate::error::{Error, Result};
use crate::monitor::{apply_sink, SinkSchedule};
use crate::state::{apply_coin, apply_shift, initial_state, InitialSpec};
use crate::timebin::TimeBinMap;

/// Input powers above this many photons per pulse would saturate the
/// photon-counting detectors; the ND-filter protocol keeps runs below it.
pub const SATURATION_PHOTONS_PER_PULSE: f64 = 1e8;

/// Observation scheme of a measurement run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scheme {
    /// Free evolution, one measurement at the examined step.
    Reset,
    /// Sink at the origin after every step.
    Continual,
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Scheme::Reset => write!(f, "reset"),
            Scheme::Continual => write!(f, "continual"),
        }
    }
}

impl std::str::FromStr for Scheme {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "reset" => Ok(Scheme::Reset),
            "continual" => Ok(Scheme::Continual),
            other => Err(Error::InvalidParameter {
                name: "scheme",
                message: format!("unknown scheme {other:?}"),
            }),
        }
    }
}

/// Setup imperfections of the loop, as independently measured quantities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImperfectionParams {
    /// Intensity fraction surviving one roundtrip, nominal 0.8.
    pub roundtrip_efficiency: f64,
    /// Relative extra intensity factor `(1 + eps)` on the L path.
    pub arm_loss_asymmetry: f64,
    /// Offset of the coin plate angle from its setting, radians.
    pub coin_angle_error: f64,
    /// Intensity fraction leaking through an "absorbing" sink.
    pub sink_residual_transmission: f64,
    /// Detection efficiencies for the (R, L) polarization channels.
    pub detector_efficiencies: (f64, f64),
    /// Dark counts per second, uniform over time.
    pub dark_count_rate: f64,
    /// Photons per pulse after the ND filter.
    pub mean_input_photons: f64,
}

impl ImperfectionParams {
    /// A perfect loop: no loss, no errors, unit-efficiency detectors.
    pub fn ideal() -> Self {
        ImperfectionParams {
            roundtrip_efficiency: 1.0,
            arm_loss_asymmetry: 0.0,
            coin_angle_error: 0.0,
            sink_residual_transmission: 0.0,
            detector_efficiencies: (1.0, 1.0),
            dark_count_rate: 0.0,
            mean_input_photons: 1e6,
        }
    }

    /// The measured setup: >80% roundtrip efficiency, 60%/70% detectors,
    /// 1% sink residual.
    pub fn nominal() -> Self {
        ImperfectionParams {
            roundtrip_efficiency: 0.8,
            arm_loss_asymmetry: 0.0,
            coin_angle_error: 0.0,
            sink_residual_transmission: 0.01,
            detector_efficiencies: (0.6, 0.7),
            dark_count_rate: 0.0,
            mean_input_photons: 1e6,
        }
    }

    /// Like [`ImperfectionParams::ideal`] but with the given roundtrip
    /// efficiency: homogeneous loss only.
    pub fn uniform_loss(roundtrip_efficiency: f64) -> Self {
        ImperfectionParams {
            roundtrip_efficiency,
            ..Self::ideal()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let checks: [(&'static str, bool, String); 7] = [
            (
                "roundtrip_efficiency",
                self.roundtrip_efficiency > 0.0 && self.roundtrip_efficiency <= 1.0,
                format!("{} must lie in (0, 1]", self.roundtrip_efficiency),
            ),
            (
                "arm_loss_asymmetry",
                self.arm_loss_asymmetry > -1.0 && self.arm_loss_asymmetry.abs() <= 0.5,
                format!("{} is outside the modelled range", self.arm_loss_asymmetry),
            ),
            (
                "coin_angle_error",
                self.coin_angle_error.is_finite(),
                "must be finite".to_string(),
            ),
            (
                "sink_residual_transmission",
                (0.0..=1.0).contains(&self.sink_residual_transmission),
                format!("{} is outside [0, 1]", self.sink_residual_transmission),
            ),
            (
                "detector_efficiencies",
                self.detector_efficiencies.0 > 0.0
                    && self.detector_efficiencies.0 <= 1.0
                    && self.detector_efficiencies.1 > 0.0
                    && self.detector_efficiencies.1 <= 1.0,
                format!("{:?} must lie in (0, 1]", self.detector_efficiencies),
            ),
            (
                "dark_count_rate",
                self.dark_count_rate >= 0.0,
                format!("{} must be nonnegative", self.dark_count_rate),
            ),
            (
                "mean_input_photons",
                self.mean_input_photons >= 0.0
                    && self.mean_input_photons <= SATURATION_PHOTONS_PER_PULSE,
                format!(
                    "{} exceeds the saturation ceiling {SATURATION_PHOTONS_PER_PULSE}",
                    self.mean_input_photons
                ),
            ),
        ];
        for (name, ok, message) in checks {
            if !ok {
                return Err(Error::InvalidParameter { name, message });
            }
        }
        Ok(())
    }
}

/// Repetition bookkeeping of a measurement run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Integration {
    pub repetition_rate_hz: f64,
    pub integration_time_s: f64,
}

impl Default for Integration {
    fn default() -> Self {
        Integration {
            repetition_rate_hz: 1.0,
            integration_time_s: 1.0,
        }
    }
}

impl Integration {
    pub fn repetitions(&self) -> f64 {
        self.repetition_rate_hz * self.integration_time_s
    }
}

/// What a count row measures: the in-loop signal at a position, the light
/// coupled out by a sink, or an off-signal noise window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CountChannel {
    Signal(CoinLabel),
    Sink(CoinLabel),
    Noise,
}

impl CountChannel {
    pub fn token(&self) -> &'static str {
        match self {
            CountChannel::Signal(CoinLabel::R) => "R",
            CountChannel::Signal(CoinLabel::L) => "L",
            CountChannel::Sink(CoinLabel::R) => "sinkR",
            CountChannel::Sink(CoinLabel::L) => "sinkL",
            CountChannel::Noise => "noise",
        }
    }

    pub fn parse(token: &str) -> Result<Self> {
        match token {
            "R" => Ok(CountChannel::Signal(CoinLabel::R)),
            "L" => Ok(CountChannel::Signal(CoinLabel::L)),
            "sinkR" => Ok(CountChannel::Sink(CoinLabel::R)),
            "sinkL" => Ok(CountChannel::Sink(CoinLabel::L)),
            "noise" => Ok(CountChannel::Noise),
            other => Err(Error::InvalidParameter {
                name: "coin",
                message: format!("unknown channel token {other:?}"),
            }),
        }
    }
}

/// One detector bin: expected counts and, in sampling mode, the Poisson
/// draw.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CountRow {
    pub step: usize,
    pub position: i64,
    pub channel: CountChannel,
    pub expected: f64,
    pub counts: u64,
}

/// Simulated detector record of one measurement campaign.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountRecord {
    pub scheme: Scheme,
    /// `None` marks expected-value mode; the normalization pipeline then
    /// reads the expected column instead of sampled counts.
    pub seed: Option<u64>,
    pub params: ImperfectionParams,
    /// Plate angle of the unperturbed coin, radians.
    pub coin_plate_angle: f64,
    pub horizon: usize,
    pub integration: Integration,
    pub detection_window_ns: f64,
    pub rows: Vec<CountRow>,
}

impl CountRecord {
    pub fn is_sampled(&self) -> bool {
        self.seed.is_some()
    }

    fn value(&self, row: &CountRow) -> f64 {
        if self.is_sampled() {
            row.counts as f64
        } else {
            row.expected
        }
    }

    fn sum_where(&self, pred: impl Fn(&CountRow) -> bool) -> f64 {
        // fold from +0.0: the std float Sum starts at -0.0, which would
        // leak a negative zero into ratios over empty selections
        self.rows
            .iter()
            .filter(|r| pred(r))
            .map(|r| self.value(r))
            .fold(0.0, |acc, v| acc + v)
    }

    /// Total signal counts at a step, both polarizations.
    pub fn signal_total(&self, step: usize) -> f64 {
        self.sum_where(|r| r.step == step && matches!(r.channel, CountChannel::Signal(_)))
    }

    /// Signal counts at the origin bin of a step.
    pub fn origin_signal(&self, step: usize) -> f64 {
        self.sum_where(|r| {
            r.step == step && r.position == 0 && matches!(r.channel, CountChannel::Signal(_))
        })
    }

    /// Signal counts at one position of a step.
    pub fn signal_at(&self, step: usize, position: i64) -> f64 {
        self.sum_where(|r| {
            r.step == step && r.position == position && matches!(r.channel, CountChannel::Signal(_))
        })
    }

    /// Out-coupled sink counts at a step.
    pub fn sink_total(&self, step: usize) -> f64 {
        self.sum_where(|r| r.step == step && matches!(r.channel, CountChannel::Sink(_)))
    }

    /// Noise-window counts at a step.
    pub fn noise_total(&self, step: usize) -> f64 {
        self.sum_where(|r| r.step == step && matches!(r.channel, CountChannel::Noise))
    }

    pub fn has_sink_counts(&self) -> bool {
        self.rows
            .iter()
            .any(|r| matches!(r.channel, CountChannel::Sink(_)))
    }
}

/// Forward model with the uniform dark floor implied by the parameters.
pub fn simulate_counts(
    scheme: Scheme,
    params: &ImperfectionParams,
    coin: &CoinSpec,
    horizon: usize,
    seed: Option<u64>,
) -> Result<CountRecord> {
    let integration = Integration::default();
    let window_ns = TimeBinMap::default().detection_window_ns();
    let dark_mean = params.dark_count_rate * window_ns * 1e-9 * integration.repetitions();
    simulate_counts_with_noise(scheme, params, coin, horizon, seed, |_| dark_mean)
}

/// Forward model with a caller-supplied per-step noise floor (expected
/// counts per detection window at each step), for backgrounds beyond the
/// uniform dark model.
pub fn simulate_counts_with_noise(
    scheme: Scheme,
    params: &ImperfectionParams,
    coin: &CoinSpec,
    horizon: usize,
    seed: Option<u64>,
    noise_mean_per_window: impl Fn(usize) -> f64,
) -> Result<CountRecord> {
    assert!(horizon >= 1, "horizon must be at least 1");
    params.validate()?;
    let integration = Integration::default();
    let window_ns = TimeBinMap::default().detection_window_ns();

    // A plate-angle error perturbs the coin within the half-wave-plate
    // family; recovering the angle fails for coins outside it.
    let coin_plate_angle = hwp_angle_of(coin)?;
    let effective_coin = if params.coin_angle_error != 0.0 {
        hwp_coin(coin_plate_angle + params.coin_angle_error)
    } else {
        *coin
    };

    let scale = params.mean_input_photons * integration.repetitions();
    let (det_r, det_l) = params.detector_efficiencies;
    let amp_r = params.roundtrip_efficiency.sqrt();
    let amp_l = (params.roundtrip_efficiency * (1.0 + params.arm_loss_asymmetry)).sqrt();
    let sink = SinkSchedule::origin_with_residual(params.sink_residual_transmission)?;

    // The initial pulse is horizontally polarized: coin state R at x = 0.
    let mut state = initial_state(&InitialSpec::right());
    let mut rows: Vec<CountRow> = Vec::new();

    let record_step = |rows: &mut Vec<CountRow>, state: &crate::state::WalkState, t: usize| {
        let noise = noise_mean_per_window(t);
        let reach = t as i64;
        let mut x = -reach;
        while x <= reach {
            let (a_r, a_l) = state.amplitudes_at(x);
            rows.push(CountRow {
                step: t,
                position: x,
                channel: CountChannel::Signal(CoinLabel::R),
                expected: scale * a_r.norm_sqr() * det_r + noise,
                counts: 0,
            });
            rows.push(CountRow {
                step: t,
                position: x,
                channel: CountChannel::Signal(CoinLabel::L),
                expected: scale * a_l.norm_sqr() * det_l + noise,
                counts: 0,
            });
            rows.push(CountRow {
                step: t,
                position: x,
                channel: CountChannel::Noise,
                expected: noise,
                counts: 0,
            });
            x += 2;
        }
    };

    record_step(&mut rows, &state, 0);
    for t in 1..=horizon {
        state = apply_coin(&state, &effective_coin);
        state.scale_coins(amp_r, amp_l);
        state = apply_shift(&state);
        record_step(&mut rows, &state, t);
        if scheme == Scheme::Continual {
            let noise = noise_mean_per_window(t);
            let (a_r, a_l) = state.amplitudes_at(0);
            let absorbed = 1.0 - params.sink_residual_transmission;
            rows.push(CountRow {
                step: t,
                position: 0,
                channel: CountChannel::Sink(CoinLabel::R),
                expected: scale * absorbed * a_r.norm_sqr() * det_r + noise,
                counts: 0,
            });
            rows.push(CountRow {
                step: t,
                position: 0,
                channel: CountChannel::Sink(CoinLabel::L),
                expected: scale * absorbed * a_l.norm_sqr() * det_l + noise,
                counts: 0,
            });
            let (surviving, _) = apply_sink(&state, &sink, t);
            state = surviving;
        }
    }

    if let Some(seed_value) = seed {
        let mut rng = ChaCha8Rng::seed_from_u64(seed_value);
        for row in &mut rows {
            row.counts = sample_poisson(&mut rng, row.expected);
        }
    }

    Ok(CountRecord {
        scheme,
        seed,
        params: *params,
        coin_plate_angle,
        horizon,
        integration,
        detection_window_ns: window_ns,
        rows,
    })
}

fn sample_poisson(rng: &mut ChaCha8Rng, mean: f64) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    let draw: f64 = Poisson::new(mean).expect("positive mean").sample(rng);
    draw.round() as u64
}

/// Reset-scheme origin probability from counts: the origin bin over the
/// per-step total. Homogeneous losses appear in both and cancel.
pub fn normalize_reset(record: &CountRecord, t: usize) -> Result<f64> {
    let total = record.signal_total(t);
    if total <= 0.0 {
        return Err(Error::NoSignal { step: t });
    }
    Ok(record.origin_signal(t) / total)
}

/// First-return probability and its factors recovered from a pair of
/// measurement records.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContinualProbabilities {
    /// `q(0,t)`: continual origin counts over the reset total.
    pub first_return: f64,
    /// `s_{t-1}`: continual total over the reset total.
    pub survival: f64,
    /// `p_c(0,t)`: continual origin counts over the continual total.
    pub conditional_origin: f64,
}

/// Continual-scheme normalization: divides the monitored counts by the
/// unmonitored (reset) totals of the same step, assuming the homogeneous
/// losses match between the two runs. Returns `q(0,t)`, `s_{t-1}`, and
/// `p_c(0,t)`; `q = s * p_c` holds by construction.
pub fn normalize_continual(
    record_continual: &CountRecord,
    record_reset: &CountRecord,
    t: usize,
) -> Result<ContinualProbabilities> {
    expect_scheme(record_continual, Scheme::Continual)?;
    expect_scheme(record_reset, Scheme::Reset)?;
    let reset_total = record_reset.signal_total(t);
    if reset_total <= 0.0 {
        return Err(Error::NoSignal { step: t });
    }
    let continual_total = record_continual.signal_total(t);
    if continual_total <= 0.0 {
        return Err(Error::NoSignal { step: t });
    }
    let origin = record_continual.origin_signal(t);
    Ok(ContinualProbabilities {
        first_return: origin / reset_total,
        survival: continual_total / reset_total,
        conditional_origin: origin / continual_total,
    })
}

/// Alternative continual normalization that does not lean on the reset run:
/// the homogeneous per-step loss is estimated from the record's own
/// bookkeeping (what survives a step is what was there minus what the sink
/// took), and the denominator recombines the final counts with the sink
/// counts scaled forward by the estimated loss.
///
/// In expected-value mode with uniform losses this reproduces
/// [`normalize_continual`] exactly.
pub fn normalize_continual_alternative(record: &CountRecord, t: usize) -> Result<f64> {
    expect_scheme(record, Scheme::Continual)?;
    if !record.has_sink_counts() {
        return Err(Error::MissingSinkCounts);
    }
    assert!(t >= 1, "normalization needs t >= 1");

    // Per-step loss estimate: total(k) = eta * (total(k-1) - sink(k-1)),
    // geometric-mean over the available steps.
    let mut log_sum = 0.0;
    let mut samples = 0usize;
    for k in 1..=record.horizon {
        let before = record.signal_total(k - 1) - record.sink_total(k - 1);
        let after = record.signal_total(k);
        if before > 0.0 && after > 0.0 {
            log_sum += (after / before).ln();
            samples += 1;
        }
    }
    if samples == 0 {
        return Err(Error::NoSignal { step: t });
    }
    let eta = (log_sum / samples as f64).exp();

    let mut denominator = record.signal_total(t);
    for k in 1..t {
        denominator += record.sink_total(k) * eta.powi((t - k) as i32);
    }
    if denominator <= 0.0 {
        return Err(Error::NoSignal { step: t });
    }
    Ok(record.origin_signal(t) / denominator)
}

fn expect_scheme(record: &CountRecord, scheme: Scheme) -> Result<()> {
    if record.scheme == scheme {
        Ok(())
    } else {
        Err(Error::InvalidParameter {
            name: "record",
            message: format!("expected a {scheme} record, got {}", record.scheme),
        })
    }
}

/// Half-widths of the systematic error ranges explored by the corner
/// search. Defaults are the measured accuracies of the setup: opposite
/// 1% detector skew, 1% arm loss, a 0.15 degree plate angle, and a sink
/// residual between 0 and 1%.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorRanges {
    pub detector_spread: f64,
    pub arm_loss: f64,
    pub coin_angle: f64,
    pub sink_residual: f64,
}

impl Default for ErrorRanges {
    fn default() -> Self {
        ErrorRanges {
            detector_spread: 0.01,
            arm_loss: 0.01,
            coin_angle: 0.15_f64.to_radians(),
            sink_residual: 0.01,
        }
    }
}

impl ErrorRanges {
    pub fn zero() -> Self {
        ErrorRanges {
            detector_spread: 0.0,
            arm_loss: 0.0,
            coin_angle: 0.0,
            sink_residual: 0.0,
        }
    }

    /// Parameters at one corner of the error box. Sign flags pick the
    /// extreme of each range; the sink axis switches between the full
    /// residual and a perfect sink.
    pub fn corner(
        &self,
        nominal: &ImperfectionParams,
        detector_up: bool,
        arm_up: bool,
        coin_up: bool,
        sink_full: bool,
    ) -> ImperfectionParams {
        let flip = |up: bool, range: f64| if up { range } else { -range };
        let (det_r, det_l) = nominal.detector_efficiencies;
        let skew = flip(detector_up, self.detector_spread);
        ImperfectionParams {
            detector_efficiencies: (det_r * (1.0 + skew), det_l * (1.0 - skew)),
            arm_loss_asymmetry: nominal.arm_loss_asymmetry + flip(arm_up, self.arm_loss),
            coin_angle_error: nominal.coin_angle_error + flip(coin_up, self.coin_angle),
            sink_residual_transmission: if sink_full { self.sink_residual } else { 0.0 },
            ..*nominal
        }
    }
}

/// Derived probability series of the expected-value forward model: `p(0,t)`
/// for the reset scheme, `q(0,t)` for the continual scheme.
fn derived_series(
    scheme: Scheme,
    params: &ImperfectionParams,
    coin: &CoinSpec,
    horizon: usize,
) -> Result<Vec<f64>> {
    match scheme {
        Scheme::Reset => {
            let record = simulate_counts(Scheme::Reset, params, coin, horizon, None)?;
            (1..=horizon).map(|t| normalize_reset(&record, t)).collect()
        }
        Scheme::Continual => {
            let continual = simulate_counts(Scheme::Continual, params, coin, horizon, None)?;
            let reset = simulate_counts(Scheme::Reset, params, coin, horizon, None)?;
            (1..=horizon)
                .map(|t| normalize_continual(&continual, &reset, t).map(|p| p.first_return))
                .collect()
        }
    }
}

/// Corner-search error envelope: evaluate the expected-value forward model
/// at every sign combination of the four systematic error sources and
/// report, per step, the largest deviation of the derived probabilities
/// from the nominal-parameter reference.
pub fn error_envelope(
    nominal: &ImperfectionParams,
    coin: &CoinSpec,
    scheme: Scheme,
    horizon: usize,
    ranges: &ErrorRanges,
) -> Result<Vec<f64>> {
    let reference = derived_series(scheme, nominal, coin, horizon)?;
    let mut envelope = vec![0.0_f64; horizon];
    for corner_index in 0..16u32 {
        let params = ranges.corner(
            nominal,
            corner_index & 1 != 0,
            corner_index & 2 != 0,
            corner_index & 4 != 0,
            corner_index & 8 != 0,
        );
        let series = derived_series(scheme, &params, coin, horizon)?;
        for (slot, (corner, reference)) in envelope.iter_mut().zip(series.iter().zip(&reference)) {
            *slot = (*slot).max((corner - reference).abs());
        }
    }
    Ok(envelope)
}

/// Signal-to-noise ratio at a step: summed signal-window counts over summed
/// noise-window counts of the same length. Zero noise reports the infinite
/// sentinel.
pub fn snr(record: &CountRecord, map: &TimeBinMap, t: usize) -> Result<f64> {
    if (map.detection_window_ns() - record.detection_window_ns).abs() > 1e-9 {
        return Err(Error::InvalidParameter {
            name: "detection_window_ns",
            message: format!(
                "record was integrated in {} ns windows, map specifies {} ns",
                record.detection_window_ns,
                map.detection_window_ns()
            ),
        });
    }
    let noise = record.noise_total(t);
    if noise <= 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(record.signal_total(t) / noise)
}

/// Serialize a record to the columnar text format:
/// `# scheme=`, `# seed=`, `# params=` headers followed by
/// `t,x,coin,expected,counts` rows. Floats carry 17 significant digits, so
/// a write/read cycle is lossless.
pub fn write_columnar(record: &CountRecord) -> String {
    let mut out = String::new();
    out.push_str(&format!("# scheme={}\n", record.scheme));
    match record.seed {
        Some(seed) => out.push_str(&format!("# seed={seed}\n")),
        None => out.push_str("# seed=none\n"),
    }
    let p = &record.params;
    out.push_str(&format!(
        "# params=roundtrip_efficiency={};arm_loss_asymmetry={};coin_angle_error={};\
         sink_residual_transmission={};detector_r={};detector_l={};dark_count_rate={};\
         mean_input_photons={};coin_plate_angle={};horizon={};repetition_rate_hz={};\
         integration_time_s={};detection_window_ns={}\n",
        fmt_f64(p.roundtrip_efficiency),
        fmt_f64(p.arm_loss_asymmetry),
        fmt_f64(p.coin_angle_error),
        fmt_f64(p.sink_residual_transmission),
        fmt_f64(p.detector_efficiencies.0),
        fmt_f64(p.detector_efficiencies.1),
        fmt_f64(p.dark_count_rate),
        fmt_f64(p.mean_input_photons),
        fmt_f64(record.coin_plate_angle),
        record.horizon,
        fmt_f64(record.integration.repetition_rate_hz),
        fmt_f64(record.integration.integration_time_s),
        fmt_f64(record.detection_window_ns),
    ));
    out.push_str("# columns=t,x,coin,expected,counts\n");
    for row in &record.rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            row.step,
            row.position,
            row.channel.token(),
            fmt_f64(row.expected),
            row.counts
        ));
    }
    out
}

/// Seventeen significant digits: enough to reproduce any f64 exactly.
pub fn fmt_f64(value: f64) -> String {
    format!("{value:.16e}")
}

/// Parse the columnar text format written by [`write_columnar`].
pub fn read_columnar(text: &str) -> Result<CountRecord> {
    let invalid = |message: String| Error::InvalidParameter {
        name: "columnar",
        message,
    };
    let mut scheme = None;
    let mut seed = None;
    let mut params_line = None;
    let mut rows = Vec::new();
    for line in text.lines() {
        if let Some(rest) = line.strip_prefix("# ") {
            if let Some(v) = rest.strip_prefix("scheme=") {
                scheme = Some(v.parse::<Scheme>()?);
            } else if let Some(v) = rest.strip_prefix("seed=") {
                seed = Some(match v {
                    "none" => None,
                    other => Some(other.parse::<u64>().map_err(|e| invalid(e.to_string()))?),
                });
            } else if let Some(v) = rest.strip_prefix("params=") {
                params_line = Some(v.to_string());
            }
            continue;
        }
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 5 {
            return Err(invalid(format!("expected 5 columns, got {}", fields.len())));
        }
        rows.push(CountRow {
            step: fields[0]
                .parse()
                .map_err(|e: std::num::ParseIntError| invalid(e.to_string()))?,
            position: fields[1]
                .parse()
                .map_err(|e: std::num::ParseIntError| invalid(e.to_string()))?,
            channel: CountChannel::parse(fields[2])?,
            expected: fields[3]
                .parse()
                .map_err(|e: std::num::ParseFloatError| invalid(e.to_string()))?,
            counts: fields[4]
                .parse()
                .map_err(|e: std::num::ParseIntError| invalid(e.to_string()))?,
        });
    }
    let scheme = scheme.ok_or_else(|| invalid("missing # scheme= header".into()))?;
    let seed = seed.ok_or_else(|| invalid("missing # seed= header".into()))?;
    let params_line = params_line.ok_or_else(|| invalid("missing # params= header".into()))?;

    let mut map = std::collections::BTreeMap::new();
    for pair in params_line.split(';') {
        let (key, value) = pair
            .split_once('=')
            .ok_or_else(|| invalid(format!("malformed params entry {pair:?}")))?;
        map.insert(key.to_string(), value.to_string());
    }
    let get = |key: &str| -> Result<f64> {
        map.get(key)
            .ok_or_else(|| invalid(format!("missing params key {key:?}")))?
            .parse::<f64>()
            .map_err(|e| invalid(e.to_string()))
    };
    let params = ImperfectionParams {
        roundtrip_efficiency: get("roundtrip_efficiency")?,
        arm_loss_asymmetry: get("arm_loss_asymmetry")?,
        coin_angle_error: get("coin_angle_error")?,
        sink_residual_transmission: get("sink_residual_transmission")?,
        detector_efficiencies: (get("detector_r")?, get("detector_l")?),
        dark_count_rate: get("dark_count_rate")?,
        mean_input_photons: get("mean_input_photons")?,
    };
    Ok(CountRecord {
        scheme,
        seed,
        params,
        coin_plate_angle: get("coin_plate_angle")?,
        horizon: get("horizon")? as usize,
        integration: Integration {
            repetition_rate_hz: get("repetition_rate_hz")?,
            integration_time_s: get("integration_time_s")?,
        },
        detection_window_ns: get("detection_window_ns")?,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coin::hadamard_coin;
    use crate::monitor::{continual_recurrence, reset_recurrence};
    use crate::state::InitialSpec;
    use approx::assert_abs_diff_eq;
    use rand::Rng;

    fn ideal_record(scheme: Scheme, horizon: usize) -> CountRecord {
        simulate_counts(
            scheme,
            &ImperfectionParams::ideal(),
            &hadamard_coin(),
            horizon,
            None,
        )
        .unwrap()
    }

    #[test]
    fn ideal_reset_counts_reduce_to_the_bare_walk() {
        let record = ideal_record(Scheme::Reset, 2);
        let photons = ImperfectionParams::ideal().mean_input_photons;
        assert_abs_diff_eq!(record.signal_at(2, 2), 0.25 * photons, epsilon = 1e-3);
        assert_abs_diff_eq!(record.signal_at(2, 0), 0.5 * photons, epsilon = 1e-3);
        assert_abs_diff_eq!(record.signal_at(2, -2), 0.25 * photons, epsilon = 1e-3);
    }

    #[test]
    fn homogeneous_loss_decays_exponentially() {
        let params = ImperfectionParams::uniform_loss(0.8);
        let record = simulate_counts(Scheme::Reset, &params, &hadamard_coin(), 36, None).unwrap();
        let expected = params.mean_input_photons * 0.8f64.powi(36);
        assert_abs_diff_eq!(
            record.signal_total(36),
            expected,
            epsilon = expected * 1e-12
        );
    }

    #[test]
    fn continual_origin_counts_follow_the_first_return_series() {
        let params = ImperfectionParams::uniform_loss(0.8);
        let record =
            simulate_counts(Scheme::Continual, &params, &hadamard_coin(), 12, None).unwrap();
        let series = continual_recurrence(&InitialSpec::right(), &hadamard_coin(), 12);
        for t in 1..=12 {
            let expected =
                params.mean_input_photons * 0.8f64.powi(t as i32) * series.first_return(t);
            assert_abs_diff_eq!(record.origin_signal(t), expected, epsilon = 1e-6);
        }
    }

    #[test]
    fn reset_normalization_cancels_uniform_loss() {
        let params = ImperfectionParams::uniform_loss(0.8);
        let record = simulate_counts(Scheme::Reset, &params, &hadamard_coin(), 36, None).unwrap();
        let reference = reset_recurrence(&InitialSpec::right(), &hadamard_coin(), 36);
        for t in 1..=36 {
            assert_abs_diff_eq!(
                normalize_reset(&record, t).unwrap(),
                reference.origin_probability(t),
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn reset_normalization_plain_arithmetic() {
        // Counts {0: 50, 2: 25, -2: 25} -> 0.5 at the origin.
        let mut record = ideal_record(Scheme::Reset, 2);
        record.seed = Some(1);
        for row in &mut record.rows {
            row.counts = match (row.step, row.position, row.channel) {
                (2, 0, CountChannel::Signal(CoinLabel::R)) => 50,
                (2, 2, CountChannel::Signal(CoinLabel::R)) => 25,
                (2, -2, CountChannel::Signal(CoinLabel::R)) => 25,
                _ => 0,
            };
        }
        assert_abs_diff_eq!(normalize_reset(&record, 2).unwrap(), 0.5);
    }

    #[test]
    fn reset_normalization_rejects_empty_steps() {
        let mut record = ideal_record(Scheme::Reset, 2);
        record.seed = Some(1); // sampled mode with all counts zero
        assert_eq!(
            normalize_reset(&record, 2),
            Err(Error::NoSignal { step: 2 })
        );
    }

    #[test]
    fn continual_normalization_recovers_ideal_values() {
        let params = ImperfectionParams::uniform_loss(0.8);
        let coin = hadamard_coin();
        let continual = simulate_counts(Scheme::Continual, &params, &coin, 6, None).unwrap();
        let reset = simulate_counts(Scheme::Reset, &params, &coin, 6, None).unwrap();

        let at2 = normalize_continual(&continual, &reset, 2).unwrap();
        assert_abs_diff_eq!(at2.first_return, 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(at2.survival, 1.0, epsilon = 1e-12);

        let at4 = normalize_continual(&continual, &reset, 4).unwrap();
        assert_abs_diff_eq!(at4.first_return, 0.125, epsilon = 1e-12);
        assert_abs_diff_eq!(at4.survival, 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(at4.conditional_origin, 0.25, epsilon = 1e-12);
        assert_abs_diff_eq!(
            at4.first_return,
            at4.survival * at4.conditional_origin,
            epsilon = 1e-12
        );
    }

    #[test]
    fn sink_residual_perturbs_first_return_mildly() {
        // A 1% intensity residual leaks amplitude sqrt(0.01) = 0.1 through
        // the step-2 sink; by linearity the leaked packet adds +0.05 to the
        // L amplitude at the origin two steps later, so
        // q(0,4) = (1/4)^2 + (1/4 - 0.05)^2 = 0.1025.
        let mut params = ImperfectionParams::uniform_loss(0.8);
        params.sink_residual_transmission = 0.01;
        let coin = hadamard_coin();
        let continual = simulate_counts(Scheme::Continual, &params, &coin, 4, None).unwrap();
        let reset = simulate_counts(Scheme::Reset, &params, &coin, 4, None).unwrap();
        let q4 = normalize_continual(&continual, &reset, 4)
            .unwrap()
            .first_return;
        assert_abs_diff_eq!(q4, 0.1025, epsilon = 1e-9);
        assert!((q4 - 0.125).abs() <= 0.03, "q(0,4) = {q4}");
    }

    #[test]
    fn alternative_normalization_matches_primary_in_expected_mode() {
        let params = ImperfectionParams::uniform_loss(0.8);
        let coin = hadamard_coin();
        let continual = simulate_counts(Scheme::Continual, &params, &coin, 8, None).unwrap();
        let reset = simulate_counts(Scheme::Reset, &params, &coin, 8, None).unwrap();
        for t in 1..=8 {
            let primary = normalize_continual(&continual, &reset, t)
                .unwrap()
                .first_return;
            let alternative = normalize_continual_alternative(&continual, t).unwrap();
            assert_abs_diff_eq!(primary, alternative, epsilon = 1e-12);
        }
    }

    #[test]
    fn alternative_normalization_needs_sink_counts() {
        let record = ideal_record(Scheme::Reset, 4);
        assert!(matches!(
            normalize_continual_alternative(&record, 4),
            Err(Error::InvalidParameter { .. })
        ));
        let mut continual = ideal_record(Scheme::Continual, 4);
        continual
            .rows
            .retain(|r| !matches!(r.channel, CountChannel::Sink(_)));
        assert_eq!(
            normalize_continual_alternative(&continual, 4),
            Err(Error::MissingSinkCounts)
        );
    }

    #[test]
    fn two_normalizations_agree_statistically_under_poisson_noise() {
        let params = ImperfectionParams::uniform_loss(0.8);
        let coin = hadamard_coin();
        let continual = simulate_counts(Scheme::Continual, &params, &coin, 4, Some(11)).unwrap();
        let reset = simulate_counts(Scheme::Reset, &params, &coin, 4, Some(12)).unwrap();
        let primary = normalize_continual(&continual, &reset, 4)
            .unwrap()
            .first_return;
        let alternative = normalize_continual_alternative(&continual, 4).unwrap();
        // ~1e6 photons per bin: relative Poisson spread is ~1e-3.
        let sigma = 3e-3;
        assert!((primary - alternative).abs() < 3.0 * sigma);
        assert!((primary - 0.125).abs() < 3.0 * sigma);
    }

    #[test]
    fn poisson_sampling_is_reproducible() {
        let params = ImperfectionParams::nominal();
        let coin = hadamard_coin();
        let a = simulate_counts(Scheme::Continual, &params, &coin, 6, Some(99)).unwrap();
        let b = simulate_counts(Scheme::Continual, &params, &coin, 6, Some(99)).unwrap();
        assert_eq!(a, b);
        let c = simulate_counts(Scheme::Continual, &params, &coin, 6, Some(100)).unwrap();
        assert_ne!(a.rows, c.rows);
    }

    #[test]
    fn sampled_first_return_is_unbiased_across_seeds() {
        let params = ImperfectionParams::uniform_loss(0.8);
        let coin = hadamard_coin();
        let expected = {
            let continual = simulate_counts(Scheme::Continual, &params, &coin, 2, None).unwrap();
            let reset = simulate_counts(Scheme::Reset, &params, &coin, 2, None).unwrap();
            normalize_continual(&continual, &reset, 2)
                .unwrap()
                .first_return
        };
        let mut sum = 0.0;
        let seeds = 100;
        for seed in 0..seeds {
            let continual =
                simulate_counts(Scheme::Continual, &params, &coin, 2, Some(seed)).unwrap();
            let reset =
                simulate_counts(Scheme::Reset, &params, &coin, 2, Some(seed + 1000)).unwrap();
            sum += normalize_continual(&continual, &reset, 2)
                .unwrap()
                .first_return;
        }
        let mean = sum / seeds as f64;
        // Counts are ~6e5 per bin, so one sample has sigma ~ 1e-3 on q and
        // the mean of 100 samples sits within 4 sigma / 10.
        assert!(
            (mean - expected).abs() < 4.0 * 1e-3 / (seeds as f64).sqrt(),
            "mean {mean} vs expected {expected}"
        );
    }

    #[test]
    fn envelope_is_zero_for_zero_ranges() {
        let envelope = error_envelope(
            &ImperfectionParams::nominal(),
            &hadamard_coin(),
            Scheme::Reset,
            6,
            &ErrorRanges::zero(),
        )
        .unwrap();
        assert!(envelope.iter().all(|&e| e == 0.0));
    }

    #[test]
    fn coin_only_envelope_matches_the_closed_form_at_step_one() {
        // With only the plate angle varying, p(1,1) deviates from 1/2 by
        // |cos^2(pi/4 + 2 delta) - 1/2|.
        let ranges = ErrorRanges {
            detector_spread: 0.0,
            arm_loss: 0.0,
            coin_angle: 0.15_f64.to_radians(),
            sink_residual: 0.0,
        };
        let nominal = ImperfectionParams::ideal();
        let record = simulate_counts(
            Scheme::Reset,
            &ranges.corner(&nominal, true, true, true, false),
            &hadamard_coin(),
            1,
            None,
        )
        .unwrap();
        let p_right = record.signal_at(1, 1) / record.signal_total(1);
        let delta = ranges.coin_angle;
        let closed_form = (std::f64::consts::FRAC_PI_4 + 2.0 * delta).cos().powi(2);
        assert_abs_diff_eq!(p_right, closed_form, epsilon = 1e-12);

        let envelope =
            error_envelope(&nominal, &hadamard_coin(), Scheme::Reset, 1, &ranges).unwrap();
        // p(0,1) stays zero by parity, so the step-1 envelope on the origin
        // probability vanishes even under the coin error.
        assert_abs_diff_eq!(envelope[0], 0.0, epsilon = 1e-15);
    }

    #[test]
    fn envelope_grows_with_the_ranges() {
        let nominal = ImperfectionParams::nominal();
        let coin = hadamard_coin();
        let small = ErrorRanges {
            detector_spread: 0.005,
            arm_loss: 0.005,
            coin_angle: 0.075_f64.to_radians(),
            sink_residual: 0.005,
        };
        let wide = ErrorRanges::default();
        let narrow = error_envelope(&nominal, &coin, Scheme::Reset, 12, &small).unwrap();
        let broad = error_envelope(&nominal, &coin, Scheme::Reset, 12, &wide).unwrap();
        for (n, b) in narrow.iter().zip(&broad) {
            assert!(*n >= 0.0);
            assert!(b + 1e-15 >= *n, "envelope must not shrink: {n} vs {b}");
        }
    }

    #[test]
    fn envelope_contains_interior_parameter_draws() {
        // Reference = measured setup: fully switching sinks, the residual
        // enters only as an error range.
        let nominal = ImperfectionParams {
            sink_residual_transmission: 0.0,
            ..ImperfectionParams::nominal()
        };
        let coin = hadamard_coin();
        let ranges = ErrorRanges::default();
        let horizon = 10;
        let reference = derived_series(Scheme::Continual, &nominal, &coin, horizon).unwrap();
        let envelope =
            error_envelope(&nominal, &coin, Scheme::Continual, horizon, &ranges).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let skew_r = 1.0 + rng.random_range(-ranges.detector_spread..=ranges.detector_spread);
            let skew_l = 1.0 + rng.random_range(-ranges.detector_spread..=ranges.detector_spread);
            let interior = ImperfectionParams {
                detector_efficiencies: (
                    nominal.detector_efficiencies.0 * skew_r,
                    nominal.detector_efficiencies.1 * skew_l,
                ),
                arm_loss_asymmetry: rng.random_range(-ranges.arm_loss..=ranges.arm_loss),
                coin_angle_error: rng.random_range(-ranges.coin_angle..=ranges.coin_angle),
                sink_residual_transmission: rng.random_range(0.0..=ranges.sink_residual),
                ..nominal
            };
            let series = derived_series(Scheme::Continual, &interior, &coin, horizon).unwrap();
            for t in 1..=horizon {
                let deviation = (series[t - 1] - reference[t - 1]).abs();
                assert!(
                    deviation <= envelope[t - 1] + 1e-12,
                    "step {t}: deviation {deviation} outside envelope {}",
                    envelope[t - 1]
                );
            }
        }
    }

    #[test]
    fn snr_plain_arithmetic_and_sentinel() {
        let mut record = ideal_record(Scheme::Reset, 2);
        assert_eq!(
            snr(&record, &TimeBinMap::default(), 2).unwrap(),
            f64::INFINITY
        );
        for row in &mut record.rows {
            if row.step == 2 {
                row.expected = match row.channel {
                    CountChannel::Noise => 10.0 / 3.0,
                    _ => 1000.0 / 6.0,
                };
            }
        }
        assert_abs_diff_eq!(
            snr(&record, &TimeBinMap::default(), 2).unwrap(),
            100.0,
            epsilon = 1e-9
        );
    }

    #[test]
    fn snr_decays_towards_the_dark_floor() {
        let mut params = ImperfectionParams::uniform_loss(0.8);
        // Dark rate chosen so the floor overtakes the decaying signal near
        // the end of the run.
        params.dark_count_rate = 5e9;
        let record = simulate_counts(Scheme::Reset, &params, &hadamard_coin(), 36, None).unwrap();
        let map = TimeBinMap::default();
        let early = snr(&record, &map, 2).unwrap();
        let mid = snr(&record, &map, 18).unwrap();
        let late = snr(&record, &map, 36).unwrap();
        assert!(early > mid && mid > late, "{early} {mid} {late}");
        assert!(late < 10.0);
        assert!(early > 100.0);
    }

    #[test]
    fn columnar_round_trip_is_bit_exact() {
        let params = ImperfectionParams::nominal();
        let record =
            simulate_counts(Scheme::Continual, &params, &hadamard_coin(), 5, None).unwrap();
        let text = write_columnar(&record);
        let parsed = read_columnar(&text).unwrap();
        assert_eq!(parsed, record);
        assert_eq!(write_columnar(&parsed), text);
    }

    #[test]
    fn columnar_round_trip_sampled_mode() {
        let record = simulate_counts(
            Scheme::Reset,
            &ImperfectionParams::nominal(),
            &hadamard_coin(),
            4,
            Some(17),
        )
        .unwrap();
        let text = write_columnar(&record);
        let parsed = read_columnar(&text).unwrap();
        assert_eq!(parsed, record);
    }

    #[test]
    fn params_validation_rejects_out_of_range_values() {
        let mut p = ImperfectionParams::ideal();
        p.roundtrip_efficiency = 0.0;
        assert!(p.validate().is_err());
        p = ImperfectionParams::ideal();
        p.mean_input_photons = 1e12;
        assert!(p.validate().is_err());
        p = ImperfectionParams::ideal();
        p.detector_efficiencies = (0.5, 1.2);
        assert!(p.validate().is_err());
    }
}
