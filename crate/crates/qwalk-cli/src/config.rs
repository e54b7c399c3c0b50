//! Configuration: command-line flags merged over an optional flat
//! `key = value` config file, flags taking precedence.

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use qwalk_core::{hadamard_coin, hwp_coin, identity_coin, CoinLabel, CoinSpec};
use qwalk_core::{ImperfectionParams, Scheme, SinkSchedule, SiteSet, TimeBinMap};

use crate::{CliError, CliResult};

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "QWALK_OUT_DIR";

#[derive(Debug, Parser)]
#[command(
    name = "qwalk",
    version,
    about = "Discrete-time quantum walk recurrence simulator with absorbing sinks,\n\
             classical lattice baselines, and a photonic loop experiment model"
)]
pub struct Cli {
    /// Flat key = value config file; flags override file values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Output directory (default: $QWALK_OUT_DIR or the working directory).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    /// Output formats: any of table, json, csv, chart (comma separated).
    #[arg(long, global = true, value_delimiter = ',')]
    pub format: Option<Vec<String>>,

    /// RNG seed for sampled runs.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    #[command(subcommand)]
    pub command: CliCommand,
}

#[derive(Debug, Subcommand)]
pub enum CliCommand {
    /// Free evolution: per-step position distributions.
    Evolve(WalkArgs),
    /// Recurrence probabilities in the reset and/or continual scheme.
    Recurrence(WalkArgs),
    /// Classical lattice random-walk baseline.
    Classical(ClassicalArgs),
    /// Photonic loop forward model and count normalization.
    Experiment(ExperimentArgs),
    /// Both observation schemes side by side, with charts.
    Compare(WalkArgs),
}

#[derive(Debug, Args, Default)]
pub struct WalkArgs {
    /// Coin preset: hadamard, identity, or hwp:<degrees>.
    #[arg(long)]
    pub coin: Option<String>,

    /// Initial coin state: r, l, or symmetric.
    #[arg(long)]
    pub initial: Option<String>,

    /// Number of walk steps.
    #[arg(long)]
    pub steps: Option<usize>,

    /// Observation scheme: reset, continual, or both.
    #[arg(long)]
    pub scheme: Option<String>,

    /// Sink positions, comma separated (default: the origin).
    #[arg(long)]
    pub sink_positions: Option<String>,

    /// Residual intensity transmission of the sinks.
    #[arg(long)]
    pub sink_residual: Option<f64>,

    /// Coin components the sinks absorb: both, r, or l.
    #[arg(long)]
    pub sink_coins: Option<String>,
}

#[derive(Debug, Args, Default)]
pub struct ClassicalArgs {
    /// Lattice dimension (1..=3).
    #[arg(long)]
    pub dimension: Option<usize>,

    /// Number of walk steps.
    #[arg(long)]
    pub steps: Option<usize>,

    /// Monte Carlo trials; omit to skip the stochastic estimate.
    #[arg(long)]
    pub trials: Option<u64>,
}

#[derive(Debug, Args, Default)]
pub struct ExperimentArgs {
    /// Observation scheme: reset or continual.
    #[arg(long)]
    pub scheme: Option<String>,

    /// Number of walk steps.
    #[arg(long)]
    pub steps: Option<usize>,

    /// Roundtrip intensity efficiency.
    #[arg(long)]
    pub efficiency: Option<f64>,

    /// Relative extra intensity on the L arm.
    #[arg(long)]
    pub arm_asymmetry: Option<f64>,

    /// Coin plate angle error, degrees.
    #[arg(long)]
    pub coin_error_deg: Option<f64>,

    /// Sink residual intensity transmission.
    #[arg(long)]
    pub sink_residual: Option<f64>,

    /// Detector efficiencies as r,l.
    #[arg(long)]
    pub detectors: Option<String>,

    /// Dark counts per second.
    #[arg(long)]
    pub dark_rate: Option<f64>,

    /// Photons per pulse after the ND filter.
    #[arg(long)]
    pub photons: Option<f64>,

    /// Also compute the corner-search error envelope.
    #[arg(long)]
    pub envelope: bool,

    /// Loop round-trip time in nanoseconds.
    #[arg(long)]
    pub loop_ns: Option<f64>,

    /// Per-position arrival-time pitch in nanoseconds.
    #[arg(long)]
    pub pitch_ns: Option<f64>,

    /// Detection window in nanoseconds.
    #[arg(long)]
    pub window_ns: Option<f64>,
}

/// Which subcommand runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CommandKind {
    Evolve,
    Recurrence,
    Classical,
    Experiment,
    Compare,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SchemeChoice {
    Reset,
    Continual,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum OutputFormat {
    Table,
    Json,
    Csv,
    Chart,
}

/// Fully resolved run configuration: defaults, config file, and flags
/// merged, everything validated.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub command: CommandKind,
    pub coin_name: String,
    #[serde(skip)]
    pub coin: CoinSpec,
    pub initial_name: String,
    pub steps: usize,
    pub scheme: SchemeChoice,
    pub dimension: usize,
    pub trials: Option<u64>,
    pub seed: Option<u64>,
    #[serde(skip)]
    pub sink: SinkSchedule,
    pub sink_description: String,
    pub params: ImperfectionParams,
    pub envelope: bool,
    pub timebin: TimeBinMap,
    // Where results land and which files get written do not affect the
    // computation, so they stay out of the config hash.
    #[serde(skip)]
    pub out_dir: PathBuf,
    #[serde(skip)]
    pub formats: Vec<OutputFormat>,
}

impl RunConfig {
    pub fn initial_spec(&self) -> qwalk_core::InitialSpec {
        match self.initial_name.as_str() {
            "l" => qwalk_core::InitialSpec::left(),
            "symmetric" => qwalk_core::InitialSpec::symmetric(),
            _ => qwalk_core::InitialSpec::right(),
        }
    }

    pub fn experiment_scheme(&self) -> Scheme {
        match self.scheme {
            SchemeChoice::Continual => Scheme::Continual,
            _ => Scheme::Reset,
        }
    }

    pub fn wants(&self, format: OutputFormat) -> bool {
        self.formats.contains(&format)
    }

    /// FNV-1a hash of the canonical serialized config, recorded in every
    /// output file so results can be traced to their settings.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        let mut hash: u64 = 0xcbf29ce484222325;
        for byte in canonical.as_bytes() {
            hash ^= u64::from(*byte);
            hash = hash.wrapping_mul(0x100000001b3);
        }
        format!("{hash:016x}")
    }
}

/// Key = value file with `#` comments; unknown keys are rejected.
fn parse_config_file(path: &Path) -> CliResult<BTreeMap<String, String>> {
    const KNOWN: &[&str] = &[
        "out",
        "format",
        "seed",
        "coin",
        "initial",
        "steps",
        "scheme",
        "sink_positions",
        "sink_residual",
        "sink_coins",
        "dimension",
        "trials",
        "efficiency",
        "arm_asymmetry",
        "coin_error_deg",
        "detectors",
        "dark_rate",
        "photons",
        "envelope",
        "loop_ns",
        "pitch_ns",
        "window_ns",
    ];
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display())))?;
    let mut map = BTreeMap::new();
    for (line_number, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            CliError::config(format!(
                "{}:{}: expected key = value",
                path.display(),
                line_number + 1
            ))
        })?;
        let key = key.trim().to_string();
        if !KNOWN.contains(&key.as_str()) {
            return Err(CliError::config(format!(
                "{}:{}: unknown key {key:?}",
                path.display(),
                line_number + 1
            )));
        }
        map.insert(key, value.trim().to_string());
    }
    Ok(map)
}

fn file_value<T: std::str::FromStr>(
    file: &BTreeMap<String, String>,
    key: &str,
) -> CliResult<Option<T>>
where
    T::Err: std::fmt::Display,
{
    match file.get(key) {
        None => Ok(None),
        Some(raw) => raw
            .parse::<T>()
            .map(Some)
            .map_err(|e| CliError::config(format!("key {key:?}: {e}"))),
    }
}

fn parse_coin(name: &str) -> CliResult<(String, CoinSpec)> {
    let lowered = name.to_ascii_lowercase();
    if lowered == "hadamard" {
        return Ok((lowered, hadamard_coin()));
    }
    if lowered == "identity" {
        return Ok((lowered, identity_coin()));
    }
    if let Some(angle) = lowered.strip_prefix("hwp:") {
        let degrees: f64 = angle
            .parse()
            .map_err(|e| CliError::config(format!("coin angle {angle:?}: {e}")))?;
        return Ok((lowered.clone(), hwp_coin(degrees.to_radians())));
    }
    Err(CliError::config(format!(
        "unknown coin {name:?} (expected hadamard, identity, or hwp:<degrees>)"
    )))
}

fn parse_initial(name: &str) -> CliResult<String> {
    match name.to_ascii_lowercase().as_str() {
        s @ ("r" | "l" | "symmetric") => Ok(s.to_string()),
        other => Err(CliError::config(format!(
            "unknown initial state {other:?} (expected r, l, or symmetric)"
        ))),
    }
}

fn parse_scheme(name: &str, allow_both: bool) -> CliResult<SchemeChoice> {
    match name.to_ascii_lowercase().as_str() {
        "reset" => Ok(SchemeChoice::Reset),
        "continual" => Ok(SchemeChoice::Continual),
        "both" if allow_both => Ok(SchemeChoice::Both),
        other => Err(CliError::config(format!("unknown scheme {other:?}"))),
    }
}

fn parse_formats(raw: &[String]) -> CliResult<Vec<OutputFormat>> {
    let mut formats = Vec::new();
    for token in raw.iter().flat_map(|t| t.split(',')) {
        let format = match token.trim().to_ascii_lowercase().as_str() {
            "table" => OutputFormat::Table,
            "json" => OutputFormat::Json,
            "csv" => OutputFormat::Csv,
            "chart" => OutputFormat::Chart,
            other => {
                return Err(CliError::config(format!("unknown format {other:?}")));
            }
        };
        if !formats.contains(&format) {
            formats.push(format);
        }
    }
    if formats.is_empty() {
        return Err(CliError::config("no output format selected"));
    }
    Ok(formats)
}

fn parse_sink(
    positions: Option<String>,
    residual: Option<f64>,
    coins: Option<String>,
) -> CliResult<(SinkSchedule, String)> {
    let sites = match &positions {
        None => SiteSet::Origin,
        Some(raw) => {
            let mut set = std::collections::BTreeSet::new();
            for token in raw.split(',') {
                let x: i64 = token
                    .trim()
                    .parse()
                    .map_err(|e| CliError::config(format!("sink position {token:?}: {e}")))?;
                set.insert(x);
            }
            if set == std::collections::BTreeSet::from([0]) {
                SiteSet::Origin
            } else {
                SiteSet::Positions(set)
            }
        }
    };
    let residual = residual.unwrap_or(0.0);
    let mut schedule =
        SinkSchedule::new(sites, residual).map_err(|e| CliError::config(e.to_string()))?;
    let coins_name = coins.unwrap_or_else(|| "both".to_string());
    schedule = match coins_name.to_ascii_lowercase().as_str() {
        "both" => schedule,
        "r" => schedule.coin_selective(&[CoinLabel::R]),
        "l" => schedule.coin_selective(&[CoinLabel::L]),
        other => {
            return Err(CliError::config(format!("unknown sink coins {other:?}")));
        }
    };
    let description = format!(
        "positions={} residual={} coins={}",
        positions.as_deref().unwrap_or("0"),
        residual,
        coins_name
    );
    Ok((schedule, description))
}

/// Merge flags over the config file and defaults into a validated
/// [`RunConfig`].
pub fn resolve_cli(cli: Cli) -> CliResult<RunConfig> {
    let file = match &cli.config {
        Some(path) => parse_config_file(path)?,
        None => BTreeMap::new(),
    };

    let out_dir = cli
        .out
        .clone()
        .or_else(|| file.get("out").map(PathBuf::from))
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."));

    let formats = match &cli.format {
        Some(raw) => parse_formats(raw)?,
        None => match file.get("format") {
            Some(raw) => parse_formats(std::slice::from_ref(raw))?,
            None => vec![
                OutputFormat::Table,
                OutputFormat::Json,
                OutputFormat::Csv,
                OutputFormat::Chart,
            ],
        },
    };

    let seed = match cli.seed {
        Some(s) => Some(s),
        None => file_value::<u64>(&file, "seed")?,
    };

    let steps = |flag: Option<usize>| -> CliResult<usize> {
        let steps = match flag {
            Some(s) => s,
            None => file_value::<usize>(&file, "steps")?.unwrap_or(36),
        };
        if steps == 0 {
            return Err(CliError::config("steps must be at least 1"));
        }
        Ok(steps)
    };

    let walk_config = |command: CommandKind,
                       args: WalkArgs,
                       default_scheme: SchemeChoice|
     -> CliResult<RunConfig> {
        // The recurrence series are defined by the ideal origin sink;
        // custom sink schedules only make sense for monitored evolution.
        if command != CommandKind::Evolve
            && (args.sink_positions.is_some()
                || args.sink_residual.is_some()
                || args.sink_coins.is_some())
        {
            return Err(CliError::config(
                "sink flags apply to `evolve --scheme continual` and `experiment` only",
            ));
        }
        let coin_raw = args
            .coin
            .or_else(|| file.get("coin").cloned())
            .unwrap_or_else(|| "hadamard".to_string());
        let (coin_name, coin) = parse_coin(&coin_raw)?;
        let initial_raw = args
            .initial
            .or_else(|| file.get("initial").cloned())
            .unwrap_or_else(|| "r".to_string());
        let initial_name = parse_initial(&initial_raw)?;
        let scheme = match args.scheme.or_else(|| file.get("scheme").cloned()) {
            Some(raw) => parse_scheme(&raw, true)?,
            None => default_scheme,
        };
        let sink_residual = match args.sink_residual {
            Some(v) => Some(v),
            None => file_value::<f64>(&file, "sink_residual")?,
        };
        let (sink, sink_description) = parse_sink(
            args.sink_positions
                .or_else(|| file.get("sink_positions").cloned()),
            sink_residual,
            args.sink_coins.or_else(|| file.get("sink_coins").cloned()),
        )?;
        Ok(RunConfig {
            command,
            coin_name,
            coin,
            initial_name,
            steps: steps(args.steps)?,
            scheme,
            dimension: 1,
            trials: None,
            seed,
            sink,
            sink_description,
            params: ImperfectionParams::ideal(),
            envelope: false,
            timebin: TimeBinMap::default(),
            out_dir: out_dir.clone(),
            formats: formats.clone(),
        })
    };

    match cli.command {
        CliCommand::Evolve(args) => walk_config(CommandKind::Evolve, args, SchemeChoice::Reset),
        CliCommand::Recurrence(args) => {
            walk_config(CommandKind::Recurrence, args, SchemeChoice::Both)
        }
        CliCommand::Compare(args) => walk_config(CommandKind::Compare, args, SchemeChoice::Both),
        CliCommand::Classical(args) => {
            let dimension = match args.dimension {
                Some(d) => d,
                None => file_value::<usize>(&file, "dimension")?.unwrap_or(1),
            };
            if !(1..=3).contains(&dimension) {
                return Err(CliError::config(format!(
                    "dimension {dimension} out of range (1..=3)"
                )));
            }
            let trials = match args.trials {
                Some(t) => Some(t),
                None => file_value::<u64>(&file, "trials")?,
            };
            Ok(RunConfig {
                command: CommandKind::Classical,
                coin_name: "hadamard".to_string(),
                coin: hadamard_coin(),
                initial_name: "r".to_string(),
                steps: steps(args.steps)?,
                scheme: SchemeChoice::Both,
                dimension,
                trials,
                seed,
                sink: SinkSchedule::ideal_origin(),
                sink_description: "positions=0 residual=0 coins=both".to_string(),
                params: ImperfectionParams::ideal(),
                envelope: false,
                timebin: TimeBinMap::default(),
                out_dir,
                formats,
            })
        }
        CliCommand::Experiment(args) => {
            let scheme_raw = args
                .scheme
                .or_else(|| file.get("scheme").cloned())
                .unwrap_or_else(|| "continual".to_string());
            let scheme = parse_scheme(&scheme_raw, false)?;
            let defaults = ImperfectionParams::nominal();
            let pick = |flag: Option<f64>, key: &str, default: f64| -> CliResult<f64> {
                Ok(match flag {
                    Some(v) => v,
                    None => file_value::<f64>(&file, key)?.unwrap_or(default),
                })
            };
            let detectors_raw = args.detectors.or_else(|| file.get("detectors").cloned());
            let detector_efficiencies = match detectors_raw {
                None => defaults.detector_efficiencies,
                Some(raw) => {
                    let (r, l) = raw.split_once(',').ok_or_else(|| {
                        CliError::config(format!("detectors {raw:?}: expected r,l"))
                    })?;
                    (
                        r.trim()
                            .parse()
                            .map_err(|e| CliError::config(format!("detectors: {e}")))?,
                        l.trim()
                            .parse()
                            .map_err(|e| CliError::config(format!("detectors: {e}")))?,
                    )
                }
            };
            let params = ImperfectionParams {
                roundtrip_efficiency: pick(
                    args.efficiency,
                    "efficiency",
                    defaults.roundtrip_efficiency,
                )?,
                arm_loss_asymmetry: pick(
                    args.arm_asymmetry,
                    "arm_asymmetry",
                    defaults.arm_loss_asymmetry,
                )?,
                coin_angle_error: pick(args.coin_error_deg, "coin_error_deg", 0.0)?.to_radians(),
                sink_residual_transmission: pick(
                    args.sink_residual,
                    "sink_residual",
                    defaults.sink_residual_transmission,
                )?,
                detector_efficiencies,
                dark_count_rate: pick(args.dark_rate, "dark_rate", defaults.dark_count_rate)?,
                mean_input_photons: pick(args.photons, "photons", defaults.mean_input_photons)?,
            };
            params
                .validate()
                .map_err(|e| CliError::config(e.to_string()))?;
            let envelope = args.envelope || file.get("envelope").map(|v| v == "true") == Some(true);
            let timebin = TimeBinMap::new(
                pick(args.loop_ns, "loop_ns", 2050.0)?,
                pick(args.pitch_ns, "pitch_ns", 50.0)?,
                pick(args.window_ns, "window_ns", 4.8)?,
            )
            .map_err(|e| CliError::config(e.to_string()))?;
            Ok(RunConfig {
                command: CommandKind::Experiment,
                coin_name: "hadamard".to_string(),
                coin: hadamard_coin(),
                initial_name: "r".to_string(),
                steps: steps(args.steps)?,
                scheme,
                dimension: 1,
                trials: None,
                seed,
                sink: SinkSchedule::origin_with_residual(params.sink_residual_transmission)
                    .map_err(|e| CliError::config(e.to_string()))?,
                sink_description: format!(
                    "positions=0 residual={} coins=both",
                    params.sink_residual_transmission
                ),
                params,
                envelope,
                timebin,
                out_dir,
                formats,
            })
        }
    }
}
