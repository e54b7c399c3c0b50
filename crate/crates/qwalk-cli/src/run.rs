//! Orchestration: run the configured computation and emit the selected
//! outputs.

use std::path::PathBuf;

use qwalk_core::experiment::write_columnar;
use qwalk_core::{
    check_bin_uniqueness, classical_series, conditional_evolve, continual_recurrence,
    error_envelope, evolve, monte_carlo_first_return, normalize_continual,
    normalize_continual_alternative, normalize_reset, position_distribution, recurrence_series,
    reset_recurrence, scheme_equivalence_check, simulate_counts, snr, ErrorRanges, LatticeWalkSpec,
    RecurrenceSeries, Scheme,
};

use crate::chart::{heatmap_chart, recurrence_chart, HeatmapRow};
use crate::config::{CommandKind, OutputFormat, RunConfig, SchemeChoice};
use crate::output::{
    bundle_json, classical_csv, evolution_csv, experiment_csv, recurrence_csv, recurrence_table,
    write_atomic, EvolutionStep, ExperimentSummary, Provenance, ResultBundle, ResultPayload,
};
use crate::{CliError, CliResult};

/// Files written by a run, for reporting.
pub struct RunOutcome {
    pub bundle: ResultBundle,
    pub files: Vec<PathBuf>,
    pub stdout: String,
}

pub fn run(config: &RunConfig) -> CliResult<RunOutcome> {
    let provenance = Provenance {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        config_hash: config.hash(),
        seed: config.seed,
    };
    match config.command {
        CommandKind::Evolve => run_evolve(config, provenance),
        CommandKind::Recurrence => run_recurrence(config, provenance),
        CommandKind::Classical => run_classical(config, provenance),
        CommandKind::Experiment => run_experiment(config, provenance),
        CommandKind::Compare => run_compare(config, provenance),
    }
}

fn emit(config: &RunConfig, files: &mut Vec<PathBuf>, name: &str, contents: &str) -> CliResult<()> {
    let path = config.out_dir.join(name);
    write_atomic(&path, contents)?;
    files.push(path);
    Ok(())
}

fn compute_series(config: &RunConfig) -> RecurrenceSeries {
    let initial = config.initial_spec();
    match config.scheme {
        SchemeChoice::Both => recurrence_series(&initial, &config.coin, config.steps),
        SchemeChoice::Reset => reset_recurrence(&initial, &config.coin, config.steps),
        SchemeChoice::Continual => continual_recurrence(&initial, &config.coin, config.steps),
    }
}

fn run_recurrence(config: &RunConfig, provenance: Provenance) -> CliResult<RunOutcome> {
    let series = compute_series(config);
    let bundle = ResultBundle {
        provenance: provenance.clone(),
        payload: ResultPayload {
            recurrence: Some(series.clone()),
            ..Default::default()
        },
    };
    let mut files = Vec::new();
    if config.wants(OutputFormat::Json) {
        emit(config, &mut files, "recurrence.json", &bundle_json(&bundle))?;
    }
    if config.wants(OutputFormat::Csv) {
        emit(
            config,
            &mut files,
            "recurrence.csv",
            &recurrence_csv(&series, &provenance),
        )?;
    }
    if config.wants(OutputFormat::Chart) {
        let svg = recurrence_chart(&series, &provenance.comment_line())?;
        emit(config, &mut files, "recurrence.svg", &svg)?;
    }
    let stdout = if config.wants(OutputFormat::Table) {
        recurrence_table(&series)
    } else {
        String::new()
    };
    Ok(RunOutcome {
        bundle,
        files,
        stdout,
    })
}

fn free_evolution_rows(config: &RunConfig) -> CliResult<Vec<EvolutionStep>> {
    let initial = config.initial_spec();
    let mut rows = Vec::with_capacity(config.steps + 1);
    for t in 0..=config.steps {
        let state = evolve(&initial, &config.coin, t);
        let distribution = position_distribution(&state)?;
        rows.push(EvolutionStep {
            step: t,
            cells: distribution.normalized.into_iter().collect(),
        });
    }
    Ok(rows)
}

fn conditional_rows(config: &RunConfig) -> CliResult<Vec<EvolutionStep>> {
    let initial = config.initial_spec();
    let mut rows = vec![EvolutionStep {
        step: 0,
        cells: vec![(0, 1.0)],
    }];
    for t in 1..=config.steps {
        let (state, _) = conditional_evolve(&initial, &config.coin, &config.sink, t)?;
        let distribution = position_distribution(&state)?;
        rows.push(EvolutionStep {
            step: t,
            cells: distribution.normalized.into_iter().collect(),
        });
    }
    Ok(rows)
}

fn run_evolve(config: &RunConfig, provenance: Provenance) -> CliResult<RunOutcome> {
    let rows = match config.scheme {
        SchemeChoice::Continual => conditional_rows(config)?,
        _ => free_evolution_rows(config)?,
    };
    let bundle = ResultBundle {
        provenance: provenance.clone(),
        payload: ResultPayload {
            evolution: Some(rows.clone()),
            ..Default::default()
        },
    };
    let mut files = Vec::new();
    if config.wants(OutputFormat::Json) {
        emit(config, &mut files, "evolution.json", &bundle_json(&bundle))?;
    }
    if config.wants(OutputFormat::Csv) {
        emit(
            config,
            &mut files,
            "evolution.csv",
            &evolution_csv(&rows, &provenance),
        )?;
    }
    if config.wants(OutputFormat::Chart) {
        let heatmap_rows: Vec<HeatmapRow> =
            rows.iter().map(|r| (r.step, r.cells.clone())).collect();
        let svg = heatmap_chart(
            &heatmap_rows,
            "Position distribution by step",
            &provenance.comment_line(),
        )?;
        emit(config, &mut files, "heatmap.svg", &svg)?;
    }
    let mut stdout = String::new();
    if config.wants(OutputFormat::Table) {
        stdout.push_str("t,x,probability\n");
        for row in &rows {
            for (x, p) in &row.cells {
                stdout.push_str(&format!("{},{},{:.6}\n", row.step, x, p));
            }
        }
    }
    Ok(RunOutcome {
        bundle,
        files,
        stdout,
    })
}

fn run_classical(config: &RunConfig, provenance: Provenance) -> CliResult<RunOutcome> {
    let spec = LatticeWalkSpec::new(config.dimension).map_err(CliError::from)?;
    let series = classical_series(&spec, config.steps)?;
    let monte_carlo = config.trials.map(|trials| {
        monte_carlo_first_return(&spec, config.steps, trials, config.seed.unwrap_or(0))
    });
    let equivalence =
        scheme_equivalence_check(&spec, &config.initial_spec(), &config.coin, config.steps)?;
    let bundle = ResultBundle {
        provenance: provenance.clone(),
        payload: ResultPayload {
            classical: Some(series.clone()),
            monte_carlo: monte_carlo.clone(),
            equivalence: Some(equivalence),
            ..Default::default()
        },
    };
    let mut files = Vec::new();
    if config.wants(OutputFormat::Json) {
        emit(config, &mut files, "classical.json", &bundle_json(&bundle))?;
    }
    if config.wants(OutputFormat::Csv) {
        emit(
            config,
            &mut files,
            "classical.csv",
            &classical_csv(&series, monte_carlo.as_ref(), &provenance),
        )?;
    }
    let mut stdout = String::new();
    if config.wants(OutputFormat::Table) {
        stdout.push_str(&format!(
            "d={} T={}  polya_from_q={:.6}  polya_from_p={:.6}{}  reset={:.6}\n",
            series.dimension,
            series.horizon,
            series.polya_from_q,
            series.polya_from_p.value,
            if series.polya_from_p.truncation_warning {
                " (truncated)"
            } else {
                ""
            },
            series.reset_recurrence
        ));
    }
    Ok(RunOutcome {
        bundle,
        files,
        stdout,
    })
}

fn run_experiment(config: &RunConfig, provenance: Provenance) -> CliResult<RunOutcome> {
    let scheme = config.experiment_scheme();
    let record = simulate_counts(
        scheme,
        &config.params,
        &config.coin,
        config.steps,
        config.seed,
    )?;
    // The continual normalization needs the unmonitored totals as
    // reference; the reset run is an independent experiment, so its counts
    // sample from a seed derived from (not equal to) the main one.
    let reset_record = match scheme {
        Scheme::Reset => record.clone(),
        Scheme::Continual => simulate_counts(
            Scheme::Reset,
            &config.params,
            &config.coin,
            config.steps,
            config.seed.map(|s| s.wrapping_add(0x9e3779b97f4a7c15)),
        )?,
    };

    let mut probabilities = Vec::with_capacity(config.steps);
    let mut survival = Vec::with_capacity(config.steps);
    let mut alternative = Vec::with_capacity(config.steps);
    let mut snr_series = Vec::with_capacity(config.steps);
    for t in 1..=config.steps {
        match scheme {
            Scheme::Reset => probabilities.push(normalize_reset(&record, t)?),
            Scheme::Continual => {
                let p = normalize_continual(&record, &reset_record, t)?;
                probabilities.push(p.first_return);
                survival.push(p.survival);
                alternative.push(normalize_continual_alternative(&record, t)?);
            }
        }
        let ratio = snr(&record, &config.timebin, t)?;
        snr_series.push(ratio.is_finite().then_some(ratio));
    }
    let envelope = if config.envelope {
        Some(error_envelope(
            &config.params,
            &config.coin,
            scheme,
            config.steps,
            &ErrorRanges::default(),
        )?)
    } else {
        None
    };
    // The landmarks of interest all sit below step 64; the pairwise scan
    // grows quadratically, so the report is capped there for long runs.
    let timing = check_bin_uniqueness(&config.timebin, config.steps.min(64), 5.0);
    let summary = ExperimentSummary {
        scheme: scheme.to_string(),
        horizon: config.steps,
        probabilities,
        survival: (scheme == Scheme::Continual).then_some(survival),
        alternative: (scheme == Scheme::Continual).then_some(alternative),
        envelope,
        snr: snr_series,
        timing,
    };
    let bundle = ResultBundle {
        provenance: provenance.clone(),
        payload: ResultPayload {
            experiment: Some(summary.clone()),
            ..Default::default()
        },
    };
    let mut files = Vec::new();
    let mut counts_text = format!("# {}\n", provenance.comment_line());
    counts_text.push_str(&write_columnar(&record));
    emit(
        config,
        &mut files,
        &format!("counts_{scheme}.txt"),
        &counts_text,
    )?;
    if config.wants(OutputFormat::Json) {
        emit(config, &mut files, "experiment.json", &bundle_json(&bundle))?;
    }
    if config.wants(OutputFormat::Csv) {
        emit(
            config,
            &mut files,
            "experiment.csv",
            &experiment_csv(&summary, &provenance),
        )?;
    }
    let mut stdout = String::new();
    if config.wants(OutputFormat::Table) {
        stdout.push_str(&format!("scheme={scheme} steps={}\n", config.steps));
        for t in 1..=config.steps {
            stdout.push_str(&format!(
                "t={t:>3}  probability={:.9}\n",
                summary.probabilities[t - 1]
            ));
        }
    }
    Ok(RunOutcome {
        bundle,
        files,
        stdout,
    })
}

fn run_compare(config: &RunConfig, provenance: Provenance) -> CliResult<RunOutcome> {
    let initial = config.initial_spec();
    let series = recurrence_series(&initial, &config.coin, config.steps);
    let spec = LatticeWalkSpec::new(config.dimension).map_err(CliError::from)?;
    let equivalence = scheme_equivalence_check(&spec, &initial, &config.coin, config.steps)?;
    let bundle = ResultBundle {
        provenance: provenance.clone(),
        payload: ResultPayload {
            recurrence: Some(series.clone()),
            equivalence: Some(equivalence),
            ..Default::default()
        },
    };
    let mut files = Vec::new();
    if config.wants(OutputFormat::Json) {
        emit(config, &mut files, "compare.json", &bundle_json(&bundle))?;
    }
    if config.wants(OutputFormat::Csv) {
        emit(
            config,
            &mut files,
            "compare.csv",
            &recurrence_csv(&series, &provenance),
        )?;
    }
    if config.wants(OutputFormat::Chart) {
        let svg = recurrence_chart(&series, &provenance.comment_line())?;
        emit(config, &mut files, "recurrence.svg", &svg)?;

        let free = free_evolution_rows(config)?;
        let free_rows: Vec<HeatmapRow> = free.iter().map(|r| (r.step, r.cells.clone())).collect();
        let svg = heatmap_chart(
            &free_rows,
            "Reset scheme: free evolution",
            &provenance.comment_line(),
        )?;
        emit(config, &mut files, "heatmap_reset.svg", &svg)?;

        let conditional = conditional_rows(config)?;
        let conditional_cells: Vec<HeatmapRow> = conditional
            .iter()
            .map(|r| (r.step, r.cells.clone()))
            .collect();
        let svg = heatmap_chart(
            &conditional_cells,
            "Continual scheme: monitored evolution",
            &provenance.comment_line(),
        )?;
        emit(config, &mut files, "heatmap_continual.svg", &svg)?;
    }
    let mut stdout = String::new();
    if config.wants(OutputFormat::Table) {
        stdout.push_str(&format!(
            "T={}  continual P={:.9}  reset Pr={:.9}  (2/pi = {:.9})\n",
            config.steps,
            series.continual(config.steps),
            series.reset(config.steps),
            std::f64::consts::FRAC_2_PI
        ));
    }
    Ok(RunOutcome {
        bundle,
        files,
        stdout,
    })
}
