//! Result bundling and file emission.
//!
//! Every emitted file carries a provenance block (tool version, config
//! hash, seed) so results can be traced back to their settings. Floats in
//! text formats are written with 17 significant digits, which round-trips
//! any f64 exactly; files are written atomically (temp file, then rename).

use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

use qwalk_core::experiment::fmt_f64;
use qwalk_core::{BinReport, ClassicalSeries, McFirstReturn, RecurrenceSeries, SchemeEquivalence};

use crate::CliResult;

/// Identification block stamped into every output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool_version: String,
    pub config_hash: String,
    pub seed: Option<u64>,
}

impl Provenance {
    pub fn comment_line(&self) -> String {
        format!(
            "provenance tool_version={} config_hash={} seed={}",
            self.tool_version,
            self.config_hash,
            self.seed.map_or("none".to_string(), |s| s.to_string())
        )
    }
}

/// Everything a run produced, in one serializable bundle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct ResultPayload {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub recurrence: Option<RecurrenceSeries>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub classical: Option<ClassicalSeries>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub monte_carlo: Option<McFirstReturn>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub equivalence: Option<SchemeEquivalence>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub evolution: Option<Vec<EvolutionStep>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub experiment: Option<ExperimentSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultBundle {
    pub provenance: Provenance,
    #[serde(flatten)]
    pub payload: ResultPayload,
}

/// Position distribution at one step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvolutionStep {
    pub step: usize,
    pub cells: Vec<(i64, f64)>,
}

/// Normalized probabilities and diagnostics derived from an experiment
/// record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub scheme: String,
    pub horizon: usize,
    /// Per step t = 1..=T: the derived probability (p(0,t) for the reset
    /// scheme, q(0,t) for the continual scheme).
    pub probabilities: Vec<f64>,
    /// Survival factors s_{t-1} (continual scheme only).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub survival: Option<Vec<f64>>,
    /// Alternative-normalization values (continual scheme only).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alternative: Option<Vec<f64>>,
    /// Corner-search error envelope half-widths.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub envelope: Option<Vec<f64>>,
    /// Signal-to-noise ratio per step (None entries were infinite).
    pub snr: Vec<Option<f64>>,
    /// Arrival-time interlacing and collision report.
    pub timing: BinReport,
}

/// Write bytes atomically: temp file in the destination directory, then
/// rename over the target.
pub fn write_atomic(path: &Path, contents: &str) -> CliResult<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    std::fs::create_dir_all(dir)?;
    let mut tmp = PathBuf::from(dir);
    tmp.push(format!(
        ".{}.tmp-{}",
        path.file_name().and_then(|n| n.to_str()).unwrap_or("out"),
        std::process::id()
    ));
    std::fs::write(&tmp, contents)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

pub fn bundle_json(bundle: &ResultBundle) -> String {
    let mut text = serde_json::to_string_pretty(bundle).expect("bundle serializes");
    text.push('\n');
    text
}

/// CSV of a recurrence series: one row per step with whichever columns the
/// run produced.
pub fn recurrence_csv(series: &RecurrenceSeries, provenance: &Provenance) -> String {
    let mut out = format!("# {}\n", provenance.comment_line());
    let mut columns = vec!["t"];
    if series.has_reset() {
        columns.extend(["p_origin", "cumulative_reset"]);
    }
    if series.has_continual() {
        columns.extend(["q_first_return", "survival", "cumulative_continual"]);
    }
    out.push_str(&columns.join(","));
    out.push('\n');
    for t in 1..=series.horizon() {
        let mut row = vec![t.to_string()];
        if series.has_reset() {
            row.push(fmt_f64(series.origin_probability(t)));
            row.push(fmt_f64(series.reset(t)));
        }
        if series.has_continual() {
            row.push(fmt_f64(series.first_return(t)));
            row.push(fmt_f64(series.survival(t)));
            row.push(fmt_f64(series.continual(t)));
        }
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

/// Aligned text table of a recurrence series for stdout.
pub fn recurrence_table(series: &RecurrenceSeries) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:>5} {:>12} {:>12} {:>12} {:>12} {:>12}\n",
        "t", "p(0,t)", "q(0,t)", "s_t", "P(T)", "Pr(T)"
    ));
    let cell = |value: Option<f64>| match value {
        Some(v) => format!("{v:>12.6}"),
        None => format!("{:>12}", "-"),
    };
    let reset = series.has_reset();
    let continual = series.has_continual();
    for t in 1..=series.horizon() {
        out.push_str(&format!(
            "{t:>5} {} {} {} {} {}\n",
            cell(reset.then(|| series.origin_probability(t))),
            cell(continual.then(|| series.first_return(t))),
            cell(continual.then(|| series.survival(t))),
            cell(continual.then(|| series.continual(t))),
            cell(reset.then(|| series.reset(t))),
        ));
    }
    out
}

/// CSV of per-step position distributions.
pub fn evolution_csv(steps: &[EvolutionStep], provenance: &Provenance) -> String {
    let mut out = format!("# {}\n", provenance.comment_line());
    out.push_str("t,x,probability\n");
    for step in steps {
        for (x, p) in &step.cells {
            out.push_str(&format!("{},{},{}\n", step.step, x, fmt_f64(*p)));
        }
    }
    out
}

/// CSV of the classical series.
pub fn classical_csv(
    series: &ClassicalSeries,
    mc: Option<&McFirstReturn>,
    provenance: &Provenance,
) -> String {
    let mut out = format!("# {}\n", provenance.comment_line());
    if mc.is_some() {
        out.push_str("t,p_origin,q_first_return,q_monte_carlo,q_standard_error\n");
    } else {
        out.push_str("t,p_origin,q_first_return\n");
    }
    for t in 1..=series.horizon {
        let mut row = format!(
            "{},{},{}",
            t,
            fmt_f64(series.origin_probability[t - 1]),
            fmt_f64(series.first_return[t - 1])
        );
        if let Some(mc) = mc {
            row.push_str(&format!(
                ",{},{}",
                fmt_f64(mc.estimate[t - 1]),
                fmt_f64(mc.standard_error[t - 1])
            ));
        }
        out.push_str(&row);
        out.push('\n');
    }
    out
}

/// CSV of derived experiment probabilities with optional envelope columns.
pub fn experiment_csv(summary: &ExperimentSummary, provenance: &Provenance) -> String {
    let mut out = format!("# {}\n", provenance.comment_line());
    let mut columns = vec!["t", "probability"];
    if summary.survival.is_some() {
        columns.push("survival");
    }
    if summary.alternative.is_some() {
        columns.push("alternative");
    }
    if summary.envelope.is_some() {
        columns.push("envelope");
    }
    columns.push("snr");
    out.push_str(&columns.join(","));
    out.push('\n');
    for t in 1..=summary.horizon {
        let mut row = vec![t.to_string(), fmt_f64(summary.probabilities[t - 1])];
        if let Some(survival) = &summary.survival {
            row.push(fmt_f64(survival[t - 1]));
        }
        if let Some(alternative) = &summary.alternative {
            row.push(fmt_f64(alternative[t - 1]));
        }
        if let Some(envelope) = &summary.envelope {
            row.push(fmt_f64(envelope[t - 1]));
        }
        row.push(match summary.snr[t - 1] {
            Some(v) => fmt_f64(v),
            None => "inf".to_string(),
        });
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}
