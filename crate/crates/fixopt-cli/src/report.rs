//! Trace-file parsing and the textual run report.

use std::fs;
use std::path::Path;

use fixopt::{OptimizationTrace, TraceRow};

use crate::CliError;

/// Parse a trace CSV written by a run. Malformed content is reported with its
/// line number.
pub fn parse_trace(path: &Path) -> Result<Vec<TraceRow>, CliError> {
    let text = fs::read_to_string(path).map_err(CliError::io(path))?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header == OptimizationTrace::CSV_HEADER => {}
        Some((_, header)) => {
            return Err(CliError::Malformed {
                path: path.to_path_buf(),
                line: 1,
                message: format!(
                    "unexpected header {header:?}; expected {:?}",
                    OptimizationTrace::CSV_HEADER
                ),
            });
        }
        None => {
            return Err(CliError::Malformed {
                path: path.to_path_buf(),
                line: 1,
                message: "empty file".into(),
            });
        }
    }

    let malformed = |line: usize, message: String| CliError::Malformed {
        path: path.to_path_buf(),
        line,
        message,
    };

    let mut rows = Vec::new();
    for (index, line) in lines {
        let lineno = index + 1;
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 7 {
            return Err(malformed(
                lineno,
                format!("expected 7 fields, found {}", fields.len()),
            ));
        }
        let required = |field: &str, name: &str| -> Result<f64, CliError> {
            field
                .parse::<f64>()
                .map_err(|e| malformed(lineno, format!("{name}: {e}")))
        };
        let optional = |field: &str, name: &str| -> Result<Option<f64>, CliError> {
            if field.is_empty() {
                Ok(None)
            } else {
                required(field, name).map(Some)
            }
        };
        rows.push(TraceRow {
            iteration: fields[0]
                .parse::<usize>()
                .map_err(|e| malformed(lineno, format!("iter: {e}")))?,
            threshold: required(fields[1], "c_n")?,
            inner_steps: fields[2]
                .parse::<usize>()
                .map_err(|e| malformed(lineno, format!("inner_steps: {e}")))?,
            grad_norm: required(fields[3], "grad_norm")?,
            param_norm: required(fields[4], "param_norm")?,
            objective: optional(fields[5], "objective")?,
            contraction_bound: optional(fields[6], "contraction_bound")?,
        });
    }
    if rows.is_empty() {
        return Err(malformed(1, "trace has a header but no rows".into()));
    }
    Ok(rows)
}

/// Numbers derived from a trace, all recomputable from the CSV alone.
#[derive(Debug, Clone)]
pub struct TraceStats {
    pub rows: usize,
    pub total_inner_steps: usize,
    /// Minimum sampled objective with its iteration.
    pub min_objective: Option<(usize, f64)>,
    /// Last sampled objective with its iteration.
    pub last_objective: Option<(usize, f64)>,
    pub first_param_norm: f64,
    pub last_param_norm: f64,
    pub first_bound: Option<f64>,
    pub last_bound: Option<f64>,
    /// First iteration from which at least 95% of the remaining iterations
    /// needed at most one inner step.
    pub steady_state_iteration: Option<usize>,
}

pub fn trace_stats(rows: &[TraceRow]) -> TraceStats {
    let mut min_objective: Option<(usize, f64)> = None;
    let mut last_objective: Option<(usize, f64)> = None;
    for row in rows {
        if let Some(e) = row.objective {
            last_objective = Some((row.iteration, e));
            if min_objective.map_or(true, |(_, best)| e < best) {
                min_objective = Some((row.iteration, e));
            }
        }
    }

    // Backward scan: suffix counts of single-step iterations.
    let mut steady_state_iteration = None;
    let mut suffix_single = 0usize;
    for (idx, row) in rows.iter().enumerate().rev() {
        if row.inner_steps <= 1 {
            suffix_single += 1;
        }
        let suffix_len = rows.len() - idx;
        if (suffix_single as f64) >= 0.95 * suffix_len as f64 {
            steady_state_iteration = Some(row.iteration);
        }
    }

    TraceStats {
        rows: rows.len(),
        total_inner_steps: rows.iter().map(|r| r.inner_steps).sum(),
        min_objective,
        last_objective,
        first_param_norm: rows.first().map_or(f64::NAN, |r| r.param_norm),
        last_param_norm: rows.last().map_or(f64::NAN, |r| r.param_norm),
        first_bound: rows.iter().find_map(|r| r.contraction_bound),
        last_bound: rows.iter().rev().find_map(|r| r.contraction_bound),
        steady_state_iteration,
    }
}

/// Render the stats as the text the `report` subcommand prints.
pub fn render_report(stats: &TraceStats) -> String {
    let mut out = String::new();
    out.push_str(&format!("rows: {}\n", stats.rows));
    out.push_str(&format!("total inner steps: {}\n", stats.total_inner_steps));
    match stats.min_objective {
        Some((iter, e)) => out.push_str(&format!("min objective: {e} (iteration {iter})\n")),
        None => out.push_str("min objective: not sampled\n"),
    }
    match stats.last_objective {
        Some((iter, e)) => out.push_str(&format!("last objective: {e} (iteration {iter})\n")),
        None => out.push_str("last objective: not sampled\n"),
    }
    out.push_str(&format!(
        "param norm: {} -> {}\n",
        stats.first_param_norm, stats.last_param_norm
    ));
    match (stats.first_bound, stats.last_bound) {
        (Some(a), Some(b)) => out.push_str(&format!("contraction bound: {a} -> {b}\n")),
        _ => out.push_str("contraction bound: not recorded\n"),
    }
    match stats.steady_state_iteration {
        Some(iter) => out.push_str(&format!("steady-state inner steps from iteration {iter}\n")),
        None => out.push_str("steady-state inner steps: not reached\n"),
    }
    out
}
