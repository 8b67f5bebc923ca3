//! Per-iteration trajectory rows rendered as CSV or a fixed-width table.

use std::fmt::Write as _;

use crate::accounting::millions;
use crate::error::{EveError, Result};
use crate::ids::SolverId;
use crate::model::{FailureKind, RunState};

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub iteration: u32,
    pub tag: Option<String>,
    /// Best error produced in this iteration; `None` when every slot failed.
    pub error: Option<f64>,
    pub best_so_far: f64,
    pub step_teq: f64,
    pub cumulative_teq: f64,
    /// The row's error matched or beat the running minimum before it.
    pub improved: bool,
    pub notes: Vec<String>,
}

pub const CSV_HEADER: &str = "iteration,tag,error,best_so_far,step_teq_M,cumulative_teq_M";

pub fn rows(state: &RunState) -> Result<Vec<ReportRow>> {
    let seed = state.solver(SolverId(0)).ok_or(EveError::NoValidSolver)?;
    let seed_error = seed.error().ok_or(EveError::NoValidSolver)?;
    let mut out = vec![ReportRow {
        iteration: 0,
        tag: seed.tag.clone(),
        error: Some(seed_error),
        best_so_far: seed_error,
        step_teq: 0.0,
        cumulative_teq: 0.0,
        improved: true,
        notes: Vec::new(),
    }];
    let mut running = seed_error;
    for r in &state.iterations {
        let improved = r.best_error.is_some_and(|e| e <= running);
        running = r.best_so_far;
        let notes = r
            .outcomes
            .iter()
            .filter_map(|o| {
                let f = o.failure.as_ref()?;
                let what = match f.kind {
                    FailureKind::BoundaryViolation => "boundary-check violation",
                    FailureKind::TimedOut => "session timeout",
                    FailureKind::MissingDoneFlag => "no completion flag",
                    FailureKind::SessionFailed => "agent session failed",
                    FailureKind::WorkspaceError => "workspace setup failed",
                    FailureKind::IncompleteSolver => "incomplete solver",
                    FailureKind::EvaluationFailed => "evaluation failed",
                };
                Some(format!(
                    "iteration {}: agent {} (slot {}) excluded, {what}",
                    r.iteration, o.agent_id, o.slot
                ))
            })
            .collect();
        out.push(ReportRow {
            iteration: r.iteration,
            tag: r.best_tag.clone(),
            error: r.best_error,
            best_so_far: r.best_so_far,
            step_teq: r.cost.step_teq,
            cumulative_teq: r.cost.cumulative_teq,
            improved,
            notes,
        });
    }
    Ok(out)
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn render_csv(rows: &[ReportRow]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{:.4},{},{}",
            r.iteration,
            csv_field(r.tag.as_deref().unwrap_or("")),
            r.error.map(|e| format!("{e:.4}")).unwrap_or_default(),
            r.best_so_far,
            millions(r.step_teq),
            millions(r.cumulative_teq),
        );
    }
    out
}

/// Improvement rows carry a `*`; failed slots are listed as footnotes.
pub fn render_table(rows: &[ReportRow]) -> String {
    let tag_w = rows
        .iter()
        .map(|r| r.tag.as_deref().unwrap_or("-").len())
        .max()
        .unwrap_or(0)
        .max(3);
    let mut out = format!(
        "{:>4}  {:<tag_w$}  {:>7}  {:>12}  {:>8}  {:>10}\n",
        "Iter", "Tag", "Error", "Best-so-far", "T_eq (M)", "Cum. (M)"
    );
    let mut notes = Vec::new();
    for r in rows {
        let mark = if r.improved { "*" } else { " " };
        let mut refs = String::new();
        for n in &r.notes {
            notes.push(n.clone());
            let _ = write!(refs, " [{}]", notes.len());
        }
        let _ = writeln!(
            out,
            "{:>4}  {:<tag_w$}  {:>7}{mark} {:>12.4}  {:>8}  {:>10}{refs}",
            r.iteration,
            r.tag.as_deref().unwrap_or("-"),
            r.error.map_or_else(|| "-".to_string(), |e| format!("{e:.4}")),
            r.best_so_far,
            millions(r.step_teq),
            millions(r.cumulative_teq),
        );
    }
    if !notes.is_empty() {
        out.push('\n');
        for (i, n) in notes.iter().enumerate() {
            let _ = writeln!(out, "[{}] {n}", i + 1);
        }
    }
    out
}
