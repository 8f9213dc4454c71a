//! Per-iteration solver records, their CSV serialization and summary
//! diagnostics.

use std::fmt::Write as _;

/// Which operator produced an iteration's candidate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    /// Every block accepted the learned candidate.
    Learned,
    /// At least one block fell back to the model-based step.
    Fallback,
    /// A purely model-based baseline iteration.
    Model,
}

impl Branch {
    pub fn as_str(self) -> &'static str {
        match self {
            Branch::Learned => "learned",
            Branch::Fallback => "fallback",
            Branch::Model => "model",
        }
    }
}

/// Outcome of the relaxed-vs-candidate comparison for one block.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UcusChoice {
    Relaxed,
    Candidate,
}

impl UcusChoice {
    pub fn as_char(self) -> char {
        match self {
            UcusChoice::Relaxed => 'w',
            UcusChoice::Candidate => 'v',
        }
    }
}

/// Per-block record from one LBS sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockRecord {
    pub roc_satisfied: bool,
    /// The candidate came from the learned branch (ROC held and the
    /// candidate did not raise `ψ_n`).
    pub learned: bool,
    pub roc_error: f64,
    pub roc_threshold: f64,
    pub ucus: UcusChoice,
    /// `‖v_n − x_n^t‖²`.
    pub candidate_step2: f64,
    /// `ψ_n(x_n^t) − ψ_n(v_n)`.
    pub candidate_drop: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub iter: usize,
    /// `Ψ(x^{t+1})`.
    pub psi: f64,
    /// `‖x^{t+1} − x^t‖²`, total and per block.
    pub step_norm2: f64,
    pub block_step_norm2: Vec<f64>,
    pub branch: Branch,
    /// Present for LBS iterations only.
    pub blocks: Vec<BlockRecord>,
    /// `log10(‖x^{t+1} − x^t‖ / ‖x^t‖)`.
    pub iter_error: f64,
    /// `log10(‖r(x^{t+1}) − gt‖ / ‖gt‖)` for the problem readout `r`.
    pub rec_error: Option<f64>,
    pub time_ms: Option<f64>,
    /// Values for `SolverTrace::extra_columns`.
    pub extras: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverTrace {
    pub solver: String,
    pub block_labels: Vec<String>,
    pub extra_columns: Vec<String>,
    pub initial_psi: f64,
    pub rows: Vec<TraceRow>,
    pub converged: bool,
}

pub const CSV_HEADER: &str =
    "iter,psi,step_norm2,roc_blocks,branch,ucus_choice,iter_error,rec_error,time_ms";

fn fmt_f64(v: f64) -> String {
    format!("{v:e}")
}

impl SolverTrace {
    pub fn new(solver: impl Into<String>, block_labels: Vec<String>, initial_psi: f64) -> Self {
        Self {
            solver: solver.into(),
            block_labels,
            extra_columns: Vec::new(),
            initial_psi,
            rows: Vec::new(),
            converged: false,
        }
    }

    pub fn iterations(&self) -> usize {
        self.rows.len()
    }

    pub fn final_psi(&self) -> f64 {
        self.rows.last().map_or(self.initial_psi, |r| r.psi)
    }

    /// Column names written after the fixed header: per-block step norms for
    /// multi-block problems, then any solver-specific extras.
    pub fn trailing_columns(&self) -> Vec<String> {
        let mut cols = Vec::new();
        if self.block_labels.len() > 1 {
            cols.extend(self.block_labels.iter().map(|l| format!("step_norm2_{l}")));
        }
        cols.extend(self.extra_columns.iter().cloned());
        cols
    }

    /// CSV with the fixed header plus [`Self::trailing_columns`]. Floats use
    /// shortest round-trip scientific notation, so equal traces serialize to
    /// equal bytes.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        for c in self.trailing_columns() {
            out.push(',');
            out.push_str(&c);
        }
        out.push('\n');
        let multi = self.block_labels.len() > 1;
        for r in &self.rows {
            let roc: String = if r.blocks.is_empty() {
                "-".into()
            } else {
                r.blocks
                    .iter()
                    .map(|b| if b.roc_satisfied { '1' } else { '0' })
                    .collect()
            };
            let ucus: String = if r.blocks.is_empty() {
                "-".into()
            } else {
                r.blocks.iter().map(|b| b.ucus.as_char()).collect()
            };
            let _ = write!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                r.iter,
                fmt_f64(r.psi),
                fmt_f64(r.step_norm2),
                roc,
                r.branch.as_str(),
                ucus,
                fmt_f64(r.iter_error),
                r.rec_error.map(fmt_f64).unwrap_or_default(),
                r.time_ms.map(fmt_f64).unwrap_or_default(),
            );
            if multi {
                for v in &r.block_step_norm2 {
                    out.push(',');
                    out.push_str(&fmt_f64(*v));
                }
            }
            for v in &r.extras {
                out.push(',');
                out.push_str(&fmt_f64(*v));
            }
            out.push('\n');
        }
        out
    }
}

/// Relative objective slack allowed by the monotonicity report.
pub const DESCENT_SLACK: f64 = 1e-10;

/// `Ψ_new ≤ Ψ_old` up to [`DESCENT_SLACK`] relative to `max(1, |Ψ_old|)`.
pub fn is_descent(before: f64, after: f64) -> bool {
    if before.is_infinite() && before > 0.0 {
        return true;
    }
    after <= before + DESCENT_SLACK * before.abs().max(1.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceDiagnostics {
    /// `Σ_t ‖x^{t+1} − x^t‖²`.
    pub cumulative_step_norm2: f64,
    /// One bitstring per iteration (`1` = ROC satisfied), LBS only.
    pub roc_pattern: Vec<String>,
    /// Block updates whose candidate came from the model-based fallback.
    pub fallback_count: usize,
    /// Iterations where `Ψ` rose beyond the slack.
    pub descent_violations: Vec<usize>,
    /// Mean `‖x^{t+1} − x^t‖²` over the first / last `min(10, T)` iterations.
    pub first_decade_mean: f64,
    pub last_decade_mean: f64,
}

impl TraceDiagnostics {
    pub fn is_monotone(&self) -> bool {
        self.descent_violations.is_empty()
    }
}

pub fn trace_diagnostics(trace: &SolverTrace) -> TraceDiagnostics {
    let steps: Vec<f64> = trace.rows.iter().map(|r| r.step_norm2).collect();
    let cumulative_step_norm2 = steps.iter().sum();
    let roc_pattern = trace
        .rows
        .iter()
        .filter(|r| !r.blocks.is_empty())
        .map(|r| {
            r.blocks
                .iter()
                .map(|b| if b.roc_satisfied { '1' } else { '0' })
                .collect()
        })
        .collect();
    let fallback_count = trace
        .rows
        .iter()
        .flat_map(|r| r.blocks.iter())
        .filter(|b| !b.learned)
        .count();
    let mut descent_violations = Vec::new();
    let mut prev = trace.initial_psi;
    for r in &trace.rows {
        if !is_descent(prev, r.psi) {
            descent_violations.push(r.iter);
        }
        prev = r.psi;
    }
    let window = steps.len().min(10);
    let mean = |s: &[f64]| {
        if s.is_empty() {
            0.0
        } else {
            s.iter().sum::<f64>() / s.len() as f64
        }
    };
    TraceDiagnostics {
        cumulative_step_norm2,
        roc_pattern,
        fallback_count,
        descent_violations,
        first_decade_mean: mean(&steps[..window]),
        last_decade_mean: mean(&steps[steps.len() - window..]),
    }
}

/// Fraction of block updates that fell back within iterations
/// `[start, end)` (0-based row indices).
pub fn fallback_fraction(trace: &SolverTrace, start: usize, end: usize) -> f64 {
    let rows = &trace.rows[start.min(trace.rows.len())..end.min(trace.rows.len())];
    let total: usize = rows.iter().map(|r| r.blocks.len()).sum();
    if total == 0 {
        return 0.0;
    }
    let fb = rows
        .iter()
        .flat_map(|r| r.blocks.iter())
        .filter(|b| !b.learned)
        .count();
    fb as f64 / total as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(iter: usize, psi: f64, step: f64, roc: &[bool]) -> TraceRow {
        TraceRow {
            iter,
            psi,
            step_norm2: step,
            block_step_norm2: vec![step],
            branch: if roc.iter().all(|b| *b) {
                Branch::Learned
            } else {
                Branch::Fallback
            },
            blocks: roc
                .iter()
                .map(|&s| BlockRecord {
                    roc_satisfied: s,
                    learned: s,
                    roc_error: 0.0,
                    roc_threshold: 0.0,
                    ucus: UcusChoice::Candidate,
                    candidate_step2: step,
                    candidate_drop: 0.0,
                })
                .collect(),
            iter_error: step.sqrt().log10(),
            rec_error: None,
            time_ms: None,
            extras: vec![],
        }
    }

    #[test]
    fn single_iteration_cumulative_sum() {
        let mut t = SolverTrace::new("lbs", vec!["x1".into()], 3.0);
        t.rows.push(row(1, 2.0, 0.25, &[true]));
        let d = trace_diagnostics(&t);
        assert_eq!(d.cumulative_step_norm2, 0.25);
        assert_eq!(d.roc_pattern, vec!["1".to_string()]);
        assert!(d.is_monotone());
    }

    #[test]
    fn violations_and_fallbacks_counted() {
        let mut t = SolverTrace::new("lbs", vec!["u".into(), "v".into()], 3.0);
        t.rows.push(row(1, 2.0, 1.0, &[true, false]));
        t.rows.push(row(2, 2.5, 0.5, &[false, false]));
        t.rows.push(row(3, 2.5, 0.1, &[true, true]));
        let d = trace_diagnostics(&t);
        assert_eq!(d.descent_violations, vec![2]);
        assert_eq!(d.fallback_count, 3);
        assert_eq!(fallback_fraction(&t, 0, 1), 0.5);
        assert_eq!(fallback_fraction(&t, 1, 3), 0.5);
    }

    #[test]
    fn csv_schema() {
        let mut t = SolverTrace::new("lbs", vec!["u".into(), "v_h".into(), "v_v".into()], 1.0);
        let mut r = row(1, 0.5, 0.3, &[true, false, true]);
        r.block_step_norm2 = vec![0.1, 0.1, 0.1];
        t.rows.push(r);
        let csv = t.to_csv();
        let mut lines = csv.lines();
        assert_eq!(
            lines.next().unwrap(),
            format!("{CSV_HEADER},step_norm2_u,step_norm2_v_h,step_norm2_v_v")
        );
        let fields: Vec<&str> = lines.next().unwrap().split(',').collect();
        assert_eq!(fields.len(), 12);
        assert_eq!(fields[3], "101");
        assert_eq!(fields[4], "fallback");
        assert_eq!(fields[5], "vvv");
        assert_eq!(fields[7], "");
    }

    #[test]
    fn infinite_start_counts_as_descent() {
        assert!(is_descent(f64::INFINITY, 10.0));
        assert!(is_descent(1.0, 1.0 + 1e-11));
        assert!(!is_descent(1.0, 1.0 + 1e-9));
    }
}
