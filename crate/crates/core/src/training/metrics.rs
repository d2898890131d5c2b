//! Per-epoch metrics rows and their comma-separated files.
//!
//! `metrics.csv` holds only values that are a pure function of the run
//! configuration, so two runs with the same seed produce identical bytes.
//! Wall-clock timings go to a separate `timing.csv`.

use std::fmt::Write as _;
use std::fs::OpenOptions;
use std::io::Write;
use std::path::Path;

pub const METRICS_HEADER: &str = "epoch,train_loss,eval_loss,task_metric";
pub const TIMING_HEADER: &str = "epoch,wall_seconds";

#[derive(Clone, Debug, PartialEq)]
pub struct MetricsRow {
    pub epoch: usize,
    pub train_loss: f64,
    pub eval_loss: Option<f64>,
    /// Acquisition accuracy or closed-loop hit rate.
    pub task_metric: Option<f64>,
    pub wall_seconds: f64,
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl MetricsRow {
    pub fn csv_line(&self) -> String {
        format!("{},{},{},{}", self.epoch, self.train_loss, opt(self.eval_loss), opt(self.task_metric))
    }

    pub fn timing_line(&self) -> String {
        format!("{},{:.6}", self.epoch, self.wall_seconds)
    }
}

pub fn render_metrics(rows: &[MetricsRow]) -> String {
    let mut out = String::from(METRICS_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(out, "{}", r.csv_line());
    }
    out
}

fn append_line(path: &Path, header: &str, line: &str) -> std::io::Result<()> {
    let fresh = !path.exists();
    let mut f = OpenOptions::new().create(true).append(true).open(path)?;
    if fresh {
        writeln!(f, "{header}")?;
    }
    writeln!(f, "{line}")
}

/// Append one row to `metrics.csv` and `timing.csv` in `dir`, writing
/// headers on first use.
pub fn append_row(dir: &Path, row: &MetricsRow) -> std::io::Result<()> {
    append_line(&dir.join("metrics.csv"), METRICS_HEADER, &row.csv_line())?;
    append_line(&dir.join("timing.csv"), TIMING_HEADER, &row.timing_line())
}

/// Parse a metrics file back into `(epoch, train_loss, eval_loss, task_metric)`.
pub fn parse_metrics(text: &str) -> Result<Vec<MetricsRow>, String> {
    let mut lines = text.lines();
    if lines.next() != Some(METRICS_HEADER) {
        return Err("missing metrics header".into());
    }
    let field = |s: &str| -> Result<Option<f64>, String> {
        if s.is_empty() {
            Ok(None)
        } else {
            s.parse().map(Some).map_err(|e| format!("{s:?}: {e}"))
        }
    };
    lines
        .map(|line| {
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != 4 {
                return Err(format!("expected 4 columns in {line:?}"));
            }
            Ok(MetricsRow {
                epoch: cols[0].parse().map_err(|e| format!("{e}"))?,
                train_loss: field(cols[1])?.ok_or("empty train_loss")?,
                eval_loss: field(cols[2])?,
                task_metric: field(cols[3])?,
                wall_seconds: 0.0,
            })
        })
        .collect()
}
