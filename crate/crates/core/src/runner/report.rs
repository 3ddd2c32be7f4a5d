//! Summary rows and the method comparison table.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// One method's aggregate over replicate seeds. Standard deviations are
/// population (divide by n), as the column name says.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub method: String,
    pub runs_requested: usize,
    pub runs_completed: usize,
    pub incomplete: bool,
    pub accuracy_mean: Option<f64>,
    pub accuracy_std_pop: Option<f64>,
    pub response_length_mean: Option<f64>,
}

pub fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    for row in rows {
        w.serialize(row).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_summary(path: &Path) -> Result<Vec<SummaryRow>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    r.deserialize().map(|row| row.map_err(|e| csv_err(path, e))).collect()
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    Error::Parse { path: path.to_path_buf(), message: e.to_string() }
}

fn method_rank(method: &str) -> u8 {
    match method {
        "kl-baseline" => 0,
        "bregman-kl" => 1,
        "prob-l2" => 2,
        m if m.starts_with("alpha-") => 3,
        "neural-fixed" => 4,
        "neural-random-init" => 5,
        "neural-es" => 6,
        _ => 7,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub text: String,
    pub csv: String,
}

fn fmt_opt(x: Option<f64>, digits: usize) -> String {
    x.map(|v| format!("{v:.digits$}")).unwrap_or_else(|| "-".into())
}

/// Rows in canonical method order (KL baseline, ProbL2, alpha, neural
/// variants, then anything else by name). Methods with no summary are
/// simply absent.
pub fn compare_report(rows: &[SummaryRow]) -> Result<Report> {
    if rows.is_empty() {
        return Err(Error::InvalidConfig("report needs at least one summary".into()));
    }
    let mut ordered: Vec<&SummaryRow> = rows.iter().collect();
    ordered.sort_by(|a, b| method_rank(&a.method).cmp(&method_rank(&b.method)).then_with(|| a.method.cmp(&b.method)));

    let width = ordered.iter().map(|r| r.method.len()).max().unwrap_or(0).max("method".len());
    let mut text = String::new();
    writeln!(text, "{:<width$}  {:>17}  {:>11}  {:>5}", "method", "accuracy", "mean length", "runs").unwrap();
    let mut csv = String::from("method,accuracy_mean,accuracy_std_pop,response_length_mean,runs_completed,runs_requested,incomplete\n");
    let mut any_incomplete = false;
    for r in &ordered {
        let acc = match (r.accuracy_mean, r.accuracy_std_pop) {
            (Some(m), Some(s)) => format!("{m:.3} ± {s:.3}"),
            _ => "-".into(),
        };
        let flag = if r.incomplete { "*" } else { "" };
        any_incomplete |= r.incomplete;
        writeln!(
            text,
            "{:<width$}  {:>17}  {:>11}  {:>5}{flag}",
            r.method,
            acc,
            fmt_opt(r.response_length_mean, 2),
            format!("{}/{}", r.runs_completed, r.runs_requested)
        )
        .unwrap();
        writeln!(
            csv,
            "{},{},{},{},{},{},{}",
            r.method,
            fmt_opt(r.accuracy_mean, 6),
            fmt_opt(r.accuracy_std_pop, 6),
            fmt_opt(r.response_length_mean, 6),
            r.runs_completed,
            r.runs_requested,
            r.incomplete
        )
        .unwrap();
    }
    if any_incomplete {
        text.push_str("* incomplete: fewer runs finished than seeds requested\n");
    }
    text.push_str("accuracy is mean ± population std over seeds\n");
    Ok(Report { text, csv })
}
