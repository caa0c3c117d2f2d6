use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{fit_rate, RunOptions};
use crate::solver::{Scheme, DEFAULT_PICARD_MAX_ITERS, DEFAULT_PICARD_TOL};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    #[serde(rename = "N")]
    pub n: usize,
    pub err_y: Option<f64>,
    pub err_z: Option<f64>,
    /// Wall-clock seconds of the backward loop, 3 significant digits.
    pub seconds: Option<f64>,
    pub failure: Option<String>,
}

impl ReportRow {
    pub fn failed(&self) -> bool {
        self.failure.is_some()
    }
}

/// Configuration echo. The timestamp is the only non-deterministic field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMetadata {
    pub config: Scheme,
    pub fit_skip: usize,
    pub threads: usize,
    pub picard_tol: f64,
    pub picard_max_iters: usize,
    pub timestamp: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub problem: String,
    pub scheme: String,
    pub rows: Vec<ReportRow>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cr_y: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cr_z: Option<f64>,
    pub metadata: ReportMetadata,
}

impl ConvergenceReport {
    /// Builds a report, sorting rows by `N` and fitting rates over the
    /// successful rows after the first `opts.fit_skip`.
    pub fn new(
        problem: String,
        scheme: Scheme,
        mut rows: Vec<ReportRow>,
        opts: RunOptions,
        timestamp: String,
    ) -> Self {
        rows.sort_by_key(|r| r.n);
        let fitted: Vec<&ReportRow> = rows
            .iter()
            .skip(opts.fit_skip)
            .filter(|r| !r.failed())
            .collect();
        let rate = |pick: fn(&ReportRow) -> Option<f64>| {
            let (errs, ns): (Vec<f64>, Vec<usize>) =
                fitted.iter().filter_map(|r| Some((pick(r)?, r.n))).unzip();
            if errs.len() < 2 {
                return None;
            }
            fit_rate(&errs, &ns).ok()
        };
        let cr_y = rate(|r| r.err_y);
        let cr_z = rate(|r| r.err_z);
        Self {
            problem,
            scheme: scheme.describe(),
            rows,
            cr_y,
            cr_z,
            metadata: ReportMetadata {
                config: scheme,
                fit_skip: opts.fit_skip,
                threads: opts.threads,
                picard_tol: DEFAULT_PICARD_TOL,
                picard_max_iters: DEFAULT_PICARD_MAX_ITERS,
                timestamp,
            },
        }
    }

    pub fn any_failed(&self) -> bool {
        self.rows.iter().any(ReportRow::failed)
    }

    pub fn row(&self, n: usize) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.n == n)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
    Markdown,
}

impl FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            "markdown" | "md" => Ok(Format::Markdown),
            other => Err(format!("unknown format `{other}` (csv, json, markdown)")),
        }
    }
}

#[derive(Serialize)]
struct CsvRow {
    #[serde(rename = "N")]
    n: usize,
    err_y: Option<f64>,
    err_z: Option<f64>,
    seconds: Option<f64>,
}

pub fn emit_report(report: &ConvergenceReport, format: Format) -> String {
    match format {
        Format::Csv => emit_csv(report),
        Format::Json => serde_json::to_string_pretty(report).expect("report is serializable") + "\n",
        Format::Markdown => emit_markdown(report),
    }
}

fn emit_csv(report: &ConvergenceReport) -> String {
    let mut writer = csv::Writer::from_writer(Vec::new());
    for r in &report.rows {
        writer
            .serialize(CsvRow {
                n: r.n,
                err_y: r.err_y,
                err_z: r.err_z,
                seconds: r.seconds,
            })
            .expect("in-memory csv write");
    }
    if report.rows.is_empty() {
        writer
            .write_record(["N", "err_y", "err_z", "seconds"])
            .expect("in-memory csv write");
    }
    String::from_utf8(writer.into_inner().expect("in-memory csv flush")).expect("csv is utf-8")
}

/// `1.064E-04` style scientific notation.
fn sci(x: f64) -> String {
    let s = format!("{x:.3E}");
    match s.split_once('E') {
        Some((mantissa, exp)) => {
            let e: i32 = exp.parse().unwrap_or(0);
            let sign = if e < 0 { '-' } else { '+' };
            format!("{mantissa}E{sign}{:02}", e.abs())
        }
        None => s,
    }
}

fn column_label(n: usize) -> String {
    if n.is_power_of_two() && n > 1 {
        format!("N=2^{}", n.trailing_zeros())
    } else {
        format!("N={n}")
    }
}

fn emit_markdown(report: &ConvergenceReport) -> String {
    let mut out = String::new();
    let _ = write!(out, "| {} / {} |", report.problem, report.scheme);
    for r in &report.rows {
        let _ = write!(out, " {} |", column_label(r.n));
    }
    out.push_str(" CR |\n|---|");
    for _ in &report.rows {
        out.push_str("---|");
    }
    out.push_str("---|\n");

    let mut line = |label: &str, cell: &dyn Fn(&ReportRow) -> String, rate: Option<f64>| {
        let _ = write!(out, "| {label} |");
        for r in &report.rows {
            let _ = write!(out, " {} |", cell(r));
        }
        match rate {
            Some(cr) => {
                let _ = writeln!(out, " {cr:.2} |");
            }
            None => out.push_str("  |\n"),
        }
    };
    let err_cell = |v: Option<f64>| v.map(sci).unwrap_or_else(|| "failed".into());
    line("Err_y", &|r| err_cell(r.err_y), report.cr_y);
    line("Err_z", &|r| err_cell(r.err_z), report.cr_z);
    line(
        "RT",
        &|r| r.seconds.map(|s| format!("{s}s")).unwrap_or_else(|| "-".into()),
        None,
    );
    out
}
