use std::fmt::Write as _;
use std::str::FromStr;

use super::EvalReport;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Table,
    Json,
    Csv,
}

impl FromStr for ReportFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "table" => Ok(ReportFormat::Table),
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            other => Err(Error::Config(format!("unknown report format {other:?}"))),
        }
    }
}

pub fn emit_report(report: &EvalReport, format: ReportFormat) -> Result<String> {
    Ok(match format {
        ReportFormat::Table => render_table(std::slice::from_ref(report)),
        ReportFormat::Json => serde_json::to_string_pretty(report)? + "\n",
        ReportFormat::Csv => render_csv(report),
    })
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

fn render_csv(report: &EvalReport) -> String {
    let mut out = String::from("query_id,hit_rank,status,latency_ms\n");
    for (q, o) in &report.per_query {
        let status = match (&o.status, &o.error) {
            (Some(s), _) => s.as_str().to_string(),
            (None, Some(_)) => "error".to_string(),
            (None, None) => String::new(),
        };
        let _ = writeln!(
            out,
            "{},{},{},{}",
            csv_field(q.as_str()),
            opt(o.hit_rank),
            status,
            o.latency_ms.map(|l| format!("{l:.3}")).unwrap_or_default()
        );
    }
    for q in &report.unknown_queries {
        let _ = writeln!(out, "{},,unknown_query,", csv_field(q.as_str()));
    }
    out
}

/// One row per report: method, dataset, direction and R@c in percent.
/// Reports with different cutoffs get the union of columns.
pub fn render_table(reports: &[EvalReport]) -> String {
    let mut cutoffs: Vec<usize> = reports.iter().flat_map(|r| r.cutoffs.iter().copied()).collect();
    cutoffs.sort_unstable();
    cutoffs.dedup();

    let mut header = vec!["method".to_string(), "dataset".into(), "dir".into()];
    header.extend(cutoffs.iter().map(|c| format!("R@{c}")));
    let rows: Vec<Vec<String>> = reports
        .iter()
        .map(|r| {
            let mut row = vec![
                r.method.clone(),
                if r.dataset.is_empty() { "-".into() } else { r.dataset.clone() },
                r.direction.to_string(),
            ];
            row.extend(
                cutoffs
                    .iter()
                    .map(|c| r.aggregate.get(c).map(|v| format!("{:.1}", v * 100.0)).unwrap_or_else(|| "-".into())),
            );
            row
        })
        .collect();

    let widths: Vec<usize> = (0..header.len())
        .map(|i| rows.iter().map(|r| r[i].len()).chain([header[i].len()]).max().unwrap_or(0))
        .collect();
    let line = |cells: &[String]| {
        let padded: Vec<String> = cells
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(i, (c, w))| if i < 3 { format!("{c:<w$}") } else { format!("{c:>w$}") })
            .collect();
        padded.join(" | ").trim_end().to_string() + "\n"
    };
    let mut out = line(&header);
    let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
    out.push_str(&rule.join("-+-"));
    out.push('\n');
    for r in &rows {
        out.push_str(&line(r));
    }
    out
}

/// Combined CSV for a sweep: one row per axis value.
pub fn render_sweep_csv(axis: &str, points: &[(String, EvalReport)]) -> String {
    let mut cutoffs: Vec<usize> = points.iter().flat_map(|(_, r)| r.cutoffs.iter().copied()).collect();
    cutoffs.sort_unstable();
    cutoffs.dedup();
    let mut out = String::from("axis,value,method,direction");
    for c in &cutoffs {
        let _ = write!(out, ",R@{c}");
    }
    out.push_str(",mean_latency_ms,fingerprint\n");
    for (value, r) in points {
        let _ = write!(out, "{axis},{},{},{}", csv_field(value), csv_field(&r.method), r.direction);
        for c in &cutoffs {
            let _ = write!(out, ",{}", opt(r.aggregate.get(c)));
        }
        let _ = writeln!(
            out,
            ",{},{}",
            r.mean_latency_ms.map(|l| format!("{l:.3}")).unwrap_or_default(),
            r.config_fingerprint
        );
    }
    out
}
