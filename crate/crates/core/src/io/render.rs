//! Report rendering: markdown tables with "mean (ci)" cells, canonical JSON
//! and flat CSV.

use std::fmt::Write as _;
use std::str::FromStr;

use super::tensor::format_f64;
use super::IoError;
use crate::stats::{
    best_per_metric, AuditResult, CellStyle, Direction, MetricKind, MetricReport, SummaryStat,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Markdown,
    Json,
    Csv,
}

impl FromStr for ReportFormat {
    type Err = IoError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "md" | "markdown" => Ok(ReportFormat::Markdown),
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            other => Err(IoError::UnknownFormat(other.to_string())),
        }
    }
}

impl ReportFormat {
    pub fn extension(self) -> &'static str {
        match self {
            ReportFormat::Markdown => "md",
            ReportFormat::Json => "json",
            ReportFormat::Csv => "csv",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RenderedReport {
    pub format: ReportFormat,
    pub content: String,
}

/// One table cell: `16.07 (0.18)`, `93.13% (0.50)` or a bare point value.
pub fn format_cell(kind: &MetricKind, stat: &SummaryStat) -> String {
    let (scale, suffix) = match kind.cell_style() {
        CellStyle::Percent => (100.0, "%"),
        CellStyle::Hundredfold => (100.0, ""),
        CellStyle::Real | CellStyle::Point => (1.0, ""),
    };
    let mean = stat.mean * scale;
    match (kind.cell_style(), stat.ci95_halfwidth) {
        (CellStyle::Point, _) | (_, None) => format!("{mean:.2}{suffix}"),
        (_, Some(ci)) => format!("{mean:.2}{suffix} ({:.2})", ci * scale),
    }
}

fn union_kinds(reports: &[MetricReport]) -> Vec<MetricKind> {
    let mut kinds: Vec<MetricKind> = reports
        .iter()
        .flat_map(MetricReport::metric_kinds)
        .collect();
    kinds.sort();
    kinds.dedup();
    kinds
}

fn markdown_table(reports: &[MetricReport], first_header: &str) -> String {
    let kinds = union_kinds(reports);
    let best = if reports.len() >= 2 {
        best_per_metric(reports)
    } else {
        Default::default()
    };
    let mut out = String::new();
    let _ = write!(out, "| {first_header} |");
    for k in &kinds {
        let _ = write!(out, " {} |", k.header());
    }
    out.push_str("\n|---|");
    for _ in &kinds {
        out.push_str("---|");
    }
    out.push('\n');
    for r in reports {
        let _ = write!(out, "| {} |", r.method_name);
        for k in &kinds {
            let name = k.name();
            let cell = match r.entries.get(&name) {
                Some(s) => {
                    let text = format_cell(k, s);
                    // every method tying the best mean is highlighted
                    let best_mean = best
                        .get(&name)
                        .and_then(|m| reports.iter().find(|o| &o.method_name == m))
                        .map(|o| o.entries[&name].mean);
                    if best_mean == Some(s.mean) {
                        format!("**{text}**")
                    } else {
                        text
                    }
                }
                None => "n/a".into(),
            };
            let _ = write!(out, " {cell} |");
        }
        out.push('\n');
    }
    out
}

pub fn render_markdown(reports: &[MetricReport]) -> String {
    markdown_table(reports, "Method")
}

pub fn render_json(reports: &[MetricReport]) -> Result<String, IoError> {
    let mut text = if reports.len() == 1 {
        serde_json::to_string_pretty(&reports[0])
    } else {
        serde_json::to_string_pretty(reports)
    }
    .map_err(|e| IoError::Json(e.to_string()))?;
    text.push('\n');
    Ok(text)
}

pub fn render_csv(reports: &[MetricReport]) -> String {
    let mut out = String::from("method,metric,mean,ci95_halfwidth,n,range_low,range_high\n");
    for r in reports {
        for k in r.metric_kinds() {
            let s = &r.entries[&k.name()];
            let ci = s.ci95_halfwidth.map(format_f64).unwrap_or_default();
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                csv_field(&r.method_name),
                csv_field(&k.name()),
                format_f64(s.mean),
                ci,
                s.n,
                format_f64(r.normalization_range.0),
                format_f64(r.normalization_range.1)
            );
        }
    }
    out
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn render_report(
    reports: &[MetricReport],
    format: ReportFormat,
) -> Result<RenderedReport, IoError> {
    if reports.is_empty() {
        return Err(IoError::EmptyReportSet);
    }
    let content = match format {
        ReportFormat::Markdown => render_markdown(reports),
        ReportFormat::Json => render_json(reports)?,
        ReportFormat::Csv => render_csv(reports),
    };
    Ok(RenderedReport { format, content })
}

/// Parses a JSON report file holding one report or an array of reports.
pub fn parse_reports(text: &str) -> Result<Vec<MetricReport>, IoError> {
    let value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| IoError::Json(e.to_string()))?;
    if value.is_array() {
        serde_json::from_value(value).map_err(|e| IoError::Json(e.to_string()))
    } else {
        serde_json::from_value(value)
            .map(|r| vec![r])
            .map_err(|e| IoError::Json(e.to_string()))
    }
}

/// The `k` best and `k` worst samples of every per-sample metric, for
/// visual inspection of the extremes.
pub fn render_extremes(reports: &[MetricReport], k: usize) -> String {
    let mut out = String::from(
        "| Method | Metric | Rank | Kind | Sample | Score |\n|---|---|---|---|---|---|\n",
    );
    for r in reports {
        let mut metrics: Vec<(MetricKind, &crate::metrics::PerSampleScores)> = r
            .per_sample
            .iter()
            .filter_map(|(name, s)| MetricKind::parse(name).ok().map(|kind| (kind, s)))
            .collect();
        metrics.sort_by(|a, b| a.0.cmp(&b.0));
        for (kind, s) in metrics {
            let mut idx: Vec<usize> = (0..s.values.len()).collect();
            idx.sort_by(|&a, &b| {
                s.values[a]
                    .total_cmp(&s.values[b])
                    .then(s.sample_ids[a].cmp(&s.sample_ids[b]))
            });
            let (low, high) = match kind.direction() {
                Some(Direction::HigherIsBetter) => ("worst", "best"),
                Some(Direction::LowerIsBetter) => ("best", "worst"),
                None => ("lowest", "highest"),
            };
            let take = k.min(idx.len());
            let mut rows: Vec<(&str, usize, usize)> = idx[..take]
                .iter()
                .enumerate()
                .map(|(rank, &i)| (low, rank + 1, i))
                .collect();
            rows.extend(
                idx.iter()
                    .rev()
                    .take(take)
                    .enumerate()
                    .map(|(rank, &i)| (high, rank + 1, i)),
            );
            if kind.direction() == Some(Direction::HigherIsBetter) {
                rows.rotate_left(take);
            }
            for (label, rank, i) in rows {
                let _ = writeln!(
                    out,
                    "| {} | {} | {} | {} | {} | {} |",
                    r.method_name,
                    kind.name(),
                    rank,
                    label,
                    s.sample_ids[i],
                    format_f64(s.values[i])
                );
            }
        }
    }
    out
}

fn range_label(range: (f64, f64)) -> String {
    format!("[{}, {}]", format_f64(range.0), format_f64(range.1))
}

fn set_range(reports: &[MetricReport]) -> String {
    let mut labels: Vec<String> = reports
        .iter()
        .map(|r| range_label(r.normalization_range))
        .collect();
    labels.dedup();
    labels.join(" / ")
}

/// Both report sets stacked in one table, then the per-metric agreement and
/// the EN scaling check.
pub fn render_audit(
    reports_a: &[MetricReport],
    reports_b: &[MetricReport],
    audit: &AuditResult,
) -> String {
    let mut out = String::new();
    for (tag, set) in [("A", reports_a), ("B", reports_b)] {
        let _ = writeln!(out, "### Set {tag}: range {}\n", set_range(set));
        out.push_str(&markdown_table(set, "Method"));
        out.push('\n');
    }
    out.push_str("| Metric | Best (A) | Best (B) | Agree |\n|---|---|---|---|\n");
    for g in &audit.agreements {
        let agree = if g.agree { "yes" } else { "**NO**" };
        let _ = writeln!(
            out,
            "| {} | {} | {} | {} |",
            g.metric, g.best_a, g.best_b, agree
        );
    }
    if !audit.en_scaling.is_empty() {
        out.push_str("\n| Method | EN (A) | EN (B) | Width ratio | EN ratio | Scales |\n|---|---|---|---|---|---|\n");
        for row in &audit.en_scaling {
            let ok = if row.pass { "yes" } else { "**NO**" };
            let _ = writeln!(
                out,
                "| {} | {} | {} | {} | {} | {} |",
                row.method,
                format_f64(row.en_a),
                format_f64(row.en_b),
                format_f64(row.expected_ratio),
                format_f64(row.observed_ratio),
                ok
            );
        }
    }
    out
}
