//! Summary statistics, per-method report assembly, ranking and the
//! cross-normalization audit.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{compute_validity_mask, filter_by_mask, EvaluationBundle, ValidityMode};
use crate::kahan::KahanSum;
use crate::metrics::{self, MetricConfig, MetricError, OracleMode, PerSampleScores, Proportion};

/// Two-sided 95% normal quantile.
pub const Z_95: f64 = 1.96;
/// Relative tolerance for the elastic-net scaling check of the audit.
pub const EN_SCALING_TOL: f64 = 1e-9;
pub const CI_METHOD: &str = "normal approximation, z = 1.96";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("cannot summarize an empty sample")]
    EmptyInput,
    #[error("{successes} successes out of {n} is not a valid proportion")]
    OutOfRange { successes: usize, n: usize },
    #[error("ranking needs at least 2 reports, got {0}")]
    TooFewReports(usize),
    #[error("reports disagree on available metrics: {0}")]
    MetricMismatch(String),
    #[error("report sets cover different methods: {0}")]
    MethodSetMismatch(String),
    #[error("unknown metric `{0}`")]
    UnknownMetric(String),
    #[error(transparent)]
    Metric(#[from] MetricError),
}

impl From<crate::data::DataError> for StatsError {
    fn from(e: crate::data::DataError) -> Self {
        StatsError::Metric(MetricError::Data(e))
    }
}

/// Mean, 95% half-width (absent below two samples) and sample count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SummaryStat {
    pub mean: f64,
    pub ci95_halfwidth: Option<f64>,
    pub n: usize,
}

/// Mean with a normal-approximation 95% interval.
///
/// Values are summed in ascending order, so any permutation of the input
/// yields the same bits.
pub fn summarize_mean(values: &[f64]) -> Result<SummaryStat, StatsError> {
    if values.is_empty() {
        return Err(StatsError::EmptyInput);
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let mean = sorted.iter().copied().collect::<KahanSum>().total() / n as f64;
    if n < 2 {
        return Ok(SummaryStat {
            mean,
            ci95_halfwidth: None,
            n,
        });
    }
    let halfwidth = if sorted[0] == sorted[n - 1] {
        0.0
    } else {
        let ss = sorted
            .iter()
            .map(|v| (v - mean) * (v - mean))
            .collect::<KahanSum>()
            .total();
        let sd = (ss / (n - 1) as f64).sqrt();
        Z_95 * sd / (n as f64).sqrt()
    };
    Ok(SummaryStat {
        mean,
        ci95_halfwidth: Some(halfwidth),
        n,
    })
}

pub fn summarize_proportion(successes: usize, n: usize) -> Result<SummaryStat, StatsError> {
    if n == 0 || successes > n {
        return Err(StatsError::OutOfRange { successes, n });
    }
    let p = successes as f64 / n as f64;
    let halfwidth = Z_95 * (p * (1.0 - p) / n as f64).sqrt();
    Ok(SummaryStat {
        mean: p,
        ci95_halfwidth: Some(halfwidth),
        n,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Direction {
    LowerIsBetter,
    HigherIsBetter,
}

/// How a metric's value is printed in tables.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CellStyle {
    /// "16.07 (0.18)"
    Real,
    /// "93.13% (0.50)"
    Percent,
    /// 100 × value, "0.55 (0.01)"
    Hundredfold,
    /// no interval, "98.35"
    Point,
}

/// Metric identifiers, in canonical column order.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum MetricKind {
    Tcv,
    L1,
    L2,
    En,
    Im1,
    Im2,
    Fid,
    Oracle,
    Lvs(String),
}

impl MetricKind {
    pub const FIXED: [MetricKind; 8] = [
        MetricKind::Tcv,
        MetricKind::L1,
        MetricKind::L2,
        MetricKind::En,
        MetricKind::Im1,
        MetricKind::Im2,
        MetricKind::Fid,
        MetricKind::Oracle,
    ];

    pub fn name(&self) -> String {
        match self {
            MetricKind::Tcv => "TCV".into(),
            MetricKind::L1 => "L1".into(),
            MetricKind::L2 => "L2".into(),
            MetricKind::En => "EN".into(),
            MetricKind::Im1 => "IM1".into(),
            MetricKind::Im2 => "IM2".into(),
            MetricKind::Fid => "FID".into(),
            MetricKind::Oracle => "Oracle".into(),
            MetricKind::Lvs(label) => format!("LVS[{label}]"),
        }
    }

    /// Accepts report names ("IM2", "LVS[smile]") case-insensitively, plus
    /// `lvs:label` as written on the command line.
    pub fn parse(s: &str) -> Result<MetricKind, StatsError> {
        let t = s.trim();
        if let Some(label) = t.strip_prefix("LVS[").and_then(|r| r.strip_suffix(']')) {
            return Ok(MetricKind::Lvs(label.to_string()));
        }
        if let Some(label) = t.strip_prefix("lvs:").or_else(|| t.strip_prefix("LVS:")) {
            return Ok(MetricKind::Lvs(label.to_string()));
        }
        MetricKind::FIXED
            .iter()
            .find(|k| k.name().eq_ignore_ascii_case(t))
            .cloned()
            .ok_or_else(|| StatsError::UnknownMetric(s.to_string()))
    }

    /// Ranking direction; `None` for LVS, whose preferred direction depends on the label.
    pub fn direction(&self) -> Option<Direction> {
        match self {
            MetricKind::Tcv | MetricKind::Oracle => Some(Direction::HigherIsBetter),
            MetricKind::Lvs(_) => None,
            _ => Some(Direction::LowerIsBetter),
        }
    }

    pub fn cell_style(&self) -> CellStyle {
        match self {
            MetricKind::Tcv | MetricKind::Oracle => CellStyle::Percent,
            MetricKind::Im2 => CellStyle::Hundredfold,
            MetricKind::Fid => CellStyle::Point,
            _ => CellStyle::Real,
        }
    }

    /// Column header as printed in markdown tables.
    pub fn header(&self) -> String {
        match self {
            MetricKind::Im2 => "100·IM2".into(),
            other => other.name(),
        }
    }
}

/// Registry direction for a metric name, if it is ranked at all.
pub fn direction_of(metric_name: &str) -> Option<Direction> {
    MetricKind::parse(metric_name)
        .ok()
        .and_then(|k| k.direction())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMetadata {
    pub validity_mode: ValidityMode,
    pub valid_only: bool,
    pub n_total: usize,
    pub n_valid: usize,
    pub ci_method: String,
}

/// Per-method summaries of every computed metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub method_name: String,
    pub normalization_range: (f64, f64),
    pub entries: BTreeMap<String, SummaryStat>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub per_sample: BTreeMap<String, PerSampleScores>,
    pub config: MetricConfig,
    pub metadata: ReportMetadata,
}

impl MetricReport {
    pub fn mean(&self, metric: &str) -> Option<f64> {
        self.entries.get(metric).map(|s| s.mean)
    }

    /// Entry keys in canonical column order.
    pub fn metric_kinds(&self) -> Vec<MetricKind> {
        let mut kinds: Vec<MetricKind> = self
            .entries
            .keys()
            .filter_map(|k| MetricKind::parse(k).ok())
            .collect();
        kinds.sort();
        kinds
    }
}

/// Which metrics to compute.
#[derive(Debug, Clone, PartialEq)]
pub enum MetricSelection {
    /// Everything the bundle's roles support.
    Available,
    /// Exactly these; a missing role is an error.
    Only(Vec<MetricKind>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationRequest {
    pub metrics: MetricSelection,
    /// Score only valid counterfactuals (TCV always uses the full bundle).
    pub valid_only: bool,
    pub keep_per_sample: bool,
}

impl Default for EvaluationRequest {
    fn default() -> Self {
        Self {
            metrics: MetricSelection::Available,
            valid_only: true,
            keep_per_sample: true,
        }
    }
}

/// Metrics the bundle can support under `cfg`.
pub fn available_metrics(b: &EvaluationBundle, cfg: &MetricConfig) -> Vec<MetricKind> {
    let mut out = vec![MetricKind::L1, MetricKind::L2, MetricKind::En];
    let mode = cfg.validity_mode.resolve(b);
    if mode == ValidityMode::ClassChange || b.targets.is_some() {
        out.push(MetricKind::Tcv);
    }
    if b.reconstructions.is_some() {
        out.extend([MetricKind::Im1, MetricKind::Im2]);
    }
    if b.embeddings_reference.is_some() && b.embeddings_counterfactuals.is_some() {
        out.push(MetricKind::Fid);
    }
    if b.oracle_probs_counterfactuals.is_some()
        && (cfg.oracle_mode == OracleMode::Agreement || b.targets.is_some())
    {
        out.push(MetricKind::Oracle);
    }
    out.extend(
        b.label_oracles
            .iter()
            .map(|l| MetricKind::Lvs(l.label_name.clone())),
    );
    out.sort();
    out.dedup();
    out
}

fn proportion_stat(p: Proportion) -> Result<SummaryStat, StatsError> {
    summarize_proportion(p.successes, p.n)
}

/// Scores one bundle: TCV on the full bundle, everything else on the valid
/// subset when `valid_only` is set.
pub fn evaluate_bundle(
    b: &EvaluationBundle,
    cfg: &MetricConfig,
    req: &EvaluationRequest,
) -> Result<MetricReport, StatsError> {
    cfg.validate()?;
    let mut kinds = match &req.metrics {
        MetricSelection::Available => available_metrics(b, cfg),
        MetricSelection::Only(list) => list.clone(),
    };
    kinds.sort();
    kinds.dedup();

    let mode = cfg.validity_mode.resolve(b);
    let mask = compute_validity_mask(b, mode)?;
    let scored = if req.valid_only {
        filter_by_mask(b, &mask)?
    } else {
        b.clone()
    };

    let mut entries = BTreeMap::new();
    let mut per_sample = BTreeMap::new();
    for kind in &kinds {
        let name = kind.name();
        let scores: Option<PerSampleScores> = match kind {
            MetricKind::Tcv => {
                entries.insert(name, summarize_proportion(mask.valid_count, mask.len())?);
                None
            }
            MetricKind::Oracle => {
                entries.insert(name, proportion_stat(metrics::oracle_score(&scored, cfg)?)?);
                None
            }
            MetricKind::Fid => {
                let value = metrics::fid_for_bundle(&scored, cfg)?;
                entries.insert(
                    name,
                    SummaryStat {
                        mean: value,
                        ci95_halfwidth: None,
                        n: scored.sample_count(),
                    },
                );
                None
            }
            MetricKind::L1 => Some(metrics::l1_scores(&scored)?),
            MetricKind::L2 => Some(metrics::l2_scores(&scored)?),
            MetricKind::En => Some(metrics::en_scores(&scored)?),
            MetricKind::Im1 => Some(metrics::im1_scores(&scored, cfg)?),
            MetricKind::Im2 => Some(metrics::im2_scores(&scored, cfg)?),
            MetricKind::Lvs(label) => Some(metrics::lvs(&scored, label, cfg)?),
        };
        if let Some(s) = scores {
            entries.insert(s.metric_name.clone(), summarize_mean(&s.values)?);
            if req.keep_per_sample {
                per_sample.insert(s.metric_name.clone(), s);
            }
        }
    }

    Ok(MetricReport {
        method_name: b.method_name.clone(),
        normalization_range: b.normalization_range,
        entries,
        per_sample,
        config: *cfg,
        metadata: ReportMetadata {
            validity_mode: mode,
            valid_only: req.valid_only,
            n_total: b.sample_count(),
            n_valid: mask.valid_count,
            ci_method: CI_METHOD.into(),
        },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRanking {
    pub metric: String,
    pub direction: Direction,
    /// Method names, best first.
    pub order: Vec<String>,
    pub best_method: String,
    /// Two or more methods share a mean; ties are broken by method name.
    pub tie: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingTable {
    pub metrics: Vec<MetricRanking>,
}

impl RankingTable {
    pub fn best(&self, metric: &str) -> Option<&str> {
        self.metrics
            .iter()
            .find(|m| m.metric == metric)
            .map(|m| m.best_method.as_str())
    }
}

fn ranked_names(r: &MetricReport) -> BTreeSet<String> {
    r.entries
        .keys()
        .filter(|k| direction_of(k).is_some())
        .cloned()
        .collect()
}

fn order_by_direction(
    metric: &str,
    direction: Direction,
    reports: &[&MetricReport],
) -> MetricRanking {
    let mut rows: Vec<(f64, &str)> = reports
        .iter()
        .map(|r| (r.entries[metric].mean, r.method_name.as_str()))
        .collect();
    rows.sort_by(|a, b| {
        let by_value = match direction {
            Direction::LowerIsBetter => a.0.total_cmp(&b.0),
            Direction::HigherIsBetter => b.0.total_cmp(&a.0),
        };
        by_value.then_with(|| a.1.cmp(b.1))
    });
    let tie = rows.windows(2).any(|w| w[0].0 == w[1].0);
    MetricRanking {
        metric: metric.to_string(),
        direction,
        best_method: rows[0].1.to_string(),
        order: rows.into_iter().map(|(_, m)| m.to_string()).collect(),
        tie,
    }
}

/// Orders methods per ranked metric (LVS is reported but never ranked).
pub fn rank_methods(reports: &[MetricReport]) -> Result<RankingTable, StatsError> {
    if reports.len() < 2 {
        return Err(StatsError::TooFewReports(reports.len()));
    }
    let names = ranked_names(&reports[0]);
    for r in &reports[1..] {
        let other = ranked_names(r);
        if other != names {
            let diff: Vec<_> = names.symmetric_difference(&other).cloned().collect();
            return Err(StatsError::MetricMismatch(format!(
                "`{}` vs `{}` differ on {}",
                reports[0].method_name,
                r.method_name,
                diff.join(", ")
            )));
        }
    }
    let refs: Vec<&MetricReport> = reports.iter().collect();
    let mut kinds: Vec<MetricKind> = names
        .iter()
        .filter_map(|n| MetricKind::parse(n).ok())
        .collect();
    kinds.sort();
    let metrics = kinds
        .iter()
        .map(|k| order_by_direction(&k.name(), k.direction().expect("ranked metric"), &refs))
        .collect();
    Ok(RankingTable { metrics })
}

/// Best method per ranked metric among whichever reports carry it.
pub fn best_per_metric(reports: &[MetricReport]) -> BTreeMap<String, String> {
    let mut out = BTreeMap::new();
    let all: BTreeSet<String> = reports.iter().flat_map(ranked_names).collect();
    for metric in all {
        let having: Vec<&MetricReport> = reports
            .iter()
            .filter(|r| r.entries.contains_key(&metric))
            .collect();
        if let Some(direction) = direction_of(&metric) {
            out.insert(
                metric.clone(),
                order_by_direction(&metric, direction, &having).best_method,
            );
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricAgreement {
    pub metric: String,
    pub best_a: String,
    pub best_b: String,
    pub agree: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnScalingRow {
    pub method: String,
    pub en_a: f64,
    pub en_b: f64,
    pub expected_ratio: f64,
    pub observed_ratio: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditResult {
    pub agreements: Vec<MetricAgreement>,
    /// Empty when either side lacks EN.
    pub en_scaling: Vec<EnScalingRow>,
    pub rendering: String,
}

impl AuditResult {
    pub fn passed(&self) -> bool {
        self.agreements.iter().all(|a| a.agree) && self.en_scaling.iter().all(|r| r.pass)
    }
}

fn width(range: (f64, f64)) -> f64 {
    range.1 - range.0
}

fn best_map(reports: &[MetricReport]) -> Result<BTreeMap<String, String>, StatsError> {
    if reports.len() < 2 {
        // a single method is trivially best everywhere
        return Ok(reports
            .iter()
            .flat_map(|r| {
                ranked_names(r)
                    .into_iter()
                    .map(|m| (m, r.method_name.clone()))
            })
            .collect());
    }
    Ok(rank_methods(reports)?
        .metrics
        .into_iter()
        .map(|m| (m.metric, m.best_method))
        .collect())
}

/// Compares the same methods scored under two normalization ranges: does each
/// metric keep its best method, and does EN scale with the range width?
pub fn normalization_audit(
    reports_a: &[MetricReport],
    reports_b: &[MetricReport],
) -> Result<AuditResult, StatsError> {
    let methods_a: BTreeSet<&str> = reports_a.iter().map(|r| r.method_name.as_str()).collect();
    let methods_b: BTreeSet<&str> = reports_b.iter().map(|r| r.method_name.as_str()).collect();
    if methods_a != methods_b
        || methods_a.len() != reports_a.len()
        || methods_b.len() != reports_b.len()
    {
        let a: Vec<_> = methods_a.iter().copied().collect();
        let b: Vec<_> = methods_b.iter().copied().collect();
        return Err(StatsError::MethodSetMismatch(format!(
            "[{}] vs [{}]",
            a.join(", "),
            b.join(", ")
        )));
    }
    if reports_a.is_empty() {
        return Err(StatsError::EmptyInput);
    }

    let best_a = best_map(reports_a)?;
    let best_b = best_map(reports_b)?;
    let mut kinds: Vec<MetricKind> = best_a
        .keys()
        .filter(|m| best_b.contains_key(*m))
        .filter_map(|m| MetricKind::parse(m).ok())
        .collect();
    kinds.sort();
    let agreements = kinds
        .iter()
        .map(|k| {
            let metric = k.name();
            let (a, b) = (best_a[&metric].clone(), best_b[&metric].clone());
            MetricAgreement {
                agree: a == b,
                metric,
                best_a: a,
                best_b: b,
            }
        })
        .collect();

    let mut en_scaling = Vec::new();
    for ra in reports_a {
        let rb = reports_b
            .iter()
            .find(|r| r.method_name == ra.method_name)
            .expect("method sets match");
        if let (Some(en_a), Some(en_b)) = (ra.mean("EN"), rb.mean("EN")) {
            let expected_ratio = width(rb.normalization_range) / width(ra.normalization_range);
            let expected = en_a * expected_ratio;
            let pass =
                (en_b - expected).abs() <= EN_SCALING_TOL * expected.abs().max(f64::MIN_POSITIVE);
            en_scaling.push(EnScalingRow {
                method: ra.method_name.clone(),
                en_a,
                en_b,
                expected_ratio,
                observed_ratio: if en_a != 0.0 { en_b / en_a } else { f64::NAN },
                pass,
            });
        }
    }

    let mut result = AuditResult {
        agreements,
        en_scaling,
        rendering: String::new(),
    };
    result.rendering = crate::io::render::render_audit(reports_a, reports_b, &result);
    Ok(result)
}


#[cfg(test)]
mod tests {
    use super::tests_support::report;
    use super::*;

    #[test]
    fn mean_examples() {
        let s = summarize_mean(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(s.mean, 2.0);
        assert!((s.ci95_halfwidth.unwrap() - 1.96 / 3f64.sqrt()).abs() < 1e-12);
        assert!((s.ci95_halfwidth.unwrap() - 1.1316).abs() < 1e-4);

        let one = summarize_mean(&[5.0]).unwrap();
        assert_eq!((one.mean, one.ci95_halfwidth, one.n), (5.0, None, 1));

        let flat = summarize_mean(&[0.1; 7]).unwrap();
        assert_eq!(flat.ci95_halfwidth, Some(0.0));
        assert_eq!(summarize_mean(&[]), Err(StatsError::EmptyInput));
    }

    #[test]
    fn proportion_examples() {
        let s = summarize_proportion(2, 3).unwrap();
        assert!((s.mean - 0.6667).abs() < 1e-4);
        assert!((s.ci95_halfwidth.unwrap() - 0.5335).abs() < 1e-4);
        assert_eq!(
            summarize_proportion(4, 4).unwrap().ci95_halfwidth,
            Some(0.0)
        );
        assert_eq!(
            summarize_proportion(0, 4).unwrap().ci95_halfwidth,
            Some(0.0)
        );
        assert!(matches!(
            summarize_proportion(5, 4),
            Err(StatsError::OutOfRange { .. })
        ));
        assert!(matches!(
            summarize_proportion(0, 0),
            Err(StatsError::OutOfRange { .. })
        ));
    }

    fn table2(range: (f64, f64), im2: [f64; 3]) -> Vec<MetricReport> {
        let en = [16.07, 42.76, 99.17];
        let oracle = [0.7338, 0.3771, 0.9313];
        ["GB", "GL", "GEN"]
            .iter()
            .enumerate()
            .map(|(i, m)| {
                report(
                    m,
                    range,
                    &[("EN", en[i]), ("IM2", im2[i]), ("Oracle", oracle[i])],
                )
            })
            .collect()
    }

    #[test]
    fn ranking_follows_registry_direction() {
        let t = rank_methods(&table2((-0.5, 0.5), [0.0055, 0.0053, 0.0017])).unwrap();
        assert_eq!(t.best("EN"), Some("GB"));
        assert_eq!(t.best("Oracle"), Some("GEN"));
        assert_eq!(t.best("IM2"), Some("GEN"));
        let en = t.metrics.iter().find(|m| m.metric == "EN").unwrap();
        assert_eq!(en.order, vec!["GB", "GL", "GEN"]);
        assert_eq!(en.direction, Direction::LowerIsBetter);
        assert!(!en.tie);
    }

    #[test]
    fn ties_break_by_name_and_are_flagged() {
        let rs = vec![
            report("zeta", (0.0, 1.0), &[("EN", 3.0)]),
            report("alpha", (0.0, 1.0), &[("EN", 3.0)]),
        ];
        let t = rank_methods(&rs).unwrap();
        assert_eq!(t.best("EN"), Some("alpha"));
        assert!(t.metrics[0].tie);
    }

    #[test]
    fn ranking_rejects_mismatched_metrics() {
        let rs = vec![
            report("a", (0.0, 1.0), &[("EN", 3.0)]),
            report("b", (0.0, 1.0), &[("IM1", 3.0)]),
        ];
        assert!(matches!(
            rank_methods(&rs),
            Err(StatsError::MetricMismatch(_))
        ));
        assert_eq!(rank_methods(&rs[..1]), Err(StatsError::TooFewReports(1)));
    }

    #[test]
    fn lvs_is_not_ranked() {
        let rs = vec![
            report("a", (0.0, 1.0), &[("EN", 3.0), ("LVS[smile]", 0.1)]),
            report("b", (0.0, 1.0), &[("EN", 4.0), ("LVS[smile]", 0.2)]),
        ];
        let t = rank_methods(&rs).unwrap();
        assert_eq!(t.metrics.len(), 1);
    }

    #[test]
    fn audit_agrees_across_equal_width_ranges() {
        let a = table2((-0.5, 0.5), [0.0055, 0.0053, 0.0017]);
        let b = table2((0.0, 1.0), [0.0246, 0.0194, 0.0147]);
        let audit = normalization_audit(&a, &b).unwrap();
        assert!(audit.passed());
        assert!(audit.en_scaling.iter().all(|r| r.expected_ratio == 1.0));
        assert!(audit.rendering.contains("16.07 (0.01)"));
    }

    #[test]
    fn audit_checks_en_scale_linearity() {
        let a = table2((0.0, 1.0), [0.01, 0.02, 0.03]);
        let mut b = table2((0.0, 255.0), [0.01, 0.02, 0.03]);
        for r in &mut b {
            let en = r.entries.get_mut("EN").unwrap();
            en.mean *= 255.0;
        }
        let audit = normalization_audit(&a, &b).unwrap();
        assert!(audit.passed());
        assert!(audit.en_scaling.iter().all(|r| r.expected_ratio == 255.0));

        b[0].entries.get_mut("EN").unwrap().mean *= 1.001;
        assert!(!normalization_audit(&a, &b).unwrap().passed());
    }

    #[test]
    fn audit_flags_shuffled_labels() {
        let a = table2((-0.5, 0.5), [0.0055, 0.0053, 0.0017]);
        let mut b = table2((0.0, 1.0), [0.0246, 0.0194, 0.0147]);
        b[1].method_name = "GEN".into();
        b[2].method_name = "GL".into();
        let audit = normalization_audit(&a, &b).unwrap();
        assert!(!audit.passed());
        let im2 = audit.agreements.iter().find(|g| g.metric == "IM2").unwrap();
        assert!(!im2.agree);
    }

    #[test]
    fn audit_requires_same_methods() {
        let a = table2((0.0, 1.0), [0.01, 0.02, 0.03]);
        let b = a[..2].to_vec();
        assert!(matches!(
            normalization_audit(&a, &b),
            Err(StatsError::MethodSetMismatch(_))
        ));
    }

    #[test]
    fn metric_names_round_trip() {
        for k in MetricKind::FIXED {
            assert_eq!(MetricKind::parse(&k.name()).unwrap(), k);
        }
        assert_eq!(MetricKind::parse("im2").unwrap(), MetricKind::Im2);
        assert_eq!(
            MetricKind::parse("lvs:smile").unwrap(),
            MetricKind::Lvs("smile".into())
        );
        assert_eq!(
            MetricKind::parse("LVS[smile]").unwrap(),
            MetricKind::Lvs("smile".into())
        );
        assert!(MetricKind::parse("lpips").is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn mean_is_permutation_invariant(v in proptest::collection::vec(-1e6f64..1e6, 1..60), seed in any::<u64>()) {
                let mut shuffled = v.clone();
                crate::rng::StreamRng::new(seed, "perm").shuffle(&mut shuffled);
                let a = summarize_mean(&v).unwrap();
                let b = summarize_mean(&shuffled).unwrap();
                prop_assert_eq!(a.mean.to_bits(), b.mean.to_bits());
            }

            #[test]
            fn ranking_invariant_under_increasing_transform(means in proptest::collection::vec(0.0f64..10.0, 2..6)) {
                let rs: Vec<MetricReport> = means.iter().enumerate()
                    .map(|(i, &m)| report(&format!("m{i}"), (0.0, 1.0), &[("IM1", m)])).collect();
                let mapped: Vec<MetricReport> = means.iter().enumerate()
                    .map(|(i, &m)| report(&format!("m{i}"), (0.0, 1.0), &[("IM1", (m + 1.0).ln() * 3.0 + 2.0)])).collect();
                prop_assert_eq!(rank_methods(&rs).unwrap().metrics[0].order.clone(), rank_methods(&mapped).unwrap().metrics[0].order.clone());
            }
        }
    }
}
