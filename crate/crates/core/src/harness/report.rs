use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde::Serialize;

use crate::corpus::PraiseLabel;
use crate::metrics::Metric;
use crate::stats::{Alternative, MwuMethod};
use crate::util::fmt_fixed;

use super::run::SizeKey;

/// One aggregated cell of a results table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultRow {
    pub label: PraiseLabel,
    pub set_size: SizeKey,
    pub metric: Metric,
    pub mean: f64,
    pub standard_error: Option<f64>,
    pub n_runs: usize,
}

/// Mann-Whitney U between the per-seed M-IoU means of two set sizes.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub label: PraiseLabel,
    pub a: SizeKey,
    pub b: SizeKey,
    pub metric: Metric,
    pub u1: f64,
    pub u_min: f64,
    pub p: f64,
    pub alternative: Alternative,
    pub method: MwuMethod,
}

fn method_name(m: MwuMethod) -> &'static str {
    match m {
        MwuMethod::Exact => "exact",
        MwuMethod::NormalApprox => "normal_approx",
    }
}

/// `label,set_size,metric,mean,se,n_runs`; `se` is empty for one run.
pub fn results_csv(rows: &[ResultRow]) -> String {
    let mut out = String::from("label,set_size,metric,mean,se,n_runs\n");
    for r in rows {
        let se = r.standard_error.map(|s| s.to_string()).unwrap_or_default();
        let _ = writeln!(out, "{},{},{},{},{},{}", r.label, r.set_size, r.metric.name(), r.mean, se, r.n_runs);
    }
    out
}

pub fn comparisons_csv(rows: &[ComparisonRow]) -> String {
    let mut out = String::from("label,a,b,metric,u1,u_min,p,alternative,method\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.label,
            r.a,
            r.b,
            r.metric.name(),
            r.u1,
            r.u_min,
            r.p,
            r.alternative,
            method_name(r.method)
        );
    }
    out
}

fn metric_heading(m: Metric) -> &'static str {
    match m {
        Metric::MIou => "M-IoU",
        Metric::Iou => "IoU",
        Metric::FBeta => "F-beta",
    }
}

fn cell(x: Option<f64>) -> String {
    x.map(|v| fmt_fixed(v, 3)).unwrap_or_else(|| "-".into())
}

/// One table per label (set size by metric, mean and SE), then the
/// significance tests. Values use three decimals, ties to even.
pub fn markdown_tables(rows: &[ResultRow], comparisons: &[ComparisonRow]) -> String {
    let mut out = String::new();
    let labels: BTreeSet<PraiseLabel> = rows.iter().map(|r| r.label).collect();
    for label in labels {
        let _ = writeln!(out, "## {label}\n");
        let mut header = String::from("| Set size |");
        let mut rule = String::from("|---:|");
        for m in Metric::ALL {
            let _ = write!(header, " {} | SE |", metric_heading(m));
            rule.push_str("---:|---:|");
        }
        let _ = writeln!(out, "{header}\n{rule}");
        let mut sizes: Vec<SizeKey> = rows.iter().filter(|r| r.label == label).map(|r| r.set_size).collect();
        sizes.dedup();
        for size in sizes {
            let mut line = format!("| {size} |");
            for m in Metric::ALL {
                let r = rows.iter().find(|r| r.label == label && r.set_size == size && r.metric == m);
                let _ = write!(line, " {} | {} |", cell(r.map(|r| r.mean)), cell(r.and_then(|r| r.standard_error)));
            }
            let _ = writeln!(out, "{line}");
        }
        out.push('\n');
    }
    if !comparisons.is_empty() {
        let _ = writeln!(out, "## Mann-Whitney U\n");
        let _ = writeln!(out, "| Label | A | B | Metric | U | p | Alternative | Method |\n|---|---:|---:|---|---:|---:|---|---|");
        for c in comparisons {
            let _ = writeln!(
                out,
                "| {} | {} | {} | {} | {:.2} | {} | {} | {} |",
                c.label,
                c.a,
                c.b,
                metric_heading(c.metric),
                c.u_min,
                fmt_fixed(c.p, 4),
                c.alternative,
                method_name(c.method)
            );
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(size: SizeKey, metric: Metric, mean: f64, se: Option<f64>) -> ResultRow {
        ResultRow {
            label: PraiseLabel::Outcome,
            set_size: size,
            metric,
            mean,
            standard_error: se,
            n_runs: if se.is_some() { 5 } else { 1 },
        }
    }

    #[test]
    fn csv_layout() {
        let rows = vec![
            row(SizeKey::Augmented(520), Metric::MIou, 0.601, Some(0.006)),
            row(SizeKey::Eda(520), Metric::Iou, 0.5, None),
        ];
        assert_eq!(
            results_csv(&rows),
            "label,set_size,metric,mean,se,n_runs\noutcome,520,m_iou,0.601,0.006,5\noutcome,520*,iou,0.5,,1\n"
        );
    }

    #[test]
    fn markdown_rounds_to_three_places() {
        let rows: Vec<ResultRow> = Metric::ALL
            .iter()
            .map(|&m| row(SizeKey::Augmented(13), m, 0.60149, Some(0.0625)))
            .collect();
        let md = markdown_tables(&rows, &[]);
        assert!(md.contains("| 13 | 0.601 | 0.062 | 0.601 | 0.062 | 0.601 | 0.062 |"), "{md}");
        assert!(md.starts_with("## outcome"));
    }
}
