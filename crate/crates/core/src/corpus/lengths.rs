use std::collections::BTreeMap;

use serde::Serialize;

use super::dataset::Dataset;
use super::label::PraiseLabel;

/// Token-length distribution of one label's spans.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpanLengthStats {
    pub label: PraiseLabel,
    /// token length -> number of spans
    pub histogram: BTreeMap<usize, usize>,
    pub n_spans: usize,
    pub mean: Option<f64>,
    /// Population variance.
    pub variance: Option<f64>,
}

pub fn span_length_stats(d: &Dataset, label: PraiseLabel) -> SpanLengthStats {
    let mut lengths = Vec::new();
    for (record, tagged) in d.records.iter().zip(d.tagged()) {
        for s in record.spans.iter().filter(|s| s.label == label) {
            let n = tagged
                .tokens
                .iter()
                .filter(|t| t.start >= s.start && t.end <= s.end)
                .count();
            lengths.push(n);
        }
    }
    let mut histogram = BTreeMap::new();
    for &l in &lengths {
        *histogram.entry(l).or_insert(0) += 1;
    }
    let (mean, variance) = if lengths.is_empty() {
        (None, None)
    } else {
        let n = lengths.len() as f64;
        let mean = lengths.iter().sum::<usize>() as f64 / n;
        let var = lengths.iter().map(|&l| (l as f64 - mean).powi(2)).sum::<f64>() / n;
        (Some(mean), Some(var))
    };
    SpanLengthStats {
        label,
        histogram,
        n_spans: lengths.len(),
        mean,
        variance,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{LabeledResponse, PraiseSpan, Scheme};

    fn outcome(start: usize, end: usize) -> PraiseSpan {
        PraiseSpan { label: PraiseLabel::Outcome, start, end }
    }

    #[test]
    fn counts_lengths_two_two_three() {
        let d = Dataset::new(
            Scheme::effort_outcome(),
            vec![
                LabeledResponse::new("a", "great job", vec![outcome(0, 9)]),
                LabeledResponse::new("b", "nice work, friend", vec![outcome(0, 9)]),
                LabeledResponse::new("c", "a truly great result", vec![outcome(2, 20)]),
            ],
        )
        .unwrap();
        let s = span_length_stats(&d, PraiseLabel::Outcome);
        assert_eq!(s.histogram, BTreeMap::from([(2, 2), (3, 1)]));
        assert!((s.mean.unwrap() - 7.0 / 3.0).abs() < 1e-12);
        assert!((s.variance.unwrap() - 2.0 / 9.0).abs() < 1e-12);
    }

    #[test]
    fn missing_label_gives_empty_histogram() {
        let d = Dataset::new(
            Scheme::effort_outcome(),
            vec![LabeledResponse::new("a", "great job", vec![outcome(0, 9)])],
        )
        .unwrap();
        let s = span_length_stats(&d, PraiseLabel::Effort);
        assert!(s.histogram.is_empty());
        assert_eq!(s.mean, None);
        let s = span_length_stats(&d, PraiseLabel::Outcome);
        assert_eq!(s.histogram, BTreeMap::from([(2, 1)]));
    }
}
