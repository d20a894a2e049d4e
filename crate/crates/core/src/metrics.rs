//! Token-level overlap metrics: IoU, modified IoU (FP down-weighted by
//! `alpha`) and F-beta, plus corpus and cross-run aggregation.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::corpus::{Dataset, PraiseLabel, Tag, TaggedResponse};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetricError {
    #[error("ground truth and prediction tokenize differently (token {index})")]
    TokenMismatch { index: usize },
    #[error("no prediction for response `{0}`")]
    MissingPrediction(String),
    #[error("cannot aggregate an empty list of runs")]
    EmptyInput,
    #[error("alpha must lie in [0, 1], got {0}")]
    InvalidAlpha(f64),
    #[error("beta must be positive, got {0}")]
    InvalidBeta(f64),
}

/// Per-label token counts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn new(tp: u64, fp: u64, fn_: u64) -> Self {
        Self { tp, fp, fn_ }
    }

    pub fn is_empty(&self) -> bool {
        self.tp + self.fp + self.fn_ == 0
    }

    /// Counts with prediction and ground truth exchanged.
    pub fn swapped(&self) -> Self {
        Self::new(self.tp, self.fn_, self.fp)
    }
}

impl std::ops::Add for ConfusionCounts {
    type Output = Self;

    fn add(self, o: Self) -> Self {
        Self::new(self.tp + o.tp, self.fp + o.fp, self.fn_ + o.fn_)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricParams {
    alpha: f64,
    beta: f64,
}

impl Default for MetricParams {
    fn default() -> Self {
        Self { alpha: 0.2, beta: 2.0 }
    }
}

impl MetricParams {
    pub fn new(alpha: f64, beta: f64) -> Result<Self, MetricError> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(MetricError::InvalidAlpha(alpha));
        }
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(MetricError::InvalidBeta(beta));
        }
        Ok(Self { alpha, beta })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricScores {
    pub iou: f64,
    pub m_iou: f64,
    pub f_beta: f64,
}

/// Metric names in table order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Metric {
    #[serde(rename = "m_iou")]
    MIou,
    #[serde(rename = "iou")]
    Iou,
    #[serde(rename = "f_beta")]
    FBeta,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::MIou, Metric::Iou, Metric::FBeta];

    pub fn name(self) -> &'static str {
        match self {
            Metric::MIou => "m_iou",
            Metric::Iou => "iou",
            Metric::FBeta => "f_beta",
        }
    }
}

impl MetricScores {
    pub const PERFECT: MetricScores = MetricScores {
        iou: 1.0,
        m_iou: 1.0,
        f_beta: 1.0,
    };

    pub fn get(&self, m: Metric) -> f64 {
        match m {
            Metric::MIou => self.m_iou,
            Metric::Iou => self.iou,
            Metric::FBeta => self.f_beta,
        }
    }
}

/// Token counts for `label`: TP in both, FP only in `pred`, FN only in `gt`.
pub fn count_confusion(
    gt: &TaggedResponse,
    pred: &TaggedResponse,
    label: PraiseLabel,
) -> Result<ConfusionCounts, MetricError> {
    if gt.tokens.len() != pred.tokens.len() {
        return Err(MetricError::TokenMismatch {
            index: gt.tokens.len().min(pred.tokens.len()),
        });
    }
    let target = Tag::I(label);
    let mut c = ConfusionCounts::default();
    for (i, (g, p)) in gt.tokens.iter().zip(&pred.tokens).enumerate() {
        if g != p {
            return Err(MetricError::TokenMismatch { index: i });
        }
        match (gt.tags[i] == target, pred.tags[i] == target) {
            (true, true) => c.tp += 1,
            (false, true) => c.fp += 1,
            (true, false) => c.fn_ += 1,
            (false, false) => {}
        }
    }
    Ok(c)
}

/// IoU, M-IoU and F-beta. All three are 1.0 when there is nothing to find
/// and nothing was predicted.
pub fn metric_scores(c: ConfusionCounts, p: MetricParams) -> MetricScores {
    if c.is_empty() {
        return MetricScores::PERFECT;
    }
    let (tp, fp, fn_) = (c.tp as f64, c.fp as f64, c.fn_ as f64);
    let b2 = p.beta * p.beta;
    MetricScores {
        iou: tp / (tp + fp + fn_),
        m_iou: tp / (tp + p.alpha * fp + fn_),
        f_beta: (1.0 + b2) * tp / ((1.0 + b2) * tp + fp + b2 * fn_),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResponseScore {
    pub id: String,
    pub counts: ConfusionCounts,
    pub scores: MetricScores,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorpusScores {
    pub label: PraiseLabel,
    pub per_response: Vec<ResponseScore>,
    /// Unweighted mean over every response.
    pub mean: MetricScores,
    /// Mean over responses where the label occurs in ground truth or
    /// prediction; `None` when there are no such responses.
    pub mean_nonempty: Option<MetricScores>,
    pub n_empty: usize,
}

fn mean_scores<'a>(scores: impl Iterator<Item = &'a MetricScores>) -> Option<MetricScores> {
    let mut n = 0usize;
    let mut acc = (0.0, 0.0, 0.0);
    for s in scores {
        n += 1;
        acc.0 += s.iou;
        acc.1 += s.m_iou;
        acc.2 += s.f_beta;
    }
    (n > 0).then(|| MetricScores {
        iou: acc.0 / n as f64,
        m_iou: acc.1 / n as f64,
        f_beta: acc.2 / n as f64,
    })
}

/// Scores every ground-truth response against its prediction and
/// macro-averages over responses.
pub fn score_corpus(
    gt: &Dataset,
    preds: &HashMap<String, TaggedResponse>,
    label: PraiseLabel,
    p: MetricParams,
) -> Result<CorpusScores, MetricError> {
    let mut per_response = Vec::with_capacity(gt.len());
    for (record, tagged) in gt.records.iter().zip(gt.tagged()) {
        let pred = preds
            .get(&record.id)
            .ok_or_else(|| MetricError::MissingPrediction(record.id.clone()))?;
        let counts = count_confusion(&tagged, pred, label)?;
        per_response.push(ResponseScore {
            id: record.id.clone(),
            counts,
            scores: metric_scores(counts, p),
        });
    }
    let mean = mean_scores(per_response.iter().map(|r| &r.scores)).unwrap_or(MetricScores::PERFECT);
    let nonempty: Vec<&ResponseScore> = per_response.iter().filter(|r| !r.counts.is_empty()).collect();
    Ok(CorpusScores {
        label,
        mean,
        mean_nonempty: mean_scores(nonempty.iter().map(|r| &r.scores)),
        n_empty: per_response.len() - nonempty.len(),
        per_response,
    })
}

/// Mean and standard error across runs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RunSummary {
    pub mean: f64,
    /// Sample standard deviation over `sqrt(n)`; absent for a single run.
    pub standard_error: Option<f64>,
    pub n_runs: usize,
}

pub fn aggregate_runs(run_means: &[f64]) -> Result<RunSummary, MetricError> {
    if run_means.is_empty() {
        return Err(MetricError::EmptyInput);
    }
    let n = run_means.len() as f64;
    let mean = run_means.iter().sum::<f64>() / n;
    let standard_error = (run_means.len() >= 2).then(|| {
        let var = run_means.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        var.sqrt() / n.sqrt()
    });
    Ok(RunSummary {
        mean,
        standard_error,
        n_runs: run_means.len(),
    })
}
