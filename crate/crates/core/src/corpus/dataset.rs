use std::collections::HashSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::label::{PraiseLabel, Scheme};
use super::tagging::{LabeledResponse, PraiseSpan, SpanError, TaggedResponse};
use crate::rng::SeededRng;

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("cannot read or write {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed dataset JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("dataset declares an empty label scheme")]
    EmptyScheme,
    #[error("unknown label `{label}` in the scheme")]
    UnknownSchemeLabel { label: String },
    #[error("record `{id}`: unknown label `{label}`")]
    UnknownLabel { id: String, label: String },
    #[error("record `{id}`: label `{label}` is not in the dataset scheme {scheme}")]
    LabelNotInScheme {
        id: String,
        label: PraiseLabel,
        scheme: Scheme,
    },
    #[error("record `{id}`: negative span offset {start}..{end}")]
    NegativeOffset { id: String, start: i64, end: i64 },
    #[error("record `{id}`: {source}")]
    InvalidSpan {
        id: String,
        #[source]
        source: SpanError,
    },
    #[error("duplicate record id `{0}`")]
    DuplicateId(String),
    #[error("requested {requested} records but the dataset has {available}")]
    CountOutOfRange { requested: usize, available: usize },
}

impl DatasetError {
    /// The offending record id, when the error is tied to one record.
    pub fn record_id(&self) -> Option<&str> {
        match self {
            DatasetError::LabelNotInScheme { id, .. }
            | DatasetError::NegativeOffset { id, .. }
            | DatasetError::InvalidSpan { id, .. }
            | DatasetError::UnknownLabel { id, .. }
            | DatasetError::DuplicateId(id) => Some(id),
            _ => None,
        }
    }

    pub fn is_io(&self) -> bool {
        matches!(self, DatasetError::Io { .. })
    }
}

/// Records annotated under one label scheme.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Dataset {
    pub scheme: Scheme,
    pub records: Vec<LabeledResponse>,
}

#[derive(Deserialize)]
struct RawDataset {
    scheme: Vec<String>,
    records: Vec<RawRecord>,
}

#[derive(Deserialize)]
struct RawRecord {
    id: String,
    text: String,
    #[serde(default)]
    spans: Vec<RawSpan>,
}

#[derive(Deserialize)]
struct RawSpan {
    label: String,
    start: i64,
    end: i64,
}

impl Dataset {
    /// Builds a dataset and checks every invariant. Spans are sorted by start.
    pub fn new(scheme: Scheme, mut records: Vec<LabeledResponse>) -> Result<Self, DatasetError> {
        for r in &mut records {
            r.spans.sort_by_key(|s| (s.start, s.end));
        }
        let d = Self { scheme, records };
        d.validate()?;
        Ok(d)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn validate(&self) -> Result<(), DatasetError> {
        if self.scheme.is_empty() {
            return Err(DatasetError::EmptyScheme);
        }
        let mut seen = HashSet::new();
        for r in &self.records {
            if !seen.insert(r.id.as_str()) {
                return Err(DatasetError::DuplicateId(r.id.clone()));
            }
            for s in &r.spans {
                if !self.scheme.contains(s.label) {
                    return Err(DatasetError::LabelNotInScheme {
                        id: r.id.clone(),
                        label: s.label,
                        scheme: self.scheme.clone(),
                    });
                }
            }
            r.validate().map_err(|source| DatasetError::InvalidSpan {
                id: r.id.clone(),
                source,
            })?;
        }
        Ok(())
    }

    pub fn from_json(json: &str) -> Result<Self, DatasetError> {
        let raw: RawDataset = serde_json::from_str(json)?;
        let mut labels = Vec::new();
        for l in &raw.scheme {
            labels.push(l.parse::<PraiseLabel>().map_err(|_| DatasetError::UnknownSchemeLabel {
                label: l.clone(),
            })?);
        }
        let scheme = Scheme::new(labels);
        let mut records = Vec::with_capacity(raw.records.len());
        for r in raw.records {
            let mut spans = Vec::with_capacity(r.spans.len());
            for s in r.spans {
                let label = s.label.parse::<PraiseLabel>().map_err(|_| DatasetError::UnknownLabel {
                    id: r.id.clone(),
                    label: s.label.clone(),
                })?;
                if s.start < 0 || s.end < 0 {
                    return Err(DatasetError::NegativeOffset {
                        id: r.id,
                        start: s.start,
                        end: s.end,
                    });
                }
                spans.push(PraiseSpan {
                    label,
                    start: s.start as usize,
                    end: s.end as usize,
                });
            }
            records.push(LabeledResponse {
                id: r.id,
                text: r.text,
                spans,
            });
        }
        Self::new(scheme, records)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("dataset serializes");
        s.push('\n');
        s
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, DatasetError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| DatasetError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), DatasetError> {
        let path = path.as_ref();
        crate::util::write_atomic(path, self.to_json().as_bytes()).map_err(|source| DatasetError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn get(&self, id: &str) -> Option<&LabeledResponse> {
        self.records.iter().find(|r| r.id == id)
    }

    /// Tagged view of every record, in order.
    pub fn tagged(&self) -> Vec<TaggedResponse> {
        self.records
            .iter()
            .map(|r| r.spans_to_tags().expect("validated dataset"))
            .collect()
    }

    fn with_records(&self, records: Vec<LabeledResponse>) -> Self {
        Self {
            scheme: self.scheme.clone(),
            records,
        }
    }
}

/// Seeded shuffle followed by a prefix split into `(train, rest)`.
pub fn split_dataset(d: &Dataset, seed: u64, train_count: usize) -> Result<(Dataset, Dataset), DatasetError> {
    if train_count > d.len() {
        return Err(DatasetError::CountOutOfRange {
            requested: train_count,
            available: d.len(),
        });
    }
    let mut records = d.records.clone();
    SeededRng::new(seed).shuffle(&mut records);
    let rest = records.split_off(train_count);
    Ok((d.with_records(records), d.with_records(rest)))
}

/// Seeded sample of `n` records without replacement.
pub fn subset(d: &Dataset, n: usize, seed: u64) -> Result<Dataset, DatasetError> {
    split_dataset(d, seed, n).map(|(picked, _)| picked)
}
