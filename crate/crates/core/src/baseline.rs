//! Phrase-memorizing tagger: remembers every training span's lowercased
//! tokens and tags exact matches at test time. Its score measures how
//! much surface variety the training set contains.

use std::collections::{BTreeMap, BTreeSet};

use crate::corpus::{tokenize, Dataset, PraiseLabel, Tag, TaggedResponse};

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Gazetteer {
    entries: BTreeMap<PraiseLabel, BTreeSet<Vec<String>>>,
}

fn normalize(text: &str) -> Vec<String> {
    tokenize(text).into_iter().map(|t| t.text.to_lowercase()).collect()
}

impl Gazetteer {
    pub fn build(train: &Dataset) -> Self {
        let mut g = Self::default();
        for r in &train.records {
            for s in &r.spans {
                g.insert(s.label, r.span_text(s));
            }
        }
        g
    }

    /// Adds a phrase; empty phrases are ignored.
    pub fn insert(&mut self, label: PraiseLabel, phrase: &str) {
        let seq = normalize(phrase);
        if !seq.is_empty() {
            self.entries.entry(label).or_default().insert(seq);
        }
    }

    pub fn contains(&self, label: PraiseLabel, phrase: &str) -> bool {
        self.entries.get(&label).is_some_and(|s| s.contains(&normalize(phrase)))
    }

    pub fn len(&self, label: PraiseLabel) -> usize {
        self.entries.get(&label).map_or(0, BTreeSet::len)
    }

    pub fn is_empty(&self) -> bool {
        self.entries.values().all(BTreeSet::is_empty)
    }

    /// Greedy left-to-right longest match. Equal-length matches go to the
    /// earlier label in Effort, Outcome, Person order.
    pub fn tag(&self, text: &str) -> TaggedResponse {
        let tokens = tokenize(text);
        let lowered: Vec<String> = tokens.iter().map(|t| t.text.to_lowercase()).collect();
        let mut tags = vec![Tag::O; tokens.len()];
        let mut i = 0;
        while i < lowered.len() {
            let mut best: Option<(usize, PraiseLabel)> = None;
            for (&label, seqs) in &self.entries {
                for seq in seqs.range(vec![lowered[i].clone()]..) {
                    if seq.first() != Some(&lowered[i]) {
                        break;
                    }
                    let len = seq.len();
                    if i + len <= lowered.len()
                        && lowered[i..i + len] == seq[..]
                        && best.is_none_or(|(l, _)| len > l)
                    {
                        best = Some((len, label));
                    }
                }
            }
            match best {
                Some((len, label)) => {
                    tags[i..i + len].fill(Tag::I(label));
                    i += len;
                }
                None => i += 1,
            }
        }
        TaggedResponse::new(tokens, tags)
    }

    /// Label key to sorted, space-joined phrases.
    pub fn to_json(&self) -> String {
        let map: BTreeMap<&str, Vec<String>> = self
            .entries
            .iter()
            .map(|(l, seqs)| (l.key(), seqs.iter().map(|s| s.join(" ")).collect()))
            .collect();
        let mut s = serde_json::to_string_pretty(&map).expect("serializable");
        s.push('\n');
        s
    }

    pub fn from_json(json: &str) -> Result<Self, GazetteerError> {
        let map: BTreeMap<String, Vec<String>> = serde_json::from_str(json)?;
        let mut g = Self::default();
        for (key, phrases) in map {
            let label: PraiseLabel = key.parse().map_err(|_| GazetteerError::UnknownLabel(key.clone()))?;
            for p in phrases {
                g.insert(label, &p);
            }
        }
        Ok(g)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum GazetteerError {
    #[error("invalid gazetteer JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unknown label `{0}` in gazetteer")]
    UnknownLabel(String),
}
