use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Praise category. Declaration order is the tie-break order used across
/// the crate (Effort before Outcome before Person).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PraiseLabel {
    Effort,
    Outcome,
    Person,
}

impl PraiseLabel {
    pub const ALL: [PraiseLabel; 3] = [PraiseLabel::Effort, PraiseLabel::Outcome, PraiseLabel::Person];

    /// Lowercase key used in files and label JSON.
    pub fn key(self) -> &'static str {
        match self {
            PraiseLabel::Effort => "effort",
            PraiseLabel::Outcome => "outcome",
            PraiseLabel::Person => "person",
        }
    }
}

impl fmt::Display for PraiseLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown praise label `{0}` (expected effort, outcome or person)")]
pub struct UnknownLabel(pub String);

impl FromStr for PraiseLabel {
    type Err = UnknownLabel;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "effort" => Ok(PraiseLabel::Effort),
            "outcome" => Ok(PraiseLabel::Outcome),
            "person" => Ok(PraiseLabel::Person),
            _ => Err(UnknownLabel(s.to_string())),
        }
    }
}

/// IO tag for a single token.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Tag {
    O,
    I(PraiseLabel),
}

impl Tag {
    pub fn label(self) -> Option<PraiseLabel> {
        match self {
            Tag::O => None,
            Tag::I(l) => Some(l),
        }
    }

    pub fn is_inside(self) -> bool {
        matches!(self, Tag::I(_))
    }
}

impl fmt::Display for Tag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tag::O => f.write_str("O"),
            Tag::I(PraiseLabel::Effort) => f.write_str("I_Effort"),
            Tag::I(PraiseLabel::Outcome) => f.write_str("I_Outcome"),
            Tag::I(PraiseLabel::Person) => f.write_str("I_Person"),
        }
    }
}

/// The set of labels a dataset is annotated with.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Scheme(BTreeSet<PraiseLabel>);

impl Scheme {
    pub fn new(labels: impl IntoIterator<Item = PraiseLabel>) -> Self {
        Self(labels.into_iter().collect())
    }

    /// Effort and outcome praise.
    pub fn effort_outcome() -> Self {
        Self::new([PraiseLabel::Effort, PraiseLabel::Outcome])
    }

    /// Person-based praise only.
    pub fn person() -> Self {
        Self::new([PraiseLabel::Person])
    }

    pub fn contains(&self, label: PraiseLabel) -> bool {
        self.0.contains(&label)
    }

    /// Labels in canonical order.
    pub fn labels(&self) -> impl Iterator<Item = PraiseLabel> + '_ {
        self.0.iter().copied()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn is_person(&self) -> bool {
        *self == Self::person()
    }

    pub fn is_effort_outcome(&self) -> bool {
        *self == Self::effort_outcome()
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let keys: Vec<&str> = self.0.iter().map(|l| l.key()).collect();
        write!(f, "{{{}}}", keys.join(","))
    }
}
