//! Chat-format fine-tuning export, prediction parsing, and phrase alignment.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::corpus::{tokenize, Dataset, LabeledResponse, PraiseLabel, Scheme, Tag, TaggedResponse};
use crate::provider::ChatMessage;

const PRINCIPLE_EFFORT_OUTCOME: &str = include_str!("../resources/principle_effort_outcome.txt");
const PRINCIPLE_PERSON: &str = include_str!("../resources/principle_person.txt");

const SYSTEM_EFFORT_OUTCOME: &str = "You are a response evaluator designed to output JSON. Your task is to analyze tutor responses based on the principles of effective praise focusing on 'effort' and 'outcome'. Extract words or phrases that represent praise for the student's effort and outcome, and output the results in JSON format with keys titled 'effort' and 'outcome'.";
const SYSTEM_PERSON: &str = "You are a response evaluator designed to output JSON. Your task is to analyze tutor responses based on the principles of effective praise focusing on undesired part 'person_based praise'. Extract words or phrases that represent person-based praise for the student's, and output the results in JSON format with keys titled 'person'.";

const READY: &str = "Sure, can you provide a tutor response for analysis";
const READY_Q: &str = "Sure, can you provide a tutor response for analysis?";
const AGAIN: &str = "Nice, let's do it again.";

#[derive(Debug, thiserror::Error)]
pub enum FinetuneError {
    #[error("dataset scheme {dataset} does not match lesson principle scheme {principle}")]
    SchemeMismatch { dataset: Scheme, principle: Scheme },
    #[error("no built-in lesson principle for scheme {0}")]
    UnsupportedScheme(Scheme),
    #[error("lesson principle text is empty")]
    EmptyPrinciple,
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    BadLine { path: String, line: usize, message: String },
}

/// Guidance text shown to the model ahead of the few-shot exchanges.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LessonPrinciple {
    pub scheme: Scheme,
    pub text: String,
}

impl LessonPrinciple {
    pub fn builtin(scheme: &Scheme) -> Result<Self, FinetuneError> {
        let text = if scheme.is_effort_outcome() {
            PRINCIPLE_EFFORT_OUTCOME
        } else if scheme.is_person() {
            PRINCIPLE_PERSON
        } else {
            return Err(FinetuneError::UnsupportedScheme(scheme.clone()));
        };
        Ok(Self {
            scheme: scheme.clone(),
            text: text.trim_end().to_string(),
        })
    }

    pub fn new(scheme: Scheme, text: impl Into<String>) -> Result<Self, FinetuneError> {
        let text = text.into();
        if text.trim().is_empty() {
            return Err(FinetuneError::EmptyPrinciple);
        }
        if !(scheme.is_effort_outcome() || scheme.is_person()) {
            return Err(FinetuneError::UnsupportedScheme(scheme));
        }
        Ok(Self { scheme, text })
    }

    pub fn from_file(scheme: Scheme, path: impl AsRef<Path>) -> Result<Self, FinetuneError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| FinetuneError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::new(scheme, text.trim_end())
    }
}

/// Renders `{"effort": [], "outcome": ["Great job"]}` with keys in scheme
/// order; labels missing from `phrases` get empty lists.
pub fn label_json(scheme: &Scheme, phrases: &BTreeMap<PraiseLabel, Vec<String>>) -> String {
    let parts: Vec<String> = scheme
        .labels()
        .map(|l| {
            let items: Vec<String> = phrases
                .get(&l)
                .map(|v| v.iter().map(|p| serde_json::to_string(p).expect("string")).collect())
                .unwrap_or_default();
            format!("\"{}\": [{}]", l.key(), items.join(", "))
        })
        .collect();
    format!("{{{}}}", parts.join(", "))
}

/// Span surface texts grouped by label, in order of appearance.
pub fn gold_phrases(record: &LabeledResponse, scheme: &Scheme) -> BTreeMap<PraiseLabel, Vec<String>> {
    let mut out: BTreeMap<PraiseLabel, Vec<String>> = scheme.labels().map(|l| (l, Vec::new())).collect();
    for s in record.sorted_spans() {
        out.entry(s.label).or_default().push(record.span_text(&s).to_string());
    }
    out
}

fn few_shots(scheme: &Scheme) -> [(&'static str, String); 2] {
    let map = |pairs: &[(PraiseLabel, &[&str])]| {
        let m: BTreeMap<PraiseLabel, Vec<String>> = pairs
            .iter()
            .map(|(l, v)| (*l, v.iter().map(|s| s.to_string()).collect()))
            .collect();
        label_json(scheme, &m)
    };
    if scheme.is_person() {
        [
            (
                "You are smart and capable of completing this assignment with success.",
                map(&[(PraiseLabel::Person, &["smart"])]),
            ),
            (
                "Fantastic job, Kevin! You are the smartest student I have ever met! I wish all students were as smart as you.",
                map(&[(PraiseLabel::Person, &["smartest student", "as smart as you"])]),
            ),
        ]
    } else {
        [
            ("Great job! You are a genius!", map(&[(PraiseLabel::Outcome, &["Great job"])])),
            (
                "You are almost there! I am proud of how you are persevering through and striving to solve the problem. Keep going!",
                map(&[(
                    PraiseLabel::Effort,
                    &["persevering through and striving to solve the problem", "Keep going"],
                )]),
            ),
        ]
    }
}

/// The conversation up to (and including) the tutor response to label.
pub fn tagging_messages(principle: &LessonPrinciple, response_text: &str) -> Vec<ChatMessage> {
    let system = if principle.scheme.is_person() {
        SYSTEM_PERSON
    } else {
        SYSTEM_EFFORT_OUTCOME
    };
    let [(u1, a1), (u2, a2)] = few_shots(&principle.scheme);
    vec![
        ChatMessage::system(system),
        ChatMessage::user(principle.text.clone()),
        ChatMessage::assistant(READY),
        ChatMessage::user(u1),
        ChatMessage::assistant(a1),
        ChatMessage::user(AGAIN),
        ChatMessage::assistant(READY_Q),
        ChatMessage::user(u2),
        ChatMessage::assistant(a2),
        ChatMessage::user(AGAIN),
        ChatMessage::assistant(READY),
        ChatMessage::user(response_text),
    ]
}

/// One fine-tuning example.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingRecord {
    pub messages: Vec<ChatMessage>,
}

impl TrainingRecord {
    /// The final assistant label.
    pub fn label(&self) -> &str {
        self.messages.last().map(|m| m.content.as_str()).unwrap_or_default()
    }

    /// The tutor response being labeled.
    pub fn response(&self) -> &str {
        self.messages
            .iter()
            .rev()
            .nth(1)
            .map(|m| m.content.as_str())
            .unwrap_or_default()
    }
}

pub fn export_finetune(d: &Dataset, principle: &LessonPrinciple) -> Result<Vec<TrainingRecord>, FinetuneError> {
    if d.scheme != principle.scheme {
        return Err(FinetuneError::SchemeMismatch {
            dataset: d.scheme.clone(),
            principle: principle.scheme.clone(),
        });
    }
    Ok(d.records
        .iter()
        .map(|r| {
            let mut messages = tagging_messages(principle, &r.text);
            messages.push(ChatMessage::assistant(label_json(&d.scheme, &gold_phrases(r, &d.scheme))));
            TrainingRecord { messages }
        })
        .collect())
}

/// One JSON object per line, newline-terminated.
pub fn to_jsonl<T: Serialize>(items: &[T]) -> String {
    let mut out = String::new();
    for it in items {
        out.push_str(&serde_json::to_string(it).expect("serializable"));
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ParseError {
    #[error("no JSON object found in model output")]
    NoJsonFound,
    #[error("invalid JSON: {0}")]
    InvalidJson(String),
    #[error("value for `{key}` must be a list of strings")]
    WrongValueType { key: String },
}

/// First balanced `{...}` block, ignoring braces inside string literals.
fn first_object(raw: &str) -> Option<&str> {
    let start = raw.find('{')?;
    let mut depth = 0usize;
    let mut in_str = false;
    let mut escaped = false;
    for (i, c) in raw[start..].char_indices() {
        if in_str {
            match c {
                _ if escaped => escaped = false,
                '\\' => escaped = true,
                '"' => in_str = false,
                _ => {}
            }
            continue;
        }
        match c {
            '"' => in_str = true,
            '{' => depth += 1,
            '}' => {
                depth -= 1;
                if depth == 0 {
                    return Some(&raw[start..start + i + 1]);
                }
            }
            _ => {}
        }
    }
    None
}

/// Extracts the label JSON from free-form model output.
pub fn parse_prediction(raw: &str, scheme: &Scheme) -> Result<BTreeMap<PraiseLabel, Vec<String>>, ParseError> {
    let block = first_object(raw).ok_or(ParseError::NoJsonFound)?;
    let v: Value = serde_json::from_str(block).map_err(|e| ParseError::InvalidJson(e.to_string()))?;
    let obj = v.as_object().ok_or_else(|| ParseError::InvalidJson("not an object".into()))?;
    let mut out = BTreeMap::new();
    for label in scheme.labels() {
        let phrases = match obj.get(label.key()) {
            None => Vec::new(),
            Some(Value::Array(items)) => items
                .iter()
                .map(|it| {
                    it.as_str().map(str::to_owned).ok_or_else(|| ParseError::WrongValueType {
                        key: label.key().to_string(),
                    })
                })
                .collect::<Result<Vec<_>, _>>()?,
            Some(_) => {
                return Err(ParseError::WrongValueType {
                    key: label.key().to_string(),
                })
            }
        };
        out.insert(label, phrases);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AlignIssue {
    /// The phrase does not occur in the response.
    Unmatched { label: PraiseLabel, phrase: String },
    /// The phrase occurs only over tokens already claimed by an earlier
    /// phrase; just its unclaimed tokens were tagged.
    Partial {
        label: PraiseLabel,
        phrase: String,
        tagged_tokens: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Alignment {
    pub tagged: TaggedResponse,
    pub diagnostics: Vec<AlignIssue>,
}

/// Maps predicted phrases back onto the response's tokens.
///
/// Phrases are visited label by label (effort, outcome, person), each list
/// in order. A phrase claims its leftmost occurrence whose tokens are all
/// unclaimed; failing that, the unclaimed tokens of its leftmost
/// occurrence (reported as partial); failing that, nothing (reported as
/// unmatched). Matching is case-insensitive.
pub fn align_phrases(text: &str, phrases: &BTreeMap<PraiseLabel, Vec<String>>) -> Alignment {
    let tokens = tokenize(text);
    let lowered: Vec<String> = tokens.iter().map(|t| t.text.to_lowercase()).collect();
    let mut tags = vec![Tag::O; tokens.len()];
    let mut diagnostics = Vec::new();

    for (&label, list) in phrases {
        for phrase in list {
            let needle: Vec<String> = tokenize(phrase).into_iter().map(|t| t.text.to_lowercase()).collect();
            let occurrences: Vec<usize> = if needle.is_empty() || needle.len() > lowered.len() {
                Vec::new()
            } else {
                (0..=lowered.len() - needle.len())
                    .filter(|&i| lowered[i..i + needle.len()] == needle[..])
                    .collect()
            };
            let free = |i: usize| tags[i..i + needle.len()].iter().all(|t| *t == Tag::O);
            if let Some(&at) = occurrences.iter().find(|&&i| free(i)) {
                for t in &mut tags[at..at + needle.len()] {
                    *t = Tag::I(label);
                }
            } else if let Some(&at) = occurrences.first() {
                let mut n = 0;
                for t in &mut tags[at..at + needle.len()] {
                    if *t == Tag::O {
                        *t = Tag::I(label);
                        n += 1;
                    }
                }
                diagnostics.push(AlignIssue::Partial {
                    label,
                    phrase: phrase.clone(),
                    tagged_tokens: n,
                });
            } else {
                diagnostics.push(AlignIssue::Unmatched {
                    label,
                    phrase: phrase.clone(),
                });
            }
        }
    }
    Alignment {
        tagged: TaggedResponse::new(tokens, tags),
        diagnostics,
    }
}

/// A line of a predictions file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawPrediction {
    pub id: String,
    pub raw: String,
}

/// A parsed and aligned model prediction.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionRecord {
    pub response_id: String,
    pub raw: String,
    pub parsed: Result<BTreeMap<PraiseLabel, Vec<String>>, ParseError>,
    pub tagged: TaggedResponse,
    pub diagnostics: Vec<AlignIssue>,
}

impl PredictionRecord {
    /// Parses and aligns `raw` against `text`. Unparseable output tags
    /// nothing.
    pub fn build(response_id: &str, text: &str, raw: &str, scheme: &Scheme) -> Self {
        let parsed = parse_prediction(raw, scheme);
        let (tagged, diagnostics) = match &parsed {
            Ok(p) => {
                let a = align_phrases(text, p);
                (a.tagged, a.diagnostics)
            }
            Err(_) => (TaggedResponse::untagged(text), Vec::new()),
        };
        Self {
            response_id: response_id.to_string(),
            raw: raw.to_string(),
            parsed,
            tagged,
            diagnostics,
        }
    }

    pub fn unaligned(&self) -> usize {
        self.diagnostics.len()
    }
}

pub fn read_predictions(path: impl AsRef<Path>) -> Result<Vec<RawPrediction>, FinetuneError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| FinetuneError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_predictions_jsonl(&text, &path.display().to_string())
}

pub fn parse_predictions_jsonl(text: &str, origin: &str) -> Result<Vec<RawPrediction>, FinetuneError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str::<RawPrediction>(l).map_err(|e| FinetuneError::BadLine {
                path: origin.to_string(),
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::PraiseSpan;
    use crate::provider::Role;

    fn eo() -> Scheme {
        Scheme::effort_outcome()
    }

    #[test]
    fn export_matches_published_layout() {
        let d = Dataset::new(
            eo(),
            vec![LabeledResponse::new(
                "g1",
                "Great job! You are a genius!",
                vec![PraiseSpan {
                    label: PraiseLabel::Outcome,
                    start: 0,
                    end: 9,
                }],
            )],
        )
        .unwrap();
        let p = LessonPrinciple::builtin(&eo()).unwrap();
        let recs = export_finetune(&d, &p).unwrap();
        let m = &recs[0].messages;
        assert_eq!(m.len(), 13);
        let roles: Vec<Role> = m.iter().map(|x| x.role).collect();
        assert_eq!(roles[0], Role::System);
        assert!(roles[1..].chunks(2).all(|c| c[0] == Role::User && c[1] == Role::Assistant));
        assert_eq!(m[4].content, r#"{"effort": [], "outcome": ["Great job"]}"#);
        assert_eq!(
            m[8].content,
            r#"{"effort": ["persevering through and striving to solve the problem", "Keep going"], "outcome": []}"#
        );
        assert_eq!(recs[0].label(), r#"{"effort": [], "outcome": ["Great job"]}"#);
        assert_eq!(recs[0].response(), "Great job! You are a genius!");
        assert!(m[1].content.starts_with("The following is the principle"));
        let line = to_jsonl(&recs);
        assert!(line.starts_with(r#"{"messages":[{"role":"system","content":"You are a response evaluator"#));
        assert_eq!(line.lines().count(), 1);
    }

    #[test]
    fn person_scheme_export() {
        let d = Dataset::new(
            Scheme::person(),
            vec![
                LabeledResponse::new(
                    "p1",
                    "You are smart and capable...",
                    vec![PraiseSpan {
                        label: PraiseLabel::Person,
                        start: 8,
                        end: 13,
                    }],
                ),
                LabeledResponse::new("p2", "Keep practicing.", vec![]),
            ],
        )
        .unwrap();
        let recs = export_finetune(&d, &LessonPrinciple::builtin(&Scheme::person()).unwrap()).unwrap();
        assert_eq!(recs[0].label(), r#"{"person": ["smart"]}"#);
        assert_eq!(recs[1].label(), r#"{"person": []}"#);
        assert_eq!(recs[0].messages[4].content, r#"{"person": ["smart"]}"#);
        assert!(recs[0].messages[0].content.contains("'person'"));
    }

    #[test]
    fn empty_record_and_scheme_mismatch() {
        let d = Dataset::new(eo(), vec![LabeledResponse::new("e", "Okay.", vec![])]).unwrap();
        let recs = export_finetune(&d, &LessonPrinciple::builtin(&eo()).unwrap()).unwrap();
        assert_eq!(recs[0].label(), r#"{"effort": [], "outcome": []}"#);
        let wrong = LessonPrinciple::builtin(&Scheme::person()).unwrap();
        assert!(matches!(export_finetune(&d, &wrong), Err(FinetuneError::SchemeMismatch { .. })));
    }

    #[test]
    fn parses_plain_fenced_and_missing() {
        let p = parse_prediction(r#"{"effort": ["Keep going"], "outcome": []}"#, &eo()).unwrap();
        assert_eq!(p[&PraiseLabel::Effort], vec!["Keep going"]);
        assert!(p[&PraiseLabel::Outcome].is_empty());

        let p = parse_prediction("Sure! ```json\n{\"person\": []}\n```", &Scheme::person()).unwrap();
        assert_eq!(p[&PraiseLabel::Person], Vec::<String>::new());

        assert_eq!(parse_prediction("I cannot analyze this.", &eo()), Err(ParseError::NoJsonFound));
        assert_eq!(parse_prediction("{\"effort\": [", &eo()), Err(ParseError::NoJsonFound));
        assert!(matches!(parse_prediction("{effort: []}", &eo()), Err(ParseError::InvalidJson(_))));
        assert_eq!(
            parse_prediction(r#"{"effort": [1]}"#, &eo()),
            Err(ParseError::WrongValueType { key: "effort".into() })
        );
        // Missing keys become empty lists; braces inside strings are ignored.
        let p = parse_prediction(r#"note {"outcome": ["nice {job}"]} trailing {"#, &eo()).unwrap();
        assert_eq!(p[&PraiseLabel::Outcome], vec!["nice {job}"]);
        assert!(p[&PraiseLabel::Effort].is_empty());
    }

    fn phrases(pairs: &[(PraiseLabel, &[&str])]) -> BTreeMap<PraiseLabel, Vec<String>> {
        pairs
            .iter()
            .map(|(l, v)| (*l, v.iter().map(|s| s.to_string()).collect()))
            .collect()
    }

    #[test]
    fn aligns_great_job() {
        let a = align_phrases(
            "Hey Kevin, you did a great job.",
            &phrases(&[(PraiseLabel::Outcome, &["great job"])]),
        );
        let tagged: Vec<usize> = (0..a.tagged.len()).filter(|&i| a.tagged.tags[i].is_inside()).collect();
        assert_eq!(tagged, vec![6, 7]);
        assert!(a.diagnostics.is_empty());
    }

    #[test]
    fn unmatched_phrase_is_a_diagnostic() {
        let a = align_phrases(
            "Hey Kevin, you did a great job.",
            &phrases(&[(PraiseLabel::Effort, &["fantastic effort"])]),
        );
        assert!(a.tagged.tags.iter().all(|t| *t == Tag::O));
        assert_eq!(
            a.diagnostics,
            vec![AlignIssue::Unmatched {
                label: PraiseLabel::Effort,
                phrase: "fantastic effort".into()
            }]
        );
    }

    #[test]
    fn leftmost_unconsumed_occurrence_wins() {
        let text = "Great job today, and great job yesterday.";
        let once = align_phrases(text, &phrases(&[(PraiseLabel::Outcome, &["great job"])]));
        assert_eq!(once.tagged.count(PraiseLabel::Outcome), 2);
        assert!(once.tagged.tags[0].is_inside() && !once.tagged.tags[5].is_inside());
        let twice = align_phrases(text, &phrases(&[(PraiseLabel::Outcome, &["great job", "GREAT JOB"])]));
        assert_eq!(twice.tagged.count(PraiseLabel::Outcome), 4);
    }

    #[test]
    fn conflicting_claims_go_to_the_first_phrase() {
        let text = "Your hard work paid off.";
        let a = align_phrases(
            text,
            &phrases(&[(PraiseLabel::Effort, &["hard work"]), (PraiseLabel::Outcome, &["work paid off"])]),
        );
        assert_eq!(a.tagged.count(PraiseLabel::Effort), 2);
        assert_eq!(a.tagged.count(PraiseLabel::Outcome), 2);
        assert_eq!(
            a.diagnostics,
            vec![AlignIssue::Partial {
                label: PraiseLabel::Outcome,
                phrase: "work paid off".into(),
                tagged_tokens: 2
            }]
        );
    }

    #[test]
    fn predictions_jsonl_errors_name_the_line() {
        let ok = parse_predictions_jsonl("{\"id\":\"a\",\"raw\":\"{}\"}\n\n", "p").unwrap();
        assert_eq!(ok.len(), 1);
        match parse_predictions_jsonl("{\"id\":\"a\"}\n", "p") {
            Err(FinetuneError::BadLine { line, .. }) => assert_eq!(line, 1),
            other => panic!("{other:?}"),
        }
    }
}
