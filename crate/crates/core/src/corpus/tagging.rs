use serde::{Deserialize, Serialize};

use super::label::{PraiseLabel, Tag};
use super::tokenize::{char_len, char_slice, tokenize, Token};

/// A labeled char range `[start, end)` of a response.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PraiseSpan {
    pub label: PraiseLabel,
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledResponse {
    pub id: String,
    pub text: String,
    #[serde(default)]
    pub spans: Vec<PraiseSpan>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SpanError {
    #[error("span {start}..{end} is empty or reversed")]
    EmptySpan { start: usize, end: usize },
    #[error("span {start}..{end} exceeds text length {len}")]
    OutOfBounds { start: usize, end: usize, len: usize },
    #[error("span {start}..{end} splits a token")]
    MisalignedSpan { start: usize, end: usize },
    #[error("spans {first:?} and {second:?} overlap")]
    OverlappingSpans { first: (usize, usize), second: (usize, usize) },
    #[error("{label} spans {first:?} and {second:?} touch with no token between them; IO tags cannot separate them")]
    AdjacentSpans {
        label: PraiseLabel,
        first: (usize, usize),
        second: (usize, usize),
    },
}

impl LabeledResponse {
    pub fn new(id: impl Into<String>, text: impl Into<String>, spans: Vec<PraiseSpan>) -> Self {
        Self {
            id: id.into(),
            text: text.into(),
            spans,
        }
    }

    /// Surface text of a span.
    pub fn span_text(&self, span: &PraiseSpan) -> &str {
        char_slice(&self.text, span.start, span.end)
    }

    /// Spans sorted by start offset.
    pub fn sorted_spans(&self) -> Vec<PraiseSpan> {
        let mut spans = self.spans.clone();
        spans.sort_by_key(|s| (s.start, s.end));
        spans
    }

    /// Checks bounds, overlap, and token alignment.
    pub fn validate(&self) -> Result<(), SpanError> {
        self.spans_to_tags().map(|_| ())
    }

    /// Projects the spans onto the shared tokenization.
    pub fn spans_to_tags(&self) -> Result<TaggedResponse, SpanError> {
        spans_to_tags(self)
    }
}

/// Tokens with one IO tag each.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaggedResponse {
    pub tokens: Vec<Token>,
    pub tags: Vec<Tag>,
}

impl TaggedResponse {
    pub fn new(tokens: Vec<Token>, tags: Vec<Tag>) -> Self {
        assert_eq!(tokens.len(), tags.len(), "one tag per token");
        Self { tokens, tags }
    }

    /// Tokenizes `text` and tags everything `O`.
    pub fn untagged(text: &str) -> Self {
        let tokens = tokenize(text);
        let tags = vec![Tag::O; tokens.len()];
        Self { tokens, tags }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Number of tokens carrying `label`.
    pub fn count(&self, label: PraiseLabel) -> usize {
        self.tags.iter().filter(|t| **t == Tag::I(label)).count()
    }

    pub fn to_spans(&self) -> Vec<PraiseSpan> {
        tags_to_spans(self)
    }
}

/// Tags every token inside a span with the span's label, all others `O`.
pub fn spans_to_tags(response: &LabeledResponse) -> Result<TaggedResponse, SpanError> {
    let tokens = tokenize(&response.text);
    let len = char_len(&response.text);
    let spans = response.sorted_spans();

    for s in &spans {
        if s.start >= s.end {
            return Err(SpanError::EmptySpan { start: s.start, end: s.end });
        }
        if s.end > len {
            return Err(SpanError::OutOfBounds { start: s.start, end: s.end, len });
        }
    }
    for w in spans.windows(2) {
        if w[1].start < w[0].end {
            return Err(SpanError::OverlappingSpans {
                first: (w[0].start, w[0].end),
                second: (w[1].start, w[1].end),
            });
        }
    }

    let mut tags = vec![Tag::O; tokens.len()];
    let mut last: Option<(PraiseSpan, usize)> = None;
    for s in &spans {
        let first = tokens.iter().position(|t| t.start == s.start);
        let last_tok = tokens.iter().position(|t| t.end == s.end);
        let (first, last_tok) = match (first, last_tok) {
            (Some(a), Some(b)) if a <= b => (a, b),
            _ => return Err(SpanError::MisalignedSpan { start: s.start, end: s.end }),
        };
        if let Some((prev, prev_last)) = last {
            if prev.label == s.label && prev_last + 1 == first {
                return Err(SpanError::AdjacentSpans {
                    label: s.label,
                    first: (prev.start, prev.end),
                    second: (s.start, s.end),
                });
            }
        }
        for t in &mut tags[first..=last_tok] {
            *t = Tag::I(s.label);
        }
        last = Some((*s, last_tok));
    }
    Ok(TaggedResponse { tokens, tags })
}

/// One span per maximal run of identical non-`O` tags.
pub fn tags_to_spans(tagged: &TaggedResponse) -> Vec<PraiseSpan> {
    let mut spans = Vec::new();
    let mut i = 0;
    while i < tagged.tags.len() {
        match tagged.tags[i] {
            Tag::O => i += 1,
            Tag::I(label) => {
                let mut j = i;
                while j + 1 < tagged.tags.len() && tagged.tags[j + 1] == Tag::I(label) {
                    j += 1;
                }
                spans.push(PraiseSpan {
                    label,
                    start: tagged.tokens[i].start,
                    end: tagged.tokens[j].end,
                });
                i = j + 1;
            }
        }
    }
    spans
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use PraiseLabel::*;

    fn span(label: PraiseLabel, start: usize, end: usize) -> PraiseSpan {
        PraiseSpan { label, start, end }
    }

    #[test]
    fn person_praise_on_last_token() {
        let r = LabeledResponse::new("f1", "You are so smart", vec![span(Person, 11, 16)]);
        let t = r.spans_to_tags().unwrap();
        assert_eq!(t.tags, vec![Tag::O, Tag::O, Tag::O, Tag::I(Person)]);
    }

    #[test]
    fn no_spans_means_all_outside() {
        let r = LabeledResponse::new("x", "Nice, let's do it again.", vec![]);
        let t = r.spans_to_tags().unwrap();
        assert!(t.tags.iter().all(|t| *t == Tag::O));
    }

    #[test]
    fn outcome_span_over_great_job() {
        let r = LabeledResponse::new("t1", "Hey Kevin, you did a great job.", vec![span(Outcome, 21, 30)]);
        let t = r.spans_to_tags().unwrap();
        let o = Tag::O;
        let io = Tag::I(Outcome);
        assert_eq!(t.tags, vec![o, o, o, o, o, o, io, io, o]);
    }

    #[test]
    fn rejects_token_splitting_span() {
        let r = LabeledResponse::new("t1", "Hey Kevin, you did a great job.", vec![span(Outcome, 22, 30)]);
        assert!(matches!(r.validate(), Err(SpanError::MisalignedSpan { .. })));
    }

    #[test]
    fn rejects_overlap_and_overflow() {
        let text = "Hey Kevin, you did a great job.";
        let r = LabeledResponse::new("t", text, vec![span(Outcome, 21, 30), span(Effort, 15, 26)]);
        assert!(matches!(r.validate(), Err(SpanError::OverlappingSpans { .. })));
        let r = LabeledResponse::new("t", text, vec![span(Outcome, 21, 40)]);
        assert!(matches!(r.validate(), Err(SpanError::OutOfBounds { .. })));
        let r = LabeledResponse::new("t", text, vec![span(Outcome, 5, 5)]);
        assert!(matches!(r.validate(), Err(SpanError::EmptySpan { .. })));
    }

    #[test]
    fn rejects_touching_same_label_spans() {
        let r = LabeledResponse::new("t", "great job well done", vec![span(Outcome, 0, 9), span(Outcome, 10, 19)]);
        assert!(matches!(r.validate(), Err(SpanError::AdjacentSpans { .. })));
        // Different labels may touch.
        let r = LabeledResponse::new("t", "great job well done", vec![span(Outcome, 0, 9), span(Effort, 10, 19)]);
        assert!(r.validate().is_ok());
    }

    fn tagged(tags: Vec<Tag>) -> TaggedResponse {
        let words: Vec<String> = (0..tags.len()).map(|i| format!("w{i}")).collect();
        TaggedResponse::new(tokenize(&words.join(" ")), tags)
    }

    #[test]
    fn single_effort_run() {
        let t = tagged(vec![Tag::O, Tag::O, Tag::I(Effort), Tag::I(Effort), Tag::O]);
        let spans = t.to_spans();
        assert_eq!(spans, vec![span(Effort, t.tokens[2].start, t.tokens[3].end)]);
        assert!(tagged(vec![Tag::O; 4]).to_spans().is_empty());
    }

    #[test]
    fn runs_separated_by_outside_split() {
        let t = tagged(vec![Tag::I(Outcome), Tag::O, Tag::I(Outcome)]);
        let spans = t.to_spans();
        assert_eq!(spans.len(), 2);
        assert_eq!((spans[0].start, spans[0].end), (0, 2));
        assert_eq!((spans[1].start, spans[1].end), (6, 8));
    }

    fn arb_tag() -> impl Strategy<Value = Tag> {
        prop_oneof![
            3 => Just(Tag::O),
            1 => Just(Tag::I(Effort)),
            1 => Just(Tag::I(Outcome)),
            1 => Just(Tag::I(Person)),
        ]
    }

    proptest! {
        #[test]
        fn tags_spans_tags_is_identity(
            words in proptest::collection::vec("[a-z]{1,5}|[,.!]", 0..20),
            tags in proptest::collection::vec(arb_tag(), 20),
        ) {
            let text = words.join(" ");
            let tokens = tokenize(&text);
            let tags = tags[..tokens.len()].to_vec();
            let t = TaggedResponse::new(tokens, tags);
            let r = LabeledResponse::new("p", text.clone(), t.to_spans());
            let back = r.spans_to_tags().unwrap();
            prop_assert_eq!(&back.tags, &t.tags);
            // Spans round trip too.
            prop_assert_eq!(back.to_spans(), r.spans.clone());
            // Tag count equals the summed token length of the spans.
            for l in PraiseLabel::ALL {
                let span_tokens: usize = r.spans.iter().filter(|s| s.label == l)
                    .map(|s| back.tokens.iter().filter(|tk| tk.start >= s.start && tk.end <= s.end).count())
                    .sum();
                prop_assert_eq!(back.count(l), span_tokens);
            }
        }
    }
}
