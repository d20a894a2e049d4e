//! Responses, spans, tokenization, IO tagging and dataset files.

mod dataset;
mod label;
mod lengths;
mod tagging;
mod tokenize;

pub use dataset::{split_dataset, subset, Dataset, DatasetError};
pub use label::{PraiseLabel, Scheme, Tag, UnknownLabel};
pub use lengths::{span_length_stats, SpanLengthStats};
pub use tagging::{spans_to_tags, tags_to_spans, LabeledResponse, PraiseSpan, SpanError, TaggedResponse};
pub use tokenize::{char_len, char_slice, tokenize, Token};

pub(crate) use tokenize::join_pieces;
