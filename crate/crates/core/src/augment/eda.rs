//! Classic token-level augmentation: synonym replacement, random
//! insertion, random swap and random deletion, applied together.

use crate::corpus::{join_pieces, tags_to_spans, tokenize, Dataset, LabeledResponse, Tag, TaggedResponse, Token};
use crate::rng::SeededRng;

use super::lexicon::{Stopwords, SynonymLexicon};

#[derive(Debug, Clone, PartialEq)]
pub struct EdaConfig {
    pub variants_per_record: usize,
    /// Edit rate; also sets the number of replacements, insertions and swaps.
    pub p_edit: f64,
    pub seed: u64,
    pub enable_deletion: bool,
}

impl EdaConfig {
    pub fn new(variants_per_record: usize, seed: u64) -> Self {
        Self {
            variants_per_record,
            p_edit: 0.1,
            seed,
            enable_deletion: true,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum EdaError {
    #[error("synonym lexicon is empty")]
    EmptyLexicon,
    #[error("p_edit must be in (0, 1), got {0}")]
    InvalidRate(f64),
    #[error("record {id} has no tokens to edit")]
    EmptyRecord { id: String },
    #[error("record {id}: every attempt deleted all tokens")]
    AllDeleted { id: String },
    #[error("edited record {id} is invalid: {reason}")]
    Invalid { id: String, reason: String },
}

const DELETION_RETRIES: usize = 16;

type Seq = Vec<(String, Tag)>;

fn match_case(template: &str, word: &str) -> String {
    if template.chars().next().is_some_and(char::is_uppercase) {
        let mut c = word.chars();
        c.next().map(|f| f.to_uppercase().chain(c).collect()).unwrap_or_default()
    } else {
        word.to_string()
    }
}

fn pieces(word: &str) -> Vec<String> {
    tokenize(word).into_iter().map(|t| t.text).collect()
}

fn replace_synonyms(seq: &mut Seq, n: usize, lex: &SynonymLexicon, stop: &Stopwords, rng: &mut SeededRng) {
    let mut candidates: Vec<usize> = (0..seq.len())
        .filter(|&i| {
            let w = &seq[i].0;
            w.chars().next().is_some_and(char::is_alphanumeric) && !stop.contains(w) && !lex.synonyms(w).is_empty()
        })
        .collect();
    rng.shuffle(&mut candidates);
    let mut chosen: Vec<usize> = candidates.into_iter().take(n).collect();
    chosen.sort_unstable_by(|a, b| b.cmp(a));
    for i in chosen {
        let (word, tag) = seq[i].clone();
        let syn = rng.pick(lex.synonyms(&word)).expect("non-empty").clone();
        let replacement: Seq = pieces(&match_case(&word, &syn)).into_iter().map(|p| (p, tag)).collect();
        seq.splice(i..=i, replacement);
    }
}

fn insert_synonyms(seq: &mut Seq, n: usize, lex: &SynonymLexicon, rng: &mut SeededRng) {
    for _ in 0..n {
        let sources: Vec<usize> = (0..seq.len()).filter(|&i| !lex.synonyms(&seq[i].0).is_empty()).collect();
        let Some(&src) = rng.pick(&sources) else {
            return;
        };
        let syn = rng.pick(lex.synonyms(&seq[src].0)).expect("non-empty").clone();
        let pos = rng.below(seq.len() + 1);
        let tag = if pos > 0 && pos < seq.len() && seq[pos - 1].1 == seq[pos].1 {
            seq[pos].1
        } else {
            Tag::O
        };
        let inserted: Seq = pieces(&syn).into_iter().map(|p| (p, tag)).collect();
        seq.splice(pos..pos, inserted);
    }
}

fn swap_tokens(seq: &mut Seq, n: usize, rng: &mut SeededRng) {
    if seq.len() < 2 {
        return;
    }
    for _ in 0..n {
        let a = rng.below(seq.len());
        let b = rng.below(seq.len());
        seq.swap(a, b);
    }
}

fn delete_tokens(seq: &Seq, p: f64, rng: &mut SeededRng) -> Seq {
    seq.iter().filter(|_| rng.unit() >= p).cloned().collect()
}

/// Rebuilds text and spans from an edited token sequence.
fn detokenize(id: String, seq: &Seq) -> LabeledResponse {
    let (text, starts) = join_pieces(&seq.iter().map(|(w, _)| w.as_str()).collect::<Vec<_>>());
    let tokens: Vec<Token> = seq
        .iter()
        .zip(starts)
        .map(|((w, _), start)| Token {
            text: w.clone(),
            start,
            end: start + w.chars().count(),
        })
        .collect();
    let tagged = TaggedResponse::new(tokens, seq.iter().map(|(_, t)| *t).collect());
    let spans = tags_to_spans(&tagged);
    LabeledResponse::new(id, text, spans)
}

/// One edited copy of `record`'s tagged tokens.
pub fn eda_variant(
    tagged: &TaggedResponse,
    cfg: &EdaConfig,
    lex: &SynonymLexicon,
    stop: &Stopwords,
    rng: &mut SeededRng,
) -> Option<Vec<(String, Tag)>> {
    let n = ((cfg.p_edit * tagged.len() as f64).floor() as usize).max(1);
    for _ in 0..DELETION_RETRIES {
        let mut seq: Seq = tagged.tokens.iter().map(|t| t.text.clone()).zip(tagged.tags.iter().copied()).collect();
        replace_synonyms(&mut seq, n, lex, stop, rng);
        insert_synonyms(&mut seq, n, lex, rng);
        swap_tokens(&mut seq, n, rng);
        if cfg.enable_deletion {
            seq = delete_tokens(&seq, cfg.p_edit, rng);
        }
        if !seq.is_empty() {
            return Some(seq);
        }
    }
    None
}

/// `variants_per_record` edited copies of every record, ids `{id}#eda{k}`.
///
/// Only synthetic records are returned, ordered round-robin (`r1#eda1`,
/// `r2#eda1`, ..., `r1#eda2`, ...). Each record draws from its own stream
/// derived from `(seed, id)`.
pub fn eda_augment(d: &Dataset, cfg: &EdaConfig, lex: &SynonymLexicon, stop: &Stopwords) -> Result<Dataset, EdaError> {
    if lex.is_empty() {
        return Err(EdaError::EmptyLexicon);
    }
    if !(cfg.p_edit > 0.0 && cfg.p_edit < 1.0) {
        return Err(EdaError::InvalidRate(cfg.p_edit));
    }
    let mut per_record: Vec<Vec<LabeledResponse>> = Vec::with_capacity(d.len());
    for r in &d.records {
        let tagged = r.spans_to_tags().map_err(|e| EdaError::Invalid {
            id: r.id.clone(),
            reason: e.to_string(),
        })?;
        if tagged.is_empty() {
            return Err(EdaError::EmptyRecord { id: r.id.clone() });
        }
        let mut rng = SeededRng::derive(cfg.seed, &r.id);
        let mut out = Vec::with_capacity(cfg.variants_per_record);
        for k in 1..=cfg.variants_per_record {
            let seq = eda_variant(&tagged, cfg, lex, stop, &mut rng).ok_or_else(|| EdaError::AllDeleted { id: r.id.clone() })?;
            out.push(detokenize(format!("{}#eda{k}", r.id), &seq));
        }
        per_record.push(out);
    }
    let mut records = Vec::with_capacity(d.len() * cfg.variants_per_record);
    for k in 0..cfg.variants_per_record {
        records.extend(per_record.iter().map(|v| v[k].clone()));
    }
    Dataset::new(d.scheme.clone(), records).map_err(|e| EdaError::Invalid {
        id: e.record_id().unwrap_or_default().to_string(),
        reason: e.to_string(),
    })
}
