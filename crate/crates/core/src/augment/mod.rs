//! Compositional augmentation: split each response into same-tag segments,
//! ask a chat model for synonym rewrites of each segment, and recombine the
//! rewrites into new labeled responses. Also hosts the EDA baseline.

mod compose;
mod eda;
mod lexicon;
mod sanitize;

use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use crate::corpus::{Dataset, DatasetError, LabeledResponse, Tag};
use crate::provider::{ChatMessage, CompletionProvider, CompletionRequest, ProviderError};
use crate::rng::SeededRng;

pub use compose::{assemble, decompose, recombine, Recombination, Segment, VariantSet};
pub use eda::{eda_augment, eda_variant, EdaConfig, EdaError};
pub use lexicon::{LexiconError, Stopwords, SynonymLexicon};
pub use sanitize::{clean_line, sanitize};

const SYSTEM_PROMPT: &str = "You are required to rephrase the text in English through synonym replacement, ensuring the original context and meaning are preserved.";

/// O segments shorter than this keep only their original text.
pub const MIN_O_SEGMENT_TOKENS: usize = 2;

/// The synonym-rewrite request for one segment.
pub fn augmentation_request(text: &str, n: usize, temperature: f64, model: &str) -> CompletionRequest {
    let user = format!(
        "Please note that the sentence structure and format must be preserved, with synonyms used only where they maintain the original meaning. Retain words and ideas from the original response in English. Maintain similar lengths to the original text. Please generate {n} unique sentences in English by applying synonym replacements to the text provided below. One item per line, do not include numbers or bullet points. Here is the text: {text}"
    );
    CompletionRequest::new(
        model,
        vec![ChatMessage::system(SYSTEM_PROMPT), ChatMessage::user(user)],
        temperature,
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct AugmentPlan {
    /// Output size as a multiple of the input size.
    pub multiplier: usize,
    pub n_synonyms: usize,
    pub temperature: f64,
    /// Seeds recombination; each record gets a stream derived from its id.
    pub seed: u64,
    /// Overrides the provider's default model.
    pub model: Option<String>,
    /// Provider calls in flight at once.
    pub concurrency: usize,
}

impl AugmentPlan {
    pub fn new(multiplier: usize, seed: u64) -> Self {
        Self {
            multiplier,
            n_synonyms: 15,
            temperature: 0.0,
            seed,
            model: None,
            concurrency: 4,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum AugmentError {
    #[error("multiplier must be at least 1")]
    ZeroMultiplier,
    #[error("n_synonyms must be at least 1")]
    ZeroSynonyms,
    #[error("record {id}: {source}")]
    Span {
        id: String,
        #[source]
        source: crate::corpus::SpanError,
    },
    #[error("provider failed on record {record_id} after {completed_records} of {total_records} record(s) had all variants: {source}")]
    Provider {
        record_id: String,
        completed_records: usize,
        total_records: usize,
        #[source]
        source: ProviderError,
    },
    #[error("augmented dataset is invalid: {0}")]
    Invalid(#[from] DatasetError),
}

/// Augmented dataset plus non-fatal notes (empty variant lists, pool
/// exhaustion).
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentOutcome {
    pub dataset: Dataset,
    pub warnings: Vec<String>,
}

type CacheKey = (String, usize, u64);

/// Runs augmentation against one provider, caching rewrites by
/// `(segment text, n_synonyms, temperature)`.
pub struct Augmenter<P> {
    provider: P,
    cache: Mutex<HashMap<CacheKey, Vec<String>>>,
    calls: AtomicUsize,
}

impl<P: CompletionProvider> Augmenter<P> {
    pub fn new(provider: P) -> Self {
        Self {
            provider,
            cache: Mutex::new(HashMap::new()),
            calls: AtomicUsize::new(0),
        }
    }

    /// Provider calls made so far (cache hits excluded).
    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::Relaxed)
    }

    fn key(text: &str, plan: &AugmentPlan) -> CacheKey {
        (text.to_string(), plan.n_synonyms, plan.temperature.to_bits())
    }

    fn wants_rewrites(seg: &Segment) -> bool {
        seg.tag != Tag::O || seg.token_count() >= MIN_O_SEGMENT_TOKENS
    }

    fn fetch(&self, text: &str, plan: &AugmentPlan) -> Result<Vec<String>, ProviderError> {
        let key = Self::key(text, plan);
        if let Some(hit) = self.cache.lock().expect("cache lock").get(&key) {
            return Ok(hit.clone());
        }
        let model = plan.model.as_deref().unwrap_or_else(|| self.provider.default_model());
        let req = augmentation_request(text, plan.n_synonyms, plan.temperature, model);
        self.calls.fetch_add(1, Ordering::Relaxed);
        let raw = self.provider.complete(&req)?;
        let clean = sanitize(&raw, text, plan.n_synonyms);
        self.cache.lock().expect("cache lock").insert(key, clean.clone());
        Ok(clean)
    }

    /// Variants for one segment. The second value is a warning when the
    /// provider returned nothing usable.
    pub fn generate_variants(
        &self,
        index: usize,
        seg: &Segment,
        plan: &AugmentPlan,
    ) -> Result<(VariantSet, Option<String>), ProviderError> {
        let mut set = VariantSet::original(index, seg);
        if !Self::wants_rewrites(seg) {
            return Ok((set, None));
        }
        let rewrites = self.fetch(&seg.text, plan)?;
        let warning = rewrites
            .is_empty()
            .then(|| format!("no usable rewrites for {:?}; keeping the original only", seg.text));
        set.variants.extend(rewrites);
        Ok((set, warning))
    }

    /// Fills the cache for `texts` using up to `plan.concurrency` threads.
    /// Returns the first failing text with its error.
    fn prefetch(&self, texts: &[String], plan: &AugmentPlan) -> Result<(), (String, ProviderError)> {
        let next = AtomicUsize::new(0);
        let failure: Mutex<Option<(usize, String, ProviderError)>> = Mutex::new(None);
        let workers = plan.concurrency.max(1).min(texts.len());
        std::thread::scope(|s| {
            for _ in 0..workers {
                s.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::Relaxed);
                    if i >= texts.len() || failure.lock().expect("lock").is_some() {
                        return;
                    }
                    if let Err(e) = self.fetch(&texts[i], plan) {
                        let mut f = failure.lock().expect("lock");
                        if f.as_ref().is_none_or(|(j, _, _)| i < *j) {
                            *f = Some((i, texts[i].clone(), e));
                        }
                        return;
                    }
                });
            }
        });
        match failure.into_inner().expect("lock") {
            Some((_, text, e)) => Err((text, e)),
            None => Ok(()),
        }
    }

    /// Grows `d` to `multiplier × |d|` records: the originals, then
    /// `multiplier - 1` recombinations per record, interleaved round-robin
    /// (`r1#aug1`, `r2#aug1`, ..., `r1#aug2`, ...).
    pub fn augment_dataset(&self, d: &Dataset, plan: &AugmentPlan) -> Result<AugmentOutcome, AugmentError> {
        if plan.multiplier == 0 {
            return Err(AugmentError::ZeroMultiplier);
        }
        if plan.n_synonyms == 0 {
            return Err(AugmentError::ZeroSynonyms);
        }
        if plan.multiplier == 1 {
            return Ok(AugmentOutcome {
                dataset: d.clone(),
                warnings: Vec::new(),
            });
        }

        let mut segmented = Vec::with_capacity(d.len());
        for r in &d.records {
            let tagged = r.spans_to_tags().map_err(|source| AugmentError::Span {
                id: r.id.clone(),
                source,
            })?;
            segmented.push(decompose(&r.text, &tagged));
        }

        let mut pending: Vec<String> = Vec::new();
        for seg in segmented.iter().flatten().filter(|s| Self::wants_rewrites(s)) {
            if !pending.contains(&seg.text) {
                pending.push(seg.text.clone());
            }
        }
        if let Err((text, source)) = self.prefetch(&pending, plan) {
            let cache = self.cache.lock().expect("cache lock");
            let done = |segs: &Vec<Segment>| {
                segs.iter()
                    .filter(|s| Self::wants_rewrites(s))
                    .all(|s| cache.contains_key(&Self::key(&s.text, plan)))
            };
            let record_id = d
                .records
                .iter()
                .zip(&segmented)
                .find(|(_, segs)| segs.iter().any(|s| s.text == text))
                .map(|(r, _)| r.id.clone())
                .unwrap_or_default();
            return Err(AugmentError::Provider {
                record_id,
                completed_records: segmented.iter().filter(|s| done(s)).count(),
                total_records: d.len(),
                source,
            });
        }

        let mut warnings = Vec::new();
        let mut synthetic: Vec<Vec<LabeledResponse>> = Vec::with_capacity(d.len());
        for (r, segs) in d.records.iter().zip(&segmented) {
            let mut sets = Vec::with_capacity(segs.len());
            for (i, seg) in segs.iter().enumerate() {
                let (set, warning) = self
                    .generate_variants(i, seg, plan)
                    .map_err(|source| AugmentError::Provider {
                        record_id: r.id.clone(),
                        completed_records: synthetic.len(),
                        total_records: d.len(),
                        source,
                    })?;
                warnings.extend(warning.map(|w| format!("{}: {w}", r.id)));
                sets.push(set);
            }
            let mut rng = SeededRng::derive(plan.seed, &r.id);
            let out = recombine(&r.id, &sets, plan.multiplier - 1, &mut rng);
            warnings.extend(out.warning);
            synthetic.push(out.responses);
        }

        let mut records = d.records.clone();
        for k in 0..plan.multiplier - 1 {
            records.extend(synthetic.iter().map(|v| v[k].clone()));
        }
        Ok(AugmentOutcome {
            dataset: Dataset::new(d.scheme.clone(), records)?,
            warnings,
        })
    }
}

/// One-shot helper around [`Augmenter::augment_dataset`].
pub fn augment_dataset<P: CompletionProvider>(
    d: &Dataset,
    plan: &AugmentPlan,
    provider: P,
) -> Result<AugmentOutcome, AugmentError> {
    Augmenter::new(provider).augment_dataset(d, plan)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{PraiseLabel, PraiseSpan, Scheme};
    use crate::provider::MockProvider;

    fn five() -> Dataset {
        let records = (0..5)
            .map(|i| {
                LabeledResponse::new(
                    format!("r{i}"),
                    format!("Hey Sam, good job! Your hard effort shows, number {i}."),
                    vec![
                        PraiseSpan {
                            label: PraiseLabel::Outcome,
                            start: 9,
                            end: 17,
                        },
                        PraiseSpan {
                            label: PraiseLabel::Effort,
                            start: 24,
                            end: 35,
                        },
                    ],
                )
            })
            .collect();
        Dataset::new(Scheme::effort_outcome(), records).unwrap()
    }

    #[test]
    fn prompt_text_is_verbatim() {
        let req = augmentation_request("You did a perfect job!", 15, 0.0, "gpt-4o");
        assert_eq!(req.temperature, 0.0);
        assert!(req.messages[0].content.starts_with("You are required to rephrase the text in English"));
        let user = &req.messages[1].content;
        assert!(user.contains("Please generate 15 unique sentences in English"));
        assert!(user.ends_with("One item per line, do not include numbers or bullet points. Here is the text: You did a perfect job!"));
    }

    #[test]
    fn five_records_times_three_is_fifteen() {
        let out = augment_dataset(&five(), &AugmentPlan::new(3, 1), MockProvider::new(0)).unwrap();
        assert_eq!(out.dataset.len(), 15);
        let ids: Vec<&str> = out.dataset.records.iter().map(|r| r.id.as_str()).collect();
        assert_eq!(&ids[..7], &["r0", "r1", "r2", "r3", "r4", "r0#aug1", "r1#aug1"]);
        assert_eq!(ids[14], "r4#aug2");
        for r in &out.dataset.records[5..] {
            let labels: Vec<PraiseLabel> = r.sorted_spans().iter().map(|s| s.label).collect();
            assert_eq!(labels, [PraiseLabel::Outcome, PraiseLabel::Effort], "{}", r.text);
        }
    }

    #[test]
    fn multiplier_one_is_identity_and_makes_no_calls() {
        let aug = Augmenter::new(MockProvider::new(0));
        let out = aug.augment_dataset(&five(), &AugmentPlan::new(1, 1)).unwrap();
        assert_eq!(out.dataset, five());
        assert_eq!(aug.calls(), 0);
    }

    #[test]
    fn repeated_segments_hit_the_cache() {
        let aug = Augmenter::new(MockProvider::new(0));
        aug.augment_dataset(&five(), &AugmentPlan::new(2, 1)).unwrap();
        // Four segments shared by every record plus five distinct tails.
        assert_eq!(aug.calls(), 4 + 5);
        let before = aug.calls();
        aug.augment_dataset(&five(), &AugmentPlan::new(4, 2)).unwrap();
        assert_eq!(aug.calls(), before);
    }

    #[test]
    fn variants_are_deterministic_and_short_o_segments_skipped() {
        let aug = Augmenter::new(MockProvider::new(4));
        let r = &five().records[0];
        let segs = decompose(&r.text, &r.spans_to_tags().unwrap());
        let plan = AugmentPlan::new(2, 0);
        let (a, _) = aug.generate_variants(1, &segs[1], &plan).unwrap();
        let (b, _) = Augmenter::new(MockProvider::new(4)).generate_variants(1, &segs[1], &plan).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.variants.len(), 16);
        assert_eq!(a.variants[0], "good job");
        let comma = Segment {
            tag: Tag::O,
            text: ",".into(),
            token_range: (2, 2),
        };
        let (c, w) = aug.generate_variants(0, &comma, &plan).unwrap();
        assert_eq!(c.variants, vec![","]);
        assert!(w.is_none());
    }

    struct Noisy;
    impl CompletionProvider for Noisy {
        fn complete(&self, _: &CompletionRequest) -> Result<String, ProviderError> {
            Ok("Sure, here is the synonym: You executed a commendable operation!\n1. \"Laudable work is done by you!\"\nSure".into())
        }
        fn default_model(&self) -> &str {
            "noisy"
        }
    }

    #[test]
    fn noisy_output_is_sanitized() {
        let seg = Segment {
            tag: Tag::I(PraiseLabel::Outcome),
            text: "You did a perfect job!".into(),
            token_range: (0, 5),
        };
        let (set, _) = Augmenter::new(Noisy).generate_variants(0, &seg, &AugmentPlan::new(2, 0)).unwrap();
        assert_eq!(
            set.variants,
            vec!["You did a perfect job!", "You executed a commendable operation!", "Laudable work is done by you!"]
        );
    }

    struct Failing;
    impl CompletionProvider for Failing {
        fn complete(&self, req: &CompletionRequest) -> Result<String, ProviderError> {
            if req.last_user().unwrap().ends_with("hard effort") {
                Err(ProviderError::RateLimited { attempts: 5 })
            } else {
                Ok("a\nb".into())
            }
        }
        fn default_model(&self) -> &str {
            "f"
        }
    }

    #[test]
    fn provider_failure_reports_progress() {
        let mut plan = AugmentPlan::new(2, 0);
        plan.concurrency = 1;
        match augment_dataset(&five(), &plan, Failing) {
            Err(AugmentError::Provider {
                record_id,
                completed_records,
                total_records,
                ..
            }) => {
                assert_eq!(record_id, "r0");
                assert_eq!(completed_records, 0);
                assert_eq!(total_records, 5);
            }
            other => panic!("{other:?}"),
        }
    }
}
