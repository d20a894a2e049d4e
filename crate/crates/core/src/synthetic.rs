//! Bundled toy corpus for offline experiments.
//!
//! Every response follows `"{greeting} {name}, {outcome}! {lead-in} your
//! {effort} {tail}."` Outcome phrases are an adjective from substitution
//! group 0 plus a noun from group 1; effort phrases pair groups 2 and 3.
//! A phrase `(a, b)` (indices into the two groups) goes to the train pool
//! when `a + b` is even and to the test pool otherwise, so no test span
//! ever appears in training data, while the mock provider's rewrites of a
//! train phrase can reach test phrases. Non-span text avoids every word in
//! the substitution groups.

use crate::corpus::{char_len, Dataset, LabeledResponse, PraiseLabel, PraiseSpan, Scheme};
use crate::provider::SUBSTITUTION_GROUPS;
use crate::rng::SeededRng;

/// Seed and sizes used for the bundled files.
pub const BUNDLED_SEED: u64 = 2024;
pub const BUNDLED_TRAIN: usize = 50;
pub const BUNDLED_TEST: usize = 50;

const TRAIN_JSON: &str = include_str!("../resources/synthetic_train.json");
const TEST_JSON: &str = include_str!("../resources/synthetic_test.json");

const GREETINGS: &[&str] = &["Hey", "Hi", "Hello", "Okay"];
const NAMES: &[&str] = &["Sam", "Kevin", "Maria", "Ava", "Noah", "Liam", "Mia", "Zoe", "Omar", "Priya", "Jonas", "Lena"];
const LEAD_INS: &[&str] = &["I noticed", "I can see", "Thanks for", "I appreciate", "We all saw"];
const TAILS: &[&str] = &["today", "on this problem", "in class", "this week", "with fractions", "on the quiz", "during the lesson"];

fn phrases(adjectives: usize, nouns: usize, parity: usize) -> Vec<String> {
    let (adj, noun) = (SUBSTITUTION_GROUPS[adjectives], SUBSTITUTION_GROUPS[nouns]);
    let mut out = Vec::new();
    for (a, x) in adj.iter().enumerate() {
        for (b, y) in noun.iter().enumerate() {
            if (a + b) % 2 == parity {
                out.push(format!("{x} {y}"));
            }
        }
    }
    out
}

fn records(prefix: &str, n: usize, parity: usize, rng: &mut SeededRng) -> Vec<LabeledResponse> {
    let outcomes = phrases(0, 1, parity);
    let efforts = phrases(2, 3, parity);
    (0..n)
        .map(|i| {
            let pick = |rng: &mut SeededRng, xs: &[&'static str]| *rng.pick(xs).expect("non-empty");
            let greet = pick(rng, GREETINGS);
            let name = pick(rng, NAMES);
            let outcome = rng.pick(&outcomes).expect("non-empty").clone();
            let lead = pick(rng, LEAD_INS);
            let effort = rng.pick(&efforts).expect("non-empty").clone();
            let tail = pick(rng, TAILS);

            let head = format!("{greet} {name}, ");
            let o_start = char_len(&head);
            let mid = format!("{head}{outcome}! {lead} your ");
            let e_start = char_len(&mid);
            let text = format!("{mid}{effort} {tail}.");
            LabeledResponse::new(
                format!("{prefix}{:03}", i + 1),
                text,
                vec![
                    PraiseSpan {
                        label: PraiseLabel::Outcome,
                        start: o_start,
                        end: o_start + char_len(&outcome),
                    },
                    PraiseSpan {
                        label: PraiseLabel::Effort,
                        start: e_start,
                        end: e_start + char_len(&effort),
                    },
                ],
            )
        })
        .collect()
}

/// Generates `(train, test)` with ids `train001...` and `test001...`.
pub fn generate(n_train: usize, n_test: usize, seed: u64) -> (Dataset, Dataset) {
    let mut rng = SeededRng::new(seed);
    let train = records("train", n_train, 0, &mut rng);
    let test = records("test", n_test, 1, &mut rng);
    let scheme = Scheme::effort_outcome();
    (
        Dataset::new(scheme.clone(), train).expect("generated spans are valid"),
        Dataset::new(scheme, test).expect("generated spans are valid"),
    )
}

/// The bundled 50-record train set.
pub fn bundled_train() -> Dataset {
    Dataset::from_json(TRAIN_JSON).expect("bundled train set is valid")
}

/// The bundled 50-record test set.
pub fn bundled_test() -> Dataset {
    Dataset::from_json(TEST_JSON).expect("bundled test set is valid")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::provider::FILLERS;
    use std::collections::HashSet;

    #[test]
    fn bundled_files_match_the_generator() {
        let (train, test) = generate(BUNDLED_TRAIN, BUNDLED_TEST, BUNDLED_SEED);
        assert_eq!(train.to_json(), TRAIN_JSON);
        assert_eq!(test.to_json(), TEST_JSON);
    }

    #[test]
    #[ignore = "rewrites the bundled corpus files"]
    fn regenerate_bundled_files() {
        let (train, test) = generate(BUNDLED_TRAIN, BUNDLED_TEST, BUNDLED_SEED);
        let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("resources");
        train.save(dir.join("synthetic_train.json")).unwrap();
        test.save(dir.join("synthetic_test.json")).unwrap();
    }

    fn span_texts(d: &Dataset) -> HashSet<String> {
        d.records
            .iter()
            .flat_map(|r| r.spans.iter().map(|s| r.span_text(s).to_lowercase()))
            .collect()
    }

    #[test]
    fn pools_are_disjoint_and_context_is_clean() {
        let (train, test) = generate(40, 40, 7);
        assert!(span_texts(&train).is_disjoint(&span_texts(&test)));
        let table: HashSet<&str> = SUBSTITUTION_GROUPS.iter().flat_map(|g| g.iter().copied()).chain(FILLERS.iter().copied()).collect();
        for w in GREETINGS.iter().chain(NAMES).chain(LEAD_INS).chain(TAILS) {
            for t in w.split(' ') {
                assert!(!table.contains(t.to_lowercase().as_str()), "{t}");
            }
        }
    }
}
