use std::collections::HashSet;

use crate::corpus::{char_len, char_slice, join_pieces, LabeledResponse, PraiseSpan, Tag, TaggedResponse};
use crate::rng::SeededRng;

/// A maximal run of tokens sharing one tag.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Segment {
    pub tag: Tag,
    pub text: String,
    /// First and last token index, inclusive.
    pub token_range: (usize, usize),
}

impl Segment {
    pub fn token_count(&self) -> usize {
        self.token_range.1 - self.token_range.0 + 1
    }
}

/// Splits a tagged response into maximal same-tag runs. Each segment's
/// text is the slice of `text` from its first token to its last.
pub fn decompose(text: &str, tagged: &TaggedResponse) -> Vec<Segment> {
    let mut out: Vec<Segment> = Vec::new();
    for (i, tag) in tagged.tags.iter().enumerate() {
        match out.last_mut() {
            Some(seg) if seg.tag == *tag => seg.token_range.1 = i,
            _ => out.push(Segment {
                tag: *tag,
                text: String::new(),
                token_range: (i, i),
            }),
        }
    }
    for seg in &mut out {
        let (a, b) = seg.token_range;
        seg.text = char_slice(text, tagged.tokens[a].start, tagged.tokens[b].end).to_string();
    }
    out
}

/// Candidate texts for one segment. Index 0 is the original.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VariantSet {
    pub segment_index: usize,
    pub tag: Tag,
    pub variants: Vec<String>,
}

impl VariantSet {
    /// A set holding only the original text.
    pub fn original(segment_index: usize, seg: &Segment) -> Self {
        Self {
            segment_index,
            tag: seg.tag,
            variants: vec![seg.text.clone()],
        }
    }
}

/// Output of [`recombine`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Recombination {
    pub responses: Vec<LabeledResponse>,
    /// Set when the variant pool ran out and duplicates were emitted.
    pub warning: Option<String>,
}

const RANDOM_ATTEMPTS: usize = 64;
const ENUMERATION_LIMIT: u128 = 1_000_000;

/// Builds the text and spans for one choice of variant per segment.
pub fn assemble(sets: &[VariantSet], choice: &[usize]) -> (String, Vec<PraiseSpan>) {
    let pieces: Vec<&str> = sets.iter().zip(choice).map(|(s, &c)| s.variants[c].as_str()).collect();
    let (text, starts) = join_pieces(&pieces);
    let spans = sets
        .iter()
        .zip(pieces.iter().zip(starts))
        .filter_map(|(s, (piece, start))| {
            s.tag.label().map(|label| PraiseSpan {
                label,
                start,
                end: start + char_len(piece),
            })
        })
        .collect();
    (text, spans)
}

fn nth_combo(sets: &[VariantSet], mut index: u128) -> Vec<usize> {
    sets.iter()
        .map(|s| {
            let r = s.variants.len() as u128;
            let d = index % r;
            index /= r;
            d as usize
        })
        .collect()
}

/// Draws `count` recombinations with ids `{base_id}#aug1`, `#aug2`, ...
///
/// Each output picks one variant per segment uniformly at random. Texts
/// already produced (or equal to the original) are redrawn; after a fixed
/// number of failed draws the first unused combination in mixed-radix
/// order is taken instead, and if none is left a duplicate is emitted and
/// a warning attached. Outputs are produced one at a time from `rng`, so a
/// shorter request yields a prefix of a longer one.
pub fn recombine(base_id: &str, sets: &[VariantSet], count: usize, rng: &mut SeededRng) -> Recombination {
    let mut seen: HashSet<String> = HashSet::new();
    let original = assemble(sets, &vec![0; sets.len()]).0;
    seen.insert(original);
    let pool: u128 = sets
        .iter()
        .try_fold(1u128, |acc, s| acc.checked_mul(s.variants.len() as u128))
        .unwrap_or(u128::MAX);

    let mut responses = Vec::with_capacity(count);
    let mut duplicates = 0usize;
    for k in 1..=count {
        let mut picked = None;
        let mut last = Vec::new();
        for _ in 0..RANDOM_ATTEMPTS {
            let choice: Vec<usize> = sets.iter().map(|s| rng.below(s.variants.len())).collect();
            let (text, spans) = assemble(sets, &choice);
            if !seen.contains(&text) {
                picked = Some((text, spans));
                break;
            }
            last = choice;
        }
        if picked.is_none() && pool <= ENUMERATION_LIMIT {
            picked = (0..pool)
                .map(|i| assemble(sets, &nth_combo(sets, i)))
                .find(|(text, _)| !seen.contains(text));
        }
        let (text, spans) = picked.unwrap_or_else(|| {
            duplicates += 1;
            assemble(sets, &last)
        });
        seen.insert(text.clone());
        responses.push(LabeledResponse::new(format!("{base_id}#aug{k}"), text, spans));
    }
    let warning = (duplicates > 0).then(|| {
        format!("{base_id}: variant pool of {pool} exhausted; {duplicates} duplicate recombination(s) emitted")
    });
    Recombination { responses, warning }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{PraiseLabel, PraiseSpan};

    fn fig2() -> LabeledResponse {
        LabeledResponse::new(
            "f",
            "Good job, your hard work paid off",
            vec![
                PraiseSpan {
                    label: PraiseLabel::Outcome,
                    start: 0,
                    end: 8,
                },
                PraiseSpan {
                    label: PraiseLabel::Effort,
                    start: 15,
                    end: 33,
                },
            ],
        )
    }

    #[test]
    fn decomposes_the_figure_example() {
        let r = fig2();
        let segs = decompose(&r.text, &r.spans_to_tags().unwrap());
        let view: Vec<(Tag, &str)> = segs.iter().map(|s| (s.tag, s.text.as_str())).collect();
        assert_eq!(
            view,
            vec![
                (Tag::I(PraiseLabel::Outcome), "Good job"),
                (Tag::O, ", your"),
                (Tag::I(PraiseLabel::Effort), "hard work paid off"),
            ]
        );
        assert_eq!(segs[2].token_range, (4, 7));
    }

    #[test]
    fn all_o_and_alternating() {
        let t = TaggedResponse::untagged("just some words");
        assert_eq!(decompose("just some words", &t).len(), 1);
        let mut t = TaggedResponse::untagged("a b c d");
        t.tags = vec![Tag::O, Tag::I(PraiseLabel::Effort), Tag::O, Tag::I(PraiseLabel::Outcome)];
        assert_eq!(decompose("a b c d", &t).len(), 4);
    }

    fn sets(sizes: &[(Tag, &[&str])]) -> Vec<VariantSet> {
        sizes
            .iter()
            .enumerate()
            .map(|(i, (tag, v))| VariantSet {
                segment_index: i,
                tag: *tag,
                variants: v.iter().map(|s| s.to_string()).collect(),
            })
            .collect()
    }

    #[test]
    fn three_by_two_yields_six_distinct_when_original_excluded() {
        let vs = sets(&[
            (Tag::I(PraiseLabel::Outcome), &["Good job", "Great work", "Nice answer"]),
            (Tag::O, &["!", "."]),
        ]);
        let mut rng = SeededRng::new(1);
        // Six combinations minus the original leaves five fresh ones.
        let r = recombine("x", &vs, 5, &mut rng);
        let texts: HashSet<&str> = r.responses.iter().map(|x| x.text.as_str()).collect();
        assert_eq!(texts.len(), 5);
        assert!(!texts.contains("Good job!"));
        assert!(r.warning.is_none());
        for resp in &r.responses {
            assert_eq!(resp.spans.len(), 1);
            assert_eq!(resp.spans[0].label, PraiseLabel::Outcome);
            resp.validate().unwrap();
        }
        let r = recombine("x", &vs, 6, &mut SeededRng::new(1));
        assert!(r.warning.is_some());
    }

    #[test]
    fn singleton_sets_duplicate_with_warning() {
        let vs = sets(&[(Tag::I(PraiseLabel::Effort), &["Keep going"]), (Tag::O, &["!"])]);
        let r = recombine("s", &vs, 3, &mut SeededRng::new(0));
        assert_eq!(r.responses.len(), 3);
        assert!(r.responses.iter().all(|x| x.text == "Keep going!"));
        assert!(r.warning.unwrap().contains("3 duplicate"));
        assert!(recombine("s", &vs, 0, &mut SeededRng::new(0)).responses.is_empty());
    }

    #[test]
    fn shorter_request_is_a_prefix() {
        let vs = sets(&[
            (Tag::O, &["Hey Sam,", "Hi Sam,"]),
            (Tag::I(PraiseLabel::Outcome), &["good job", "great job", "fine work", "nice result"]),
            (Tag::O, &["! Your", "! I saw your"]),
            (Tag::I(PraiseLabel::Effort), &["hard effort", "steady persistence", "tireless dedication"]),
        ]);
        let short = recombine("p", &vs, 3, &mut SeededRng::new(5)).responses;
        let long = recombine("p", &vs, 7, &mut SeededRng::new(5)).responses;
        assert_eq!(short[..], long[..3]);
    }

    #[test]
    fn joins_with_spaces_except_before_punctuation() {
        let vs = sets(&[
            (Tag::I(PraiseLabel::Outcome), &["Great job"]),
            (Tag::O, &[", your"]),
            (Tag::I(PraiseLabel::Effort), &["hard work paid off"]),
        ]);
        let (text, spans) = assemble(&vs, &[0, 0, 0]);
        assert_eq!(text, "Great job, your hard work paid off");
        assert_eq!((spans[1].start, spans[1].end), (16, 34));
    }
}
