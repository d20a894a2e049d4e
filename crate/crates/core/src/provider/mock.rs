//! Deterministic offline stand-in for a chat model.
//!
//! Augmentation-shaped requests (system prompt starting with
//! `"You are required to rephrase"`) are answered with `n` distinct lines,
//! where `n` is read from `"generate <n> unique sentences"` and the source
//! is everything after the last `"Here is the text:"`.
//!
//! Line construction. Let `P` be the tokens of the source whose lowercase
//! form belongs to a group of [`SUBSTITUTION_GROUPS`], in order, and `r_i`
//! the size of the group of `P[i]`; `C = prod(r_i)` (1 when `P` is empty).
//! Candidates are pairs `(x, f)` enumerated with `f = 0, 1, 2, ...` outer
//! and `j = 0..C` inner, where `x = (j + seed) mod C`. The pair `(0, 0)` is
//! the unchanged source and is skipped; the first `n` remaining pairs
//! become the lines. For a pair:
//!
//! * `x` is read as mixed-radix digits, least significant first:
//!   `d_i = (x / (r_0 * ... * r_{i-1})) mod r_i`. Token `P[i]`, at index
//!   `k` in its group, is replaced by `group[(k + d_i) mod r_i]`, keeping
//!   capitalization of the first letter (or all caps).
//! * `f` filler words `FILLERS[0], FILLERS[1], ...` (cycling) are inserted,
//!   in that order, before the first substitutable token, or before the
//!   first word token when nothing is substitutable. When that token opens
//!   the text with a capital, the fillers take the capital and a
//!   substituted word is lowercased.
//!
//! Distinct pairs give distinct lines: within one `f` the substituted
//! words differ, across `f` the token counts differ.
//!
//! With seed 0, `"You did a good job"` yields `"You did a great job"` as
//! its first line (`x = 1`: `good -> great`, `job` unchanged).
//!
//! Tagging-shaped requests (system prompt starting with
//! `"You are a response evaluator designed to output JSON"`) get the label
//! JSON for the final user message: maximal runs of tokens from
//! [`keyword_label`]'s lists, one phrase per run. Anything else echoes the
//! final user message.

use std::collections::BTreeMap;

use regex::Regex;

use super::{CompletionProvider, CompletionRequest, ProviderError};
use crate::corpus::{char_slice, tokenize, PraiseLabel, Scheme, Token};
use crate::finetune::label_json;

/// Cyclic substitution groups. Every word appears in at most one group.
pub const SUBSTITUTION_GROUPS: &[&[&str]] = &[
    &["good", "great", "excellent", "fantastic", "wonderful", "superb"],
    &["job", "work", "answer", "result"],
    &["hard", "steady", "tireless", "diligent"],
    &["effort", "persistence", "dedication", "perseverance"],
    &["trying", "practicing", "striving", "persevering"],
    &["smart", "clever", "brilliant", "gifted", "talented"],
    &["genius", "thinker", "natural"],
];

/// Filler words inserted to extend the pool beyond the substitutions.
pub const FILLERS: &[&str] = &["really", "truly", "simply", "clearly", "honestly"];

const AUGMENT_MARKER: &str = "You are required to rephrase";
const TAGGING_MARKER: &str = "You are a response evaluator designed to output JSON";
const TEXT_MARKER: &str = "Here is the text:";

/// Keyword lookup for the tagging heuristic.
pub fn keyword_label(word: &str) -> Option<PraiseLabel> {
    const EFFORT: &[usize] = &[2, 3, 4];
    const OUTCOME: &[usize] = &[0, 1];
    const PERSON: &[usize] = &[5, 6];
    let w = word.to_lowercase();
    let hit = |groups: &[usize]| groups.iter().any(|&g| SUBSTITUTION_GROUPS[g].contains(&w.as_str()));
    if hit(EFFORT) {
        Some(PraiseLabel::Effort)
    } else if hit(OUTCOME) || w == "correct" {
        Some(PraiseLabel::Outcome)
    } else if hit(PERSON) {
        Some(PraiseLabel::Person)
    } else {
        None
    }
}

fn group_of(word: &str) -> Option<(usize, usize)> {
    let w = word.to_lowercase();
    SUBSTITUTION_GROUPS
        .iter()
        .enumerate()
        .find_map(|(g, words)| words.iter().position(|x| *x == w).map(|k| (g, k)))
}

fn match_case(template: &str, word: &str) -> String {
    let mut chars = template.chars();
    let first_upper = chars.next().is_some_and(char::is_uppercase);
    let all_upper = template.chars().count() > 1 && template.chars().all(|c| !c.is_lowercase());
    if all_upper {
        word.to_uppercase()
    } else if first_upper {
        let mut c = word.chars();
        c.next()
            .map(|f| f.to_uppercase().chain(c).collect())
            .unwrap_or_default()
    } else {
        word.to_string()
    }
}

/// `n` distinct rewrites of `text` following the documented table.
pub(crate) fn mock_rewrites(text: &str, n: usize, seed: u64) -> Vec<String> {
    let tokens = tokenize(text);
    let subs: Vec<(usize, usize, usize)> = tokens
        .iter()
        .enumerate()
        .filter_map(|(i, t)| group_of(&t.text).map(|(g, k)| (i, g, k)))
        .collect();
    let radices: Vec<usize> = subs.iter().map(|&(_, g, _)| SUBSTITUTION_GROUPS[g].len()).collect();
    let combos: usize = radices.iter().try_fold(1usize, |acc, &r| acc.checked_mul(r)).unwrap_or(usize::MAX);
    let offset = (seed % combos as u64) as usize;
    let anchor = subs
        .first()
        .map(|s| s.0)
        .or_else(|| tokens.iter().position(Token::is_word))
        .unwrap_or(0);

    let mut out = Vec::with_capacity(n);
    let mut f = 0usize;
    'outer: while out.len() < n {
        for j in 0..combos {
            if out.len() == n {
                break 'outer;
            }
            let x = (j + offset) % combos;
            if x == 0 && f == 0 {
                continue;
            }
            out.push(render(text, &tokens, &subs, &radices, x, f, anchor));
        }
        f += 1;
    }
    out
}

fn render(
    text: &str,
    tokens: &[Token],
    subs: &[(usize, usize, usize)],
    radices: &[usize],
    mut x: usize,
    fillers: usize,
    anchor: usize,
) -> String {
    let mut replaced: BTreeMap<usize, String> = BTreeMap::new();
    for (&(i, g, k), &r) in subs.iter().zip(radices) {
        let d = x % r;
        x /= r;
        let group = SUBSTITUTION_GROUPS[g];
        replaced.insert(i, match_case(&tokens[i].text, group[(k + d) % r]));
    }
    let mut out = String::new();
    let mut cursor = 0usize;
    for (i, t) in tokens.iter().enumerate() {
        out.push_str(char_slice(text, cursor, t.start));
        if i == anchor && fillers > 0 {
            let mut lead = (0..fillers).map(|k| FILLERS[k % FILLERS.len()]).collect::<Vec<_>>().join(" ");
            let capital = i == 0 && t.text.chars().next().is_some_and(char::is_uppercase);
            if capital {
                lead = match_case(&t.text[..t.text.chars().next().map_or(0, char::len_utf8)], &lead);
            }
            out.push_str(&lead);
            out.push(' ');
            if capital {
                if let Some(w) = replaced.get(&i) {
                    out.push_str(&lowercase_first(w));
                    cursor = t.end;
                    continue;
                }
            }
        }
        match replaced.get(&i) {
            Some(w) => out.push_str(w),
            None => out.push_str(&t.text),
        }
        cursor = t.end;
    }
    out.push_str(char_slice(text, cursor, usize::MAX));
    out.trim().to_string()
}

fn lowercase_first(word: &str) -> String {
    let mut c = word.chars();
    match c.next() {
        Some(f) if word.chars().skip(1).all(|ch| !ch.is_uppercase()) => f.to_lowercase().chain(c).collect(),
        _ => word.to_string(),
    }
}

fn augmentation_count(user: &str) -> usize {
    let re = Regex::new(r"generate (\d+) unique sentences").expect("static regex");
    re.captures(user)
        .and_then(|c| c[1].parse().ok())
        .unwrap_or(15)
}

fn tag_phrases(text: &str, scheme: &Scheme) -> BTreeMap<PraiseLabel, Vec<String>> {
    let tokens = tokenize(text);
    let mut out: BTreeMap<PraiseLabel, Vec<String>> = scheme.labels().map(|l| (l, Vec::new())).collect();
    let mut i = 0;
    while i < tokens.len() {
        match keyword_label(&tokens[i].text).filter(|l| scheme.contains(*l)) {
            Some(label) => {
                let mut j = i;
                while j + 1 < tokens.len() && keyword_label(&tokens[j + 1].text) == Some(label) {
                    j += 1;
                }
                out.entry(label)
                    .or_default()
                    .push(char_slice(text, tokens[i].start, tokens[j].end).to_string());
                i = j + 1;
            }
            None => i += 1,
        }
    }
    out
}

/// Deterministic answer to `req` (see module docs).
pub fn mock_complete(req: &CompletionRequest, seed: u64) -> String {
    let system = req.system().unwrap_or_default();
    let user = req.last_user().unwrap_or_default();
    if system.starts_with(AUGMENT_MARKER) {
        let source = user.rsplit_once(TEXT_MARKER).map(|(_, t)| t).unwrap_or(user).trim();
        let n = augmentation_count(user);
        return mock_rewrites(source, n, seed).join("\n");
    }
    if system.starts_with(TAGGING_MARKER) {
        let scheme = if system.contains("'person'") {
            Scheme::person()
        } else {
            Scheme::effort_outcome()
        };
        return label_json(&scheme, &tag_phrases(user, &scheme));
    }
    user.to_string()
}

/// [`CompletionProvider`] backed by [`mock_complete`].
#[derive(Debug, Clone)]
pub struct MockProvider {
    pub seed: u64,
}

impl MockProvider {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }
}

impl CompletionProvider for MockProvider {
    fn complete(&self, req: &CompletionRequest) -> Result<String, ProviderError> {
        req.validate()?;
        Ok(mock_complete(req, self.seed))
    }

    fn default_model(&self) -> &str {
        "mock"
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::augment::augmentation_request;
    use crate::provider::ChatMessage;
    use std::collections::HashSet;

    #[test]
    fn groups_are_disjoint() {
        let mut seen = HashSet::new();
        for g in SUBSTITUTION_GROUPS {
            for w in *g {
                assert!(seen.insert(*w), "{w} appears twice");
            }
        }
        for f in FILLERS {
            assert!(!seen.contains(f));
        }
    }

    #[test]
    fn good_job_first_line_by_hand() {
        let req = augmentation_request("You did a good job", 15, 0.0, "mock");
        let out = mock_complete(&req, 0);
        let lines: Vec<&str> = out.lines().collect();
        assert_eq!(lines.len(), 15);
        assert_eq!(lines[0], "You did a great job");
        // x = 6: good cycles back, job -> work.
        assert_eq!(lines[5], "You did a good work");
        let distinct: HashSet<String> = lines.iter().map(|l| l.to_lowercase()).collect();
        assert_eq!(distinct.len(), 15);
        for l in &lines {
            assert_ne!(*l, "You did a good job");
            let toks = tokenize(l);
            let adj = &toks[3].text;
            let noun = &toks[4].text;
            assert!(SUBSTITUTION_GROUPS[0].contains(&adj.as_str()) && SUBSTITUTION_GROUPS[1].contains(&noun.as_str()));
        }
    }

    #[test]
    fn same_request_and_seed_is_identical() {
        let req = augmentation_request("Good job, your hard work paid off", 15, 0.0, "mock");
        assert_eq!(mock_complete(&req, 9), mock_complete(&req, 9));
        assert_ne!(mock_complete(&req, 9), mock_complete(&req, 10));
    }

    #[test]
    fn fillers_extend_small_pools() {
        let lines = mock_rewrites("Hey Sam,", 4, 0);
        assert_eq!(lines, vec!["Really Hey Sam,", "Really truly Hey Sam,", "Really truly simply Hey Sam,", "Really truly simply clearly Hey Sam,"]);
        let lines = mock_rewrites("smart", 7, 3);
        let distinct: HashSet<&String> = lines.iter().collect();
        assert_eq!(distinct.len(), 7);
        assert!(lines.contains(&"really smart".to_string()));
    }

    #[test]
    fn capitalization_follows_the_source() {
        let lines = mock_rewrites("Great job!", 2, 0);
        assert_eq!(lines[0], "Excellent job!");
    }

    #[test]
    fn tagging_prompt_gets_label_json() {
        let req = CompletionRequest::new(
            "m",
            vec![
                ChatMessage::system(format!("{TAGGING_MARKER}. keys titled 'effort' and 'outcome'.")),
                ChatMessage::user("Hey Sam, great job! I noticed your steady persistence."),
            ],
            0.0,
        );
        assert_eq!(
            mock_complete(&req, 0),
            r#"{"effort": ["steady persistence"], "outcome": ["great job"]}"#
        );
        let person = CompletionRequest::new(
            "m",
            vec![ChatMessage::system(format!("{TAGGING_MARKER} with keys titled 'person'.")), ChatMessage::user("You are so smart")],
            0.0,
        );
        assert_eq!(mock_complete(&person, 0), r#"{"person": ["smart"]}"#);
    }

    #[test]
    fn unknown_prompt_echoes_last_user_message() {
        let req = CompletionRequest::new("m", vec![ChatMessage::user("ping")], 0.0);
        assert_eq!(mock_complete(&req, 1), "ping");
    }
}
