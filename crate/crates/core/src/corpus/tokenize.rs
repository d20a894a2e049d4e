use serde::{Deserialize, Serialize};

/// A token with char offsets (Unicode scalar indices) into its text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub text: String,
    pub start: usize,
    pub end: usize,
}

impl Token {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.start == self.end
    }

    /// True for letter/digit tokens (including ones with inner apostrophes).
    pub fn is_word(&self) -> bool {
        self.text.chars().next().is_some_and(char::is_alphanumeric)
    }
}

pub(crate) fn is_apostrophe(c: char) -> bool {
    c == '\'' || c == '\u{2019}'
}

/// Splits `text` into word runs and single-character punctuation tokens.
///
/// Letters and digits form maximal runs; an apostrophe joins a run only
/// when it has a letter or digit on both sides. Any other non-whitespace
/// character is its own token. Whitespace is dropped.
pub fn tokenize(text: &str) -> Vec<Token> {
    let chars: Vec<char> = text.chars().collect();
    let n = chars.len();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < n {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        let mut j = i + 1;
        if c.is_alphanumeric() {
            loop {
                if j < n && chars[j].is_alphanumeric() {
                    j += 1;
                } else if j + 1 < n && is_apostrophe(chars[j]) && chars[j + 1].is_alphanumeric() {
                    j += 2;
                } else {
                    break;
                }
            }
        }
        tokens.push(Token {
            text: chars[i..j].iter().collect(),
            start: i,
            end: j,
        });
        i = j;
    }
    tokens
}

/// Number of Unicode scalar values in `text`.
pub fn char_len(text: &str) -> usize {
    text.chars().count()
}

/// Substring by char offsets. Out-of-range bounds are clamped.
pub fn char_slice(text: &str, start: usize, end: usize) -> &str {
    let mut indices = text.char_indices().map(|(b, _)| b).chain(std::iter::once(text.len()));
    let b_start = indices.by_ref().nth(start).unwrap_or(text.len());
    let b_end = if end > start {
        indices.nth(end - start - 1).unwrap_or(text.len())
    } else {
        b_start
    };
    &text[b_start..b_end]
}

/// Joins pieces with single spaces, omitting the space before a piece that
/// starts with punctuation. Apostrophes always get a space so they cannot
/// fuse with the preceding word. Returns the text and each piece's char
/// start.
pub(crate) fn join_pieces<S: AsRef<str>>(pieces: &[S]) -> (String, Vec<usize>) {
    let mut out = String::new();
    let mut len = 0usize;
    let mut starts = Vec::with_capacity(pieces.len());
    for piece in pieces {
        let piece = piece.as_ref();
        if !out.is_empty() {
            let glue = piece
                .chars()
                .next()
                .is_some_and(|c| !c.is_alphanumeric() && !c.is_whitespace() && !is_apostrophe(c));
            if !glue {
                out.push(' ');
                len += 1;
            }
        }
        starts.push(len);
        out.push_str(piece);
        len += char_len(piece);
    }
    (out, starts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn texts(tokens: &[Token]) -> Vec<&str> {
        tokens.iter().map(|t| t.text.as_str()).collect()
    }

    #[test]
    fn greeting_sentence() {
        let t = tokenize("Hey Kevin, you did a great job.");
        assert_eq!(
            texts(&t),
            vec!["Hey", "Kevin", ",", "you", "did", "a", "great", "job", "."]
        );
        assert_eq!((t[2].start, t[2].end), (9, 10));
    }

    #[test]
    fn empty_text() {
        assert!(tokenize("").is_empty());
        assert!(tokenize("   \n\t").is_empty());
    }

    #[test]
    fn inner_apostrophe_stays_in_word() {
        assert_eq!(texts(&tokenize("You're smart!")), vec!["You're", "smart", "!"]);
        assert_eq!(texts(&tokenize("students' 'work")), vec!["students", "'", "'", "work"]);
        assert_eq!(texts(&tokenize("don\u{2019}t")), vec!["don\u{2019}t"]);
    }

    #[test]
    fn offsets_are_char_based() {
        let t = tokenize("très bien, élève");
        assert_eq!(texts(&t), vec!["très", "bien", ",", "élève"]);
        assert_eq!((t[3].start, t[3].end), (11, 16));
        assert_eq!(char_slice("très bien, élève", 11, 16), "élève");
    }

    #[test]
    fn join_glues_punctuation_only() {
        let (s, starts) = join_pieces(&["great job", "!", "'s", "Keep going"]);
        assert_eq!(s, "great job! 's Keep going");
        assert_eq!(starts, vec![0, 9, 11, 14]);
    }

    proptest! {
        #[test]
        fn offsets_reconstruct_token_text(s in "[a-zA-Z0-9 ,.!?'’éß\\-]{0,40}") {
            let toks = tokenize(&s);
            let mut prev_end = 0;
            for t in &toks {
                prop_assert!(!t.is_empty());
                prop_assert!(t.start >= prev_end);
                prop_assert_eq!(char_slice(&s, t.start, t.end), t.text.as_str());
                prev_end = t.end;
            }
            // Everything skipped between tokens is whitespace.
            let chars: Vec<char> = s.chars().collect();
            let mut covered = vec![false; chars.len()];
            for t in &toks {
                for c in covered.iter_mut().take(t.end).skip(t.start) {
                    *c = true;
                }
            }
            for (i, c) in chars.iter().enumerate() {
                prop_assert!(covered[i] || c.is_whitespace());
            }
        }

        #[test]
        fn joining_preserves_piece_tokens(pieces in proptest::collection::vec("[a-z',.!]{1,6}( [a-z]{1,4})?", 1..5)) {
            let pieces: Vec<String> = pieces.into_iter().filter(|p| !tokenize(p).is_empty()).collect();
            let (joined, starts) = join_pieces(&pieces);
            let mut expected = Vec::new();
            for (p, s) in pieces.iter().zip(&starts) {
                for t in tokenize(p) {
                    expected.push((t.text, t.start + s, t.end + s));
                }
            }
            let got: Vec<_> = tokenize(&joined).into_iter().map(|t| (t.text, t.start, t.end)).collect();
            prop_assert_eq!(got, expected);
        }
    }
}
