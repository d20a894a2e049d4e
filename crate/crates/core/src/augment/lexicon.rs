use std::collections::{HashMap, HashSet};
use std::path::Path;

const DEMO_LEXICON: &str = include_str!("../../resources/lexicon.tsv");
const DEMO_STOPWORDS: &str = include_str!("../../resources/stopwords.txt");

#[derive(Debug, thiserror::Error)]
pub enum LexiconError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: expected `word<TAB>syn1|syn2|...`")]
    BadRow { line: usize },
}

/// Headword to synonyms, looked up case-insensitively.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SynonymLexicon {
    entries: HashMap<String, Vec<String>>,
}

impl SynonymLexicon {
    /// Parses `word<TAB>syn1|syn2|...` rows. Blank lines and `#` comments
    /// are skipped; repeated headwords merge.
    pub fn from_tsv(text: &str) -> Result<Self, LexiconError> {
        let mut entries: HashMap<String, Vec<String>> = HashMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim_end();
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let (head, syns) = line.split_once('\t').ok_or(LexiconError::BadRow { line: i + 1 })?;
            let head = head.trim().to_lowercase();
            if head.is_empty() {
                return Err(LexiconError::BadRow { line: i + 1 });
            }
            let list = entries.entry(head.clone()).or_default();
            for s in syns.split('|').map(str::trim).filter(|s| !s.is_empty()) {
                let s = s.to_lowercase();
                if s != head && !list.contains(&s) {
                    list.push(s);
                }
            }
        }
        entries.retain(|_, v| !v.is_empty());
        Ok(Self { entries })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, LexiconError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| LexiconError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_tsv(&text)
    }

    /// The small English lexicon bundled with the crate.
    pub fn demo() -> Self {
        Self::from_tsv(DEMO_LEXICON).expect("bundled lexicon parses")
    }

    pub fn synonyms(&self, word: &str) -> &[String] {
        self.entries.get(&word.to_lowercase()).map_or(&[], Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Words never chosen for synonym replacement.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Stopwords(HashSet<String>);

impl Stopwords {
    pub fn from_lines(text: &str) -> Self {
        Self(
            text.lines()
                .map(|l| l.trim().to_lowercase())
                .filter(|l| !l.is_empty() && !l.starts_with('#'))
                .collect(),
        )
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, LexiconError> {
        let path = path.as_ref();
        std::fs::read_to_string(path)
            .map(|t| Self::from_lines(&t))
            .map_err(|source| LexiconError::Io {
                path: path.display().to_string(),
                source,
            })
    }

    pub fn english() -> Self {
        Self::from_lines(DEMO_STOPWORDS)
    }

    pub fn contains(&self, word: &str) -> bool {
        self.0.contains(&word.to_lowercase())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_looks_up_case_insensitively() {
        let lex = SynonymLexicon::from_tsv("# demo\nGreat\tgood|Fine| |great\n\njob\ttask\n").unwrap();
        assert_eq!(lex.synonyms("GREAT"), ["good", "fine"]);
        assert_eq!(lex.synonyms("job"), ["task"]);
        assert!(lex.synonyms("nope").is_empty());
        assert!(matches!(SynonymLexicon::from_tsv("no tab here"), Err(LexiconError::BadRow { line: 1 })));
    }

    #[test]
    fn bundled_resources_load() {
        assert!(SynonymLexicon::demo().len() > 50);
        let stop = Stopwords::english();
        assert!(stop.contains("The") && !stop.contains("effort"));
    }
}
