use std::collections::HashSet;
use std::sync::OnceLock;

use regex::Regex;

fn enumeration() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^(?:\(?\d+[.):]|[-*•–—])\s*").expect("static regex"))
}

fn meta_prefix() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)^(?:sure|here is|here are|certainly)\b").expect("static regex"))
}

fn strip_quotes(line: &str) -> &str {
    const OPEN: &[char] = &['"', '\u{201C}', '\''];
    const CLOSE: &[char] = &['"', '\u{201D}', '\''];
    let mut chars = line.chars();
    match (chars.next(), chars.next_back()) {
        (Some(a), Some(b)) if OPEN.contains(&a) && CLOSE.contains(&b) => {
            &line[a.len_utf8()..line.len() - b.len_utf8()]
        }
        _ => line,
    }
}

/// Cleans one line until no rule applies.
pub fn clean_line(line: &str) -> String {
    let mut cur = line.to_string();
    loop {
        let mut next = cur.trim();
        if let Some(m) = enumeration().find(next) {
            next = &next[m.end()..];
        }
        let next = if meta_prefix().is_match(next) {
            next.split_once(':').map_or("", |(_, rest)| rest)
        } else {
            next
        };
        let next = strip_quotes(next.trim()).to_string();
        if next == cur {
            return cur;
        }
        cur = next;
    }
}

/// Turns raw model output into at most `n` clean, distinct variants.
///
/// Lines are cleaned (whitespace, enumeration markers, "Sure, here is...:"
/// preambles, wrapping quotes), then empties and case-insensitive
/// duplicates of each other or of `original` are dropped. Applying this to
/// its own output joined by newlines returns the same list.
pub fn sanitize(raw: &str, original: &str, n: usize) -> Vec<String> {
    let mut seen: HashSet<String> = HashSet::new();
    seen.insert(original.trim().to_lowercase());
    let mut out = Vec::new();
    for line in raw.lines() {
        if out.len() == n {
            break;
        }
        let clean = clean_line(line);
        if clean.is_empty() || !seen.insert(clean.to_lowercase()) {
            continue;
        }
        out.push(clean);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn strips_preamble_to_the_colon() {
        assert_eq!(
            clean_line("Sure, here is the synonym: You executed a commendable operation!"),
            "You executed a commendable operation!"
        );
        assert_eq!(clean_line("Here are 15 sentences"), "");
        assert_eq!(clean_line("Certainly: \"Great work\""), "Great work");
    }

    #[test]
    fn strips_markers_and_quotes() {
        assert_eq!(clean_line("  3. Laudable work is done by you!"), "Laudable work is done by you!");
        assert_eq!(clean_line("- \u{201C}Excellent job is achieved!\u{201D}"), "Excellent job is achieved!");
        assert_eq!(clean_line("(2) 'Superb effort'"), "Superb effort");
        assert_eq!(clean_line("You're doing great"), "You're doing great");
    }

    #[test]
    fn drops_duplicates_empties_and_the_original() {
        let raw = "1. Great job\n\n2. great JOB\n3. Good job\n4. Fine work\n5. Nice job";
        assert_eq!(sanitize(raw, "Good job", 2), vec!["Great job", "Fine work"]);
        assert!(sanitize("Sure!\n   \n", "x", 15).is_empty());
    }

    proptest! {
        #[test]
        fn sanitizing_twice_changes_nothing(
            lines in proptest::collection::vec(
                r#"[ \-*0-9.()"']{0,4}(Sure|Here is|certainly|[a-z ]{0,6})[:,]?[ a-zA-Z'"]{0,12}"#,
                0..12,
            ),
            n in 1usize..10,
        ) {
            let once = sanitize(&lines.join("\n"), "orig", n);
            let twice = sanitize(&once.join("\n"), "orig", n);
            prop_assert_eq!(once, twice);
        }
    }
}
