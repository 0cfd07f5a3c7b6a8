//! Surface-form normalization and tokenization shared by the knowledge graph
//! lexicon, candidate deduplication and entity matching.

use unicode_normalization::UnicodeNormalization;

/// NFC, then lowercase, then collapse internal whitespace runs to a single
/// space and trim.
pub fn normalize(s: &str) -> String {
    let folded: String = s.nfc().flat_map(char::to_lowercase).collect();
    folded.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Splits normalized text into tokens: maximal runs of alphanumeric
/// characters, and every other non-whitespace character on its own.
pub fn tokenize(s: &str) -> Vec<&str> {
    let mut tokens = Vec::new();
    let mut run_start: Option<usize> = None;
    for (i, c) in s.char_indices() {
        if c.is_alphanumeric() {
            if run_start.is_none() {
                run_start = Some(i);
            }
            continue;
        }
        if let Some(start) = run_start.take() {
            tokens.push(&s[start..i]);
        }
        if !c.is_whitespace() {
            tokens.push(&s[i..i + c.len_utf8()]);
        }
    }
    if let Some(start) = run_start {
        tokens.push(&s[start..]);
    }
    tokens
}

/// Case-insensitive substring test on normalized forms.
pub fn contains_ci(haystack: &str, needle: &str) -> bool {
    normalize(haystack).contains(&normalize(needle))
}

/// Number of whitespace-delimited tokens.
pub fn word_count(s: &str) -> usize {
    s.split_whitespace().count()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn collapses_whitespace_and_folds_case() {
        assert_eq!(normalize("  heart  failure "), "heart failure");
        assert_eq!(normalize("Stroke"), normalize("stroke"));
        assert_eq!(normalize("A\t\nB"), "a b");
    }

    #[test]
    fn nfc_composes() {
        // "e" + combining acute vs precomposed
        assert_eq!(normalize("caf\u{0065}\u{0301}"), normalize("caf\u{00e9}"));
    }

    #[test]
    fn tokenizer_splits_punctuation() {
        assert_eq!(tokenize("covid-19 is bad."), vec!["covid", "-", "19", "is", "bad", "."]);
        assert_eq!(tokenize(""), Vec::<&str>::new());
        assert_eq!(tokenize("  a  "), vec!["a"]);
    }
}
