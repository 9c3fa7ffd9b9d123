//! Tokenizers and small string helpers shared across modules.
//!
//! Three tokenization rules live here and they are intentionally different:
//!
//! * [`count_words`]: whitespace split, no case folding. Used for length
//!   checks on documents and instructions.
//! * [`lexical_tokens`]: lowercase + whitespace split, punctuation kept.
//!   Used by every lexical diversity metric.
//! * [`contamination_tokens`]: lowercase, punctuation stripped, whitespace
//!   collapsed. Used by the n-gram overlap checker.

/// Number of Unicode-whitespace separated tokens in `text`.
pub fn count_words(text: &str) -> usize {
    text.split_whitespace().count()
}

/// Lowercased whitespace tokens with punctuation retained.
pub fn lexical_tokens(text: &str) -> Vec<String> {
    text.split_whitespace().map(str::to_lowercase).collect()
}

/// Lowercased tokens with every non-alphanumeric, non-whitespace character
/// removed. Tokens that become empty are dropped.
pub fn contamination_tokens(text: &str) -> Vec<String> {
    let mut cleaned = String::with_capacity(text.len());
    for ch in text.chars() {
        if ch.is_alphanumeric() {
            cleaned.extend(ch.to_lowercase());
        } else if ch.is_whitespace() {
            cleaned.push(' ');
        }
    }
    cleaned.split_whitespace().map(str::to_owned).collect()
}

/// Collapse all whitespace runs to a single space and trim.
pub fn normalize_whitespace(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Extract the payloads of every well-formed `<tag>...</tag>` pair, in order.
///
/// Matching is non-greedy: each opening tag pairs with the first closing tag
/// after it. An opening tag with no closing tag ends the scan. Payloads are
/// trimmed; empty payloads are kept so callers can decide.
pub fn extract_tagged(text: &str, tag: &str) -> Vec<String> {
    let open = format!("<{tag}>");
    let close = format!("</{tag}>");
    let mut out = Vec::new();
    let mut rest = text;
    while let Some(start) = rest.find(&open) {
        let after = &rest[start + open.len()..];
        match after.find(&close) {
            Some(end) => {
                out.push(after[..end].trim().to_string());
                rest = &after[end + close.len()..];
            }
            None => break,
        }
    }
    out
}

/// First payload of `<tag>...</tag>`, if any.
pub fn first_tagged(text: &str, tag: &str) -> Option<String> {
    extract_tagged(text, tag).into_iter().next()
}

/// Parse a keyword list such as `[alpha, beta, gamma]`.
///
/// Square brackets are optional; items are split on commas and newlines,
/// stripped of quotes, bullets and surrounding whitespace. Empty items are
/// dropped. Duplicates are preserved; callers dedup with their own rule.
pub fn parse_keyword_list(text: &str) -> Vec<String> {
    let body = match (text.find('['), text.rfind(']')) {
        (Some(l), Some(r)) if l < r => &text[l + 1..r],
        _ => text,
    };
    body.split([',', '\n'])
        .map(|item| {
            item.trim()
                .trim_start_matches(['-', '*', '•'])
                .trim()
                .trim_matches(['"', '\'', '`'])
                .trim()
                .to_string()
        })
        .filter(|item| !item.is_empty())
        .collect()
}

/// Set of `n`-token windows of `tokens`, each joined by a single space.
pub(crate) fn windows_joined(tokens: &[String], n: usize) -> impl Iterator<Item = String> + '_ {
    tokens.windows(n.max(1)).map(|w| w.join(" "))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn word_count_uses_unicode_whitespace() {
        assert_eq!(count_words(""), 0);
        assert_eq!(count_words("  a\u{3000}b\tc\n"), 3);
        assert_eq!(count_words("don't stop."), 2);
    }

    #[test]
    fn lexical_tokens_keep_punctuation() {
        assert_eq!(lexical_tokens("The Cat, sat."), vec!["the", "cat,", "sat."]);
    }

    #[test]
    fn contamination_tokens_strip_punctuation() {
        assert_eq!(
            contamination_tokens("The  cat's hat -- on   the MAT!"),
            vec!["the", "cats", "hat", "on", "the", "mat"]
        );
    }

    #[test]
    fn tag_extraction_is_non_greedy() {
        let text = "<document> one </document> noise <document>two</document><document>open";
        assert_eq!(extract_tagged(text, "document"), vec!["one", "two"]);
        assert!(extract_tagged("nothing", "document").is_empty());
    }

    #[test]
    fn keyword_lists() {
        assert_eq!(parse_keyword_list("[alpha, beta, gamma]"), vec!["alpha", "beta", "gamma"]);
        assert_eq!(parse_keyword_list("- \"fraud detection\"\n- KYC"), vec!["fraud detection", "KYC"]);
        assert!(parse_keyword_list("[]").is_empty());
    }
}
