//! Lowercase word tokenization and phrase matching used by skill indicators.

/// Splits `text` into lowercase word tokens. Hyphens and underscores inside a
/// word are kept, so "part-time" stays one token.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !(c.is_alphanumeric() || c == '-' || c == '_'))
        .map(|t| t.trim_matches(|c| c == '-' || c == '_'))
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// True when the token sequence of `phrase` occurs contiguously in `tokens`.
pub fn contains_phrase(tokens: &[String], phrase: &[String]) -> bool {
    if phrase.is_empty() || phrase.len() > tokens.len() {
        return false;
    }
    tokens.windows(phrase.len()).any(|w| w == phrase)
}

/// Number of distinct `phrases` found in `text`.
pub fn count_phrase_hits(text: &str, phrases: &[String]) -> usize {
    matched_phrases(text, phrases).len()
}

/// The subset of `phrases` found in `text`, in the order given.
pub fn matched_phrases<'a>(text: &str, phrases: &'a [String]) -> Vec<&'a str> {
    let tokens = tokenize(text);
    let mut out: Vec<&str> = Vec::new();
    for p in phrases {
        if out.contains(&p.as_str()) {
            continue;
        }
        if contains_phrase(&tokens, &tokenize(p)) {
            out.push(p.as_str());
        }
    }
    out
}
