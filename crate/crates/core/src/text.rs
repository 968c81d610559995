//! Tokenization shared by the TF-IDF baseline and the similarity scorer.

/// Lowercases and splits on runs of non-alphanumeric characters.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Rough token count used for context-length checks: every alphanumeric run
/// and every other non-whitespace character counts as one token.
pub fn estimate_tokens(text: &str) -> usize {
    let mut count = 0;
    let mut in_word = false;
    for c in text.chars() {
        if c.is_alphanumeric() {
            if !in_word {
                count += 1;
                in_word = true;
            }
        } else {
            in_word = false;
            if !c.is_whitespace() {
                count += 1;
            }
        }
    }
    count
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splits_on_punctuation_and_lowercases() {
        assert_eq!(
            tokenize("Turn ON the living_room light!"),
            ["turn", "on", "the", "living", "room", "light"]
        );
        assert!(tokenize(" ,.; ").is_empty());
    }

    #[test]
    fn token_estimate() {
        assert_eq!(estimate_tokens("light.turn_on()"), 7);
        assert_eq!(estimate_tokens("  "), 0);
    }
}
