use std::collections::BTreeSet;

/// Lowercases and splits on every non-alphanumeric character. No stemming;
/// no stopword removal.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut current = String::new();
    for c in text.chars() {
        if c.is_alphanumeric() {
            current.extend(c.to_lowercase());
        } else if !current.is_empty() {
            tokens.push(std::mem::take(&mut current));
        }
    }
    if !current.is_empty() {
        tokens.push(current);
    }
    tokens
}

/// [`tokenize`], then drop any token in `stopwords`.
pub fn tokenize_with(text: &str, stopwords: &BTreeSet<String>) -> Vec<String> {
    let mut tokens = tokenize(text);
    if !stopwords.is_empty() {
        tokens.retain(|t| !stopwords.contains(t));
    }
    tokens
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splitting_rule() {
        let cases: &[(&str, &[&str])] = &[
            ("The Four Seasons!", &["the", "four", "seasons"]),
            ("", &[]),
            ("U.S. 1678\u{2013}1741", &["u", "s", "1678", "1741"]),
            ("  --  ", &[]),
            ("Vivaldi's opera", &["vivaldi", "s", "opera"]),
            ("Ärger über", &["ärger", "über"]),
            ("a1b2 c_d", &["a1b2", "c", "d"]),
        ];
        for (text, expected) in cases {
            assert_eq!(tokenize(text), *expected, "{text:?}");
        }
    }

    #[test]
    fn stopwords_are_opt_in() {
        let stop: BTreeSet<String> = ["the".to_string()].into();
        assert_eq!(tokenize_with("The cat", &stop), ["cat"]);
        assert_eq!(tokenize_with("The cat", &BTreeSet::new()), ["the", "cat"]);
    }
}
