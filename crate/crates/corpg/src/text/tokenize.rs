//! Rule-based tokenizer and sentence splitter. The rules are deliberately
//! small and deterministic; they are the only place in the crate that looks
//! at raw (untokenized) text.

const PUNCT: [char; 10] = ['.', ',', ';', ':', '?', '!', '"', '\'', '(', ')'];

const ABBREVIATIONS: [&str; 6] = ["mr.", "mrs.", "dr.", "e.g.", "i.e.", "u.s."];

/// Lowercase, split on whitespace, and peel leading/trailing punctuation into
/// separate tokens. Internal punctuation (don't, u.s.) is kept.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for raw in text.to_lowercase().split_whitespace() {
        let chars: Vec<char> = raw.chars().collect();
        let mut start = 0;
        let mut end = chars.len();
        while start < end && PUNCT.contains(&chars[start]) {
            start += 1;
        }
        let lead_end = start;
        while end > start && PUNCT.contains(&chars[end - 1]) {
            end -= 1;
        }
        for &c in &chars[..lead_end] {
            out.push(c.to_string());
        }
        if start < end {
            out.push(chars[start..end].iter().collect());
        }
        for &c in &chars[end..] {
            out.push(c.to_string());
        }
    }
    out
}

/// Inverse of [`tokenize`] at the token-list level: a plain space join.
pub fn detokenize(tokens: &[String]) -> String {
    tokens.join(" ")
}

/// Split text into sentences at `.`, `?`, `!` followed by whitespace plus an
/// uppercase letter, or end of text. A small abbreviation list suppresses
/// false splits.
pub fn split_sentences(text: &str) -> Vec<String> {
    let chars: Vec<char> = text.chars().collect();
    let mut sentences = Vec::new();
    let mut start = 0;
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c == '.' || c == '?' || c == '!' {
            // the maximal non-whitespace run ending at this character
            let mut ws = i;
            while ws > start && !chars[ws - 1].is_whitespace() {
                ws -= 1;
            }
            let word: String = chars[ws..=i].iter().collect::<String>().to_lowercase();
            let is_abbrev = c == '.' && ABBREVIATIONS.contains(&word.as_str());
            if !is_abbrev {
                let mut j = i + 1;
                while j < chars.len() && chars[j].is_whitespace() {
                    j += 1;
                }
                let split = if j >= chars.len() {
                    true
                } else {
                    j > i + 1 && chars[j].is_uppercase()
                };
                if split {
                    push_trimmed(&mut sentences, &chars[start..=i]);
                    start = j;
                    i = j;
                    continue;
                }
            }
        }
        i += 1;
    }
    if start < chars.len() {
        push_trimmed(&mut sentences, &chars[start..]);
    }
    sentences
}

fn push_trimmed(sentences: &mut Vec<String>, chars: &[char]) {
    let s: String = chars.iter().collect();
    let s = s.trim();
    if !s.is_empty() {
        sentences.push(s.to_string());
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn splits_trailing_punctuation() {
        assert_eq!(tokenize("Hello, world."), vec!["hello", ",", "world", "."]);
    }

    #[test]
    fn empty_text_gives_empty_list() {
        assert_eq!(tokenize(""), Vec::<String>::new());
    }

    #[test]
    fn internal_apostrophe_kept() {
        assert_eq!(tokenize("don't stop"), vec!["don't", "stop"]);
    }

    #[test]
    fn leading_punctuation_split() {
        assert_eq!(tokenize("\"Quote\""), vec!["\"", "quote", "\""]);
        assert_eq!(tokenize("(a)"), vec!["(", "a", ")"]);
    }

    #[test]
    fn sentence_split_basic() {
        assert_eq!(split_sentences("A cat. A dog."), vec!["A cat.", "A dog."]);
    }

    #[test]
    fn abbreviation_suppresses_split() {
        assert_eq!(split_sentences("Dr. Smith left."), vec!["Dr. Smith left."]);
        assert_eq!(
            split_sentences("The U.S. Government acted. It worked."),
            vec!["The U.S. Government acted.", "It worked."]
        );
    }

    #[test]
    fn question_splits() {
        assert_eq!(split_sentences("Why? Because."), vec!["Why?", "Because."]);
    }

    #[test]
    fn no_split_without_uppercase() {
        assert_eq!(split_sentences("version 2. then more"), vec!["version 2. then more"]);
    }

    proptest! {
        // detokenize is the exact inverse at the token-list level
        #[test]
        fn tokenize_detokenize_roundtrip(text in "[a-zA-Z0-9,\\.'\\(\\)\"!? ]{0,60}") {
            let toks = tokenize(&text);
            let joined = detokenize(&toks);
            prop_assert_eq!(tokenize(&joined), toks);
        }
    }
}
