//! Tokenizing and light morphology.

use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Token {
    /// Lowercased surface text.
    pub text: String,
    /// Plural-stripped form used for lexicon lookup.
    pub lemma: String,
    /// Byte offsets into the original message.
    pub span: (usize, usize),
    pub number: Option<f64>,
}

fn token_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\d+(?:\.\d+)?|[A-Za-z]+").unwrap())
}

const NUMBER_WORDS: [&str; 20] = [
    "zero", "one", "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten", "eleven",
    "twelve", "thirteen", "fourteen", "fifteen", "sixteen", "seventeen", "eighteen", "nineteen",
];

pub fn number_word(word: &str) -> Option<f64> {
    NUMBER_WORDS.iter().position(|w| *w == word).map(|i| i as f64)
}

/// Strips English plural endings. Only words longer than three letters are
/// touched, and `-ss`, `-us`, `-is` endings are left alone.
pub fn lemmatize(word: &str) -> String {
    let w = word.to_ascii_lowercase();
    if w.len() <= 3 || !w.is_ascii() {
        return w;
    }
    if let Some(stem) = w.strip_suffix("ies") {
        return format!("{stem}y");
    }
    if let Some(stem) = w.strip_suffix("oes") {
        return format!("{stem}o");
    }
    if w.ends_with("ss") || w.ends_with("us") || w.ends_with("is") {
        return w;
    }
    match w.strip_suffix('s') {
        Some(stem) => stem.to_string(),
        None => w,
    }
}

pub fn tokenize(message: &str) -> Vec<Token> {
    token_re()
        .find_iter(message)
        .map(|m| {
            let text = m.as_str().to_ascii_lowercase();
            let number = if text.as_bytes()[0].is_ascii_digit() {
                text.parse::<f64>().ok()
            } else {
                number_word(&text)
            };
            Token {
                lemma: lemmatize(&text),
                text,
                span: (m.start(), m.end()),
                number,
            }
        })
        .collect()
}

/// Lemmatized token sequence of a phrase, as stored in lexicon keys.
pub fn phrase_key(phrase: &str) -> Vec<String> {
    tokenize(phrase).into_iter().map(|t| t.lemma).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plural_stripping() {
        assert_eq!(lemmatize("tomatoes"), "tomato");
        assert_eq!(lemmatize("berries"), "berry");
        assert_eq!(lemmatize("lentils"), "lentil");
        assert_eq!(lemmatize("hummus"), "hummus");
        assert_eq!(lemmatize("less"), "less");
        assert_eq!(lemmatize("oats"), "oat");
        assert_eq!(lemmatize("gas"), "gas");
    }

    #[test]
    fn tokens_carry_spans_and_numbers() {
        let toks = tokenize("Under 300kcal, two eggs");
        let texts: Vec<_> = toks.iter().map(|t| t.text.as_str()).collect();
        assert_eq!(texts, ["under", "300", "kcal", "two", "eggs"]);
        assert_eq!(toks[1].span, (6, 9));
        assert_eq!(toks[1].number, Some(300.0));
        assert_eq!(toks[3].number, Some(2.0));
        assert_eq!(toks[4].lemma, "egg");
    }

    #[test]
    fn twenty_is_not_a_number_word() {
        assert_eq!(number_word("nineteen"), Some(19.0));
        assert_eq!(number_word("twenty"), None);
    }

    #[test]
    fn decimals() {
        assert_eq!(tokenize("2.5 g")[0].number, Some(2.5));
    }
}
