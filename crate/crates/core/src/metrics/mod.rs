//! Automatic evaluation: SARI with its add/keep/delete components, BLEU,
//! Flesch-Kincaid grade level and output length statistics.
//!
//! All metrics share one tokenization: lowercase, whitespace separated,
//! with punctuation split into its own tokens.

mod bleu;
mod readability;
mod report;
mod sari;

pub use bleu::{bleu, bleu_tokens};
pub use readability::{fkgl, length_stats, resegment, syllables};
pub use report::{evaluate, write_report, EvalReport, ReportRow};
pub use sari::{corpus_sari, sari, sari_tokens, SariMode, SariScore};

/// Lowercased metric tokens with punctuation split off.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for word in text.split_whitespace() {
        let mut cur = String::new();
        for ch in word.chars() {
            if ch.is_alphanumeric() || ch == '\'' {
                cur.extend(ch.to_lowercase());
            } else {
                if !cur.is_empty() {
                    out.push(std::mem::take(&mut cur));
                }
                out.push(ch.to_string());
            }
        }
        if !cur.is_empty() {
            out.push(cur);
        }
    }
    out
}

pub(crate) fn ngrams(tokens: &[String], n: usize) -> impl Iterator<Item = &[String]> {
    tokens.windows(n)
}

#[cfg(test)]
mod tests {
    use super::tokenize;

    #[test]
    fn tokenization_splits_punctuation() {
        assert_eq!(tokenize("The cat, sat."), ["the", "cat", ",", "sat", "."]);
        assert_eq!(tokenize("  "), Vec::<String>::new());
        assert_eq!(tokenize("don't ..."), ["don't", ".", ".", "."]);
    }
}
