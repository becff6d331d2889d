use crate::error::{Error, Result};

/// Splits text into sentences after `.`, `!` or `?` followed by whitespace
/// or the end of the text.
pub fn resegment(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut start = 0;
    let mut chars = text.char_indices().peekable();
    while let Some((i, c)) = chars.next() {
        if matches!(c, '.' | '!' | '?') {
            let boundary = match chars.peek() {
                None => true,
                Some(&(_, next)) => next.is_whitespace(),
            };
            if boundary {
                let end = i + c.len_utf8();
                let s = text[start..end].trim();
                if !s.is_empty() {
                    out.push(s.to_string());
                }
                start = end;
            }
        }
    }
    let rest = text[start..].trim();
    if !rest.is_empty() {
        out.push(rest.to_string());
    }
    out
}

fn is_vowel(c: char) -> bool {
    matches!(c, 'a' | 'e' | 'i' | 'o' | 'u' | 'y')
}

/// Vowel groups, less a silent final "e" (kept after a consonant + "l"),
/// at least one per word.
pub fn syllables(word: &str) -> usize {
    let w: Vec<char> = word.chars().filter(|c| c.is_alphabetic()).flat_map(char::to_lowercase).collect();
    let mut groups = 0;
    let mut prev = false;
    for &c in &w {
        let v = is_vowel(c);
        if v && !prev {
            groups += 1;
        }
        prev = v;
    }
    let n = w.len();
    if groups > 1 && n >= 2 && w[n - 1] == 'e' && !is_vowel(w[n - 2]) {
        let consonant_le = n >= 3 && w[n - 2] == 'l' && !is_vowel(w[n - 3]);
        if !consonant_le {
            groups -= 1;
        }
    }
    groups.max(1)
}

fn words(text: &str) -> impl Iterator<Item = &str> {
    text.split_whitespace().filter(|w| w.chars().any(char::is_alphanumeric))
}

/// Flesch-Kincaid grade level:
/// `0.39 * words / sentences + 11.8 * syllables / words - 15.59`.
pub fn fkgl(text: &str) -> Result<f64> {
    let sentences = resegment(text);
    let ws: Vec<&str> = sentences.iter().flat_map(|s| words(s)).collect();
    if sentences.is_empty() || ws.is_empty() {
        return Err(Error::Metrics("fkgl of empty text".into()));
    }
    let syl: usize = ws.iter().map(|w| syllables(w)).sum();
    let nw = ws.len() as f64;
    Ok(0.39 * nw / sentences.len() as f64 + 11.8 * syl as f64 / nw - 15.59)
}

/// Whitespace token count and resegmented sentence count of an output.
pub fn length_stats(sentences: &[impl AsRef<str>]) -> (usize, usize) {
    let tokens = sentences.iter().map(|s| s.as_ref().split_whitespace().count()).sum();
    let sents = sentences.iter().map(|s| resegment(s.as_ref()).len()).sum();
    (tokens, sents)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_computed_grades() {
        assert!((fkgl("The cat sat on the mat.").unwrap() - -1.45).abs() < 1e-12);
        assert!((fkgl("Unbelievable.").unwrap() - 43.80).abs() < 1e-12);
        let t = "The cat sat on the mat. A dog ran.";
        assert_eq!(fkgl(t).unwrap(), fkgl(&format!("{t} {t}")).unwrap());
        assert!(fkgl("  ").is_err());
    }

    #[test]
    fn syllable_rule() {
        for (w, n) in [("the", 1), ("cake", 1), ("table", 2), ("queue", 1), ("rhythm", 1), ("beautiful", 3), ("Unbelievable", 5)] {
            assert_eq!(syllables(w), n, "{w}");
        }
    }

    #[test]
    fn segmentation_and_lengths() {
        assert_eq!(resegment("A b. C! d e? f"), ["A b.", "C!", "d e?", "f"]);
        assert_eq!(resegment("3.5 apples."), ["3.5 apples."]);
        assert_eq!(length_stats(&["A b.", "C."]), (3, 2));
        assert_eq!(length_stats(&[] as &[&str]), (0, 0));
    }
}
