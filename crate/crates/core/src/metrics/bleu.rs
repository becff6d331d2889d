use std::collections::BTreeMap;

use super::{ngrams, tokenize};
use crate::error::{Error, Result};

fn counts(tokens: &[String], n: usize) -> BTreeMap<&[String], usize> {
    let mut m = BTreeMap::new();
    for g in ngrams(tokens, n) {
        *m.entry(g).or_insert(0) += 1;
    }
    m
}

/// Corpus BLEU (0..100) with clipped 1..4-gram precisions, the closest
/// reference length for the brevity penalty and no smoothing.
pub fn bleu(outputs: &[impl AsRef<str>], references: &[Vec<String>]) -> Result<f64> {
    let outs: Vec<Vec<String>> = outputs.iter().map(|o| tokenize(o.as_ref())).collect();
    let refs: Vec<Vec<Vec<String>>> =
        references.iter().map(|rs| rs.iter().map(|r| tokenize(r)).collect()).collect();
    bleu_tokens(&outs, &refs)
}

pub fn bleu_tokens(outputs: &[Vec<String>], references: &[Vec<Vec<String>>]) -> Result<f64> {
    if outputs.len() != references.len() {
        return Err(Error::Metrics(format!("{} outputs but {} reference lists", outputs.len(), references.len())));
    }
    let mut matched = [0usize; 4];
    let mut total = [0usize; 4];
    let (mut hyp_len, mut ref_len) = (0usize, 0usize);
    for (out, refs) in outputs.iter().zip(references) {
        if refs.is_empty() {
            return Err(Error::Metrics("bleu needs at least one reference per output".into()));
        }
        hyp_len += out.len();
        let c = out.len() as i64;
        ref_len += refs.iter().map(|r| r.len()).min_by_key(|&l| ((l as i64 - c).abs(), l)).unwrap_or(0);
        for n in 1..=4 {
            let mut best: BTreeMap<&[String], usize> = BTreeMap::new();
            for r in refs {
                for (g, k) in counts(r, n) {
                    let e = best.entry(g).or_insert(0);
                    *e = (*e).max(k);
                }
            }
            for (g, k) in counts(out, n) {
                matched[n - 1] += k.min(best.get(g).copied().unwrap_or(0));
            }
            total[n - 1] += out.len().saturating_sub(n - 1);
        }
    }
    if hyp_len == 0 || matched.contains(&0) {
        return Ok(0.0);
    }
    let log_p: f64 = (0..4).map(|i| (matched[i] as f64 / total[i] as f64).ln()).sum::<f64>() / 4.0;
    let bp = if hyp_len > ref_len { 1.0 } else { (1.0 - ref_len as f64 / hyp_len as f64).exp() };
    Ok(100.0 * bp * log_p.exp())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn refs(rs: &[&[&str]]) -> Vec<Vec<String>> {
        rs.iter().map(|r| r.iter().map(|s| s.to_string()).collect()).collect()
    }

    #[test]
    fn identical_outputs_score_100() {
        let outs = ["the cat sat on the mat .", "a dog ran far away now"];
        let b = bleu(&outs, &refs(&[&[outs[0]], &[outs[1]]])).unwrap();
        assert!((b - 100.0).abs() < 1e-9);
    }

    #[test]
    fn no_four_gram_match_scores_zero() {
        let b = bleu(&["a b c d e"], &refs(&[&["a b c x e"]])).unwrap();
        assert_eq!(b, 0.0);
    }

    #[test]
    fn hand_computed_brevity_penalty() {
        // 4 of 4 tokens match a 6-token reference: precisions are 1, BP = e^(1 - 6/4).
        let b = bleu(&["a b c d"], &refs(&[&["a b c d e f"]])).unwrap();
        assert!((b - 100.0 * (-0.5f64).exp()).abs() < 1e-9);
    }

    #[test]
    fn length_mismatch_is_an_error() {
        assert!(bleu(&["a"], &[]).is_err());
    }
}
