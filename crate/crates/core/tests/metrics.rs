mod common;

use approx::assert_abs_diff_eq;
use common::{oracle_bleu, oracle_sari};
use docsimp::metrics::{
    bleu, bleu_tokens, corpus_sari, evaluate, fkgl, length_stats, resegment, sari, sari_tokens, syllables, tokenize,
    SariMode,
};
use proptest::prelude::*;

fn toks() -> impl Strategy<Value = Vec<String>> {
    prop::collection::vec(prop::sample::select(vec!["a", "b", "c", "d", "e", "."]), 0..9)
        .prop_map(|v| v.into_iter().map(String::from).collect())
}

fn nonempty_toks() -> impl Strategy<Value = Vec<String>> {
    toks().prop_filter("nonempty", |t| !t.is_empty())
}

proptest! {
    #[test]
    fn sari_matches_oracle(src in nonempty_toks(), out in toks(), refs in prop::collection::vec(toks(), 1..4)) {
        let got = sari_tokens(&src, &out, &refs).unwrap();
        let (s, a, k, d) = oracle_sari(&[(src, out, refs)]);
        prop_assert!((got.sari - s).abs() <= 1e-9);
        prop_assert!((got.add - a).abs() <= 1e-9);
        prop_assert!((got.keep - k).abs() <= 1e-9);
        prop_assert!((got.delete - d).abs() <= 1e-9);
    }

    #[test]
    fn sari_ignores_reference_order(src in nonempty_toks(), out in toks(), mut refs in prop::collection::vec(toks(), 1..4), rot in 0usize..3) {
        let a = sari_tokens(&src, &out, &refs).unwrap();
        let k = rot % refs.len();
        refs.rotate_left(k);
        refs.reverse();
        let b = sari_tokens(&src, &out, &refs).unwrap();
        prop_assert!((a.sari - b.sari).abs() <= 1e-9);
    }

    #[test]
    fn sari_is_the_mean_of_components_in_range(src in nonempty_toks(), out in toks(), refs in prop::collection::vec(toks(), 1..4)) {
        let s = sari_tokens(&src, &out, &refs).unwrap();
        prop_assert!((s.sari - (s.add + s.keep + s.delete) / 3.0).abs() <= 1e-9);
        for v in [s.sari, s.add, s.keep, s.delete] {
            prop_assert!((0.0..=100.0).contains(&v));
        }
    }

    #[test]
    fn pooled_and_mean_agree_on_one_unit(src in nonempty_toks(), out in toks(), refs in prop::collection::vec(toks(), 1..3)) {
        let join = |t: &Vec<String>| t.join(" ");
        let r: Vec<String> = refs.iter().map(join).collect();
        let p = corpus_sari(&[join(&src)], &[join(&out)], std::slice::from_ref(&r), SariMode::PooledCounts).unwrap();
        let m = corpus_sari(&[join(&src)], &[join(&out)], &[r], SariMode::MeanOfUnits).unwrap();
        prop_assert_eq!(p, m);
    }

    #[test]
    fn bleu_matches_oracle_and_stays_in_range(
        segs in prop::collection::vec((toks(), prop::collection::vec(nonempty_toks(), 1..3)), 1..4)
    ) {
        let (outs, refs): (Vec<_>, Vec<_>) = segs.into_iter().unzip();
        let got = bleu_tokens(&outs, &refs).unwrap();
        prop_assert!((got - oracle_bleu(&outs, &refs)).abs() <= 1e-9);
        prop_assert!((0.0..=100.0 + 1e-9).contains(&got));
    }

    #[test]
    fn doubling_a_text_keeps_its_grade(words in prop::collection::vec("[a-z]{1,9}", 1..12)) {
        let t = format!("{}.", words.join(" "));
        let a = fkgl(&t).unwrap();
        let b = fkgl(&format!("{t} {t}")).unwrap();
        prop_assert!(a.is_finite());
        prop_assert!((a - b).abs() < 1e-9);
    }

    #[test]
    fn a_short_sentence_lowers_words_per_sentence(words in prop::collection::vec("[a-z]{1,9}", 3..15)) {
        let t = format!("{}.", words.join(" "));
        let (w0, s0) = length_stats(&resegment(&t));
        let (w1, s1) = length_stats(&resegment(&format!("{t} Go.")));
        prop_assert!((w1 as f64 / s1 as f64) < (w0 as f64 / s0 as f64));
    }

    #[test]
    fn syllables_are_at_least_one(word in "[a-z]{1,12}") {
        prop_assert!(syllables(&word) >= 1);
    }

    #[test]
    fn tokens_are_lowercase_and_nonempty(text in "[A-Za-z ,.!?']{0,40}") {
        for t in tokenize(&text) {
            prop_assert!(!t.is_empty());
            prop_assert_eq!(t.to_lowercase(), t.clone());
        }
    }
}

#[test]
fn hand_computed_grade_levels() {
    assert_abs_diff_eq!(fkgl("The cat sat on the mat.").unwrap(), -1.45, epsilon = 1e-9);
    assert_abs_diff_eq!(fkgl("Unbelievable.").unwrap(), 43.80, epsilon = 1e-9);
}

#[test]
fn empty_text_has_no_grade() {
    assert!(fkgl("").is_err());
    assert_eq!(length_stats(&[] as &[&str]), (0, 0));
    assert!(resegment("").is_empty());
}

#[test]
fn sari_needs_a_reference() {
    assert!(sari("a b", "a b", &[] as &[&str]).is_err());
}

#[test]
fn perfect_bleu_needs_four_grams() {
    let refs = vec![vec!["the cat sat on the mat".to_string()]];
    assert_abs_diff_eq!(bleu(&["the cat sat on the mat"], &refs).unwrap(), 100.0, epsilon = 1e-9);
    assert_eq!(bleu(&["the cat"], &[vec!["the cat".to_string()]]).unwrap(), 0.0);
}

#[test]
fn references_against_themselves_score_full_bleu() {
    let sources = vec!["the enormous cat sat. meanwhile a dog ran".to_string()];
    let outputs = vec![vec!["the big cat sat.".to_string()]];
    let refs = vec![vec!["the big cat sat.".to_string()]];
    let r = evaluate("reference", &sources, &outputs, &refs, SariMode::PooledCounts).unwrap();
    assert_abs_diff_eq!(r.bleu, 100.0, epsilon = 1e-9);
    assert_abs_diff_eq!(r.sari.sari, 100.0, epsilon = 1e-9);
}
