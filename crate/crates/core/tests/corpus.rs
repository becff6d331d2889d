mod common;

use docsimp::corpus::{
    derive_op_labels, generate_splits, generate_synthetic, read_corpus, validate_corpus, validate_splits, write_corpus,
    GeneratorSpec, OpMode, Operation, SplitTag,
};
use docsimp::metrics::resegment;
use docsimp::seq2seq::tokenizer::{is_special, token_op, EOS};
use docsimp::trainer::{make_training_pairs, Task};
use docsimp::corpus::Granularity;
use proptest::prelude::*;

fn spec_strategy() -> impl Strategy<Value = GeneratorSpec> {
    (1usize..25, 1usize..6, 0usize..6, any::<u64>(), any::<bool>()).prop_map(|(docs, lo, extra, seed, rules)| {
        GeneratorSpec {
            num_docs: docs,
            sentences_per_doc: (lo, lo + extra),
            ops: if rules { OpMode::default_rules() } else { GeneratorSpec::default().ops },
            seed,
            ..GeneratorSpec::default()
        }
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn generated_pairs_satisfy_every_invariant(spec in spec_strategy()) {
        let c = generate_synthetic(&spec).unwrap();
        prop_assert!(validate_corpus(&c).is_empty(), "{:?}", validate_corpus(&c));
        for pair in &c.pairs {
            prop_assert_eq!(pair.ops.len(), pair.complex.len());
            prop_assert_eq!(&derive_op_labels(pair).unwrap(), &pair.ops);
            let n = pair.complex.len();
            prop_assert!(n >= spec.sentences_per_doc.0 && n <= spec.sentences_per_doc.1);
            prop_assert_eq!(pair.complex.para_index[0], 0);
            prop_assert!(pair.complex.para_index.windows(2).all(|w| w[1] == w[0] || w[1] == w[0] + 1));
        }
    }

    #[test]
    fn corpus_files_round_trip(spec in spec_strategy()) {
        let c = generate_synthetic(&spec).unwrap();
        let mut bytes = Vec::new();
        write_corpus(&c, &mut bytes).unwrap();
        let back = read_corpus(&bytes[..], SplitTag::Train).unwrap();
        prop_assert_eq!(&back, &c);
        let mut again = Vec::new();
        write_corpus(&back, &mut again).unwrap();
        prop_assert_eq!(bytes, again);
    }

    #[test]
    fn split_outputs_resegment_into_two_sentences(spec in spec_strategy()) {
        let c = generate_synthetic(&spec).unwrap();
        for pair in &c.pairs {
            for (i, op) in pair.ops.ops.iter().enumerate() {
                if *op == Operation::Split {
                    prop_assert_eq!(resegment(&pair.target_text(i)).len(), 2);
                }
            }
        }
    }

    #[test]
    fn multitask_targets_strip_back_to_plain_targets(spec in spec_strategy()) {
        let c = generate_synthetic(&spec).unwrap();
        let tok = docsimp::seq2seq::Tokenizer::from_corpus(&c, 4096);
        for g in [Granularity::Sentence, Granularity::Paragraph] {
            let plain = make_training_pairs(&c, g, Task::Simplify, &tok).unwrap();
            for task in [Task::MultitaskPrefix, Task::MultitaskSep] {
                let multi = make_training_pairs(&c, g, task, &tok).unwrap();
                prop_assert_eq!(plain.len(), multi.len());
                for (p, m) in plain.iter().zip(&multi) {
                    prop_assert_eq!(*m.tgt.last().unwrap(), EOS);
                    prop_assert!(m.tgt.iter().filter(|&&t| is_special(t)).all(|&t| token_op(t).is_some() || t == EOS || t == docsimp::seq2seq::tokenizer::BOS));
                    let ops: Vec<Operation> = m.tgt.iter().filter_map(|&t| token_op(t)).collect();
                    prop_assert_eq!(&ops[..], &c.pairs[m.pair].ops.ops[m.unit.clone()]);
                    let stripped: Vec<usize> = m.tgt.iter().copied().filter(|&t| token_op(t).is_none()).collect();
                    prop_assert_eq!(tok.detokenize(&stripped), tok.detokenize(&p.tgt));
                    let sentences: Vec<String> = resegment(&tok.detokenize(&stripped));
                    prop_assert_eq!(sentences, resegment(&tok.detokenize(&p.tgt)));
                }
            }
        }
    }
}

#[test]
fn splits_keep_articles_together() {
    let splits = generate_splits(&GeneratorSpec { num_docs: 400, ..GeneratorSpec::default() }).unwrap();
    assert!(validate_splits(&splits).is_empty());
    assert_eq!(splits.train.len() + splits.valid.len() + splits.test.len(), 400);
    assert_eq!(splits.test.len(), 20);
    assert_eq!(splits.valid.len(), 10);
}

#[test]
fn sampled_label_distribution_matches_the_spec() {
    let spec = GeneratorSpec { num_docs: 1500, seed: 7, ..GeneratorSpec::default() };
    let OpMode::Sampled(dist) = spec.ops else { unreachable!() };
    let c = generate_synthetic(&spec).unwrap();
    let mut counts = [0usize; 4];
    for p in &c.pairs {
        for op in &p.ops.ops {
            counts[op.index()] += 1;
        }
    }
    let n: usize = counts.iter().sum();
    assert!(n >= 10_000, "{n} sentences");
    for op in Operation::ALL {
        let share = counts[op.index()] as f64 / n as f64;
        assert!((share - dist.weight(op)).abs() < 0.02, "{op:?}: {share:.3}");
    }
}

#[test]
fn delete_targets_are_immediate_eos() {
    let (c, _) = common::rules_corpus(40, 0, 3);
    let tok = common::grammar_tokenizer();
    let pairs = make_training_pairs(&c, Granularity::Sentence, Task::Plan, &tok).unwrap();
    let deletes: Vec<_> = pairs.iter().filter(|p| c.pairs[p.pair].ops.ops[p.unit.start] == Operation::Delete).collect();
    assert!(!deletes.is_empty());
    for p in deletes {
        assert_eq!(p.tgt.len(), 2);
        assert_eq!(p.tgt[1], EOS);
    }
}
