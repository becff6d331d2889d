mod common;

use docsimp::corpus::Operation;
use docsimp::planner::{argmax_op, PlanMode, PlannerExample, PlannerModel};
use docsimp::seq2seq::generate::{beam_search, greedy, greedy_batch};
use docsimp::seq2seq::tokenizer::{BOS, EOS};
use docsimp::seq2seq::{AttentionMode, Example, GenConfig, GenRequest, Seq2SeqModel, Tokenizer};
use docsimp::tensor::{multi_head_attention, AttnMask, Tensor};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::sync::OnceLock;

fn tok() -> &'static Tokenizer {
    static T: OnceLock<Tokenizer> = OnceLock::new();
    T.get_or_init(common::grammar_tokenizer)
}

fn example(model: &Seq2SeqModel, rng: &mut ChaCha8Rng) -> Example {
    let words = common::random_tokens(rng, 1, 12).join(" ");
    let src = model.tokenizer().tokenize(&words, Some(rng.random_range(1..=4)), None).unwrap();
    let mut tgt = vec![BOS];
    tgt.extend(model.tokenizer().encode_body(&common::random_tokens(rng, 0, 8).join(" ")));
    tgt.push(EOS);
    Example { src, tgt, context: None }
}

fn close(a: &Tensor, b: &Tensor, tol: f64) -> bool {
    a.shape() == b.shape() && a.data.iter().zip(&b.data).all(|(x, y)| (x - y).abs() <= tol)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn attention_rows_are_distributions(
        tq in 1usize..6, tk in 1usize..7, heads in 1usize..4, seed in any::<u64>(), causal in any::<bool>()
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = heads * 2;
        let mut t = |r| Tensor::from_vec(r, d, (0..r * d).map(|_| rng.random_range(-3.0..3.0)).collect());
        let (q, k, v) = (t(tq), t(tk), t(tk));
        let mask = if causal { AttnMask::Causal } else { AttnMask::Full };
        let (out, probs) = multi_head_attention(&q, &k, &v, heads, &mask);
        prop_assert_eq!(out.shape(), (tq, d));
        prop_assert_eq!(probs.len(), heads);
        for p in &probs {
            for i in 0..tq {
                let row = p.row(i);
                prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12 || (causal && i >= tk));
                for (j, x) in row.iter().enumerate() {
                    prop_assert!(*x >= 0.0);
                    if causal && j > i {
                        prop_assert_eq!(*x, 0.0);
                    }
                }
            }
        }
    }

    #[test]
    fn a_wide_sliding_window_matches_full_attention(seed in 0u64..1000, w in 12usize..40) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let full = common::random_model(tok(), 16, false, seed);
        let mut cfg = full.config().clone();
        cfg.attention_mode = AttentionMode::Sliding;
        cfg.sliding_window = w;
        let mut sliding = Seq2SeqModel::new(cfg, tok().clone(), 0).unwrap();
        *sliding.params_mut() = full.params().clone();
        let ex = example(&full, &mut rng);
        prop_assume!(ex.src.len() <= w + 1);
        let a = full.forward(std::slice::from_ref(&ex)).unwrap();
        let b = sliding.forward(std::slice::from_ref(&ex)).unwrap();
        prop_assert!(close(&a[0], &b[0], 1e-12));
    }

    #[test]
    fn incremental_decoding_matches_the_full_decoder(seed in 0u64..1000, context in any::<bool>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let model = common::random_model(tok(), 16, context, seed);
        let mut ex = example(&model, &mut rng);
        if context {
            let (c, _) = common::rules_corpus(1, 0, seed);
            let doc = &c.pairs[0].complex;
            let i = rng.random_range(0..doc.len());
            ex.context = Some(model.context_encoder().unwrap().build_window(doc, i, 3, None).unwrap());
        }
        let full = &model.forward(std::slice::from_ref(&ex)).unwrap()[0];
        let mem = model.encode_memory(&ex.src, ex.context.as_ref()).unwrap();
        let mut cache = model.new_cache();
        for (t, &token) in ex.tgt[..ex.tgt.len() - 1].iter().enumerate() {
            let step = model.decode_step(&mut [(&mem, &mut cache, token)]).unwrap();
            let want = Tensor::row_vector(full.row(t).to_vec());
            prop_assert!(close(&step, &want, 1e-9));
        }
    }

    #[test]
    fn batched_greedy_equals_single_greedy_and_beam_of_one(seed in 0u64..1000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let model = common::random_model(tok(), 16, false, seed);
        let gen = GenConfig { max_len: 12, ..GenConfig::greedy() };
        let reqs: Vec<GenRequest> = (0..4).map(|_| GenRequest { src: example(&model, &mut rng).src, context: None }).collect();
        let batch = greedy_batch(&model, &reqs, &gen).unwrap();
        for (r, out) in reqs.iter().zip(&batch) {
            prop_assert_eq!(&greedy(&model, r, &gen).unwrap(), out);
            prop_assert_eq!(&beam_search(&model, r, &GenConfig { beam_size: 1, ..gen }).unwrap(), out);
            prop_assert!(out.len() < gen.max_len);
            prop_assert!(out.iter().all(|&t| model.can_emit(t) && t != EOS));
        }
        let wide = beam_search(&model, &reqs[0], &GenConfig { beam_size: 4, ..gen }).unwrap();
        prop_assert!(wide.len() < gen.max_len);
    }

    #[test]
    fn planner_probabilities_sum_to_one(seed in 0u64..500) {
        let planner = common::random_planner(tok(), 16, seed);
        let (c, _) = common::rules_corpus(1, 0, seed);
        for mode in [PlanMode::Dynamic, PlanMode::Static] {
            for ex in PlannerExample::from_pair(&c.pairs[0], planner.radius(), mode) {
                let p = planner.predict_example(&ex).unwrap();
                prop_assert!((p.probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                prop_assert_eq!(p.op, argmax_op(&p.probs));
            }
        }
    }
}

#[test]
fn ties_go_to_the_earlier_operation() {
    assert_eq!(argmax_op(&[0.25; 4]), Operation::Copy);
    assert_eq!(argmax_op(&[0.1, 0.4, 0.4, 0.1]), Operation::Rephrase);
    assert_eq!(argmax_op(&[0.1, 0.2, 0.35, 0.35]), Operation::Split);
    assert_eq!(argmax_op(&[0.0, 0.0, 0.0, 1.0]), Operation::Delete);
}

#[test]
fn checkpoints_round_trip_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for context in [false, true] {
        let model = common::random_model(tok(), 16, context, 11);
        let path = dir.path().join(format!("m{context}.ckpt"));
        model.save(&path).unwrap();
        let back = Seq2SeqModel::load(&path).unwrap();
        assert_eq!(back.config(), model.config());
        assert_eq!(back.params(), model.params());
        assert_eq!(back.tokenizer().words(), model.tokenizer().words());
        assert_eq!(back.context_encoder(), model.context_encoder());
        let ex = example(&model, &mut rng);
        if !context {
            assert_eq!(back.forward(std::slice::from_ref(&ex)).unwrap(), model.forward(std::slice::from_ref(&ex)).unwrap());
        }
        let again = dir.path().join("again.ckpt");
        back.save(&again).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&again).unwrap());
    }
    let planner = common::random_planner(tok(), 16, 12);
    let path = dir.path().join("p.ckpt");
    planner.save(&path).unwrap();
    let back = PlannerModel::load(&path).unwrap();
    assert_eq!(back.params(), planner.params());
    assert_eq!(back.encoder(), planner.encoder());
}

#[test]
fn corrupt_checkpoints_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ckpt");
    common::random_model(tok(), 16, false, 1).save(&path).unwrap();
    let bytes = std::fs::read(&path).unwrap();
    std::fs::write(&path, &bytes[..bytes.len() / 2]).unwrap();
    assert!(Seq2SeqModel::load(&path).is_err());
    std::fs::write(&path, b"not a checkpoint").unwrap();
    assert!(Seq2SeqModel::load(&path).is_err());
    assert!(PlannerModel::load(&path).is_err());
}

#[test]
fn oversized_and_mismatched_inputs_are_errors() {
    let plain = common::random_model(tok(), 16, false, 1);
    let ctx = common::random_model(tok(), 16, true, 1);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let ex = example(&plain, &mut rng);
    assert!(ctx.forward(std::slice::from_ref(&ex)).is_err());
    let long = Example { src: vec![BOS; common::TOY_MAX_LEN + 1], ..ex.clone() };
    assert!(plain.forward(&[long]).is_err());
    let empty = Example { src: vec![], ..ex };
    assert!(plain.forward(&[empty]).is_err());
}
