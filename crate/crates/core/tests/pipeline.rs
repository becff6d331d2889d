mod common;

use docsimp::corpus::{Granularity, Operation, Plan};
use docsimp::pipeline::{
    plan_compliance, read_outputs, run_batched, run_dynamic_batched, schedule, simplify_document, write_outputs, DocInput,
    Models, PlanSource, SimplifiedDoc, Strategy,
};
use docsimp::seq2seq::GenConfig;
use proptest::prelude::*;
use std::sync::OnceLock;

struct Fixture {
    docs: docsimp::corpus::AlignedCorpus,
    plain: docsimp::seq2seq::Seq2SeqModel,
    ctx: docsimp::seq2seq::Seq2SeqModel,
    planner: docsimp::planner::PlannerModel,
}

fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let tok = common::grammar_tokenizer();
        let (docs, _) = common::rules_corpus(30, 0, 17);
        Fixture {
            plain: common::random_model(&tok, 16, false, 1),
            ctx: common::random_model(&tok, 16, true, 2),
            planner: common::random_planner(&tok, 16, 3),
            docs,
        }
    })
}

fn gen() -> GenConfig {
    GenConfig { max_len: 10, ..GenConfig::greedy() }
}

fn strategies() -> Vec<Strategy> {
    let mut out = Vec::new();
    for plan_source in [PlanSource::None, PlanSource::Predicted, PlanSource::Oracle] {
        for dynamic in [false, true] {
            for granularity in [Granularity::Sentence, Granularity::Paragraph] {
                out.push(Strategy { granularity, use_context: false, plan_source, dynamic });
            }
            out.push(Strategy { granularity: Granularity::Sentence, use_context: true, plan_source, dynamic });
        }
    }
    out
}

fn models<'m>(f: &'m Fixture, s: &Strategy) -> Models<'m> {
    Models { simplifier: if s.use_context { &f.ctx } else { &f.plain }, planner: Some(&f.planner) }
}

fn check_partition(n: usize, out: &SimplifiedDoc) {
    let mut src = 0;
    let mut dst = 0;
    for p in &out.provenance {
        assert_eq!(p.src_range().start, src);
        assert_eq!(p.out_range().start, dst);
        assert!(p.src_range().end > src);
        src = p.src_range().end;
        dst = p.out_range().end;
        if p.op == Some(Operation::Delete) {
            assert!(p.out_range().is_empty());
        }
    }
    assert_eq!(src, n);
    assert_eq!(dst, out.output.len());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn provenance_tiles_input_and_output(k in 0usize..30, which in 0usize..18) {
        let f = fixture();
        let s = strategies()[which];
        let pair = &f.docs.pairs[k];
        let input = DocInput { doc: &pair.complex, level: pair.target_level(), oracle: Some(&pair.ops) };
        let out = simplify_document(input, &s, &models(f, &s), &gen()).unwrap();
        check_partition(pair.complex.len(), &out);
        prop_assert_eq!(&out.doc_id, pair.doc_id());
        if s.plan_source == PlanSource::None {
            prop_assert!(out.plan.is_none());
        } else {
            prop_assert_eq!(out.plan.as_ref().unwrap().len(), pair.complex.len());
        }
        if s.plan_source == PlanSource::Oracle {
            prop_assert_eq!(out.plan.as_ref(), Some(&pair.ops));
        }
    }
}

#[test]
fn an_all_delete_plan_produces_nothing() {
    let f = fixture();
    let pair = &f.docs.pairs[0];
    let plan = Plan::new(vec![Operation::Delete; pair.complex.len()]);
    for g in [Granularity::Sentence, Granularity::Paragraph] {
        let s = Strategy { granularity: g, plan_source: PlanSource::Oracle, ..Strategy::default() };
        let input = DocInput { doc: &pair.complex, level: 3, oracle: Some(&plan) };
        let out = simplify_document(input, &s, &models(f, &s), &gen()).unwrap();
        assert!(out.output.is_empty());
        assert_eq!(out.text(), "");
        if g == Granularity::Sentence {
            assert_eq!(plan_compliance(&pair.complex, &out), (pair.complex.len(), pair.complex.len()));
        }
    }
}

#[test]
fn outputs_round_trip_through_jsonl() {
    let f = fixture();
    let s = Strategy { plan_source: PlanSource::Predicted, ..Strategy::default() };
    let inputs: Vec<DocInput<'_>> = f.docs.pairs[..6]
        .iter()
        .map(|p| DocInput { doc: &p.complex, level: p.target_level(), oracle: None })
        .collect();
    let outs = run_batched(&inputs, &s, &models(f, &s), &gen(), 4).unwrap();
    let mut buf = Vec::new();
    write_outputs(&mut buf, &outs).unwrap();
    assert_eq!(read_outputs(&buf[..]).unwrap(), outs);
}

#[test]
fn static_batched_runs_match_single_runs() {
    let f = fixture();
    let s = Strategy { use_context: true, dynamic: false, ..Strategy::default() };
    let inputs: Vec<DocInput<'_>> = f.docs.pairs[..5]
        .iter()
        .map(|p| DocInput { doc: &p.complex, level: p.target_level(), oracle: None })
        .collect();
    let batched = run_batched(&inputs, &s, &models(f, &s), &gen(), 3).unwrap();
    for (i, b) in inputs.iter().zip(&batched) {
        assert_eq!(&simplify_document(*i, &s, &models(f, &s), &gen()).unwrap(), b);
    }
}

#[test]
fn schedule_takes_one_unit_per_document_per_step() {
    assert_eq!(schedule(&[2, 0, 3]), vec![vec![0, 2], vec![0, 2], vec![2]]);
    assert!(schedule(&[]).is_empty());
}

#[test]
fn inconsistent_setups_are_rejected() {
    let f = fixture();
    let pair = &f.docs.pairs[0];
    let input = DocInput { doc: &pair.complex, level: 3, oracle: None };
    let bad_ctx = Strategy { granularity: Granularity::Paragraph, use_context: true, ..Strategy::default() };
    assert!(bad_ctx.validate().is_err());

    let ctx = Strategy { use_context: true, ..Strategy::default() };
    let wrong = Models { simplifier: &f.plain, planner: None };
    assert!(simplify_document(input, &ctx, &wrong, &gen()).is_err());

    let predicted = Strategy { plan_source: PlanSource::Predicted, ..Strategy::default() };
    assert!(simplify_document(input, &predicted, &wrong, &gen()).is_err());

    let oracle = Strategy { plan_source: PlanSource::Oracle, ..Strategy::default() };
    assert!(simplify_document(input, &oracle, &wrong, &gen()).is_err());

    let fixed = Strategy { dynamic: false, ..Strategy::default() };
    assert!(run_dynamic_batched(&[input], &fixed, &wrong, &gen(), 2).is_err());
    assert!(run_batched(&[input], &Strategy::default(), &wrong, &gen(), 0).is_err());
}
