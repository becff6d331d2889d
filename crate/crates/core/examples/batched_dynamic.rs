// Step-batched dynamic generation: at each step the next sentence of every
// unfinished document is decoded together, and each document's left context
// is refreshed before the next step. The result matches one-at-a-time runs.

use docsimp::context::{ContextConfig, ContextEncoder};
use docsimp::corpus::{generate_synthetic, GeneratorSpec, OpMode};
use docsimp::pipeline::{run_dynamic_batched, schedule, simplify_document, DocInput, Models, Strategy};
use docsimp::seq2seq::{GenConfig, ModelConfig, Seq2SeqModel, Tokenizer};
use std::time::Instant;

pub fn run_example() -> docsimp::Result<()> {
    let corpus = generate_synthetic(&GeneratorSpec { num_docs: 12, sentences_per_doc: (2, 7), ops: OpMode::default_rules(), seed: 8, ..GeneratorSpec::default() })?;
    let tok = Tokenizer::from_corpus(&corpus, 128);
    let cfg = ModelConfig {
        vocab_size: tok.vocab_size(),
        d_model: 16,
        n_heads: 2,
        n_enc_layers: 1,
        n_dec_layers: 1,
        ffn_dim: 32,
        max_len: 128,
        dropout: 0.0,
        context_attention: true,
        d_ctx: 16,
        ..ModelConfig::default()
    };
    let mut model = Seq2SeqModel::new(cfg, tok.clone(), 6)?;
    model.set_context_encoder(ContextEncoder::new(ContextConfig { d_ctx: 16, radius: 2, use_flags: true }, tok, 7))?;

    let inputs: Vec<DocInput<'_>> =
        corpus.pairs.iter().map(|p| DocInput { doc: &p.complex, level: p.target_level(), oracle: None }).collect();
    let counts: Vec<usize> = inputs.iter().map(|i| i.doc.len()).collect();
    let steps = schedule(&counts);
    println!("{} documents, sentence counts {counts:?}", counts.len());
    println!("{} steps, active per step {:?}", steps.len(), steps.iter().map(Vec::len).collect::<Vec<_>>());

    let strategy = Strategy { use_context: true, ..Strategy::default() };
    let models = Models { simplifier: &model, planner: None };
    let gen = GenConfig { max_len: 16, ..GenConfig::greedy() };

    let t = Instant::now();
    let batched = run_dynamic_batched(&inputs, &strategy, &models, &gen, 8)?;
    let tb = t.elapsed();
    let t = Instant::now();
    let single: Vec<_> = inputs.iter().map(|i| simplify_document(*i, &strategy, &models, &gen)).collect::<docsimp::Result<_>>()?;
    let ts = t.elapsed();
    println!("batched {:.1} ms, one at a time {:.1} ms", tb.as_secs_f64() * 1e3, ts.as_secs_f64() * 1e3);
    println!("identical outputs: {}", batched == single);
    Ok(())
}

#[allow(dead_code)]
fn main() -> docsimp::Result<()> {
    run_example()
}
