// Adding context attention to a model leaves its outputs unchanged until
// the new output projections move away from zero.

use docsimp::context::{ContextConfig, ContextEncoder};
use docsimp::seq2seq::tokenizer::{BOS, EOS};
use docsimp::seq2seq::{Example, ModelConfig, Seq2SeqModel, Tokenizer};
use docsimp::corpus::Document;
use docsimp::params::uniform_tensor;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn run_example() -> docsimp::Result<()> {
    let tok = Tokenizer::new(["the", "dog", "ran", "cat", "sat", "."], 64);
    let cfg = ModelConfig { vocab_size: tok.vocab_size(), d_model: 16, n_heads: 2, ffn_dim: 32, max_len: 64, dropout: 0.0, ..ModelConfig::default() };
    let plain = Seq2SeqModel::new(cfg.clone(), tok.clone(), 3)?;
    let mut ctx = Seq2SeqModel::new(ModelConfig { context_attention: true, d_ctx: 16, ..cfg }, tok.clone(), 3)?;
    ctx.set_context_encoder(ContextEncoder::new(ContextConfig { d_ctx: 16, radius: 2, use_flags: true }, tok.clone(), 9))?;
    println!("parameters: plain {} with context {}", plain.count_params(), ctx.count_params());

    let doc = Document {
        doc_id: "d".into(),
        reading_level: 0,
        sentences: vec!["the dog ran .".into(), "the cat sat .".into(), "the dog sat .".into()],
        para_index: vec![0, 0, 1],
    };
    let window = ctx.context_encoder().expect("encoder set").build_window(&doc, 1, 2, None)?;
    let src = tok.tokenize("the cat sat .", Some(3), None)?;
    let mut tgt = vec![BOS];
    tgt.extend(tok.encode_body("the cat sat ."));
    tgt.push(EOS);

    let a = plain.forward(&[Example { src: src.clone(), tgt: tgt.clone(), context: None }])?;
    let b = ctx.forward(&[Example { src: src.clone(), tgt: tgt.clone(), context: Some(window.clone()) }])?;
    println!("identical logits at init: {}", a == b);

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for i in 0..ctx.params().len() {
        if ctx.params().name(i).ends_with("ctx.wo") {
            let (r, c) = ctx.params().tensor(i).shape();
            *ctx.params_mut().tensor_mut(i) = uniform_tensor(&mut rng, r, c, 0.1);
        }
    }
    let c = ctx.forward(&[Example { src, tgt, context: Some(window) }])?;
    let diff = a[0].data.iter().zip(&c[0].data).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    println!("after moving the context projection: max logit change {diff:.4}");
    Ok(())
}

#[allow(dead_code)]
fn main() -> docsimp::Result<()> {
    run_example()
}
