// Finite-difference check of backpropagated gradients through a small
// encoder-decoder with context attention.

use docsimp::autograd::Graph;
use docsimp::context::{ContextConfig, ContextEncoder};
use docsimp::corpus::Document;
use docsimp::params::uniform_tensor;
use docsimp::seq2seq::model::MODEL_PARAM_TAG;
use docsimp::seq2seq::tokenizer::{BOS, EOS};
use docsimp::seq2seq::{Example, ModelConfig, Seq2SeqModel, Tokenizer};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn loss(model: &Seq2SeqModel, ex: &Example) -> docsimp::Result<f64> {
    let mut g = Graph::new();
    let (l, _) = model.loss_graph(&mut g, ex)?;
    Ok(g.value(l).data[0])
}

pub fn run_example() -> docsimp::Result<()> {
    let tok = Tokenizer::new(["the", "dog", "ran", "cat", "sat", "old", "."], 32);
    let cfg = ModelConfig {
        vocab_size: tok.vocab_size(),
        d_model: 8,
        n_heads: 2,
        n_enc_layers: 1,
        n_dec_layers: 1,
        ffn_dim: 16,
        max_len: 32,
        dropout: 0.0,
        context_attention: true,
        d_ctx: 8,
        ..ModelConfig::default()
    };
    let mut model = Seq2SeqModel::new(cfg, tok.clone(), 2)?;
    model.set_context_encoder(ContextEncoder::new(ContextConfig { d_ctx: 8, radius: 2, use_flags: true }, tok.clone(), 3))?;
    // Zero-initialized tensors would hide their inputs' gradients.
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for i in 0..model.params().len() {
        let (r, c) = model.params().tensor(i).shape();
        if model.params().tensor(i).data.iter().all(|v| *v == 0.0) {
            *model.params_mut().tensor_mut(i) = uniform_tensor(&mut rng, r, c, 0.5);
        }
    }

    let doc = Document {
        doc_id: "d".into(),
        reading_level: 0,
        sentences: vec!["the old dog ran .".into(), "the cat sat .".into()],
        para_index: vec![0, 0],
    };
    let window = model.context_encoder().expect("set").build_window(&doc, 0, 2, None)?;
    let mut tgt = vec![BOS];
    tgt.extend(tok.encode_body("the dog ran ."));
    tgt.push(EOS);
    let ex = Example { src: tok.tokenize("the old dog ran .", Some(3), None)?, tgt, context: Some(window) };

    let grads = {
        let mut g = Graph::new();
        let (l, _) = model.loss_graph(&mut g, &ex)?;
        g.backward(l, 1.0).take(MODEL_PARAM_TAG).expect("model gradients")
    };

    let h = 1e-3;
    let mut worst: f64 = 0.0;
    for _ in 0..25 {
        let i = rng.random_range(0..model.params().len());
        let j = rng.random_range(0..model.params().tensor(i).len());
        let x0 = model.params().tensor(i).data[j];
        let mut at = |dx: f64| -> docsimp::Result<f64> {
            model.params_mut().tensor_mut(i).data[j] = x0 + dx;
            loss(&model, &ex)
        };
        let numeric = (-at(2.0 * h)? + 8.0 * at(h)? - 8.0 * at(-h)? + at(-2.0 * h)?) / (12.0 * h);
        model.params_mut().tensor_mut(i).data[j] = x0;
        let analytic = grads.grad(i).data[j];
        let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6);
        worst = worst.max(rel);
        println!("{:<20} {analytic:>12.3e} {numeric:>12.3e}", model.params().name(i));
    }
    println!("max relative error {worst:.2e}");
    Ok(())
}

#[allow(dead_code)]
fn main() -> docsimp::Result<()> {
    run_example()
}
