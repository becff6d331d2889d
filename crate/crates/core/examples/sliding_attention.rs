// Banded encoder self-attention for long inputs. Control tokens stay
// global; a band wider than the input is the same as full attention.

use docsimp::seq2seq::tokenizer::{BOS, EOS};
use docsimp::seq2seq::{AttentionMode, Example, ModelConfig, Seq2SeqModel, Tokenizer};
use docsimp::tensor::AttnMask;

pub fn run_example() -> docsimp::Result<()> {
    let tok = Tokenizer::new(["a", "b", "c", "d", "."], 128);
    let base = ModelConfig { vocab_size: tok.vocab_size(), d_model: 16, n_heads: 2, ffn_dim: 32, max_len: 128, dropout: 0.0, ..ModelConfig::default() };
    let full = Seq2SeqModel::new(base.clone(), tok.clone(), 5)?;
    let mut narrow = Seq2SeqModel::new(ModelConfig { attention_mode: AttentionMode::Sliding, sliding_window: 2, ..base.clone() }, tok.clone(), 5)?;
    let mut wide = Seq2SeqModel::new(ModelConfig { attention_mode: AttentionMode::Sliding, sliding_window: 64, ..base }, tok.clone(), 5)?;
    *narrow.params_mut() = full.params().clone();
    *wide.params_mut() = full.params().clone();

    let src = tok.tokenize("a b c d a b c d a b .", Some(2), None)?;
    if let AttnMask::Allowed(lists) = narrow.encoder_mask(&src) {
        for (p, keys) in lists.iter().enumerate().take(5) {
            println!("{:>8} sees {:?}", tok.token_str(src[p]), keys);
        }
    }

    let ex = Example { src, tgt: vec![BOS, 5, EOS], context: None };
    let f = full.forward(std::slice::from_ref(&ex))?;
    let w = wide.forward(std::slice::from_ref(&ex))?;
    let n = narrow.forward(std::slice::from_ref(&ex))?;
    let gap = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    println!("wide band vs full: {:.2e}", gap(&f[0].data, &w[0].data));
    println!("narrow band vs full: {:.2e}", gap(&f[0].data, &n[0].data));
    Ok(())
}

#[allow(dead_code)]
fn main() -> docsimp::Result<()> {
    run_example()
}
