// Trains a small encoder-decoder to copy its input and stops once held-out
// exact match reaches the target.

use docsimp::corpus::{generate_synthetic, GeneratorSpec, Granularity, OpDistribution, OpMode, Operation};
use docsimp::seq2seq::{GenConfig, ModelConfig, Seq2SeqModel, Tokenizer};
use docsimp::trainer::{exact_match, make_training_pairs, train, Task, TrainConfig};

pub fn run_example() -> docsimp::Result<()> {
    let spec = |docs, seed| GeneratorSpec {
        num_docs: docs,
        sentences_per_doc: (1, 2),
        vocab_size: 30,
        ops: OpMode::Sampled(OpDistribution::only(Operation::Copy)),
        seed,
        ..GeneratorSpec::default()
    };
    let train_c = generate_synthetic(&spec(400, 1))?;
    let valid_c = generate_synthetic(&spec(10, 2))?;
    let tok = Tokenizer::from_corpus(&train_c, 64);
    let train_pairs = make_training_pairs(&train_c, Granularity::Sentence, Task::Simplify, &tok)?;
    let mut valid_pairs = make_training_pairs(&valid_c, Granularity::Sentence, Task::Simplify, &tok)?;
    valid_pairs.retain(|p| !p.src.contains(&docsimp::seq2seq::tokenizer::UNK));

    let cfg = ModelConfig {
        vocab_size: tok.vocab_size(),
        d_model: 48,
        n_heads: 2,
        n_enc_layers: 1,
        n_dec_layers: 1,
        ffn_dim: 96,
        max_len: 64,
        dropout: 0.0,
        ..ModelConfig::default()
    };
    let mut model = Seq2SeqModel::new(cfg, tok, 4)?;
    let gen = GenConfig { max_len: 40, ..GenConfig::greedy() };
    let metric = |m: &Seq2SeqModel| exact_match(m, &valid_pairs, &gen);
    let config = TrainConfig { lr: 1e-3, dropout: 0.0, max_epochs: 12, target_metric: Some(0.95), ..TrainConfig::default() };
    let report = train(&mut model, &train_pairs, &valid_pairs, &config, Some(&metric))?;
    for e in &report.epochs {
        println!("epoch {:>2} train {:.3} valid {:.3} em {:.2}", e.epoch, e.train_loss, e.valid_loss.unwrap_or(f64::NAN), e.metric.unwrap_or(0.0));
    }

    let sentence = &valid_c.pairs[0].complex.sentences[0];
    println!("\n{sentence}\n{}", model.generate(sentence, Some(3), None, None, &gen)?);
    Ok(())
}

#[allow(dead_code)]
fn main() -> docsimp::Result<()> {
    run_example()
}
