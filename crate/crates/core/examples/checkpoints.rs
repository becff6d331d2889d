// Saving and loading models. Parameters are kept at f32 precision so a
// reloaded model decodes exactly as the original.

use docsimp::context::ContextConfig;
use docsimp::planner::{PlannerConfig, PlannerModel};
use docsimp::seq2seq::{GenConfig, ModelConfig, Seq2SeqModel, Tokenizer};

pub fn run_example() -> docsimp::Result<()> {
    let dir = std::env::temp_dir().join(format!("docsimp-ckpt-{}", std::process::id()));
    std::fs::create_dir_all(&dir)?;
    let tok = Tokenizer::new(["the", "dog", "ran", "cat", "sat", "."], 64);
    let cfg = ModelConfig { vocab_size: tok.vocab_size(), d_model: 16, n_heads: 2, ffn_dim: 32, max_len: 64, ..ModelConfig::default() };
    let model = Seq2SeqModel::new(cfg, tok.clone(), 1)?;
    let planner = PlannerModel::new(
        PlannerConfig { context: ContextConfig { d_ctx: 16, ..ContextConfig::default() }, hidden: 16, ffn_dim: 32, ..PlannerConfig::default() },
        tok,
        2,
    )?;

    let path = dir.join("model.ckpt");
    model.save(&path)?;
    planner.save(&dir.join("planner.ckpt"))?;
    let back = Seq2SeqModel::load(&path)?;
    let planner_back = PlannerModel::load(&dir.join("planner.ckpt"))?;
    println!("{} bytes, {} parameters", std::fs::metadata(&path)?.len(), back.count_params());
    println!("same parameters: {}", back.params() == model.params());
    println!("same planner: {}", planner_back.params() == planner.params() && planner_back.encoder() == planner.encoder());

    let gen = GenConfig { beam_size: 3, max_len: 10, length_norm: true };
    let a = model.generate("the dog ran .", Some(2), None, None, &gen)?;
    let b = back.generate("the dog ran .", Some(2), None, None, &gen)?;
    println!("decodes {a:?} and {b:?}");
    std::fs::remove_dir_all(&dir)?;
    Ok(())
}

#[allow(dead_code)]
fn main() -> docsimp::Result<()> {
    run_example()
}
