// Trains the sentence-operation planner on a rules corpus and plans a
// held-out document statically and dynamically.

use docsimp::context::ContextConfig;
use docsimp::corpus::{generate_synthetic, AlignedCorpus, GeneratorSpec, OpMode, RuleSimplifier};
use docsimp::planner::{PlanMode, PlannerConfig, PlannerModel};
use docsimp::seq2seq::Tokenizer;
use docsimp::trainer::{train_planner, TrainConfig};

pub fn run_example() -> docsimp::Result<()> {
    let all = generate_synthetic(&GeneratorSpec { num_docs: 330, ops: OpMode::default_rules(), seed: 21, ..GeneratorSpec::default() })?;
    let tok = Tokenizer::from_corpus(&all, 256);
    let mut pairs = all.pairs;
    let test = AlignedCorpus { pairs: pairs.split_off(300), split_tag: docsimp::corpus::SplitTag::Test };
    let train_c = AlignedCorpus { pairs, split_tag: docsimp::corpus::SplitTag::Train };

    let cfg = PlannerConfig {
        context: ContextConfig { d_ctx: 32, radius: 3, use_flags: true },
        n_layers: 1,
        n_heads: 2,
        ffn_dim: 64,
        hidden: 32,
        dropout: 0.0,
    };
    let mut planner = PlannerModel::new(cfg, tok, 3)?;
    let config = TrainConfig { lr: 1e-3, dropout: 0.0, max_epochs: 10, ..TrainConfig::default() };
    let report = train_planner(&mut planner, &train_c, &test, &config)?;
    for e in &report.epochs {
        println!("epoch {} loss {:.3} held-out accuracy {:.3}", e.epoch, e.train_loss, e.valid_accuracy.unwrap_or(0.0));
    }
    println!("class weights {:?}", report.class_weights.map(|w| (w * 100.0).round() / 100.0));
    println!("per class {:?}", report.per_class_accuracy);

    let pair = &test.pairs[0];
    let level = pair.target_level();
    let fixed = planner.plan_document(&pair.complex, level, PlanMode::Static, None)?;
    let dynamic = planner.plan_document(&pair.complex, level, PlanMode::Dynamic, Some(&RuleSimplifier))?;
    let names = |p: &docsimp::corpus::Plan| p.ops.iter().map(|o| o.name()).collect::<Vec<_>>().join(" ");
    println!("\ngold    {}", names(&pair.ops));
    println!("static  {}", names(&fixed));
    println!("dynamic {}", names(&dynamic));
    Ok(())
}

#[allow(dead_code)]
fn main() -> docsimp::Result<()> {
    run_example()
}
