// Planner plus plan-guided simplifier: predict one operation per sentence,
// then realize each sentence under its operation.

use docsimp::context::ContextConfig;
use docsimp::corpus::{generate_synthetic, GeneratorSpec, Granularity, OpMode, Operation};
use docsimp::pipeline::{plan_compliance, simplify_document, DocInput, Models, PlanSource, Strategy};
use docsimp::planner::{PlannerConfig, PlannerModel};
use docsimp::seq2seq::{GenConfig, ModelConfig, Seq2SeqModel, Tokenizer};
use docsimp::trainer::{make_training_pairs, train, train_planner, Task, TrainConfig};

pub fn run_example() -> docsimp::Result<()> {
    let corpus = generate_synthetic(&GeneratorSpec { num_docs: 260, ops: OpMode::default_rules(), seed: 31, ..GeneratorSpec::default() })?;
    let tok = Tokenizer::from_corpus(&corpus, 256);
    let (train_c, test) = {
        let mut c = corpus.clone();
        let t = c.pairs.split_off(250);
        (c, docsimp::corpus::AlignedCorpus { pairs: t, split_tag: docsimp::corpus::SplitTag::Test })
    };
    let quick = TrainConfig { lr: 1e-3, dropout: 0.0, batch_size: 16, ..TrainConfig::default() };

    let pcfg = PlannerConfig {
        context: ContextConfig { d_ctx: 32, radius: 3, use_flags: true },
        n_layers: 1,
        n_heads: 2,
        ffn_dim: 64,
        hidden: 32,
        dropout: 0.0,
    };
    let mut planner = PlannerModel::new(pcfg, tok.clone(), 1)?;
    train_planner(&mut planner, &train_c, &test, &TrainConfig { max_epochs: 8, ..quick.clone() })?;

    let mcfg = ModelConfig {
        vocab_size: tok.vocab_size(),
        d_model: 48,
        n_heads: 2,
        n_enc_layers: 1,
        n_dec_layers: 1,
        ffn_dim: 96,
        max_len: 256,
        dropout: 0.0,
        ..ModelConfig::default()
    };
    let mut simplifier = Seq2SeqModel::new(mcfg, tok.clone(), 2)?;
    let pairs = make_training_pairs(&train_c, Granularity::Sentence, Task::Plan, &tok)?;
    let report = train(&mut simplifier, &pairs, &[], &TrainConfig { max_epochs: 4, task: Task::Plan, ..quick }, None)?;
    println!("simplifier loss by epoch {:?}", report.losses().iter().map(|l| (l * 1000.0).round() / 1000.0).collect::<Vec<_>>());

    let models = Models { simplifier: &simplifier, planner: Some(&planner) };
    let gen = GenConfig { max_len: 48, ..GenConfig::greedy() };
    let has = |p: &docsimp::corpus::AlignedPair, op| p.ops.ops.contains(&op);
    let pair = test
        .pairs
        .iter()
        .find(|p| has(p, Operation::Split) && has(p, Operation::Delete))
        .unwrap_or(&test.pairs[0]);
    for source in [PlanSource::Predicted, PlanSource::Oracle] {
        let strategy = Strategy { plan_source: source, ..Strategy::default() };
        let out = simplify_document(DocInput { doc: &pair.complex, level: pair.target_level(), oracle: Some(&pair.ops) }, &strategy, &models, &gen)?;
        let (ok, n) = plan_compliance(&pair.complex, &out);
        println!("\n{source} plan, compliance {ok}/{n}");
        for p in &out.provenance {
            let src = p.src_range().map(|i| pair.complex.sentences[i].as_str()).collect::<Vec<_>>().join(" ");
            let op = p.op.map_or("-", |o| o.name());
            println!("  {op:<9} {src}");
            for s in &out.output[p.out_range()] {
                println!("  {:<9} {s}", "->");
            }
        }
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> docsimp::Result<()> {
    run_example()
}
