// The four training formats for one paragraph: plain, plan-guided source,
// operation prefix and per-sentence operation markers.

use docsimp::corpus::{generate_synthetic, GeneratorSpec, Granularity, OpMode};
use docsimp::seq2seq::Tokenizer;
use docsimp::trainer::{make_training_pairs, Task};

pub fn run_example() -> docsimp::Result<()> {
    let corpus = generate_synthetic(&GeneratorSpec {
        num_docs: 1,
        sentences_per_doc: (3, 3),
        paragraph_len: (3, 3),
        ops: OpMode::default_rules(),
        target_levels: vec![4],
        seed: 12,
        ..GeneratorSpec::default()
    })?;
    let tok = Tokenizer::from_corpus(&corpus, 256);
    let show = |ids: &[usize]| ids.iter().map(|&i| tok.token_str(i)).collect::<Vec<_>>().join(" ");
    for task in [Task::Simplify, Task::Plan, Task::MultitaskPrefix, Task::MultitaskSep] {
        let pairs = make_training_pairs(&corpus, Granularity::Paragraph, task, &tok)?;
        println!("{task}");
        println!("  src {}", show(&pairs[0].src));
        println!("  tgt {}", show(&pairs[0].tgt));
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> docsimp::Result<()> {
    run_example()
}
