// Generates a small synthetic aligned corpus, validates it and prints one
// document with its operation labels.

use docsimp::corpus::{derive_op_labels, generate_splits, validate_splits, write_corpus, GeneratorSpec, OpMode};

pub fn run_example() -> docsimp::Result<()> {
    let spec = GeneratorSpec { num_docs: 80, ops: OpMode::default_rules(), seed: 7, ..GeneratorSpec::default() };
    let splits = generate_splits(&spec)?;
    println!(
        "train {} / valid {} / test {} documents, {} train sentences",
        splits.train.len(),
        splits.valid.len(),
        splits.test.len(),
        splits.train.num_sentences()
    );
    let report = validate_splits(&splits);
    println!("violations: {}", report.len());

    let pair = &splits.test.pairs[0];
    println!("\n{} (level {} -> {})", pair.doc_id(), pair.complex.reading_level, pair.target_level());
    for (i, s) in pair.complex.sentences.iter().enumerate() {
        println!("  [{}] {:<9} {s}", pair.complex.para_index[i], pair.ops.ops[i].name());
        let t = pair.target_text(i);
        if !t.is_empty() {
            println!("      {:<9} {t}", "->");
        }
    }
    assert_eq!(derive_op_labels(pair)?, pair.ops);

    let mut jsonl = Vec::new();
    write_corpus(&splits.test, &mut jsonl)?;
    let first = String::from_utf8_lossy(&jsonl);
    println!("\nfirst record: {}", first.lines().next().unwrap_or_default());
    Ok(())
}

#[allow(dead_code)]
fn main() -> docsimp::Result<()> {
    run_example()
}
