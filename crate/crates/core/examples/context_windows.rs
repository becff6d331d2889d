// Context windows around a sentence: complex neighbours by default,
// already simplified ones on the left when a dynamic store is filled.

use docsimp::context::{ContextConfig, ContextEncoder, DynamicStore};
use docsimp::corpus::{generate_synthetic, GeneratorSpec, OpMode};
use docsimp::seq2seq::Tokenizer;

pub fn run_example() -> docsimp::Result<()> {
    let corpus = generate_synthetic(&GeneratorSpec { num_docs: 3, ops: OpMode::default_rules(), seed: 4, ..GeneratorSpec::default() })?;
    let pair = &corpus.pairs[0];
    let doc = &pair.complex;
    let tok = Tokenizer::from_corpus(&corpus, 256);
    let enc = ContextEncoder::new(ContextConfig { d_ctx: 16, radius: 2, use_flags: true }, tok, 1);

    let i = doc.len() / 2;
    let fixed = enc.build_window(doc, i, 2, None)?;
    println!("sentence {i} of {}: offsets {:?}", doc.len(), fixed.offsets);
    println!("  static  {:?}", fixed.status);

    let mut store = DynamicStore::new(doc.len());
    for k in 0..i {
        store.set(k, enc.encode_output(&pair.target_text(k))?)?;
    }
    let dynamic = enc.build_window(doc, i, 2, Some(&store))?;
    println!("  dynamic {:?}", dynamic.status);
    println!("  window vectors {}x{}", dynamic.vectors.rows, dynamic.vectors.cols);

    let para = enc.build_window_paragraph(doc, i, 2, Some(&store))?;
    println!("  paragraph-level store (paragraph starts at {}) {:?}", doc.paragraph_start(i), para.status);
    Ok(())
}

#[allow(dead_code)]
fn main() -> docsimp::Result<()> {
    run_example()
}
