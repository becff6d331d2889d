// Reading-level and operation control tokens around a source sentence.

use docsimp::corpus::Operation;
use docsimp::seq2seq::Tokenizer;

pub fn run_example() -> docsimp::Result<()> {
    let tok = Tokenizer::new(["the", "old", "dog", "sat", "and", "a", "cat", "ran", "."], 64);
    let text = "the old dog sat and a cat ran .";

    let plain = tok.tokenize(text, Some(3), None)?;
    let guided = tok.tokenize(text, Some(3), Some(Operation::Split))?;
    let para = tok.tokenize_with_ops(text, Some(2), &[Operation::Copy, Operation::Delete])?;
    for (name, ids) in [("level only", &plain), ("split", &guided), ("paragraph", &para)] {
        let shown: Vec<String> = ids.iter().map(|&i| tok.token_str(i)).collect();
        println!("{name:<11} {}", shown.join(" "));
    }

    // A decoder trained with separated targets interleaves operation tokens.
    let mut target = vec![docsimp::seq2seq::tokenizer::op_token(Operation::Rephrase)];
    target.extend(tok.encode_body("the dog sat ."));
    target.push(docsimp::seq2seq::tokenizer::op_token(Operation::Copy));
    target.extend(tok.encode_body("a cat ran ."));
    for (op, s) in tok.detokenize_with_ops(&target) {
        println!("{:<9} {s}", op.map_or("-", |o| o.name()));
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> docsimp::Result<()> {
    run_example()
}
