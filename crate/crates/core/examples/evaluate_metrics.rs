// SARI, BLEU and Flesch-Kincaid on hand-written outputs.

use docsimp::metrics::{bleu, corpus_sari, evaluate, fkgl, sari, syllables, SariMode};

pub fn run_example() -> docsimp::Result<()> {
    let source = "About 95 species are currently accepted.";
    let refs = ["About 95 species are currently known.", "About 95 species are now accepted.", "95 species are now accepted."];
    for out in ["About 95 you now get in.", "About 95 species are now agreed.", "About 95 species are currently agreed."] {
        let s = sari(source, out, &refs)?;
        println!("{out:<40} sari {:6.2}  add {:6.2} keep {:6.2} del {:6.2}", s.sari, s.add, s.keep, s.delete);
    }

    let sources = vec!["the enormous cat sat on the mat .".to_string(), "meanwhile the dog ran .".to_string()];
    let outputs = vec!["the big cat sat on the mat .".to_string(), String::new()];
    let references = vec![vec!["the big cat sat on the mat .".to_string()], vec![String::new()]];
    let pooled = corpus_sari(&sources, &outputs, &references, SariMode::PooledCounts)?;
    let mean = corpus_sari(&sources, &outputs, &references, SariMode::MeanOfUnits)?;
    println!("corpus sari pooled {:.2} mean {:.2}", pooled.sari, mean.sari);
    println!("bleu {:.2}", bleu(&outputs[..1], &references[..1])?);

    for text in ["The cat sat on the mat.", "Unbelievable.", "Photosynthesis transforms electromagnetic radiation."] {
        println!("fkgl {:7.2}  {text}", fkgl(text)?);
    }
    println!("syllables: table {} simple {} cake {}", syllables("table"), syllables("simple"), syllables("cake"));

    let docs: Vec<Vec<String>> = vec![vec!["The big cat sat.".into(), "It was warm.".into()]];
    let r = evaluate("demo", &["The enormous cat sat, which was warm.".to_string()], &docs, &[vec!["The big cat sat. It was warm.".into()]], SariMode::PooledCounts)?;
    println!("{}: sari {:.2} bleu {:.2} fkgl {:.2} tok {} sent {}", r.system, r.sari.sari, r.bleu, r.fkgl, r.tokens, r.sentences);
    Ok(())
}

#[allow(dead_code)]
fn main() -> docsimp::Result<()> {
    run_example()
}
