use std::collections::BTreeMap;
use std::path::Path;

use serde::Serialize;

use super::{bleu, corpus_sari, fkgl, length_stats, SariMode, SariScore};
use crate::error::{Error, Result};

/// Scores of one system over a set of documents.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub system: String,
    pub sari: SariScore,
    /// Grade level of all output text; NaN when the output is empty.
    pub fkgl: f64,
    pub bleu: f64,
    /// Mean tokens and sentences per output document.
    pub tokens: f64,
    pub sentences: f64,
    pub ms_per_sentence: Option<f64>,
    /// Scores supplied by external scorers, by name.
    pub external: BTreeMap<String, f64>,
}

/// One line of the report CSV.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReportRow {
    pub system: String,
    pub sari: f64,
    pub add: f64,
    pub keep: f64,
    pub delete: f64,
    pub fkgl: f64,
    pub bleu: f64,
    pub tok: f64,
    pub sent: f64,
    pub ms_per_sentence: Option<f64>,
}

impl EvalReport {
    pub fn row(&self) -> ReportRow {
        ReportRow {
            system: self.system.clone(),
            sari: self.sari.sari,
            add: self.sari.add,
            keep: self.sari.keep,
            delete: self.sari.delete,
            fkgl: self.fkgl,
            bleu: self.bleu,
            tok: self.tokens,
            sent: self.sentences,
            ms_per_sentence: self.ms_per_sentence,
        }
    }
}

/// Scores document outputs (one sentence list per document) against their
/// sources and references.
pub fn evaluate(
    system: &str,
    sources: &[String],
    outputs: &[Vec<String>],
    references: &[Vec<String>],
    mode: SariMode,
) -> Result<EvalReport> {
    if outputs.len() != sources.len() {
        return Err(Error::Metrics(format!("{} outputs for {} sources", outputs.len(), sources.len())));
    }
    let joined: Vec<String> = outputs.iter().map(|o| o.join(" ")).collect();
    let sari = corpus_sari(sources, &joined, references, mode)?;
    let bleu = bleu(&joined, references)?;
    let all = joined.join(" ");
    let fkgl = if all.trim().is_empty() { f64::NAN } else { fkgl(&all)? };
    let (mut tok, mut sent) = (0, 0);
    for o in outputs {
        let (t, s) = length_stats(o);
        tok += t;
        sent += s;
    }
    let n = outputs.len().max(1) as f64;
    Ok(EvalReport {
        system: system.to_string(),
        sari,
        fkgl,
        bleu,
        tokens: tok as f64 / n,
        sentences: sent as f64 / n,
        ms_per_sentence: None,
        external: BTreeMap::new(),
    })
}

/// Writes one CSV row per report.
pub fn write_report(path: &Path, reports: &[EvalReport]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in reports {
        w.serialize(r.row())?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn references_against_themselves() {
        let refs = vec![
            vec!["The cat sat on the mat. It was warm.".to_string()],
            vec!["A dog ran in the park today.".to_string()],
        ];
        let outs: Vec<Vec<String>> = refs.iter().map(|r| super::super::resegment(&r[0])).collect();
        let srcs: Vec<String> = vec!["The old cat sat on the mat, which was warm.".into(), "A dog ran in the park.".into()];
        let r = evaluate("ref", &srcs, &outs, &refs, SariMode::PooledCounts).unwrap();
        assert!((r.sari.sari - 100.0).abs() < 1e-9);
        assert!((r.bleu - 100.0).abs() < 1e-9);
        assert_eq!(r.sentences, 1.5);
    }
}
