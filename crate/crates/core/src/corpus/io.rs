use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{
    simple_para_index, validate_pair, AlignedCorpus, AlignedPair, CorpusSplits, Document, Operation, Plan, SplitTag,
};
use crate::error::{Error, Result};

/// One line of a corpus file. Field order is the canonical key order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusRecord {
    pub doc_id: String,
    pub level_src: u8,
    pub level_tgt: u8,
    pub complex: Vec<String>,
    pub simple: Vec<String>,
    pub para_index: Vec<usize>,
    pub alignment: Vec<(usize, Vec<usize>)>,
    pub ops: Vec<Operation>,
}

impl CorpusRecord {
    pub fn from_pair(pair: &AlignedPair) -> Self {
        CorpusRecord {
            doc_id: pair.complex.doc_id.clone(),
            level_src: pair.complex.reading_level,
            level_tgt: pair.simple.reading_level,
            complex: pair.complex.sentences.clone(),
            simple: pair.simple.sentences.clone(),
            para_index: pair.complex.para_index.clone(),
            alignment: pair.sent_alignment.clone(),
            ops: pair.ops.ops.clone(),
        }
    }

    /// Simple-side paragraph membership follows the complex sentence each
    /// simple sentence is aligned to.
    pub fn into_pair(self) -> AlignedPair {
        let simple_para = simple_para_index(&self.para_index, &self.alignment, self.simple.len());
        AlignedPair {
            complex: Document {
                doc_id: self.doc_id.clone(),
                reading_level: self.level_src,
                sentences: self.complex,
                para_index: self.para_index,
            },
            simple: Document {
                doc_id: self.doc_id,
                reading_level: self.level_tgt,
                sentences: self.simple,
                para_index: simple_para,
            },
            sent_alignment: self.alignment,
            ops: Plan::new(self.ops),
        }
    }
}

/// Parses and validates corpus records from a reader, preserving order.
pub fn read_corpus(reader: impl BufRead, split_tag: SplitTag) -> Result<AlignedCorpus> {
    let mut pairs = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: CorpusRecord = serde_json::from_str(&line)
            .map_err(|e| Error::Parse { line: n + 1, message: e.to_string() })?;
        let pair = record.into_pair();
        if let Some(v) = validate_pair(&pair).violations.into_iter().next() {
            return Err(Error::Validation { doc_id: v.doc_id, rule: v.rule });
        }
        pairs.push(pair);
    }
    Ok(AlignedCorpus { pairs, split_tag })
}

pub fn load_corpus(path: &Path) -> Result<AlignedCorpus> {
    let split_tag = match path.file_name().and_then(|f| f.to_str()) {
        Some("valid.jsonl") => SplitTag::Validation,
        Some("test.jsonl") => SplitTag::Test,
        _ => SplitTag::Train,
    };
    let file = fs::File::open(path)
        .map_err(|e| Error::Corpus(format!("cannot open {}: {e}", path.display())))?;
    read_corpus(BufReader::new(file), split_tag)
}

/// Canonical serialization: one compact record per line, `\n` terminated.
pub fn write_corpus(corpus: &AlignedCorpus, w: &mut impl Write) -> Result<()> {
    for pair in &corpus.pairs {
        serde_json::to_writer(&mut *w, &CorpusRecord::from_pair(pair))?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn write_splits(splits: &CorpusSplits, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    for corpus in splits.iter() {
        let mut f = std::io::BufWriter::new(fs::File::create(dir.join(corpus.split_tag.file_name()))?);
        write_corpus(corpus, &mut f)?;
        f.flush()?;
    }
    Ok(())
}

pub fn load_splits(dir: &Path) -> Result<CorpusSplits> {
    Ok(CorpusSplits {
        train: load_corpus(&dir.join(SplitTag::Train.file_name()))?,
        valid: load_corpus(&dir.join(SplitTag::Validation.file_name()))?,
        test: load_corpus(&dir.join(SplitTag::Test.file_name()))?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const IDENTITY: &str = r#"{"doc_id":"a1.2","level_src":0,"level_tgt":2,"complex":["A."],"simple":["A."],"para_index":[0],"alignment":[[0,[0]]],"ops":["copy"]}"#;

    #[test]
    fn loads_identity_record() {
        let corpus = read_corpus(IDENTITY.as_bytes(), SplitTag::Train).unwrap();
        assert_eq!(corpus.len(), 1);
        assert_eq!(corpus.pairs[0].ops.ops, vec![Operation::Copy]);
        let mut out = Vec::new();
        write_corpus(&corpus, &mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), format!("{IDENTITY}\n"));
    }

    #[test]
    fn short_ops_list_is_a_validation_error() {
        let line = IDENTITY.replace(r#""ops":["copy"]"#, r#""ops":[]"#);
        let err = read_corpus(line.as_bytes(), SplitTag::Train).unwrap_err();
        assert!(matches!(err, Error::Validation { ref doc_id, .. } if doc_id == "a1.2"), "{err}");
        assert_eq!(err.exit_code(), 3);
    }

    #[test]
    fn malformed_line_names_its_number() {
        let text = format!("{IDENTITY}\n{{\"doc_id\": 3\n");
        let err = read_corpus(text.as_bytes(), SplitTag::Train).unwrap_err();
        assert!(err.to_string().starts_with("corpus: line 2:"), "{err}");
    }

    #[test]
    fn merges_are_rejected() {
        let line = r#"{"doc_id":"m","level_src":0,"level_tgt":2,"complex":["A.","B."],"simple":["A B."],"para_index":[0,0],"alignment":[[0,[0]],[1,[0]]],"ops":["rephrase","rephrase"]}"#;
        let err = read_corpus(line.as_bytes(), SplitTag::Train).unwrap_err();
        assert!(err.to_string().contains("merges"), "{err}");
    }
}
