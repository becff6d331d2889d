//! Aligned complex/simple document pairs, their on-disk format, operation
//! labels and a synthetic corpus generator.

mod generate;
mod io;
mod labels;
mod validate;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

pub use generate::{
    apply_operation, generate_splits, generate_synthetic, GeneratorSpec, OpDistribution, OpMode,
    RuleSimplifier, Vocabulary, CONTEXT_CUE, DELETE_MARKER,
};
pub use io::{load_corpus, load_splits, read_corpus, write_corpus, write_splits, CorpusRecord};
pub use labels::{derive_op_labels, normalize_whitespace};
pub use validate::{article_key, validate_corpus, validate_pair, validate_splits, ValidationReport, Violation};

/// Number of discrete reading levels (0 = original, 4 = simplest).
pub const NUM_LEVELS: u8 = 5;

/// Per-sentence simplification operation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Operation {
    Copy,
    Rephrase,
    Split,
    Delete,
}

impl Operation {
    /// Fixed order, also the tie-break order for argmax decisions.
    pub const ALL: [Operation; 4] = [Operation::Copy, Operation::Rephrase, Operation::Split, Operation::Delete];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Operation> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Operation::Copy => "copy",
            Operation::Rephrase => "rephrase",
            Operation::Split => "split",
            Operation::Delete => "delete",
        }
    }
}

impl fmt::Display for Operation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Operation {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "copy" => Ok(Operation::Copy),
            "rephrase" => Ok(Operation::Rephrase),
            "split" => Ok(Operation::Split),
            "delete" => Ok(Operation::Delete),
            other => Err(Error::Corpus(format!("unknown operation {other:?}"))),
        }
    }
}

/// A document-level simplification plan: one operation per complex sentence.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Plan {
    pub ops: Vec<Operation>,
}

impl Plan {
    pub fn new(ops: Vec<Operation>) -> Self {
        Plan { ops }
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }
}

impl fmt::Display for Plan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, op) in self.ops.iter().enumerate() {
            if i > 0 {
                f.write_str(" ")?;
            }
            f.write_str(op.name())?;
        }
        Ok(())
    }
}

/// A document: ordered sentences with paragraph membership.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Document {
    pub doc_id: String,
    pub reading_level: u8,
    pub sentences: Vec<String>,
    /// Paragraph ordinal of each sentence.
    pub para_index: Vec<usize>,
}

impl Document {
    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    /// Index of the first sentence in the paragraph containing `i`.
    pub fn paragraph_start(&self, i: usize) -> usize {
        let p = self.para_index[i];
        let mut j = i;
        while j > 0 && self.para_index[j - 1] == p {
            j -= 1;
        }
        j
    }

    /// Sentence index ranges of consecutive paragraphs.
    pub fn paragraphs(&self) -> Vec<std::ops::Range<usize>> {
        let mut out = Vec::new();
        let mut start = 0;
        for i in 1..=self.len() {
            if i == self.len() || self.para_index[i] != self.para_index[start] {
                out.push(start..i);
                start = i;
            }
        }
        out
    }
}

/// Unit of text a simplifier processes at once.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Granularity {
    Sentence,
    Paragraph,
    Document,
}

impl Granularity {
    /// Sentence index ranges of the units of `doc`, in order.
    pub fn units(self, doc: &Document) -> Vec<std::ops::Range<usize>> {
        match self {
            Granularity::Sentence => (0..doc.len()).map(|i| i..i + 1).collect(),
            Granularity::Paragraph => doc.paragraphs(),
            Granularity::Document => vec![0..doc.len()],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Granularity::Sentence => "sent",
            Granularity::Paragraph => "para",
            Granularity::Document => "doc",
        }
    }
}

impl fmt::Display for Granularity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Granularity {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "sent" | "sentence" => Ok(Granularity::Sentence),
            "para" | "paragraph" => Ok(Granularity::Paragraph),
            "doc" | "document" => Ok(Granularity::Document),
            _ => Err(Error::Config(format!("unknown granularity {s:?}"))),
        }
    }
}

/// A complex document, its simplification and the sentence alignment.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AlignedPair {
    pub complex: Document,
    pub simple: Document,
    /// `(complex index, simple indices)`; an empty target list is a deletion.
    pub sent_alignment: Vec<(usize, Vec<usize>)>,
    pub ops: Plan,
}

impl AlignedPair {
    pub fn doc_id(&self) -> &str {
        &self.complex.doc_id
    }

    pub fn target_level(&self) -> u8 {
        self.simple.reading_level
    }

    /// Simple sentences aligned to complex sentence `i`, in order.
    pub fn targets_of(&self, i: usize) -> Vec<&str> {
        self.sent_alignment
            .iter()
            .find(|(c, _)| *c == i)
            .map(|(_, ts)| ts.iter().map(|&t| self.simple.sentences[t].as_str()).collect())
            .unwrap_or_default()
    }

    /// Simple text for complex sentence `i` (aligned sentences joined by a
    /// space; empty for deletions).
    pub fn target_text(&self, i: usize) -> String {
        self.targets_of(i).join(" ")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitTag {
    Train,
    Validation,
    Test,
}

impl SplitTag {
    pub fn file_name(self) -> &'static str {
        match self {
            SplitTag::Train => "train.jsonl",
            SplitTag::Validation => "valid.jsonl",
            SplitTag::Test => "test.jsonl",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AlignedCorpus {
    pub pairs: Vec<AlignedPair>,
    pub split_tag: SplitTag,
}

impl AlignedCorpus {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn num_sentences(&self) -> usize {
        self.pairs.iter().map(|p| p.complex.len()).sum()
    }
}

/// The three document-level splits of one corpus.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CorpusSplits {
    pub train: AlignedCorpus,
    pub valid: AlignedCorpus,
    pub test: AlignedCorpus,
}

impl CorpusSplits {
    pub fn iter(&self) -> impl Iterator<Item = &AlignedCorpus> {
        [&self.train, &self.valid, &self.test].into_iter()
    }
}

/// Simple-side paragraph ordinals: each simple sentence takes the paragraph
/// of the complex sentence it comes from, renumbered densely so paragraphs
/// that were deleted outright leave no gap.
pub fn simple_para_index(complex_para: &[usize], alignment: &[(usize, Vec<usize>)], n_simple: usize) -> Vec<usize> {
    let mut raw = vec![0usize; n_simple];
    for (i, targets) in alignment {
        let p = complex_para.get(*i).copied().unwrap_or(0);
        for &t in targets {
            if let Some(slot) = raw.get_mut(t) {
                *slot = p;
            }
        }
    }
    let mut out = Vec::with_capacity(n_simple);
    let mut next = 0;
    for (k, &p) in raw.iter().enumerate() {
        if k > 0 && p != raw[k - 1] {
            next += 1;
        }
        out.push(next);
    }
    out
}
