use std::collections::HashMap;

use crate::corpus::{AlignedCorpus, AlignedPair, CorpusSplits, Document, Operation, SplitTag, NUM_LEVELS};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Violation {
    pub doc_id: String,
    pub rule: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn len(&self) -> usize {
        self.violations.len()
    }

    fn push(&mut self, doc_id: &str, rule: impl Into<String>) {
        self.violations.push(Violation { doc_id: doc_id.to_string(), rule: rule.into() });
    }
}

/// Grouping key shared by all reading-level variants of one article: the
/// document id up to its first `.` (the whole id when there is none).
pub fn article_key(doc_id: &str) -> &str {
    doc_id.split('.').next().unwrap_or(doc_id)
}

fn check_document(doc: &Document, side: &str, allow_empty: bool, report: &mut ValidationReport) {
    let id = &doc.doc_id;
    if doc.sentences.is_empty() && !allow_empty {
        report.push(id, format!("{side} document has no sentences"));
    }
    if doc.reading_level >= NUM_LEVELS {
        report.push(id, format!("{side} reading level {} outside 0..=4", doc.reading_level));
    }
    if let Some(i) = doc.sentences.iter().position(|s| s.trim().is_empty()) {
        report.push(id, format!("{side} sentence {i} is empty"));
    }
    if doc.para_index.len() != doc.sentences.len() {
        report.push(
            id,
            format!("{side} para_index has {} entries for {} sentences", doc.para_index.len(), doc.sentences.len()),
        );
    } else if let Some(&first) = doc.para_index.first() {
        if first != 0 {
            report.push(id, format!("{side} para_index does not start at 0"));
        }
        if doc.para_index.windows(2).any(|w| w[1] < w[0]) {
            report.push(id, format!("{side} para_index is decreasing"));
        }
    }
}

/// Checks every structural invariant of one pair.
pub fn validate_pair(pair: &AlignedPair) -> ValidationReport {
    let mut report = ValidationReport::default();
    let id = pair.doc_id().to_string();
    check_document(&pair.complex, "complex", false, &mut report);
    check_document(&pair.simple, "simple", true, &mut report);

    let n = pair.complex.len();
    let m = pair.simple.len();
    let mut seen_complex = vec![0usize; n];
    let mut seen_simple = vec![0usize; m];
    for (i, targets) in &pair.sent_alignment {
        match seen_complex.get_mut(*i) {
            Some(c) => *c += 1,
            None => report.push(&id, format!("alignment complex index {i} out of range")),
        }
        for &t in targets {
            match seen_simple.get_mut(t) {
                Some(c) => *c += 1,
                None => report.push(&id, format!("alignment simple index {t} out of range")),
            }
        }
    }
    for (i, c) in seen_complex.iter().enumerate() {
        if *c != 1 {
            report.push(&id, format!("alignment covers complex sentence {i} {c} times"));
        }
    }
    for (t, c) in seen_simple.iter().enumerate() {
        match c {
            0 => report.push(&id, format!("simple sentence {t} is unaligned")),
            1 => {}
            _ => report.push(&id, format!("simple sentence {t} merges {c} complex sentences")),
        }
    }

    if pair.ops.len() != n {
        report.push(&id, format!("ops has {} entries for {n} complex sentences", pair.ops.len()));
    } else {
        for (i, targets) in &pair.sent_alignment {
            let Some(op) = pair.ops.ops.get(*i) else { continue };
            let deleted = targets.is_empty();
            let split = targets.len() >= 2;
            if deleted != (*op == Operation::Delete) || split != (*op == Operation::Split) {
                report.push(&id, format!("sentence {i}: op {op} inconsistent with {} alignment targets", targets.len()));
            }
        }
    }
    report
}

pub fn validate_corpus(corpus: &AlignedCorpus) -> ValidationReport {
    let mut report = ValidationReport::default();
    let mut ids: HashMap<&str, usize> = HashMap::new();
    for pair in &corpus.pairs {
        report.violations.extend(validate_pair(pair).violations);
        *ids.entry(pair.doc_id()).or_default() += 1;
    }
    let mut dups: Vec<_> = ids.into_iter().filter(|(_, c)| *c > 1).collect();
    dups.sort();
    for (id, c) in dups {
        report.push(id, format!("doc_id appears {c} times"));
    }
    report
}

/// Per-split checks plus the split discipline: every article lives in
/// exactly one split.
pub fn validate_splits(splits: &CorpusSplits) -> ValidationReport {
    let mut report = ValidationReport::default();
    let mut homes: HashMap<&str, Vec<SplitTag>> = HashMap::new();
    for corpus in splits.iter() {
        report.violations.extend(validate_corpus(corpus).violations);
        for pair in &corpus.pairs {
            let tags = homes.entry(article_key(pair.doc_id())).or_default();
            if !tags.contains(&corpus.split_tag) {
                tags.push(corpus.split_tag);
            }
        }
    }
    let mut crossing: Vec<_> = homes.into_iter().filter(|(_, t)| t.len() > 1).collect();
    crossing.sort_by(|a, b| a.0.cmp(b.0));
    for (article, tags) in crossing {
        report.push(article, format!("article appears in several splits: {tags:?}"));
    }
    report
}
