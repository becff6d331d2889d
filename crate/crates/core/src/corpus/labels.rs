use crate::corpus::{AlignedPair, Operation, Plan};
use crate::error::{Error, Result};

pub fn normalize_whitespace(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Derives per-sentence operations from the sentence alignment:
/// no target is a deletion, two or more targets a split, a single
/// whitespace-identical target a copy, anything else a rephrase.
/// The pair's existing `ops` are ignored.
pub fn derive_op_labels(pair: &AlignedPair) -> Result<Plan> {
    let n = pair.complex.len();
    let mut targets: Vec<Option<&Vec<usize>>> = vec![None; n];
    for (i, ts) in &pair.sent_alignment {
        let slot = targets.get_mut(*i).ok_or_else(|| {
            Error::Corpus(format!("{}: alignment index {i} out of range", pair.doc_id()))
        })?;
        if slot.is_some() {
            return Err(Error::Corpus(format!("{}: complex sentence {i} aligned twice", pair.doc_id())));
        }
        *slot = Some(ts);
    }
    let mut ops = Vec::with_capacity(n);
    for (i, ts) in targets.into_iter().enumerate() {
        let ts = ts.ok_or_else(|| {
            Error::Corpus(format!("{}: alignment missing complex sentence {i}", pair.doc_id()))
        })?;
        let op = match ts.as_slice() {
            [] => Operation::Delete,
            [t] => {
                let simple = pair.simple.sentences.get(*t).ok_or_else(|| {
                    Error::Corpus(format!("{}: simple index {t} out of range", pair.doc_id()))
                })?;
                if normalize_whitespace(simple) == normalize_whitespace(&pair.complex.sentences[i]) {
                    Operation::Copy
                } else {
                    Operation::Rephrase
                }
            }
            _ => Operation::Split,
        };
        ops.push(op);
    }
    Ok(Plan::new(ops))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Document;

    fn pair(complex: &[&str], simple: &[&str], alignment: Vec<(usize, Vec<usize>)>) -> AlignedPair {
        let doc = |s: &[&str], level| Document {
            doc_id: "t.2".into(),
            reading_level: level,
            sentences: s.iter().map(|x| x.to_string()).collect(),
            para_index: vec![0; s.len()],
        };
        AlignedPair { complex: doc(complex, 0), simple: doc(simple, 2), sent_alignment: alignment, ops: Plan::default() }
    }

    #[test]
    fn identical_sentence_is_copy() {
        let p = pair(&["The cat sat."], &["The  cat sat."], vec![(0, vec![0])]);
        assert_eq!(derive_op_labels(&p).unwrap().ops, vec![Operation::Copy]);
    }

    #[test]
    fn two_targets_is_split() {
        let p = pair(&["a and b."], &["a.", "b."], vec![(0, vec![0, 1])]);
        assert_eq!(derive_op_labels(&p).unwrap().ops, vec![Operation::Split]);
    }

    #[test]
    fn no_target_is_delete_and_changed_is_rephrase() {
        let p = pair(&["x y.", "big dog."], &["large dog."], vec![(0, vec![]), (1, vec![0])]);
        assert_eq!(derive_op_labels(&p).unwrap().ops, vec![Operation::Delete, Operation::Rephrase]);
    }

    #[test]
    fn missing_index_is_an_error() {
        let p = pair(&["a.", "b."], &["a."], vec![(0, vec![0])]);
        assert!(derive_op_labels(&p).unwrap_err().to_string().contains("missing complex sentence 1"));
    }
}
