//! Closed-vocabulary whitespace tokenizer with reading-level and operation
//! control tokens.

use std::collections::HashMap;

use crate::corpus::{AlignedCorpus, Operation, NUM_LEVELS};
use crate::error::{Error, Result};

pub const PAD: usize = 0;
pub const BOS: usize = 1;
pub const EOS: usize = 2;
pub const UNK: usize = 3;
pub const SEP: usize = 4;
const RL_BASE: usize = 5;
const OP_BASE: usize = RL_BASE + NUM_LEVELS as usize;
/// Number of special tokens; ordinary words start at this id.
pub const NUM_SPECIAL: usize = OP_BASE + 4;

const PUNCTUATION: &[char] = &['.', ',', '!', '?', ';', ':'];

fn special_name(id: usize) -> String {
    match id {
        PAD => "<pad>".into(),
        BOS => "<s>".into(),
        EOS => "</s>".into(),
        UNK => "<unk>".into(),
        SEP => "<sep>".into(),
        id if id < OP_BASE => format!("<rl_{}>", id - RL_BASE),
        id => format!("<op_{}>", Operation::ALL[id - OP_BASE].name()),
    }
}

/// Reading-level control token id.
pub fn level_token(level: u8) -> usize {
    RL_BASE + level as usize
}

/// Operation control token id.
pub fn op_token(op: Operation) -> usize {
    OP_BASE + op.index()
}

/// The operation an id stands for, if it is an operation token.
pub fn token_op(id: usize) -> Option<Operation> {
    id.checked_sub(OP_BASE).and_then(Operation::from_index).filter(|_| id < NUM_SPECIAL)
}

pub fn is_special(id: usize) -> bool {
    id < NUM_SPECIAL
}

/// Splits text into word and punctuation pieces.
pub fn split_pieces(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    for word in text.split_whitespace() {
        let mut rest = word;
        let lead = rest.len() - rest.trim_start_matches(PUNCTUATION).len();
        for i in 0..lead {
            out.push(&rest[i..i + 1]);
        }
        rest = &rest[lead..];
        let core = rest.trim_end_matches(PUNCTUATION);
        if !core.is_empty() {
            out.push(core);
        }
        let tail = &rest[core.len()..];
        for i in 0..tail.len() {
            out.push(&tail[i..i + 1]);
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Tokenizer {
    words: Vec<String>,
    ids: HashMap<String, usize>,
    max_len: usize,
}

impl Tokenizer {
    /// Builds a vocabulary from the given words (deduplicated, sorted).
    pub fn new<S: AsRef<str>>(words: impl IntoIterator<Item = S>, max_len: usize) -> Self {
        let mut ws: Vec<String> = words.into_iter().map(|w| w.as_ref().to_string()).collect();
        ws.sort();
        ws.dedup();
        let ids = ws.iter().enumerate().map(|(i, w)| (w.clone(), i + NUM_SPECIAL)).collect();
        Tokenizer { words: ws, ids, max_len }
    }

    /// Vocabulary of every piece appearing on either side of the corpus.
    pub fn from_corpus(corpus: &AlignedCorpus, max_len: usize) -> Self {
        let mut words = Vec::new();
        for p in &corpus.pairs {
            for s in p.complex.sentences.iter().chain(&p.simple.sentences) {
                words.extend(split_pieces(s).into_iter().map(str::to_string));
            }
        }
        Self::new(words, max_len)
    }

    pub fn vocab_size(&self) -> usize {
        NUM_SPECIAL + self.words.len()
    }

    pub fn max_len(&self) -> usize {
        self.max_len
    }

    pub fn set_max_len(&mut self, max_len: usize) {
        self.max_len = max_len;
    }

    /// Ordinary (non-special) vocabulary words in id order.
    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn token_str(&self, id: usize) -> String {
        if is_special(id) {
            special_name(id)
        } else {
            self.words.get(id - NUM_SPECIAL).cloned().unwrap_or_else(|| special_name(UNK))
        }
    }

    /// Body ids without any special tokens; unknown pieces map to UNK.
    pub fn encode_body(&self, text: &str) -> Vec<usize> {
        split_pieces(text).into_iter().map(|p| self.ids.get(p).copied().unwrap_or(UNK)).collect()
    }

    /// `[op tokens] [level token] BOS body EOS`. Refuses sequences longer
    /// than the configured maximum instead of truncating.
    pub fn tokenize_with_ops(&self, text: &str, level: Option<u8>, ops: &[Operation]) -> Result<Vec<usize>> {
        if let Some(l) = level {
            if l >= NUM_LEVELS {
                return Err(Error::Seq2Seq(format!("reading level {l} outside 0..=4")));
            }
        }
        let mut ids: Vec<usize> = ops.iter().map(|o| op_token(*o)).collect();
        ids.extend(level.map(level_token));
        ids.push(BOS);
        ids.extend(self.encode_body(text));
        ids.push(EOS);
        if ids.len() > self.max_len {
            return Err(Error::Seq2Seq(format!(
                "sequence of {} tokens exceeds max_len {}",
                ids.len(),
                self.max_len
            )));
        }
        Ok(ids)
    }

    pub fn tokenize(&self, text: &str, level: Option<u8>, op: Option<Operation>) -> Result<Vec<usize>> {
        let ops: Vec<Operation> = op.into_iter().collect();
        self.tokenize_with_ops(text, level, &ops)
    }

    /// Text of all non-special ids; punctuation attaches to the previous word.
    pub fn detokenize(&self, ids: &[usize]) -> String {
        let mut out = String::new();
        for &id in ids {
            if is_special(id) && id != UNK {
                continue;
            }
            let piece = self.token_str(id);
            let is_punct = piece.len() == 1 && piece.chars().all(|c| PUNCTUATION.contains(&c));
            if !out.is_empty() && !is_punct {
                out.push(' ');
            }
            out.push_str(&piece);
        }
        out
    }

    /// Splits a generated id sequence at operation tokens, returning the
    /// operations and the text that follows each. Text before the first
    /// operation token is returned with `None`.
    pub fn detokenize_with_ops(&self, ids: &[usize]) -> Vec<(Option<Operation>, String)> {
        let mut out: Vec<(Option<Operation>, Vec<usize>)> = vec![(None, Vec::new())];
        for &id in ids {
            match token_op(id) {
                Some(op) => out.push((Some(op), Vec::new())),
                None => out.last_mut().expect("nonempty").1.push(id),
            }
        }
        out.into_iter()
            .map(|(op, body)| (op, self.detokenize(&body)))
            .filter(|(op, text)| op.is_some() || !text.is_empty())
            .collect()
    }

    /// Serialized vocabulary (ordinary words separated by single spaces).
    pub fn vocab_line(&self) -> String {
        self.words.join(" ")
    }

    pub fn from_vocab_line(line: &str, max_len: usize) -> Self {
        Self::new(line.split(' ').filter(|w| !w.is_empty()), max_len)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tok() -> Tokenizer {
        Tokenizer::new(["a", "b", "the", "cat", "."], 64)
    }

    #[test]
    fn control_token_layout() {
        let t = tok();
        let ids = t.tokenize("a b", Some(3), Some(Operation::Split)).unwrap();
        let a = t.encode_body("a")[0];
        let b = t.encode_body("b")[0];
        assert_eq!(ids, vec![op_token(Operation::Split), level_token(3), BOS, a, b, EOS]);
        assert_eq!(t.tokenize("a b", None, None).unwrap(), vec![BOS, a, b, EOS]);
    }

    #[test]
    fn detokenize_normalizes_whitespace() {
        let t = tok();
        let ids = t.tokenize("the  cat", None, None).unwrap();
        assert_eq!(t.detokenize(&ids), "the cat");
        let ids = t.tokenize("the cat.  a b.", None, None).unwrap();
        assert_eq!(t.detokenize(&ids), "the cat. a b.");
    }

    #[test]
    fn specials_never_come_from_text() {
        let t = tok();
        let ids = t.encode_body("<s> </s> <op_copy>");
        assert!(ids.iter().all(|&i| i == UNK));
    }

    #[test]
    fn too_long_is_refused() {
        let mut t = tok();
        t.set_max_len(4);
        assert!(t.tokenize("a b a", None, None).is_err());
    }

    #[test]
    fn op_segments() {
        let t = tok();
        let mut ids = vec![BOS, op_token(Operation::Copy)];
        ids.extend(t.encode_body("a."));
        ids.push(op_token(Operation::Delete));
        ids.push(op_token(Operation::Split));
        ids.extend(t.encode_body("b. cat."));
        assert_eq!(
            t.detokenize_with_ops(&ids),
            vec![
                (Some(Operation::Copy), "a.".to_string()),
                (Some(Operation::Delete), String::new()),
                (Some(Operation::Split), "b. cat.".to_string())
            ]
        );
    }

    #[test]
    fn special_ids_are_stable() {
        assert_eq!(level_token(0), 5);
        assert_eq!(op_token(Operation::Copy), 10);
        assert_eq!(token_op(13), Some(Operation::Delete));
        assert_eq!(token_op(14), None);
        assert_eq!(NUM_SPECIAL, 14);
    }
}
