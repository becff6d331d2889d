//! Deterministic synthetic corpora built from a small closed grammar.
//!
//! Complex sentences are generated first; the simple side is produced by
//! applying each sentence's operation with rule oracles:
//! copy keeps the sentence, rephrase substitutes every word found in the
//! complex-to-simple lexicon, split cuts a two-clause sentence at its
//! conjunction, and delete drops the sentence.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{simple_para_index, AlignedCorpus, AlignedPair, CorpusSplits, Document, Operation, Plan, SplitTag};
use crate::error::{Error, Result};

/// Sentence-initial token that marks a sentence for deletion at level >= 3
/// in rule-determined corpora.
pub const DELETE_MARKER: &str = "meanwhile";

/// Sentence-initial token whose surviving sentence causes the *next*
/// sentence to be deleted at level >= 3 in rule-determined corpora.
pub const CONTEXT_CUE: &str = "indeed";

const CONJUNCTION: &str = "and";

const DETERMINERS: &[&str] = &["the", "a"];
const PREPOSITIONS: &[&str] = &["near", "behind", "beside"];
const NOUNS: &[&str] = &[
    "dog", "cat", "man", "woman", "boy", "girl", "bird", "horse", "farmer", "teacher", "doctor", "car",
    "house", "town", "river", "road", "tree", "school", "book", "home", "baby", "person", "building",
];
const VERBS: &[&str] = &[
    "saw", "found", "liked", "helped", "built", "bought", "got", "checked", "started", "left", "painted",
    "watched", "visited", "carried", "cleaned", "moved",
];
const ADJECTIVES: &[&str] =
    &["big", "small", "old", "new", "red", "happy", "tired", "fast", "quiet", "modern", "brown", "young"];

const COMPLEX_NOUNS: &[(&str, &str)] = &[
    ("canine", "dog"),
    ("physician", "doctor"),
    ("automobile", "car"),
    ("residence", "home"),
    ("infant", "baby"),
    ("individual", "person"),
    ("structure", "building"),
    ("municipality", "town"),
];
const COMPLEX_VERBS: &[(&str, &str)] = &[
    ("observed", "saw"),
    ("discovered", "found"),
    ("assisted", "helped"),
    ("constructed", "built"),
    ("purchased", "bought"),
    ("acquired", "got"),
    ("examined", "checked"),
    ("commenced", "started"),
    ("departed", "left"),
];
const COMPLEX_ADJECTIVES: &[(&str, &str)] = &[
    ("enormous", "big"),
    ("minuscule", "small"),
    ("elderly", "old"),
    ("delighted", "happy"),
    ("fatigued", "tired"),
    ("rapid", "fast"),
    ("contemporary", "modern"),
];

/// The closed word pools of the synthetic grammar.
#[derive(Clone, Debug)]
pub struct Vocabulary {
    nouns: Vec<&'static str>,
    verbs: Vec<&'static str>,
    adjectives: Vec<&'static str>,
    complex_nouns: Vec<(&'static str, &'static str)>,
    complex_verbs: Vec<(&'static str, &'static str)>,
    complex_adjectives: Vec<(&'static str, &'static str)>,
}

impl Vocabulary {
    /// Largest supported content-word budget.
    pub fn max_size() -> usize {
        NOUNS.len()
            + VERBS.len()
            + ADJECTIVES.len()
            + COMPLEX_NOUNS.len()
            + COMPLEX_VERBS.len()
            + COMPLEX_ADJECTIVES.len()
    }

    /// Keeps roughly `size` content words, shrinking each pool in proportion
    /// (at least one word per pool). Lexicon targets always stay available.
    pub fn with_size(size: usize) -> Result<Self> {
        if size == 0 {
            return Err(Error::Config("synthetic vocabulary size must be positive".into()));
        }
        let frac = (size as f64 / Self::max_size() as f64).min(1.0);
        let take = |n: usize| ((n as f64 * frac).round() as usize).clamp(1, n);
        Ok(Vocabulary {
            nouns: NOUNS[..take(NOUNS.len())].to_vec(),
            verbs: VERBS[..take(VERBS.len())].to_vec(),
            adjectives: ADJECTIVES[..take(ADJECTIVES.len())].to_vec(),
            complex_nouns: COMPLEX_NOUNS[..take(COMPLEX_NOUNS.len())].to_vec(),
            complex_verbs: COMPLEX_VERBS[..take(COMPLEX_VERBS.len())].to_vec(),
            complex_adjectives: COMPLEX_ADJECTIVES[..take(COMPLEX_ADJECTIVES.len())].to_vec(),
        })
    }

    /// Simple replacement for a lexicon word.
    pub fn simplify_word(word: &str) -> Option<&'static str> {
        COMPLEX_NOUNS
            .iter()
            .chain(COMPLEX_VERBS)
            .chain(COMPLEX_ADJECTIVES)
            .find(|(c, _)| *c == word)
            .map(|(_, s)| *s)
    }

    /// Every token the grammar can emit, sorted.
    pub fn all_tokens() -> Vec<&'static str> {
        let mut v: Vec<&'static str> = DETERMINERS
            .iter()
            .chain(PREPOSITIONS)
            .chain(NOUNS)
            .chain(VERBS)
            .chain(ADJECTIVES)
            .copied()
            .chain(COMPLEX_NOUNS.iter().chain(COMPLEX_VERBS).chain(COMPLEX_ADJECTIVES).map(|(c, _)| *c))
            .chain([DELETE_MARKER, CONTEXT_CUE, CONJUNCTION, "."])
            .collect();
        v.sort_unstable();
        v.dedup();
        v
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OpDistribution {
    pub copy: f64,
    pub rephrase: f64,
    pub split: f64,
    pub delete: f64,
}

impl OpDistribution {
    pub fn only(op: Operation) -> Self {
        let mut d = OpDistribution { copy: 0.0, rephrase: 0.0, split: 0.0, delete: 0.0 };
        *d.weight_mut(op) = 1.0;
        d
    }

    pub fn weight(&self, op: Operation) -> f64 {
        match op {
            Operation::Copy => self.copy,
            Operation::Rephrase => self.rephrase,
            Operation::Split => self.split,
            Operation::Delete => self.delete,
        }
    }

    fn weight_mut(&mut self, op: Operation) -> &mut f64 {
        match op {
            Operation::Copy => &mut self.copy,
            Operation::Rephrase => &mut self.rephrase,
            Operation::Split => &mut self.split,
            Operation::Delete => &mut self.delete,
        }
    }

    fn validate(&self) -> Result<()> {
        let ws = Operation::ALL.map(|o| self.weight(o));
        if ws.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::Config("operation weights must be finite and nonnegative".into()));
        }
        let sum: f64 = ws.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("operation distribution sums to {sum}, not 1")));
        }
        Ok(())
    }

    /// Per-level distribution: delete/split mass is scaled by
    /// `1 + skew * (level - mid)` and copy/rephrase absorb the difference, so
    /// the average over a symmetric level set equals `self`.
    fn at_level(&self, level: u8, mid: f64, skew: f64) -> OpDistribution {
        let hard = self.split + self.delete;
        let easy = self.copy + self.rephrase;
        if hard <= 0.0 || easy <= 0.0 {
            return *self;
        }
        let k = level as f64 - mid;
        let s = skew.min(easy / hard).min(1.0 / k.abs().max(1.0));
        let up = 1.0 + s * k;
        let down = 1.0 - s * k * hard / easy;
        OpDistribution {
            copy: self.copy * down,
            rephrase: self.rephrase * down,
            split: self.split * up,
            delete: self.delete * up,
        }
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> Operation {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for op in Operation::ALL {
            acc += self.weight(op);
            if u < acc {
                return op;
            }
        }
        // Rounding slack: fall back to the last op with positive weight.
        *Operation::ALL.iter().rev().find(|o| self.weight(**o) > 0.0).unwrap_or(&Operation::Copy)
    }
}

/// How operations are assigned to complex sentences.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum OpMode {
    /// Independent draws from a distribution (skewed by target level);
    /// each sentence is then built to be compatible with its operation.
    Sampled(OpDistribution),
    /// Operations are a deterministic function of sentence features,
    /// the previous sentence and the target level:
    /// 1. level >= 3 and the sentence carries [`DELETE_MARKER`] → delete;
    /// 2. level >= 3 and the previous sentence carries [`CONTEXT_CUE`] and
    ///    was not deleted → delete;
    /// 3. level >= 3 and two clauses → split;
    /// 4. any lexicon word → rephrase;
    /// 5. otherwise copy.
    Rules { marker_prob: f64, cue_prob: f64, two_clause_prob: f64, complex_word_prob: f64 },
}

impl OpMode {
    pub fn default_rules() -> Self {
        OpMode::Rules { marker_prob: 0.12, cue_prob: 0.15, two_clause_prob: 0.3, complex_word_prob: 0.2 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GeneratorSpec {
    pub num_docs: usize,
    /// Inclusive bounds on complex sentences per document.
    pub sentences_per_doc: (usize, usize),
    /// Inclusive bounds on sentences per paragraph.
    pub paragraph_len: (usize, usize),
    pub vocab_size: usize,
    pub ops: OpMode,
    /// Target reading levels, drawn uniformly per document.
    pub target_levels: Vec<u8>,
    /// Strength of the level skew on split/delete probabilities.
    pub level_skew: f64,
    pub seed: u64,
}

impl Default for GeneratorSpec {
    fn default() -> Self {
        GeneratorSpec {
            num_docs: 100,
            sentences_per_doc: (4, 10),
            paragraph_len: (1, 4),
            vocab_size: Vocabulary::max_size(),
            ops: OpMode::Sampled(OpDistribution { copy: 0.35, rephrase: 0.35, split: 0.15, delete: 0.15 }),
            target_levels: vec![2, 3, 4],
            level_skew: 0.5,
            seed: 13,
        }
    }
}

impl GeneratorSpec {
    fn validate(&self) -> Result<()> {
        if let OpMode::Sampled(d) = &self.ops {
            d.validate()?;
        }
        if let OpMode::Rules { marker_prob, cue_prob, two_clause_prob, complex_word_prob } = self.ops {
            for p in [marker_prob, cue_prob, two_clause_prob, complex_word_prob] {
                if !(0.0..=1.0).contains(&p) {
                    return Err(Error::Config(format!("rule probability {p} outside [0, 1]")));
                }
            }
        }
        let (lo, hi) = self.sentences_per_doc;
        if lo == 0 || lo > hi {
            return Err(Error::Config(format!("invalid sentences_per_doc range {lo}..={hi}")));
        }
        let (plo, phi) = self.paragraph_len;
        if plo == 0 || plo > phi {
            return Err(Error::Config(format!("invalid paragraph_len range {plo}..={phi}")));
        }
        if self.target_levels.is_empty() || self.target_levels.iter().any(|l| *l == 0 || *l > 4) {
            return Err(Error::Config("target levels must be a nonempty subset of 1..=4".into()));
        }
        Ok(())
    }
}

/// Surface features of one generated complex sentence.
struct Features {
    marker: bool,
    cue: bool,
    two_clause: bool,
    complex_words: bool,
}

struct SentenceBuilder<'v> {
    vocab: &'v Vocabulary,
    complex_word_prob: f64,
}

impl SentenceBuilder<'_> {
    fn noun(&self, rng: &mut ChaCha8Rng, out: &mut Vec<&'static str>) -> bool {
        if rng.random::<f64>() < 0.4 {
            out.push(self.word(rng, &self.vocab.adjectives, &self.vocab.complex_adjectives));
        }
        let before = out.len();
        out.push(self.word(rng, &self.vocab.nouns, &self.vocab.complex_nouns));
        before < out.len()
    }

    fn word(
        &self,
        rng: &mut ChaCha8Rng,
        simple: &[&'static str],
        complex: &[(&'static str, &'static str)],
    ) -> &'static str {
        if rng.random::<f64>() < self.complex_word_prob {
            complex[rng.random_range(0..complex.len())].0
        } else {
            simple[rng.random_range(0..simple.len())]
        }
    }

    fn clause(&self, rng: &mut ChaCha8Rng, out: &mut Vec<&'static str>) {
        out.push(DETERMINERS[rng.random_range(0..DETERMINERS.len())]);
        self.noun(rng, out);
        out.push(self.word(rng, &self.vocab.verbs, &self.vocab.complex_verbs));
        out.push(DETERMINERS[rng.random_range(0..DETERMINERS.len())]);
        self.noun(rng, out);
        if rng.random::<f64>() < 0.3 {
            out.push(PREPOSITIONS[rng.random_range(0..PREPOSITIONS.len())]);
            out.push("the");
            out.push(self.vocab.nouns[rng.random_range(0..self.vocab.nouns.len())]);
        }
    }

    /// Builds a sentence; `require_complex` forces at least one lexicon word.
    fn sentence(&self, rng: &mut ChaCha8Rng, openers: &[&'static str], two_clause: bool, require_complex: bool) -> String {
        let mut words: Vec<&'static str> = openers.to_vec();
        self.clause(rng, &mut words);
        if two_clause {
            words.push(CONJUNCTION);
            self.clause(rng, &mut words);
        }
        if require_complex && !words.iter().any(|w| Vocabulary::simplify_word(w).is_some()) {
            // Swap a random verb slot for a lexicon verb.
            let verb_slots: Vec<usize> =
                (0..words.len()).filter(|&i| self.vocab.verbs.contains(&words[i])).collect();
            let slot = verb_slots[rng.random_range(0..verb_slots.len())];
            words[slot] = self.vocab.complex_verbs[rng.random_range(0..self.vocab.complex_verbs.len())].0;
        }
        format!("{}.", words.join(" "))
    }
}

fn words_of(sentence: &str) -> Vec<&str> {
    sentence.trim_end_matches('.').split_whitespace().collect()
}

fn features(sentence: &str) -> Features {
    let w = words_of(sentence);
    Features {
        marker: w.contains(&DELETE_MARKER),
        cue: w.contains(&CONTEXT_CUE),
        two_clause: w.contains(&CONJUNCTION),
        complex_words: w.iter().any(|x| Vocabulary::simplify_word(x).is_some()),
    }
}

/// Applies `op` to a synthetic sentence with the rule oracles.
pub fn apply_operation(sentence: &str, op: Operation) -> Result<Vec<String>> {
    match op {
        Operation::Copy => Ok(vec![sentence.to_string()]),
        Operation::Delete => Ok(Vec::new()),
        Operation::Rephrase => {
            let w: Vec<&str> = words_of(sentence)
                .into_iter()
                .map(|x| Vocabulary::simplify_word(x).unwrap_or(x))
                .collect();
            Ok(vec![format!("{}.", w.join(" "))])
        }
        Operation::Split => {
            let w = words_of(sentence);
            let cut = w.iter().position(|x| *x == CONJUNCTION).ok_or_else(|| {
                Error::Corpus(format!("cannot split {sentence:?}: no conjunction"))
            })?;
            Ok(vec![format!("{}.", w[..cut].join(" ")), format!("{}.", w[cut + 1..].join(" "))])
        }
    }
}

/// Rule-oracle realizer for synthetic sentences.
#[derive(Clone, Copy, Debug, Default)]
pub struct RuleSimplifier;

impl RuleSimplifier {
    /// Simplified text for `sentence` under `op` (sentences joined by a
    /// space). A split with no conjunction to cut at leaves the sentence
    /// unchanged.
    pub fn simplify(&self, sentence: &str, op: Operation) -> Result<String> {
        match apply_operation(sentence, op) {
            Ok(parts) => Ok(parts.join(" ")),
            Err(_) if op == Operation::Split => Ok(sentence.to_string()),
            Err(e) => Err(e),
        }
    }
}

fn rule_op(f: &Features, level: u8, prev: Option<(&Features, Operation)>) -> Operation {
    let cued = matches!(prev, Some((p, op)) if p.cue && op != Operation::Delete);
    if level >= 3 && (f.marker || cued) {
        Operation::Delete
    } else if level >= 3 && f.two_clause {
        Operation::Split
    } else if f.complex_words {
        Operation::Rephrase
    } else {
        Operation::Copy
    }
}

fn build_pair(spec: &GeneratorSpec, vocab: &Vocabulary, article: usize, rng: &mut ChaCha8Rng) -> Result<AlignedPair> {
    let level = spec.target_levels[rng.random_range(0..spec.target_levels.len())];
    let n = rng.random_range(spec.sentences_per_doc.0..=spec.sentences_per_doc.1);
    let mut para_index = Vec::with_capacity(n);
    let mut para = 0;
    while para_index.len() < n {
        let len = rng.random_range(spec.paragraph_len.0..=spec.paragraph_len.1);
        for _ in 0..len.min(n - para_index.len()) {
            para_index.push(para);
        }
        para += 1;
    }

    let mut complex = Vec::with_capacity(n);
    let mut ops = Vec::with_capacity(n);
    match spec.ops {
        OpMode::Sampled(dist) => {
            let mid = {
                let (lo, hi) = spec.target_levels.iter().fold((u8::MAX, 0), |(a, b), l| (a.min(*l), b.max(*l)));
                (lo as f64 + hi as f64) / 2.0
            };
            let dist = dist.at_level(level, mid, spec.level_skew);
            let builder = SentenceBuilder { vocab, complex_word_prob: 0.2 };
            for _ in 0..n {
                let op = dist.sample(rng);
                let two_clause = match op {
                    Operation::Split => true,
                    _ => rng.random::<f64>() < 0.2,
                };
                complex.push(builder.sentence(rng, &[], two_clause, op == Operation::Rephrase));
                ops.push(op);
            }
        }
        OpMode::Rules { marker_prob, cue_prob, two_clause_prob, complex_word_prob } => {
            let builder = SentenceBuilder { vocab, complex_word_prob };
            let mut prev: Option<(Features, Operation)> = None;
            for _ in 0..n {
                let mut openers = Vec::new();
                if rng.random::<f64>() < marker_prob {
                    openers.push(DELETE_MARKER);
                }
                if rng.random::<f64>() < cue_prob {
                    openers.push(CONTEXT_CUE);
                }
                let two_clause = rng.random::<f64>() < two_clause_prob;
                let s = builder.sentence(rng, &openers, two_clause, false);
                let f = features(&s);
                let op = rule_op(&f, level, prev.as_ref().map(|(pf, po)| (pf, *po)));
                complex.push(s);
                ops.push(op);
                prev = Some((f, op));
            }
        }
    }

    let mut simple = Vec::new();
    let mut alignment = Vec::with_capacity(n);
    for (i, (s, op)) in complex.iter().zip(&ops).enumerate() {
        let outs = apply_operation(s, *op)?;
        let start = simple.len();
        simple.extend(outs);
        alignment.push((i, (start..simple.len()).collect::<Vec<_>>()));
    }
    let simple_para = simple_para_index(&para_index, &alignment, simple.len());
    let doc_id = format!("a{article:05}.{level}");
    Ok(AlignedPair {
        complex: Document { doc_id: doc_id.clone(), reading_level: 0, sentences: complex, para_index },
        simple: Document { doc_id, reading_level: level, sentences: simple, para_index: simple_para },
        sent_alignment: alignment,
        ops: Plan::new(ops),
    })
}

/// Generates `spec.num_docs` aligned pairs, one article each.
pub fn generate_synthetic(spec: &GeneratorSpec) -> Result<AlignedCorpus> {
    spec.validate()?;
    let vocab = Vocabulary::with_size(spec.vocab_size)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let pairs = (0..spec.num_docs)
        .map(|k| build_pair(spec, &vocab, k, &mut rng))
        .collect::<Result<Vec<_>>>()?;
    Ok(AlignedCorpus { pairs, split_tag: SplitTag::Train })
}

/// Generates a corpus and assigns whole articles to train/validation/test
/// in 92.5% / 2.5% / 5% proportions.
pub fn generate_splits(spec: &GeneratorSpec) -> Result<CorpusSplits> {
    let all = generate_synthetic(spec)?;
    let n = all.pairs.len();
    let n_test = ((n as f64) * 0.05).round() as usize;
    let n_valid = ((n as f64) * 0.025).round() as usize;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(spec.seed ^ 0x5EED_5B17));
    let mut tag = vec![SplitTag::Train; n];
    for &k in &order[..n_test] {
        tag[k] = SplitTag::Test;
    }
    for &k in &order[n_test..n_test + n_valid] {
        tag[k] = SplitTag::Validation;
    }
    let pick = |t: SplitTag| AlignedCorpus {
        pairs: all.pairs.iter().zip(&tag).filter(|(_, x)| **x == t).map(|(p, _)| p.clone()).collect(),
        split_tag: t,
    };
    Ok(CorpusSplits { train: pick(SplitTag::Train), valid: pick(SplitTag::Validation), test: pick(SplitTag::Test) })
}
