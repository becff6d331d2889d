//! Greedy and beam-search decoding on top of the incremental decoder.

use std::cmp::Ordering;

use crate::context::ContextWindow;
use crate::corpus::Operation;
use crate::error::{Error, Result};
use crate::seq2seq::model::{DecoderCache, EncoderMemory, Seq2SeqModel};
use crate::seq2seq::tokenizer::{BOS, EOS};
use crate::tensor::{log_softmax, Tensor};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GenConfig {
    pub beam_size: usize,
    /// Longest decoder sequence, BOS and EOS included.
    pub max_len: usize,
    /// Rank finished hypotheses by log-probability divided by their
    /// token count (EOS included).
    pub length_norm: bool,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig { beam_size: 5, max_len: 1024, length_norm: true }
    }
}

impl GenConfig {
    pub fn greedy() -> Self {
        GenConfig { beam_size: 1, ..GenConfig::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.beam_size == 0 {
            return Err(Error::Config("beam_size must be at least 1".into()));
        }
        if self.max_len < 2 {
            return Err(Error::Config("generation max_len must be at least 2".into()));
        }
        Ok(())
    }
}

/// One generation request.
#[derive(Clone, Debug, PartialEq)]
pub struct GenRequest {
    /// Encoded source, control tokens included.
    pub src: Vec<usize>,
    pub context: Option<ContextWindow>,
}

fn masked_log_probs(model: &Seq2SeqModel, logits: &[f64]) -> Vec<f64> {
    let masked: Vec<f64> = logits
        .iter()
        .enumerate()
        .map(|(id, &l)| if model.can_emit(id) { l } else { f64::NEG_INFINITY })
        .collect();
    log_softmax(&masked)
}

/// Highest-scoring id; ties go to the lower id.
fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

fn step_limit(model: &Seq2SeqModel, gen: &GenConfig) -> usize {
    gen.max_len.min(model.config().max_len)
}

/// Greedy decoding of several requests at once. Each request is decoded
/// independently; the batch only shares the matrix products.
pub fn greedy_batch(model: &Seq2SeqModel, requests: &[GenRequest], gen: &GenConfig) -> Result<Vec<Vec<usize>>> {
    gen.validate()?;
    let limit = step_limit(model, gen);
    let memories: Vec<EncoderMemory> =
        requests.iter().map(|r| model.encode_memory(&r.src, r.context.as_ref())).collect::<Result<_>>()?;
    let mut caches: Vec<DecoderCache> = requests.iter().map(|_| model.new_cache()).collect();
    let mut outputs: Vec<Vec<usize>> = vec![Vec::new(); requests.len()];
    let mut last: Vec<usize> = vec![BOS; requests.len()];
    let mut active: Vec<usize> = (0..requests.len()).collect();
    // Decoder length after feeding the next token: 1 (BOS) + generated so far.
    let mut fed = 1;
    while !active.is_empty() && fed < limit {
        let logits = {
            let mut rows: Vec<(&EncoderMemory, &mut DecoderCache, usize)> = Vec::with_capacity(active.len());
            let mut cache_refs: Vec<Option<&mut DecoderCache>> = caches.iter_mut().map(Some).collect();
            for &k in &active {
                rows.push((&memories[k], cache_refs[k].take().expect("each request once"), last[k]));
            }
            model.decode_step(&mut rows)?
        };
        let mut still = Vec::with_capacity(active.len());
        for (row, &k) in active.iter().enumerate() {
            let next = argmax(&masked_log_probs(model, logits.row(row)));
            if next == EOS {
                continue;
            }
            outputs[k].push(next);
            last[k] = next;
            still.push(k);
        }
        active = still;
        fed += 1;
    }
    Ok(outputs)
}

pub fn greedy(model: &Seq2SeqModel, request: &GenRequest, gen: &GenConfig) -> Result<Vec<usize>> {
    Ok(greedy_batch(model, std::slice::from_ref(request), gen)?.remove(0))
}

struct Hyp {
    tokens: Vec<usize>,
    logp: f64,
    cache: DecoderCache,
}

struct Finished {
    tokens: Vec<usize>,
    score: f64,
}

fn final_score(logp: f64, len: usize, gen: &GenConfig) -> f64 {
    if gen.length_norm {
        logp / len.max(1) as f64
    } else {
        logp
    }
}

/// Beam search. Expansions are ranked by cumulative log-probability with
/// ties going to the lower beam index, then the lower token id. Search ends
/// once `beam_size` hypotheses have emitted EOS or the length limit is hit.
pub fn beam_search(model: &Seq2SeqModel, request: &GenRequest, gen: &GenConfig) -> Result<Vec<usize>> {
    gen.validate()?;
    let k = gen.beam_size;
    let limit = step_limit(model, gen);
    let memory = model.encode_memory(&request.src, request.context.as_ref())?;
    let mut alive = vec![Hyp { tokens: Vec::new(), logp: 0.0, cache: model.new_cache() }];
    let mut finished: Vec<Finished> = Vec::new();
    let mut fed = 1;
    while !alive.is_empty() && finished.len() < k && fed < limit {
        let logits: Tensor = {
            let mut rows: Vec<(&EncoderMemory, &mut DecoderCache, usize)> = alive
                .iter_mut()
                .map(|h| {
                    let last = h.tokens.last().copied().unwrap_or(BOS);
                    (&memory, &mut h.cache, last)
                })
                .collect();
            model.decode_step(&mut rows)?
        };
        let mut cands: Vec<(f64, usize, usize)> = Vec::new();
        for (b, h) in alive.iter().enumerate() {
            let lp = masked_log_probs(model, logits.row(b));
            for (tok, &l) in lp.iter().enumerate() {
                if l.is_finite() {
                    cands.push((h.logp + l, b, tok));
                }
            }
        }
        cands.sort_by(|x, y| y.0.partial_cmp(&x.0).unwrap_or(Ordering::Equal).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2)));
        let mut next = Vec::with_capacity(k);
        for (logp, b, tok) in cands {
            if next.len() == k || finished.len() >= k {
                break;
            }
            if tok == EOS {
                let tokens = alive[b].tokens.clone();
                let score = final_score(logp, tokens.len() + 1, gen);
                finished.push(Finished { tokens, score });
            } else {
                let mut tokens = alive[b].tokens.clone();
                tokens.push(tok);
                next.push(Hyp { tokens, logp, cache: alive[b].cache.clone() });
            }
        }
        alive = next;
        fed += 1;
    }
    if finished.is_empty() {
        finished = alive
            .into_iter()
            .map(|h| {
                let score = final_score(h.logp, h.tokens.len(), gen);
                Finished { tokens: h.tokens, score }
            })
            .collect();
    }
    let mut best = 0;
    for (i, f) in finished.iter().enumerate() {
        if f.score > finished[best].score {
            best = i;
        }
    }
    Ok(finished.swap_remove(best).tokens)
}

/// Decodes each request with the configured beam size. Greedy requests are
/// stepped together.
pub fn generate_ids(model: &Seq2SeqModel, requests: &[GenRequest], gen: &GenConfig) -> Result<Vec<Vec<usize>>> {
    if gen.beam_size == 1 {
        greedy_batch(model, requests, gen)
    } else {
        requests.iter().map(|r| beam_search(model, r, gen)).collect()
    }
}

impl Seq2SeqModel {
    /// Encodes `src` with its control tokens and returns the detokenized
    /// best hypothesis.
    pub fn generate(
        &self,
        src: &str,
        level: Option<u8>,
        op: Option<Operation>,
        context: Option<&ContextWindow>,
        gen: &GenConfig,
    ) -> Result<String> {
        let ids = self.encode_source(src, level, &op.into_iter().collect::<Vec<_>>())?;
        let req = GenRequest { src: ids, context: context.cloned() };
        let out = generate_ids(self, std::slice::from_ref(&req), gen)?.remove(0);
        Ok(self.tokenizer().detokenize(&out))
    }

    /// Source ids for `text`; refuses empty text.
    pub fn encode_source(&self, text: &str, level: Option<u8>, ops: &[Operation]) -> Result<Vec<usize>> {
        if text.split_whitespace().next().is_none() {
            return Err(Error::Seq2Seq("empty source text".into()));
        }
        self.tokenizer().tokenize_with_ops(text, level, ops)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::uniform_tensor;
    use crate::seq2seq::{ModelConfig, Tokenizer};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn model(seed: u64) -> Seq2SeqModel {
        let tok = Tokenizer::new(["a", "b", "c", "d", "."], 64);
        let cfg = ModelConfig { d_model: 16, n_heads: 2, ffn_dim: 16, max_len: 24, dropout: 0.0, ..ModelConfig::default() };
        let mut m = Seq2SeqModel::new(cfg, tok, seed).unwrap();
        // Larger output weights give peaked, varied distributions.
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let i = m.params().lookup("out.w").unwrap();
        let (r, c) = m.params().tensor(i).shape();
        *m.params_mut().tensor_mut(i) = uniform_tensor(&mut rng, r, c, 2.0);
        m
    }

    fn request(m: &Seq2SeqModel, text: &str) -> GenRequest {
        GenRequest { src: m.encode_source(text, Some(2), &[]).unwrap(), context: None }
    }

    #[test]
    fn beam_one_equals_greedy() {
        for seed in 0..6 {
            let m = model(seed);
            let req = request(&m, "a b c.");
            let gen = GenConfig { beam_size: 1, max_len: 12, length_norm: true };
            assert_eq!(beam_search(&m, &req, &gen).unwrap(), greedy(&m, &req, &gen).unwrap());
        }
    }

    #[test]
    fn batched_greedy_equals_single() {
        let m = model(3);
        let reqs: Vec<GenRequest> = ["a b.", "c d c d.", "d."].iter().map(|t| request(&m, t)).collect();
        let gen = GenConfig { beam_size: 1, max_len: 10, length_norm: true };
        let batch = greedy_batch(&m, &reqs, &gen).unwrap();
        for (r, out) in reqs.iter().zip(&batch) {
            assert_eq!(&greedy(&m, r, &gen).unwrap(), out);
        }
    }

    #[test]
    fn decoding_is_deterministic_and_bounded() {
        let m = model(5);
        let req = request(&m, "a b c d.");
        let gen = GenConfig { beam_size: 5, max_len: 8, length_norm: true };
        let a = beam_search(&m, &req, &gen).unwrap();
        assert_eq!(a, beam_search(&m, &req, &gen).unwrap());
        assert!(a.len() <= 7);
        assert!(a.iter().all(|&t| m.can_emit(t) && t != EOS));
    }

    #[test]
    fn empty_source_is_rejected() {
        let m = model(1);
        assert!(m.generate("  ", None, None, None, &GenConfig::default()).is_err());
    }
}
