//! Pre-norm transformer encoder-decoder with an optional context
//! cross-attention sublayer in every decoder block.
//!
//! Decoder block order: causal self-attention, encoder cross-attention,
//! context cross-attention (when enabled), feed-forward. Each sublayer is a
//! residual branch `x + f(norm(x))`. The context branch's output projection
//! starts at zero, so an untrained context-aware model computes exactly what
//! the same-seed plain model computes.

use std::path::Path;

use crate::autograd::{Graph, NodeId};
use crate::context::{ContextEncoder, ContextWindow};
use crate::error::{Error, Result};
use crate::layers::{self, Attn, Ffn, Init, Norm};
use crate::params::{Checkpoint, ParamSet};
use crate::seq2seq::config::{AttentionMode, ModelConfig};
use crate::seq2seq::tokenizer::{is_special, token_op, Tokenizer, EOS, PAD, UNK};
use crate::tensor::{self, AttnMask, Tensor};

pub const MODEL_PARAM_TAG: &str = "seq2seq";
const CONTEXT_PREFIX: &str = "context.";

#[derive(Clone, Debug, PartialEq)]
struct EncBlock {
    ln1: Norm,
    attn: Attn,
    ln2: Norm,
    ffn: Ffn,
}

#[derive(Clone, Debug, PartialEq)]
struct DecBlock {
    ln1: Norm,
    self_attn: Attn,
    ln2: Norm,
    cross: Attn,
    ctx: Option<(Option<Norm>, Attn)>,
    ln3: Norm,
    ffn: Ffn,
}

#[derive(Clone, Debug, PartialEq)]
struct Layout {
    tok_emb: usize,
    pos_emb: usize,
    enc: Vec<EncBlock>,
    enc_norm: Norm,
    dec: Vec<DecBlock>,
    dec_norm: Norm,
    out_w: usize,
    out_b: usize,
}

/// One training/evaluation example for [`Seq2SeqModel::forward`].
#[derive(Clone, Debug, PartialEq)]
pub struct Example {
    pub src: Vec<usize>,
    /// Full target `BOS ... EOS`; the decoder reads `tgt[..n-1]` and predicts `tgt[1..]`.
    pub tgt: Vec<usize>,
    pub context: Option<ContextWindow>,
}

/// Per-layer keys/values of the encoder output (and context window) used by
/// incremental decoding.
#[derive(Clone, Debug)]
pub struct EncoderMemory {
    cross_k: Vec<Tensor>,
    cross_v: Vec<Tensor>,
    ctx_k: Vec<Tensor>,
    ctx_v: Vec<Tensor>,
}

/// Self-attention keys/values of the tokens decoded so far.
#[derive(Clone, Debug)]
pub struct DecoderCache {
    self_k: Vec<Tensor>,
    self_v: Vec<Tensor>,
    len: usize,
}

impl DecoderCache {
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Seq2SeqModel {
    config: ModelConfig,
    tokenizer: Tokenizer,
    params: ParamSet,
    layout: Layout,
    context_encoder: Option<ContextEncoder>,
}

impl Seq2SeqModel {
    /// Initializes a model. Parameters shared with the plain architecture are
    /// drawn from one stream in a fixed order; context sublayers come from a
    /// separate stream so enabling them leaves the shared parameters unchanged.
    pub fn new(mut config: ModelConfig, tokenizer: Tokenizer, seed: u64) -> Result<Self> {
        config.vocab_size = tokenizer.vocab_size();
        config.validate()?;
        let mut tokenizer = tokenizer;
        tokenizer.set_max_len(config.max_len);
        let (d, v, f) = (config.d_model, config.vocab_size, config.ffn_dim);
        let mut params = ParamSet::new(MODEL_PARAM_TAG);
        let mut init = Init::new(&mut params, seed);
        let tok_emb = init.normal("tok_emb", v, d);
        let pos_emb = init.normal("pos_emb", config.max_len, d);
        let enc = (0..config.n_enc_layers)
            .map(|l| EncBlock {
                ln1: init.norm(&format!("enc.{l}.ln1"), d),
                attn: init.attn(&format!("enc.{l}.attn"), d, d, false),
                ln2: init.norm(&format!("enc.{l}.ln2"), d),
                ffn: init.ffn(&format!("enc.{l}.ffn"), d, f),
            })
            .collect();
        let enc_norm = init.norm("enc.norm", d);
        let mut dec: Vec<DecBlock> = (0..config.n_dec_layers)
            .map(|l| DecBlock {
                ln1: init.norm(&format!("dec.{l}.ln1"), d),
                self_attn: init.attn(&format!("dec.{l}.self"), d, d, false),
                ln2: init.norm(&format!("dec.{l}.ln2"), d),
                cross: init.attn(&format!("dec.{l}.cross"), d, d, false),
                ctx: None,
                ln3: init.norm(&format!("dec.{l}.ln3"), d),
                ffn: init.ffn(&format!("dec.{l}.ffn"), d, f),
            })
            .collect();
        let dec_norm = init.norm("dec.norm", d);
        let out_w = init.normal("out.w", d, v);
        let out_b = init.zeros("out.b", 1, v);
        if config.context_attention {
            init.reseed(seed ^ 0xC0_17E7);
            for (l, block) in dec.iter_mut().enumerate() {
                let norm = config.context_norm.then(|| init.norm(&format!("dec.{l}.ctx_ln"), d));
                let attn = init.attn(&format!("dec.{l}.ctx"), d, config.d_ctx, true);
                block.ctx = Some((norm, attn));
            }
        }
        let layout = Layout { tok_emb, pos_emb, enc, enc_norm, dec, dec_norm, out_w, out_b };
        Ok(Seq2SeqModel { config, tokenizer, params, layout, context_encoder: None })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn tokenizer(&self) -> &Tokenizer {
        &self.tokenizer
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    /// Dropout used by training graphs.
    pub fn set_dropout(&mut self, p: f64) -> Result<()> {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::Config(format!("dropout {p} outside [0, 1)")));
        }
        self.config.dropout = p;
        Ok(())
    }

    pub fn count_params(&self) -> usize {
        self.params.count()
    }

    /// The encoder that produces this model's context windows.
    pub fn context_encoder(&self) -> Option<&ContextEncoder> {
        self.context_encoder.as_ref()
    }

    pub fn set_context_encoder(&mut self, enc: ContextEncoder) -> Result<()> {
        if enc.d_ctx() != self.config.d_ctx {
            return Err(Error::Seq2Seq(format!(
                "context encoder width {} does not match model d_ctx {}",
                enc.d_ctx(),
                self.config.d_ctx
            )));
        }
        self.context_encoder = Some(enc);
        Ok(())
    }

    fn is_global(token: usize) -> bool {
        is_special(token) && !matches!(token, PAD | EOS | UNK)
    }

    /// Encoder self-attention mask for `src`.
    pub fn encoder_mask(&self, src: &[usize]) -> AttnMask {
        match self.config.attention_mode {
            AttentionMode::Full => AttnMask::Full,
            AttentionMode::Sliding => {
                let w = self.config.sliding_window;
                let n = src.len();
                let lists = (0..n)
                    .map(|p| {
                        if Self::is_global(src[p]) {
                            (0..n).collect()
                        } else {
                            (0..n).filter(|&q| p.abs_diff(q) <= w || Self::is_global(src[q])).collect()
                        }
                    })
                    .collect();
                AttnMask::Allowed(lists)
            }
        }
    }

    fn check_example(&self, src: &[usize], tgt_len: usize, context: Option<&ContextWindow>) -> Result<()> {
        if src.is_empty() {
            return Err(Error::Seq2Seq("empty source sequence".into()));
        }
        let max = src.len().max(tgt_len);
        if max > self.config.max_len {
            return Err(Error::Seq2Seq(format!("sequence of {max} tokens exceeds max_len {}", self.config.max_len)));
        }
        if let Some(&bad) = src.iter().find(|&&t| t >= self.config.vocab_size) {
            return Err(Error::Seq2Seq(format!("token id {bad} outside vocabulary")));
        }
        match (self.config.context_attention, context) {
            (true, None) => Err(Error::Seq2Seq("context-aware model requires a context window".into())),
            (false, Some(_)) => Err(Error::Seq2Seq("plain model given a context window".into())),
            (true, Some(w)) if w.vectors.cols != self.config.d_ctx => Err(Error::Seq2Seq(format!(
                "context vectors have width {}, expected {}",
                w.vectors.cols, self.config.d_ctx
            ))),
            (true, Some(w)) if w.is_empty() => Err(Error::Seq2Seq("empty context window".into())),
            _ => Ok(()),
        }
    }

    fn norm<'a>(&'a self, g: &mut Graph<'a>, x: NodeId, n: Norm) -> NodeId {
        layers::norm(g, &self.params, x, n)
    }

    fn linear<'a>(&'a self, g: &mut Graph<'a>, x: NodeId, w: usize, b: usize) -> NodeId {
        layers::linear(g, &self.params, x, w, b)
    }

    fn attention<'a>(&'a self, g: &mut Graph<'a>, x: NodeId, kv: NodeId, a: Attn, mask: &AttnMask) -> NodeId {
        layers::attention(g, &self.params, x, kv, a, self.config.n_heads, mask)
    }

    fn feed_forward<'a>(&'a self, g: &mut Graph<'a>, x: NodeId, f: Ffn) -> NodeId {
        layers::feed_forward(g, &self.params, x, f)
    }

    fn residual<'a>(&'a self, g: &mut Graph<'a>, x: NodeId, branch: NodeId) -> NodeId {
        let b = g.dropout(branch, self.config.dropout);
        g.add(x, b)
    }

    fn embed<'a>(&'a self, g: &mut Graph<'a>, ids: &[usize]) -> NodeId {
        let tok = g.param(&self.params, self.layout.tok_emb);
        let pos = g.param(&self.params, self.layout.pos_emb);
        let t = g.gather(tok, ids);
        let positions: Vec<usize> = (0..ids.len()).collect();
        let p = g.gather(pos, &positions);
        let x = g.add(t, p);
        g.dropout(x, self.config.dropout)
    }

    /// Encoder output rows for `src`.
    pub fn encode_graph<'a>(&'a self, g: &mut Graph<'a>, src: &[usize]) -> NodeId {
        let mask = self.encoder_mask(src);
        let mut x = self.embed(g, src);
        for b in &self.layout.enc {
            let h = self.norm(g, x, b.ln1);
            let a = self.attention(g, h, h, b.attn, &mask);
            x = self.residual(g, x, a);
            let h = self.norm(g, x, b.ln2);
            let f = self.feed_forward(g, h, b.ffn);
            x = self.residual(g, x, f);
        }
        self.norm(g, x, self.layout.enc_norm)
    }

    /// Decoder logits for teacher-forced inputs `tgt_in`.
    pub fn decode_graph<'a>(&'a self, g: &mut Graph<'a>, tgt_in: &[usize], memory: NodeId, context: Option<NodeId>) -> NodeId {
        let mut y = self.embed(g, tgt_in);
        for b in &self.layout.dec {
            let h = self.norm(g, y, b.ln1);
            let a = self.attention(g, h, h, b.self_attn, &AttnMask::Causal);
            y = self.residual(g, y, a);
            let h = self.norm(g, y, b.ln2);
            let a = self.attention(g, h, memory, b.cross, &AttnMask::Full);
            y = self.residual(g, y, a);
            if let (Some((norm, attn)), Some(ctx)) = (b.ctx, context) {
                let h = match norm {
                    Some(n) => self.norm(g, y, n),
                    None => self.norm(g, y, b.ln2),
                };
                let a = self.attention(g, h, ctx, attn, &AttnMask::Full);
                y = self.residual(g, y, a);
            }
            let h = self.norm(g, y, b.ln3);
            let f = self.feed_forward(g, h, b.ffn);
            y = self.residual(g, y, f);
        }
        let y = self.norm(g, y, self.layout.dec_norm);
        self.linear(g, y, self.layout.out_w, self.layout.out_b)
    }

    /// Builds the graph for one example and returns its logits node
    /// (`(tgt.len() - 1) x vocab`).
    pub fn logits_graph<'a>(&'a self, g: &mut Graph<'a>, ex: &'a Example) -> Result<NodeId> {
        if ex.tgt.len() < 2 {
            return Err(Error::Seq2Seq("target needs at least BOS and EOS".into()));
        }
        self.check_example(&ex.src, ex.tgt.len(), ex.context.as_ref())?;
        let memory = self.encode_graph(g, &ex.src);
        let ctx = ex.context.as_ref().map(|w| g.constant_ref(&w.vectors));
        Ok(self.decode_graph(g, &ex.tgt[..ex.tgt.len() - 1], memory, ctx))
    }

    /// Summed token cross-entropy of one example, and its token count.
    pub fn loss_graph<'a>(&'a self, g: &mut Graph<'a>, ex: &'a Example) -> Result<(NodeId, usize)> {
        let logits = self.logits_graph(g, ex)?;
        let targets = &ex.tgt[1..];
        let weights = vec![1.0; targets.len()];
        Ok((g.cross_entropy_sum(logits, targets, &weights), targets.len()))
    }

    /// Inference-mode logits for a batch of examples.
    pub fn forward(&self, batch: &[Example]) -> Result<Vec<Tensor>> {
        batch
            .iter()
            .map(|ex| {
                let mut g = Graph::new();
                let node = self.logits_graph(&mut g, ex)?;
                Ok(g.value(node).clone())
            })
            .collect()
    }

    fn lin(&self, x: &Tensor, w: usize, b: usize) -> Tensor {
        tensor::add_row_bias(&tensor::matmul(x, self.params.tensor(w)), self.params.tensor(b))
    }

    fn ln(&self, x: &Tensor, n: Norm) -> Tensor {
        tensor::layer_norm(x, self.params.tensor(n.gamma), self.params.tensor(n.beta)).0
    }

    /// Runs the encoder and precomputes per-layer cross-attention keys and
    /// values for incremental decoding.
    pub fn encode_memory(&self, src: &[usize], context: Option<&ContextWindow>) -> Result<EncoderMemory> {
        self.check_example(src, 0, context)?;
        let mut g = Graph::new();
        let node = self.encode_graph(&mut g, src);
        let enc = g.value(node);
        let mut mem = EncoderMemory { cross_k: Vec::new(), cross_v: Vec::new(), ctx_k: Vec::new(), ctx_v: Vec::new() };
        for b in &self.layout.dec {
            mem.cross_k.push(self.lin(enc, b.cross.wk, b.cross.bk));
            mem.cross_v.push(self.lin(enc, b.cross.wv, b.cross.bv));
            if let (Some((_, a)), Some(w)) = (b.ctx, context) {
                mem.ctx_k.push(self.lin(&w.vectors, a.wk, a.bk));
                mem.ctx_v.push(self.lin(&w.vectors, a.wv, a.bv));
            }
        }
        Ok(mem)
    }

    pub fn new_cache(&self) -> DecoderCache {
        let n = self.layout.dec.len();
        DecoderCache { self_k: vec![Tensor::zeros(0, 0); n], self_v: vec![Tensor::zeros(0, 0); n], len: 0 }
    }

    /// Feeds one token per row and returns next-token logits (one row per
    /// input). Every row is computed independently of the others.
    pub fn decode_step(&self, rows: &mut [(&EncoderMemory, &mut DecoderCache, usize)]) -> Result<Tensor> {
        let d = self.config.d_model;
        let heads = self.config.n_heads;
        let mut x = Tensor::zeros(rows.len(), d);
        for (r, (_, cache, token)) in rows.iter().enumerate() {
            if cache.len >= self.config.max_len {
                return Err(Error::Seq2Seq(format!("decoding past max_len {}", self.config.max_len)));
            }
            let t = self.params.tensor(self.layout.tok_emb).row(*token);
            let p = self.params.tensor(self.layout.pos_emb).row(cache.len);
            for ((o, a), b) in x.row_mut(r).iter_mut().zip(t).zip(p) {
                *o = a + b;
            }
        }
        let attend = |q: &Tensor, k: &Tensor, v: &Tensor, r: usize| {
            let qi = Tensor::row_vector(q.row(r).to_vec());
            tensor::multi_head_attention(&qi, k, v, heads, &AttnMask::Full).0
        };
        for (l, b) in self.layout.dec.iter().enumerate() {
            let h = self.ln(&x, b.ln1);
            let q = self.lin(&h, b.self_attn.wq, b.self_attn.bq);
            let k = self.lin(&h, b.self_attn.wk, b.self_attn.bk);
            let v = self.lin(&h, b.self_attn.wv, b.self_attn.bv);
            let mut att = Tensor::zeros(0, d);
            for (r, (_, cache, _)) in rows.iter_mut().enumerate() {
                cache.self_k[l].push_rows(&Tensor::row_vector(k.row(r).to_vec()));
                cache.self_v[l].push_rows(&Tensor::row_vector(v.row(r).to_vec()));
                att.push_rows(&attend(&q, &cache.self_k[l], &cache.self_v[l], r));
            }
            x.add_assign(&self.lin(&att, b.self_attn.wo, b.self_attn.bo));

            let h = self.ln(&x, b.ln2);
            let q = self.lin(&h, b.cross.wq, b.cross.bq);
            let mut att = Tensor::zeros(0, d);
            for (r, (mem, _, _)) in rows.iter().enumerate() {
                att.push_rows(&attend(&q, &mem.cross_k[l], &mem.cross_v[l], r));
            }
            x.add_assign(&self.lin(&att, b.cross.wo, b.cross.bo));

            if let Some((norm, a)) = b.ctx {
                let h = self.ln(&x, norm.unwrap_or(b.ln2));
                let q = self.lin(&h, a.wq, a.bq);
                let mut att = Tensor::zeros(0, d);
                for (r, (mem, _, _)) in rows.iter().enumerate() {
                    if mem.ctx_k.len() != self.layout.dec.len() {
                        return Err(Error::Seq2Seq("context-aware model requires a context window".into()));
                    }
                    att.push_rows(&attend(&q, &mem.ctx_k[l], &mem.ctx_v[l], r));
                }
                x.add_assign(&self.lin(&att, a.wo, a.bo));
            }

            let h = self.ln(&x, b.ln3);
            let mut f = self.lin(&h, b.ffn.w1, b.ffn.b1);
            f.data.iter_mut().for_each(|e| *e = tensor::gelu(*e));
            x.add_assign(&self.lin(&f, b.ffn.w2, b.ffn.b2));
        }
        for (_, cache, _) in rows.iter_mut() {
            cache.len += 1;
        }
        let y = self.ln(&x, self.layout.dec_norm);
        Ok(self.lin(&y, self.layout.out_w, self.layout.out_b))
    }

    /// Ids the decoder may emit: words, operation tokens and EOS.
    pub fn can_emit(&self, id: usize) -> bool {
        id < self.config.vocab_size && (id == EOS || token_op(id).is_some() || !is_special(id))
    }

    pub fn checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint { header: self.config.to_header(), ..Default::default() };
        ck.header.insert("kind".into(), "seq2seq".into());
        ck.header.insert("vocab".into(), self.tokenizer.vocab_line());
        ck.add_set("", &self.params);
        if let Some(enc) = &self.context_encoder {
            enc.write_checkpoint(&mut ck, CONTEXT_PREFIX);
        }
        ck
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        if ck.header_value("kind")? != "seq2seq" {
            return Err(Error::Checkpoint("not a seq2seq checkpoint".into()));
        }
        let config = ModelConfig::from_header(&ck.header)?;
        let tokenizer = Tokenizer::from_vocab_line(ck.header_value("vocab")?, config.max_len);
        if tokenizer.vocab_size() != config.vocab_size {
            return Err(Error::Checkpoint("vocabulary does not match vocab_size".into()));
        }
        let mut model = Seq2SeqModel::new(config, tokenizer.clone(), 0)?;
        let own: std::collections::BTreeMap<String, Tensor> = ck
            .tensors
            .iter()
            .filter(|(k, _)| !k.starts_with(CONTEXT_PREFIX))
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect();
        model.params.assign_from(&own)?;
        if ck.header.contains_key(&format!("{CONTEXT_PREFIX}d_ctx")) {
            model.context_encoder = Some(ContextEncoder::read_checkpoint(ck, CONTEXT_PREFIX, tokenizer)?);
        }
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.checkpoint().save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_checkpoint(&Checkpoint::load(path)?)
    }
}
