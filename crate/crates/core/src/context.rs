//! Document context windows: sentence vectors over a fixed radius around the
//! current sentence, with window-relative position and provenance
//! embeddings added. The left half can be filled from a [`DynamicStore`] of
//! already-simplified sentences.

use std::cell::RefCell;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::autograd::{Graph, NodeId};
use crate::corpus::{AlignedPair, CorpusRecord, Document};
use crate::error::{Error, Result};
use crate::params::{normal_tensor, Checkpoint, ParamSet};
use crate::seq2seq::Tokenizer;
use crate::tensor::Tensor;

pub const DEFAULT_RADIUS: usize = 13;
pub const DEFAULT_D_CTX: usize = 64;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ContextConfig {
    pub d_ctx: usize,
    /// Largest radius the offset table supports.
    pub radius: usize,
    /// Add the simplified/complex provenance embedding.
    pub use_flags: bool,
}

impl Default for ContextConfig {
    fn default() -> Self {
        ContextConfig { d_ctx: DEFAULT_D_CTX, radius: DEFAULT_RADIUS, use_flags: true }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Simplified,
    Complex,
}

impl Status {
    fn index(self) -> usize {
        match self {
            Status::Simplified => 0,
            Status::Complex => 1,
        }
    }
}

/// Sentence vectors for the window around sentence `center`.
#[derive(Clone, Debug, PartialEq)]
pub struct ContextWindow {
    pub center: usize,
    pub radius: usize,
    /// Document index minus `center`, strictly increasing.
    pub offsets: Vec<i64>,
    pub status: Vec<Status>,
    /// One row of width `d_ctx` per entry.
    pub vectors: Tensor,
}

impl ContextWindow {
    pub fn len(&self) -> usize {
        self.offsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.offsets.is_empty()
    }

    /// Row index of offset 0.
    pub fn center_row(&self) -> usize {
        self.offsets.iter().position(|o| *o == 0).expect("window contains its center")
    }

    /// Document indices covered by the window.
    pub fn indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.offsets.iter().map(move |o| (self.center as i64 + o) as usize)
    }
}

/// Per-document store of simplified-sentence vectors, indexed by complex
/// sentence index. Entries are write-once.
#[derive(Debug, Default)]
pub struct DynamicStore {
    entries: Vec<Option<Vec<f64>>>,
    trace: RefCell<Option<Vec<usize>>>,
}

impl DynamicStore {
    pub fn new(n: usize) -> Self {
        DynamicStore { entries: vec![None; n], trace: RefCell::new(None) }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn set(&mut self, i: usize, v: Vec<f64>) -> Result<()> {
        match self.entries.get_mut(i) {
            None => Err(Error::Context(format!("store index {i} out of range"))),
            Some(Some(_)) => Err(Error::Context(format!("store entry {i} already set"))),
            Some(slot) => {
                *slot = Some(v);
                Ok(())
            }
        }
    }

    pub fn is_set(&self, i: usize) -> bool {
        matches!(self.entries.get(i), Some(Some(_)))
    }

    /// Reads entry `i`, recording the access when tracing is enabled.
    pub fn get(&self, i: usize) -> Option<&[f64]> {
        let v = self.entries.get(i)?.as_deref();
        if v.is_some() {
            if let Some(log) = self.trace.borrow_mut().as_mut() {
                log.push(i);
            }
        }
        v
    }

    /// Starts recording the index of every successful read.
    pub fn enable_trace(&self) {
        *self.trace.borrow_mut() = Some(Vec::new());
    }

    pub fn take_trace(&self) -> Vec<usize> {
        self.trace.borrow_mut().as_mut().map(std::mem::take).unwrap_or_default()
    }
}

/// Where a window entry's sentence vector comes from, for in-graph encoding.
#[derive(Clone, Debug, PartialEq)]
pub enum EntrySource<'a> {
    Text(&'a str),
    /// A deleted (empty) simplified sentence.
    Empty,
}

/// Window entries ahead of vector lookup.
#[derive(Clone, Debug, PartialEq)]
pub struct WindowLayout {
    pub center: usize,
    pub radius: usize,
    pub offsets: Vec<i64>,
    pub status: Vec<Status>,
}

/// Document indices `max(0, i - r) ..= min(n - 1, i + r)` with entries at
/// indices below `store_limit` marked simplified when `simplified(k)`.
pub fn window_layout(n: usize, i: usize, r: usize, store_limit: usize, simplified: impl Fn(usize) -> bool) -> WindowLayout {
    let lo = i.saturating_sub(r);
    let hi = (i + r).min(n - 1);
    let mut offsets = Vec::with_capacity(hi - lo + 1);
    let mut status = Vec::with_capacity(hi - lo + 1);
    for k in lo..=hi {
        offsets.push(k as i64 - i as i64);
        let s = if k < i && k < store_limit && simplified(k) { Status::Simplified } else { Status::Complex };
        status.push(s);
    }
    WindowLayout { center: i, radius: r, offsets, status }
}

/// Mean-pooled token-embedding sentence encoder plus the window position
/// and provenance tables.
#[derive(Clone, Debug, PartialEq)]
pub struct ContextEncoder {
    config: ContextConfig,
    tokenizer: Tokenizer,
    params: ParamSet,
}

const P_TOKENS: usize = 0;
const P_EMPTY: usize = 1;
const P_OFFSET: usize = 2;
const P_FLAG: usize = 3;

pub const CONTEXT_PARAM_TAG: &str = "context";

impl ContextEncoder {
    pub fn new(config: ContextConfig, mut tokenizer: Tokenizer, seed: u64) -> Self {
        // Sentences are pooled, never length-limited.
        tokenizer.set_max_len(usize::MAX);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = config.d_ctx;
        let mut params = ParamSet::new(CONTEXT_PARAM_TAG);
        params.insert("token_embedding", normal_tensor(&mut rng, tokenizer.vocab_size(), d, 0.3));
        params.insert("empty_sentence", normal_tensor(&mut rng, 1, d, 0.3));
        params.insert("offset_embedding", normal_tensor(&mut rng, 2 * config.radius + 1, d, 0.1));
        params.insert("flag_embedding", normal_tensor(&mut rng, 2, d, 0.1));
        ContextEncoder { config, tokenizer, params }
    }

    pub fn config(&self) -> &ContextConfig {
        &self.config
    }

    pub fn d_ctx(&self) -> usize {
        self.config.d_ctx
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

    /// Zeroes the offset and provenance tables.
    pub fn zero_position_tables(&mut self) {
        for idx in [P_OFFSET, P_FLAG] {
            self.params.tensor_mut(idx).data.iter_mut().for_each(|v| *v = 0.0);
        }
    }

    fn body_ids(&self, text: &str) -> Result<Vec<usize>> {
        let ids = self.tokenizer.encode_body(text);
        if ids.is_empty() {
            return Err(Error::Context("cannot encode an empty sentence".into()));
        }
        Ok(ids)
    }

    /// Mean of the token embeddings of `text`.
    pub fn encode_sentence(&self, text: &str) -> Result<Vec<f64>> {
        let ids = self.body_ids(text)?;
        let table = self.params.tensor(P_TOKENS);
        let mut out = vec![0.0; self.config.d_ctx];
        for &id in &ids {
            for (o, v) in out.iter_mut().zip(table.row(id)) {
                *o += v;
            }
        }
        let n = ids.len() as f64;
        out.iter_mut().for_each(|o| *o /= n);
        Ok(out)
    }

    /// Store entry for a generated output: the learned empty-sentence
    /// vector when the output is empty.
    pub fn encode_output(&self, text: &str) -> Result<Vec<f64>> {
        if self.tokenizer.encode_body(text).is_empty() {
            Ok(self.empty_vector().to_vec())
        } else {
            self.encode_sentence(text)
        }
    }

    pub fn empty_vector(&self) -> &[f64] {
        &self.params.tensor(P_EMPTY).data
    }

    /// Offset row plus (when enabled) the provenance row.
    pub fn positional_embed(&self, offset: i64, status: Status) -> Result<Vec<f64>> {
        let r = self.config.radius as i64;
        if offset.abs() > r {
            return Err(Error::Context(format!("offset {offset} outside radius {r}")));
        }
        let mut v = self.params.tensor(P_OFFSET).row((offset + r) as usize).to_vec();
        if self.config.use_flags {
            for (o, f) in v.iter_mut().zip(self.params.tensor(P_FLAG).row(status.index())) {
                *o += f;
            }
        }
        Ok(v)
    }

    fn check(&self, doc: &Document, i: usize, r: usize) -> Result<()> {
        if i >= doc.len() {
            return Err(Error::Context(format!("sentence index {i} outside document of {} sentences", doc.len())));
        }
        if r > self.config.radius {
            return Err(Error::Context(format!("radius {r} exceeds encoder radius {}", self.config.radius)));
        }
        Ok(())
    }

    fn build(&self, doc: &Document, i: usize, r: usize, store: Option<&DynamicStore>, store_limit: usize) -> Result<ContextWindow> {
        self.check(doc, i, r)?;
        let layout = window_layout(doc.len(), i, r, store_limit, |k| store.is_some_and(|s| s.is_set(k)));
        let mut vectors = Tensor::zeros(layout.offsets.len(), self.config.d_ctx);
        for (row, (&off, &st)) in layout.offsets.iter().zip(&layout.status).enumerate() {
            let k = (i as i64 + off) as usize;
            let base = match st {
                Status::Simplified => store.and_then(|s| s.get(k)).expect("layout only marks set entries").to_vec(),
                Status::Complex => self.encode_sentence(&doc.sentences[k])?,
            };
            let pos = self.positional_embed(off, st)?;
            for ((o, b), p) in vectors.row_mut(row).iter_mut().zip(&base).zip(&pos) {
                *o = b + p;
            }
        }
        Ok(ContextWindow { center: i, radius: r, offsets: layout.offsets, status: layout.status, vectors })
    }

    /// Full dynamic context: every stored entry left of `i` replaces the
    /// complex sentence.
    pub fn build_window(&self, doc: &Document, i: usize, r: usize, store: Option<&DynamicStore>) -> Result<ContextWindow> {
        self.build(doc, i, r, store, i)
    }

    /// Paragraph-level dynamic context: stored entries are used only before
    /// the first sentence of the paragraph containing `i`.
    pub fn build_window_paragraph(
        &self,
        doc: &Document,
        i: usize,
        r: usize,
        store: Option<&DynamicStore>,
    ) -> Result<ContextWindow> {
        self.check(doc, i, r)?;
        self.build(doc, i, r, store, doc.paragraph_start(i))
    }

    /// Window vectors as a graph node, with gradients flowing into the
    /// encoder tables. `sources[k]` describes entry `k` of `layout`.
    pub fn window_in_graph<'g>(
        &'g self,
        g: &mut Graph<'g>,
        layout: &WindowLayout,
        sources: &[EntrySource<'_>],
    ) -> Result<NodeId> {
        assert_eq!(layout.offsets.len(), sources.len());
        let r = self.config.radius as i64;
        let table = g.param(&self.params, P_TOKENS);
        let offsets = g.param(&self.params, P_OFFSET);
        let flags = g.param(&self.params, P_FLAG);
        let mut rows = Vec::with_capacity(sources.len());
        for ((src, &off), &st) in sources.iter().zip(&layout.offsets).zip(&layout.status) {
            if off.abs() > r {
                return Err(Error::Context(format!("offset {off} outside radius {r}")));
            }
            let base = match src {
                EntrySource::Empty => g.param(&self.params, P_EMPTY),
                EntrySource::Text(t) => {
                    let ids = self.tokenizer.encode_body(t);
                    if ids.is_empty() {
                        g.param(&self.params, P_EMPTY)
                    } else {
                        let e = g.gather(table, &ids);
                        g.mean_rows(e)
                    }
                }
            };
            let pos = g.gather(offsets, &[(off + r) as usize]);
            let mut v = g.add(base, pos);
            if self.config.use_flags {
                let f = g.gather(flags, &[st.index()]);
                v = g.add(v, f);
            }
            rows.push(v);
        }
        Ok(g.concat_rows(&rows))
    }

    /// In-graph mean-pooled vector of a nonempty sentence.
    pub fn sentence_in_graph<'g>(&'g self, g: &mut Graph<'g>, text: &str) -> Result<NodeId> {
        let ids = self.body_ids(text)?;
        let table = g.param(&self.params, P_TOKENS);
        let e = g.gather(table, &ids);
        Ok(g.mean_rows(e))
    }

    pub fn write_checkpoint(&self, ck: &mut Checkpoint, prefix: &str) {
        ck.header.insert(format!("{prefix}d_ctx"), self.config.d_ctx.to_string());
        ck.header.insert(format!("{prefix}radius"), self.config.radius.to_string());
        ck.header.insert(format!("{prefix}use_flags"), self.config.use_flags.to_string());
        ck.add_set(prefix, &self.params);
    }

    pub fn read_checkpoint(ck: &Checkpoint, prefix: &str, tokenizer: Tokenizer) -> Result<Self> {
        let config = ContextConfig {
            d_ctx: ck.header_parse(&format!("{prefix}d_ctx"))?,
            radius: ck.header_parse(&format!("{prefix}radius"))?,
            use_flags: ck.header_parse(&format!("{prefix}use_flags"))?,
        };
        let mut enc = ContextEncoder::new(config, tokenizer, 0);
        ck.fill_set(prefix, &mut enc.params)?;
        Ok(enc)
    }
}

#[derive(Serialize)]
struct WindowDump {
    index: usize,
    offsets: Vec<i64>,
    status: Vec<Status>,
}

/// Debug dump: the pair's corpus record with an added `"window"` field.
pub fn window_dump(pair: &AlignedPair, windows: &[ContextWindow]) -> Result<String> {
    let mut value = serde_json::to_value(CorpusRecord::from_pair(pair))?;
    let dumps: Vec<WindowDump> = windows
        .iter()
        .map(|w| WindowDump { index: w.center, offsets: w.offsets.clone(), status: w.status.clone() })
        .collect();
    value
        .as_object_mut()
        .expect("records serialize as objects")
        .insert("window".into(), serde_json::to_value(dumps)?);
    Ok(serde_json::to_string(&value)?)
}
