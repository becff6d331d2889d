//! Sentence-operation planner: classifies each complex sentence as copy,
//! rephrase, split or delete from its context window, the sentence itself,
//! and the target reading level.

use std::io::{BufRead, Write};
use std::path::Path;

use crate::autograd::{Graph, NodeId};
use crate::context::{window_layout, ContextConfig, ContextEncoder, ContextWindow, DynamicStore, EntrySource, WindowLayout};
use crate::corpus::{AlignedPair, Document, Operation, Plan, RuleSimplifier, NUM_LEVELS};
use crate::error::{Error, Result};
use crate::layers::{self, Attn, Ffn, Init, Norm};
use crate::params::{Checkpoint, ParamSet};
use crate::seq2seq::{GenConfig, Seq2SeqModel, Tokenizer};
use crate::tensor::{softmax_in_place, AttnMask};

pub const PLANNER_PARAM_TAG: &str = "planner";
const CONTEXT_PREFIX: &str = "context.";

#[derive(Clone, Debug, PartialEq)]
pub struct PlannerConfig {
    pub context: ContextConfig,
    pub n_layers: usize,
    pub n_heads: usize,
    pub ffn_dim: usize,
    /// Width of the classifier's hidden layer.
    pub hidden: usize,
    pub dropout: f64,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        PlannerConfig { context: ContextConfig::default(), n_layers: 2, n_heads: 4, ffn_dim: 128, hidden: 64, dropout: 0.1 }
    }
}

impl PlannerConfig {
    pub fn validate(&self) -> Result<()> {
        let d = self.context.d_ctx;
        if d == 0 || self.n_heads == 0 || !d.is_multiple_of(self.n_heads) {
            return Err(Error::Config(format!("planner width {d} is not divisible by {} heads", self.n_heads)));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PlanMode {
    /// Left context comes from already-realized outputs.
    Dynamic,
    /// Every window entry is the complex sentence.
    Static,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PlanPrediction {
    pub index: usize,
    pub op: Operation,
    /// Probabilities in the order copy, rephrase, split, delete.
    pub probs: [f64; 4],
}

/// Most probable operation; ties go to the earlier operation in
/// copy, rephrase, split, delete order.
pub fn argmax_op(scores: &[f64; 4]) -> Operation {
    let mut best = 0;
    for k in 1..4 {
        if scores[k] > scores[best] {
            best = k;
        }
    }
    Operation::ALL[best]
}

/// Produces the simplified text of sentence `i` under `op`, feeding the
/// planner's dynamic context.
pub trait Realizer {
    fn realize(&self, doc: &Document, i: usize, level: u8, op: Operation) -> Result<String>;
}

impl Realizer for RuleSimplifier {
    fn realize(&self, doc: &Document, i: usize, _level: u8, op: Operation) -> Result<String> {
        self.simplify(&doc.sentences[i], op)
    }
}

/// A plan-conditioned sentence simplifier used as a realizer. Deletes are
/// not generated.
pub struct ModelRealizer<'m> {
    pub model: &'m Seq2SeqModel,
    pub gen: GenConfig,
}

impl Realizer for ModelRealizer<'_> {
    fn realize(&self, doc: &Document, i: usize, level: u8, op: Operation) -> Result<String> {
        if op == Operation::Delete {
            return Ok(String::new());
        }
        if self.model.config().context_attention {
            return Err(Error::Planner("context-aware models cannot realize plans sentence by sentence".into()));
        }
        self.model.generate(&doc.sentences[i], Some(level), Some(op), None, &self.gen)
    }
}

#[derive(Clone, Debug, PartialEq)]
struct Block {
    ln1: Norm,
    attn: Attn,
    ln2: Norm,
    ffn: Ffn,
}

#[derive(Clone, Debug, PartialEq)]
struct Layout {
    blocks: Vec<Block>,
    final_norm: Norm,
    token_w: usize,
    token_b: usize,
    level_emb: usize,
    head_w1: usize,
    head_b1: usize,
    head_w2: usize,
    head_b2: usize,
}

/// One supervised planner example. `sources[k]` is the text of window entry
/// `k` (`None` for a deleted simplified sentence).
#[derive(Clone, Debug, PartialEq)]
pub struct PlannerExample {
    pub layout: WindowLayout,
    pub sources: Vec<Option<String>>,
    pub sentence: String,
    pub level: u8,
    pub label: Operation,
}

impl PlannerExample {
    /// Examples for every sentence of `pair`. Windows follow `mode`, with
    /// reference simplifications standing in for realized outputs.
    pub fn from_pair(pair: &AlignedPair, radius: usize, mode: PlanMode) -> Vec<PlannerExample> {
        let doc = &pair.complex;
        let n = doc.len();
        (0..n)
            .map(|i| {
                let limit = if mode == PlanMode::Dynamic { i } else { 0 };
                let layout = window_layout(n, i, radius, limit, |_| true);
                let sources = layout
                    .offsets
                    .iter()
                    .zip(&layout.status)
                    .map(|(&off, st)| {
                        let k = (i as i64 + off) as usize;
                        match st {
                            crate::context::Status::Complex => Some(doc.sentences[k].clone()),
                            crate::context::Status::Simplified => {
                                let t = pair.target_text(k);
                                (!t.is_empty()).then_some(t)
                            }
                        }
                    })
                    .collect();
                PlannerExample {
                    layout,
                    sources,
                    sentence: doc.sentences[i].clone(),
                    level: pair.target_level(),
                    label: pair.ops.ops[i],
                }
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PlannerModel {
    config: PlannerConfig,
    encoder: ContextEncoder,
    params: ParamSet,
    layout: Layout,
}

impl PlannerModel {
    /// The classifier's output layer starts at zero, so an untrained planner
    /// predicts the uniform distribution.
    pub fn new(config: PlannerConfig, tokenizer: Tokenizer, seed: u64) -> Result<Self> {
        config.validate()?;
        let d = config.context.d_ctx;
        let encoder = ContextEncoder::new(config.context.clone(), tokenizer, seed ^ 0x9_1A77);
        let mut params = ParamSet::new(PLANNER_PARAM_TAG);
        let mut init = Init::new(&mut params, seed);
        let blocks = (0..config.n_layers)
            .map(|l| Block {
                ln1: init.norm(&format!("win.{l}.ln1"), d),
                attn: init.attn(&format!("win.{l}.attn"), d, d, false),
                ln2: init.norm(&format!("win.{l}.ln2"), d),
                ffn: init.ffn(&format!("win.{l}.ffn"), d, config.ffn_dim),
            })
            .collect();
        let final_norm = init.norm("win.norm", d);
        let token_w = init.normal_std("token.w", d, d, 1.0 / (d as f64).sqrt());
        let token_b = init.zeros("token.b", 1, d);
        let level_emb = init.normal_std("level_emb", NUM_LEVELS as usize, d, 0.3);
        let head_w1 = init.normal_std("head.w1", 4 * d, config.hidden, 1.0 / ((4 * d) as f64).sqrt());
        let head_b1 = init.zeros("head.b1", 1, config.hidden);
        let head_w2 = init.zeros("head.w2", config.hidden, 4);
        let head_b2 = init.zeros("head.b2", 1, 4);
        let layout =
            Layout { blocks, final_norm, token_w, token_b, level_emb, head_w1, head_b1, head_w2, head_b2 };
        Ok(PlannerModel { config, encoder, params, layout })
    }

    pub fn config(&self) -> &PlannerConfig {
        &self.config
    }

    pub fn encoder(&self) -> &ContextEncoder {
        &self.encoder
    }

    pub fn encoder_mut(&mut self) -> &mut ContextEncoder {
        &mut self.encoder
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    /// Classifier and context-encoder parameters.
    pub fn count_params(&self) -> usize {
        self.params.count() + self.encoder.params().count()
    }

    /// Dropout used by training graphs.
    pub fn set_dropout(&mut self, p: f64) -> Result<()> {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::Config(format!("dropout {p} outside [0, 1)")));
        }
        self.config.dropout = p;
        Ok(())
    }

    pub fn radius(&self) -> usize {
        self.config.context.radius
    }

    fn logits_from_window<'a>(
        &'a self,
        g: &mut Graph<'a>,
        window: NodeId,
        center: usize,
        sentence: &str,
        level: u8,
    ) -> Result<NodeId> {
        if level >= NUM_LEVELS {
            return Err(Error::Planner(format!("reading level {level} outside 0..=4")));
        }
        let p = &self.params;
        let mut x = window;
        for b in &self.layout.blocks {
            let h = layers::norm(g, p, x, b.ln1);
            let a = layers::attention(g, p, h, h, b.attn, self.config.n_heads, &AttnMask::Full);
            let a = g.dropout(a, self.config.dropout);
            x = g.add(x, a);
            let h = layers::norm(g, p, x, b.ln2);
            let f = layers::feed_forward(g, p, h, b.ffn);
            let f = g.dropout(f, self.config.dropout);
            x = g.add(x, f);
        }
        let x = layers::norm(g, p, x, self.layout.final_norm);
        let center = g.row(x, center);
        let mean = self.encoder.sentence_in_graph(g, sentence).map_err(|e| Error::Planner(e.to_string()))?;
        let table = g.param(self.encoder.params(), 0);
        let ids = self.encoder.tokenizer().encode_body(sentence);
        let tokens = g.gather(table, &ids);
        let t = layers::linear(g, p, tokens, self.layout.token_w, self.layout.token_b);
        let t = g.gelu(t);
        let tmax = g.max_rows(t);
        let lt = g.param(p, self.layout.level_emb);
        let lvl = g.gather(lt, &[level as usize]);
        let z = g.concat_cols(&[center, mean, tmax, lvl]);
        let h = layers::linear(g, p, z, self.layout.head_w1, self.layout.head_b1);
        let h = g.gelu(h);
        Ok(layers::linear(g, p, h, self.layout.head_w2, self.layout.head_b2))
    }

    /// Logits (1 x 4) for a training example, with gradients reaching the
    /// context encoder.
    pub fn example_logits<'a>(&'a self, g: &mut Graph<'a>, ex: &PlannerExample) -> Result<NodeId> {
        let sources: Vec<EntrySource<'_>> = ex
            .sources
            .iter()
            .map(|s| match s {
                Some(t) => EntrySource::Text(t),
                None => EntrySource::Empty,
            })
            .collect();
        let window = self.encoder.window_in_graph(g, &ex.layout, &sources)?;
        let center = ex.layout.offsets.iter().position(|o| *o == 0).expect("window has its center");
        self.logits_from_window(g, window, center, &ex.sentence, ex.level)
    }

    /// Class-weighted cross-entropy of one example.
    pub fn example_loss<'a>(&'a self, g: &mut Graph<'a>, ex: &PlannerExample, class_weights: &[f64; 4]) -> Result<NodeId> {
        let logits = self.example_logits(g, ex)?;
        let k = ex.label.index();
        Ok(g.cross_entropy_sum(logits, &[k], &[class_weights[k]]))
    }

    fn probs(logits: &[f64]) -> [f64; 4] {
        let mut p = [logits[0], logits[1], logits[2], logits[3]];
        softmax_in_place(&mut p);
        p
    }

    /// Prediction for an example as laid out for training.
    pub fn predict_example(&self, ex: &PlannerExample) -> Result<PlanPrediction> {
        let mut g = Graph::new();
        let node = self.example_logits(&mut g, ex)?;
        let probs = Self::probs(&g.value(node).data);
        Ok(PlanPrediction { index: ex.layout.center, op: argmax_op(&probs), probs })
    }

    /// Operation for `sentence` given its window from this planner's encoder.
    pub fn predict_operation(&self, sentence: &str, window: &ContextWindow, level: u8) -> Result<PlanPrediction> {
        if window.vectors.cols != self.config.context.d_ctx {
            return Err(Error::Planner(format!(
                "window width {} does not match planner d_ctx {}",
                window.vectors.cols, self.config.context.d_ctx
            )));
        }
        if window.is_empty() {
            return Err(Error::Planner("empty context window".into()));
        }
        let mut g = Graph::new();
        let w = g.constant_ref(&window.vectors);
        let node = self.logits_from_window(&mut g, w, window.center_row(), sentence, level)?;
        let probs = Self::probs(&g.value(node).data);
        Ok(PlanPrediction { index: window.center, op: argmax_op(&probs), probs })
    }

    /// Window for sentence `i` under `mode`.
    pub fn window(&self, doc: &Document, i: usize, store: Option<&DynamicStore>, mode: PlanMode) -> Result<ContextWindow> {
        let store = if mode == PlanMode::Dynamic { store } else { None };
        self.encoder.build_window(doc, i, self.radius(), store)
    }

    /// Plans `doc` sentence by sentence. In dynamic mode each sentence is
    /// realized with the predicted operation and its encoding joins the left
    /// context of later sentences.
    pub fn plan_document(&self, doc: &Document, level: u8, mode: PlanMode, realizer: Option<&dyn Realizer>) -> Result<Plan> {
        let realizer = match (mode, realizer) {
            (PlanMode::Dynamic, None) => return Err(Error::Planner("dynamic planning needs a realizer".into())),
            (_, r) => r,
        };
        let mut store = DynamicStore::new(doc.len());
        let mut ops = Vec::with_capacity(doc.len());
        for i in 0..doc.len() {
            let window = self.window(doc, i, Some(&store), mode)?;
            let pred = self.predict_operation(&doc.sentences[i], &window, level)?;
            if mode == PlanMode::Dynamic {
                let out = realizer.expect("checked above").realize(doc, i, level, pred.op)?;
                store.set(i, self.encoder.encode_output(&out)?)?;
            }
            ops.push(pred.op);
        }
        Ok(Plan::new(ops))
    }

    pub fn checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint::default();
        let c = &self.config;
        for (k, v) in [
            ("kind", "planner".to_string()),
            ("n_layers", c.n_layers.to_string()),
            ("n_heads", c.n_heads.to_string()),
            ("ffn_dim", c.ffn_dim.to_string()),
            ("hidden", c.hidden.to_string()),
            ("dropout", c.dropout.to_string()),
            ("vocab", self.encoder.tokenizer().vocab_line()),
        ] {
            ck.header.insert(k.to_string(), v);
        }
        ck.add_set("", &self.params);
        self.encoder.write_checkpoint(&mut ck, CONTEXT_PREFIX);
        ck
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        if ck.header_value("kind")? != "planner" {
            return Err(Error::Checkpoint("not a planner checkpoint".into()));
        }
        let tokenizer = Tokenizer::from_vocab_line(ck.header_value("vocab")?, usize::MAX);
        let encoder = ContextEncoder::read_checkpoint(ck, CONTEXT_PREFIX, tokenizer.clone())?;
        let config = PlannerConfig {
            context: encoder.config().clone(),
            n_layers: ck.header_parse("n_layers")?,
            n_heads: ck.header_parse("n_heads")?,
            ffn_dim: ck.header_parse("ffn_dim")?,
            hidden: ck.header_parse("hidden")?,
            dropout: ck.header_parse("dropout")?,
        };
        let mut model = PlannerModel::new(config, tokenizer, 0)?;
        let own = ck
            .tensors
            .iter()
            .filter(|(k, _)| !k.starts_with(CONTEXT_PREFIX))
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect();
        model.params.assign_from(&own)?;
        model.encoder = encoder;
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.checkpoint().save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_checkpoint(&Checkpoint::load(path)?)
    }
}

/// Writes one `doc_id<TAB>ops` line per document.
pub fn write_plans<'a>(w: &mut impl Write, plans: impl IntoIterator<Item = (&'a str, &'a Plan)>) -> Result<()> {
    for (id, plan) in plans {
        writeln!(w, "{id}\t{plan}")?;
    }
    Ok(())
}

pub fn read_plans(r: impl BufRead) -> Result<Vec<(String, Plan)>> {
    let mut out = Vec::new();
    for (n, line) in r.lines().enumerate() {
        let line = line?;
        let (id, ops) = line
            .split_once('\t')
            .ok_or_else(|| Error::Planner(format!("plan line {}: missing tab", n + 1)))?;
        let ops = ops
            .split(' ')
            .filter(|s| !s.is_empty())
            .map(str::parse)
            .collect::<Result<Vec<Operation>>>()
            .map_err(|e| Error::Planner(format!("plan line {}: {e}", n + 1)))?;
        out.push((id.to_string(), Plan::new(ops)));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{generate_synthetic, GeneratorSpec, OpMode};
    use crate::params::uniform_tensor;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn corpus() -> crate::corpus::AlignedCorpus {
        let spec = GeneratorSpec { num_docs: 6, ops: OpMode::default_rules(), seed: 4, ..GeneratorSpec::default() };
        generate_synthetic(&spec).unwrap()
    }

    fn planner(c: &crate::corpus::AlignedCorpus) -> PlannerModel {
        let cfg = PlannerConfig {
            context: ContextConfig { d_ctx: 16, radius: 3, use_flags: true },
            ffn_dim: 32,
            hidden: 16,
            dropout: 0.0,
            ..PlannerConfig::default()
        };
        PlannerModel::new(cfg, Tokenizer::from_corpus(c, 64), 2).unwrap()
    }

    fn randomize_head(p: &mut PlannerModel) {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for name in ["head.w2", "head.b2"] {
            let i = p.params().lookup(name).unwrap();
            let (r, c) = p.params().tensor(i).shape();
            *p.params_mut().tensor_mut(i) = uniform_tensor(&mut rng, r, c, 1.0);
        }
    }

    #[test]
    fn untrained_planner_is_uniform_and_picks_copy() {
        let c = corpus();
        let p = planner(&c);
        let doc = &c.pairs[0].complex;
        let w = p.window(doc, 0, None, PlanMode::Static).unwrap();
        let pred = p.predict_operation(&doc.sentences[0], &w, 3).unwrap();
        assert_eq!(pred.probs, [0.25; 4]);
        assert_eq!(pred.op, Operation::Copy);
    }

    #[test]
    fn argmax_ties_follow_operation_order() {
        assert_eq!(argmax_op(&[0.1, 0.4, 0.4, 0.1]), Operation::Rephrase);
        assert_eq!(argmax_op(&[0.2, 0.2, 0.3, 0.3]), Operation::Split);
    }

    #[test]
    fn in_graph_example_matches_numeric_window() {
        let c = corpus();
        let mut p = planner(&c);
        randomize_head(&mut p);
        let pair = &c.pairs[1];
        for ex in PlannerExample::from_pair(pair, 3, PlanMode::Static) {
            let a = p.predict_example(&ex).unwrap();
            let w = p.window(&pair.complex, ex.layout.center, None, PlanMode::Static).unwrap();
            let b = p.predict_operation(&ex.sentence, &w, ex.level).unwrap();
            for (x, y) in a.probs.iter().zip(&b.probs) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn plans_cover_documents_and_static_ignores_realizer() {
        let c = corpus();
        let mut p = planner(&c);
        randomize_head(&mut p);
        struct Garbage;
        impl Realizer for Garbage {
            fn realize(&self, _: &Document, _: usize, _: u8, _: Operation) -> Result<String> {
                Ok("the".into())
            }
        }
        for pair in &c.pairs {
            let a = p.plan_document(&pair.complex, 3, PlanMode::Static, None).unwrap();
            let b = p.plan_document(&pair.complex, 3, PlanMode::Static, Some(&Garbage)).unwrap();
            assert_eq!(a, b);
            assert_eq!(a.len(), pair.complex.len());
            let d = p.plan_document(&pair.complex, 3, PlanMode::Dynamic, Some(&RuleSimplifier)).unwrap();
            assert_eq!(d.len(), pair.complex.len());
        }
        assert!(p.plan_document(&c.pairs[0].complex, 3, PlanMode::Dynamic, None).is_err());
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let c = corpus();
        let p = planner(&c);
        let doc = &c.pairs[0].complex;
        let mut w = p.window(doc, 0, None, PlanMode::Static).unwrap();
        w.vectors = crate::tensor::Tensor::zeros(w.len(), 8);
        assert!(p.predict_operation(&doc.sentences[0], &w, 3).is_err());
    }

    #[test]
    fn checkpoint_and_plan_file_round_trip() {
        let c = corpus();
        let mut p = planner(&c);
        randomize_head(&mut p);
        let back = PlannerModel::from_checkpoint(&p.checkpoint()).unwrap();
        assert_eq!(back.params(), p.params());
        assert_eq!(back.encoder().params(), p.encoder().params());
        let plans: Vec<(String, Plan)> = c
            .pairs
            .iter()
            .map(|pair| (pair.doc_id().to_string(), p.plan_document(&pair.complex, 2, PlanMode::Static, None).unwrap()))
            .collect();
        let mut buf = Vec::new();
        write_plans(&mut buf, plans.iter().map(|(i, p)| (i.as_str(), p))).unwrap();
        assert!(String::from_utf8(buf.clone()).unwrap().starts_with("a00000.") );
        assert_eq!(read_plans(&buf[..]).unwrap(), plans);
    }
}
