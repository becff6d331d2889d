//! Document-level inference: text-only simplifiers at sentence, paragraph or
//! document granularity, context-aware sentence simplification and
//! plan-guided pipelines, run document by document or batched across
//! documents one unit at a time.

use std::fmt;
use std::io::{BufRead, Write};
use std::ops::Range;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::context::{ContextWindow, DynamicStore, Status};
use crate::corpus::{Document, Granularity, Operation, Plan};
use crate::error::{Error, Result};
use crate::planner::{PlanMode, PlannerModel};
use crate::seq2seq::generate::generate_ids;
use crate::seq2seq::{GenConfig, GenRequest, Seq2SeqModel};

pub use crate::metrics::resegment;

/// Where unit operations come from.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PlanSource {
    #[default]
    None,
    Predicted,
    Oracle,
}

impl fmt::Display for PlanSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PlanSource::None => "none",
            PlanSource::Predicted => "predicted",
            PlanSource::Oracle => "oracle",
        })
    }
}

impl FromStr for PlanSource {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(PlanSource::None),
            "predicted" => Ok(PlanSource::Predicted),
            "oracle" => Ok(PlanSource::Oracle),
            _ => Err(Error::Config(format!("unknown plan source {s:?}"))),
        }
    }
}

/// The system type: unit size, context use, plan source and whether left
/// context holds already simplified sentences.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Strategy {
    pub granularity: Granularity,
    pub use_context: bool,
    pub plan_source: PlanSource,
    pub dynamic: bool,
}

impl Default for Strategy {
    fn default() -> Self {
        Strategy { granularity: Granularity::Sentence, use_context: false, plan_source: PlanSource::None, dynamic: true }
    }
}

impl Strategy {
    pub fn validate(&self) -> Result<()> {
        if self.use_context && self.granularity != Granularity::Sentence {
            return Err(Error::Config("context-aware simplification works sentence by sentence".into()));
        }
        Ok(())
    }

    fn check_models(&self, models: &Models<'_>) -> Result<()> {
        self.validate()?;
        let ctx = models.simplifier.config().context_attention;
        if ctx != self.use_context {
            return Err(Error::Pipeline(format!(
                "strategy {} context but the simplifier {} context attention",
                if self.use_context { "uses" } else { "does not use" },
                if ctx { "has" } else { "has no" }
            )));
        }
        if self.plan_source == PlanSource::Predicted && models.planner.is_none() {
            return Err(Error::Pipeline("predicted plans need a planner".into()));
        }
        Ok(())
    }

    fn plan_mode(&self) -> PlanMode {
        if self.dynamic {
            PlanMode::Dynamic
        } else {
            PlanMode::Static
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct Models<'m> {
    pub simplifier: &'m Seq2SeqModel,
    pub planner: Option<&'m PlannerModel>,
}

/// A document to simplify, its target level and, for oracle runs, its plan.
#[derive(Clone, Copy, Debug)]
pub struct DocInput<'d> {
    pub doc: &'d Document,
    pub level: u8,
    pub oracle: Option<&'d Plan>,
}

/// Which complex sentences a unit covered, the operation it used (for
/// single-sentence units) and the output sentences it produced. Ranges are
/// half-open.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub src: [usize; 2],
    pub op: Option<Operation>,
    pub out: [usize; 2],
}

impl Provenance {
    pub fn src_range(&self) -> Range<usize> {
        self.src[0]..self.src[1]
    }

    pub fn out_range(&self) -> Range<usize> {
        self.out[0]..self.out[1]
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimplifiedDoc {
    pub doc_id: String,
    pub output: Vec<String>,
    pub provenance: Vec<Provenance>,
    /// The operation used for every complex sentence, when planned.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plan: Option<Plan>,
}

impl SimplifiedDoc {
    pub fn text(&self) -> String {
        self.output.join(" ")
    }
}

/// Which store a recorded window read from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WindowKind {
    Planner,
    Context,
}

/// One window built during a traced run.
#[derive(Clone, Debug, PartialEq)]
pub struct WindowRecord {
    pub kind: WindowKind,
    pub sentence: usize,
    /// First sentence of the unit being processed.
    pub unit_start: usize,
    pub offsets: Vec<i64>,
    pub status: Vec<Status>,
    /// Store indices read while building the window.
    pub reads: Vec<usize>,
}

enum Prepared {
    Skip { unit: Range<usize>, ops: Vec<Operation> },
    Generate { unit: Range<usize>, ops: Vec<Operation>, request: GenRequest },
}

struct DocRun<'d> {
    input: DocInput<'d>,
    units: Vec<Range<usize>>,
    next: usize,
    plan_store: DynamicStore,
    ctx_store: DynamicStore,
    ops: Vec<Option<Operation>>,
    output: Vec<String>,
    provenance: Vec<Provenance>,
    trace: Option<Vec<WindowRecord>>,
}

impl<'d> DocRun<'d> {
    fn new(input: DocInput<'d>, strategy: &Strategy, trace: bool) -> Result<Self> {
        let n = input.doc.len();
        if n == 0 {
            return Err(Error::Pipeline(format!("document {} has no sentences", input.doc.doc_id)));
        }
        if strategy.plan_source == PlanSource::Oracle {
            match input.oracle {
                None => return Err(Error::Pipeline(format!("no oracle plan for {}", input.doc.doc_id))),
                Some(p) if p.len() != n => {
                    return Err(Error::Pipeline(format!(
                        "plan of {} operations for {} with {n} sentences",
                        p.len(),
                        input.doc.doc_id
                    )))
                }
                _ => {}
            }
        }
        let plan_store = DynamicStore::new(n);
        let ctx_store = DynamicStore::new(n);
        if trace {
            plan_store.enable_trace();
            ctx_store.enable_trace();
        }
        Ok(DocRun {
            input,
            units: strategy.granularity.units(input.doc),
            next: 0,
            plan_store,
            ctx_store,
            ops: vec![None; n],
            output: Vec::new(),
            provenance: Vec::new(),
            trace: trace.then(Vec::new),
        })
    }

    fn done(&self) -> bool {
        self.next >= self.units.len()
    }

    fn record(&mut self, kind: WindowKind, sentence: usize, unit_start: usize, w: &ContextWindow, reads: Vec<usize>) {
        if let Some(t) = &mut self.trace {
            t.push(WindowRecord {
                kind,
                sentence,
                unit_start,
                offsets: w.offsets.clone(),
                status: w.status.clone(),
                reads,
            });
        }
    }

    fn unit_ops(&mut self, strategy: &Strategy, models: &Models<'_>, unit: &Range<usize>) -> Result<Vec<Operation>> {
        match strategy.plan_source {
            PlanSource::None => Ok(Vec::new()),
            PlanSource::Oracle => Ok(self.input.oracle.expect("checked in new").ops[unit.clone()].to_vec()),
            PlanSource::Predicted => {
                let planner = models.planner.expect("checked by strategy");
                let doc = self.input.doc;
                let mut ops = Vec::with_capacity(unit.len());
                for i in unit.clone() {
                    let w = planner.window(doc, i, Some(&self.plan_store), strategy.plan_mode())?;
                    let reads = self.plan_store.take_trace();
                    self.record(WindowKind::Planner, i, unit.start, &w, reads);
                    ops.push(planner.predict_operation(&doc.sentences[i], &w, self.input.level)?.op);
                }
                Ok(ops)
            }
        }
    }

    fn prepare(&mut self, strategy: &Strategy, models: &Models<'_>) -> Result<Prepared> {
        let unit = self.units[self.next].clone();
        let ops = self.unit_ops(strategy, models, &unit)?;
        for (k, op) in unit.clone().zip(&ops) {
            self.ops[k] = Some(*op);
        }
        if !ops.is_empty() && ops.iter().all(|&o| o == Operation::Delete) {
            return Ok(Prepared::Skip { unit, ops });
        }
        let doc = self.input.doc;
        let text = doc.sentences[unit.clone()].join(" ");
        let src = models.simplifier.encode_source(&text, Some(self.input.level), &ops)?;
        let context = if strategy.use_context {
            let enc = models
                .simplifier
                .context_encoder()
                .ok_or_else(|| Error::Pipeline("context model without a context encoder".into()))?;
            let store = strategy.dynamic.then_some(&self.ctx_store);
            let w = enc.build_window(doc, unit.start, enc.config().radius, store)?;
            let reads = self.ctx_store.take_trace();
            self.record(WindowKind::Context, unit.start, unit.start, &w, reads);
            Some(w)
        } else {
            None
        };
        Ok(Prepared::Generate { unit, ops, request: GenRequest { src, context } })
    }

    /// Splits a multi-sentence unit's output back over its sentences using
    /// the operations (split takes two, delete none, others one).
    fn per_sentence(sentences: &[String], unit: &Range<usize>, ops: &[Operation]) -> Vec<String> {
        if unit.len() == 1 {
            return vec![sentences.join(" ")];
        }
        let mut rest = sentences.iter();
        let mut out: Vec<String> = ops
            .iter()
            .map(|op| {
                let take = match op {
                    Operation::Delete => 0,
                    Operation::Split => 2,
                    _ => 1,
                };
                rest.by_ref().take(take).cloned().collect::<Vec<_>>().join(" ")
            })
            .collect();
        if let Some(last) = out.iter_mut().rev().find(|s| !s.is_empty()) {
            for s in rest {
                last.push(' ');
                last.push_str(s);
            }
        }
        out.resize(unit.len(), String::new());
        out
    }

    fn finish(&mut self, strategy: &Strategy, models: &Models<'_>, unit: Range<usize>, ops: Vec<Operation>, text: &str) -> Result<()> {
        let sentences = resegment(text);
        let start = self.output.len();
        let op = if unit.len() == 1 { ops.first().copied() } else { None };
        self.provenance.push(Provenance {
            src: [unit.start, unit.end],
            op,
            out: [start, start + sentences.len()],
        });
        let needs_plan_store = strategy.dynamic && strategy.plan_source == PlanSource::Predicted;
        let needs_ctx_store = strategy.dynamic && strategy.use_context;
        if needs_plan_store || needs_ctx_store {
            let texts = Self::per_sentence(&sentences, &unit, &ops);
            for (k, t) in unit.clone().zip(&texts) {
                if needs_plan_store {
                    let enc = models.planner.expect("checked by strategy").encoder();
                    self.plan_store.set(k, enc.encode_output(t)?)?;
                }
                if needs_ctx_store {
                    let enc = models.simplifier.context_encoder().expect("checked in prepare");
                    self.ctx_store.set(k, enc.encode_output(t)?)?;
                }
            }
        }
        self.output.extend(sentences);
        self.next += 1;
        Ok(())
    }

    fn into_doc(self) -> (SimplifiedDoc, Vec<WindowRecord>) {
        let plan = self.ops.iter().copied().collect::<Option<Vec<_>>>().map(Plan::new);
        let doc = SimplifiedDoc {
            doc_id: self.input.doc.doc_id.clone(),
            output: self.output,
            provenance: self.provenance,
            plan,
        };
        (doc, self.trace.unwrap_or_default())
    }
}

fn run_step(
    runs: &mut [DocRun<'_>],
    active: &[usize],
    strategy: &Strategy,
    models: &Models<'_>,
    gen: &GenConfig,
    batch_size: usize,
) -> Result<()> {
    check_one_per_document(active)?;
    let mut pending = Vec::new();
    for &d in active {
        match runs[d].prepare(strategy, models)? {
            Prepared::Skip { unit, ops } => runs[d].finish(strategy, models, unit, ops, "")?,
            Prepared::Generate { unit, ops, request } => pending.push((d, unit, ops, request)),
        }
    }
    let mut texts = Vec::with_capacity(pending.len());
    for chunk in pending.chunks(batch_size.max(1)) {
        let reqs: Vec<GenRequest> = chunk.iter().map(|p| p.3.clone()).collect();
        for ids in generate_ids(models.simplifier, &reqs, gen)? {
            texts.push(models.simplifier.tokenizer().detokenize(&ids));
        }
    }
    for ((d, unit, ops, _), text) in pending.into_iter().zip(texts) {
        runs[d].finish(strategy, models, unit, ops, &text)?;
    }
    Ok(())
}

/// Errors when a step would hold two units of one document.
pub fn check_one_per_document(docs: &[usize]) -> Result<()> {
    let mut seen = docs.to_vec();
    seen.sort_unstable();
    if let Some(w) = seen.windows(2).find(|w| w[0] == w[1]) {
        return Err(Error::Pipeline(format!("internal: step holds two units of document {}", w[0])));
    }
    Ok(())
}

/// Documents active at each step, given each document's unit count.
pub fn schedule(unit_counts: &[usize]) -> Vec<Vec<usize>> {
    let steps = unit_counts.iter().copied().max().unwrap_or(0);
    (0..steps).map(|s| (0..unit_counts.len()).filter(|&d| unit_counts[d] > s).collect()).collect()
}

fn simplify_one(
    input: DocInput<'_>,
    strategy: &Strategy,
    models: &Models<'_>,
    gen: &GenConfig,
    trace: bool,
) -> Result<(SimplifiedDoc, Vec<WindowRecord>)> {
    strategy.check_models(models)?;
    let mut runs = vec![DocRun::new(input, strategy, trace)?];
    while !runs[0].done() {
        run_step(&mut runs, &[0], strategy, models, gen, 1)?;
    }
    Ok(runs.pop().expect("one run").into_doc())
}

/// Simplifies one document unit by unit.
pub fn simplify_document(input: DocInput<'_>, strategy: &Strategy, models: &Models<'_>, gen: &GenConfig) -> Result<SimplifiedDoc> {
    Ok(simplify_one(input, strategy, models, gen, false)?.0)
}

/// As [`simplify_document`], also returning every window built.
pub fn simplify_document_traced(
    input: DocInput<'_>,
    strategy: &Strategy,
    models: &Models<'_>,
    gen: &GenConfig,
) -> Result<(SimplifiedDoc, Vec<WindowRecord>)> {
    simplify_one(input, strategy, models, gen, true)
}

/// Batched dynamic generation: at step `s` the `s`-th unit of every document
/// that still has one is generated, `batch_size` requests at a time, and
/// each document's stores are updated before the next step.
pub fn run_dynamic_batched(
    inputs: &[DocInput<'_>],
    strategy: &Strategy,
    models: &Models<'_>,
    gen: &GenConfig,
    batch_size: usize,
) -> Result<Vec<SimplifiedDoc>> {
    if !strategy.dynamic {
        return Err(Error::Pipeline("batched dynamic generation needs a dynamic strategy".into()));
    }
    run_batched(inputs, strategy, models, gen, batch_size)
}

/// Step-batched generation for any strategy.
pub fn run_batched(
    inputs: &[DocInput<'_>],
    strategy: &Strategy,
    models: &Models<'_>,
    gen: &GenConfig,
    batch_size: usize,
) -> Result<Vec<SimplifiedDoc>> {
    if batch_size == 0 {
        return Err(Error::Config("batch size must be at least 1".into()));
    }
    strategy.check_models(models)?;
    let mut runs: Vec<DocRun<'_>> = inputs.iter().map(|&i| DocRun::new(i, strategy, false)).collect::<Result<_>>()?;
    let counts: Vec<usize> = runs.iter().map(|r| r.units.len()).collect();
    for active in schedule(&counts) {
        run_step(&mut runs, &active, strategy, models, gen, batch_size)?;
    }
    Ok(runs.into_iter().map(|r| r.into_doc().0).collect())
}

/// Sentence-level plan compliance: copy reproduces the input, delete leaves
/// nothing, split yields at least two sentences. Returns (compliant, checked).
pub fn plan_compliance(doc: &Document, out: &SimplifiedDoc) -> (usize, usize) {
    let (mut ok, mut total) = (0, 0);
    for p in &out.provenance {
        let Some(op) = p.op else { continue };
        let produced = &out.output[p.out_range()];
        let good = match op {
            Operation::Copy => produced.join(" ") == doc.sentences[p.src[0]],
            Operation::Delete => produced.is_empty(),
            Operation::Split => produced.len() >= 2,
            Operation::Rephrase => continue,
        };
        total += 1;
        ok += usize::from(good);
    }
    (ok, total)
}

/// Writes one JSON record per line.
pub fn write_outputs(w: &mut impl Write, docs: &[SimplifiedDoc]) -> Result<()> {
    for d in docs {
        serde_json::to_writer(&mut *w, d)?;
        writeln!(w)?;
    }
    Ok(())
}

pub fn read_outputs(r: impl BufRead) -> Result<Vec<SimplifiedDoc>> {
    let mut out = Vec::new();
    for line in r.lines() {
        let line = line?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line)?);
        }
    }
    Ok(out)
}
