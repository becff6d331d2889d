//! Teacher-forced training for the simplifier and the planner, and the
//! construction of control-token training pairs.

use std::fmt;
use std::ops::Range;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::autograd::Graph;
use crate::context::{ContextEncoder, ContextWindow, DynamicStore};
use crate::corpus::{AlignedCorpus, AlignedPair, Granularity, Operation};
use crate::error::{Error, Result};
use crate::params::{Adam, GradStore, Gradients, ParamSet};
use crate::planner::{PlanMode, PlannerExample, PlannerModel};
use crate::seq2seq::model::MODEL_PARAM_TAG;
use crate::seq2seq::tokenizer::{op_token, BOS, EOS};
use crate::seq2seq::{Example, GenConfig, GenRequest, Seq2SeqModel, Tokenizer};

/// Learning rate used for large pretrained models; kept as a preset.
pub const PRETRAINED_LR: f64 = 2e-5;
/// Default learning rate for small models trained from scratch.
pub const TOY_LR: f64 = 2e-4;

/// What a simplifier is trained to map from and to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Task {
    /// Text only: `[RL] text` to simplified text.
    Simplify,
    /// Plan-guided: the unit's operation tokens precede the level token.
    Plan,
    /// The target starts with the unit's operation tokens.
    MultitaskPrefix,
    /// Each sentence's operation token precedes its simplification.
    MultitaskSep,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::Simplify => "simplify",
            Task::Plan => "plan",
            Task::MultitaskPrefix => "multitask_prefix",
            Task::MultitaskSep => "multitask_sep",
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Task {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "simplify" => Ok(Task::Simplify),
            "plan" => Ok(Task::Plan),
            "multitask_prefix" => Ok(Task::MultitaskPrefix),
            "multitask_sep" => Ok(Task::MultitaskSep),
            _ => Err(Error::Config(format!("unknown task {s:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub dropout: f64,
    pub max_epochs: usize,
    pub seed: u64,
    pub task: Task,
    /// Stop after this many consecutive epochs of rising validation loss.
    pub patience: usize,
    /// Stop as soon as the epoch metric reaches this value.
    pub target_metric: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: TOY_LR,
            batch_size: 16,
            dropout: 0.1,
            max_epochs: 50,
            seed: 13,
            task: Task::Simplify,
            patience: 3,
            target_metric: None,
        }
    }
}

impl TrainConfig {
    /// Hyperparameters used for pretrained models.
    pub fn pretrained_preset() -> Self {
        TrainConfig { lr: PRETRAINED_LR, ..TrainConfig::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("learning rate {} must be positive", self.lr)));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        Ok(())
    }
}

/// One source/target id pair with the unit it came from.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainingPair {
    pub src: Vec<usize>,
    pub tgt: Vec<usize>,
    /// Index of the corpus pair and the complex sentence range of the unit.
    pub pair: usize,
    pub unit: Range<usize>,
    pub context: Option<ContextWindow>,
}

impl TrainingPair {
    pub fn example(&self) -> Example {
        Example { src: self.src.clone(), tgt: self.tgt.clone(), context: self.context.clone() }
    }
}

fn unit_text(pair: &AlignedPair, unit: &Range<usize>) -> String {
    pair.complex.sentences[unit.clone()].join(" ")
}

fn unit_target(pair: &AlignedPair, unit: &Range<usize>) -> String {
    unit.clone().map(|i| pair.target_text(i)).filter(|t| !t.is_empty()).collect::<Vec<_>>().join(" ")
}

fn bounded(ids: Vec<usize>, tok: &Tokenizer) -> Result<Vec<usize>> {
    if ids.len() > tok.max_len() {
        return Err(Error::Trainer(format!("target of {} tokens exceeds max_len {}", ids.len(), tok.max_len())));
    }
    Ok(ids)
}

/// Training pairs for every unit of every document.
pub fn make_training_pairs(
    corpus: &AlignedCorpus,
    granularity: Granularity,
    task: Task,
    tok: &Tokenizer,
) -> Result<Vec<TrainingPair>> {
    let mut out = Vec::new();
    for (p, pair) in corpus.pairs.iter().enumerate() {
        let level = Some(pair.target_level());
        for unit in granularity.units(&pair.complex) {
            let ops: Vec<Operation> = pair.ops.ops[unit.clone()].to_vec();
            let text = unit_text(pair, &unit);
            let src = match task {
                Task::Plan => tok.tokenize_with_ops(&text, level, &ops)?,
                _ => tok.tokenize_with_ops(&text, level, &[])?,
            };
            let mut tgt = vec![BOS];
            match task {
                Task::Simplify | Task::Plan => tgt.extend(tok.encode_body(&unit_target(pair, &unit))),
                Task::MultitaskPrefix => {
                    tgt.extend(ops.iter().map(|o| op_token(*o)));
                    tgt.extend(tok.encode_body(&unit_target(pair, &unit)));
                }
                Task::MultitaskSep => {
                    for i in unit.clone() {
                        tgt.push(op_token(pair.ops.ops[i]));
                        tgt.extend(tok.encode_body(&pair.target_text(i)));
                    }
                }
            }
            tgt.push(EOS);
            out.push(TrainingPair { src, tgt: bounded(tgt, tok)?, pair: p, unit, context: None });
        }
    }
    Ok(out)
}

/// Attaches context windows to sentence-level pairs. With `dynamic` set,
/// left context holds the reference simplifications (all of them, or only
/// those before the sentence's paragraph when `paragraph` is set).
pub fn attach_context(
    pairs: &mut [TrainingPair],
    corpus: &AlignedCorpus,
    encoder: &ContextEncoder,
    radius: usize,
    dynamic: bool,
    paragraph: bool,
) -> Result<()> {
    let mut stores: Vec<Option<DynamicStore>> = (0..corpus.pairs.len()).map(|_| None).collect();
    for tp in pairs.iter_mut() {
        if tp.unit.len() != 1 {
            return Err(Error::Trainer("context windows need sentence-level units".into()));
        }
        let pair = &corpus.pairs[tp.pair];
        let store = match &mut stores[tp.pair] {
            Some(s) => s,
            slot => {
                let mut s = DynamicStore::new(pair.complex.len());
                for k in 0..pair.complex.len() {
                    s.set(k, encoder.encode_output(&pair.target_text(k))?)?;
                }
                slot.insert(s)
            }
        };
        let i = tp.unit.start;
        let store = dynamic.then_some(&*store);
        tp.context = Some(if paragraph {
            encoder.build_window_paragraph(&pair.complex, i, radius, store)?
        } else {
            encoder.build_window(&pair.complex, i, radius, store)?
        });
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub valid_loss: Option<f64>,
    pub metric: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainReport {
    pub epochs: Vec<EpochLog>,
    pub steps: usize,
    pub stopped_early: bool,
}

impl TrainReport {
    pub fn losses(&self) -> Vec<f64> {
        self.epochs.iter().map(|e| e.train_loss).collect()
    }
}

/// Writes the per-epoch log as CSV (`epoch,train_loss,valid_loss,metric`).
pub fn write_log(path: &Path, epochs: &[EpochLog]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for e in epochs {
        w.serialize(e)?;
    }
    w.flush()?;
    Ok(())
}

/// Mean token cross-entropy of `pairs` without dropout.
pub fn mean_loss(model: &Seq2SeqModel, pairs: &[TrainingPair]) -> Result<f64> {
    let (mut total, mut tokens) = (0.0, 0usize);
    for tp in pairs {
        let ex = tp.example();
        let mut g = Graph::new();
        let (loss, n) = model.loss_graph(&mut g, &ex)?;
        total += g.value(loss).data[0];
        tokens += n;
    }
    Ok(total / tokens.max(1) as f64)
}

/// Fraction of pairs whose generated ids equal the target body.
pub fn exact_match(model: &Seq2SeqModel, pairs: &[TrainingPair], gen: &GenConfig) -> Result<f64> {
    if pairs.is_empty() {
        return Ok(0.0);
    }
    let mut hits = 0;
    for chunk in pairs.chunks(16) {
        let reqs: Vec<GenRequest> =
            chunk.iter().map(|tp| GenRequest { src: tp.src.clone(), context: tp.context.clone() }).collect();
        let outs = crate::seq2seq::generate::generate_ids(model, &reqs, gen)?;
        for (tp, out) in chunk.iter().zip(outs) {
            if out[..] == tp.tgt[1..tp.tgt.len() - 1] {
                hits += 1;
            }
        }
    }
    Ok(hits as f64 / pairs.len() as f64)
}

fn step_seed(seed: u64, step: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(step as u64)
}

/// Gradient of the mean token loss over `batch`, and that loss.
pub fn batch_gradient(model: &Seq2SeqModel, batch: &[&TrainingPair], seed: u64) -> Result<(GradStore, f64)> {
    let mut grads = GradStore::zeros_like(model.params());
    let mut total = 0.0;
    let tokens: usize = batch.iter().map(|tp| tp.tgt.len() - 1).sum();
    let scale = 1.0 / tokens.max(1) as f64;
    for (k, tp) in batch.iter().enumerate() {
        let ex = tp.example();
        let mut g = Graph::training(ChaCha8Rng::seed_from_u64(step_seed(seed, k)));
        let (loss, _) = model.loss_graph(&mut g, &ex)?;
        total += g.value(loss).data[0];
        let mut gr: Gradients = g.backward(loss, scale);
        if let Some(gs) = gr.take(MODEL_PARAM_TAG) {
            grads.add(&gs);
        }
    }
    Ok((grads, total * scale))
}

/// Mini-batch Adam training with a per-epoch deterministic shuffle.
/// `metric`, when given, is evaluated after every epoch.
pub fn train(
    model: &mut Seq2SeqModel,
    train_pairs: &[TrainingPair],
    valid_pairs: &[TrainingPair],
    config: &TrainConfig,
    metric: Option<&dyn Fn(&Seq2SeqModel) -> Result<f64>>,
) -> Result<TrainReport> {
    config.validate()?;
    if train_pairs.is_empty() {
        return Err(Error::Trainer("no training pairs".into()));
    }
    model.set_dropout(config.dropout)?;
    let mut adam = Adam::new(model.params(), config.lr);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..train_pairs.len()).collect();
    let mut report = TrainReport::default();
    let mut best: Option<(f64, ParamSet)> = None;
    let mut rising = 0;
    for epoch in 1..=config.max_epochs {
        order.shuffle(&mut rng);
        let (mut sum, mut batches) = (0.0, 0usize);
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<&TrainingPair> = chunk.iter().map(|&i| &train_pairs[i]).collect();
            let (grads, loss) = batch_gradient(model, &batch, step_seed(config.seed, report.steps))?;
            report.steps += 1;
            if !loss.is_finite() || !grads.all_finite() {
                return Err(Error::Divergence { step: report.steps, loss });
            }
            adam.step(model.params_mut(), &grads);
            sum += loss;
            batches += 1;
        }
        let valid_loss = if valid_pairs.is_empty() { None } else { Some(mean_loss(model, valid_pairs)?) };
        let m = metric.map(|f| f(model)).transpose()?;
        report.epochs.push(EpochLog { epoch, train_loss: sum / batches as f64, valid_loss, metric: m });
        if let (Some(target), Some(m)) = (config.target_metric, m) {
            if m >= target {
                break;
            }
        }
        if let Some(v) = valid_loss {
            let prev = report.epochs.len().checked_sub(2).and_then(|i| report.epochs[i].valid_loss);
            rising = if prev.is_some_and(|p| v > p) { rising + 1 } else { 0 };
            if best.as_ref().is_none_or(|(b, _)| v < *b) {
                best = Some((v, model.params().clone()));
            }
            if rising >= config.patience {
                report.stopped_early = true;
                if let Some((_, params)) = best.take() {
                    *model.params_mut() = params;
                }
                break;
            }
        }
    }
    Ok(report)
}

/// Per-class loss weights `N / (4 * N_k)`; classes that never occur get 0.
pub fn class_weights(labels: impl IntoIterator<Item = Operation>) -> [f64; 4] {
    let mut counts = [0usize; 4];
    for op in labels {
        counts[op.index()] += 1;
    }
    let n: usize = counts.iter().sum();
    let mut w = [0.0; 4];
    for k in 0..4 {
        if counts[k] > 0 {
            w[k] = n as f64 / (4.0 * counts[k] as f64);
        }
    }
    w
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PlannerEpoch {
    pub epoch: usize,
    pub train_loss: f64,
    pub valid_accuracy: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct PlannerReport {
    pub epochs: Vec<PlannerEpoch>,
    pub class_weights: [f64; 4],
    /// Validation accuracy per gold class (`None` when a class is absent).
    pub per_class_accuracy: [Option<f64>; 4],
}

/// Overall and per-class accuracy of teacher-forced predictions.
pub fn planner_accuracy(planner: &PlannerModel, examples: &[PlannerExample]) -> Result<(f64, [Option<f64>; 4])> {
    let mut hit = [0usize; 4];
    let mut all = [0usize; 4];
    for ex in examples {
        let k = ex.label.index();
        all[k] += 1;
        if planner.predict_example(ex)?.op == ex.label {
            hit[k] += 1;
        }
    }
    let total: usize = all.iter().sum();
    let per = std::array::from_fn(|k| (all[k] > 0).then(|| hit[k] as f64 / all[k] as f64));
    Ok((hit.iter().sum::<usize>() as f64 / total.max(1) as f64, per))
}

/// Planner examples for every sentence of `corpus`.
pub fn planner_examples(corpus: &AlignedCorpus, radius: usize, mode: PlanMode) -> Vec<PlannerExample> {
    corpus.pairs.iter().flat_map(|p| PlannerExample::from_pair(p, radius, mode)).collect()
}

/// Class-weighted cross-entropy training of the planner and its context
/// encoder on dynamic windows built from reference simplifications.
pub fn train_planner(
    planner: &mut PlannerModel,
    train_corpus: &AlignedCorpus,
    valid_corpus: &AlignedCorpus,
    config: &TrainConfig,
) -> Result<PlannerReport> {
    config.validate()?;
    planner.set_dropout(config.dropout)?;
    let radius = planner.radius();
    let train_ex = planner_examples(train_corpus, radius, PlanMode::Dynamic);
    let valid_ex = planner_examples(valid_corpus, radius, PlanMode::Dynamic);
    if train_ex.is_empty() {
        return Err(Error::Trainer("no planner training examples".into()));
    }
    let weights = class_weights(train_ex.iter().map(|e| e.label));
    let mut report = PlannerReport { class_weights: weights, ..PlannerReport::default() };
    let mut adam_p = Adam::new(planner.params(), config.lr);
    let mut adam_e = Adam::new(planner.encoder().params(), config.lr);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..train_ex.len()).collect();
    let mut step = 0usize;
    for epoch in 1..=config.max_epochs {
        order.shuffle(&mut rng);
        let (mut sum, mut batches) = (0.0, 0usize);
        for chunk in order.chunks(config.batch_size) {
            let mut gp = GradStore::zeros_like(planner.params());
            let mut ge = GradStore::zeros_like(planner.encoder().params());
            let norm: f64 = chunk.iter().map(|&i| weights[train_ex[i].label.index()]).sum::<f64>().max(1e-12);
            let mut loss = 0.0;
            for (k, &i) in chunk.iter().enumerate() {
                let mut g = Graph::training(ChaCha8Rng::seed_from_u64(step_seed(config.seed ^ 0x91A7, step * 1024 + k)));
                let l = planner.example_loss(&mut g, &train_ex[i], &weights)?;
                loss += g.value(l).data[0] / norm;
                let mut gr = g.backward(l, 1.0 / norm);
                if let Some(x) = gr.take(crate::planner::PLANNER_PARAM_TAG) {
                    gp.add(&x);
                }
                if let Some(x) = gr.take(crate::context::CONTEXT_PARAM_TAG) {
                    ge.add(&x);
                }
            }
            step += 1;
            if !loss.is_finite() || !gp.all_finite() || !ge.all_finite() {
                return Err(Error::Divergence { step, loss });
            }
            adam_p.step(planner.params_mut(), &gp);
            adam_e.step(planner.encoder_mut().params_mut(), &ge);
            sum += loss;
            batches += 1;
        }
        let acc = if valid_ex.is_empty() {
            None
        } else {
            let (a, per) = planner_accuracy(planner, &valid_ex)?;
            report.per_class_accuracy = per;
            Some(a)
        };
        report.epochs.push(PlannerEpoch { epoch, train_loss: sum / batches as f64, valid_accuracy: acc });
        if let (Some(t), Some(a)) = (config.target_metric, acc) {
            if a >= t {
                break;
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{generate_synthetic, GeneratorSpec, OpDistribution};
    use crate::seq2seq::tokenizer::{level_token, op_token};
    use crate::seq2seq::ModelConfig;

    fn corpus(ops: crate::corpus::OpMode, n: usize) -> AlignedCorpus {
        generate_synthetic(&GeneratorSpec { num_docs: n, ops, seed: 21, ..GeneratorSpec::default() }).unwrap()
    }

    #[test]
    fn sentence_pair_layouts() {
        let c = corpus(crate::corpus::OpMode::Sampled(OpDistribution::only(Operation::Copy)), 2);
        let tok = Tokenizer::from_corpus(&c, 1024);
        let pair = &c.pairs[0];
        let level = pair.target_level();
        let text = &pair.complex.sentences[0];
        let body = tok.encode_body(text);
        let plain = make_training_pairs(&c, Granularity::Sentence, Task::Simplify, &tok).unwrap();
        let mut want = vec![level_token(level), BOS];
        want.extend(&body);
        want.push(EOS);
        assert_eq!(plain[0].src, want);
        let mut tgt = vec![BOS];
        tgt.extend(&body);
        tgt.push(EOS);
        assert_eq!(plain[0].tgt, tgt);
        let guided = make_training_pairs(&c, Granularity::Sentence, Task::Plan, &tok).unwrap();
        assert_eq!(guided[0].src[0], op_token(Operation::Copy));
        assert_eq!(&guided[0].src[1..], &want[..]);
    }

    #[test]
    fn multitask_sep_interleaves_operations() {
        let c = corpus(crate::corpus::OpMode::default_rules(), 8);
        let tok = Tokenizer::from_corpus(&c, 1024);
        let pairs = make_training_pairs(&c, Granularity::Document, Task::MultitaskSep, &tok).unwrap();
        let plain = make_training_pairs(&c, Granularity::Document, Task::Simplify, &tok).unwrap();
        for (tp, pl) in pairs.iter().zip(&plain) {
            let pair = &c.pairs[tp.pair];
            let ops: Vec<Operation> =
                tp.tgt.iter().filter_map(|&t| crate::seq2seq::tokenizer::token_op(t)).collect();
            assert_eq!(ops, pair.ops.ops);
            assert_eq!(tp.tgt[1], op_token(pair.ops.ops[0]));
            assert_eq!(*tp.tgt.last().unwrap(), EOS);
            let stripped: Vec<usize> =
                tp.tgt.iter().copied().filter(|&t| crate::seq2seq::tokenizer::token_op(t).is_none()).collect();
            assert_eq!(stripped, pl.tgt);
        }
    }

    #[test]
    fn class_weight_formula() {
        use Operation::*;
        let w = class_weights([Copy, Copy, Copy, Rephrase, Split, Split, Copy, Copy]);
        assert_eq!(w, [8.0 / 20.0, 8.0 / 4.0, 8.0 / 8.0, 0.0]);
    }

    #[test]
    fn first_loss_is_near_uniform_and_training_is_deterministic() {
        let c = corpus(crate::corpus::OpMode::Sampled(OpDistribution::only(Operation::Copy)), 3);
        let tok = Tokenizer::from_corpus(&c, 1024);
        let pairs = make_training_pairs(&c, Granularity::Sentence, Task::Simplify, &tok).unwrap();
        let cfg = ModelConfig { d_model: 16, n_heads: 2, ffn_dim: 32, max_len: 64, ..ModelConfig::default() };
        let m0 = Seq2SeqModel::new(cfg, tok.clone(), 1).unwrap();
        let uniform = (tok.vocab_size() as f64).ln();
        let first = mean_loss(&m0, &pairs[..16]).unwrap();
        assert!((first - uniform).abs() / uniform < 0.05, "{first} vs {uniform}");

        let tc = TrainConfig { max_epochs: 2, batch_size: 8, ..TrainConfig::default() };
        let mut a = m0.clone();
        let mut b = m0.clone();
        let ra = train(&mut a, &pairs, &[], &tc, None).unwrap();
        let rb = train(&mut b, &pairs, &[], &tc, None).unwrap();
        assert_eq!(ra, rb);
        assert_eq!(a.params(), b.params());
    }

    #[test]
    fn invalid_config_is_rejected() {
        assert!(TrainConfig { lr: 0.0, ..TrainConfig::default() }.validate().is_err());
        assert!(TrainConfig { batch_size: 0, ..TrainConfig::default() }.validate().is_err());
        assert!("bogus".parse::<Task>().is_err());
    }
}
