#![allow(dead_code)]

use docsimp::context::{ContextConfig, ContextEncoder};
use docsimp::corpus::{generate_synthetic, AlignedCorpus, GeneratorSpec, OpMode, SplitTag};
use docsimp::params::uniform_tensor;
use docsimp::planner::{PlannerConfig, PlannerModel};
use docsimp::seq2seq::{ModelConfig, Seq2SeqModel, Tokenizer};
use docsimp::trainer::{make_training_pairs, train, train_planner, Task, TrainConfig};
use docsimp::corpus::Granularity;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const TOY_MAX_LEN: usize = 256;

pub fn rules_spec(num_docs: usize, seed: u64) -> GeneratorSpec {
    GeneratorSpec { num_docs, ops: OpMode::default_rules(), seed, ..GeneratorSpec::default() }
}

/// A rules corpus split into the first `n_train` documents and the rest.
pub fn rules_corpus(n_train: usize, n_test: usize, seed: u64) -> (AlignedCorpus, AlignedCorpus) {
    let all = generate_synthetic(&rules_spec(n_train + n_test, seed)).unwrap();
    let mut pairs = all.pairs;
    let test = pairs.split_off(n_train);
    (
        AlignedCorpus { pairs, split_tag: SplitTag::Train },
        AlignedCorpus { pairs: test, split_tag: SplitTag::Test },
    )
}

/// Tokenizer covering every word of the default synthetic grammar.
pub fn grammar_tokenizer() -> Tokenizer {
    let c = generate_synthetic(&GeneratorSpec { num_docs: 400, seed: 1, ..GeneratorSpec::default() }).unwrap();
    let r = generate_synthetic(&rules_spec(400, 2)).unwrap();
    let mut words: Vec<String> = Tokenizer::from_corpus(&c, TOY_MAX_LEN).words().to_vec();
    words.extend(Tokenizer::from_corpus(&r, TOY_MAX_LEN).words().iter().cloned());
    words.sort();
    words.dedup();
    Tokenizer::new(words, TOY_MAX_LEN)
}

pub fn toy_config(tok: &Tokenizer, d: usize, context: bool) -> ModelConfig {
    ModelConfig {
        vocab_size: tok.vocab_size(),
        d_model: d,
        n_heads: 2,
        n_enc_layers: 1,
        n_dec_layers: 1,
        ffn_dim: 2 * d,
        max_len: TOY_MAX_LEN,
        dropout: 0.0,
        context_attention: context,
        d_ctx: d,
        ..ModelConfig::default()
    }
}

pub fn toy_encoder(tok: &Tokenizer, d: usize, seed: u64) -> ContextEncoder {
    ContextEncoder::new(ContextConfig { d_ctx: d, radius: 3, use_flags: true }, tok.clone(), seed)
}

/// Scales the output projection so an untrained model has confident,
/// input-dependent argmaxes.
pub fn peak(model: &mut Seq2SeqModel, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let i = model.params().lookup("out.w").unwrap();
    let (r, c) = model.params().tensor(i).shape();
    *model.params_mut().tensor_mut(i) = uniform_tensor(&mut rng, r, c, 2.0);
}

/// Untrained model with randomized context output projections.
pub fn random_model(tok: &Tokenizer, d: usize, context: bool, seed: u64) -> Seq2SeqModel {
    let mut m = Seq2SeqModel::new(toy_config(tok, d, context), tok.clone(), seed).unwrap();
    peak(&mut m, seed + 1);
    if context {
        m.set_context_encoder(toy_encoder(tok, d, seed + 2)).unwrap();
        randomize_zeros(&mut m, seed + 3, 0.3);
    }
    m
}

/// Replaces every all-zero parameter tensor with uniform noise.
pub fn randomize_zeros(model: &mut Seq2SeqModel, seed: u64, bound: f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in 0..model.params().len() {
        let t = model.params().tensor(i);
        if t.data.iter().all(|v| *v == 0.0) {
            let (r, c) = t.shape();
            *model.params_mut().tensor_mut(i) = uniform_tensor(&mut rng, r, c, bound);
        }
    }
}

/// Untrained planner whose head is randomized so all operations occur.
pub fn random_planner(tok: &Tokenizer, d: usize, seed: u64) -> PlannerModel {
    let cfg = PlannerConfig {
        context: ContextConfig { d_ctx: d, radius: 3, use_flags: true },
        n_layers: 1,
        n_heads: 2,
        ffn_dim: 2 * d,
        hidden: d,
        dropout: 0.0,
    };
    let mut p = PlannerModel::new(cfg, tok.clone(), seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed + 1);
    for name in ["head.w2", "head.b2"] {
        let i = p.params().lookup(name).unwrap();
        let (r, c) = p.params().tensor(i).shape();
        *p.params_mut().tensor_mut(i) = uniform_tensor(&mut rng, r, c, 3.0);
    }
    p
}

pub fn quick_config(task: Task, epochs: usize, seed: u64) -> TrainConfig {
    TrainConfig { lr: 1e-3, dropout: 0.0, max_epochs: epochs, seed, task, ..TrainConfig::default() }
}

/// Sentence-level model trained for `epochs` epochs on `corpus`.
pub fn train_sentence_model(tok: &Tokenizer, corpus: &AlignedCorpus, task: Task, epochs: usize, seed: u64) -> Seq2SeqModel {
    let mut m = Seq2SeqModel::new(toy_config(tok, 64, false), tok.clone(), seed).unwrap();
    let pairs = make_training_pairs(corpus, Granularity::Sentence, task, tok).unwrap();
    train(&mut m, &pairs, &[], &quick_config(task, epochs, seed), None).unwrap();
    m
}

pub fn train_rules_planner(tok: &Tokenizer, train_c: &AlignedCorpus, valid: &AlignedCorpus, epochs: usize, seed: u64) -> PlannerModel {
    let cfg = PlannerConfig {
        context: ContextConfig { d_ctx: 32, ..ContextConfig::default() },
        ffn_dim: 64,
        hidden: 32,
        ..PlannerConfig::default()
    };
    let mut p = PlannerModel::new(cfg, tok.clone(), seed).unwrap();
    let tc = TrainConfig { lr: 1e-3, max_epochs: epochs, seed, ..TrainConfig::default() };
    train_planner(&mut p, train_c, valid, &tc).unwrap();
    p.set_dropout(0.0).unwrap();
    p
}

pub fn words(s: &str) -> Vec<String> {
    s.split_whitespace().map(str::to_string).collect()
}

/// Random token sequence over a small alphabet, so n-grams collide often.
pub fn random_tokens(rng: &mut ChaCha8Rng, min: usize, max: usize) -> Vec<String> {
    let n = rng.random_range(min..=max);
    (0..n).map(|_| ["a", "b", "c", "d", "e"][rng.random_range(0..5)].to_string()).collect()
}

// Brute-force oracles. N-gram multisets are plain vectors scanned linearly.

fn grams(t: &[String], n: usize) -> Vec<Vec<String>> {
    if t.len() < n {
        return Vec::new();
    }
    (0..=t.len() - n).map(|i| t[i..i + n].to_vec()).collect()
}

fn occurrences(list: &[(usize, Vec<String>)], g: &(usize, Vec<String>)) -> f64 {
    list.iter().filter(|x| *x == g).count() as f64
}

fn push_distinct(set: &mut Vec<(usize, Vec<String>)>, g: (usize, Vec<String>)) {
    if !set.contains(&g) {
        set.push(g);
    }
}

fn harmonic(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// Pooled SARI over units `(source, output, references)`; returns
/// `(sari, add, keep, delete)` on the 0..100 scale.
pub fn oracle_sari(units: &[(Vec<String>, Vec<String>, Vec<Vec<String>>)]) -> (f64, f64, f64, f64) {
    let mut totals = [0.0; 3];
    for n in 1..=4 {
        let mut src = Vec::new();
        let mut out = Vec::new();
        let mut refs = Vec::new();
        let mut nrefs = Vec::new();
        for (u, (s, o, rs)) in units.iter().enumerate() {
            src.extend(grams(s, n).into_iter().map(|g| (u, g)));
            out.extend(grams(o, n).into_iter().map(|g| (u, g)));
            for r in rs {
                refs.extend(grams(r, n).into_iter().map(|g| (u, g)));
            }
            nrefs.push(rs.len() as f64);
        }
        let mut universe = Vec::new();
        for g in src.iter().chain(&out).chain(&refs) {
            push_distinct(&mut universe, g.clone());
        }
        let s = |g: &(usize, Vec<String>)| occurrences(&src, g) * nrefs[g.0];
        let c = |g: &(usize, Vec<String>)| occurrences(&out, g) * nrefs[g.0];
        let r = |g: &(usize, Vec<String>)| occurrences(&refs, g);

        // keep
        let (mut kp, mut kp_n, mut kr, mut kr_n) = (0.0, 0, 0.0, 0);
        for g in &universe {
            let kept = s(g).min(c(g));
            let good = kept.min(r(g));
            let avail = s(g).min(r(g));
            if kept > 0.0 {
                kp += good / kept;
                kp_n += 1;
            }
            if avail > 0.0 {
                kr += good / avail;
                kr_n += 1;
            }
        }
        let keep = if kp_n == 0 && kr_n == 0 {
            1.0
        } else if kp_n == 0 {
            0.0
        } else {
            harmonic(kp / kp_n as f64, if kr_n == 0 { 0.0 } else { kr / kr_n as f64 })
        };

        // delete
        let (mut dp, mut dp_n, mut d_ref) = (0.0, 0, false);
        for g in &universe {
            let removed = s(g) - c(g);
            if removed > 0.0 {
                let good = (removed - r(g)).max(0.0);
                dp += good / removed;
                dp_n += 1;
            }
            if s(g) - r(g) > 0.0 {
                d_ref = true;
            }
        }
        let delete = if dp_n == 0 && !d_ref {
            1.0
        } else if dp_n == 0 {
            0.0
        } else {
            dp / dp_n as f64
        };

        // add
        let added: Vec<_> = universe.iter().filter(|g| c(g) > 0.0 && s(g) == 0.0).collect();
        let wanted: Vec<_> = universe.iter().filter(|g| r(g) > 0.0 && s(g) == 0.0).collect();
        let add = if added.is_empty() && wanted.is_empty() {
            1.0
        } else if added.is_empty() {
            0.0
        } else {
            let good = added.iter().filter(|g| wanted.contains(g)).count() as f64;
            let rec = if wanted.is_empty() { 0.0 } else { good / wanted.len() as f64 };
            harmonic(good / added.len() as f64, rec)
        };
        totals[0] += add;
        totals[1] += keep;
        totals[2] += delete;
    }
    let [a, k, d] = totals.map(|t| 100.0 * t / 4.0);
    ((a + k + d) / 3.0, a, k, d)
}

/// Corpus BLEU by linear scans: clipped counts, closest reference length
/// (shorter on ties), no smoothing.
pub fn oracle_bleu(outputs: &[Vec<String>], references: &[Vec<Vec<String>>]) -> f64 {
    let mut log_sum = 0.0;
    let (mut hyp, mut reflen) = (0usize, 0usize);
    for (out, refs) in outputs.iter().zip(references) {
        hyp += out.len();
        let mut best = refs[0].len();
        for r in refs {
            let (d, bd) = (r.len().abs_diff(out.len()), best.abs_diff(out.len()));
            if d < bd || (d == bd && r.len() < best) {
                best = r.len();
            }
        }
        reflen += best;
    }
    for n in 1..=4 {
        let (mut hit, mut total) = (0usize, 0usize);
        for (out, refs) in outputs.iter().zip(references) {
            let og = grams(out, n);
            total += og.len();
            let mut seen: Vec<Vec<String>> = Vec::new();
            for g in &og {
                if seen.contains(g) {
                    continue;
                }
                seen.push(g.clone());
                let count = og.iter().filter(|x| *x == g).count();
                let max_ref = refs.iter().map(|r| grams(r, n).iter().filter(|x| *x == g).count()).max().unwrap();
                hit += count.min(max_ref);
            }
        }
        if hit == 0 {
            return 0.0;
        }
        log_sum += (hit as f64 / total as f64).ln();
    }
    if hyp == 0 {
        return 0.0;
    }
    let bp = if hyp > reflen { 1.0 } else { (1.0 - reflen as f64 / hyp as f64).exp() };
    100.0 * bp * (log_sum / 4.0).exp()
}

pub struct SmallModels {
    pub tok: Tokenizer,
    pub plain: Seq2SeqModel,
    pub ctx: Seq2SeqModel,
    pub planner: PlannerModel,
}

/// Briefly trained d=32 models on a small rules corpus: a plan-guided
/// simplifier, a dynamic-context simplifier and a planner.
pub fn small_trained_models(docs: usize, epochs: usize, seed: u64) -> SmallModels {
    let tok = grammar_tokenizer();
    let (train_c, _) = rules_corpus(docs, 0, seed);
    let tc = |task| TrainConfig { batch_size: 8, ..quick_config(task, epochs, seed) };

    let mut plain = Seq2SeqModel::new(toy_config(&tok, 32, false), tok.clone(), seed).unwrap();
    let pairs = make_training_pairs(&train_c, Granularity::Sentence, Task::Plan, &tok).unwrap();
    train(&mut plain, &pairs, &[], &tc(Task::Plan), None).unwrap();

    let planner_cfg = PlannerConfig {
        context: ContextConfig { d_ctx: 32, radius: 3, use_flags: true },
        n_layers: 1,
        n_heads: 2,
        ffn_dim: 64,
        hidden: 32,
        dropout: 0.0,
    };
    let mut planner = PlannerModel::new(planner_cfg, tok.clone(), seed + 1).unwrap();
    train_planner(&mut planner, &train_c, &train_c, &tc(Task::Simplify)).unwrap();
    planner.set_dropout(0.0).unwrap();

    let mut ctx = Seq2SeqModel::new(toy_config(&tok, 32, true), tok.clone(), seed + 2).unwrap();
    let enc = planner.encoder().clone();
    let mut pairs = make_training_pairs(&train_c, Granularity::Sentence, Task::Simplify, &tok).unwrap();
    docsimp::trainer::attach_context(&mut pairs, &train_c, &enc, 3, true, false).unwrap();
    ctx.set_context_encoder(enc).unwrap();
    train(&mut ctx, &pairs, &[], &tc(Task::Simplify), None).unwrap();

    SmallModels { tok, plain, ctx, planner }
}
