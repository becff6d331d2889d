//! The `docsimp` command line. Every command writes a manifest beside its
//! output (arguments, seed, configuration and SHA-256 checksums of inputs
//! and outputs) that `rerun-from-manifest` replays and verifies.

mod bench;
mod manifest;

use std::fs;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::context::{ContextConfig, ContextEncoder};
use crate::corpus::{
    generate_splits, load_corpus, write_splits, AlignedCorpus, GeneratorSpec, Granularity, OpDistribution, OpMode,
    RuleSimplifier, SplitTag,
};
use crate::error::{Error, Result};
use crate::metrics::{evaluate, write_report, SariMode};
use crate::pipeline::{run_batched, write_outputs, DocInput, Models, PlanSource, SimplifiedDoc, Strategy};
use crate::planner::{write_plans, ModelRealizer, PlanMode, PlannerConfig, PlannerModel, Realizer};
use crate::seq2seq::{AttentionMode, GenConfig, ModelConfig, Seq2SeqModel, Tokenizer};
use crate::trainer::{
    attach_context, exact_match, make_training_pairs, train, train_planner, write_log, Task, TrainConfig,
};

pub use bench::{BenchRow, SystemSpec};
pub use manifest::{sha256_file, Manifest};

#[derive(Debug, Parser)]
#[command(name = "docsimp", version, about = "Plan-guided document simplification")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Generate a synthetic aligned corpus with train/valid/test splits.
    GenerateData(GenerateArgs),
    /// Train a simplifier or a planner.
    Train(TrainArgs),
    /// Predict operation plans for a corpus split.
    Plan(PlanArgs),
    /// Simplify the documents of a corpus split.
    Simplify(SimplifyArgs),
    /// Score system outputs against references.
    Evaluate(EvaluateArgs),
    /// Time inference per sentence and report parameter counts.
    Bench(BenchArgs),
    /// Replay a command from its manifest and verify its outputs.
    RerunFromManifest(RerunArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Switch {
    On,
    Off,
}

impl Switch {
    pub fn on(self) -> bool {
        self == Switch::On
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum GranularityArg {
    Sent,
    Para,
    Doc,
}

impl From<GranularityArg> for Granularity {
    fn from(g: GranularityArg) -> Self {
        match g {
            GranularityArg::Sent => Granularity::Sentence,
            GranularityArg::Para => Granularity::Paragraph,
            GranularityArg::Doc => Granularity::Document,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum PlanArg {
    None,
    Predicted,
    Oracle,
}

impl From<PlanArg> for PlanSource {
    fn from(p: PlanArg) -> Self {
        match p {
            PlanArg::None => PlanSource::None,
            PlanArg::Predicted => PlanSource::Predicted,
            PlanArg::Oracle => PlanSource::Oracle,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum TaskArg {
    Simplify,
    Plan,
    MultitaskPrefix,
    MultitaskSep,
}

impl From<TaskArg> for Task {
    fn from(t: TaskArg) -> Self {
        match t {
            TaskArg::Simplify => Task::Simplify,
            TaskArg::Plan => Task::Plan,
            TaskArg::MultitaskPrefix => Task::MultitaskPrefix,
            TaskArg::MultitaskSep => Task::MultitaskSep,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitArg {
    Train,
    Valid,
    Test,
}

impl From<SplitArg> for SplitTag {
    fn from(s: SplitArg) -> Self {
        match s {
            SplitArg::Train => SplitTag::Train,
            SplitArg::Valid => SplitTag::Validation,
            SplitArg::Test => SplitTag::Test,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum OpsArg {
    /// Operations follow deterministic sentence-feature rules.
    Rules,
    /// Operations are drawn independently.
    Sampled,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Simplifier,
    Planner,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum AttentionArg {
    Full,
    Sliding,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum RealizerArg {
    Rules,
    Model,
}

#[derive(Debug, Args, Serialize)]
pub struct GenerateArgs {
    /// Output directory for train.jsonl, valid.jsonl and test.jsonl.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 1000)]
    pub docs: usize,
    #[arg(long, value_enum, default_value_t = OpsArg::Rules)]
    pub ops: OpsArg,
    #[arg(long, default_value_t = 4)]
    pub min_sentences: usize,
    #[arg(long, default_value_t = 10)]
    pub max_sentences: usize,
    /// Comma-separated target reading levels.
    #[arg(long, default_value = "2,3,4")]
    pub levels: String,
    #[arg(long, default_value_t = 13)]
    pub seed: u64,
}

#[derive(Debug, Args, Serialize)]
pub struct TrainArgs {
    /// Corpus directory (train.jsonl and valid.jsonl are read).
    #[arg(long)]
    pub corpus: PathBuf,
    /// Checkpoint to write; the training log goes to `<out>.log.csv`.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = ModelKind::Simplifier)]
    pub kind: ModelKind,
    #[arg(long, value_enum, default_value_t = TaskArg::Simplify)]
    pub task: TaskArg,
    #[arg(long, value_enum, default_value_t = GranularityArg::Sent)]
    pub granularity: GranularityArg,
    #[arg(long, value_enum, default_value_t = Switch::Off)]
    pub context: Switch,
    #[arg(long, value_enum, default_value_t = Switch::On)]
    pub dynamic: Switch,
    /// Planner checkpoint whose sentence encoder a context model reuses.
    #[arg(long)]
    pub context_encoder: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    pub epochs: usize,
    #[arg(long, default_value_t = crate::trainer::TOY_LR)]
    pub lr: f64,
    #[arg(long, default_value_t = 16)]
    pub batch: usize,
    #[arg(long, default_value_t = 0.1)]
    pub dropout: f64,
    /// Stop once validation exact match (simplifier) or accuracy (planner)
    /// reaches this value.
    #[arg(long)]
    pub target_metric: Option<f64>,
    #[arg(long, default_value_t = 64)]
    pub d_model: usize,
    #[arg(long, default_value_t = 4)]
    pub heads: usize,
    #[arg(long, default_value_t = 2)]
    pub layers: usize,
    #[arg(long, default_value_t = 128)]
    pub ffn: usize,
    #[arg(long, default_value_t = 1024)]
    pub max_len: usize,
    #[arg(long, value_enum, default_value_t = AttentionArg::Full)]
    pub attention: AttentionArg,
    #[arg(long, default_value_t = 32)]
    pub window: usize,
    #[arg(long, default_value_t = 64)]
    pub d_ctx: usize,
    #[arg(long, default_value_t = 13)]
    pub radius: usize,
    #[arg(long, default_value_t = 13)]
    pub seed: u64,
}

#[derive(Debug, Args, Serialize)]
pub struct PlanArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long, value_enum, default_value_t = SplitArg::Test)]
    pub split: SplitArg,
    #[arg(long)]
    pub planner: PathBuf,
    #[arg(long, value_enum, default_value_t = Switch::On)]
    pub dynamic: Switch,
    /// How dynamic planning realizes earlier sentences.
    #[arg(long, value_enum, default_value_t = RealizerArg::Rules)]
    pub realizer: RealizerArg,
    /// Plan-guided simplifier used by `--realizer model`.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Overrides each document's target level.
    #[arg(long)]
    pub level: Option<u8>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 13)]
    pub seed: u64,
}

/// Strategy and decoding flags shared by `simplify` and `bench`.
#[derive(Clone, Debug, PartialEq, Args, Serialize)]
pub struct RunFlags {
    #[arg(long, value_enum, default_value_t = GranularityArg::Sent)]
    pub granularity: GranularityArg,
    #[arg(long, value_enum, default_value_t = Switch::Off)]
    pub context: Switch,
    #[arg(long, value_enum, default_value_t = PlanArg::None)]
    pub plan: PlanArg,
    #[arg(long, value_enum, default_value_t = Switch::On)]
    pub dynamic: Switch,
    #[arg(long, default_value_t = 5)]
    pub beam: usize,
    #[arg(long, default_value_t = 1024)]
    pub max_len: usize,
    #[arg(long)]
    pub level: Option<u8>,
    #[arg(long, default_value_t = 16)]
    pub batch: usize,
}

impl RunFlags {
    pub fn strategy(&self) -> Strategy {
        Strategy {
            granularity: self.granularity.into(),
            use_context: self.context.on(),
            plan_source: self.plan.into(),
            dynamic: self.dynamic.on(),
        }
    }

    pub fn gen(&self) -> GenConfig {
        GenConfig { beam_size: self.beam, max_len: self.max_len, length_norm: true }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct SimplifyArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long, value_enum, default_value_t = SplitArg::Test)]
    pub split: SplitArg,
    /// Simplifier checkpoint.
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub planner: Option<PathBuf>,
    /// System type shorthand: sentence, paragraph, document, context or
    /// pipeline; explicit flags refine it.
    #[arg(long)]
    pub strategy: Option<String>,
    #[command(flatten)]
    pub run: RunFlags,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 13)]
    pub seed: u64,
}

#[derive(Debug, Args, Serialize)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long, value_enum, default_value_t = SplitArg::Test)]
    pub split: SplitArg,
    /// `name=path` of a simplify output file; `path` may also be
    /// `references` or `source`.
    #[arg(long = "system", required = true)]
    pub systems: Vec<String>,
    /// `pooled` (statistics over all documents) or `mean` (per document).
    #[arg(long, default_value = "pooled")]
    pub sari_mode: String,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 13)]
    pub seed: u64,
}

#[derive(Debug, Args, Serialize)]
pub struct BenchArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long, value_enum, default_value_t = SplitArg::Test)]
    pub split: SplitArg,
    /// `name=NAME,model=PATH[,planner=PATH][,granularity=..][,context=..]
    /// [,plan=..][,dynamic=..]`; unset keys take the shared flags.
    #[arg(long = "system", required = true)]
    pub systems: Vec<String>,
    #[command(flatten)]
    pub run: RunFlags,
    #[arg(long, default_value_t = 1)]
    pub repetitions: usize,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 13)]
    pub seed: u64,
}

#[derive(Debug, Args, Serialize)]
pub struct RerunArgs {
    #[arg(long)]
    pub manifest: PathBuf,
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code, printing failures as one `error: <module>: ...` line.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let argv: Vec<std::ffi::OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            let first = e.to_string().lines().next().unwrap_or("").trim_start_matches("error: ").to_string();
            eprintln!("error: usage: {first}");
            return 2;
        }
    };
    let raw: Vec<String> = argv.iter().skip(1).map(|a| a.to_string_lossy().into_owned()).collect();
    match run(&cli.command, &raw) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", e.to_string().replace('\n', " "));
            e.exit_code()
        }
    }
}

/// Runs one command. `raw` is its argument list, recorded in the manifest.
pub fn run(command: &Command, raw: &[String]) -> Result<()> {
    match command {
        Command::GenerateData(a) => cmd_generate_data(a, raw),
        Command::Train(a) => cmd_train(a, raw),
        Command::Plan(a) => cmd_plan(a, raw),
        Command::Simplify(a) => cmd_simplify(a, raw),
        Command::Evaluate(a) => cmd_evaluate(a, raw),
        Command::Bench(a) => bench::cmd_bench(a, raw),
        Command::RerunFromManifest(a) => manifest::rerun(&a.manifest),
    }
}

fn split_path(dir: &Path, split: SplitArg) -> PathBuf {
    dir.join(SplitTag::from(split).file_name())
}

fn load_split(dir: &Path, split: SplitArg) -> Result<(AlignedCorpus, PathBuf)> {
    let path = split_path(dir, split);
    Ok((load_corpus(&path)?, path))
}

fn create(path: &Path) -> Result<BufWriter<fs::File>> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    Ok(BufWriter::new(fs::File::create(path)?))
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn manifest_for(command: &str, raw: &[String], seed: u64, config: &impl Serialize) -> Result<Manifest> {
    Ok(Manifest::new(command, raw, seed, serde_json::to_value(config)?))
}

pub fn cmd_generate_data(a: &GenerateArgs, raw: &[String]) -> Result<()> {
    let levels = a
        .levels
        .split(',')
        .map(|l| l.trim().parse::<u8>().map_err(|_| Error::Usage(format!("bad level {l:?}"))))
        .collect::<Result<Vec<_>>>()?;
    let ops = match a.ops {
        OpsArg::Rules => OpMode::default_rules(),
        OpsArg::Sampled => OpMode::Sampled(OpDistribution { copy: 0.35, rephrase: 0.35, split: 0.15, delete: 0.15 }),
    };
    let spec = GeneratorSpec {
        num_docs: a.docs,
        sentences_per_doc: (a.min_sentences, a.max_sentences),
        ops,
        target_levels: levels,
        seed: a.seed,
        ..GeneratorSpec::default()
    };
    let splits = generate_splits(&spec)?;
    write_splits(&splits, &a.out)?;
    let mut m = manifest_for("generate-data", raw, a.seed, a)?;
    for s in [SplitArg::Train, SplitArg::Valid, SplitArg::Test] {
        m.add_output(&split_path(&a.out, s))?;
    }
    m.write(&a.out.join("manifest.json"))
}

fn model_config(a: &TrainArgs) -> ModelConfig {
    ModelConfig {
        d_model: a.d_model,
        n_heads: a.heads,
        n_enc_layers: a.layers,
        n_dec_layers: a.layers,
        ffn_dim: a.ffn,
        max_len: a.max_len,
        dropout: a.dropout,
        context_attention: a.context.on(),
        d_ctx: a.d_ctx,
        attention_mode: match a.attention {
            AttentionArg::Full => AttentionMode::Full,
            AttentionArg::Sliding => AttentionMode::Sliding,
        },
        sliding_window: a.window,
        ..ModelConfig::default()
    }
}

pub fn cmd_train(a: &TrainArgs, raw: &[String]) -> Result<()> {
    let (train_c, train_path) = load_split(&a.corpus, SplitArg::Train)?;
    let (valid_c, valid_path) = load_split(&a.corpus, SplitArg::Valid)?;
    let tc = TrainConfig {
        lr: a.lr,
        batch_size: a.batch,
        dropout: a.dropout,
        max_epochs: a.epochs,
        seed: a.seed,
        task: a.task.into(),
        target_metric: a.target_metric,
        ..TrainConfig::default()
    };
    let mut m = manifest_for("train", raw, a.seed, a)?;
    m.add_input(&train_path)?;
    m.add_input(&valid_path)?;
    let log = with_suffix(&a.out, ".log.csv");
    match a.kind {
        ModelKind::Planner => {
            let tok = Tokenizer::from_corpus(&train_c, usize::MAX);
            let cfg = PlannerConfig {
                context: ContextConfig { d_ctx: a.d_ctx, radius: a.radius, use_flags: true },
                n_layers: a.layers,
                n_heads: a.heads,
                ffn_dim: a.ffn,
                dropout: a.dropout,
                ..PlannerConfig::default()
            };
            let mut planner = PlannerModel::new(cfg, tok, a.seed)?;
            let report = train_planner(&mut planner, &train_c, &valid_c, &tc)?;
            planner.save(&a.out)?;
            let mut w = csv::Writer::from_path(&log)?;
            for e in &report.epochs {
                w.serialize(e)?;
            }
            w.flush()?;
        }
        ModelKind::Simplifier => {
            let tok = Tokenizer::from_corpus(&train_c, a.max_len);
            let mut model = Seq2SeqModel::new(model_config(a), tok.clone(), a.seed)?;
            let g: Granularity = a.granularity.into();
            let mut train_pairs = make_training_pairs(&train_c, g, tc.task, &tok)?;
            let mut valid_pairs = make_training_pairs(&valid_c, g, tc.task, &tok)?;
            if a.context.on() {
                if g != Granularity::Sentence {
                    return Err(Error::Config("context models train on sentences".into()));
                }
                let enc = match &a.context_encoder {
                    Some(p) => {
                        m.add_input(p)?;
                        PlannerModel::load(p)?.encoder().clone()
                    }
                    None => ContextEncoder::new(
                        ContextConfig { d_ctx: a.d_ctx, radius: a.radius, use_flags: true },
                        tok.clone(),
                        a.seed ^ 0xC0_17E7,
                    ),
                };
                let r = enc.config().radius;
                attach_context(&mut train_pairs, &train_c, &enc, r, a.dynamic.on(), false)?;
                attach_context(&mut valid_pairs, &valid_c, &enc, r, a.dynamic.on(), false)?;
                model.set_context_encoder(enc)?;
            }
            let gen = GenConfig::greedy();
            let metric = |mm: &Seq2SeqModel| exact_match(mm, &valid_pairs, &gen);
            let metric_ref: Option<&dyn Fn(&Seq2SeqModel) -> Result<f64>> =
                if a.target_metric.is_some() && !valid_pairs.is_empty() { Some(&metric) } else { None };
            let report = train(&mut model, &train_pairs, &valid_pairs, &tc, metric_ref)?;
            model.save(&a.out)?;
            write_log(&log, &report.epochs)?;
        }
    }
    m.add_output(&a.out)?;
    m.add_output(&log)?;
    m.write(&with_suffix(&a.out, ".manifest.json"))
}

pub fn cmd_plan(a: &PlanArgs, raw: &[String]) -> Result<()> {
    let (corpus, path) = load_split(&a.corpus, a.split)?;
    let planner = PlannerModel::load(&a.planner)?;
    let mut m = manifest_for("plan", raw, a.seed, a)?;
    m.add_input(&path)?;
    m.add_input(&a.planner)?;
    let model = match (&a.model, a.realizer) {
        (Some(p), RealizerArg::Model) => {
            m.add_input(p)?;
            Some(Seq2SeqModel::load(p)?)
        }
        (None, RealizerArg::Model) => return Err(Error::Usage("--realizer model needs --model".into())),
        _ => None,
    };
    let mode = if a.dynamic.on() { PlanMode::Dynamic } else { PlanMode::Static };
    let model_realizer = model.as_ref().map(|model| ModelRealizer { model, gen: GenConfig::greedy() });
    let realizer: &dyn Realizer = match &model_realizer {
        Some(r) => r,
        None => &RuleSimplifier,
    };
    let mut plans = Vec::with_capacity(corpus.len());
    for pair in &corpus.pairs {
        let level = a.level.unwrap_or(pair.target_level());
        plans.push((pair.doc_id().to_string(), planner.plan_document(&pair.complex, level, mode, Some(realizer))?));
    }
    let mut w = create(&a.out)?;
    write_plans(&mut w, plans.iter().map(|(id, p)| (id.as_str(), p)))?;
    w.flush()?;
    drop(w);
    m.add_output(&a.out)?;
    m.write(&with_suffix(&a.out, ".manifest.json"))
}

/// Applies a `--strategy` shorthand on top of explicit flags.
pub fn apply_strategy_name(name: &str, run: &mut RunFlags) -> Result<()> {
    match name {
        "sentence" | "sent" => run.granularity = GranularityArg::Sent,
        "paragraph" | "para" => run.granularity = GranularityArg::Para,
        "document" | "doc" => run.granularity = GranularityArg::Doc,
        "context" => {
            run.granularity = GranularityArg::Sent;
            run.context = Switch::On;
        }
        "pipeline" => {
            if run.plan == PlanArg::None {
                run.plan = PlanArg::Predicted;
            }
        }
        _ => return Err(Error::Usage(format!("unknown strategy {name:?}"))),
    }
    Ok(())
}

/// Simplifies every document of `corpus`, step-batched across documents.
pub fn simplify_corpus(
    corpus: &AlignedCorpus,
    models: &Models<'_>,
    strategy: &Strategy,
    gen: &GenConfig,
    level: Option<u8>,
    batch: usize,
) -> Result<Vec<SimplifiedDoc>> {
    let inputs: Vec<DocInput<'_>> = corpus
        .pairs
        .iter()
        .map(|p| DocInput { doc: &p.complex, level: level.unwrap_or(p.target_level()), oracle: Some(&p.ops) })
        .collect();
    run_batched(&inputs, strategy, models, gen, batch)
}

pub fn cmd_simplify(a: &SimplifyArgs, raw: &[String]) -> Result<()> {
    let mut run = a.run.clone();
    if let Some(s) = &a.strategy {
        apply_strategy_name(s, &mut run)?;
    }
    let strategy = run.strategy();
    strategy.validate()?;
    let (corpus, path) = load_split(&a.corpus, a.split)?;
    let mut m = manifest_for("simplify", raw, a.seed, a)?;
    m.add_input(&path)?;
    m.add_input(&a.model)?;
    let model = Seq2SeqModel::load(&a.model)?;
    let planner = match &a.planner {
        Some(p) => {
            m.add_input(p)?;
            Some(PlannerModel::load(p)?)
        }
        None => None,
    };
    let models = Models { simplifier: &model, planner: planner.as_ref() };
    let docs = simplify_corpus(&corpus, &models, &strategy, &run.gen(), run.level, run.batch)?;
    let mut w = create(&a.out)?;
    write_outputs(&mut w, &docs)?;
    w.flush()?;
    drop(w);
    m.add_output(&a.out)?;
    m.write(&with_suffix(&a.out, ".manifest.json"))
}

pub fn cmd_evaluate(a: &EvaluateArgs, raw: &[String]) -> Result<()> {
    let (corpus, path) = load_split(&a.corpus, a.split)?;
    let mode: SariMode = a.sari_mode.parse()?;
    let mut m = manifest_for("evaluate", raw, a.seed, a)?;
    m.add_input(&path)?;
    let sources: Vec<String> = corpus.pairs.iter().map(|p| p.complex.sentences.join(" ")).collect();
    let references: Vec<Vec<String>> = corpus.pairs.iter().map(|p| vec![p.simple.sentences.join(" ")]).collect();
    let mut reports = Vec::new();
    for spec in &a.systems {
        let (name, target) =
            spec.split_once('=').ok_or_else(|| Error::Usage(format!("--system {spec:?} is not name=path")))?;
        let outputs: Vec<Vec<String>> = match target {
            "references" => corpus.pairs.iter().map(|p| p.simple.sentences.clone()).collect(),
            "source" => corpus.pairs.iter().map(|p| p.complex.sentences.clone()).collect(),
            file => {
                let p = Path::new(file);
                m.add_input(p)?;
                let docs = crate::pipeline::read_outputs(BufReader::new(fs::File::open(p)?))?;
                align_outputs(&corpus, docs)?
            }
        };
        reports.push(evaluate(name, &sources, &outputs, &references, mode)?);
    }
    write_report(&a.out, &reports)?;
    m.add_output(&a.out)?;
    m.write(&with_suffix(&a.out, ".manifest.json"))
}

/// Orders output records to match the corpus documents.
pub fn align_outputs(corpus: &AlignedCorpus, docs: Vec<SimplifiedDoc>) -> Result<Vec<Vec<String>>> {
    let mut by_id: std::collections::BTreeMap<String, Vec<String>> =
        docs.into_iter().map(|d| (d.doc_id, d.output)).collect();
    corpus
        .pairs
        .iter()
        .map(|p| {
            by_id
                .remove(p.doc_id())
                .ok_or_else(|| Error::Metrics(format!("no output for document {}", p.doc_id())))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn usage_errors_exit_with_2() {
        assert_eq!(main_with(["docsimp", "simplify", "--granularity", "chapter"]), 2);
        assert_eq!(main_with(["docsimp", "frobnicate"]), 2);
    }

    #[test]
    fn strategy_shorthands() {
        let mut run = RunFlags {
            granularity: GranularityArg::Sent,
            context: Switch::Off,
            plan: PlanArg::Oracle,
            dynamic: Switch::On,
            beam: 1,
            max_len: 16,
            level: None,
            batch: 16,
        };
        apply_strategy_name("pipeline", &mut run).unwrap();
        assert_eq!(run.plan, PlanArg::Oracle);
        apply_strategy_name("context", &mut run).unwrap();
        assert!(run.strategy().use_context);
        assert!(apply_strategy_name("chapter", &mut run).is_err());
    }
}
