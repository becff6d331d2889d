use std::time::Instant;

use serde::Serialize;

use super::{apply_strategy_name, load_split, simplify_corpus, with_suffix, BenchArgs, GranularityArg, PlanArg, RunFlags, Switch};
use crate::error::{Error, Result};
use crate::pipeline::{Models, PlanSource};
use crate::planner::PlannerModel;
use crate::seq2seq::Seq2SeqModel;
use std::path::PathBuf;

/// One benchmarked system.
#[derive(Clone, Debug, PartialEq)]
pub struct SystemSpec {
    pub name: String,
    pub model: PathBuf,
    pub planner: Option<PathBuf>,
    pub run: RunFlags,
}

fn switch(v: &str) -> Result<Switch> {
    match v {
        "on" => Ok(Switch::On),
        "off" => Ok(Switch::Off),
        _ => Err(Error::Usage(format!("expected on or off, got {v:?}"))),
    }
}

impl SystemSpec {
    /// Parses `name=..,model=..[,planner=..][,strategy=..][,granularity=..]
    /// [,context=..][,plan=..][,dynamic=..]` on top of `defaults`.
    pub fn parse(spec: &str, defaults: &RunFlags) -> Result<Self> {
        let mut run = defaults.clone();
        let (mut name, mut model, mut planner) = (None, None, None);
        for field in spec.split(',') {
            let (k, v) = field
                .split_once('=')
                .ok_or_else(|| Error::Usage(format!("system field {field:?} is not key=value")))?;
            match k {
                "name" => name = Some(v.to_string()),
                "model" => model = Some(PathBuf::from(v)),
                "planner" => planner = Some(PathBuf::from(v)),
                "strategy" => apply_strategy_name(v, &mut run)?,
                "granularity" => {
                    run.granularity = match v {
                        "sent" => GranularityArg::Sent,
                        "para" => GranularityArg::Para,
                        "doc" => GranularityArg::Doc,
                        _ => return Err(Error::Usage(format!("unknown granularity {v:?}"))),
                    }
                }
                "context" => run.context = switch(v)?,
                "dynamic" => run.dynamic = switch(v)?,
                "plan" => {
                    run.plan = match v {
                        "none" => PlanArg::None,
                        "predicted" => PlanArg::Predicted,
                        "oracle" => PlanArg::Oracle,
                        _ => return Err(Error::Usage(format!("unknown plan source {v:?}"))),
                    }
                }
                _ => return Err(Error::Usage(format!("unknown system key {k:?}"))),
            }
        }
        let model = model.ok_or_else(|| Error::Usage(format!("system {spec:?} has no model")))?;
        let name = name.unwrap_or_else(|| model.display().to_string());
        Ok(SystemSpec { name, model, planner, run })
    }
}

/// One line of the timing CSV.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BenchRow {
    pub system: String,
    pub ms_per_sentence: f64,
    /// Planner plus simplifier parameters.
    pub params: usize,
    /// `planner+simplifier`, or the simplifier count alone.
    pub params_detail: String,
    pub sentences: usize,
    pub repetitions: usize,
}

pub fn cmd_bench(a: &BenchArgs, raw: &[String]) -> Result<()> {
    if a.repetitions == 0 {
        return Err(Error::Usage("--repetitions must be at least 1".into()));
    }
    let (corpus, path) = load_split(&a.corpus, a.split)?;
    let mut m = super::manifest_for("bench", raw, a.seed, a)?;
    m.deterministic = false;
    m.add_input(&path)?;
    let sentences = corpus.num_sentences();
    let warm = crate::corpus::AlignedCorpus {
        pairs: corpus.pairs.iter().take(a.run.batch.max(1)).cloned().collect(),
        split_tag: corpus.split_tag,
    };
    let mut rows = Vec::new();
    for spec in &a.systems {
        let sys = SystemSpec::parse(spec, &a.run)?;
        if !sys.model.exists() {
            return Err(Error::Usage(format!("missing checkpoint {}", sys.model.display())));
        }
        m.add_input(&sys.model)?;
        let model = Seq2SeqModel::load(&sys.model)?;
        let planner = match &sys.planner {
            Some(p) => {
                m.add_input(p)?;
                Some(PlannerModel::load(p)?)
            }
            None => None,
        };
        let strategy = sys.run.strategy();
        let models = Models { simplifier: &model, planner: planner.as_ref() };
        let gen = sys.run.gen();
        simplify_corpus(&warm, &models, &strategy, &gen, sys.run.level, sys.run.batch)?;
        let start = Instant::now();
        for _ in 0..a.repetitions {
            simplify_corpus(&corpus, &models, &strategy, &gen, sys.run.level, sys.run.batch)?;
        }
        let ms = start.elapsed().as_secs_f64() * 1000.0;
        let simp = model.count_params();
        let (params, params_detail) = match (&planner, strategy.plan_source) {
            (Some(p), PlanSource::Predicted) => (p.count_params() + simp, format!("{}+{simp}", p.count_params())),
            _ => (simp, simp.to_string()),
        };
        rows.push(BenchRow {
            system: sys.name.clone(),
            ms_per_sentence: ms / (a.repetitions * sentences.max(1)) as f64,
            params,
            params_detail,
            sentences,
            repetitions: a.repetitions,
        });
    }
    let mut w = csv::Writer::from_path(&a.out)?;
    for r in &rows {
        w.serialize(r)?;
    }
    w.flush()?;
    drop(w);
    m.add_output(&a.out)?;
    m.write(&with_suffix(&a.out, ".manifest.json"))
}
