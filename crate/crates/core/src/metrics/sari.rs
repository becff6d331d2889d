use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use super::{ngrams, tokenize};
use crate::error::{Error, Result};

pub const MAX_ORDER: usize = 4;

/// SARI and its components, all on a 0..100 scale.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct SariScore {
    pub sari: f64,
    pub add: f64,
    pub keep: f64,
    pub delete: f64,
    /// `[add, keep, delete]` for n = 1..4, on a 0..1 scale.
    pub per_n: [[f64; 3]; MAX_ORDER],
}

impl SariScore {
    fn from_per_n(per_n: [[f64; 3]; MAX_ORDER]) -> Self {
        let mean = |c: usize| 100.0 * per_n.iter().map(|r| r[c]).sum::<f64>() / MAX_ORDER as f64;
        let (add, keep, delete) = (mean(0), mean(1), mean(2));
        SariScore { sari: (add + keep + delete) / 3.0, add, keep, delete, per_n }
    }
}

/// How a corpus of units is scored.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum SariMode {
    /// Score each unit and average the scores.
    MeanOfUnits,
    /// Pool the n-gram statistics of all units (n-grams never cross units)
    /// and score once.
    #[default]
    PooledCounts,
}

impl fmt::Display for SariMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SariMode::MeanOfUnits => "mean",
            SariMode::PooledCounts => "pooled",
        })
    }
}

impl FromStr for SariMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean" => Ok(SariMode::MeanOfUnits),
            "pooled" => Ok(SariMode::PooledCounts),
            _ => Err(Error::Metrics(format!("unknown sari mode {s:?}"))),
        }
    }
}

type Key<'a> = (usize, &'a [String]);

#[derive(Default)]
struct Counts<'a> {
    /// Source and output counts are multiplied by the unit's reference count.
    src: BTreeMap<Key<'a>, f64>,
    out: BTreeMap<Key<'a>, f64>,
    refs: BTreeMap<Key<'a>, f64>,
}

struct Unit {
    src: Vec<String>,
    out: Vec<String>,
    refs: Vec<Vec<String>>,
}

fn counts<'a>(units: &'a [Unit], n: usize) -> Counts<'a> {
    let mut c = Counts::default();
    for (u, unit) in units.iter().enumerate() {
        let nr = unit.refs.len() as f64;
        for g in ngrams(&unit.src, n) {
            *c.src.entry((u, g)).or_default() += nr;
        }
        for g in ngrams(&unit.out, n) {
            *c.out.entry((u, g)).or_default() += nr;
        }
        for r in &unit.refs {
            for g in ngrams(r, n) {
                *c.refs.entry((u, g)).or_default() += 1.0;
            }
        }
    }
    c
}

fn get(m: &BTreeMap<Key<'_>, f64>, k: &Key<'_>) -> f64 {
    m.get(k).copied().unwrap_or(0.0)
}

fn f1(p: f64, r: f64) -> f64 {
    if p + r > 0.0 {
        2.0 * p * r / (p + r)
    } else {
        0.0
    }
}

fn keep_score(c: &Counts<'_>) -> f64 {
    let mut cand = Vec::new();
    let mut all = Vec::new();
    for (k, &s) in &c.src {
        let kept = s.min(get(&c.out, k));
        let avail = s.min(get(&c.refs, k));
        let good = kept.min(get(&c.refs, k));
        if kept > 0.0 {
            cand.push(good / kept);
        }
        if avail > 0.0 {
            all.push(good / avail);
        }
    }
    match (cand.is_empty(), all.is_empty()) {
        (true, true) => 1.0,
        (true, false) => 0.0,
        _ => {
            let p = cand.iter().sum::<f64>() / cand.len() as f64;
            let r = if all.is_empty() { 0.0 } else { all.iter().sum::<f64>() / all.len() as f64 };
            f1(p, r)
        }
    }
}

fn delete_score(c: &Counts<'_>) -> f64 {
    let mut cand = Vec::new();
    let mut any_ref = false;
    for (k, &s) in &c.src {
        let removed = (s - get(&c.out, k)).max(0.0);
        let good = (removed - get(&c.refs, k)).max(0.0);
        if removed > 0.0 {
            cand.push(good / removed);
        }
        any_ref |= s - get(&c.refs, k) > 0.0;
    }
    match (cand.is_empty(), any_ref) {
        (true, false) => 1.0,
        (true, true) => 0.0,
        _ => cand.iter().sum::<f64>() / cand.len() as f64,
    }
}

fn add_score(c: &Counts<'_>) -> f64 {
    let added: BTreeSet<&Key<'_>> = c.out.keys().filter(|k| !c.src.contains_key(*k)).collect();
    let wanted: BTreeSet<&Key<'_>> = c.refs.keys().filter(|k| !c.src.contains_key(*k)).collect();
    match (added.is_empty(), wanted.is_empty()) {
        (true, true) => 1.0,
        (true, false) => 0.0,
        _ => {
            let good = added.intersection(&wanted).count() as f64;
            let r = if wanted.is_empty() { 0.0 } else { good / wanted.len() as f64 };
            f1(good / added.len() as f64, r)
        }
    }
}

fn score_units(units: &[Unit]) -> SariScore {
    let mut per_n = [[0.0; 3]; MAX_ORDER];
    for (i, row) in per_n.iter_mut().enumerate() {
        let c = counts(units, i + 1);
        *row = [add_score(&c), keep_score(&c), delete_score(&c)];
    }
    SariScore::from_per_n(per_n)
}

fn unit(source: &str, output: &str, references: &[impl AsRef<str>]) -> Result<Unit> {
    if references.is_empty() {
        return Err(Error::Metrics("sari needs at least one reference".into()));
    }
    Ok(Unit {
        src: tokenize(source),
        out: tokenize(output),
        refs: references.iter().map(|r| tokenize(r.as_ref())).collect(),
    })
}

/// SARI of one output against its source and references.
pub fn sari(source: &str, output: &str, references: &[impl AsRef<str>]) -> Result<SariScore> {
    Ok(score_units(&[unit(source, output, references)?]))
}

/// SARI over pre-tokenized input.
pub fn sari_tokens(source: &[String], output: &[String], references: &[Vec<String>]) -> Result<SariScore> {
    if references.is_empty() {
        return Err(Error::Metrics("sari needs at least one reference".into()));
    }
    Ok(score_units(&[Unit { src: source.to_vec(), out: output.to_vec(), refs: references.to_vec() }]))
}

/// SARI over aligned units.
pub fn corpus_sari(
    sources: &[impl AsRef<str>],
    outputs: &[impl AsRef<str>],
    references: &[Vec<String>],
    mode: SariMode,
) -> Result<SariScore> {
    if sources.len() != outputs.len() || sources.len() != references.len() {
        return Err(Error::Metrics(format!(
            "{} sources, {} outputs and {} reference lists",
            sources.len(),
            outputs.len(),
            references.len()
        )));
    }
    if sources.is_empty() {
        return Err(Error::Metrics("no units to score".into()));
    }
    let units: Vec<Unit> = sources
        .iter()
        .zip(outputs)
        .zip(references)
        .map(|((s, o), r)| unit(s.as_ref(), o.as_ref(), r))
        .collect::<Result<_>>()?;
    Ok(match mode {
        SariMode::PooledCounts => score_units(&units),
        SariMode::MeanOfUnits => {
            let scores: Vec<SariScore> = units.chunks(1).map(score_units).collect();
            let mut per_n = [[0.0; 3]; MAX_ORDER];
            for s in &scores {
                for (row, r) in per_n.iter_mut().zip(&s.per_n) {
                    for c in 0..3 {
                        row[c] += r[c] / scores.len() as f64;
                    }
                }
            }
            SariScore::from_per_n(per_n)
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matching_the_sole_reference_scores_100() {
        let s = sari("the cat sat", "a cat sat down", &["a cat sat down"]).unwrap();
        assert_eq!((s.add, s.keep, s.delete, s.sari), (100.0, 100.0, 100.0, 100.0));
        let s = sari("the cat sat .", "the cat sat .", &["the cat sat ."]).unwrap();
        assert_eq!(s.sari, 100.0);
    }

    #[test]
    fn copying_when_the_reference_deletes_loses_delete_credit() {
        let s = sari("the old cat sat", "the old cat sat", &["the cat sat"]).unwrap();
        assert_eq!(s.delete, 0.0);
        assert!(s.keep > 0.0 && s.keep < 100.0);
        assert!((s.sari - (s.add + s.keep + s.delete) / 3.0).abs() < 1e-9);
    }

    #[test]
    fn empty_references_are_an_error() {
        assert!(sari("a", "a", &[] as &[&str]).is_err());
    }

    #[test]
    fn pooled_and_mean_agree_on_one_unit() {
        let refs = vec![vec!["a b c".to_string(), "a c".to_string()]];
        let p = corpus_sari(&["a b d"], &["a c"], &refs, SariMode::PooledCounts).unwrap();
        let m = corpus_sari(&["a b d"], &["a c"], &refs, SariMode::MeanOfUnits).unwrap();
        assert_eq!(p, m);
        assert_eq!(p, sari("a b d", "a c", &refs[0]).unwrap());
    }
}
