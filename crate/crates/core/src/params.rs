//! Named parameter tensors, gradient buffers, the Adam optimizer and the
//! binary checkpoint container shared by every trainable component.
//!
//! Parameters are held as `f64` for computation but are always exactly
//! representable as `f32`: initializers and optimizer updates round through
//! `f32`. Checkpoints store `f32`, so a save/load cycle is lossless.

use std::collections::{BTreeMap, HashMap};
use std::io::{Read, Write};
use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq)]
pub struct ParamSet {
    tag: String,
    names: Vec<String>,
    tensors: Vec<Tensor>,
    index: HashMap<String, usize>,
}

impl ParamSet {
    pub fn new(tag: &str) -> Self {
        ParamSet { tag: tag.to_string(), names: Vec::new(), tensors: Vec::new(), index: HashMap::new() }
    }

    pub fn tag(&self) -> &str {
        &self.tag
    }

    /// Registers a tensor under `name` and returns its index.
    pub fn insert(&mut self, name: &str, t: Tensor) -> usize {
        assert!(!self.index.contains_key(name), "duplicate parameter {name}");
        self.names.push(name.to_string());
        self.tensors.push(t);
        self.index.insert(name.to_string(), self.tensors.len() - 1);
        self.tensors.len() - 1
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn tensor(&self, i: usize) -> &Tensor {
        &self.tensors[i]
    }

    pub fn tensor_mut(&mut self, i: usize) -> &mut Tensor {
        &mut self.tensors[i]
    }

    pub fn name(&self, i: usize) -> &str {
        &self.names[i]
    }

    pub fn lookup(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.lookup(name).map(|i| &self.tensors[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(String::as_str).zip(&self.tensors)
    }

    /// Total number of scalar parameters.
    pub fn count(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    /// Replaces tensor values by name; shapes must match.
    pub fn assign_from(&mut self, tensors: &BTreeMap<String, Tensor>) -> Result<()> {
        for (i, name) in self.names.iter().enumerate() {
            let src = tensors
                .get(name)
                .ok_or_else(|| Error::Checkpoint(format!("missing tensor {name}")))?;
            if src.shape() != self.tensors[i].shape() {
                return Err(Error::Checkpoint(format!(
                    "tensor {name} has shape {:?}, expected {:?}",
                    src.shape(),
                    self.tensors[i].shape()
                )));
            }
            self.tensors[i] = src.clone();
        }
        Ok(())
    }
}

/// Rounds to the nearest `f32` so parameters survive checkpointing unchanged.
#[inline]
pub fn round_f32(v: f64) -> f64 {
    v as f32 as f64
}

pub fn normal_tensor(rng: &mut ChaCha8Rng, rows: usize, cols: usize, std: f64) -> Tensor {
    let dist = Normal::new(0.0, std).expect("finite std");
    let data = (0..rows * cols).map(|_| round_f32(dist.sample(rng))).collect();
    Tensor::from_vec(rows, cols, data)
}

pub fn ones(rows: usize, cols: usize) -> Tensor {
    Tensor::from_vec(rows, cols, vec![1.0; rows * cols])
}

/// Uniform draw in `[-bound, bound]`, used by tests for perturbing weights.
pub fn uniform_tensor(rng: &mut ChaCha8Rng, rows: usize, cols: usize, bound: f64) -> Tensor {
    let data = (0..rows * cols).map(|_| round_f32(rng.random_range(-bound..=bound))).collect();
    Tensor::from_vec(rows, cols, data)
}

#[derive(Clone, Debug)]
pub struct GradStore {
    grads: Vec<Tensor>,
}

impl GradStore {
    pub fn zeros_like(set: &ParamSet) -> Self {
        GradStore { grads: set.tensors.iter().map(|t| Tensor::zeros(t.rows, t.cols)).collect() }
    }

    pub fn accumulate(&mut self, i: usize, g: &Tensor) {
        self.grads[i].add_assign(g);
    }

    pub fn grad(&self, i: usize) -> &Tensor {
        &self.grads[i]
    }

    pub fn add(&mut self, other: &GradStore) {
        for (a, b) in self.grads.iter_mut().zip(&other.grads) {
            a.add_assign(b);
        }
    }

    pub fn scale(&mut self, s: f64) {
        for g in &mut self.grads {
            g.data.iter_mut().for_each(|v| *v *= s);
        }
    }

    pub fn all_finite(&self) -> bool {
        self.grads.iter().all(Tensor::all_finite)
    }
}

/// Gradients produced by one backward pass, keyed by parameter-set tag.
#[derive(Debug, Default)]
pub struct Gradients {
    entries: Vec<(String, GradStore)>,
}

impl Gradients {
    pub fn new(entries: Vec<(String, GradStore)>) -> Self {
        Gradients { entries }
    }

    pub fn get(&self, tag: &str) -> Option<&GradStore> {
        self.entries.iter().find(|(t, _)| t == tag).map(|(_, g)| g)
    }

    pub fn take(&mut self, tag: &str) -> Option<GradStore> {
        let pos = self.entries.iter().position(|(t, _)| t == tag)?;
        Some(self.entries.swap_remove(pos).1)
    }
}

/// Adam with bias correction and no weight decay.
#[derive(Clone, Debug)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(set: &ParamSet, lr: f64) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: set.tensors.iter().map(|t| vec![0.0; t.len()]).collect(),
            v: set.tensors.iter().map(|t| vec![0.0; t.len()]).collect(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, set: &mut ParamSet, grads: &GradStore) {
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        for (i, t) in set.tensors.iter_mut().enumerate() {
            let g = &grads.grads[i].data;
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            for j in 0..t.data.len() {
                m[j] = self.beta1 * m[j] + (1.0 - self.beta1) * g[j];
                v[j] = self.beta2 * v[j] + (1.0 - self.beta2) * g[j] * g[j];
                let update = self.lr * (m[j] / bc1) / ((v[j] / bc2).sqrt() + self.eps);
                t.data[j] = round_f32(t.data[j] - update);
            }
        }
    }
}

const MAGIC: &[u8; 4] = b"DSCK";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Decoded checkpoint: header key/values plus named tensors.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Checkpoint {
    pub header: BTreeMap<String, String>,
    pub tensors: BTreeMap<String, Tensor>,
}

impl Checkpoint {
    pub fn header_value(&self, key: &str) -> Result<&str> {
        self.header
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| Error::Checkpoint(format!("header key {key} missing")))
    }

    pub fn header_parse<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        let raw = self.header_value(key)?;
        raw.parse()
            .map_err(|_| Error::Checkpoint(format!("header key {key} has invalid value {raw:?}")))
    }

    /// Copies every tensor of `set` into the checkpoint under `prefix`.
    pub fn add_set(&mut self, prefix: &str, set: &ParamSet) {
        for (name, t) in set.iter() {
            self.tensors.insert(format!("{prefix}{name}"), t.clone());
        }
    }

    /// Loads tensors named `prefix*` into `set`.
    pub fn fill_set(&self, prefix: &str, set: &mut ParamSet) -> Result<()> {
        let scoped: BTreeMap<String, Tensor> = self
            .tensors
            .iter()
            .filter_map(|(k, v)| k.strip_prefix(prefix).map(|s| (s.to_string(), v.clone())))
            .collect();
        set.assign_from(&scoped)
    }

    /// Layout: magic, version (u32), header entry count (u32) followed by
    /// length-prefixed key/value strings, tensor count (u32) followed by
    /// (name, rank, dims, row-major little-endian f32 data). All integers
    /// are little-endian u32.
    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        w.write_all(MAGIC)?;
        put_u32(w, CHECKPOINT_VERSION)?;
        put_u32(w, self.header.len() as u32)?;
        for (k, v) in &self.header {
            put_str(w, k)?;
            put_str(w, v)?;
        }
        put_u32(w, self.tensors.len() as u32)?;
        for (name, t) in &self.tensors {
            put_str(w, name)?;
            put_u32(w, 2)?;
            put_u32(w, t.rows as u32)?;
            put_u32(w, t.cols as u32)?;
            let mut buf = Vec::with_capacity(t.len() * 4);
            for &v in &t.data {
                buf.extend_from_slice(&(v as f32).to_le_bytes());
            }
            w.write_all(&buf)?;
        }
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Checkpoint("not a checkpoint file".into()));
        }
        let version = get_u32(r)?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "checkpoint format version {version}, expected {CHECKPOINT_VERSION}"
            )));
        }
        let mut ck = Checkpoint::default();
        for _ in 0..get_u32(r)? {
            let k = get_str(r)?;
            let v = get_str(r)?;
            ck.header.insert(k, v);
        }
        for _ in 0..get_u32(r)? {
            let name = get_str(r)?;
            let rank = get_u32(r)? as usize;
            let dims: Vec<usize> = (0..rank).map(|_| get_u32(r).map(|d| d as usize)).collect::<Result<_>>()?;
            let (rows, cols) = match dims.as_slice() {
                [n] => (1, *n),
                [a, b] => (*a, *b),
                _ => return Err(Error::Checkpoint(format!("tensor {name} has unsupported rank {rank}"))),
            };
            let mut buf = vec![0u8; rows * cols * 4];
            r.read_exact(&mut buf)?;
            let data = buf
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
                .collect();
            ck.tensors.insert(name, Tensor::from_vec(rows, cols, data));
        }
        Ok(ck)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_to(&mut f)?;
        f.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut f = std::io::BufReader::new(std::fs::File::open(path)?);
        Self::read_from(&mut f)
    }
}

fn put_u32(w: &mut impl Write, v: u32) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn put_str(w: &mut impl Write, s: &str) -> Result<()> {
    put_u32(w, s.len() as u32)?;
    w.write_all(s.as_bytes())?;
    Ok(())
}

fn get_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn get_str(r: &mut impl Read) -> Result<String> {
    let n = get_u32(r)? as usize;
    let mut b = vec![0u8; n];
    r.read_exact(&mut b)?;
    String::from_utf8(b).map_err(|_| Error::Checkpoint("non-UTF-8 string in checkpoint".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn checkpoint_round_trip_is_lossless() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut ck = Checkpoint::default();
        ck.header.insert("d_model".into(), "8".into());
        ck.tensors.insert("w".into(), normal_tensor(&mut rng, 3, 4, 0.7));
        let mut buf = Vec::new();
        ck.write_to(&mut buf).unwrap();
        let back = Checkpoint::read_from(&mut buf.as_slice()).unwrap();
        assert_eq!(ck, back);
    }

    #[test]
    fn version_mismatch_is_rejected() {
        let mut buf = Vec::new();
        Checkpoint::default().write_to(&mut buf).unwrap();
        buf[4] = 99;
        let err = Checkpoint::read_from(&mut buf.as_slice()).unwrap_err();
        assert!(err.to_string().contains("version 99"));
    }

    #[test]
    fn adam_keeps_values_f32_representable() {
        let mut set = ParamSet::new("p");
        set.insert("w", Tensor::row_vector(vec![0.1f32 as f64, -0.3f32 as f64]));
        let mut opt = Adam::new(&set, 1e-3);
        let mut g = GradStore::zeros_like(&set);
        g.accumulate(0, &Tensor::row_vector(vec![0.5, -1.5]));
        opt.step(&mut set, &g);
        for &v in &set.tensor(0).data {
            assert_eq!(v, v as f32 as f64);
        }
        assert!(set.tensor(0).data[0] < 0.1f32 as f64);
    }
}
