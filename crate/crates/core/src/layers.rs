//! Parameter layout and graph helpers for pre-norm transformer blocks.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autograd::{Graph, NodeId};
use crate::params::{normal_tensor, ones, ParamSet};
use crate::tensor::{AttnMask, Tensor};

const INIT_STD: f64 = 0.02;

/// Indices of a layer norm's gain and bias.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Norm {
    pub gamma: usize,
    pub beta: usize,
}

/// Indices of a multi-head attention sublayer's projections.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Attn {
    pub wq: usize,
    pub bq: usize,
    pub wk: usize,
    pub bk: usize,
    pub wv: usize,
    pub bv: usize,
    pub wo: usize,
    pub bo: usize,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Ffn {
    pub w1: usize,
    pub b1: usize,
    pub w2: usize,
    pub b2: usize,
}

/// Inserts freshly initialized parameters into a set.
pub struct Init<'a> {
    set: &'a mut ParamSet,
    rng: ChaCha8Rng,
}

impl<'a> Init<'a> {
    pub fn new(set: &'a mut ParamSet, seed: u64) -> Self {
        Init { set, rng: ChaCha8Rng::seed_from_u64(seed) }
    }

    /// Continues from a fresh random stream.
    pub fn reseed(&mut self, seed: u64) {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
    }

    pub fn normal(&mut self, name: &str, rows: usize, cols: usize) -> usize {
        let t = normal_tensor(&mut self.rng, rows, cols, INIT_STD);
        self.set.insert(name, t)
    }

    pub fn normal_std(&mut self, name: &str, rows: usize, cols: usize, std: f64) -> usize {
        let t = normal_tensor(&mut self.rng, rows, cols, std);
        self.set.insert(name, t)
    }

    pub fn zeros(&mut self, name: &str, rows: usize, cols: usize) -> usize {
        self.set.insert(name, Tensor::zeros(rows, cols))
    }

    pub fn norm(&mut self, name: &str, d: usize) -> Norm {
        Norm {
            gamma: self.set.insert(&format!("{name}.gamma"), ones(1, d)),
            beta: self.zeros(&format!("{name}.beta"), 1, d),
        }
    }

    /// Attention with queries of width `d` and keys/values read from
    /// inputs of width `kv_in`. `zero_out` starts the output projection at 0.
    pub fn attn(&mut self, name: &str, d: usize, kv_in: usize, zero_out: bool) -> Attn {
        let wq = self.normal(&format!("{name}.wq"), d, d);
        let bq = self.zeros(&format!("{name}.bq"), 1, d);
        let wk = self.normal(&format!("{name}.wk"), kv_in, d);
        let bk = self.zeros(&format!("{name}.bk"), 1, d);
        let wv = self.normal(&format!("{name}.wv"), kv_in, d);
        let bv = self.zeros(&format!("{name}.bv"), 1, d);
        let wo = if zero_out {
            self.zeros(&format!("{name}.wo"), d, d)
        } else {
            self.normal(&format!("{name}.wo"), d, d)
        };
        let bo = self.zeros(&format!("{name}.bo"), 1, d);
        Attn { wq, bq, wk, bk, wv, bv, wo, bo }
    }

    pub fn ffn(&mut self, name: &str, d: usize, f: usize) -> Ffn {
        Ffn {
            w1: self.normal(&format!("{name}.w1"), d, f),
            b1: self.zeros(&format!("{name}.b1"), 1, f),
            w2: self.normal(&format!("{name}.w2"), f, d),
            b2: self.zeros(&format!("{name}.b2"), 1, d),
        }
    }
}

pub fn norm<'a>(g: &mut Graph<'a>, set: &'a ParamSet, x: NodeId, n: Norm) -> NodeId {
    let gamma = g.param(set, n.gamma);
    let beta = g.param(set, n.beta);
    g.layer_norm(x, gamma, beta)
}

pub fn linear<'a>(g: &mut Graph<'a>, set: &'a ParamSet, x: NodeId, w: usize, b: usize) -> NodeId {
    let w = g.param(set, w);
    let b = g.param(set, b);
    g.linear(x, w, b)
}

#[allow(clippy::too_many_arguments)]
pub fn attention<'a>(
    g: &mut Graph<'a>,
    set: &'a ParamSet,
    x: NodeId,
    kv: NodeId,
    a: Attn,
    heads: usize,
    mask: &AttnMask,
) -> NodeId {
    let q = linear(g, set, x, a.wq, a.bq);
    let k = linear(g, set, kv, a.wk, a.bk);
    let v = linear(g, set, kv, a.wv, a.bv);
    let o = g.attention(q, k, v, heads, mask);
    linear(g, set, o, a.wo, a.bo)
}

pub fn feed_forward<'a>(g: &mut Graph<'a>, set: &'a ParamSet, x: NodeId, f: Ffn) -> NodeId {
    let h = linear(g, set, x, f.w1, f.b1);
    let h = g.gelu(h);
    linear(g, set, h, f.w2, f.b2)
}
