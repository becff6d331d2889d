//! Reverse-mode differentiation over a tape of matrix operations.
//!
//! A [`Graph`] records every operation applied during a forward pass. Values of
//! parameter leaves are borrowed from their [`ParamSet`]s; everything else is
//! owned by the graph. [`Graph::backward`] walks the tape in reverse and
//! returns gradients for every parameter group that took part.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::params::{GradStore, Gradients, ParamSet};
use crate::tensor::{self, AttnMask, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

enum Value<'a> {
    Owned(Tensor),
    Borrowed(&'a Tensor),
}

enum Op {
    Leaf,
    Param { group: usize, index: usize },
    MatMul(NodeId, NodeId),
    Add(NodeId, NodeId),
    AddBias(NodeId, NodeId),
    Scale(NodeId, f64),
    Gather { table: NodeId, ids: Vec<usize> },
    LayerNorm { x: NodeId, gamma: NodeId, beta: NodeId, xhat: Tensor, rstd: Vec<f64> },
    Gelu(NodeId),
    Attention { q: NodeId, k: NodeId, v: NodeId, heads: usize, probs: Vec<Tensor> },
    Dropout { x: NodeId, keep: Vec<f64> },
    MeanRows(NodeId),
    MaxRows { x: NodeId, argmax: Vec<usize> },
    Row(NodeId, usize),
    ConcatRows(Vec<NodeId>),
    ConcatCols(Vec<NodeId>),
    CrossEntropy { logits: NodeId, targets: Vec<usize>, weights: Vec<f64>, probs: Tensor },
}

struct Node<'a> {
    value: Value<'a>,
    op: Op,
}

pub struct Graph<'a> {
    nodes: Vec<Node<'a>>,
    groups: Vec<&'a ParamSet>,
    training: bool,
    dropout_rng: Option<ChaCha8Rng>,
}

impl<'a> Default for Graph<'a> {
    fn default() -> Self {
        Self::new()
    }
}

impl<'a> Graph<'a> {
    /// Inference graph: dropout is the identity.
    pub fn new() -> Self {
        Graph { nodes: Vec::new(), groups: Vec::new(), training: false, dropout_rng: None }
    }

    /// Training graph: dropout draws masks from `rng`.
    pub fn training(rng: ChaCha8Rng) -> Self {
        Graph { nodes: Vec::new(), groups: Vec::new(), training: true, dropout_rng: Some(rng) }
    }

    pub fn is_training(&self) -> bool {
        self.training
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op) -> NodeId {
        self.nodes.push(Node { value: Value::Owned(value), op });
        NodeId(self.nodes.len() - 1)
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        match &self.nodes[id.0].value {
            Value::Owned(t) => t,
            Value::Borrowed(t) => t,
        }
    }

    pub fn constant(&mut self, t: Tensor) -> NodeId {
        self.push(t, Op::Leaf)
    }

    pub fn constant_ref(&mut self, t: &'a Tensor) -> NodeId {
        self.nodes.push(Node { value: Value::Borrowed(t), op: Op::Leaf });
        NodeId(self.nodes.len() - 1)
    }

    fn group_index(&mut self, set: &'a ParamSet) -> usize {
        if let Some(pos) = self.groups.iter().position(|g| std::ptr::eq(*g, set)) {
            return pos;
        }
        assert!(
            self.groups.iter().all(|g| g.tag() != set.tag()),
            "two parameter sets tagged {:?} in one graph",
            set.tag()
        );
        self.groups.push(set);
        self.groups.len() - 1
    }

    /// Leaf referencing parameter `index` of `set`; gradients flow back to it.
    pub fn param(&mut self, set: &'a ParamSet, index: usize) -> NodeId {
        let group = self.group_index(set);
        self.nodes.push(Node {
            value: Value::Borrowed(set.tensor(index)),
            op: Op::Param { group, index },
        });
        NodeId(self.nodes.len() - 1)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = tensor::matmul(self.value(a), self.value(b));
        self.push(v, Op::MatMul(a, b))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let mut v = self.value(a).clone();
        v.add_assign(self.value(b));
        self.push(v, Op::Add(a, b))
    }

    pub fn add_bias(&mut self, x: NodeId, bias: NodeId) -> NodeId {
        let v = tensor::add_row_bias(self.value(x), self.value(bias));
        self.push(v, Op::AddBias(x, bias))
    }

    /// `x * w + b`.
    pub fn linear(&mut self, x: NodeId, w: NodeId, b: NodeId) -> NodeId {
        let y = self.matmul(x, w);
        self.add_bias(y, b)
    }

    pub fn scale(&mut self, x: NodeId, s: f64) -> NodeId {
        let mut v = self.value(x).clone();
        v.data.iter_mut().for_each(|e| *e *= s);
        self.push(v, Op::Scale(x, s))
    }

    /// Embedding lookup: row `ids[i]` of `table` becomes output row `i`.
    pub fn gather(&mut self, table: NodeId, ids: &[usize]) -> NodeId {
        let t = self.value(table);
        let mut out = Tensor::zeros(ids.len(), t.cols);
        for (r, &id) in ids.iter().enumerate() {
            out.row_mut(r).copy_from_slice(t.row(id));
        }
        self.push(out, Op::Gather { table, ids: ids.to_vec() })
    }

    pub fn layer_norm(&mut self, x: NodeId, gamma: NodeId, beta: NodeId) -> NodeId {
        let (out, xhat, rstd) =
            tensor::layer_norm(self.value(x), self.value(gamma), self.value(beta));
        self.push(out, Op::LayerNorm { x, gamma, beta, xhat, rstd })
    }

    pub fn gelu(&mut self, x: NodeId) -> NodeId {
        let mut v = self.value(x).clone();
        v.data.iter_mut().for_each(|e| *e = tensor::gelu(*e));
        self.push(v, Op::Gelu(x))
    }

    pub fn attention(
        &mut self,
        q: NodeId,
        k: NodeId,
        v: NodeId,
        heads: usize,
        mask: &AttnMask,
    ) -> NodeId {
        let (out, probs) =
            tensor::multi_head_attention(self.value(q), self.value(k), self.value(v), heads, mask);
        self.push(out, Op::Attention { q, k, v, heads, probs })
    }

    /// Attention probabilities recorded by an attention node.
    pub fn attention_probs(&self, id: NodeId) -> Option<&[Tensor]> {
        match &self.nodes[id.0].op {
            Op::Attention { probs, .. } => Some(probs),
            _ => None,
        }
    }

    /// Inverted dropout; the identity outside training graphs.
    pub fn dropout(&mut self, x: NodeId, p: f64) -> NodeId {
        if !self.training || p <= 0.0 {
            return x;
        }
        let rng = self.dropout_rng.as_mut().expect("training graph carries an rng");
        let n = self.nodes[x.0].value_len();
        let scale = 1.0 / (1.0 - p);
        let keep: Vec<f64> =
            (0..n).map(|_| if rng.random::<f64>() < p { 0.0 } else { scale }).collect();
        let mut v = self.value(x).clone();
        for (e, k) in v.data.iter_mut().zip(&keep) {
            *e *= k;
        }
        self.push(v, Op::Dropout { x, keep })
    }

    pub fn mean_rows(&mut self, x: NodeId) -> NodeId {
        let t = self.value(x);
        let mut out = vec![0.0; t.cols];
        for r in 0..t.rows {
            for (o, v) in out.iter_mut().zip(t.row(r)) {
                *o += v;
            }
        }
        let n = t.rows as f64;
        out.iter_mut().for_each(|o| *o /= n);
        self.push(Tensor::row_vector(out), Op::MeanRows(x))
    }

    /// Column-wise maximum over rows; ties go to the first row.
    pub fn max_rows(&mut self, x: NodeId) -> NodeId {
        let t = self.value(x);
        let mut out = t.row(0).to_vec();
        let mut argmax = vec![0; t.cols];
        for r in 1..t.rows {
            for (c, v) in t.row(r).iter().enumerate() {
                if *v > out[c] {
                    out[c] = *v;
                    argmax[c] = r;
                }
            }
        }
        self.push(Tensor::row_vector(out), Op::MaxRows { x, argmax })
    }

    pub fn row(&mut self, x: NodeId, r: usize) -> NodeId {
        let v = Tensor::row_vector(self.value(x).row(r).to_vec());
        self.push(v, Op::Row(x, r))
    }

    pub fn concat_rows(&mut self, parts: &[NodeId]) -> NodeId {
        let mut out = Tensor::zeros(0, 0);
        for &p in parts {
            out.push_rows(self.value(p));
        }
        self.push(out, Op::ConcatRows(parts.to_vec()))
    }

    pub fn concat_cols(&mut self, parts: &[NodeId]) -> NodeId {
        let rows = self.value(parts[0]).rows;
        let cols: usize = parts.iter().map(|p| self.value(*p).cols).sum();
        let mut out = Tensor::zeros(rows, cols);
        for r in 0..rows {
            let mut off = 0;
            for &p in parts {
                let src = self.value(p);
                assert_eq!(src.rows, rows, "concat_cols row mismatch");
                out.row_mut(r)[off..off + src.cols].copy_from_slice(src.row(r));
                off += src.cols;
            }
        }
        self.push(out, Op::ConcatCols(parts.to_vec()))
    }

    /// Weighted sum of token-level negative log-likelihoods as a `1 x 1` node.
    /// Callers normalize (by token count or total weight) outside the graph.
    pub fn cross_entropy_sum(&mut self, logits: NodeId, targets: &[usize], weights: &[f64]) -> NodeId {
        let l = self.value(logits);
        assert_eq!(l.rows, targets.len(), "one target per logit row");
        assert_eq!(weights.len(), targets.len());
        let mut probs = Tensor::zeros(l.rows, l.cols);
        let mut loss = 0.0;
        for r in 0..l.rows {
            let lsm = tensor::log_softmax(l.row(r));
            loss -= weights[r] * lsm[targets[r]];
            for (p, v) in probs.row_mut(r).iter_mut().zip(&lsm) {
                *p = v.exp();
            }
        }
        self.push(
            Tensor::row_vector(vec![loss]),
            Op::CrossEntropy { logits, targets: targets.to_vec(), weights: weights.to_vec(), probs },
        )
    }

    /// Back-propagates from the scalar node `root` (seeded with `seed`) and
    /// returns the gradients of every parameter set referenced by the graph.
    pub fn backward(&self, root: NodeId, seed: f64) -> Gradients {
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        let rv = self.value(root);
        assert_eq!(rv.len(), 1, "backward root must be scalar");
        grads[root.0] = Some(Tensor::from_vec(rv.rows, rv.cols, vec![seed]));
        let mut stores: Vec<GradStore> = self.groups.iter().map(|g| GradStore::zeros_like(g)).collect();

        for idx in (0..=root.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Leaf => {}
                Op::Param { group, index } => stores[*group].accumulate(*index, &g),
                Op::MatMul(a, b) => {
                    let da = tensor::matmul_bt(&g, self.value(*b));
                    let db = tensor::matmul_at(self.value(*a), &g);
                    acc(&mut grads, *a, da);
                    acc(&mut grads, *b, db);
                }
                Op::Add(a, b) => {
                    acc(&mut grads, *a, g.clone());
                    acc(&mut grads, *b, g);
                }
                Op::AddBias(x, b) => {
                    let mut db = Tensor::zeros(1, g.cols);
                    for r in 0..g.rows {
                        for (d, v) in db.data.iter_mut().zip(g.row(r)) {
                            *d += v;
                        }
                    }
                    acc(&mut grads, *x, g);
                    acc(&mut grads, *b, db);
                }
                Op::Scale(x, s) => {
                    let mut d = g;
                    d.data.iter_mut().for_each(|e| *e *= s);
                    acc(&mut grads, *x, d);
                }
                Op::Gather { table, ids } => {
                    let t = self.value(*table);
                    let mut d = Tensor::zeros(t.rows, t.cols);
                    for (r, &id) in ids.iter().enumerate() {
                        for (o, v) in d.row_mut(id).iter_mut().zip(g.row(r)) {
                            *o += v;
                        }
                    }
                    acc(&mut grads, *table, d);
                }
                Op::LayerNorm { x, gamma, beta, xhat, rstd } => {
                    let gm = self.value(*gamma);
                    let d = g.cols;
                    let mut dx = Tensor::zeros(g.rows, d);
                    let mut dgamma = Tensor::zeros(1, d);
                    let mut dbeta = Tensor::zeros(1, d);
                    let mut dxhat = vec![0.0; d];
                    for r in 0..g.rows {
                        let gr = g.row(r);
                        let xh = xhat.row(r);
                        for c in 0..d {
                            dgamma.data[c] += gr[c] * xh[c];
                            dbeta.data[c] += gr[c];
                            dxhat[c] = gr[c] * gm.data[c];
                        }
                        let mean_d = dxhat.iter().sum::<f64>() / d as f64;
                        let mean_dx = dxhat.iter().zip(xh).map(|(a, b)| a * b).sum::<f64>() / d as f64;
                        let out = dx.row_mut(r);
                        for c in 0..d {
                            out[c] = rstd[r] * (dxhat[c] - mean_d - xh[c] * mean_dx);
                        }
                    }
                    acc(&mut grads, *x, dx);
                    acc(&mut grads, *gamma, dgamma);
                    acc(&mut grads, *beta, dbeta);
                }
                Op::Gelu(x) => {
                    let xv = self.value(*x);
                    let mut d = g;
                    for (e, v) in d.data.iter_mut().zip(&xv.data) {
                        *e *= tensor::gelu_grad(*v);
                    }
                    acc(&mut grads, *x, d);
                }
                Op::Attention { q, k, v, heads, probs } => {
                    let (dq, dk, dv) =
                        attention_backward(self.value(*q), self.value(*k), self.value(*v), *heads, probs, &g);
                    acc(&mut grads, *q, dq);
                    acc(&mut grads, *k, dk);
                    acc(&mut grads, *v, dv);
                }
                Op::Dropout { x, keep } => {
                    let mut d = g;
                    for (e, k) in d.data.iter_mut().zip(keep) {
                        *e *= k;
                    }
                    acc(&mut grads, *x, d);
                }
                Op::MeanRows(x) => {
                    let xv = self.value(*x);
                    let n = xv.rows as f64;
                    let mut d = Tensor::zeros(xv.rows, xv.cols);
                    for r in 0..xv.rows {
                        for (o, v) in d.row_mut(r).iter_mut().zip(&g.data) {
                            *o = v / n;
                        }
                    }
                    acc(&mut grads, *x, d);
                }
                Op::MaxRows { x, argmax } => {
                    let xv = self.value(*x);
                    let mut d = Tensor::zeros(xv.rows, xv.cols);
                    for (c, &r) in argmax.iter().enumerate() {
                        d.row_mut(r)[c] = g.data[c];
                    }
                    acc(&mut grads, *x, d);
                }
                Op::Row(x, r) => {
                    let xv = self.value(*x);
                    let mut d = Tensor::zeros(xv.rows, xv.cols);
                    d.row_mut(*r).copy_from_slice(&g.data);
                    acc(&mut grads, *x, d);
                }
                Op::ConcatRows(parts) => {
                    let mut start = 0;
                    for &p in parts {
                        let pv = self.value(p);
                        let n = pv.len();
                        let d = Tensor::from_vec(pv.rows, pv.cols, g.data[start..start + n].to_vec());
                        start += n;
                        acc(&mut grads, p, d);
                    }
                }
                Op::ConcatCols(parts) => {
                    let mut off = 0;
                    for &p in parts {
                        let pv = self.value(p);
                        let mut d = Tensor::zeros(pv.rows, pv.cols);
                        for r in 0..pv.rows {
                            d.row_mut(r).copy_from_slice(&g.row(r)[off..off + pv.cols]);
                        }
                        off += pv.cols;
                        acc(&mut grads, p, d);
                    }
                }
                Op::CrossEntropy { logits, targets, weights, probs } => {
                    let s = g.data[0];
                    let mut d = probs.clone();
                    for (r, (&t, &w)) in targets.iter().zip(weights).enumerate() {
                        let row = d.row_mut(r);
                        row[t] -= 1.0;
                        row.iter_mut().for_each(|e| *e *= w * s);
                    }
                    acc(&mut grads, *logits, d);
                }
            }
        }
        Gradients::new(self.groups.iter().map(|g| g.tag().to_string()).zip(stores).collect())
    }
}

impl Node<'_> {
    fn value_len(&self) -> usize {
        match &self.value {
            Value::Owned(t) => t.len(),
            Value::Borrowed(t) => t.len(),
        }
    }
}

fn acc(grads: &mut [Option<Tensor>], id: NodeId, d: Tensor) {
    match &mut grads[id.0] {
        Some(g) => g.add_assign(&d),
        slot @ None => *slot = Some(d),
    }
}

fn attention_backward(
    q: &Tensor,
    k: &Tensor,
    v: &Tensor,
    heads: usize,
    probs: &[Tensor],
    g: &Tensor,
) -> (Tensor, Tensor, Tensor) {
    let dh = q.cols / heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let (tq, tk) = (q.rows, k.rows);
    let mut dq = Tensor::zeros(tq, q.cols);
    let mut dk = Tensor::zeros(tk, k.cols);
    let mut dv = Tensor::zeros(tk, v.cols);
    let mut dp = vec![0.0; tk];
    for (h, p) in probs.iter().enumerate() {
        let lo = h * dh;
        let hi = lo + dh;
        for i in 0..tq {
            let gi = &g.row(i)[lo..hi];
            let prow = p.row(i);
            let mut weighted = 0.0;
            for j in 0..tk {
                if prow[j] == 0.0 {
                    dp[j] = 0.0;
                    continue;
                }
                dp[j] = tensor::dot(gi, &v.row(j)[lo..hi]);
                weighted += prow[j] * dp[j];
                let dvr = &mut dv.row_mut(j)[lo..hi];
                for (o, &gv) in dvr.iter_mut().zip(gi) {
                    *o += prow[j] * gv;
                }
            }
            for j in 0..tk {
                if prow[j] == 0.0 {
                    continue;
                }
                let ds = prow[j] * (dp[j] - weighted) * scale;
                let qi = &q.row(i)[lo..hi];
                let kj = &k.row(j)[lo..hi];
                let dqr = &mut dq.row_mut(i)[lo..hi];
                for (o, &kv) in dqr.iter_mut().zip(kj) {
                    *o += ds * kv;
                }
                let dkr = &mut dk.row_mut(j)[lo..hi];
                for (o, &qv) in dkr.iter_mut().zip(qi) {
                    *o += ds * qv;
                }
            }
        }
    }
    (dq, dk, dv)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::ParamSet;
    use rand::SeedableRng;

    fn loss_of(set: &ParamSet, build: &dyn for<'a> Fn(&mut Graph<'a>, &'a ParamSet) -> NodeId) -> f64 {
        let mut g = Graph::new();
        let root = build(&mut g, set);
        g.value(root).data[0]
    }

    fn check(set: ParamSet, build: &dyn for<'a> Fn(&mut Graph<'a>, &'a ParamSet) -> NodeId) {
        let mut g = Graph::new();
        let root = build(&mut g, &set);
        let grads = g.backward(root, 1.0);
        let analytic = grads.get("test").unwrap();
        for pi in 0..set.len() {
            for e in 0..set.tensor(pi).len() {
                let mut plus = set.clone();
                plus.tensor_mut(pi).data[e] += 1e-6;
                let mut minus = set.clone();
                minus.tensor_mut(pi).data[e] -= 1e-6;
                let fd = (loss_of(&plus, build) - loss_of(&minus, build)) / 2e-6;
                let an = analytic.grad(pi).data[e];
                assert!((fd - an).abs() <= 1e-6 * (1.0 + fd.abs()), "param {pi}[{e}]: fd {fd} vs {an}");
            }
        }
    }

    fn random_set(shapes: &[(&str, usize, usize)]) -> ParamSet {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut set = ParamSet::new("test");
        for (name, r, c) in shapes {
            let data = (0..r * c).map(|_| rng.random::<f64>() - 0.5).collect();
            set.insert(name, Tensor::from_vec(*r, *c, data));
        }
        set
    }

    #[test]
    fn attention_layer_norm_gradients() {
        let set = random_set(&[("x", 4, 6), ("gamma", 1, 6), ("beta", 1, 6), ("w", 6, 6), ("kv", 3, 6)]);
        check(set, &|g, s| {
            let x = g.param(s, 0);
            let gm = g.param(s, 1);
            let bt = g.param(s, 2);
            let w = g.param(s, 3);
            let kv = g.param(s, 4);
            let n = g.layer_norm(x, gm, bt);
            let q = g.matmul(n, w);
            let self_att = g.attention(q, n, n, 2, &AttnMask::Causal);
            let cross = g.attention(self_att, kv, kv, 3, &AttnMask::Full);
            let h = g.gelu(cross);
            let r = g.row(h, 1);
            let m = g.mean_rows(h);
            let mx = g.max_rows(h);
            let m = g.add(m, mx);
            let both = g.concat_cols(&[r, m]);
            let stacked = g.concat_rows(&[both, both]);
            let logits = g.scale(stacked, 3.0);
            g.cross_entropy_sum(logits, &[2, 7], &[1.0, 0.5])
        });
    }

    #[test]
    fn gather_and_bias_gradients() {
        let set = random_set(&[("emb", 5, 3), ("b", 1, 3), ("w", 3, 4)]);
        check(set, &|g, s| {
            let e = g.param(s, 0);
            let b = g.param(s, 1);
            let w = g.param(s, 2);
            let x = g.gather(e, &[1, 4, 1]);
            let x2 = g.add(x, x);
            let y = g.add_bias(x2, b);
            let a = g.attention(y, y, y, 1, &AttnMask::Allowed(vec![vec![0, 2], vec![1], vec![0, 1, 2]]));
            let logits = g.matmul(a, w);
            g.cross_entropy_sum(logits, &[0, 3, 1], &[1.0, 1.0, 1.0])
        });
    }

    #[test]
    fn dropout_is_identity_outside_training() {
        let set = random_set(&[("x", 2, 3)]);
        let mut g = Graph::new();
        let x = g.param(&set, 0);
        let y = g.dropout(x, 0.5);
        assert_eq!(x, y);
        let mut t = Graph::training(ChaCha8Rng::seed_from_u64(1));
        let x = t.param(&set, 0);
        let y = t.dropout(x, 0.5);
        assert_ne!(x, y);
    }
}
