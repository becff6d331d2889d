//! Dense row-major matrices and the numeric kernels shared by the training
//! graph and the incremental decoder.
//!
//! Every kernel accumulates each output element in a fixed order that does not
//! depend on how many rows are processed together, so a row computed alone is
//! bit-identical to the same row computed inside a larger matrix.

use std::fmt;

#[derive(Clone, PartialEq)]
pub struct Tensor {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Tensor[{}x{}]", self.rows, self.cols)
    }
}

impl Tensor {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Tensor { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(rows * cols, data.len(), "tensor data does not match shape");
        Tensor { rows, cols, data }
    }

    pub fn row_vector(data: Vec<f64>) -> Self {
        let cols = data.len();
        Tensor { rows: 1, cols, data }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn add_assign(&mut self, other: &Tensor) {
        debug_assert_eq!(self.shape(), other.shape());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += *b;
        }
    }

    /// Appends the rows of `other` below this tensor.
    pub fn push_rows(&mut self, other: &Tensor) {
        if self.rows == 0 {
            self.cols = other.cols;
        }
        assert_eq!(self.cols, other.cols, "column mismatch when stacking rows");
        self.data.extend_from_slice(&other.data);
        self.rows += other.rows;
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// `a (m x k) * b (k x n)`.
pub fn matmul(a: &Tensor, b: &Tensor) -> Tensor {
    assert_eq!(a.cols, b.rows, "matmul inner dimension mismatch");
    let (m, k, n) = (a.rows, a.cols, b.cols);
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let out_row = &mut out[i * n..(i + 1) * n];
        let a_row = &a.data[i * k..(i + 1) * k];
        for (p, &av) in a_row.iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            let b_row = &b.data[p * n..(p + 1) * n];
            for (o, &bv) in out_row.iter_mut().zip(b_row) {
                *o += av * bv;
            }
        }
    }
    Tensor::from_vec(m, n, out)
}

/// `a (m x k) * b^T` where `b` is `n x k`.
pub fn matmul_bt(a: &Tensor, b: &Tensor) -> Tensor {
    assert_eq!(a.cols, b.cols, "matmul_bt inner dimension mismatch");
    let (m, n) = (a.rows, b.rows);
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let a_row = a.row(i);
        for j in 0..n {
            out[i * n + j] = dot(a_row, b.row(j));
        }
    }
    Tensor::from_vec(m, n, out)
}

/// `a^T * b` where `a` is `k x m` and `b` is `k x n`.
pub fn matmul_at(a: &Tensor, b: &Tensor) -> Tensor {
    assert_eq!(a.rows, b.rows, "matmul_at inner dimension mismatch");
    let (m, n) = (a.cols, b.cols);
    let mut out = vec![0.0; m * n];
    for p in 0..a.rows {
        let a_row = a.row(p);
        let b_row = b.row(p);
        for (i, &av) in a_row.iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            let out_row = &mut out[i * n..(i + 1) * n];
            for (o, &bv) in out_row.iter_mut().zip(b_row) {
                *o += av * bv;
            }
        }
    }
    Tensor::from_vec(m, n, out)
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn add_row_bias(x: &Tensor, bias: &Tensor) -> Tensor {
    assert_eq!(bias.rows, 1);
    assert_eq!(bias.cols, x.cols, "bias width mismatch");
    let mut out = x.clone();
    for r in 0..out.rows {
        for (o, b) in out.row_mut(r).iter_mut().zip(&bias.data) {
            *o += *b;
        }
    }
    out
}

pub const LAYER_NORM_EPS: f64 = 1e-5;

/// Row-wise layer normalization. Returns the output together with the
/// normalized activations and per-row inverse standard deviations.
pub fn layer_norm(x: &Tensor, gamma: &Tensor, beta: &Tensor) -> (Tensor, Tensor, Vec<f64>) {
    let d = x.cols;
    let mut out = Tensor::zeros(x.rows, d);
    let mut xhat = Tensor::zeros(x.rows, d);
    let mut rstd = Vec::with_capacity(x.rows);
    for r in 0..x.rows {
        let row = x.row(r);
        let mean = row.iter().sum::<f64>() / d as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
        let inv = 1.0 / (var + LAYER_NORM_EPS).sqrt();
        rstd.push(inv);
        let xh = xhat.row_mut(r);
        for c in 0..d {
            xh[c] = (row[c] - mean) * inv;
        }
        let o = out.row_mut(r);
        for c in 0..d {
            o[c] = xh[c] * gamma.data[c] + beta.data[c];
        }
    }
    (out, xhat, rstd)
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)

pub fn gelu(v: f64) -> f64 {
    0.5 * v * (1.0 + (GELU_C * (v + 0.044715 * v * v * v)).tanh())
}

pub fn gelu_grad(v: f64) -> f64 {
    let inner = GELU_C * (v + 0.044715 * v * v * v);
    let t = inner.tanh();
    let dinner = GELU_C * (1.0 + 3.0 * 0.044715 * v * v);
    0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * dinner
}

/// Numerically stable in-place softmax.
pub fn softmax_in_place(xs: &mut [f64]) {
    let max = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for x in xs.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    for x in xs.iter_mut() {
        *x /= sum;
    }
}

pub fn log_softmax(xs: &[f64]) -> Vec<f64> {
    let max = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln() + max;
    xs.iter().map(|x| x - lse).collect()
}

/// Which keys each query row may attend to.
#[derive(Clone, Debug, PartialEq)]
pub enum AttnMask {
    /// Every query sees every key.
    Full,
    /// Query `i` sees keys `0..=i`.
    Causal,
    /// Explicit ascending key list per query row.
    Allowed(Vec<Vec<usize>>),
}

impl AttnMask {
    pub fn keys_for(&self, query: usize, n_keys: usize) -> KeyIter<'_> {
        match self {
            AttnMask::Full => KeyIter::Range(0..n_keys),
            AttnMask::Causal => KeyIter::Range(0..(query + 1).min(n_keys)),
            AttnMask::Allowed(lists) => KeyIter::List(lists[query].iter()),
        }
    }
}

pub enum KeyIter<'a> {
    Range(std::ops::Range<usize>),
    List(std::slice::Iter<'a, usize>),
}

impl Iterator for KeyIter<'_> {
    type Item = usize;
    fn next(&mut self) -> Option<usize> {
        match self {
            KeyIter::Range(r) => r.next(),
            KeyIter::List(it) => it.next().copied(),
        }
    }
}

/// Multi-head scaled dot-product attention over already-projected
/// queries/keys/values. Returns the concatenated head outputs and the
/// attention probabilities (one dense `q_len x k_len` matrix per head,
/// zero where masked).
pub fn multi_head_attention(
    q: &Tensor,
    k: &Tensor,
    v: &Tensor,
    heads: usize,
    mask: &AttnMask,
) -> (Tensor, Vec<Tensor>) {
    assert_eq!(q.cols, k.cols);
    assert_eq!(k.rows, v.rows);
    assert_eq!(q.cols % heads, 0, "model width must divide into heads");
    let dh = q.cols / heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let (tq, tk) = (q.rows, k.rows);
    let mut out = Tensor::zeros(tq, v.cols);
    let mut probs = Vec::with_capacity(heads);
    let mut keys = Vec::with_capacity(tk);
    let mut scores = Vec::with_capacity(tk);
    for h in 0..heads {
        let lo = h * dh;
        let hi = lo + dh;
        let mut p = Tensor::zeros(tq, tk);
        for i in 0..tq {
            keys.clear();
            keys.extend(mask.keys_for(i, tk));
            scores.clear();
            let qi = &q.row(i)[lo..hi];
            for &j in &keys {
                scores.push(dot(qi, &k.row(j)[lo..hi]) * scale);
            }
            softmax_in_place(&mut scores);
            let prow = p.row_mut(i);
            for (&j, &s) in keys.iter().zip(&scores) {
                prow[j] = s;
            }
            let orow = &mut out.data[i * v.cols + lo..i * v.cols + hi];
            for (&j, &s) in keys.iter().zip(&scores) {
                let vj = &v.row(j)[lo..hi];
                for (o, &vv) in orow.iter_mut().zip(vj) {
                    *o += s * vv;
                }
            }
        }
        probs.push(p);
    }
    (out, probs)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(rows: usize, cols: usize, v: &[f64]) -> Tensor {
        Tensor::from_vec(rows, cols, v.to_vec())
    }

    #[test]
    fn matmul_variants_agree() {
        let a = t(2, 3, &[1., 2., 3., 4., 5., 6.]);
        let b = t(3, 2, &[7., 8., 9., 10., 11., 12.]);
        let c = matmul(&a, &b);
        assert_eq!(c.data, vec![58., 64., 139., 154.]);
        let bt = t(2, 3, &[7., 9., 11., 8., 10., 12.]);
        assert_eq!(matmul_bt(&a, &bt).data, c.data);
        let at = t(3, 2, &[1., 4., 2., 5., 3., 6.]);
        assert_eq!(matmul_at(&at, &b).data, c.data);
    }

    #[test]
    fn row_results_do_not_depend_on_batch() {
        let a = t(3, 2, &[0.1, 0.2, 0.3, 0.4, 0.5, 0.6]);
        let w = t(2, 2, &[1.1, -0.7, 0.3, 0.9]);
        let full = matmul(&a, &w);
        let single = matmul(&t(1, 2, a.row(2)), &w);
        assert_eq!(full.row(2), single.row(0));
    }

    #[test]
    fn attention_rows_sum_to_one() {
        let q = t(3, 4, &[0.1, -0.2, 0.3, 0.4, 1.0, 0.5, -0.5, 0.2, 0.0, 0.3, 0.9, -1.0]);
        let (_, probs) = multi_head_attention(&q, &q, &q, 2, &AttnMask::Causal);
        for p in probs {
            for r in 0..3 {
                let s: f64 = p.row(r).iter().sum();
                assert!((s - 1.0).abs() < 1e-12);
                for c in r + 1..3 {
                    assert_eq!(p.row(r)[c], 0.0);
                }
            }
        }
    }

    #[test]
    fn gelu_grad_matches_difference() {
        for &x in &[-2.0, -0.3, 0.0, 0.7, 3.1] {
            let h = 1e-6;
            let fd = (gelu(x + h) - gelu(x - h)) / (2.0 * h);
            assert!((fd - gelu_grad(x)).abs() < 1e-8);
        }
    }
}
