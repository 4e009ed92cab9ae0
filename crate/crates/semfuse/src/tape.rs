//! Reverse-mode differentiation over a linear tape.
//!
//! Operations append nodes to a [`Tape`]; each node stores its forward value
//! and a closure that routes an incoming gradient to its parents. Backward
//! is a single reverse sweep from a scalar output. Nodes are strictly
//! ordered (parents before children), so reverse insertion order is a valid
//! reverse topological order.
//!
//! All values are 2-D `(rows, cols)` matrices; scalars are `(1, 1)`.

use std::collections::HashMap;

use crate::params::ParamId;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(pub usize);

type BackFn = Box<dyn Fn(&[Node], &[f64], &mut GradBuf)>;

pub(crate) struct Node {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
    requires_grad: bool,
    param: Option<ParamId>,
    back: Option<BackFn>,
    /// Discrete forward choices (ReLU signs, argmax picks). Two evaluations
    /// with different signatures straddle a kink or tie of the piecewise
    /// graph, which finite differences cannot measure.
    kink: Option<Vec<u32>>,
}

/// Per-node gradient buffers used during the backward sweep.
pub struct GradBuf {
    slots: Vec<Option<Vec<f64>>>,
}

impl GradBuf {
    fn new(n: usize) -> Self {
        GradBuf {
            slots: vec![None; n],
        }
    }

    fn accum(&mut self, id: NodeId, len: usize) -> &mut Vec<f64> {
        self.slots[id.0].get_or_insert_with(|| vec![0.0; len])
    }

    pub fn take(&mut self, id: NodeId) -> Option<Vec<f64>> {
        self.slots[id.0].take()
    }
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    param_leaves: Vec<(ParamId, NodeId)>,
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn dims(&self, id: NodeId) -> (usize, usize) {
        let n = &self.nodes[id.0];
        (n.rows, n.cols)
    }

    pub fn value(&self, id: NodeId) -> &[f64] {
        &self.nodes[id.0].data
    }

    pub fn value_tensor(&self, id: NodeId) -> Tensor {
        let n = &self.nodes[id.0];
        Tensor::matrix(n.rows, n.cols, n.data.clone())
    }

    pub fn scalar_value(&self, id: NodeId) -> f64 {
        let n = &self.nodes[id.0];
        assert_eq!((n.rows, n.cols), (1, 1), "node is not a scalar");
        n.data[0]
    }

    fn push(&mut self, node: Node) -> NodeId {
        let id = NodeId(self.nodes.len());
        self.nodes.push(node);
        id
    }

    fn needs_grad(&self, ids: &[NodeId]) -> bool {
        ids.iter().any(|i| self.nodes[i.0].requires_grad)
    }

    // ── Leaves ──────────────────────────────────────────────────────────

    pub fn constant(&mut self, rows: usize, cols: usize, data: Vec<f64>) -> NodeId {
        assert_eq!(rows * cols, data.len(), "constant: shape/data mismatch");
        self.push(Node {
            rows,
            cols,
            data,
            requires_grad: false,
            param: None,
            back: None,
            kink: None,
        })
    }

    pub fn constant_tensor(&mut self, t: &Tensor) -> NodeId {
        let (r, c) = t.dims2().expect("constant_tensor: rank > 2");
        self.constant(r, c, t.data.clone())
    }

    /// A trainable leaf bound to a parameter slot; its gradient is collected
    /// by [`Tape::param_grads`] after backward.
    pub fn param_leaf(&mut self, pid: ParamId, t: &Tensor) -> NodeId {
        let (r, c) = t.dims2().expect("param_leaf: rank > 2");
        let id = self.push(Node {
            rows: r,
            cols: c,
            data: t.data.clone(),
            requires_grad: true,
            param: Some(pid),
            back: None,
            kink: None,
        });
        self.param_leaves.push((pid, id));
        id
    }

    // ── Elementwise ─────────────────────────────────────────────────────

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (r, c) = self.dims(a);
        assert_eq!((r, c), self.dims(b), "add: shape mismatch");
        let data: Vec<f64> = self.nodes[a.0]
            .data
            .iter()
            .zip(&self.nodes[b.0].data)
            .map(|(x, y)| x + y)
            .collect();
        let rg = self.needs_grad(&[a, b]);
        self.push(Node {
            rows: r,
            cols: c,
            data,
            requires_grad: rg,
            param: None,
            back: rg.then(|| -> BackFn {
                Box::new(move |nodes, g, gb| {
                    for parent in [a, b] {
                        if nodes[parent.0].requires_grad {
                            let acc = gb.accum(parent, g.len());
                            for (ai, gi) in acc.iter_mut().zip(g) {
                                *ai += gi;
                            }
                        }
                    }
                })
            }),
            kink: None,
        })
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (r, c) = self.dims(a);
        assert_eq!((r, c), self.dims(b), "sub: shape mismatch");
        let data: Vec<f64> = self.nodes[a.0]
            .data
            .iter()
            .zip(&self.nodes[b.0].data)
            .map(|(x, y)| x - y)
            .collect();
        let rg = self.needs_grad(&[a, b]);
        self.push(Node {
            rows: r,
            cols: c,
            data,
            requires_grad: rg,
            param: None,
            back: rg.then(|| -> BackFn {
                Box::new(move |nodes, g, gb| {
                    if nodes[a.0].requires_grad {
                        let acc = gb.accum(a, g.len());
                        for (ai, gi) in acc.iter_mut().zip(g) {
                            *ai += gi;
                        }
                    }
                    if nodes[b.0].requires_grad {
                        let acc = gb.accum(b, g.len());
                        for (ai, gi) in acc.iter_mut().zip(g) {
                            *ai -= gi;
                        }
                    }
                })
            }),
            kink: None,
        })
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (r, c) = self.dims(a);
        assert_eq!((r, c), self.dims(b), "mul: shape mismatch");
        let data: Vec<f64> = self.nodes[a.0]
            .data
            .iter()
            .zip(&self.nodes[b.0].data)
            .map(|(x, y)| x * y)
            .collect();
        let rg = self.needs_grad(&[a, b]);
        self.push(Node {
            rows: r,
            cols: c,
            data,
            requires_grad: rg,
            param: None,
            back: rg.then(|| -> BackFn {
                Box::new(move |nodes, g, gb| {
                    if nodes[a.0].requires_grad {
                        let bv: Vec<f64> = nodes[b.0].data.clone();
                        let acc = gb.accum(a, g.len());
                        for i in 0..g.len() {
                            acc[i] += g[i] * bv[i];
                        }
                    }
                    if nodes[b.0].requires_grad {
                        let av: Vec<f64> = nodes[a.0].data.clone();
                        let acc = gb.accum(b, g.len());
                        for i in 0..g.len() {
                            acc[i] += g[i] * av[i];
                        }
                    }
                })
            }),
            kink: None,
        })
    }

    /// `alpha * a + beta`, elementwise.
    pub fn affine(&mut self, a: NodeId, alpha: f64, beta: f64) -> NodeId {
        let (r, c) = self.dims(a);
        let data: Vec<f64> = self.nodes[a.0].data.iter().map(|x| alpha * x + beta).collect();
        let rg = self.nodes[a.0].requires_grad;
        self.push(Node {
            rows: r,
            cols: c,
            data,
            requires_grad: rg,
            param: None,
            back: rg.then(|| -> BackFn {
                Box::new(move |_, g, gb| {
                    let acc = gb.accum(a, g.len());
                    for i in 0..g.len() {
                        acc[i] += alpha * g[i];
                    }
                })
            }),
            kink: None,
        })
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        let (r, c) = self.dims(a);
        let data: Vec<f64> = self.nodes[a.0]
            .data
            .iter()
            .map(|&x| 1.0 / (1.0 + (-x).exp()))
            .collect();
        let rg = self.nodes[a.0].requires_grad;
        let saved = data.clone();
        self.push(Node {
            rows: r,
            cols: c,
            data,
            requires_grad: rg,
            param: None,
            back: rg.then(|| -> BackFn {
                Box::new(move |_, g, gb| {
                    let acc = gb.accum(a, g.len());
                    for i in 0..g.len() {
                        let s = saved[i];
                        acc[i] += g[i] * s * (1.0 - s);
                    }
                })
            }),
            kink: None,
        })
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        let (r, c) = self.dims(a);
        let data: Vec<f64> = self.nodes[a.0].data.iter().map(|&x| x.tanh()).collect();
        let rg = self.nodes[a.0].requires_grad;
        let saved = data.clone();
        self.push(Node {
            rows: r,
            cols: c,
            data,
            requires_grad: rg,
            param: None,
            back: rg.then(|| -> BackFn {
                Box::new(move |_, g, gb| {
                    let acc = gb.accum(a, g.len());
                    for i in 0..g.len() {
                        acc[i] += g[i] * (1.0 - saved[i] * saved[i]);
                    }
                })
            }),
            kink: None,
        })
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        let (r, c) = self.dims(a);
        let src = &self.nodes[a.0].data;
        let data: Vec<f64> = src.iter().map(|&x| x.max(0.0)).collect();
        // sign pattern, bit-packed
        let mut bits = vec![0u32; src.len().div_ceil(32)];
        for (i, &x) in src.iter().enumerate() {
            if x > 0.0 {
                bits[i / 32] |= 1 << (i % 32);
            }
        }
        let mask: Vec<bool> = src.iter().map(|&x| x > 0.0).collect();
        let rg = self.nodes[a.0].requires_grad;
        self.push(Node {
            rows: r,
            cols: c,
            data,
            requires_grad: rg,
            param: None,
            back: rg.then(|| -> BackFn {
                Box::new(move |_, g, gb| {
                    let acc = gb.accum(a, g.len());
                    for i in 0..g.len() {
                        if mask[i] {
                            acc[i] += g[i];
                        }
                    }
                })
            }),
            kink: Some(bits),
        })
    }

    /// GELU, tanh form: 0.5 x (1 + tanh(√(2/π) (x + 0.044715 x³))).
    pub fn gelu(&mut self, a: NodeId) -> NodeId {
        const C: f64 = 0.7978845608028654; // sqrt(2/pi)
        const A: f64 = 0.044715;
        let (r, c) = self.dims(a);
        let xv = self.nodes[a.0].data.clone();
        let data: Vec<f64> = xv
            .iter()
            .map(|&x| {
                let u = C * (x + A * x * x * x);
                0.5 * x * (1.0 + u.tanh())
            })
            .collect();
        let rg = self.nodes[a.0].requires_grad;
        self.push(Node {
            rows: r,
            cols: c,
            data,
            requires_grad: rg,
            param: None,
            back: rg.then(|| -> BackFn {
                Box::new(move |_, g, gb| {
                    let acc = gb.accum(a, g.len());
                    for i in 0..g.len() {
                        let x = xv[i];
                        let u = C * (x + A * x * x * x);
                        let t = u.tanh();
                        let du = C * (1.0 + 3.0 * A * x * x);
                        let d = 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du;
                        acc[i] += g[i] * d;
                    }
                })
            }),
            kink: None,
        })
    }

    // ── Linear algebra ──────────────────────────────────────────────────

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (m, ka) = self.dims(a);
        let (kb, n) = self.dims(b);
        assert_eq!(
            ka, kb,
            "matmul: inner dims disagree ({m}x{ka} vs {kb}x{n})"
        );
        let av = &self.nodes[a.0].data;
        let bv = &self.nodes[b.0].data;
        let mut data = vec![0.0; m * n];
        for i in 0..m {
            for k in 0..ka {
                let x = av[i * ka + k];
                if x == 0.0 {
                    continue;
                }
                let brow = &bv[k * n..(k + 1) * n];
                let orow = &mut data[i * n..(i + 1) * n];
                for j in 0..n {
                    orow[j] += x * brow[j];
                }
            }
        }
        let rg = self.needs_grad(&[a, b]);
        self.push(Node {
            rows: m,
            cols: n,
            data,
            requires_grad: rg,
            param: None,
            back: rg.then(|| -> BackFn {
                Box::new(move |nodes, g, gb| {
                    let k = ka;
                    if nodes[a.0].requires_grad {
                        let bv = nodes[b.0].data.clone();
                        let acc = gb.accum(a, m * k);
                        // dA = G · Bᵀ
                        for i in 0..m {
                            for kk in 0..k {
                                let mut s = 0.0;
                                let grow = &g[i * n..(i + 1) * n];
                                let brow = &bv[kk * n..(kk + 1) * n];
                                for j in 0..n {
                                    s += grow[j] * brow[j];
                                }
                                acc[i * k + kk] += s;
                            }
                        }
                    }
                    if nodes[b.0].requires_grad {
                        let av = nodes[a.0].data.clone();
                        let acc = gb.accum(b, k * n);
                        // dB = Aᵀ · G
                        for kk in 0..k {
                            for i in 0..m {
                                let x = av[i * k + kk];
                                if x == 0.0 {
                                    continue;
                                }
                                let grow = &g[i * n..(i + 1) * n];
                                let orow = &mut acc[kk * n..(kk + 1) * n];
                                for j in 0..n {
                                    orow[j] += x * grow[j];
                                }
                            }
                        }
                    }
                })
            }),
            kink: None,
        })
    }

    /// Add a `(1, m)` row vector to every row of `x`.
    pub fn add_bias(&mut self, x: NodeId, b: NodeId) -> NodeId {
        let (r, c) = self.dims(x);
        let (br, bc) = self.dims(b);
        assert_eq!((br, bc), (1, c), "add_bias: bias must be (1, {c})");
        let bv = &self.nodes[b.0].data;
        let data: Vec<f64> = self.nodes[x.0]
            .data
            .chunks(c)
            .flat_map(|row| row.iter().zip(bv).map(|(v, w)| v + w).collect::<Vec<_>>())
            .collect();
        let rg = self.needs_grad(&[x, b]);
        self.push(Node {
            rows: r,
            cols: c,
            data,
            requires_grad: rg,
            param: None,
            back: rg.then(|| -> BackFn {
                Box::new(move |nodes, g, gb| {
                    if nodes[x.0].requires_grad {
                        let acc = gb.accum(x, r * c);
                        for (ai, gi) in acc.iter_mut().zip(g) {
                            *ai += gi;
                        }
                    }
                    if nodes[b.0].requires_grad {
                        let acc = gb.accum(b, c);
                        for row in g.chunks(c) {
                            for j in 0..c {
                                acc[j] += row[j];
                            }
                        }
                    }
                })
            }),
            kink: None,
        })
    }

    pub fn transpose(&mut self, a: NodeId) -> NodeId {
        let (r, c) = self.dims(a);
        let av = &self.nodes[a.0].data;
        let mut data = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                data[j * r + i] = av[i * c + j];
            }
        }
        let rg = self.nodes[a.0].requires_grad;
        self.push(Node {
            rows: c,
            cols: r,
            data,
            requires_grad: rg,
            param: None,
            back: rg.then(|| -> BackFn {
                Box::new(move |_, g, gb| {
                    let acc = gb.accum(a, r * c);
                    for i in 0..r {
                        for j in 0..c {
                            acc[i * c + j] += g[j * r + i];
                        }
                    }
                })
            }),
            kink: None,
        })
    }

    // ── Shape and indexing ──────────────────────────────────────────────

    pub fn slice_rows(&mut self, a: NodeId, start: usize, len: usize) -> NodeId {
        let (r, c) = self.dims(a);
        assert!(start + len <= r, "slice_rows: {start}+{len} > {r}");
        let data = self.nodes[a.0].data[start * c..(start + len) * c].to_vec();
        let rg = self.nodes[a.0].requires_grad;
        self.push(Node {
            rows: len,
            cols: c,
            data,
            requires_grad: rg,
            param: None,
            back: rg.then(|| -> BackFn {
                Box::new(move |_, g, gb| {
                    let acc = gb.accum(a, r * c);
                    for (i, gi) in g.iter().enumerate() {
                        acc[start * c + i] += gi;
                    }
                })
            }),
            kink: None,
        })
    }

    pub fn slice_cols(&mut self, a: NodeId, start: usize, len: usize) -> NodeId {
        let (r, c) = self.dims(a);
        assert!(start + len <= c, "slice_cols: {start}+{len} > {c}");
        let av = &self.nodes[a.0].data;
        let mut data = Vec::with_capacity(r * len);
        for i in 0..r {
            data.extend_from_slice(&av[i * c + start..i * c + start + len]);
        }
        let rg = self.nodes[a.0].requires_grad;
        self.push(Node {
            rows: r,
            cols: len,
            data,
            requires_grad: rg,
            param: None,
            back: rg.then(|| -> BackFn {
                Box::new(move |_, g, gb| {
                    let acc = gb.accum(a, r * c);
                    for i in 0..r {
                        for j in 0..len {
                            acc[i * c + start + j] += g[i * len + j];
                        }
                    }
                })
            }),
            kink: None,
        })
    }

    pub fn concat_cols(&mut self, parts: &[NodeId]) -> NodeId {
        assert!(!parts.is_empty(), "concat_cols: no parts");
        let r = self.dims(parts[0]).0;
        let widths: Vec<usize> = parts
            .iter()
            .map(|&p| {
                let (pr, pc) = self.dims(p);
                assert_eq!(pr, r, "concat_cols: row mismatch");
                pc
            })
            .collect();
        let total: usize = widths.iter().sum();
        let mut data = Vec::with_capacity(r * total);
        for i in 0..r {
            for (&p, &w) in parts.iter().zip(&widths) {
                let pv = &self.nodes[p.0].data;
                data.extend_from_slice(&pv[i * w..(i + 1) * w]);
            }
        }
        let rg = self.needs_grad(parts);
        let parts: Vec<NodeId> = parts.to_vec();
        self.push(Node {
            rows: r,
            cols: total,
            data,
            requires_grad: rg,
            param: None,
            back: rg.then(|| -> BackFn {
                Box::new(move |nodes, g, gb| {
                    let mut off = 0;
                    for (&p, &w) in parts.iter().zip(&widths) {
                        if nodes[p.0].requires_grad {
                            let acc = gb.accum(p, r * w);
                            for i in 0..r {
                                for j in 0..w {
                                    acc[i * w + j] += g[i * total + off + j];
                                }
                            }
                        }
                        off += w;
                    }
                })
            }),
            kink: None,
        })
    }

    /// Stack `(1, c)` rows into an `(n, c)` matrix.
    pub fn stack_rows(&mut self, parts: &[NodeId]) -> NodeId {
        assert!(!parts.is_empty(), "stack_rows: no parts");
        let c = self.dims(parts[0]).1;
        let mut data = Vec::with_capacity(parts.len() * c);
        for &p in parts {
            let (pr, pc) = self.dims(p);
            assert_eq!((pr, pc), (1, c), "stack_rows: parts must be (1, {c})");
            data.extend_from_slice(&self.nodes[p.0].data);
        }
        let rg = self.needs_grad(parts);
        let parts: Vec<NodeId> = parts.to_vec();
        self.push(Node {
            rows: parts.len(),
            cols: c,
            data,
            requires_grad: rg,
            param: None,
            back: rg.then(|| -> BackFn {
                Box::new(move |nodes, g, gb| {
                    for (i, &p) in parts.iter().enumerate() {
                        if nodes[p.0].requires_grad {
                            let acc = gb.accum(p, c);
                            for j in 0..c {
                                acc[j] += g[i * c + j];
                            }
                        }
                    }
                })
            }),
            kink: None,
        })
    }

    /// Row gather: `out[i] = a[ids[i]]`. Backward scatter-adds, so repeated
    /// ids accumulate.
    pub fn gather_rows(&mut self, a: NodeId, ids: &[usize]) -> NodeId {
        let (r, c) = self.dims(a);
        let av = &self.nodes[a.0].data;
        let mut data = Vec::with_capacity(ids.len() * c);
        for &i in ids {
            assert!(i < r, "gather_rows: id {i} out of range {r}");
            data.extend_from_slice(&av[i * c..(i + 1) * c]);
        }
        let rg = self.nodes[a.0].requires_grad;
        let ids: Vec<usize> = ids.to_vec();
        self.push(Node {
            rows: ids.len(),
            cols: c,
            data,
            requires_grad: rg,
            param: None,
            back: rg.then(|| -> BackFn {
                Box::new(move |_, g, gb| {
                    let acc = gb.accum(a, r * c);
                    for (row, &i) in ids.iter().enumerate() {
                        for j in 0..c {
                            acc[i * c + j] += g[row * c + j];
                        }
                    }
                })
            }),
            kink: None,
        })
    }

    /// Append `extra` all-zero rows.
    pub fn zero_pad_rows(&mut self, a: NodeId, target_rows: usize) -> NodeId {
        let (r, c) = self.dims(a);
        assert!(target_rows >= r, "zero_pad_rows: target < rows");
        let mut data = self.nodes[a.0].data.clone();
        data.resize(target_rows * c, 0.0);
        let rg = self.nodes[a.0].requires_grad;
        self.push(Node {
            rows: target_rows,
            cols: c,
            data,
            requires_grad: rg,
            param: None,
            back: rg.then(|| -> BackFn {
                Box::new(move |_, g, gb| {
                    let acc = gb.accum(a, r * c);
                    for i in 0..r * c {
                        acc[i] += g[i];
                    }
                })
            }),
            kink: None,
        })
    }

    /// Sliding windows of `k` consecutive rows, flattened per window:
    /// `(l, d)` becomes `(l-k+1, k*d)`.
    pub fn windows(&mut self, a: NodeId, k: usize) -> NodeId {
        let (l, d) = self.dims(a);
        assert!(k >= 1 && k <= l, "windows: need 1 <= k <= {l}, got {k}");
        let out_rows = l - k + 1;
        let av = &self.nodes[a.0].data;
        let mut data = Vec::with_capacity(out_rows * k * d);
        for i in 0..out_rows {
            data.extend_from_slice(&av[i * d..(i + k) * d]);
        }
        let rg = self.nodes[a.0].requires_grad;
        self.push(Node {
            rows: out_rows,
            cols: k * d,
            data,
            requires_grad: rg,
            param: None,
            back: rg.then(|| -> BackFn {
                Box::new(move |_, g, gb| {
                    let acc = gb.accum(a, l * d);
                    for i in 0..out_rows {
                        for w in 0..k {
                            for j in 0..d {
                                acc[(i + w) * d + j] += g[i * (k * d) + w * d + j];
                            }
                        }
                    }
                })
            }),
            kink: None,
        })
    }

    /// Column-wise max over rows: `(p, b)` -> `(1, b)`. Ties break to the
    /// first (lowest-index) row so gradients are reproducible.
    pub fn max_rows(&mut self, a: NodeId) -> NodeId {
        let (p, b) = self.dims(a);
        assert!(p >= 1, "max_rows: empty input");
        let av = &self.nodes[a.0].data;
        let mut data = vec![f64::NEG_INFINITY; b];
        let mut arg = vec![0u32; b];
        for i in 0..p {
            for j in 0..b {
                let v = av[i * b + j];
                if v > data[j] {
                    data[j] = v;
                    arg[j] = i as u32;
                }
            }
        }
        let rg = self.nodes[a.0].requires_grad;
        let arg_saved = arg.clone();
        self.push(Node {
            rows: 1,
            cols: b,
            data,
            requires_grad: rg,
            param: None,
            back: rg.then(|| -> BackFn {
                Box::new(move |_, g, gb| {
                    let acc = gb.accum(a, p * b);
                    for j in 0..b {
                        acc[arg_saved[j] as usize * b + j] += g[j];
                    }
                })
            }),
            kink: Some(arg),
        })
    }

    // ── Normalization and losses ────────────────────────────────────────

    pub fn softmax_rows(&mut self, a: NodeId) -> NodeId {
        let (r, c) = self.dims(a);
        let av = &self.nodes[a.0].data;
        let mut data = vec![0.0; r * c];
        for i in 0..r {
            let row = &av[i * c..(i + 1) * c];
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for j in 0..c {
                let e = (row[j] - m).exp();
                data[i * c + j] = e;
                z += e;
            }
            for j in 0..c {
                data[i * c + j] /= z;
            }
        }
        let rg = self.nodes[a.0].requires_grad;
        let y = data.clone();
        self.push(Node {
            rows: r,
            cols: c,
            data,
            requires_grad: rg,
            param: None,
            back: rg.then(|| -> BackFn {
                Box::new(move |_, g, gb| {
                    let acc = gb.accum(a, r * c);
                    for i in 0..r {
                        let yr = &y[i * c..(i + 1) * c];
                        let gr = &g[i * c..(i + 1) * c];
                        let dot: f64 = yr.iter().zip(gr).map(|(yj, gj)| yj * gj).sum();
                        for j in 0..c {
                            acc[i * c + j] += yr[j] * (gr[j] - dot);
                        }
                    }
                })
            }),
            kink: None,
        })
    }

    /// Per-row layer normalization with learnable `(1, m)` scale and offset.
    pub fn layer_norm(&mut self, x: NodeId, gamma: NodeId, beta: NodeId, eps: f64) -> NodeId {
        let (r, c) = self.dims(x);
        assert_eq!(self.dims(gamma), (1, c), "layer_norm: gamma shape");
        assert_eq!(self.dims(beta), (1, c), "layer_norm: beta shape");
        let xv = &self.nodes[x.0].data;
        let gv = &self.nodes[gamma.0].data;
        let bv = &self.nodes[beta.0].data;
        let mut data = vec![0.0; r * c];
        let mut xhat = vec![0.0; r * c];
        let mut inv_std = vec![0.0; r];
        for i in 0..r {
            let row = &xv[i * c..(i + 1) * c];
            let mean = row.iter().sum::<f64>() / c as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / c as f64;
            let s = 1.0 / (var + eps).sqrt();
            inv_std[i] = s;
            for j in 0..c {
                let xh = (row[j] - mean) * s;
                xhat[i * c + j] = xh;
                data[i * c + j] = gv[j] * xh + bv[j];
            }
        }
        let rg = self.needs_grad(&[x, gamma, beta]);
        self.push(Node {
            rows: r,
            cols: c,
            data,
            requires_grad: rg,
            param: None,
            back: rg.then(|| -> BackFn {
                Box::new(move |nodes, g, gb| {
                    let gv = nodes[gamma.0].data.clone();
                    if nodes[gamma.0].requires_grad {
                        let acc = gb.accum(gamma, c);
                        for i in 0..r {
                            for j in 0..c {
                                acc[j] += g[i * c + j] * xhat[i * c + j];
                            }
                        }
                    }
                    if nodes[beta.0].requires_grad {
                        let acc = gb.accum(beta, c);
                        for i in 0..r {
                            for j in 0..c {
                                acc[j] += g[i * c + j];
                            }
                        }
                    }
                    if nodes[x.0].requires_grad {
                        let acc = gb.accum(x, r * c);
                        for i in 0..r {
                            let gy: Vec<f64> =
                                (0..c).map(|j| g[i * c + j] * gv[j]).collect();
                            let mean_gy = gy.iter().sum::<f64>() / c as f64;
                            let mean_gy_xhat = (0..c)
                                .map(|j| gy[j] * xhat[i * c + j])
                                .sum::<f64>()
                                / c as f64;
                            for j in 0..c {
                                acc[i * c + j] += inv_std[i]
                                    * (gy[j] - mean_gy - xhat[i * c + j] * mean_gy_xhat);
                            }
                        }
                    }
                })
            }),
            kink: None,
        })
    }

    /// Mean over all elements -> scalar.
    pub fn mean_all(&mut self, a: NodeId) -> NodeId {
        let (r, c) = self.dims(a);
        let n = (r * c) as f64;
        let v = self.nodes[a.0].data.iter().sum::<f64>() / n;
        let rg = self.nodes[a.0].requires_grad;
        self.push(Node {
            rows: 1,
            cols: 1,
            data: vec![v],
            requires_grad: rg,
            param: None,
            back: rg.then(|| -> BackFn {
                Box::new(move |_, g, gb| {
                    let acc = gb.accum(a, r * c);
                    let d = g[0] / n;
                    for ai in acc.iter_mut() {
                        *ai += d;
                    }
                })
            }),
            kink: None,
        })
    }

    /// Mean cross-entropy of row-wise logits against class indices, using a
    /// log-sum-exp stabilized by the row max.
    pub fn cross_entropy_mean(&mut self, logits: NodeId, targets: &[usize]) -> NodeId {
        let (r, c) = self.dims(logits);
        assert_eq!(r, targets.len(), "cross_entropy: target count mismatch");
        for &t in targets {
            assert!(t < c, "cross_entropy: target {t} out of range {c}");
        }
        let xv = &self.nodes[logits.0].data;
        let mut soft = vec![0.0; r * c];
        let mut loss = 0.0;
        for i in 0..r {
            let row = &xv[i * c..(i + 1) * c];
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for j in 0..c {
                let e = (row[j] - m).exp();
                soft[i * c + j] = e;
                z += e;
            }
            for j in 0..c {
                soft[i * c + j] /= z;
            }
            loss += m + z.ln() - row[targets[i]];
        }
        loss /= r as f64;
        let rg = self.nodes[logits.0].requires_grad;
        let targets: Vec<usize> = targets.to_vec();
        self.push(Node {
            rows: 1,
            cols: 1,
            data: vec![loss],
            requires_grad: rg,
            param: None,
            back: rg.then(|| -> BackFn {
                Box::new(move |_, g, gb| {
                    let acc = gb.accum(logits, r * c);
                    let scale = g[0] / r as f64;
                    for i in 0..r {
                        for j in 0..c {
                            let ind = if j == targets[i] { 1.0 } else { 0.0 };
                            acc[i * c + j] += scale * (soft[i * c + j] - ind);
                        }
                    }
                })
            }),
            kink: None,
        })
    }

    /// Mean squared error against a constant target.
    pub fn mse_mean(&mut self, pred: NodeId, target: &[f64]) -> NodeId {
        let (r, c) = self.dims(pred);
        assert_eq!(r * c, target.len(), "mse: target length mismatch");
        let pv = &self.nodes[pred.0].data;
        let n = (r * c) as f64;
        let loss = pv
            .iter()
            .zip(target)
            .map(|(p, t)| (p - t) * (p - t))
            .sum::<f64>()
            / n;
        let rg = self.nodes[pred.0].requires_grad;
        let target: Vec<f64> = target.to_vec();
        self.push(Node {
            rows: 1,
            cols: 1,
            data: vec![loss],
            requires_grad: rg,
            param: None,
            back: rg.then(|| -> BackFn {
                Box::new(move |nodes, g, gb| {
                    let pv = nodes[pred.0].data.clone();
                    let acc = gb.accum(pred, pv.len());
                    let scale = 2.0 * g[0] / n;
                    for i in 0..pv.len() {
                        acc[i] += scale * (pv[i] - target[i]);
                    }
                })
            }),
            kink: None,
        })
    }

    // ── Backward ────────────────────────────────────────────────────────

    /// Reverse sweep from a scalar output. Returns the gradient buffer;
    /// parameter-leaf gradients survive in it for [`Tape::param_grads`].
    pub fn backward(&self, out: NodeId) -> GradBuf {
        let n = &self.nodes[out.0];
        assert_eq!((n.rows, n.cols), (1, 1), "backward: output must be scalar");
        let mut gb = GradBuf::new(self.nodes.len());
        gb.slots[out.0] = Some(vec![1.0]);
        for id in (0..=out.0).rev() {
            if !self.nodes[id].requires_grad {
                gb.slots[id] = None;
                continue;
            }
            let Some(grad) = gb.slots[id].take() else {
                continue;
            };
            if let Some(back) = &self.nodes[id].back {
                back(&self.nodes, &grad, &mut gb);
            }
            if self.nodes[id].param.is_some() {
                gb.slots[id] = Some(grad);
            }
        }
        gb
    }

    /// Gradients for every parameter leaf on this tape, summed per parameter.
    pub fn param_grads(&self, gb: &mut GradBuf) -> HashMap<ParamId, Vec<f64>> {
        let mut out: HashMap<ParamId, Vec<f64>> = HashMap::new();
        for &(pid, nid) in &self.param_leaves {
            let node = &self.nodes[nid.0];
            let g = gb
                .take(nid)
                .unwrap_or_else(|| vec![0.0; node.rows * node.cols]);
            match out.entry(pid) {
                std::collections::hash_map::Entry::Occupied(mut e) => {
                    for (a, b) in e.get_mut().iter_mut().zip(&g) {
                        *a += b;
                    }
                }
                std::collections::hash_map::Entry::Vacant(e) => {
                    e.insert(g);
                }
            }
        }
        out
    }

    /// Concatenated discrete-choice record of the whole forward pass.
    pub fn kink_signature(&self) -> Vec<u32> {
        let mut sig = Vec::new();
        for n in &self.nodes {
            if let Some(k) = &n.kink {
                sig.extend_from_slice(k);
            }
        }
        sig
    }

    pub fn all_finite(&self) -> bool {
        self.nodes
            .iter()
            .all(|n| n.data.iter().all(|v| v.is_finite()))
    }
}
