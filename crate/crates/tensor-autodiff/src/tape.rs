//! Forward-op tape and reverse-mode gradient propagation.

use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;

use crate::gemm::{gemm_into, transpose};
use crate::param::ParamSet;
use crate::{Result, TensorError};

/// Handle to a tensor recorded on a tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

/// Edge list of a batched graph, grouped for deterministic scatter ops.
///
/// Edges must be sorted by destination node. `by_src` holds the same edge
/// ids re-sorted by source node so the backward pass can also run grouped.
#[derive(Debug, Clone)]
pub struct EdgeIndex {
    pub src: Vec<u32>,
    pub dst: Vec<u32>,
    dst_starts: Vec<u32>,
    by_src: Vec<u32>,
    src_starts: Vec<u32>,
    n_nodes: usize,
}

impl EdgeIndex {
    /// Builds grouping tables; `dst` must be non-decreasing.
    pub fn new(src: Vec<u32>, dst: Vec<u32>, n_nodes: usize) -> Self {
        assert_eq!(src.len(), dst.len());
        assert!(dst.windows(2).all(|w| w[0] <= w[1]), "edges must be sorted by dst");
        let n_edges = src.len();
        let mut dst_starts = vec![0u32; n_nodes + 1];
        for &d in &dst {
            dst_starts[d as usize + 1] += 1;
        }
        for i in 0..n_nodes {
            dst_starts[i + 1] += dst_starts[i];
        }
        // Counting sort of edge ids by src.
        let mut src_starts = vec![0u32; n_nodes + 1];
        for &s in &src {
            src_starts[s as usize + 1] += 1;
        }
        for i in 0..n_nodes {
            src_starts[i + 1] += src_starts[i];
        }
        let mut cursor = src_starts.clone();
        let mut by_src = vec![0u32; n_edges];
        for (e, &s) in src.iter().enumerate() {
            by_src[cursor[s as usize] as usize] = e as u32;
            cursor[s as usize] += 1;
        }
        EdgeIndex { src, dst, dst_starts, by_src, src_starts, n_nodes }
    }

    pub fn n_edges(&self) -> usize {
        self.src.len()
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }
}

enum Op {
    Leaf,
    Matmul(usize, usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    AddRow(usize, usize),
    Scale(usize, f64),
    AddScalar(usize),
    Relu(usize),
    Gelu(usize),
    Abs(usize),
    Exp(usize),
    SumAll(usize),
    RowSum(usize),
    SegmentSum(usize, Arc<Vec<u32>>),
    SegmentGather(usize, Arc<Vec<u32>>),
    GatherRows(usize, Arc<Vec<u32>>),
    ConcatCols(usize, usize),
    Dropout(usize, Vec<f64>),
    BatchNorm {
        x: usize,
        gamma: usize,
        beta: usize,
        invstd: Vec<f64>,
        xhat: Vec<f64>,
        batch_mode: bool,
    },
    SegmentOuter {
        a: usize,
        h: usize,
        edges: Arc<EdgeIndex>,
    },
}

struct Node {
    rows: usize,
    cols: usize,
    value: Vec<f64>,
    needs_grad: bool,
    param: Option<usize>,
    op: Op,
}

/// Records a forward computation; single-threaded per pass.
pub struct Tape {
    nodes: Vec<Node>,
    nan_check: bool,
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;

fn gelu_scalar(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + GELU_A * x * x * x)).tanh())
}

fn gelu_grad_scalar(x: f64) -> f64 {
    let inner = GELU_C * (x + GELU_A * x * x * x);
    let t = inner.tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_A * x * x)
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new(), nan_check: false }
    }

    /// Enables a finiteness check after every op; the first op producing a
    /// NaN or infinity fails instead of propagating it silently.
    pub fn with_nan_check(nan_check: bool) -> Self {
        Tape { nodes: Vec::new(), nan_check }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        let n = &self.nodes[v.0];
        (n.rows, n.cols)
    }

    pub fn scalar(&self, v: Var) -> f64 {
        debug_assert_eq!(self.nodes[v.0].value.len(), 1);
        self.nodes[v.0].value[0]
    }

    fn push(&mut self, rows: usize, cols: usize, value: Vec<f64>, needs_grad: bool, op: Op) -> Result<Var> {
        debug_assert_eq!(value.len(), rows * cols);
        if self.nan_check && !value.iter().all(|v| v.is_finite()) {
            return Err(TensorError::NonFinite(op_name(&op).into()));
        }
        self.nodes.push(Node { rows, cols, value, needs_grad, param: None, op });
        Ok(Var(self.nodes.len() - 1))
    }

    /// Records a constant leaf; never receives gradients.
    pub fn constant(&mut self, rows: usize, cols: usize, value: Vec<f64>) -> Var {
        assert_eq!(value.len(), rows * cols, "constant shape mismatch");
        self.nodes.push(Node { rows, cols, value, needs_grad: false, param: None, op: Op::Leaf });
        Var(self.nodes.len() - 1)
    }

    /// Records a parameter leaf (copies the current value); gradients flow
    /// back into `params.grad` on `backward`.
    pub fn param(&mut self, params: &ParamSet, idx: usize) -> Var {
        let p = params.get(idx);
        let (rows, cols) = match p.shape.len() {
            1 => (1, p.shape[0]),
            2 => (p.shape[0], p.shape[1]),
            r => panic!("param `{}` has rank {r}, tape supports rank <= 2", p.name),
        };
        self.nodes.push(Node {
            rows,
            cols,
            value: p.value.clone(),
            needs_grad: true,
            param: Some(idx),
            op: Op::Leaf,
        });
        Var(self.nodes.len() - 1)
    }

    fn binary_same_shape(&self, a: Var, b: Var, what: &str) -> Result<(usize, usize)> {
        let (ra, ca) = self.shape(a);
        let (rb, cb) = self.shape(b);
        if (ra, ca) != (rb, cb) {
            return Err(TensorError::Shape(format!(
                "{what}: {ra}x{ca} vs {rb}x{cb}"
            )));
        }
        Ok((ra, ca))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, ka) = self.shape(a);
        let (kb, n) = self.shape(b);
        if ka != kb {
            return Err(TensorError::Shape(format!("matmul: {m}x{ka} * {kb}x{n}")));
        }
        let mut out = vec![0.0; m * n];
        gemm_into(m, ka, n, self.value(a), self.value(b), &mut out, false);
        let needs = self.nodes[a.0].needs_grad || self.nodes[b.0].needs_grad;
        self.push(m, n, out, needs, Op::Matmul(a.0, b.0))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (r, c) = self.binary_same_shape(a, b, "add")?;
        let out = self.value(a).iter().zip(self.value(b)).map(|(x, y)| x + y).collect();
        let needs = self.nodes[a.0].needs_grad || self.nodes[b.0].needs_grad;
        self.push(r, c, out, needs, Op::Add(a.0, b.0))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let (r, c) = self.binary_same_shape(a, b, "sub")?;
        let out = self.value(a).iter().zip(self.value(b)).map(|(x, y)| x - y).collect();
        let needs = self.nodes[a.0].needs_grad || self.nodes[b.0].needs_grad;
        self.push(r, c, out, needs, Op::Sub(a.0, b.0))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (r, c) = self.binary_same_shape(a, b, "mul")?;
        let out = self.value(a).iter().zip(self.value(b)).map(|(x, y)| x * y).collect();
        let needs = self.nodes[a.0].needs_grad || self.nodes[b.0].needs_grad;
        self.push(r, c, out, needs, Op::Mul(a.0, b.0))
    }

    /// Adds a 1 x N bias row to every row of an M x N tensor.
    pub fn add_row(&mut self, a: Var, bias: Var) -> Result<Var> {
        let (m, n) = self.shape(a);
        let (rb, cb) = self.shape(bias);
        if rb != 1 || cb != n {
            return Err(TensorError::Shape(format!("add_row: {m}x{n} + {rb}x{cb}")));
        }
        let mut out = self.value(a).to_vec();
        {
            let b = self.value(bias);
            for row in out.chunks_mut(n) {
                for (o, bv) in row.iter_mut().zip(b) {
                    *o += bv;
                }
            }
        }
        let needs = self.nodes[a.0].needs_grad || self.nodes[bias.0].needs_grad;
        self.push(m, n, out, needs, Op::AddRow(a.0, bias.0))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var> {
        let (r, cc) = self.shape(a);
        let out = self.value(a).iter().map(|x| x * c).collect();
        let needs = self.nodes[a.0].needs_grad;
        self.push(r, cc, out, needs, Op::Scale(a.0, c))
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Result<Var> {
        let (r, cc) = self.shape(a);
        let out = self.value(a).iter().map(|x| x + c).collect();
        let needs = self.nodes[a.0].needs_grad;
        self.push(r, cc, out, needs, Op::AddScalar(a.0))
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        let (r, c) = self.shape(a);
        let out = self.value(a).iter().map(|x| x.max(0.0)).collect();
        let needs = self.nodes[a.0].needs_grad;
        self.push(r, c, out, needs, Op::Relu(a.0))
    }

    /// GELU with the tanh approximation.
    pub fn gelu(&mut self, a: Var) -> Result<Var> {
        let (r, c) = self.shape(a);
        let out = self.value(a).iter().map(|&x| gelu_scalar(x)).collect();
        let needs = self.nodes[a.0].needs_grad;
        self.push(r, c, out, needs, Op::Gelu(a.0))
    }

    pub fn abs(&mut self, a: Var) -> Result<Var> {
        let (r, c) = self.shape(a);
        let out = self.value(a).iter().map(|x| x.abs()).collect();
        let needs = self.nodes[a.0].needs_grad;
        self.push(r, c, out, needs, Op::Abs(a.0))
    }

    pub fn exp(&mut self, a: Var) -> Result<Var> {
        let (r, c) = self.shape(a);
        let out = self.value(a).iter().map(|x| x.exp()).collect();
        let needs = self.nodes[a.0].needs_grad;
        self.push(r, c, out, needs, Op::Exp(a.0))
    }

    pub fn sum_all(&mut self, a: Var) -> Result<Var> {
        let total: f64 = self.value(a).iter().sum();
        let needs = self.nodes[a.0].needs_grad;
        self.push(1, 1, vec![total], needs, Op::SumAll(a.0))
    }

    /// Row-wise sum of an M x N tensor into M x 1.
    pub fn row_sum(&mut self, a: Var) -> Result<Var> {
        let (m, n) = self.shape(a);
        let out = self.value(a).chunks(n).map(|row| row.iter().sum()).collect();
        let needs = self.nodes[a.0].needs_grad;
        self.push(m, 1, out, needs, Op::RowSum(a.0))
    }

    /// Adds row `i` of `a` into output row `seg[i]`.
    pub fn segment_sum(&mut self, a: Var, seg: Arc<Vec<u32>>, n_segments: usize) -> Result<Var> {
        let (m, n) = self.shape(a);
        if seg.len() != m {
            return Err(TensorError::Shape(format!(
                "segment_sum: {} ids for {m} rows",
                seg.len()
            )));
        }
        if let Some(&bad) = seg.iter().find(|&&s| s as usize >= n_segments) {
            return Err(TensorError::Shape(format!(
                "segment_sum: id {bad} out of range {n_segments}"
            )));
        }
        let mut out = vec![0.0; n_segments * n];
        for (row, &s) in self.value(a).chunks(n).zip(seg.iter()) {
            let dst = &mut out[s as usize * n..(s as usize + 1) * n];
            for (d, v) in dst.iter_mut().zip(row) {
                *d += v;
            }
        }
        let needs = self.nodes[a.0].needs_grad;
        self.push(n_segments, n, out, needs, Op::SegmentSum(a.0, seg))
    }

    /// Broadcast inverse of `segment_sum`: output row `i` is `a[seg[i]]`.
    pub fn segment_gather(&mut self, a: Var, seg: Arc<Vec<u32>>) -> Result<Var> {
        let (s_rows, n) = self.shape(a);
        if let Some(&bad) = seg.iter().find(|&&s| s as usize >= s_rows) {
            return Err(TensorError::Shape(format!(
                "segment_gather: id {bad} out of range {s_rows}"
            )));
        }
        let m = seg.len();
        let mut out = vec![0.0; m * n];
        for (i, &s) in seg.iter().enumerate() {
            out[i * n..(i + 1) * n].copy_from_slice(&self.nodes[a.0].value[s as usize * n..(s as usize + 1) * n]);
        }
        let needs = self.nodes[a.0].needs_grad;
        self.push(m, n, out, needs, Op::SegmentGather(a.0, seg))
    }

    /// Output row `r` is input row `idx[r]`; rows may repeat.
    pub fn gather_rows(&mut self, a: Var, idx: Arc<Vec<u32>>) -> Result<Var> {
        let (rows, n) = self.shape(a);
        if let Some(&bad) = idx.iter().find(|&&r| r as usize >= rows) {
            return Err(TensorError::Shape(format!(
                "gather_rows: index {bad} out of range {rows}"
            )));
        }
        let m = idx.len();
        let mut out = vec![0.0; m * n];
        for (i, &r) in idx.iter().enumerate() {
            out[i * n..(i + 1) * n].copy_from_slice(&self.nodes[a.0].value[r as usize * n..(r as usize + 1) * n]);
        }
        let needs = self.nodes[a.0].needs_grad;
        self.push(m, n, out, needs, Op::GatherRows(a.0, idx))
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ra, ca) = self.shape(a);
        let (rb, cb) = self.shape(b);
        if ra != rb {
            return Err(TensorError::Shape(format!("concat_cols: {ra} vs {rb} rows")));
        }
        let n = ca + cb;
        let mut out = vec![0.0; ra * n];
        for i in 0..ra {
            out[i * n..i * n + ca].copy_from_slice(&self.nodes[a.0].value[i * ca..(i + 1) * ca]);
            out[i * n + ca..(i + 1) * n].copy_from_slice(&self.nodes[b.0].value[i * cb..(i + 1) * cb]);
        }
        let needs = self.nodes[a.0].needs_grad || self.nodes[b.0].needs_grad;
        self.push(ra, n, out, needs, Op::ConcatCols(a.0, b.0))
    }

    /// Inverted dropout; identity when `p == 0`.
    pub fn dropout<R: Rng>(&mut self, a: Var, p: f64, rng: &mut R) -> Result<Var> {
        if p == 0.0 {
            return Ok(a);
        }
        if !(0.0..1.0).contains(&p) {
            return Err(TensorError::Shape(format!("dropout rate {p} outside [0,1)")));
        }
        let (r, c) = self.shape(a);
        let keep = 1.0 - p;
        let mask: Vec<f64> = (0..r * c)
            .map(|_| if rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 })
            .collect();
        let out = self.value(a).iter().zip(&mask).map(|(x, m)| x * m).collect();
        let needs = self.nodes[a.0].needs_grad;
        self.push(r, c, out, needs, Op::Dropout(a.0, mask))
    }

    /// Batch normalization over rows using batch statistics; returns the
    /// normalized tensor plus (mean, biased variance) per column so the
    /// caller can maintain running statistics.
    pub fn batch_norm_train(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        eps: f64,
    ) -> Result<(Var, Vec<f64>, Vec<f64>)> {
        let (m, n) = self.shape(x);
        if m == 0 {
            return Err(TensorError::Shape("batch_norm: empty batch".into()));
        }
        self.check_bn_affine(gamma, beta, n)?;
        let xv = self.value(x);
        let mut mean = vec![0.0; n];
        for row in xv.chunks(n) {
            for (s, v) in mean.iter_mut().zip(row) {
                *s += v;
            }
        }
        for s in &mut mean {
            *s /= m as f64;
        }
        let mut var = vec![0.0; n];
        for row in xv.chunks(n) {
            for ((s, v), mu) in var.iter_mut().zip(row).zip(&mean) {
                let d = v - mu;
                *s += d * d;
            }
        }
        for s in &mut var {
            *s /= m as f64;
        }
        let invstd: Vec<f64> = var.iter().map(|v| 1.0 / (v + eps).sqrt()).collect();
        let mut xhat = vec![0.0; m * n];
        for (i, row) in xv.chunks(n).enumerate() {
            for j in 0..n {
                xhat[i * n + j] = (row[j] - mean[j]) * invstd[j];
            }
        }
        let g = self.value(gamma);
        let b = self.value(beta);
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                out[i * n + j] = g[j] * xhat[i * n + j] + b[j];
            }
        }
        let needs = self.nodes[x.0].needs_grad
            || self.nodes[gamma.0].needs_grad
            || self.nodes[beta.0].needs_grad;
        let var_out = var.clone();
        let y = self.push(
            m,
            n,
            out,
            needs,
            Op::BatchNorm { x: x.0, gamma: gamma.0, beta: beta.0, invstd, xhat, batch_mode: true },
        )?;
        Ok((y, mean, var_out))
    }

    /// Batch normalization with fixed (running) statistics.
    pub fn batch_norm_infer(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        running_mean: &[f64],
        running_var: &[f64],
        eps: f64,
    ) -> Result<Var> {
        let (m, n) = self.shape(x);
        self.check_bn_affine(gamma, beta, n)?;
        if running_mean.len() != n || running_var.len() != n {
            return Err(TensorError::Shape("batch_norm: running stats length".into()));
        }
        let invstd: Vec<f64> = running_var.iter().map(|v| 1.0 / (v + eps).sqrt()).collect();
        let xv = self.value(x);
        let mut xhat = vec![0.0; m * n];
        for (i, row) in xv.chunks(n).enumerate() {
            for j in 0..n {
                xhat[i * n + j] = (row[j] - running_mean[j]) * invstd[j];
            }
        }
        let g = self.value(gamma);
        let b = self.value(beta);
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                out[i * n + j] = g[j] * xhat[i * n + j] + b[j];
            }
        }
        let needs = self.nodes[x.0].needs_grad
            || self.nodes[gamma.0].needs_grad
            || self.nodes[beta.0].needs_grad;
        self.push(
            m,
            n,
            out,
            needs,
            Op::BatchNorm { x: x.0, gamma: gamma.0, beta: beta.0, invstd, xhat, batch_mode: false },
        )
    }

    fn check_bn_affine(&self, gamma: Var, beta: Var, n: usize) -> Result<()> {
        for (what, v) in [("gamma", gamma), ("beta", beta)] {
            let (r, c) = self.shape(v);
            if r != 1 || c != n {
                return Err(TensorError::Shape(format!("batch_norm {what}: {r}x{c}, want 1x{n}")));
            }
        }
        Ok(())
    }

    /// Fused message-aggregation primitive: for every edge `e = (src, dst)`
    /// accumulates the outer product `a[e] (x) h[src]` into output row
    /// `dst`, flattened to `H * F` columns. With `a` holding edge-network
    /// activations this computes the neighbor sum of an edge-conditioned
    /// convolution without materializing per-edge weight matrices.
    pub fn segment_outer(&mut self, a: Var, h: Var, edges: Arc<EdgeIndex>) -> Result<Var> {
        let (e_rows, hdim) = self.shape(a);
        let (v_rows, fdim) = self.shape(h);
        if e_rows != edges.n_edges() || v_rows != edges.n_nodes() {
            return Err(TensorError::Shape(format!(
                "segment_outer: {e_rows} edge rows / {v_rows} node rows vs index ({}, {})",
                edges.n_edges(),
                edges.n_nodes()
            )));
        }
        let out_cols = hdim * fdim;
        let mut out = vec![0.0; v_rows * out_cols];
        {
            let av = &self.nodes[a.0].value;
            let hv = &self.nodes[h.0].value;
            let starts = &edges.dst_starts;
            out.par_chunks_mut(out_cols).enumerate().for_each(|(i, dst_row)| {
                for e in starts[i] as usize..starts[i + 1] as usize {
                    let j = edges.src[e] as usize;
                    let h_row = &hv[j * fdim..(j + 1) * fdim];
                    let a_row = &av[e * hdim..(e + 1) * hdim];
                    for (t, &at) in a_row.iter().enumerate() {
                        let block = &mut dst_row[t * fdim..(t + 1) * fdim];
                        for (o, &hvv) in block.iter_mut().zip(h_row) {
                            *o += at * hvv;
                        }
                    }
                }
            });
        }
        let needs = self.nodes[a.0].needs_grad || self.nodes[h.0].needs_grad;
        self.push(v_rows, out_cols, out, needs, Op::SegmentOuter { a: a.0, h: h.0, edges })
    }

    /// Reverse pass from a scalar loss; gradients of parameter leaves are
    /// accumulated additively into `params.grad`.
    pub fn backward(&mut self, loss: Var, params: &mut ParamSet) -> Result<()> {
        let node = &self.nodes[loss.0];
        if node.rows * node.cols != 1 {
            return Err(TensorError::Shape(format!(
                "backward requires a scalar loss, got {}x{}",
                node.rows, node.cols
            )));
        }
        if !node.value[0].is_finite() {
            return Err(TensorError::NonFinite("loss".into()));
        }
        let mut grads: Vec<Option<Vec<f64>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(vec![1.0]);

        for id in (0..self.nodes.len()).rev() {
            if !self.nodes[id].needs_grad {
                grads[id] = None;
                continue;
            }
            let Some(g) = grads[id].take() else { continue };
            self.dispatch_backward(id, &g, &mut grads);
            if let Some(pi) = self.nodes[id].param {
                params.accumulate_grad(pi, &g);
            }
        }
        Ok(())
    }

    fn ensure<'a>(
        grads: &'a mut [Option<Vec<f64>>],
        nodes: &[Node],
        id: usize,
    ) -> Option<&'a mut Vec<f64>> {
        if !nodes[id].needs_grad {
            return None;
        }
        let len = nodes[id].value.len();
        Some(grads[id].get_or_insert_with(|| vec![0.0; len]))
    }

    fn dispatch_backward(&self, id: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let nodes = &self.nodes;
        match &nodes[id].op {
            Op::Leaf => {}
            Op::Matmul(a, b) => {
                let (m, k) = (nodes[*a].rows, nodes[*a].cols);
                let n = nodes[*b].cols;
                if nodes[*a].needs_grad {
                    let bt = transpose(k, n, &nodes[*b].value);
                    let da = Self::ensure(grads, nodes, *a).unwrap();
                    gemm_into(m, n, k, g, &bt, da, true);
                }
                if nodes[*b].needs_grad {
                    let at = transpose(m, k, &nodes[*a].value);
                    let db = Self::ensure(grads, nodes, *b).unwrap();
                    gemm_into(k, m, n, &at, g, db, true);
                }
            }
            Op::Add(a, b) => {
                for inp in [*a, *b] {
                    if let Some(d) = Self::ensure(grads, nodes, inp) {
                        for (dv, gv) in d.iter_mut().zip(g) {
                            *dv += gv;
                        }
                    }
                }
            }
            Op::Sub(a, b) => {
                if let Some(d) = Self::ensure(grads, nodes, *a) {
                    for (dv, gv) in d.iter_mut().zip(g) {
                        *dv += gv;
                    }
                }
                if let Some(d) = Self::ensure(grads, nodes, *b) {
                    for (dv, gv) in d.iter_mut().zip(g) {
                        *dv -= gv;
                    }
                }
            }
            Op::Mul(a, b) => {
                let (a, b) = (*a, *b);
                if nodes[a].needs_grad {
                    let other = nodes[b].value.clone();
                    let d = Self::ensure(grads, nodes, a).unwrap();
                    for ((dv, gv), ov) in d.iter_mut().zip(g).zip(&other) {
                        *dv += gv * ov;
                    }
                }
                if nodes[b].needs_grad {
                    let other = nodes[a].value.clone();
                    let d = Self::ensure(grads, nodes, b).unwrap();
                    for ((dv, gv), ov) in d.iter_mut().zip(g).zip(&other) {
                        *dv += gv * ov;
                    }
                }
            }
            Op::AddRow(a, bias) => {
                let n = nodes[*bias].cols;
                if let Some(d) = Self::ensure(grads, nodes, *a) {
                    for (dv, gv) in d.iter_mut().zip(g) {
                        *dv += gv;
                    }
                }
                if let Some(d) = Self::ensure(grads, nodes, *bias) {
                    for row in g.chunks(n) {
                        for (dv, gv) in d.iter_mut().zip(row) {
                            *dv += gv;
                        }
                    }
                }
            }
            Op::Scale(a, c) => {
                if let Some(d) = Self::ensure(grads, nodes, *a) {
                    for (dv, gv) in d.iter_mut().zip(g) {
                        *dv += gv * c;
                    }
                }
            }
            Op::AddScalar(a) => {
                if let Some(d) = Self::ensure(grads, nodes, *a) {
                    for (dv, gv) in d.iter_mut().zip(g) {
                        *dv += gv;
                    }
                }
            }
            Op::Relu(a) => {
                let a = *a;
                if nodes[a].needs_grad {
                    let x = &nodes[a].value;
                    let mask: Vec<f64> = x.iter().map(|&v| if v > 0.0 { 1.0 } else { 0.0 }).collect();
                    let d = Self::ensure(grads, nodes, a).unwrap();
                    for ((dv, gv), m) in d.iter_mut().zip(g).zip(&mask) {
                        *dv += gv * m;
                    }
                }
            }
            Op::Gelu(a) => {
                let a = *a;
                if nodes[a].needs_grad {
                    let slopes: Vec<f64> = nodes[a].value.iter().map(|&x| gelu_grad_scalar(x)).collect();
                    let d = Self::ensure(grads, nodes, a).unwrap();
                    for ((dv, gv), s) in d.iter_mut().zip(g).zip(&slopes) {
                        *dv += gv * s;
                    }
                }
            }
            Op::Abs(a) => {
                let a = *a;
                if nodes[a].needs_grad {
                    let signs: Vec<f64> = nodes[a].value.iter().map(|&x| x.signum() * f64::from(x != 0.0)).collect();
                    let d = Self::ensure(grads, nodes, a).unwrap();
                    for ((dv, gv), s) in d.iter_mut().zip(g).zip(&signs) {
                        *dv += gv * s;
                    }
                }
            }
            Op::Exp(a) => {
                let a = *a;
                if nodes[a].needs_grad {
                    let y = nodes[id].value.clone();
                    let d = Self::ensure(grads, nodes, a).unwrap();
                    for ((dv, gv), yv) in d.iter_mut().zip(g).zip(&y) {
                        *dv += gv * yv;
                    }
                }
            }
            Op::SumAll(a) => {
                if let Some(d) = Self::ensure(grads, nodes, *a) {
                    for dv in d.iter_mut() {
                        *dv += g[0];
                    }
                }
            }
            Op::RowSum(a) => {
                let n = nodes[*a].cols;
                if let Some(d) = Self::ensure(grads, nodes, *a) {
                    for (i, row) in d.chunks_mut(n).enumerate() {
                        for dv in row {
                            *dv += g[i];
                        }
                    }
                }
            }
            Op::SegmentSum(a, seg) => {
                let n = nodes[*a].cols;
                let seg = Arc::clone(seg);
                if let Some(d) = Self::ensure(grads, nodes, *a) {
                    for (i, &s) in seg.iter().enumerate() {
                        let src = &g[s as usize * n..(s as usize + 1) * n];
                        for (dv, gv) in d[i * n..(i + 1) * n].iter_mut().zip(src) {
                            *dv += gv;
                        }
                    }
                }
            }
            Op::SegmentGather(a, seg) => {
                let n = nodes[*a].cols;
                let seg = Arc::clone(seg);
                if let Some(d) = Self::ensure(grads, nodes, *a) {
                    for (i, &s) in seg.iter().enumerate() {
                        let dst = &mut d[s as usize * n..(s as usize + 1) * n];
                        for (dv, gv) in dst.iter_mut().zip(&g[i * n..(i + 1) * n]) {
                            *dv += gv;
                        }
                    }
                }
            }
            Op::GatherRows(a, idx) => {
                let n = nodes[*a].cols;
                let idx = Arc::clone(idx);
                if let Some(d) = Self::ensure(grads, nodes, *a) {
                    for (i, &r) in idx.iter().enumerate() {
                        let dst = &mut d[r as usize * n..(r as usize + 1) * n];
                        for (dv, gv) in dst.iter_mut().zip(&g[i * n..(i + 1) * n]) {
                            *dv += gv;
                        }
                    }
                }
            }
            Op::ConcatCols(a, b) => {
                let (ca, cb) = (nodes[*a].cols, nodes[*b].cols);
                let n = ca + cb;
                if let Some(d) = Self::ensure(grads, nodes, *a) {
                    for (i, row) in d.chunks_mut(ca).enumerate() {
                        for (dv, gv) in row.iter_mut().zip(&g[i * n..i * n + ca]) {
                            *dv += gv;
                        }
                    }
                }
                if let Some(d) = Self::ensure(grads, nodes, *b) {
                    for (i, row) in d.chunks_mut(cb).enumerate() {
                        for (dv, gv) in row.iter_mut().zip(&g[i * n + ca..(i + 1) * n]) {
                            *dv += gv;
                        }
                    }
                }
            }
            Op::Dropout(a, mask) => {
                let a = *a;
                if nodes[a].needs_grad {
                    let mask = mask.clone();
                    let d = Self::ensure(grads, nodes, a).unwrap();
                    for ((dv, gv), m) in d.iter_mut().zip(g).zip(&mask) {
                        *dv += gv * m;
                    }
                }
            }
            Op::BatchNorm { x, gamma, beta, invstd, xhat, batch_mode } => {
                let n = nodes[*gamma].cols;
                let m = nodes[*x].rows;
                let gamma_val = nodes[*gamma].value.clone();
                // Per-column reductions of dy and dy*xhat.
                let mut sum_dy = vec![0.0; n];
                let mut sum_dy_xhat = vec![0.0; n];
                for (i, row) in g.chunks(n).enumerate() {
                    for j in 0..n {
                        sum_dy[j] += row[j];
                        sum_dy_xhat[j] += row[j] * xhat[i * n + j];
                    }
                }
                if let Some(d) = Self::ensure(grads, nodes, *beta) {
                    for (dv, s) in d.iter_mut().zip(&sum_dy) {
                        *dv += s;
                    }
                }
                if let Some(d) = Self::ensure(grads, nodes, *gamma) {
                    for (dv, s) in d.iter_mut().zip(&sum_dy_xhat) {
                        *dv += s;
                    }
                }
                if nodes[*x].needs_grad {
                    let (xhat, invstd) = (xhat.clone(), invstd.clone());
                    let batch_mode = *batch_mode;
                    let d = Self::ensure(grads, nodes, *x).unwrap();
                    let mf = m as f64;
                    for i in 0..m {
                        for j in 0..n {
                            let gij = g[i * n + j];
                            let dx = if batch_mode {
                                gamma_val[j]
                                    * invstd[j]
                                    * (gij - sum_dy[j] / mf - xhat[i * n + j] * sum_dy_xhat[j] / mf)
                            } else {
                                gamma_val[j] * invstd[j] * gij
                            };
                            d[i * n + j] += dx;
                        }
                    }
                }
            }
            Op::SegmentOuter { a, h, edges } => {
                let hdim = nodes[*a].cols;
                let fdim = nodes[*h].cols;
                let out_cols = hdim * fdim;
                let edges = Arc::clone(edges);
                if nodes[*a].needs_grad {
                    let hv = nodes[*h].value.clone();
                    let d = Self::ensure(grads, nodes, *a).unwrap();
                    d.par_chunks_mut(hdim).enumerate().for_each(|(e, a_row)| {
                        let i = edges.dst[e] as usize;
                        let j = edges.src[e] as usize;
                        let g_row = &g[i * out_cols..(i + 1) * out_cols];
                        let h_row = &hv[j * fdim..(j + 1) * fdim];
                        for (t, out) in a_row.iter_mut().enumerate() {
                            let block = &g_row[t * fdim..(t + 1) * fdim];
                            *out += block.iter().zip(h_row).map(|(x, y)| x * y).sum::<f64>();
                        }
                    });
                }
                if nodes[*h].needs_grad {
                    let av = nodes[*a].value.clone();
                    let starts = edges.src_starts.clone();
                    let d = Self::ensure(grads, nodes, *h).unwrap();
                    d.par_chunks_mut(fdim).enumerate().for_each(|(j, h_row)| {
                        for &e in &edges.by_src[starts[j] as usize..starts[j + 1] as usize] {
                            let e = e as usize;
                            let i = edges.dst[e] as usize;
                            let g_row = &g[i * out_cols..(i + 1) * out_cols];
                            let a_row = &av[e * hdim..(e + 1) * hdim];
                            for (t, &at) in a_row.iter().enumerate() {
                                let block = &g_row[t * fdim..(t + 1) * fdim];
                                for (o, &gv) in h_row.iter_mut().zip(block) {
                                    *o += at * gv;
                                }
                            }
                        }
                    });
                }
            }
        }
    }
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

fn op_name(op: &Op) -> &'static str {
    match op {
        Op::Leaf => "leaf",
        Op::Matmul(..) => "matmul",
        Op::Add(..) => "add",
        Op::Sub(..) => "sub",
        Op::Mul(..) => "mul",
        Op::AddRow(..) => "add_row",
        Op::Scale(..) => "scale",
        Op::AddScalar(..) => "add_scalar",
        Op::Relu(..) => "relu",
        Op::Gelu(..) => "gelu",
        Op::Abs(..) => "abs",
        Op::Exp(..) => "exp",
        Op::SumAll(..) => "sum_all",
        Op::RowSum(..) => "row_sum",
        Op::SegmentSum(..) => "segment_sum",
        Op::SegmentGather(..) => "segment_gather",
        Op::GatherRows(..) => "gather_rows",
        Op::ConcatCols(..) => "concat_cols",
        Op::Dropout(..) => "dropout",
        Op::BatchNorm { .. } => "batch_norm",
        Op::SegmentOuter { .. } => "segment_outer",
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn segment_sum_matches_worked_example() {
        let mut tape = Tape::new();
        let a = tape.constant(3, 2, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let s = tape.segment_sum(a, Arc::new(vec![0, 0, 1]), 2).unwrap();
        assert_eq!(tape.value(s), &[4.0, 6.0, 5.0, 6.0]);
    }

    #[test]
    fn relu_and_gelu_point_values() {
        let mut tape = Tape::new();
        let x = tape.constant(1, 3, vec![-2.0, 0.0, 3.0]);
        let r = tape.relu(x).unwrap();
        assert_eq!(tape.value(r), &[0.0, 0.0, 3.0]);
        let g = tape.gelu(x).unwrap();
        assert_eq!(tape.value(g)[1], 0.0);
        // GELU(3) is within a milli of 3 under the tanh approximation.
        assert!((tape.value(g)[2] - 3.0).abs() < 5e-3);
        assert!(tape.value(g)[0].abs() < 0.06);
    }

    #[test]
    fn backward_of_sum_wx_broadcasts_x() {
        let mut params = ParamSet::new();
        let w = params.add("w", vec![2, 2], vec![0.5, -1.0, 2.0, 0.25], true);
        let mut tape = Tape::new();
        let wv = tape.param(&params, w);
        let x = tape.constant(2, 1, vec![3.0, 7.0]);
        let y = tape.matmul(wv, x).unwrap();
        let loss = tape.sum_all(y).unwrap();
        tape.backward(loss, &mut params).unwrap();
        assert_eq!(params.get(w).grad, vec![3.0, 7.0, 3.0, 7.0]);
    }

    #[test]
    fn two_backward_calls_double_gradients() {
        let mut params = ParamSet::new();
        let w = params.add("w", vec![1, 2], vec![1.0, -2.0], true);
        let run = |params: &mut ParamSet| {
            let mut tape = Tape::new();
            let wv = tape.param(params, 0);
            let sq = tape.mul(wv, wv).unwrap();
            let loss = tape.sum_all(sq).unwrap();
            tape.backward(loss, params).unwrap();
        };
        run(&mut params);
        let once = params.get(w).grad.clone();
        run(&mut params);
        let twice = params.get(w).grad.clone();
        assert_eq!(twice, once.iter().map(|g| 2.0 * g).collect::<Vec<_>>());
    }

    #[test]
    fn non_scalar_loss_is_rejected() {
        let mut params = ParamSet::new();
        params.add("w", vec![1, 2], vec![1.0, 2.0], true);
        let mut tape = Tape::new();
        let wv = tape.param(&params, 0);
        assert!(matches!(tape.backward(wv, &mut params), Err(TensorError::Shape(_))));
    }

    #[test]
    fn nan_check_catches_poisoned_values() {
        let mut tape = Tape::with_nan_check(true);
        let x = tape.constant(1, 1, vec![1e308]);
        let doubled = tape.add(x, x);
        assert!(matches!(doubled, Err(TensorError::NonFinite(_))));
    }

    #[test]
    fn batch_norm_normalizes_batch() {
        let mut params = ParamSet::new();
        let g = params.add("g", vec![1, 2], vec![1.0, 1.0], true);
        let b = params.add("b", vec![1, 2], vec![0.0, 0.0], true);
        let mut tape = Tape::new();
        let gv = tape.param(&params, g);
        let bv = tape.param(&params, b);
        let x = tape.constant(4, 2, vec![1.0, -5.0, 2.0, 3.0, 3.0, 10.0, 4.0, 0.0]);
        let (y, mean, var) = tape.batch_norm_train(x, gv, bv, 1e-5).unwrap();
        assert!((mean[0] - 2.5).abs() < 1e-12);
        let yv = tape.value(y);
        for j in 0..2 {
            let m: f64 = (0..4).map(|i| yv[i * 2 + j]).sum::<f64>() / 4.0;
            let v: f64 = (0..4).map(|i| (yv[i * 2 + j] - m).powi(2)).sum::<f64>() / 4.0;
            assert!(m.abs() < 1e-6, "column mean {m}");
            assert!((v - 1.0).abs() < 1e-4, "column var {v}");
        }
        assert!(var[0] > 0.0);
    }

    #[test]
    fn dropout_masks_and_rescales() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let mut tape = Tape::new();
        let x = tape.constant(1, 1000, vec![1.0; 1000]);
        let y = tape.dropout(x, 0.25, &mut rng).unwrap();
        let yv = tape.value(y);
        let kept = yv.iter().filter(|v| **v > 0.0).count();
        assert!((600..900).contains(&kept));
        for v in yv {
            assert!(*v == 0.0 || (*v - 1.0 / 0.75).abs() < 1e-12);
        }
        let mean = yv.iter().sum::<f64>() / 1000.0;
        assert!((mean - 1.0).abs() < 0.1);
    }
}
