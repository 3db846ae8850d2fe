//! Tape-based reverse-mode differentiation over row-major matrices.
//!
//! A [`Graph`] records one forward computation. Parameter values are copied
//! onto the tape the first time they are used, so the store is free to be
//! mutated once the graph has produced its gradients.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;

use super::tensor::{ParamId, ParamStore};
use crate::error::{Error, Result};
use crate::math;

/// Handle to a value recorded on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(usize);

#[derive(Debug, Clone)]
enum Op {
    Const,
    Param(ParamId),
    MatMul { a: NodeId, b: NodeId, trans_b: bool },
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Scale(NodeId, f64),
    Sigmoid(NodeId),
    Tanh(NodeId),
    Relu(NodeId),
    Log(NodeId),
    LogSigmoid(NodeId),
    ConcatCols(Vec<NodeId>),
    ConcatRows(Vec<NodeId>),
    SliceCols { a: NodeId, start: usize },
    SoftmaxRows(NodeId),
    LogSoftmaxRows(NodeId),
    Embedding { table: NodeId, ids: Vec<usize> },
    Dropout { a: NodeId, mask: Vec<f64> },
    Sum(NodeId),
    Pick { a: NodeId, index: usize },
}

#[derive(Debug, Clone)]
struct Node {
    rows: usize,
    cols: usize,
    value: Vec<f64>,
    op: Op,
    needs_grad: bool,
}

/// Per-parameter gradients produced by [`Graph::gradients`].
#[derive(Debug, Clone, Default)]
pub struct ParamGrads {
    pub entries: Vec<(ParamId, Vec<f64>)>,
}

impl ParamGrads {
    pub fn get(&self, id: ParamId) -> Option<&[f64]> {
        self.entries.iter().find(|(p, _)| *p == id).map(|(_, g)| g.as_slice())
    }

    /// Concatenates the gradients of `ids` in order, zero-filling parameters
    /// the loss did not reach.
    pub fn flatten(&self, store: &ParamStore, ids: &[ParamId]) -> Vec<f64> {
        let mut out = Vec::new();
        for &id in ids {
            match self.get(id) {
                Some(g) => out.extend_from_slice(g),
                None => out.extend(core::iter::repeat_n(0.0, store.get(id).len())),
            }
        }
        out
    }
}

/// A single forward computation and its reverse pass.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    param_nodes: Vec<Option<NodeId>>,
    train: bool,
}

fn shape_err(op: &'static str, detail: alloc::string::String) -> Error {
    Error::Shape { op, detail }
}

impl Graph {
    /// Graph in inference mode (dropout disabled).
    pub fn new() -> Self {
        Self::default()
    }

    /// Graph in training mode (dropout active).
    pub fn training() -> Self {
        Self {
            train: true,
            ..Self::default()
        }
    }

    pub fn is_training(&self) -> bool {
        self.train
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &[f64] {
        &self.nodes[id.0].value
    }

    pub fn scalar(&self, id: NodeId) -> f64 {
        self.nodes[id.0].value[0]
    }

    pub fn dims(&self, id: NodeId) -> (usize, usize) {
        let n = &self.nodes[id.0];
        (n.rows, n.cols)
    }

    fn push(&mut self, rows: usize, cols: usize, value: Vec<f64>, op: Op, needs_grad: bool) -> NodeId {
        debug_assert_eq!(rows * cols, value.len());
        self.nodes.push(Node {
            rows,
            cols,
            value,
            op,
            needs_grad,
        });
        NodeId(self.nodes.len() - 1)
    }

    fn ng(&self, id: NodeId) -> bool {
        self.nodes[id.0].needs_grad
    }

    /// A constant with no gradient.
    pub fn constant(&mut self, rows: usize, cols: usize, value: Vec<f64>) -> Result<NodeId> {
        if rows * cols != value.len() {
            return Err(shape_err("constant", alloc::format!("{rows}x{cols} vs {} values", value.len())));
        }
        Ok(self.push(rows, cols, value, Op::Const, false))
    }

    pub fn scalar_const(&mut self, v: f64) -> NodeId {
        self.push(1, 1, vec![v], Op::Const, false)
    }

    pub fn zeros(&mut self, rows: usize, cols: usize) -> NodeId {
        self.push(rows, cols, vec![0.0; rows * cols], Op::Const, false)
    }

    /// Records a parameter; repeated calls return the same node.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> NodeId {
        if let Some(Some(n)) = self.param_nodes.get(id.0) {
            return *n;
        }
        let t = store.get(id);
        let (rows, cols) = t.dims2();
        let node = self.push(rows, cols, t.values().to_vec(), Op::Param(id), true);
        if self.param_nodes.len() <= id.0 {
            self.param_nodes.resize(id.0 + 1, None);
        }
        self.param_nodes[id.0] = Some(node);
        node
    }

    fn matmul_impl(&mut self, a: NodeId, b: NodeId, trans_b: bool) -> Result<NodeId> {
        let (m, k) = self.dims(a);
        let (br, bc) = self.dims(b);
        let (kb, n) = if trans_b { (bc, br) } else { (br, bc) };
        if k != kb {
            return Err(shape_err(
                "matmul",
                alloc::format!("{m}x{k} by {br}x{bc}{}", if trans_b { "^T" } else { "" }),
            ));
        }
        let av = &self.nodes[a.0].value;
        let bv = &self.nodes[b.0].value;
        let mut out = vec![0.0; m * n];
        if trans_b {
            for i in 0..m {
                let ar = &av[i * k..(i + 1) * k];
                for j in 0..n {
                    let brow = &bv[j * k..(j + 1) * k];
                    out[i * n + j] = ar.iter().zip(brow).map(|(x, y)| x * y).sum();
                }
            }
        } else {
            for i in 0..m {
                let orow = &mut out[i * n..(i + 1) * n];
                for p in 0..k {
                    let x = av[i * k + p];
                    if x == 0.0 {
                        continue;
                    }
                    let brow = &bv[p * n..(p + 1) * n];
                    for (o, y) in orow.iter_mut().zip(brow) {
                        *o += x * y;
                    }
                }
            }
        }
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(m, n, out, Op::MatMul { a, b, trans_b }, ng))
    }

    /// `a · b`.
    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.matmul_impl(a, b, false)
    }

    /// `a · bᵀ`.
    pub fn matmul_t(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.matmul_impl(a, b, true)
    }

    fn broadcast_check(&self, op: &'static str, a: NodeId, b: NodeId) -> Result<()> {
        let (ar, ac) = self.dims(a);
        let (br, bc) = self.dims(b);
        if ac != bc || (br != ar && br != 1) {
            return Err(shape_err(op, alloc::format!("{ar}x{ac} with {br}x{bc}")));
        }
        Ok(())
    }

    /// Elementwise sum; `b` may be a single row broadcast over `a`'s rows.
    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.broadcast_check("add", a, b)?;
        let (rows, cols) = self.dims(a);
        let bv = &self.nodes[b.0].value;
        let bl = bv.len();
        let out = self.nodes[a.0].value.iter().enumerate().map(|(i, x)| x + bv[i % bl]).collect();
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(rows, cols, out, Op::Add(a, b), ng))
    }

    /// Elementwise difference; `b` may broadcast as in [`Graph::add`].
    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.broadcast_check("sub", a, b)?;
        let (rows, cols) = self.dims(a);
        let bv = &self.nodes[b.0].value;
        let bl = bv.len();
        let out = self.nodes[a.0].value.iter().enumerate().map(|(i, x)| x - bv[i % bl]).collect();
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(rows, cols, out, Op::Sub(a, b), ng))
    }

    /// Elementwise (Hadamard) product of same-shaped nodes.
    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        if self.dims(a) != self.dims(b) {
            return Err(shape_err("mul", alloc::format!("{:?} vs {:?}", self.dims(a), self.dims(b))));
        }
        let (rows, cols) = self.dims(a);
        let out = self.nodes[a.0].value.iter().zip(&self.nodes[b.0].value).map(|(x, y)| x * y).collect();
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(rows, cols, out, Op::Mul(a, b), ng))
    }

    pub fn scale(&mut self, a: NodeId, s: f64) -> NodeId {
        let (rows, cols) = self.dims(a);
        let out = self.nodes[a.0].value.iter().map(|x| x * s).collect();
        let ng = self.ng(a);
        self.push(rows, cols, out, Op::Scale(a, s), ng)
    }

    fn unary(&mut self, a: NodeId, f: impl Fn(f64) -> f64, op: Op) -> NodeId {
        let (rows, cols) = self.dims(a);
        let out = self.nodes[a.0].value.iter().map(|&x| f(x)).collect();
        let ng = self.ng(a);
        self.push(rows, cols, out, op, ng)
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        self.unary(a, math::sigmoid, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        self.unary(a, math::tanh, Op::Tanh(a))
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        self.unary(a, |x| if x > 0.0 { x } else { 0.0 }, Op::Relu(a))
    }

    /// Natural log; non-positive inputs yield non-finite values.
    pub fn log(&mut self, a: NodeId) -> NodeId {
        self.unary(a, math::ln, Op::Log(a))
    }

    /// `log σ(x)`, computed without forming `σ(x)`.
    pub fn log_sigmoid(&mut self, a: NodeId) -> NodeId {
        self.unary(a, log_sigmoid, Op::LogSigmoid(a))
    }

    pub fn concat_cols(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        let rows = parts.first().map(|p| self.dims(*p).0).ok_or(Error::Empty("concat_cols"))?;
        if parts.iter().any(|p| self.dims(*p).0 != rows) {
            return Err(shape_err("concat_cols", "row counts differ".into()));
        }
        let cols: usize = parts.iter().map(|p| self.dims(*p).1).sum();
        let mut out = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for p in parts {
                let (_, c) = self.dims(*p);
                out.extend_from_slice(&self.nodes[p.0].value[r * c..(r + 1) * c]);
            }
        }
        let ng = parts.iter().any(|p| self.ng(*p));
        Ok(self.push(rows, cols, out, Op::ConcatCols(parts.to_vec()), ng))
    }

    pub fn concat_rows(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        let cols = parts.first().map(|p| self.dims(*p).1).ok_or(Error::Empty("concat_rows"))?;
        if parts.iter().any(|p| self.dims(*p).1 != cols) {
            return Err(shape_err("concat_rows", "column counts differ".into()));
        }
        let mut out = Vec::new();
        let mut rows = 0;
        for p in parts {
            out.extend_from_slice(&self.nodes[p.0].value);
            rows += self.dims(*p).0;
        }
        let ng = parts.iter().any(|p| self.ng(*p));
        Ok(self.push(rows, cols, out, Op::ConcatRows(parts.to_vec()), ng))
    }

    /// Columns `start..start + len` of every row.
    pub fn slice_cols(&mut self, a: NodeId, start: usize, len: usize) -> Result<NodeId> {
        let (rows, cols) = self.dims(a);
        if start + len > cols {
            return Err(shape_err("slice_cols", alloc::format!("{start}+{len} > {cols}")));
        }
        let v = &self.nodes[a.0].value;
        let mut out = Vec::with_capacity(rows * len);
        for r in 0..rows {
            out.extend_from_slice(&v[r * cols + start..r * cols + start + len]);
        }
        let ng = self.ng(a);
        Ok(self.push(rows, len, out, Op::SliceCols { a, start }, ng))
    }

    /// Row-wise softmax.
    pub fn softmax_rows(&mut self, a: NodeId) -> NodeId {
        let (rows, cols) = self.dims(a);
        let v = &self.nodes[a.0].value;
        let mut out = vec![0.0; rows * cols];
        for r in 0..rows {
            softmax_into(&v[r * cols..(r + 1) * cols], &mut out[r * cols..(r + 1) * cols]);
        }
        let ng = self.ng(a);
        self.push(rows, cols, out, Op::SoftmaxRows(a), ng)
    }

    pub fn log_softmax_rows(&mut self, a: NodeId) -> NodeId {
        let (rows, cols) = self.dims(a);
        let v = &self.nodes[a.0].value;
        let mut out = vec![0.0; rows * cols];
        for r in 0..rows {
            let row = &v[r * cols..(r + 1) * cols];
            let lse = log_sum_exp(row);
            for (o, x) in out[r * cols..(r + 1) * cols].iter_mut().zip(row) {
                *o = x - lse;
            }
        }
        let ng = self.ng(a);
        self.push(rows, cols, out, Op::LogSoftmaxRows(a), ng)
    }

    /// Gathers rows `ids` of `table`.
    pub fn embedding(&mut self, table: NodeId, ids: &[usize]) -> Result<NodeId> {
        let (rows, cols) = self.dims(table);
        if let Some(bad) = ids.iter().find(|&&i| i >= rows) {
            return Err(shape_err("embedding", alloc::format!("id {bad} >= {rows}")));
        }
        let v = &self.nodes[table.0].value;
        let mut out = Vec::with_capacity(ids.len() * cols);
        for &i in ids {
            out.extend_from_slice(&v[i * cols..(i + 1) * cols]);
        }
        let ng = self.ng(table);
        Ok(self.push(ids.len(), cols, out, Op::Embedding { table, ids: ids.to_vec() }, ng))
    }

    /// Inverted dropout: survivors scaled by `1/(1-p)`. Identity outside
    /// training mode or when `p == 0`.
    pub fn dropout(&mut self, a: NodeId, p: f64, rng: &mut crate::Rng) -> Result<NodeId> {
        if !(0.0..1.0).contains(&p) {
            return Err(crate::error::invalid(alloc::format!("dropout probability {p} not in [0,1)")));
        }
        if !self.train || p == 0.0 {
            return Ok(a);
        }
        let (rows, cols) = self.dims(a);
        let keep = 1.0 / (1.0 - p);
        let mask: Vec<f64> = (0..rows * cols).map(|_| if rng.gen::<f64>() < p { 0.0 } else { keep }).collect();
        let out = self.nodes[a.0].value.iter().zip(&mask).map(|(x, m)| x * m).collect();
        let ng = self.ng(a);
        Ok(self.push(rows, cols, out, Op::Dropout { a, mask }, ng))
    }

    pub fn sum(&mut self, a: NodeId) -> NodeId {
        let s = self.nodes[a.0].value.iter().sum();
        let ng = self.ng(a);
        self.push(1, 1, vec![s], Op::Sum(a), ng)
    }

    /// Sums a list of nodes of identical shape.
    pub fn add_all(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        let mut it = parts.iter();
        let mut acc = *it.next().ok_or(Error::Empty("add_all"))?;
        for &p in it {
            acc = self.add(acc, p)?;
        }
        Ok(acc)
    }

    /// Element `(row, col)` of `a` as a 1×1 node.
    pub fn pick(&mut self, a: NodeId, row: usize, col: usize) -> Result<NodeId> {
        let (rows, cols) = self.dims(a);
        if row >= rows || col >= cols {
            return Err(shape_err("pick", alloc::format!("({row},{col}) outside {rows}x{cols}")));
        }
        let index = row * cols + col;
        let v = self.nodes[a.0].value[index];
        let ng = self.ng(a);
        Ok(self.push(1, 1, vec![v], Op::Pick { a, index }, ng))
    }

    /// Gradients of the scalar `loss` with respect to every parameter it
    /// reaches.
    pub fn gradients(&self, loss: NodeId) -> Result<ParamGrads> {
        if self.dims(loss) != (1, 1) {
            return Err(shape_err("backward", alloc::format!("loss must be scalar, got {:?}", self.dims(loss))));
        }
        if !self.nodes[loss.0].value[0].is_finite() {
            return Err(Error::NonFinite("loss".into()));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![1.0]);
        let mut out = ParamGrads::default();
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            self.propagate(i, &g, &mut grads);
            if let Op::Param(pid) = node.op {
                out.entries.push((pid, g));
            }
        }
        out.entries.sort_by_key(|(p, _)| *p);
        Ok(out)
    }

    /// Runs the reverse pass and adds the gradients into `store`.
    pub fn backward(&self, loss: NodeId, store: &mut ParamStore) -> Result<()> {
        let grads = self.gradients(loss)?;
        for (id, g) in &grads.entries {
            store.get_mut(*id).accumulate_grad(g);
        }
        Ok(())
    }

    fn propagate(&self, i: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[i];
        let val = |id: NodeId| -> &[f64] { &self.nodes[id.0].value };
        match &node.op {
            Op::Const | Op::Param(_) => {}
            Op::MatMul { a, b, trans_b } => {
                let (m, k) = self.dims(*a);
                let n = node.cols;
                let (av, bv) = (val(*a), val(*b));
                if self.ng(*a) {
                    let ga = slot(grads, *a, m * k);
                    for r in 0..m {
                        let grow = &g[r * n..(r + 1) * n];
                        for (j, &gj) in grow.iter().enumerate() {
                            if gj == 0.0 {
                                continue;
                            }
                            if *trans_b {
                                // b is n×k
                                let brow = &bv[j * k..(j + 1) * k];
                                for (o, y) in ga[r * k..(r + 1) * k].iter_mut().zip(brow) {
                                    *o += gj * y;
                                }
                            } else {
                                // b is k×n
                                for p in 0..k {
                                    ga[r * k + p] += gj * bv[p * n + j];
                                }
                            }
                        }
                    }
                }
                if self.ng(*b) {
                    let gb = slot(grads, *b, k * n);
                    for r in 0..m {
                        let arow = &av[r * k..(r + 1) * k];
                        let grow = &g[r * n..(r + 1) * n];
                        if *trans_b {
                            for (j, &gj) in grow.iter().enumerate() {
                                if gj == 0.0 {
                                    continue;
                                }
                                for (o, x) in gb[j * k..(j + 1) * k].iter_mut().zip(arow) {
                                    *o += gj * x;
                                }
                            }
                        } else {
                            for (p, &x) in arow.iter().enumerate() {
                                if x == 0.0 {
                                    continue;
                                }
                                for (o, gj) in gb[p * n..(p + 1) * n].iter_mut().zip(grow) {
                                    *o += x * gj;
                                }
                            }
                        }
                    }
                }
            }
            Op::Add(a, b) | Op::Sub(a, b) => {
                let sign = if matches!(node.op, Op::Sub(..)) { -1.0 } else { 1.0 };
                if self.ng(*a) {
                    add_into(slot(grads, *a, g.len()), g, 1.0);
                }
                if self.ng(*b) {
                    let bl = val(*b).len();
                    let gb = slot(grads, *b, bl);
                    for (idx, x) in g.iter().enumerate() {
                        gb[idx % bl] += sign * x;
                    }
                }
            }
            Op::Mul(a, b) => {
                if self.ng(*a) {
                    let bv = val(*b);
                    let ga = slot(grads, *a, g.len());
                    for ((o, x), y) in ga.iter_mut().zip(g).zip(bv) {
                        *o += x * y;
                    }
                }
                if self.ng(*b) {
                    let av = val(*a);
                    let gb = slot(grads, *b, g.len());
                    for ((o, x), y) in gb.iter_mut().zip(g).zip(av) {
                        *o += x * y;
                    }
                }
            }
            Op::Scale(a, s) => add_into(slot(grads, *a, g.len()), g, *s),
            Op::Sigmoid(a) => {
                let ga = slot(grads, *a, g.len());
                for ((o, x), y) in ga.iter_mut().zip(g).zip(&node.value) {
                    *o += x * y * (1.0 - y);
                }
            }
            Op::Tanh(a) => {
                let ga = slot(grads, *a, g.len());
                for ((o, x), y) in ga.iter_mut().zip(g).zip(&node.value) {
                    *o += x * (1.0 - y * y);
                }
            }
            Op::Relu(a) => {
                let av = val(*a);
                let ga = slot(grads, *a, g.len());
                for ((o, x), y) in ga.iter_mut().zip(g).zip(av) {
                    if *y > 0.0 {
                        *o += x;
                    }
                }
            }
            Op::Log(a) => {
                let av = val(*a);
                let ga = slot(grads, *a, g.len());
                for ((o, x), y) in ga.iter_mut().zip(g).zip(av) {
                    *o += x / y;
                }
            }
            Op::LogSigmoid(a) => {
                let av = val(*a);
                let ga = slot(grads, *a, g.len());
                for ((o, x), y) in ga.iter_mut().zip(g).zip(av) {
                    // d/dx log σ(x) = σ(-x)
                    *o += x * math::sigmoid(-y);
                }
            }
            Op::ConcatCols(parts) => {
                let rows = node.rows;
                let total = node.cols;
                let mut offset = 0;
                for p in parts {
                    let (_, c) = self.dims(*p);
                    if self.ng(*p) {
                        let gp = slot(grads, *p, rows * c);
                        for r in 0..rows {
                            add_into(&mut gp[r * c..(r + 1) * c], &g[r * total + offset..r * total + offset + c], 1.0);
                        }
                    }
                    offset += c;
                }
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for p in parts {
                    let n = val(*p).len();
                    if self.ng(*p) {
                        add_into(slot(grads, *p, n), &g[offset..offset + n], 1.0);
                    }
                    offset += n;
                }
            }
            Op::SliceCols { a, start } => {
                let (rows, cols) = self.dims(*a);
                let len = node.cols;
                let ga = slot(grads, *a, rows * cols);
                for r in 0..rows {
                    add_into(&mut ga[r * cols + start..r * cols + start + len], &g[r * len..(r + 1) * len], 1.0);
                }
            }
            Op::SoftmaxRows(a) => {
                let cols = node.cols;
                let ga = slot(grads, *a, g.len());
                for r in 0..node.rows {
                    let y = &node.value[r * cols..(r + 1) * cols];
                    let gr = &g[r * cols..(r + 1) * cols];
                    let dot: f64 = y.iter().zip(gr).map(|(a, b)| a * b).sum();
                    for c in 0..cols {
                        ga[r * cols + c] += y[c] * (gr[c] - dot);
                    }
                }
            }
            Op::LogSoftmaxRows(a) => {
                let cols = node.cols;
                let ga = slot(grads, *a, g.len());
                for r in 0..node.rows {
                    let y = &node.value[r * cols..(r + 1) * cols];
                    let gr = &g[r * cols..(r + 1) * cols];
                    let total: f64 = gr.iter().sum();
                    for c in 0..cols {
                        ga[r * cols + c] += gr[c] - math::exp(y[c]) * total;
                    }
                }
            }
            Op::Embedding { table, ids } => {
                let (rows, cols) = self.dims(*table);
                let gt = slot(grads, *table, rows * cols);
                for (r, &id) in ids.iter().enumerate() {
                    add_into(&mut gt[id * cols..(id + 1) * cols], &g[r * cols..(r + 1) * cols], 1.0);
                }
            }
            Op::Dropout { a, mask } => {
                let ga = slot(grads, *a, g.len());
                for ((o, x), m) in ga.iter_mut().zip(g).zip(mask) {
                    *o += x * m;
                }
            }
            Op::Sum(a) => {
                let n = val(*a).len();
                let ga = slot(grads, *a, n);
                ga.iter_mut().for_each(|o| *o += g[0]);
            }
            Op::Pick { a, index } => {
                let n = val(*a).len();
                slot(grads, *a, n)[*index] += g[0];
            }
        }
    }
}

fn slot(grads: &mut [Option<Vec<f64>>], id: NodeId, len: usize) -> &mut Vec<f64> {
    grads[id.0].get_or_insert_with(|| vec![0.0; len])
}

fn add_into(dst: &mut [f64], src: &[f64], s: f64) {
    for (d, x) in dst.iter_mut().zip(src) {
        *d += s * x;
    }
}

pub(crate) fn log_sigmoid(x: f64) -> f64 {
    // -softplus(-x)
    if x >= 0.0 {
        -libm::log1p(math::exp(-x))
    } else {
        x - libm::log1p(math::exp(x))
    }
}

pub(crate) fn log_sum_exp(row: &[f64]) -> f64 {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + math::ln(row.iter().map(|x| math::exp(x - max)).sum::<f64>())
}

/// Numerically stable softmax of `row` written into `out`.
pub fn softmax_into(row: &[f64], out: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for (o, x) in out.iter_mut().zip(row) {
        *o = math::exp(x - max);
        total += *o;
    }
    out.iter_mut().for_each(|o| *o /= total);
}
