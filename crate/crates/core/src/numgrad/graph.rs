use thiserror::Error;

use super::tensor::{softmax_rows, Tensor};

/// Handle to a node on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct NodeId(pub(crate) usize);

#[derive(Debug, Error, Clone)]
pub enum GraphError {
    #[error("non-finite values produced by op `{op}` at node {node}")]
    NonFinite { op: &'static str, node: usize },
}

#[derive(Debug)]
enum Op {
    Leaf,
    Add(NodeId, NodeId),
    /// matrix + row vector, broadcast over rows
    AddRow(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Matmul(NodeId, NodeId),
    Scale(NodeId, f64),
    Tanh(NodeId),
    Sigmoid(NodeId),
    ConcatCols(Vec<NodeId>),
    ConcatRows(Vec<NodeId>),
    SliceRows(NodeId, usize, usize),
    SliceCols(NodeId, usize, usize),
    Transpose(NodeId),
    SoftmaxRows(NodeId),
    /// row-wise log-sum-exp, output is a column vector
    LogSumExpRows(NodeId),
    SumAll(NodeId),
    /// gather rows of a table by index (embedding lookup)
    GatherRows(NodeId, Vec<usize>),
    /// column-wise max over all rows; argmax row per column recorded at forward
    MaxOverRows(NodeId, Vec<usize>),
    /// ln(max(x, eps)); gradient is zero in the clamped region
    LnClamp(NodeId, f64),
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Define-by-run computation graph. Values are computed eagerly as ops are
/// recorded; `backward` replays the record in reverse. A non-finite result
/// poisons the graph: later ops still run, and the first error is reported
/// by `status`/`backward`.
pub struct Graph {
    nodes: Vec<Node>,
    error: Option<GraphError>,
}

impl Default for Graph {
    fn default() -> Self {
        Self::new()
    }
}

impl Graph {
    pub fn new() -> Self {
        Graph {
            nodes: Vec::new(),
            error: None,
        }
    }

    pub fn status(&self) -> Result<(), GraphError> {
        match &self.error {
            Some(e) => Err(e.clone()),
            None => Ok(()),
        }
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    /// Value of a 1x1 node, checking the graph is not poisoned.
    pub fn scalar(&self, id: NodeId) -> Result<f64, GraphError> {
        self.status()?;
        let t = self.value(id);
        assert_eq!(t.numel(), 1, "scalar() on a non-scalar node");
        Ok(t.data[0])
    }

    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> NodeId {
        self.push("leaf", value, Op::Leaf, requires_grad)
    }

    pub fn constant(&mut self, value: Tensor) -> NodeId {
        self.leaf(value, false)
    }

    fn push(&mut self, name: &'static str, value: Tensor, op: Op, requires_grad: bool) -> NodeId {
        let id = NodeId(self.nodes.len());
        if self.error.is_none() && !value.is_finite() {
            self.error = Some(GraphError::NonFinite { op: name, node: id.0 });
        }
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        id
    }

    fn rg(&self, ids: &[NodeId]) -> bool {
        ids.iter().any(|i| self.nodes[i.0].requires_grad)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (ta, tb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        assert!(ta.same_shape(tb), "add shape mismatch");
        let mut out = ta.clone();
        for (o, &v) in out.data.iter_mut().zip(&tb.data) {
            *o += v;
        }
        let rg = self.rg(&[a, b]);
        self.push("add", out, Op::Add(a, b), rg)
    }

    pub fn add_row(&mut self, m: NodeId, row: NodeId) -> NodeId {
        let (tm, tr) = (&self.nodes[m.0].value, &self.nodes[row.0].value);
        assert_eq!(tr.rows, 1, "add_row: second arg must be a row vector");
        assert_eq!(tm.cols, tr.cols, "add_row shape mismatch");
        let mut out = tm.clone();
        for r in 0..out.rows {
            for c in 0..out.cols {
                out.data[r * out.cols + c] += tr.data[c];
            }
        }
        let rg = self.rg(&[m, row]);
        self.push("add_row", out, Op::AddRow(m, row), rg)
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let nb = self.scale(b, -1.0);
        self.add(a, nb)
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (ta, tb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        assert!(ta.same_shape(tb), "mul shape mismatch");
        let mut out = ta.clone();
        for (o, &v) in out.data.iter_mut().zip(&tb.data) {
            *o *= v;
        }
        let rg = self.rg(&[a, b]);
        self.push("mul", out, Op::Mul(a, b), rg)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let out = self.nodes[a.0].value.matmul(&self.nodes[b.0].value);
        let rg = self.rg(&[a, b]);
        self.push("matmul", out, Op::Matmul(a, b), rg)
    }

    pub fn scale(&mut self, a: NodeId, s: f64) -> NodeId {
        let mut out = self.nodes[a.0].value.clone();
        for o in out.data.iter_mut() {
            *o *= s;
        }
        let rg = self.rg(&[a]);
        self.push("scale", out, Op::Scale(a, s), rg)
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        let mut out = self.nodes[a.0].value.clone();
        for o in out.data.iter_mut() {
            *o = o.tanh();
        }
        let rg = self.rg(&[a]);
        self.push("tanh", out, Op::Tanh(a), rg)
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        let mut out = self.nodes[a.0].value.clone();
        for o in out.data.iter_mut() {
            *o = 1.0 / (1.0 + (-*o).exp());
        }
        let rg = self.rg(&[a]);
        self.push("sigmoid", out, Op::Sigmoid(a), rg)
    }

    pub fn concat_cols(&mut self, parts: &[NodeId]) -> NodeId {
        assert!(!parts.is_empty(), "concat_cols: empty");
        let rows = self.nodes[parts[0].0].value.rows;
        let cols: usize = parts.iter().map(|p| self.nodes[p.0].value.cols).sum();
        let mut out = Tensor::zeros(rows, cols);
        let mut off = 0;
        for p in parts {
            let t = &self.nodes[p.0].value;
            assert_eq!(t.rows, rows, "concat_cols: row mismatch");
            for r in 0..rows {
                out.data[r * cols + off..r * cols + off + t.cols]
                    .copy_from_slice(t.row_slice(r));
            }
            off += t.cols;
        }
        let rg = self.rg(parts);
        self.push("concat_cols", out, Op::ConcatCols(parts.to_vec()), rg)
    }

    pub fn concat_rows(&mut self, parts: &[NodeId]) -> NodeId {
        assert!(!parts.is_empty(), "concat_rows: empty");
        let cols = self.nodes[parts[0].0].value.cols;
        let rows: usize = parts.iter().map(|p| self.nodes[p.0].value.rows).sum();
        let mut data = Vec::with_capacity(rows * cols);
        for p in parts {
            let t = &self.nodes[p.0].value;
            assert_eq!(t.cols, cols, "concat_rows: col mismatch");
            data.extend_from_slice(&t.data);
        }
        let rg = self.rg(parts);
        self.push(
            "concat_rows",
            Tensor::new(rows, cols, data),
            Op::ConcatRows(parts.to_vec()),
            rg,
        )
    }

    pub fn slice_rows(&mut self, a: NodeId, from: usize, to: usize) -> NodeId {
        let t = &self.nodes[a.0].value;
        assert!(from < to && to <= t.rows, "slice_rows out of range");
        let out = Tensor::new(
            to - from,
            t.cols,
            t.data[from * t.cols..to * t.cols].to_vec(),
        );
        let rg = self.rg(&[a]);
        self.push("slice_rows", out, Op::SliceRows(a, from, to), rg)
    }

    pub fn slice_cols(&mut self, a: NodeId, from: usize, to: usize) -> NodeId {
        let t = &self.nodes[a.0].value;
        assert!(from < to && to <= t.cols, "slice_cols out of range");
        let mut out = Tensor::zeros(t.rows, to - from);
        for r in 0..t.rows {
            out.data[r * (to - from)..(r + 1) * (to - from)]
                .copy_from_slice(&t.row_slice(r)[from..to]);
        }
        let rg = self.rg(&[a]);
        self.push("slice_cols", out, Op::SliceCols(a, from, to), rg)
    }

    pub fn transpose(&mut self, a: NodeId) -> NodeId {
        let out = self.nodes[a.0].value.transposed();
        let rg = self.rg(&[a]);
        self.push("transpose", out, Op::Transpose(a), rg)
    }

    pub fn softmax_rows(&mut self, a: NodeId) -> NodeId {
        let out = softmax_rows(&self.nodes[a.0].value);
        let rg = self.rg(&[a]);
        self.push("softmax_rows", out, Op::SoftmaxRows(a), rg)
    }

    pub fn log_sum_exp_rows(&mut self, a: NodeId) -> NodeId {
        let t = &self.nodes[a.0].value;
        let mut out = Tensor::zeros(t.rows, 1);
        for r in 0..t.rows {
            out.data[r] = super::tensor::log_sum_exp(t.row_slice(r));
        }
        let rg = self.rg(&[a]);
        self.push("log_sum_exp_rows", out, Op::LogSumExpRows(a), rg)
    }

    pub fn sum_all(&mut self, a: NodeId) -> NodeId {
        let s: f64 = self.nodes[a.0].value.data.iter().sum();
        let rg = self.rg(&[a]);
        self.push("sum_all", Tensor::new(1, 1, vec![s]), Op::SumAll(a), rg)
    }

    pub fn gather_rows(&mut self, table: NodeId, indices: &[usize]) -> NodeId {
        let t = &self.nodes[table.0].value;
        let mut data = Vec::with_capacity(indices.len() * t.cols);
        for &i in indices {
            assert!(i < t.rows, "gather_rows: index {} out of {} rows", i, t.rows);
            data.extend_from_slice(t.row_slice(i));
        }
        let out = Tensor::new(indices.len(), t.cols, data);
        let rg = self.rg(&[table]);
        self.push(
            "gather_rows",
            out,
            Op::GatherRows(table, indices.to_vec()),
            rg,
        )
    }

    /// Column-wise max over rows (max pooling over sequence positions).
    pub fn max_over_rows(&mut self, a: NodeId) -> NodeId {
        let t = &self.nodes[a.0].value;
        assert!(t.rows >= 1, "max_over_rows: empty");
        let mut out = Tensor::zeros(1, t.cols);
        let mut arg = vec![0usize; t.cols];
        for c in 0..t.cols {
            let mut best = 0;
            for r in 1..t.rows {
                if t.get(r, c) > t.get(best, c) {
                    best = r;
                }
            }
            arg[c] = best;
            out.data[c] = t.get(best, c);
        }
        let rg = self.rg(&[a]);
        self.push("max_over_rows", out, Op::MaxOverRows(a, arg), rg)
    }

    pub fn ln_clamp(&mut self, a: NodeId, eps: f64) -> NodeId {
        let mut out = self.nodes[a.0].value.clone();
        for o in out.data.iter_mut() {
            *o = o.max(eps).ln();
        }
        let rg = self.rg(&[a]);
        self.push("ln_clamp", out, Op::LnClamp(a, eps), rg)
    }

    /// Reverse sweep from a scalar node. Visits each node exactly once in
    /// reverse recording order.
    pub fn backward(&self, root: NodeId) -> Result<Gradients, GraphError> {
        self.status()?;
        assert_eq!(
            self.nodes[root.0].value.numel(),
            1,
            "backward root must be a scalar"
        );
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[root.0] = Some(Tensor::new(1, 1, vec![1.0]));
        for i in (0..=root.0).rev() {
            let g = match grads[i].take() {
                Some(g) => g,
                None => continue,
            };
            if !self.nodes[i].requires_grad {
                grads[i] = Some(g);
                continue;
            }
            self.backprop_node(i, &g, &mut grads);
            grads[i] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn accum(&self, grads: &mut [Option<Tensor>], id: NodeId, delta: Tensor) {
        if !self.nodes[id.0].requires_grad {
            return;
        }
        match &mut grads[id.0] {
            Some(g) => {
                for (a, b) in g.data.iter_mut().zip(&delta.data) {
                    *a += b;
                }
            }
            slot @ None => *slot = Some(delta),
        }
    }

    fn backprop_node(&self, i: usize, g: &Tensor, grads: &mut [Option<Tensor>]) {
        match &self.nodes[i].op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                self.accum(grads, *a, g.clone());
                self.accum(grads, *b, g.clone());
            }
            Op::AddRow(m, row) => {
                self.accum(grads, *m, g.clone());
                let mut rg = Tensor::zeros(1, g.cols);
                for r in 0..g.rows {
                    for c in 0..g.cols {
                        rg.data[c] += g.get(r, c);
                    }
                }
                self.accum(grads, *row, rg);
            }
            Op::Mul(a, b) => {
                let ta = &self.nodes[a.0].value;
                let tb = &self.nodes[b.0].value;
                let mut da = g.clone();
                for (d, &v) in da.data.iter_mut().zip(&tb.data) {
                    *d *= v;
                }
                let mut db = g.clone();
                for (d, &v) in db.data.iter_mut().zip(&ta.data) {
                    *d *= v;
                }
                self.accum(grads, *a, da);
                self.accum(grads, *b, db);
            }
            Op::Matmul(a, b) => {
                let ta = &self.nodes[a.0].value;
                let tb = &self.nodes[b.0].value;
                if self.nodes[a.0].requires_grad {
                    let da = g.matmul(&tb.transposed());
                    self.accum(grads, *a, da);
                }
                if self.nodes[b.0].requires_grad {
                    let db = ta.transposed().matmul(g);
                    self.accum(grads, *b, db);
                }
            }
            Op::Scale(a, s) => {
                let mut da = g.clone();
                for d in da.data.iter_mut() {
                    *d *= s;
                }
                self.accum(grads, *a, da);
            }
            Op::Tanh(a) => {
                let y = &self.nodes[i].value;
                let mut da = g.clone();
                for (d, &yv) in da.data.iter_mut().zip(&y.data) {
                    *d *= 1.0 - yv * yv;
                }
                self.accum(grads, *a, da);
            }
            Op::Sigmoid(a) => {
                let y = &self.nodes[i].value;
                let mut da = g.clone();
                for (d, &yv) in da.data.iter_mut().zip(&y.data) {
                    *d *= yv * (1.0 - yv);
                }
                self.accum(grads, *a, da);
            }
            Op::ConcatCols(parts) => {
                let mut off = 0;
                for p in parts {
                    let t = &self.nodes[p.0].value;
                    let mut dp = Tensor::zeros(t.rows, t.cols);
                    for r in 0..t.rows {
                        dp.data[r * t.cols..(r + 1) * t.cols]
                            .copy_from_slice(&g.row_slice(r)[off..off + t.cols]);
                    }
                    self.accum(grads, *p, dp);
                    off += t.cols;
                }
            }
            Op::ConcatRows(parts) => {
                let mut off = 0;
                for p in parts {
                    let t = &self.nodes[p.0].value;
                    let dp = Tensor::new(
                        t.rows,
                        t.cols,
                        g.data[off * t.cols..(off + t.rows) * t.cols].to_vec(),
                    );
                    self.accum(grads, *p, dp);
                    off += t.rows;
                }
            }
            Op::SliceRows(a, from, _to) => {
                let t = &self.nodes[a.0].value;
                let mut da = Tensor::zeros(t.rows, t.cols);
                da.data[from * t.cols..from * t.cols + g.numel()].copy_from_slice(&g.data);
                self.accum(grads, *a, da);
            }
            Op::SliceCols(a, from, to) => {
                let t = &self.nodes[a.0].value;
                let mut da = Tensor::zeros(t.rows, t.cols);
                for r in 0..t.rows {
                    da.data[r * t.cols + from..r * t.cols + to].copy_from_slice(g.row_slice(r));
                }
                self.accum(grads, *a, da);
            }
            Op::Transpose(a) => {
                self.accum(grads, *a, g.transposed());
            }
            Op::SoftmaxRows(a) => {
                let y = &self.nodes[i].value;
                let mut da = Tensor::zeros(y.rows, y.cols);
                for r in 0..y.rows {
                    let dot: f64 = (0..y.cols).map(|c| g.get(r, c) * y.get(r, c)).sum();
                    for c in 0..y.cols {
                        da.set(r, c, y.get(r, c) * (g.get(r, c) - dot));
                    }
                }
                self.accum(grads, *a, da);
            }
            Op::LogSumExpRows(a) => {
                let x = &self.nodes[a.0].value;
                let soft = softmax_rows(x);
                let mut da = Tensor::zeros(x.rows, x.cols);
                for r in 0..x.rows {
                    for c in 0..x.cols {
                        da.set(r, c, g.data[r] * soft.get(r, c));
                    }
                }
                self.accum(grads, *a, da);
            }
            Op::SumAll(a) => {
                let t = &self.nodes[a.0].value;
                self.accum(grads, *a, Tensor::filled(t.rows, t.cols, g.data[0]));
            }
            Op::GatherRows(table, indices) => {
                let t = &self.nodes[table.0].value;
                let mut dt = Tensor::zeros(t.rows, t.cols);
                for (r, &idx) in indices.iter().enumerate() {
                    for c in 0..t.cols {
                        dt.data[idx * t.cols + c] += g.get(r, c);
                    }
                }
                self.accum(grads, *table, dt);
            }
            Op::MaxOverRows(a, arg) => {
                let t = &self.nodes[a.0].value;
                let mut da = Tensor::zeros(t.rows, t.cols);
                for (c, &r) in arg.iter().enumerate() {
                    da.set(r, c, g.data[c]);
                }
                self.accum(grads, *a, da);
            }
            Op::LnClamp(a, eps) => {
                let x = &self.nodes[a.0].value;
                let mut da = g.clone();
                for (d, &xv) in da.data.iter_mut().zip(&x.data) {
                    *d *= if xv > *eps { 1.0 / xv } else { 0.0 };
                }
                self.accum(grads, *a, da);
            }
        }
    }
}

/// Per-node gradients from a backward sweep.
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, id: NodeId) -> Option<&Tensor> {
        self.grads.get(id.0).and_then(|g| g.as_ref())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_gradient() {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::new(1, 1, vec![3.0]), true);
        let y = g.mul(x, x);
        let grads = g.backward(y).unwrap();
        assert_eq!(grads.get(x).unwrap().data[0], 6.0);
    }

    #[test]
    fn constant_has_zero_grad() {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::new(1, 1, vec![3.0]), true);
        let c = g.constant(Tensor::new(1, 1, vec![2.0]));
        let y = g.mul(x, c);
        let grads = g.backward(y).unwrap();
        assert!(grads.get(c).is_none());
        assert_eq!(grads.get(x).unwrap().data[0], 2.0);
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::from_rows(&[vec![1.0, 2.0, 3.0], vec![-5.0, 0.0, 5.0]]));
        let s = g.softmax_rows(x);
        for r in 0..2 {
            let sum: f64 = g.value(s).row_slice(r).iter().sum();
            assert!((sum - 1.0).abs() <= 1e-12);
            assert!(g.value(s).row_slice(r).iter().all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn non_finite_poisons_graph() {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::new(1, 1, vec![1e308]), true);
        let y = g.mul(x, x); // overflows to inf
        assert!(g.status().is_err());
        assert!(g.backward(y).is_err());
    }

    #[test]
    fn gather_rows_scatters_gradient() {
        let mut g = Graph::new();
        let table = g.leaf(Tensor::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]), true);
        let picked = g.gather_rows(table, &[1, 1]);
        let s = g.sum_all(picked);
        let grads = g.backward(s).unwrap();
        let dt = grads.get(table).unwrap();
        assert_eq!(dt.row_slice(0), &[0.0, 0.0]);
        assert_eq!(dt.row_slice(1), &[2.0, 2.0]);
    }

    #[test]
    fn max_over_rows_routes_gradient_to_argmax() {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::from_rows(&[vec![1.0, 5.0], vec![3.0, 2.0]]), true);
        let m = g.max_over_rows(x);
        assert_eq!(g.value(m).data, vec![3.0, 5.0]);
        let s = g.sum_all(m);
        let grads = g.backward(s).unwrap();
        let dx = grads.get(x).unwrap();
        assert_eq!(dx.row_slice(0), &[0.0, 1.0]);
        assert_eq!(dx.row_slice(1), &[1.0, 0.0]);
    }
}
