use super::Tensor;
use crate::{Error, Result};

/// Handle to a node recorded on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    Gather { table: Var, rows: Vec<usize> },
    Add(Var, Var),
    Mul(Var, Var),
    ScaleByElem { x: Var, s: Var, k: usize },
    MatMulT { x: Var, w: Var },
    AddBias { x: Var, b: Var },
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    SliceCols { x: Var, start: usize, len: usize },
    SliceRows { x: Var, start: usize, len: usize },
    Sigmoid(Var),
    Tanh(Var),
    Affine { x: Var, scale: f64 },
    Sum(Var),
    WeightedSquaredError {
        pred: Var,
        target: Vec<f64>,
        weight: Vec<f64>,
        denom: f64,
    },
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Gather { .. } => "gather",
            Op::Add(..) => "add",
            Op::Mul(..) => "mul",
            Op::ScaleByElem { .. } => "scale",
            Op::MatMulT { .. } => "matmul",
            Op::AddBias { .. } => "add_bias",
            Op::ConcatCols(_) => "concat_cols",
            Op::ConcatRows(_) => "concat_rows",
            Op::SliceCols { .. } => "slice_cols",
            Op::SliceRows { .. } => "slice_rows",
            Op::Sigmoid(_) => "sigmoid",
            Op::Tanh(_) => "tanh",
            Op::Affine { .. } => "affine",
            Op::Sum(_) => "sum",
            Op::WeightedSquaredError { .. } => "weighted_squared_error",
        }
    }
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Computation record for one forward/backward pass.
///
/// Nodes are appended in evaluation order, so the node vector is already a
/// topological order and backward is a single reverse sweep.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    grads: Vec<Option<Vec<f64>>>,
    backward_done: bool,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Trainable leaf.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.push_leaf(value, true)
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push_leaf(value, false)
    }

    fn push_leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.backward_done = false;
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad,
        });
        self.grads.push(None);
        Var(self.nodes.len() - 1)
    }

    fn push(&mut self, value: Tensor, op: Op) -> Result<Var> {
        if !value.is_finite() {
            return Err(Error::Numerical(format!(
                "non-finite value produced by {} (node {})",
                op.name(),
                self.nodes.len()
            )));
        }
        let requires_grad = match &op {
            Op::Leaf => false,
            Op::Gather { table, .. } => self.rg(*table),
            Op::Add(a, b) | Op::Mul(a, b) => self.rg(*a) || self.rg(*b),
            Op::ScaleByElem { x, s, .. } => self.rg(*x) || self.rg(*s),
            Op::MatMulT { x, w } => self.rg(*x) || self.rg(*w),
            Op::AddBias { x, b } => self.rg(*x) || self.rg(*b),
            Op::ConcatCols(vs) | Op::ConcatRows(vs) => vs.iter().any(|v| self.rg(*v)),
            Op::SliceCols { x, .. }
            | Op::SliceRows { x, .. }
            | Op::Sigmoid(x)
            | Op::Tanh(x)
            | Op::Affine { x, .. }
            | Op::Sum(x) => self.rg(*x),
            Op::WeightedSquaredError { pred, .. } => self.rg(*pred),
        };
        self.backward_done = false;
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        self.grads.push(None);
        Ok(Var(self.nodes.len() - 1))
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn check(&self, v: Var) -> Result<()> {
        if v.0 < self.nodes.len() {
            Ok(())
        } else {
            Err(Error::State(format!("variable {} is not on this graph", v.0)))
        }
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.rg(v)
    }

    /// Row lookup: `out[r] = table[rows[r]]`.
    pub fn gather(&mut self, table: Var, rows: &[usize]) -> Result<Var> {
        self.check(table)?;
        let t = self.value(table);
        let (n, c) = (t.rows(), t.cols());
        let mut out = Vec::with_capacity(rows.len() * c);
        for &r in rows {
            if r >= n {
                return Err(Error::Internal(format!(
                    "gather row {r} out of range for table with {n} rows"
                )));
            }
            out.extend_from_slice(t.row(r));
        }
        let value = Tensor::new(vec![rows.len(), c], out)?;
        self.push(
            value,
            Op::Gather {
                table,
                rows: rows.to_vec(),
            },
        )
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, "add", |x, y| x + y, Op::Add(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, "mul", |x, y| x * y, Op::Mul(a, b))
    }

    fn binary(
        &mut self,
        a: Var,
        b: Var,
        what: &str,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<Var> {
        self.check(a)?;
        self.check(b)?;
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.rows() != tb.rows() || ta.cols() != tb.cols() {
            return Err(Error::Config(format!(
                "{what}: shape mismatch {:?} vs {:?}",
                ta.shape(),
                tb.shape()
            )));
        }
        let data = ta
            .data()
            .iter()
            .zip(tb.data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        let value = Tensor::new(vec![ta.rows(), ta.cols()], data)?;
        self.push(value, op)
    }

    /// `x * s[k]` for a scalar taken from a vector leaf.
    pub fn scale_by(&mut self, x: Var, s: Var, k: usize) -> Result<Var> {
        self.check(x)?;
        self.check(s)?;
        let factor = *self
            .value(s)
            .data()
            .get(k)
            .ok_or_else(|| Error::Config(format!("scale index {k} out of range")))?;
        let tx = self.value(x);
        let data = tx.data().iter().map(|v| v * factor).collect();
        let value = Tensor::new(vec![tx.rows(), tx.cols()], data)?;
        self.push(value, Op::ScaleByElem { x, s, k })
    }

    /// `x · wᵀ` with `x: [n, a]` and `w: [b, a]`.
    pub fn matmul_t(&mut self, x: Var, w: Var) -> Result<Var> {
        self.check(x)?;
        self.check(w)?;
        let (tx, tw) = (self.value(x), self.value(w));
        let (n, a, b) = (tx.rows(), tx.cols(), tw.rows());
        if tw.cols() != a {
            return Err(Error::Config(format!(
                "matmul: input width {a} does not match weight width {}",
                tw.cols()
            )));
        }
        let mut out = vec![0.0; n * b];
        // out[n,b] = x[n,a] · w[b,a]ᵀ
        gemm(n, a, b, tx.data(), (a, 1), tw.data(), (1, a), &mut out, 0.0);
        let value = Tensor::new(vec![n, b], out)?;
        self.push(value, Op::MatMulT { x, w })
    }

    /// Adds a bias vector to every row.
    pub fn add_bias(&mut self, x: Var, b: Var) -> Result<Var> {
        self.check(x)?;
        self.check(b)?;
        let (tx, tb) = (self.value(x), self.value(b));
        let c = tx.cols();
        if tb.numel() != c {
            return Err(Error::Config(format!(
                "add_bias: bias of {} values for width {c}",
                tb.numel()
            )));
        }
        let mut out = tx.data().to_vec();
        for row in out.chunks_mut(c.max(1)) {
            for (o, bias) in row.iter_mut().zip(tb.data()) {
                *o += bias;
            }
        }
        let value = Tensor::new(vec![tx.rows(), c], out)?;
        self.push(value, Op::AddBias { x, b })
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(Error::Config("concat_cols: nothing to concatenate".into()));
        }
        for &p in parts {
            self.check(p)?;
        }
        let rows = self.value(parts[0]).rows();
        let mut width = 0;
        for &p in parts {
            let t = self.value(p);
            if t.rows() != rows {
                return Err(Error::Config(format!(
                    "concat_cols: row mismatch {} vs {rows}",
                    t.rows()
                )));
            }
            width += t.cols();
        }
        let mut out = Vec::with_capacity(rows * width);
        for r in 0..rows {
            for &p in parts {
                out.extend_from_slice(self.value(p).row(r));
            }
        }
        let value = Tensor::new(vec![rows, width], out)?;
        self.push(value, Op::ConcatCols(parts.to_vec()))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(Error::Config("concat_rows: nothing to concatenate".into()));
        }
        for &p in parts {
            self.check(p)?;
        }
        let cols = self.value(parts[0]).cols();
        let mut out = Vec::new();
        let mut rows = 0;
        for &p in parts {
            let t = self.value(p);
            if t.cols() != cols {
                return Err(Error::Config(format!(
                    "concat_rows: column mismatch {} vs {cols}",
                    t.cols()
                )));
            }
            rows += t.rows();
            out.extend_from_slice(t.data());
        }
        let value = Tensor::new(vec![rows, cols], out)?;
        self.push(value, Op::ConcatRows(parts.to_vec()))
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        self.check(x)?;
        let t = self.value(x);
        if start + len > t.cols() {
            return Err(Error::Config(format!(
                "slice_cols: {start}..{} exceeds width {}",
                start + len,
                t.cols()
            )));
        }
        let mut out = Vec::with_capacity(t.rows() * len);
        for r in 0..t.rows() {
            out.extend_from_slice(&t.row(r)[start..start + len]);
        }
        let value = Tensor::new(vec![t.rows(), len], out)?;
        self.push(value, Op::SliceCols { x, start, len })
    }

    pub fn slice_rows(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        self.check(x)?;
        let t = self.value(x);
        if start + len > t.rows() {
            return Err(Error::Config(format!(
                "slice_rows: {start}..{} exceeds {} rows",
                start + len,
                t.rows()
            )));
        }
        let c = t.cols();
        let value = Tensor::new(vec![len, c], t.data()[start * c..(start + len) * c].to_vec())?;
        self.push(value, Op::SliceRows { x, start, len })
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        self.unary(x, sigmoid, Op::Sigmoid(x))
    }

    pub fn tanh(&mut self, x: Var) -> Result<Var> {
        self.unary(x, f64::tanh, Op::Tanh(x))
    }

    /// `scale * x + shift` with fixed (non-trainable) constants.
    pub fn affine(&mut self, x: Var, scale: f64, shift: f64) -> Result<Var> {
        self.unary(x, |v| scale * v + shift, Op::Affine { x, scale })
    }

    fn unary(&mut self, x: Var, f: impl Fn(f64) -> f64, op: Op) -> Result<Var> {
        self.check(x)?;
        let t = self.value(x);
        let data = t.data().iter().map(|&v| f(v)).collect();
        let value = Tensor::new(vec![t.rows(), t.cols()], data)?;
        self.push(value, op)
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        self.check(x)?;
        let total = self.value(x).data().iter().sum();
        self.push(Tensor::scalar(total), Op::Sum(x))
    }

    /// `Σ w_r (pred_r − target_r)² / denom` over the flattened prediction.
    pub fn weighted_squared_error(
        &mut self,
        pred: Var,
        target: &[f64],
        weight: &[f64],
        denom: f64,
    ) -> Result<Var> {
        self.check(pred)?;
        let p = self.value(pred);
        if p.numel() != target.len() || p.numel() != weight.len() {
            return Err(Error::Config(format!(
                "loss: {} predictions, {} targets, {} weights",
                p.numel(),
                target.len(),
                weight.len()
            )));
        }
        if !(denom > 0.0) {
            return Err(Error::Config("loss: empty batch".into()));
        }
        let total: f64 = p
            .data()
            .iter()
            .zip(target)
            .zip(weight)
            .map(|((y, t), w)| w * (y - t) * (y - t))
            .sum();
        self.push(
            Tensor::scalar(total / denom),
            Op::WeightedSquaredError {
                pred,
                target: target.to_vec(),
                weight: weight.to_vec(),
                denom,
            },
        )
    }

    /// Reverse sweep from a scalar loss.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.nodes.is_empty() || loss.0 >= self.nodes.len() {
            return Err(Error::State(
                "backward called before a forward pass was recorded".into(),
            ));
        }
        if self.nodes[loss.0].value.numel() != 1 {
            return Err(Error::Config(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.nodes[loss.0].value.shape()
            )));
        }
        for g in self.grads.iter_mut() {
            *g = None;
        }
        self.grads[loss.0] = Some(vec![1.0]);
        let nodes = &self.nodes;
        let grads = &mut self.grads;
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else {
                continue;
            };
            let node = &nodes[i];
            if node.requires_grad {
                propagate(nodes, grads, node, &g);
            }
            grads[i] = Some(g);
        }
        self.backward_done = true;
        Ok(())
    }

    /// Gradient of the last backward pass; zeros for nodes the loss did not
    /// depend on.
    pub fn gradient(&self, v: Var) -> Result<Vec<f64>> {
        self.check(v)?;
        if !self.backward_done {
            return Err(Error::State("gradient requested before backward".into()));
        }
        Ok(match &self.grads[v.0] {
            Some(g) => g.clone(),
            None => vec![0.0; self.nodes[v.0].value.numel()],
        })
    }

    /// Copy of the node value carrying its gradient.
    pub fn tensor_with_grad(&self, v: Var) -> Result<Tensor> {
        let mut t = self.value(v).clone();
        t.set_grad(self.gradient(v)?)?;
        Ok(t)
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn slot<'a>(grads: &'a mut [Option<Vec<f64>>], nodes: &[Node], v: Var) -> &'a mut Vec<f64> {
    let n = nodes[v.0].value.numel();
    grads[v.0].get_or_insert_with(|| vec![0.0; n])
}

fn propagate(nodes: &[Node], grads: &mut [Option<Vec<f64>>], node: &Node, g: &[f64]) {
    let rg = |v: Var| nodes[v.0].requires_grad;
    match &node.op {
        Op::Leaf => {}
        Op::Gather { table, rows } => {
            if rg(*table) {
                let c = nodes[table.0].value.cols();
                let dt = slot(grads, nodes, *table);
                for (r, &src) in rows.iter().enumerate() {
                    for (d, u) in dt[src * c..(src + 1) * c].iter_mut().zip(&g[r * c..(r + 1) * c]) {
                        *d += u;
                    }
                }
            }
        }
        Op::Add(a, b) => {
            for v in [*a, *b] {
                if rg(v) {
                    for (d, u) in slot(grads, nodes, v).iter_mut().zip(g) {
                        *d += u;
                    }
                }
            }
        }
        Op::Mul(a, b) => {
            if rg(*a) {
                let other = nodes[b.0].value.data();
                let da = slot(grads, nodes, *a);
                for ((d, u), o) in da.iter_mut().zip(g).zip(other) {
                    *d += u * o;
                }
            }
            if rg(*b) {
                let other = nodes[a.0].value.data();
                let db = slot(grads, nodes, *b);
                for ((d, u), o) in db.iter_mut().zip(g).zip(other) {
                    *d += u * o;
                }
            }
        }
        Op::ScaleByElem { x, s, k } => {
            let factor = nodes[s.0].value.data()[*k];
            if rg(*x) {
                for (d, u) in slot(grads, nodes, *x).iter_mut().zip(g) {
                    *d += u * factor;
                }
            }
            if rg(*s) {
                let dot: f64 = nodes[x.0].value.data().iter().zip(g).map(|(a, b)| a * b).sum();
                slot(grads, nodes, *s)[*k] += dot;
            }
        }
        Op::MatMulT { x, w } => {
            let (tx, tw) = (&nodes[x.0].value, &nodes[w.0].value);
            let (n, a, b) = (tx.rows(), tx.cols(), tw.rows());
            if rg(*x) {
                // dx[n,a] += g[n,b] · w[b,a]
                let dx = slot(grads, nodes, *x);
                gemm(n, b, a, g, (b, 1), tw.data(), (a, 1), dx, 1.0);
            }
            if rg(*w) {
                // dw[b,a] += gᵀ[b,n] · x[n,a]
                let dw = slot(grads, nodes, *w);
                gemm(b, n, a, g, (1, b), tx.data(), (a, 1), dw, 1.0);
            }
        }
        Op::AddBias { x, b } => {
            if rg(*x) {
                for (d, u) in slot(grads, nodes, *x).iter_mut().zip(g) {
                    *d += u;
                }
            }
            if rg(*b) {
                let c = nodes[x.0].value.cols();
                let db = slot(grads, nodes, *b);
                for row in g.chunks(c.max(1)) {
                    for (d, u) in db.iter_mut().zip(row) {
                        *d += u;
                    }
                }
            }
        }
        Op::ConcatCols(parts) => {
            let width = node.value.cols();
            let mut offset = 0;
            for &p in parts {
                let c = nodes[p.0].value.cols();
                if rg(p) {
                    let dp = slot(grads, nodes, p);
                    for (r, row) in dp.chunks_mut(c.max(1)).enumerate() {
                        let src = &g[r * width + offset..r * width + offset + c];
                        for (d, u) in row.iter_mut().zip(src) {
                            *d += u;
                        }
                    }
                }
                offset += c;
            }
        }
        Op::ConcatRows(parts) => {
            let mut offset = 0;
            for &p in parts {
                let n = nodes[p.0].value.numel();
                if rg(p) {
                    for (d, u) in slot(grads, nodes, p).iter_mut().zip(&g[offset..offset + n]) {
                        *d += u;
                    }
                }
                offset += n;
            }
        }
        Op::SliceCols { x, start, len } => {
            if rg(*x) {
                let (c, start, len) = (nodes[x.0].value.cols(), *start, *len);
                let dx = slot(grads, nodes, *x);
                for (r, src) in g.chunks(len.max(1)).enumerate() {
                    for (d, u) in dx[r * c + start..r * c + start + len].iter_mut().zip(src) {
                        *d += u;
                    }
                }
            }
        }
        Op::SliceRows { x, start, len } => {
            if rg(*x) {
                let c = nodes[x.0].value.cols();
                let dx = slot(grads, nodes, *x);
                for (d, u) in dx[start * c..(start + len) * c].iter_mut().zip(g) {
                    *d += u;
                }
            }
        }
        Op::Sigmoid(x) => {
            if rg(*x) {
                let y = node.value.data();
                for ((d, u), y) in slot(grads, nodes, *x).iter_mut().zip(g).zip(y) {
                    *d += u * y * (1.0 - y);
                }
            }
        }
        Op::Tanh(x) => {
            if rg(*x) {
                let y = node.value.data();
                for ((d, u), y) in slot(grads, nodes, *x).iter_mut().zip(g).zip(y) {
                    *d += u * (1.0 - y * y);
                }
            }
        }
        Op::Affine { x, scale } => {
            if rg(*x) {
                for (d, u) in slot(grads, nodes, *x).iter_mut().zip(g) {
                    *d += u * scale;
                }
            }
        }
        Op::Sum(x) => {
            if rg(*x) {
                for d in slot(grads, nodes, *x).iter_mut() {
                    *d += g[0];
                }
            }
        }
        Op::WeightedSquaredError {
            pred,
            target,
            weight,
            denom,
        } => {
            if rg(*pred) {
                let p = nodes[pred.0].value.data();
                let scale = 2.0 * g[0] / denom;
                let dp = slot(grads, nodes, *pred);
                for (((d, y), t), w) in dp.iter_mut().zip(p).zip(target).zip(weight) {
                    *d += scale * w * (y - t);
                }
            }
        }
    }
}

/// `c = a · b + beta · c` over dense buffers; strides are (row, col).
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    (rsa, csa): (usize, usize),
    b: &[f64],
    (rsb, csb): (usize, usize),
    c: &mut [f64],
    beta: f64,
) {
    if m == 0 || n == 0 {
        return;
    }
    assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    if k > 0 {
        assert!((m - 1) * rsa + (k - 1) * csa < a.len());
        assert!((k - 1) * rsb + (n - 1) * csb < b.len());
    }
    // SAFETY: the asserts above keep every strided access inside the slices,
    // and `c` is a dense m×n row-major buffer that does not alias `a` or `b`.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}
