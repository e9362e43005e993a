//! Tape-style computation graph with reverse-mode differentiation.
//!
//! Nodes are appended in evaluation order, so a node's operands always have
//! smaller indices than the node itself and the append order is a valid
//! topological order. Building a node only infers its shape; values are
//! produced by [`Graph::forward`]. Leaves (inputs and parameters) may be
//! overwritten with [`Graph::set_value`] and the same graph re-evaluated,
//! which lets a training loop reuse one graph for every minibatch.

use super::tensor::{gemm_into, Tensor};
use crate::error::{Error, Result};

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    MatMul { a: Var, b: Var, ta: bool, tb: bool },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    /// `a + row` with a `[1, c]` row broadcast over every row of `a`.
    AddRow(Var, Var),
    /// `a ⊙ row` with a `[1, c]` row broadcast over every row of `a`.
    MulRow(Var, Var),
    Tanh(Var),
    Relu(Var),
    Square(Var),
    Scale(Var, f64),
    ConcatCols(Vec<Var>),
    SliceCols(Var, usize, usize),
    ConcatRows(Vec<Var>),
    SliceRows(Var, usize, usize),
    Mean(Var),
    Sum(Var),
}

#[derive(Clone, Debug)]
struct Node {
    op: Op,
    rows: usize,
    cols: usize,
    value: Option<Tensor>,
    param: Option<usize>,
}

#[derive(Clone, Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    params: Vec<Var>,
    evaluated: bool,
}

/// Gradients of a scalar with respect to every registered parameter, in
/// registration order.
#[derive(Clone, Debug)]
pub struct Gradients {
    grads: Vec<Tensor>,
    vars: Vec<Var>,
}

impl Gradients {
    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }

    pub fn get(&self, param: Var) -> Option<&Tensor> {
        self.vars.iter().position(|&v| v == param).map(|i| &self.grads[i])
    }

    pub fn as_slice(&self) -> &[Tensor] {
        &self.grads
    }

    pub fn into_vec(self) -> Vec<Tensor> {
        self.grads
    }
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

    pub fn is_evaluated(&self) -> bool {
        self.evaluated
    }

    /// Registered parameters in registration order.
    pub fn params(&self) -> &[Var] {
        &self.params
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        let n = &self.nodes[v.0];
        (n.rows, n.cols)
    }

    fn push(&mut self, op: Op, rows: usize, cols: usize, value: Option<Tensor>) -> Var {
        self.evaluated = false;
        self.nodes.push(Node {
            op,
            rows,
            cols,
            value,
            param: None,
        });
        Var(self.nodes.len() - 1)
    }

    fn check_rank2(t: &Tensor, context: &str) -> Result<(usize, usize)> {
        if t.rank() != 2 {
            return Err(Error::dim(context, format!("expected rank 2, got {:?}", t.shape())));
        }
        Ok(t.dims())
    }

    /// Constant or data leaf; receives no gradient in the returned
    /// [`Gradients`].
    pub fn input(&mut self, value: Tensor) -> Result<Var> {
        let (r, c) = Self::check_rank2(&value, "Graph::input")?;
        Ok(self.push(Op::Leaf, r, c, Some(value)))
    }

    /// Trainable leaf.
    pub fn param(&mut self, value: Tensor) -> Result<Var> {
        let v = self.input(value)?;
        self.nodes[v.0].param = Some(self.params.len());
        self.params.push(v);
        Ok(v)
    }

    /// Overwrite a leaf's value. The graph must be re-evaluated afterwards.
    pub fn set_value(&mut self, v: Var, value: Tensor) -> Result<()> {
        let node = &mut self.nodes[v.0];
        if !matches!(node.op, Op::Leaf) {
            return Err(Error::Contract(format!("node {} is not a leaf", v.0)));
        }
        if value.shape() != [node.rows, node.cols] {
            return Err(Error::dim(
                "Graph::set_value",
                format!("leaf {} is [{}, {}], got {:?}", v.0, node.rows, node.cols, value.shape()),
            ));
        }
        node.value = Some(value);
        self.evaluated = false;
        Ok(())
    }

    pub fn value(&self, v: Var) -> Result<&Tensor> {
        let node = &self.nodes[v.0];
        if !matches!(node.op, Op::Leaf) && !self.evaluated {
            return Err(Error::State("graph has not been evaluated".into()));
        }
        node.value
            .as_ref()
            .ok_or_else(|| Error::State(format!("node {} has no value", v.0)))
    }

    pub fn scalar(&self, v: Var) -> Result<f64> {
        let t = self.value(v)?;
        if t.len() != 1 {
            return Err(Error::Contract(format!("node {} is not scalar", v.0)));
        }
        Ok(t.data()[0])
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.matmul_t(a, false, b, false)
    }

    /// `op(a) · op(b)` where `op` transposes when the flag is set.
    pub fn matmul_t(&mut self, a: Var, ta: bool, b: Var, tb: bool) -> Result<Var> {
        let (ar, ac) = self.shape(a);
        let (br, bc) = self.shape(b);
        let (m, k) = if ta { (ac, ar) } else { (ar, ac) };
        let (k2, n) = if tb { (bc, br) } else { (br, bc) };
        if k != k2 {
            return Err(Error::dim(
                "Graph::matmul",
                format!("[{m}, {k}] · [{k2}, {n}] (nodes {} and {})", a.0, b.0),
            ));
        }
        Ok(self.push(Op::MatMul { a, b, ta, tb }, m, n, None))
    }

    fn same_shape(&self, a: Var, b: Var, context: &str) -> Result<(usize, usize)> {
        let sa = self.shape(a);
        let sb = self.shape(b);
        if sa != sb {
            return Err(Error::dim(context, format!("{sa:?} vs {sb:?}")));
        }
        Ok(sa)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (r, c) = self.same_shape(a, b, "Graph::add")?;
        Ok(self.push(Op::Add(a, b), r, c, None))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let (r, c) = self.same_shape(a, b, "Graph::sub")?;
        Ok(self.push(Op::Sub(a, b), r, c, None))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (r, c) = self.same_shape(a, b, "Graph::mul")?;
        Ok(self.push(Op::Mul(a, b), r, c, None))
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        let (r, c) = self.same_shape(a, b, "Graph::div")?;
        Ok(self.push(Op::Div(a, b), r, c, None))
    }

    fn row_shape(&self, a: Var, row: Var, context: &str) -> Result<(usize, usize)> {
        let (r, c) = self.shape(a);
        if self.shape(row) != (1, c) {
            return Err(Error::dim(
                context,
                format!("row operand is {:?}, expected [1, {c}]", self.shape(row)),
            ));
        }
        Ok((r, c))
    }

    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (r, c) = self.row_shape(a, row, "Graph::add_row")?;
        Ok(self.push(Op::AddRow(a, row), r, c, None))
    }

    pub fn mul_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (r, c) = self.row_shape(a, row, "Graph::mul_row")?;
        Ok(self.push(Op::MulRow(a, row), r, c, None))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let (r, c) = self.shape(a);
        self.push(Op::Tanh(a), r, c, None)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let (r, c) = self.shape(a);
        self.push(Op::Relu(a), r, c, None)
    }

    pub fn square(&mut self, a: Var) -> Var {
        let (r, c) = self.shape(a);
        self.push(Op::Square(a), r, c, None)
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        let (r, c) = self.shape(a);
        self.push(Op::Scale(a, k), r, c, None)
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts
            .first()
            .ok_or_else(|| Error::dim("Graph::concat_cols", "no operands"))?;
        let rows = self.shape(*first).0;
        let mut cols = 0;
        for &p in parts {
            let (r, c) = self.shape(p);
            if r != rows {
                return Err(Error::dim("Graph::concat_cols", format!("rows {r} vs {rows}")));
            }
            cols += c;
        }
        Ok(self.push(Op::ConcatCols(parts.to_vec()), rows, cols, None))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts
            .first()
            .ok_or_else(|| Error::dim("Graph::concat_rows", "no operands"))?;
        let cols = self.shape(*first).1;
        let mut rows = 0;
        for &p in parts {
            let (r, c) = self.shape(p);
            if c != cols {
                return Err(Error::dim("Graph::concat_rows", format!("cols {c} vs {cols}")));
            }
            rows += r;
        }
        Ok(self.push(Op::ConcatRows(parts.to_vec()), rows, cols, None))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        let (r, c) = self.shape(a);
        if start >= end || end > c {
            return Err(Error::dim(
                "Graph::slice_cols",
                format!("range {start}..{end} of {c} columns"),
            ));
        }
        Ok(self.push(Op::SliceCols(a, start, end), r, end - start, None))
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        let (r, c) = self.shape(a);
        if start >= end || end > r {
            return Err(Error::dim(
                "Graph::slice_rows",
                format!("range {start}..{end} of {r} rows"),
            ));
        }
        Ok(self.push(Op::SliceRows(a, start, end), end - start, c, None))
    }

    pub fn mean(&mut self, a: Var) -> Var {
        self.push(Op::Mean(a), 1, 1, None)
    }

    pub fn sum(&mut self, a: Var) -> Var {
        self.push(Op::Sum(a), 1, 1, None)
    }

    /// `mean((a - b)²)` over every entry.
    pub fn mse(&mut self, a: Var, b: Var) -> Result<Var> {
        let d = self.sub(a, b)?;
        let sq = self.square(d);
        Ok(self.mean(sq))
    }

    /// Evaluate every node in topological order.
    pub fn forward(&mut self) -> Result<()> {
        for i in 0..self.nodes.len() {
            if matches!(self.nodes[i].op, Op::Leaf) {
                continue;
            }
            let value = self.eval_node(i);
            self.nodes[i].value = Some(value);
        }
        self.evaluated = true;
        Ok(())
    }

    fn val(&self, v: Var) -> &Tensor {
        self.nodes[v.0]
            .value
            .as_ref()
            .expect("operand evaluated before its consumers")
    }

    fn eval_node(&self, i: usize) -> Tensor {
        let node = &self.nodes[i];
        let zip = |a: Var, b: Var, f: fn(f64, f64) -> f64| {
            self.val(a).zip_map(self.val(b), f).expect("shapes checked at build time")
        };
        match &node.op {
            Op::Leaf => unreachable!(),
            &Op::MatMul { a, b, ta, tb } => {
                let mut out = Tensor::zeros(node.rows, node.cols);
                gemm_into(self.val(a), ta, self.val(b), tb, out.data_mut(), 0.0);
                out
            }
            &Op::Add(a, b) => zip(a, b, |x, y| x + y),
            &Op::Sub(a, b) => zip(a, b, |x, y| x - y),
            &Op::Mul(a, b) => zip(a, b, |x, y| x * y),
            &Op::Div(a, b) => zip(a, b, |x, y| x / y),
            &Op::AddRow(a, row) => broadcast_row(self.val(a), self.val(row), |x, r| x + r),
            &Op::MulRow(a, row) => broadcast_row(self.val(a), self.val(row), |x, r| x * r),
            &Op::Tanh(a) => self.val(a).map(f64::tanh),
            &Op::Relu(a) => self.val(a).map(|x| x.max(0.0)),
            &Op::Square(a) => self.val(a).map(|x| x * x),
            &Op::Scale(a, k) => self.val(a).scale(k),
            Op::ConcatCols(parts) => {
                let ts: Vec<&Tensor> = parts.iter().map(|&p| self.val(p)).collect();
                Tensor::concat_cols(&ts).expect("shapes checked at build time")
            }
            Op::ConcatRows(parts) => {
                let ts: Vec<&Tensor> = parts.iter().map(|&p| self.val(p)).collect();
                Tensor::concat_rows(&ts).expect("shapes checked at build time")
            }
            &Op::SliceCols(a, s, e) => self.val(a).slice_cols(s, e),
            &Op::SliceRows(a, s, e) => self.val(a).slice_rows(s, e),
            &Op::Mean(a) => {
                let t = self.val(a);
                Tensor::scalar(t.data().iter().sum::<f64>() / t.len() as f64)
            }
            &Op::Sum(a) => Tensor::scalar(self.val(a).data().iter().sum()),
        }
    }

    /// Reverse accumulation from a scalar node. Gradients are accumulated in
    /// descending node index, so the summation order is fixed by the graph.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if !self.evaluated {
            return Err(Error::State(
                "backward called on a graph that has not been evaluated".into(),
            ));
        }
        if self.shape(loss) != (1, 1) {
            return Err(Error::Contract(format!(
                "loss node {} must be scalar, has shape {:?}",
                loss.0,
                self.shape(loss)
            )));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Tensor::scalar(1.0));

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            match &node.op {
                Op::Leaf => {
                    grads[i] = Some(g);
                }
                &Op::MatMul { a, b, ta, tb } => {
                    let av = self.val(a);
                    let bv = self.val(b);
                    {
                        let da = slot(&mut grads, a, self.shape(a));
                        if ta {
                            gemm_into(bv, tb, &g, true, da.data_mut(), 1.0);
                        } else {
                            gemm_into(&g, false, bv, !tb, da.data_mut(), 1.0);
                        }
                    }
                    let db = slot(&mut grads, b, self.shape(b));
                    if tb {
                        gemm_into(&g, true, av, ta, db.data_mut(), 1.0);
                    } else {
                        gemm_into(av, !ta, &g, false, db.data_mut(), 1.0);
                    }
                }
                &Op::Add(a, b) => {
                    accumulate(&mut grads, a, &g, |x| x);
                    accumulate(&mut grads, b, &g, |x| x);
                }
                &Op::Sub(a, b) => {
                    accumulate(&mut grads, a, &g, |x| x);
                    accumulate(&mut grads, b, &g, |x| -x);
                }
                &Op::Mul(a, b) => {
                    let ga = g.zip_map(self.val(b), |x, y| x * y)?;
                    let gb = g.zip_map(self.val(a), |x, y| x * y)?;
                    accumulate(&mut grads, a, &ga, |x| x);
                    accumulate(&mut grads, b, &gb, |x| x);
                }
                &Op::Div(a, b) => {
                    let bv = self.val(b);
                    let out = node.value.as_ref().expect("evaluated");
                    let ga = g.zip_map(bv, |x, y| x / y)?;
                    // d(a/b)/db = -(a/b)/b
                    let gb = ga.zip_map(out, |x, q| -x * q)?;
                    accumulate(&mut grads, a, &ga, |x| x);
                    accumulate(&mut grads, b, &gb, |x| x);
                }
                &Op::AddRow(a, row) => {
                    accumulate(&mut grads, a, &g, |x| x);
                    let cs = column_sums(&g);
                    accumulate(&mut grads, row, &cs, |x| x);
                }
                &Op::MulRow(a, row) => {
                    let ga = broadcast_row(&g, self.val(row), |x, r| x * r);
                    let prod = g.zip_map(self.val(a), |x, y| x * y)?;
                    let cs = column_sums(&prod);
                    accumulate(&mut grads, a, &ga, |x| x);
                    accumulate(&mut grads, row, &cs, |x| x);
                }
                &Op::Tanh(a) => {
                    let y = node.value.as_ref().expect("evaluated");
                    let ga = g.zip_map(y, |x, t| x * (1.0 - t * t))?;
                    accumulate(&mut grads, a, &ga, |x| x);
                }
                &Op::Relu(a) => {
                    let ga = g.zip_map(self.val(a), |x, v| if v > 0.0 { x } else { 0.0 })?;
                    accumulate(&mut grads, a, &ga, |x| x);
                }
                &Op::Square(a) => {
                    let ga = g.zip_map(self.val(a), |x, v| 2.0 * v * x)?;
                    accumulate(&mut grads, a, &ga, |x| x);
                }
                &Op::Scale(a, k) => {
                    accumulate(&mut grads, a, &g, |x| k * x);
                }
                Op::ConcatCols(parts) => {
                    let mut start = 0;
                    for &p in parts {
                        let w = self.shape(p).1;
                        let piece = g.slice_cols(start, start + w);
                        accumulate(&mut grads, p, &piece, |x| x);
                        start += w;
                    }
                }
                Op::ConcatRows(parts) => {
                    let mut start = 0;
                    for &p in parts {
                        let h = self.shape(p).0;
                        let piece = g.slice_rows(start, start + h);
                        accumulate(&mut grads, p, &piece, |x| x);
                        start += h;
                    }
                }
                &Op::SliceCols(a, s, _) => {
                    let shape = self.shape(a);
                    let da = slot(&mut grads, a, shape);
                    let full_cols = shape.1;
                    let w = g.cols();
                    for r in 0..g.rows() {
                        let dst = &mut da.data_mut()[r * full_cols + s..r * full_cols + s + w];
                        for (d, v) in dst.iter_mut().zip(g.row_slice(r)) {
                            *d += v;
                        }
                    }
                }
                &Op::SliceRows(a, s, _) => {
                    let shape = self.shape(a);
                    let da = slot(&mut grads, a, shape);
                    let c = shape.1;
                    let dst = &mut da.data_mut()[s * c..s * c + g.len()];
                    for (d, v) in dst.iter_mut().zip(g.data()) {
                        *d += v;
                    }
                }
                &Op::Mean(a) => {
                    let (r, c) = self.shape(a);
                    let v = g.data()[0] / (r * c) as f64;
                    let da = slot(&mut grads, a, (r, c));
                    da.data_mut().iter_mut().for_each(|d| *d += v);
                }
                &Op::Sum(a) => {
                    let shape = self.shape(a);
                    let v = g.data()[0];
                    let da = slot(&mut grads, a, shape);
                    da.data_mut().iter_mut().for_each(|d| *d += v);
                }
            }
        }

        let out = self
            .params
            .iter()
            .map(|&p| {
                grads
                    .get_mut(p.0)
                    .and_then(Option::take)
                    .unwrap_or_else(|| {
                        let (r, c) = self.shape(p);
                        Tensor::zeros(r, c)
                    })
            })
            .collect();
        Ok(Gradients {
            grads: out,
            vars: self.params.clone(),
        })
    }
}

fn slot(grads: &mut [Option<Tensor>], v: Var, shape: (usize, usize)) -> &mut Tensor {
    grads[v.0].get_or_insert_with(|| Tensor::zeros(shape.0, shape.1))
}

fn accumulate(grads: &mut [Option<Tensor>], v: Var, g: &Tensor, f: impl Fn(f64) -> f64) {
    match &mut grads[v.0] {
        Some(existing) => {
            for (d, x) in existing.data_mut().iter_mut().zip(g.data()) {
                *d += f(*x);
            }
        }
        empty => *empty = Some(g.map(f)),
    }
}

fn broadcast_row(a: &Tensor, row: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let (r, c) = a.dims();
    let rv = row.data();
    let mut out = Vec::with_capacity(r * c);
    for i in 0..r {
        out.extend(a.row_slice(i).iter().zip(rv).map(|(&x, &y)| f(x, y)));
    }
    Tensor::matrix(r, c, out).expect("same shape as operand")
}

fn column_sums(g: &Tensor) -> Tensor {
    let (r, c) = g.dims();
    let mut out = vec![0.0; c];
    for i in 0..r {
        for (o, v) in out.iter_mut().zip(g.row_slice(i)) {
            *o += v;
        }
    }
    Tensor::row(&out)
}
