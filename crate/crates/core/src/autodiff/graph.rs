use super::tensor::{softmax_rows, Tensor};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Handle to a node inside one [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op<T> {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    Scale(Var, T),
    AddScalar(Var),
    Relu(Var),
    Tanh(Var),
    Sigmoid(Var),
    Log(Var),
    Clamp(Var, T, T),
    Softmax(Var),
    LogSoftmax(Var),
    Grl(Var, T),
    Sum(Var),
    Mean(Var),
    Pick(Var, Vec<usize>),
    SliceRows(Var, usize),
    OuterRows(Var, Var),
}

impl<T> Op<T> {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::MatMul(..) => "matmul",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::AddRow(..) => "add_row",
            Op::Scale(..) => "scale",
            Op::AddScalar(..) => "add_scalar",
            Op::Relu(..) => "relu",
            Op::Tanh(..) => "tanh",
            Op::Sigmoid(..) => "sigmoid",
            Op::Log(..) => "log",
            Op::Clamp(..) => "clamp",
            Op::Softmax(..) => "softmax",
            Op::LogSoftmax(..) => "log_softmax",
            Op::Grl(..) => "grl",
            Op::Sum(..) => "sum",
            Op::Mean(..) => "mean",
            Op::Pick(..) => "pick",
            Op::SliceRows(..) => "slice_rows",
            Op::OuterRows(..) => "outer_rows",
        }
    }
}

#[derive(Debug, Clone)]
struct Node<T> {
    value: Tensor<T>,
    grad: Option<Tensor<T>>,
    requires_grad: bool,
    op: Op<T>,
}

/// Define-by-run computation graph.
///
/// Nodes are appended in evaluation order, so a node's parents always have
/// smaller indices and [`Graph::backward`] simply walks the node list in
/// reverse. A graph is meant to be rebuilt for every minibatch.
#[derive(Debug, Clone, Default)]
pub struct Graph<T> {
    nodes: Vec<Node<T>>,
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Leaf that receives a gradient.
    pub fn param(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Leaf that never receives a gradient.
    pub fn input(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn grad(&self, v: Var) -> Option<&Tensor<T>> {
        self.nodes[v.0].grad.as_ref()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Whether a backward path exists from `to` down to `from`.
    pub fn depends_on(&self, to: Var, from: Var) -> bool {
        if from.0 > to.0 {
            return false;
        }
        let mut reach = vec![false; to.0 + 1];
        reach[to.0] = true;
        for i in (from.0..=to.0).rev() {
            if !reach[i] {
                continue;
            }
            if i == from.0 {
                return true;
            }
            for p in parents(&self.nodes[i].op) {
                reach[p.0] = true;
            }
        }
        false
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            grad: None,
            requires_grad,
            op,
        });
        Var(self.nodes.len() - 1)
    }

    fn push_op(&mut self, value: Tensor<T>, op: Op<T>) -> Var {
        let requires_grad = parents(&op).iter().any(|p| self.nodes[p.0].requires_grad);
        self.push(value, op, requires_grad)
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa != sb {
            return Err(Error::Dimension {
                op,
                lhs: sa.to_vec(),
                rhs: sb.to_vec(),
            });
        }
        Ok(())
    }

    fn unary(&mut self, x: Var, op: Op<T>, f: impl Fn(T) -> T) -> Var {
        let value = self.value(x).map(f);
        self.push_op(value, op)
    }

    fn binary(
        &mut self,
        name: &'static str,
        a: Var,
        b: Var,
        op: Op<T>,
        f: impl Fn(T, T) -> T,
    ) -> Result<Var> {
        self.same_shape(name, a, b)?;
        let (va, vb) = (self.value(a), self.value(b));
        let data = va
            .data()
            .iter()
            .zip(vb.data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        let value = Tensor::new(va.shape().to_vec(), data)?;
        Ok(self.push_op(value, op))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        let (m, k) = va.dims2("matmul")?;
        let (k2, n) = vb.dims2("matmul")?;
        if k != k2 {
            return Err(Error::Dimension {
                op: "matmul",
                lhs: va.shape().to_vec(),
                rhs: vb.shape().to_vec(),
            });
        }
        let mut out = vec![T::zero(); m * n];
        matmul_into(va.data(), vb.data(), &mut out, m, k, n);
        let value = Tensor::new(vec![m, n], out)?;
        Ok(self.push_op(value, Op::MatMul(a, b)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("add", a, b, Op::Add(a, b), |x, y| x + y)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("sub", a, b, Op::Sub(a, b), |x, y| x - y)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("mul", a, b, Op::Mul(a, b), |x, y| x * y)
    }

    /// Adds a length-`n` bias to every row of an `m × n` matrix.
    pub fn add_row(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (vx, vb) = (self.value(x), self.value(bias));
        let (m, n) = vx.dims2("add_row")?;
        if vb.numel() != n {
            return Err(Error::Dimension {
                op: "add_row",
                lhs: vx.shape().to_vec(),
                rhs: vb.shape().to_vec(),
            });
        }
        let mut data = vx.data().to_vec();
        for i in 0..m {
            for (o, &b) in data[i * n..(i + 1) * n].iter_mut().zip(vb.data()) {
                *o += b;
            }
        }
        let value = Tensor::new(vec![m, n], data)?;
        Ok(self.push_op(value, Op::AddRow(x, bias)))
    }

    pub fn scale(&mut self, x: Var, c: T) -> Var {
        self.unary(x, Op::Scale(x, c), |v| v * c)
    }

    pub fn add_scalar(&mut self, x: Var, c: T) -> Var {
        self.unary(x, Op::AddScalar(x), |v| v + c)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.unary(
            x,
            Op::Relu(x),
            |v| if v > T::zero() { v } else { T::zero() },
        )
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.unary(x, Op::Tanh(x), T::tanh)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.unary(x, Op::Sigmoid(x), sigmoid)
    }

    /// Natural log; every input element must be strictly positive.
    // negated comparisons so NaN is rejected as well
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn log(&mut self, x: Var) -> Result<Var> {
        if let Some(bad) = self.value(x).data().iter().find(|v| !(**v > T::zero())) {
            return Err(Error::Domain {
                op: "log",
                detail: format!("non-positive input {bad}"),
            });
        }
        Ok(self.unary(x, Op::Log(x), T::ln))
    }

    /// Clamps into `[lo, hi]`; the gradient is zero outside the interval.
    pub fn clamp(&mut self, x: Var, lo: T, hi: T) -> Var {
        self.unary(x, Op::Clamp(x, lo, hi), |v| v.max(lo).min(hi))
    }

    pub fn softmax(&mut self, x: Var) -> Result<Var> {
        let value = softmax_rows(self.value(x))?;
        Ok(self.push_op(value, Op::Softmax(x)))
    }

    pub fn log_softmax(&mut self, x: Var) -> Result<Var> {
        let vx = self.value(x);
        let (rows, cols) = vx.dims2("log_softmax")?;
        if cols < 2 {
            return Err(Error::contract(format!(
                "log_softmax needs at least 2 classes, got {cols}"
            )));
        }
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            let row = vx.row(i);
            let max = row.iter().copied().fold(T::neg_infinity(), T::max);
            let lse = max + row.iter().map(|&v| (v - max).exp()).sum::<T>().ln();
            data.extend(row.iter().map(|&v| v - lse));
        }
        let value = Tensor::new(vec![rows, cols], data)?;
        Ok(self.push_op(value, Op::LogSoftmax(x)))
    }

    /// Gradient reversal: identity forward, `-coeff * upstream` backward.
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn grl(&mut self, x: Var, coeff: T) -> Result<Var> {
        if !(coeff >= T::zero()) {
            return Err(Error::contract(format!(
                "grl coeff must be >= 0, got {coeff}"
            )));
        }
        Ok(self.unary(x, Op::Grl(x, coeff), |v| v))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let total = self.value(x).data().iter().copied().sum();
        self.push_op(Tensor::scalar(total), Op::Sum(x))
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let vx = self.value(x);
        let n = T::from_usize(vx.numel()).expect("numel fits scalar");
        let total: T = vx.data().iter().copied().sum();
        self.push_op(Tensor::scalar(total / n), Op::Mean(x))
    }

    /// Picks `x[i, indices[i]]` from each row of a `b × K` matrix.
    pub fn pick(&mut self, x: Var, indices: &[usize]) -> Result<Var> {
        let vx = self.value(x);
        let (rows, cols) = vx.dims2("pick")?;
        if indices.len() != rows {
            return Err(Error::Dimension {
                op: "pick",
                lhs: vx.shape().to_vec(),
                rhs: vec![indices.len()],
            });
        }
        if let Some(&bad) = indices.iter().find(|&&c| c >= cols) {
            return Err(Error::contract(format!(
                "class index {bad} out of range [0, {cols})"
            )));
        }
        let data = indices
            .iter()
            .enumerate()
            .map(|(i, &c)| vx.row(i)[c])
            .collect();
        let value = Tensor::vector(data)?;
        Ok(self.push_op(value, Op::Pick(x, indices.to_vec())))
    }

    /// Rows `start..end` of a matrix.
    pub fn slice_rows(&mut self, x: Var, start: usize, end: usize) -> Result<Var> {
        let vx = self.value(x);
        let (rows, cols) = vx.dims2("slice_rows")?;
        if start >= end || end > rows {
            return Err(Error::contract(format!(
                "slice_rows {start}..{end} invalid for {rows} rows"
            )));
        }
        let data = vx.data()[start * cols..end * cols].to_vec();
        let value = Tensor::new(vec![end - start, cols], data)?;
        Ok(self.push_op(value, Op::SliceRows(x, start)))
    }

    /// Row-wise flattened outer product: `out[i, a*q + c] = f[i, a] * g[i, c]`.
    pub fn outer_rows(&mut self, f: Var, g: Var) -> Result<Var> {
        let (vf, vg) = (self.value(f), self.value(g));
        let (b, p) = vf.dims2("outer_rows")?;
        let (b2, q) = vg.dims2("outer_rows")?;
        if b != b2 {
            return Err(Error::Dimension {
                op: "outer_rows",
                lhs: vf.shape().to_vec(),
                rhs: vg.shape().to_vec(),
            });
        }
        let mut data = Vec::with_capacity(b * p * q);
        for i in 0..b {
            let (fr, gr) = (vf.row(i), vg.row(i));
            for &fa in fr {
                data.extend(gr.iter().map(|&gc| fa * gc));
            }
        }
        let value = Tensor::new(vec![b, p * q], data)?;
        Ok(self.push_op(value, Op::OuterRows(f, g)))
    }

    /// Reverse-mode sweep from a one-element `loss`.
    ///
    /// Clears any previous gradients, seeds `d loss / d loss = 1` and fills the
    /// gradient of every node that requires one.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        let shape = self.value(loss).shape().to_vec();
        if self.value(loss).numel() != 1 {
            return Err(Error::contract(format!(
                "backward needs a scalar loss, got shape {shape:?}"
            )));
        }
        for node in &mut self.nodes {
            node.grad = None;
        }
        self.nodes[loss.0].grad = Some(Tensor::full(&shape, T::one()));

        for i in (0..=loss.0).rev() {
            if !self.nodes[i].requires_grad {
                continue;
            }
            let Some(upstream) = self.nodes[i].grad.take() else {
                continue;
            };
            self.propagate(i, &upstream)?;
            if !upstream.is_finite() {
                return Err(Error::Domain {
                    op: "backward",
                    detail: format!(
                        "non-finite gradient at {} node {i}",
                        self.nodes[i].op.name()
                    ),
                });
            }
            self.nodes[i].grad = Some(upstream);
        }
        Ok(())
    }

    fn accumulate(&mut self, target: Var, contribution: Vec<T>) {
        let node = &mut self.nodes[target.0];
        if !node.requires_grad {
            return;
        }
        match node.grad.as_mut() {
            Some(g) => {
                for (acc, c) in g.data_mut().iter_mut().zip(contribution) {
                    *acc += c;
                }
            }
            None => {
                let shape = node.value.shape().to_vec();
                node.grad = Some(Tensor::new(shape, contribution).expect("gradient shape"));
            }
        }
    }

    fn propagate(&mut self, i: usize, upstream: &Tensor<T>) -> Result<()> {
        let up = upstream.data();
        let op = self.nodes[i].op.clone();
        match op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (m, k) = self.value(a).dims2("matmul")?;
                let n = self.value(b).shape()[1];
                if self.requires_grad(a) {
                    // da = up · bᵀ
                    let vb = self.value(b).data();
                    let mut da = vec![T::zero(); m * k];
                    for r in 0..m {
                        for c in 0..k {
                            let mut acc = T::zero();
                            for j in 0..n {
                                acc += up[r * n + j] * vb[c * n + j];
                            }
                            da[r * k + c] = acc;
                        }
                    }
                    self.accumulate(a, da);
                }
                if self.requires_grad(b) {
                    // db = aᵀ · up
                    let va = self.value(a).data();
                    let mut db = vec![T::zero(); k * n];
                    for r in 0..m {
                        for c in 0..k {
                            let av = va[r * k + c];
                            for j in 0..n {
                                db[c * n + j] += av * up[r * n + j];
                            }
                        }
                    }
                    self.accumulate(b, db);
                }
            }
            Op::Add(a, b) => {
                self.accumulate(a, up.to_vec());
                self.accumulate(b, up.to_vec());
            }
            Op::Sub(a, b) => {
                self.accumulate(a, up.to_vec());
                self.accumulate(b, up.iter().map(|&u| -u).collect());
            }
            Op::Mul(a, b) => {
                let da = up
                    .iter()
                    .zip(self.value(b).data())
                    .map(|(&u, &y)| u * y)
                    .collect();
                let db = up
                    .iter()
                    .zip(self.value(a).data())
                    .map(|(&u, &x)| u * x)
                    .collect();
                self.accumulate(a, da);
                self.accumulate(b, db);
            }
            Op::AddRow(x, bias) => {
                self.accumulate(x, up.to_vec());
                let n = self.value(bias).numel();
                let mut db = vec![T::zero(); n];
                for row in up.chunks(n) {
                    for (acc, &u) in db.iter_mut().zip(row) {
                        *acc += u;
                    }
                }
                self.accumulate(bias, db);
            }
            Op::Scale(x, c) => self.accumulate(x, up.iter().map(|&u| u * c).collect()),
            Op::AddScalar(x) => self.accumulate(x, up.to_vec()),
            Op::Relu(x) => {
                let dx = up
                    .iter()
                    .zip(self.value(x).data())
                    .map(|(&u, &v)| if v > T::zero() { u } else { T::zero() })
                    .collect();
                self.accumulate(x, dx);
            }
            Op::Tanh(x) => {
                let y = self.nodes[i].value.data();
                let dx = up
                    .iter()
                    .zip(y)
                    .map(|(&u, &t)| u * (T::one() - t * t))
                    .collect();
                self.accumulate(x, dx);
            }
            Op::Sigmoid(x) => {
                let y = self.nodes[i].value.data();
                let dx = up
                    .iter()
                    .zip(y)
                    .map(|(&u, &s)| u * s * (T::one() - s))
                    .collect();
                self.accumulate(x, dx);
            }
            Op::Log(x) => {
                let dx = up
                    .iter()
                    .zip(self.value(x).data())
                    .map(|(&u, &v)| u / v)
                    .collect();
                self.accumulate(x, dx);
            }
            Op::Clamp(x, lo, hi) => {
                let dx = up
                    .iter()
                    .zip(self.value(x).data())
                    .map(|(&u, &v)| if v >= lo && v <= hi { u } else { T::zero() })
                    .collect();
                self.accumulate(x, dx);
            }
            Op::Softmax(x) => {
                let y = &self.nodes[i].value;
                let cols = y.shape()[1];
                let mut dx = Vec::with_capacity(up.len());
                for (yr, ur) in y.data().chunks(cols).zip(up.chunks(cols)) {
                    let dot: T = yr.iter().zip(ur).map(|(&s, &u)| s * u).sum();
                    dx.extend(yr.iter().zip(ur).map(|(&s, &u)| s * (u - dot)));
                }
                self.accumulate(x, dx);
            }
            Op::LogSoftmax(x) => {
                let y = &self.nodes[i].value;
                let cols = y.shape()[1];
                let mut dx = Vec::with_capacity(up.len());
                for (yr, ur) in y.data().chunks(cols).zip(up.chunks(cols)) {
                    let total: T = ur.iter().copied().sum();
                    dx.extend(yr.iter().zip(ur).map(|(&ls, &u)| u - ls.exp() * total));
                }
                self.accumulate(x, dx);
            }
            Op::Grl(x, c) => self.accumulate(x, up.iter().map(|&u| -(c * u)).collect()),
            Op::Sum(x) => {
                let n = self.value(x).numel();
                self.accumulate(x, vec![up[0]; n]);
            }
            Op::Mean(x) => {
                let n = self.value(x).numel();
                let g = up[0] / T::from_usize(n).expect("numel fits scalar");
                self.accumulate(x, vec![g; n]);
            }
            Op::Pick(x, indices) => {
                let cols = self.value(x).shape()[1];
                let mut dx = vec![T::zero(); self.value(x).numel()];
                for (r, (&c, &u)) in indices.iter().zip(up).enumerate() {
                    dx[r * cols + c] = u;
                }
                self.accumulate(x, dx);
            }
            Op::SliceRows(x, start) => {
                let cols = self.value(x).shape()[1];
                let mut dx = vec![T::zero(); self.value(x).numel()];
                dx[start * cols..start * cols + up.len()].copy_from_slice(up);
                self.accumulate(x, dx);
            }
            Op::OuterRows(f, g) => {
                let p = self.value(f).shape()[1];
                let q = self.value(g).shape()[1];
                let (vf, vg) = (self.value(f).data(), self.value(g).data());
                let mut df = vec![T::zero(); vf.len()];
                let mut dg = vec![T::zero(); vg.len()];
                for (r, ur) in up.chunks(p * q).enumerate() {
                    for a in 0..p {
                        let fa = vf[r * p + a];
                        for c in 0..q {
                            let u = ur[a * q + c];
                            df[r * p + a] += u * vg[r * q + c];
                            dg[r * q + c] += u * fa;
                        }
                    }
                }
                self.accumulate(f, df);
                self.accumulate(g, dg);
            }
        }
        Ok(())
    }
}

fn parents<T>(op: &Op<T>) -> Vec<Var> {
    match *op {
        Op::Leaf => vec![],
        Op::MatMul(a, b) | Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) | Op::AddRow(a, b) => {
            vec![a, b]
        }
        Op::OuterRows(a, b) => vec![a, b],
        Op::Scale(x, _)
        | Op::AddScalar(x)
        | Op::Relu(x)
        | Op::Tanh(x)
        | Op::Sigmoid(x)
        | Op::Log(x)
        | Op::Clamp(x, _, _)
        | Op::Softmax(x)
        | Op::LogSoftmax(x)
        | Op::Grl(x, _)
        | Op::Sum(x)
        | Op::Mean(x)
        | Op::Pick(x, _)
        | Op::SliceRows(x, _) => vec![x],
    }
}

fn matmul_into<T: Scalar>(a: &[T], b: &[T], out: &mut [T], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            for (o, &bv) in row.iter_mut().zip(&b[p * n..(p + 1) * n]) {
                *o += av * bv;
            }
        }
    }
}

/// Numerically stable logistic function.
pub fn sigmoid<T: Scalar>(v: T) -> T {
    if v >= T::zero() {
        T::one() / (T::one() + (-v).exp())
    } else {
        let e = v.exp();
        e / (T::one() + e)
    }
}
