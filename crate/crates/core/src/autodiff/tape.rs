//! Define-by-run reverse-mode automatic differentiation.
//!
//! Every primitive appends one node to the [`Tape`]; node `k` only refers to
//! nodes `< k`, so a single reverse sweep over the node list visits each entry
//! once, after all of its consumers.

use crate::error::{Error, Result};
use crate::tensor::{gemm, Tensor};

/// Floor applied to logarithm operands.
pub const LOG_FLOOR: f64 = 1e-12;

/// Handle to a node recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Primitive operations understood by the tape.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum OpKind {
    /// `(m,k) × (k,n)`.
    MatMul,
    /// `(n,k) + (1,k)`, the bias broadcast over rows.
    AddRow,
    Add,
    Sub,
    Mul,
    Tanh,
    Relu,
    Sigmoid,
    Softplus,
    Exp,
    /// Natural logarithm with the operand floored at [`LOG_FLOOR`].
    Log,
    Neg,
    Square,
    Scale(f64),
    AddScalar(f64),
    Clamp(f64, f64),
    /// Concatenation along the last axis; any number of operands.
    Concat,
    /// Sum of every element into a `(1,1)` scalar.
    Sum,
    /// Mean of every element into a `(1,1)` scalar.
    Mean,
    /// Per-row sum, `(n,k) → (n,1)`.
    SumCols,
    SliceCols {
        start: usize,
        len: usize,
    },
    SliceRows {
        start: usize,
        len: usize,
    },
    /// Row-wise `x − logsumexp(x)`.
    LogSoftmax,
    /// `select(mask, a, b)`: `a` where `mask != 0`, else `b`. The mask operand
    /// never receives gradient.
    Select,
}

impl OpKind {
    pub fn name(&self) -> &'static str {
        match self {
            OpKind::MatMul => "matmul",
            OpKind::AddRow => "add_row",
            OpKind::Add => "add",
            OpKind::Sub => "sub",
            OpKind::Mul => "mul",
            OpKind::Tanh => "tanh",
            OpKind::Relu => "relu",
            OpKind::Sigmoid => "sigmoid",
            OpKind::Softplus => "softplus",
            OpKind::Exp => "exp",
            OpKind::Log => "log",
            OpKind::Neg => "neg",
            OpKind::Square => "square",
            OpKind::Scale(_) => "scale",
            OpKind::AddScalar(_) => "add_scalar",
            OpKind::Clamp(..) => "clamp",
            OpKind::Concat => "concat",
            OpKind::Sum => "sum",
            OpKind::Mean => "mean",
            OpKind::SumCols => "sum_cols",
            OpKind::SliceCols { .. } => "slice_cols",
            OpKind::SliceRows { .. } => "slice_rows",
            OpKind::LogSoftmax => "log_softmax",
            OpKind::Select => "select",
        }
    }
}

#[derive(Clone, Debug)]
enum Source {
    Leaf,
    Op(OpKind, Vec<Var>),
}

#[derive(Clone, Debug)]
struct Node {
    value: Tensor,
    source: Source,
    requires_grad: bool,
}

#[derive(Clone, Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients of a scalar with respect to every node of a tape.
#[derive(Clone, Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    shapes: Vec<Vec<usize>>,
}

impl Gradients {
    /// Gradient with respect to `var`; zeros when the loss does not depend on it.
    pub fn wrt(&self, var: Var) -> Tensor {
        match &self.grads[var.0] {
            Some(g) => g.clone(),
            None => {
                let shape = self.shapes[var.0].clone();
                let len = shape.iter().product();
                Tensor::new(shape, vec![0.0; len]).expect("shape/len agree")
            }
        }
    }

    pub fn get(&self, var: Var) -> Option<&Tensor> {
        self.grads[var.0].as_ref()
    }
}

pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Records a differentiable leaf.
    pub fn variable(&mut self, value: Tensor) -> Var {
        self.push(value, Source::Leaf, true)
    }

    /// Records a leaf that never receives gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Source::Leaf, false)
    }

    pub fn value(&self, var: Var) -> &Tensor {
        &self.nodes[var.0].value
    }

    pub fn shape(&self, var: Var) -> &[usize] {
        self.nodes[var.0].value.shape()
    }

    fn push(&mut self, value: Tensor, source: Source, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            source,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn shape_err(&self, kind: OpKind, a: Var, b: Var) -> Error {
        Error::Shape {
            op: kind.name(),
            lhs: self.shape(a).to_vec(),
            rhs: self.shape(b).to_vec(),
        }
    }

    /// Evaluates `kind` on `operands` and records the result.
    pub fn apply(&mut self, kind: OpKind, operands: &[Var]) -> Result<Var> {
        let arity_ok = match kind {
            OpKind::Concat => !operands.is_empty(),
            OpKind::Select => operands.len() == 3,
            OpKind::MatMul | OpKind::AddRow | OpKind::Add | OpKind::Sub | OpKind::Mul => operands.len() == 2,
            _ => operands.len() == 1,
        };
        if !arity_ok {
            return Err(Error::Shape {
                op: kind.name(),
                lhs: vec![operands.len()],
                rhs: vec![],
            });
        }
        let value = self.evaluate(kind, operands)?;
        let requires_grad = operands.iter().any(|v| self.nodes[v.0].requires_grad);
        Ok(self.push(value, Source::Op(kind, operands.to_vec()), requires_grad))
    }

    fn evaluate(&self, kind: OpKind, ops: &[Var]) -> Result<Tensor> {
        let x = self.value(ops[0]);
        let value = match kind {
            OpKind::MatMul => x
                .matmul(self.value(ops[1]))
                .map_err(|_| self.shape_err(kind, ops[0], ops[1]))?,
            OpKind::AddRow => {
                let b = self.value(ops[1]);
                if b.rows() != 1 || b.cols() != x.cols() {
                    return Err(self.shape_err(kind, ops[0], ops[1]));
                }
                x.add_row(b)?
            }
            OpKind::Add | OpKind::Sub | OpKind::Mul => {
                let y = self.value(ops[1]);
                if x.shape() != y.shape() {
                    return Err(self.shape_err(kind, ops[0], ops[1]));
                }
                match kind {
                    OpKind::Add => x.zip_map(y, |a, b| a + b),
                    OpKind::Sub => x.zip_map(y, |a, b| a - b),
                    _ => x.zip_map(y, |a, b| a * b),
                }
            }
            OpKind::Tanh => x.map(f64::tanh),
            OpKind::Relu => x.map(|v| v.max(0.0)),
            OpKind::Sigmoid => x.map(sigmoid),
            OpKind::Softplus => x.map(softplus),
            OpKind::Exp => x.map(f64::exp),
            OpKind::Log => x.map(|v| v.max(LOG_FLOOR).ln()),
            OpKind::Neg => x.map(|v| -v),
            OpKind::Square => x.map(|v| v * v),
            OpKind::Scale(s) => x.map(|v| v * s),
            OpKind::AddScalar(s) => x.map(|v| v + s),
            OpKind::Clamp(lo, hi) => x.map(|v| v.clamp(lo, hi)),
            OpKind::Concat => {
                let parts: Vec<&Tensor> = ops.iter().map(|&v| self.value(v)).collect();
                for (i, p) in parts.iter().enumerate() {
                    if p.rows() != parts[0].rows() {
                        return Err(self.shape_err(kind, ops[0], ops[i]));
                    }
                }
                Tensor::concat_cols(&parts)?
            }
            OpKind::Sum => Tensor::scalar(x.sum()),
            OpKind::Mean => {
                if x.is_empty() {
                    return Err(Error::Shape {
                        op: kind.name(),
                        lhs: x.shape().to_vec(),
                        rhs: vec![],
                    });
                }
                Tensor::scalar(x.sum() / x.len() as f64)
            }
            OpKind::SumCols => {
                let values = (0..x.rows()).map(|r| x.row_slice(r).iter().sum()).collect();
                Tensor::matrix(x.rows(), 1, values)?
            }
            OpKind::SliceCols { start, len } => {
                if start + len > x.cols() {
                    return Err(Error::Shape {
                        op: kind.name(),
                        lhs: x.shape().to_vec(),
                        rhs: vec![start, len],
                    });
                }
                x.cols_range(start, len)
            }
            OpKind::SliceRows { start, len } => {
                if start + len > x.rows() {
                    return Err(Error::Shape {
                        op: kind.name(),
                        lhs: x.shape().to_vec(),
                        rhs: vec![start, len],
                    });
                }
                x.rows_range(start, len)
            }
            OpKind::LogSoftmax => {
                let mut out = x.clone();
                for r in 0..x.rows() {
                    let row = out.row_slice_mut(r);
                    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
                    row.iter_mut().for_each(|v| *v -= lse);
                }
                out
            }
            OpKind::Select => {
                let (a, b) = (self.value(ops[1]), self.value(ops[2]));
                if x.shape() != a.shape() {
                    return Err(self.shape_err(kind, ops[0], ops[1]));
                }
                if a.shape() != b.shape() {
                    return Err(self.shape_err(kind, ops[1], ops[2]));
                }
                let values = x
                    .values()
                    .iter()
                    .zip(a.values().iter().zip(b.values()))
                    .map(|(&m, (&a, &b))| if m != 0.0 { a } else { b })
                    .collect();
                Tensor::new(a.shape().to_vec(), values)?
            }
        };
        Ok(value)
    }

    // Convenience wrappers.

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.apply(OpKind::MatMul, &[a, b])
    }
    pub fn add_row(&mut self, a: Var, bias: Var) -> Result<Var> {
        self.apply(OpKind::AddRow, &[a, bias])
    }
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.apply(OpKind::Add, &[a, b])
    }
    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.apply(OpKind::Sub, &[a, b])
    }
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.apply(OpKind::Mul, &[a, b])
    }
    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        self.apply(OpKind::Tanh, &[a])
    }
    pub fn relu(&mut self, a: Var) -> Result<Var> {
        self.apply(OpKind::Relu, &[a])
    }
    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        self.apply(OpKind::Sigmoid, &[a])
    }
    pub fn softplus(&mut self, a: Var) -> Result<Var> {
        self.apply(OpKind::Softplus, &[a])
    }
    pub fn exp(&mut self, a: Var) -> Result<Var> {
        self.apply(OpKind::Exp, &[a])
    }
    pub fn log(&mut self, a: Var) -> Result<Var> {
        self.apply(OpKind::Log, &[a])
    }
    pub fn neg(&mut self, a: Var) -> Result<Var> {
        self.apply(OpKind::Neg, &[a])
    }
    pub fn square(&mut self, a: Var) -> Result<Var> {
        self.apply(OpKind::Square, &[a])
    }
    pub fn scale(&mut self, a: Var, s: f64) -> Result<Var> {
        self.apply(OpKind::Scale(s), &[a])
    }
    pub fn add_scalar(&mut self, a: Var, s: f64) -> Result<Var> {
        self.apply(OpKind::AddScalar(s), &[a])
    }
    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Result<Var> {
        self.apply(OpKind::Clamp(lo, hi), &[a])
    }
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        self.apply(OpKind::Concat, parts)
    }
    pub fn sum(&mut self, a: Var) -> Result<Var> {
        self.apply(OpKind::Sum, &[a])
    }
    pub fn mean(&mut self, a: Var) -> Result<Var> {
        self.apply(OpKind::Mean, &[a])
    }
    pub fn sum_cols(&mut self, a: Var) -> Result<Var> {
        self.apply(OpKind::SumCols, &[a])
    }
    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        self.apply(OpKind::SliceCols { start, len }, &[a])
    }
    pub fn slice_rows(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        self.apply(OpKind::SliceRows { start, len }, &[a])
    }
    pub fn log_softmax(&mut self, a: Var) -> Result<Var> {
        self.apply(OpKind::LogSoftmax, &[a])
    }
    pub fn select(&mut self, mask: Var, a: Var, b: Var) -> Result<Var> {
        self.apply(OpKind::Select, &[mask, a, b])
    }

    /// Reverse sweep from a scalar `loss`, seeded with `d loss / d loss = 1`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let loss_value = self.value(loss);
        if !loss_value.is_scalar() {
            return Err(Error::NonScalarLoss(loss_value.shape().to_vec()));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor::new(loss_value.shape().to_vec(), vec![1.0])?);

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let Source::Op(kind, ref inputs) = node.source else {
                continue;
            };
            let Some(upstream) = grads[idx].take() else {
                continue;
            };
            self.propagate(kind, inputs, &node.value, &upstream, &mut grads);
            grads[idx] = Some(upstream);
        }

        Ok(Gradients {
            grads,
            shapes: self.nodes.iter().map(|n| n.value.shape().to_vec()).collect(),
        })
    }

    fn propagate(&self, kind: OpKind, inputs: &[Var], out: &Tensor, up: &Tensor, grads: &mut [Option<Tensor>]) {
        let needs = |v: Var| self.nodes[v.0].requires_grad;
        let x = self.value(inputs[0]);
        match kind {
            OpKind::MatMul => {
                let (a, b) = (inputs[0], inputs[1]);
                let (m, k) = (x.rows(), x.cols());
                let n = self.value(b).cols();
                if needs(a) {
                    // dA = dC · Bᵀ
                    let mut g = vec![0.0; m * k];
                    gemm(m, n, k, up.values(), false, self.value(b).values(), true, &mut g, 0.0);
                    accumulate(grads, a, Tensor::matrix(m, k, g).expect("shape"));
                }
                if needs(b) {
                    // dB = Aᵀ · dC
                    let mut g = vec![0.0; k * n];
                    gemm(k, m, n, x.values(), true, up.values(), false, &mut g, 0.0);
                    accumulate(grads, b, Tensor::matrix(k, n, g).expect("shape"));
                }
            }
            OpKind::AddRow => {
                if needs(inputs[0]) {
                    accumulate(grads, inputs[0], up.clone());
                }
                if needs(inputs[1]) {
                    let cols = up.cols();
                    let mut g = vec![0.0; cols];
                    for r in 0..up.rows() {
                        for (gc, u) in g.iter_mut().zip(up.row_slice(r)) {
                            *gc += u;
                        }
                    }
                    let shape = self.shape(inputs[1]).to_vec();
                    accumulate(grads, inputs[1], Tensor::new(shape, g).expect("shape"));
                }
            }
            OpKind::Add | OpKind::Sub => {
                if needs(inputs[0]) {
                    accumulate(grads, inputs[0], up.clone());
                }
                if needs(inputs[1]) {
                    let g = if kind == OpKind::Sub {
                        up.map(|v| -v)
                    } else {
                        up.clone()
                    };
                    accumulate(grads, inputs[1], g);
                }
            }
            OpKind::Mul => {
                let y = self.value(inputs[1]);
                if needs(inputs[0]) {
                    accumulate(grads, inputs[0], up.zip_map(y, |u, b| u * b));
                }
                if needs(inputs[1]) {
                    accumulate(grads, inputs[1], up.zip_map(x, |u, a| u * a));
                }
            }
            OpKind::Tanh => accumulate(grads, inputs[0], up.zip_map(out, |u, t| u * (1.0 - t * t))),
            OpKind::Relu => accumulate(grads, inputs[0], up.zip_map(x, |u, v| if v > 0.0 { u } else { 0.0 })),
            OpKind::Sigmoid => accumulate(grads, inputs[0], up.zip_map(out, |u, s| u * s * (1.0 - s))),
            OpKind::Softplus => accumulate(grads, inputs[0], up.zip_map(x, |u, v| u * sigmoid(v))),
            OpKind::Exp => accumulate(grads, inputs[0], up.zip_map(out, |u, e| u * e)),
            OpKind::Log => accumulate(
                grads,
                inputs[0],
                up.zip_map(x, |u, v| if v > LOG_FLOOR { u / v } else { 0.0 }),
            ),
            OpKind::Neg => accumulate(grads, inputs[0], up.map(|u| -u)),
            OpKind::Square => accumulate(grads, inputs[0], up.zip_map(x, |u, v| 2.0 * u * v)),
            OpKind::Scale(s) => accumulate(grads, inputs[0], up.map(|u| u * s)),
            OpKind::AddScalar(_) => accumulate(grads, inputs[0], up.clone()),
            OpKind::Clamp(lo, hi) => accumulate(
                grads,
                inputs[0],
                up.zip_map(x, |u, v| if v >= lo && v <= hi { u } else { 0.0 }),
            ),
            OpKind::Concat => {
                let mut offset = 0;
                for &input in inputs {
                    let width = self.value(input).cols();
                    if needs(input) {
                        let g = up.cols_range(offset, width);
                        let shape = self.shape(input).to_vec();
                        accumulate(grads, input, Tensor::new(shape, g.into_values()).expect("shape"));
                    }
                    offset += width;
                }
            }
            OpKind::Sum | OpKind::Mean => {
                let scale = if kind == OpKind::Mean {
                    1.0 / x.len() as f64
                } else {
                    1.0
                };
                let g = up.item() * scale;
                accumulate(grads, inputs[0], x.map(|_| g));
            }
            OpKind::SumCols => {
                let mut g = x.clone();
                for r in 0..x.rows() {
                    let u = up.get(r, 0);
                    g.row_slice_mut(r).iter_mut().for_each(|v| *v = u);
                }
                accumulate(grads, inputs[0], g);
            }
            OpKind::SliceCols { start, len } => {
                let mut g = Tensor::zeros(x.rows(), x.cols());
                for r in 0..x.rows() {
                    g.row_slice_mut(r)[start..start + len].copy_from_slice(up.row_slice(r));
                }
                let shape = x.shape().to_vec();
                accumulate(grads, inputs[0], Tensor::new(shape, g.into_values()).expect("shape"));
            }
            OpKind::SliceRows { start, len } => {
                let cols = x.cols();
                let mut g = vec![0.0; x.len()];
                g[start * cols..(start + len) * cols].copy_from_slice(up.values());
                let shape = x.shape().to_vec();
                accumulate(grads, inputs[0], Tensor::new(shape, g).expect("shape"));
            }
            OpKind::LogSoftmax => {
                let mut g = up.clone();
                for r in 0..out.rows() {
                    let total: f64 = up.row_slice(r).iter().sum();
                    for (gv, o) in g.row_slice_mut(r).iter_mut().zip(out.row_slice(r)) {
                        *gv -= o.exp() * total;
                    }
                }
                accumulate(grads, inputs[0], g);
            }
            OpKind::Select => {
                let mask = x;
                if needs(inputs[1]) {
                    accumulate(
                        grads,
                        inputs[1],
                        up.zip_map(mask, |u, m| if m != 0.0 { u } else { 0.0 }),
                    );
                }
                if needs(inputs[2]) {
                    accumulate(
                        grads,
                        inputs[2],
                        up.zip_map(mask, |u, m| if m != 0.0 { 0.0 } else { u }),
                    );
                }
            }
        }
    }
}

fn accumulate(grads: &mut [Option<Tensor>], var: Var, g: Tensor) {
    match &mut grads[var.0] {
        Some(existing) => existing
            .values_mut()
            .iter_mut()
            .zip(g.values())
            .for_each(|(e, v)| *e += v),
        slot @ None => *slot = Some(g),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_shape_algebra() {
        let mut t = Tape::new();
        let a = t.constant(Tensor::zeros(2, 3));
        let b = t.constant(Tensor::zeros(3, 4));
        let c = t.matmul(a, b).unwrap();
        assert_eq!(t.shape(c), &[2, 4]);
    }

    #[test]
    fn matmul_shape_error_names_op_and_shapes() {
        let mut t = Tape::new();
        let a = t.constant(Tensor::zeros(2, 3));
        let b = t.constant(Tensor::zeros(2, 4));
        let err = t.matmul(a, b).unwrap_err().to_string();
        assert!(err.contains("matmul"), "{err}");
        assert!(err.contains("[2, 3]") && err.contains("[2, 4]"), "{err}");
    }

    #[test]
    fn sigmoid_at_zero_is_half() {
        let mut t = Tape::new();
        let x = t.variable(Tensor::scalar(0.0));
        let y = t.sigmoid(x).unwrap();
        assert_eq!(t.value(y).item(), 0.5);
        let g = t.backward(y).unwrap();
        assert!((g.wrt(x).item() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn concat_shape() {
        let mut t = Tape::new();
        let a = t.constant(Tensor::zeros(1, 2));
        let b = t.constant(Tensor::zeros(1, 3));
        let c = t.concat(&[a, b]).unwrap();
        assert_eq!(t.shape(c), &[1, 5]);
    }

    #[test]
    fn square_gradient() {
        let mut t = Tape::new();
        let x = t.variable(Tensor::scalar(3.0));
        let y = t.mul(x, x).unwrap();
        let g = t.backward(y).unwrap();
        assert_eq!(g.wrt(x).item(), 6.0);
    }

    #[test]
    fn sum_gradient_is_all_ones() {
        let mut t = Tape::new();
        let x = t.variable(Tensor::matrix(2, 2, vec![1., -2., 3., 4.]).unwrap());
        let s = t.sum(x).unwrap();
        let g = t.backward(s).unwrap();
        assert_eq!(g.wrt(x).values(), &[1.0; 4]);
    }

    #[test]
    fn non_scalar_loss_rejected() {
        let mut t = Tape::new();
        let x = t.variable(Tensor::zeros(2, 2));
        assert!(matches!(t.backward(x), Err(Error::NonScalarLoss(_))));
    }

    #[test]
    fn select_routes_values_and_gradients() {
        let mut t = Tape::new();
        let m = t.constant(Tensor::row(vec![1.0, 0.0]));
        let a = t.variable(Tensor::row(vec![10.0, 20.0]));
        let b = t.variable(Tensor::row(vec![-1.0, -2.0]));
        let s = t.select(m, a, b).unwrap();
        assert_eq!(t.value(s).values(), &[10.0, -2.0]);
        let total = t.sum(s).unwrap();
        let g = t.backward(total).unwrap();
        assert_eq!(g.wrt(a).values(), &[1.0, 0.0]);
        assert_eq!(g.wrt(b).values(), &[0.0, 1.0]);
    }

    #[test]
    fn unreachable_leaf_gets_zero_gradient() {
        let mut t = Tape::new();
        let x = t.variable(Tensor::scalar(1.0));
        let y = t.variable(Tensor::zeros(1, 3));
        let g = t.backward(x).unwrap();
        assert_eq!(g.wrt(y).values(), &[0.0; 3]);
    }

    #[test]
    fn log_softmax_rows_normalize() {
        let mut t = Tape::new();
        let x = t.constant(Tensor::matrix(2, 3, vec![1., 2., 3., 0., 0., 0.]).unwrap());
        let y = t.log_softmax(x).unwrap();
        for r in 0..2 {
            let total: f64 = t.value(y).row_slice(r).iter().map(|v| v.exp()).sum();
            assert!((total - 1.0).abs() < 1e-12);
        }
    }
}
