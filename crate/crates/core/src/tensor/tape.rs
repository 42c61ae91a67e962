//! Reverse-mode gradient tape over matrix-valued nodes.
//!
//! A [`Tape`] is built fresh for every training step: leaves are pushed with
//! [`Tape::leaf`] (trainable) or [`Tape::constant`], every forward op appends
//! a node, and [`Tape::backward`] walks the nodes in reverse creation order.

use crate::error::{Error, Result};

use super::matrix::dot;
use super::{Matrix, SparseMatrix};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

enum Op<'a> {
    Leaf,
    MatMul(Var, Var),
    MatMulTranspose(Var, Var),
    SparseMatMul(&'a SparseMatrix, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Relu(Var),
    Sigmoid(Var),
    Softplus(Var),
    RowL2Norm(Var),
    RowSum(Var),
    GatherRows(Var, Vec<usize>),
    FrobeniusSq(Var),
    Sum(Var),
    Mean(Var),
}

struct Node<'a> {
    value: Matrix,
    op: Op<'a>,
    requires_grad: bool,
}

pub struct Tape<'a> {
    nodes: Vec<Node<'a>>,
}

impl Default for Tape<'_> {
    fn default() -> Self {
        Self::new()
    }
}

impl<'a> Tape<'a> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Trainable input; receives a gradient on [`Tape::backward`].
    pub fn leaf(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Input excluded from differentiation.
    pub fn constant(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Matrix, op: Op<'a>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn grad_flag(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul(self.value(b))?;
        let rg = self.grad_flag(&[a, b]);
        Ok(self.push(value, Op::MatMul(a, b), rg))
    }

    /// `a * b^T`.
    pub fn matmul_transpose(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul_transpose(self.value(b))?;
        let rg = self.grad_flag(&[a, b]);
        Ok(self.push(value, Op::MatMulTranspose(a, b), rg))
    }

    /// `s * x` for a fixed sparse operator `s`.
    pub fn sparse_matmul(&mut self, s: &'a SparseMatrix, x: Var) -> Result<Var> {
        let value = s.mul_dense(self.value(x))?;
        let rg = self.grad_flag(&[x]);
        Ok(self.push(value, Op::SparseMatMul(s, x), rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).zip_map(self.value(b), |x, y| x + y)?;
        let rg = self.grad_flag(&[a, b]);
        Ok(self.push(value, Op::Add(a, b), rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).zip_map(self.value(b), |x, y| x - y)?;
        let rg = self.grad_flag(&[a, b]);
        Ok(self.push(value, Op::Sub(a, b), rg))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).zip_map(self.value(b), |x, y| x * y)?;
        let rg = self.grad_flag(&[a, b]);
        Ok(self.push(value, Op::Mul(a, b), rg))
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Var {
        let value = self.value(a).map(|x| x * factor);
        let rg = self.grad_flag(&[a]);
        self.push(value, Op::Scale(a, factor), rg)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let value = self.value(a).map(|x| x.max(0.0));
        let rg = self.grad_flag(&[a]);
        self.push(value, Op::Relu(a), rg)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let value = self.value(a).map(sigmoid);
        let rg = self.grad_flag(&[a]);
        self.push(value, Op::Sigmoid(a), rg)
    }

    /// `ln(1 + e^x)`, evaluated without overflow.
    pub fn softplus(&mut self, a: Var) -> Var {
        let value = self.value(a).map(softplus);
        let rg = self.grad_flag(&[a]);
        self.push(value, Op::Softplus(a), rg)
    }

    /// Per-row Euclidean norm, `n x 1`.
    pub fn row_l2_norm(&mut self, a: Var) -> Var {
        let m = self.value(a);
        let data = (0..m.rows()).map(|r| dot(m.row(r), m.row(r)).sqrt()).collect();
        let value = Matrix::from_vec(m.rows(), 1, data).expect("one value per row");
        let rg = self.grad_flag(&[a]);
        self.push(value, Op::RowL2Norm(a), rg)
    }

    /// Per-row sum, `n x 1`.
    pub fn row_sum(&mut self, a: Var) -> Var {
        let m = self.value(a);
        let data = (0..m.rows()).map(|r| m.row(r).iter().sum()).collect();
        let value = Matrix::from_vec(m.rows(), 1, data).expect("one value per row");
        let rg = self.grad_flag(&[a]);
        self.push(value, Op::RowSum(a), rg)
    }

    /// Row `i` of the output is row `indices[i]` of `a`.
    pub fn gather_rows(&mut self, a: Var, indices: Vec<usize>) -> Result<Var> {
        let m = self.value(a);
        if let Some(&bad) = indices.iter().find(|&&i| i >= m.rows()) {
            return Err(Error::Shape(format!(
                "gather row {bad} from a {}-row matrix",
                m.rows()
            )));
        }
        let mut value = Matrix::zeros(indices.len(), m.cols());
        for (dst, &src) in indices.iter().enumerate() {
            value.row_mut(dst).copy_from_slice(m.row(src));
        }
        let rg = self.grad_flag(&[a]);
        Ok(self.push(value, Op::GatherRows(a, indices), rg))
    }

    /// Sum of squared entries, as a 1x1 node.
    pub fn frobenius_sq(&mut self, a: Var) -> Var {
        let m = self.value(a);
        let value = Matrix::scalar(dot(m.as_slice(), m.as_slice()));
        let rg = self.grad_flag(&[a]);
        self.push(value, Op::FrobeniusSq(a), rg)
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let value = Matrix::scalar(self.value(a).as_slice().iter().sum());
        let rg = self.grad_flag(&[a]);
        self.push(value, Op::Sum(a), rg)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let m = self.value(a);
        let value = Matrix::scalar(m.as_slice().iter().sum::<f64>() / m.len().max(1) as f64);
        let rg = self.grad_flag(&[a]);
        self.push(value, Op::Mean(a), rg)
    }

    /// Propagates `d loss / d node` to every node that requires a gradient.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let shape = self.value(loss).shape();
        if shape != (1, 1) {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got a {}x{} node",
                shape.0, shape.1
            )));
        }
        let mut grads: Vec<Option<Matrix>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Matrix::scalar(1.0));

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            match &node.op {
                Op::Leaf => {
                    grads[idx] = Some(g);
                    continue;
                }
                Op::MatMul(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    if self.nodes[a.0].requires_grad {
                        accumulate(&mut grads, *a, g.matmul_transpose(bv)?);
                    }
                    if self.nodes[b.0].requires_grad {
                        accumulate(&mut grads, *b, av.transpose_matmul(&g)?);
                    }
                }
                Op::MatMulTranspose(a, b) => {
                    // out = a b^T: da = g b, db = g^T a
                    let (av, bv) = (self.value(*a), self.value(*b));
                    if self.nodes[a.0].requires_grad {
                        accumulate(&mut grads, *a, g.matmul(bv)?);
                    }
                    if self.nodes[b.0].requires_grad {
                        accumulate(&mut grads, *b, g.transpose_matmul(av)?);
                    }
                }
                Op::SparseMatMul(s, x) => {
                    accumulate(&mut grads, *x, s.transpose_mul_dense(&g)?);
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads, *a, g.clone());
                    accumulate(&mut grads, *b, g);
                }
                Op::Sub(a, b) => {
                    accumulate(&mut grads, *b, g.map(|v| -v));
                    accumulate(&mut grads, *a, g);
                }
                Op::Mul(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    accumulate(&mut grads, *a, g.zip_map(bv, |x, y| x * y)?);
                    accumulate(&mut grads, *b, g.zip_map(av, |x, y| x * y)?);
                }
                Op::Scale(a, factor) => {
                    accumulate(&mut grads, *a, g.map(|v| v * factor));
                }
                Op::Relu(a) => {
                    let d = g.zip_map(self.value(*a), |gv, x| if x > 0.0 { gv } else { 0.0 })?;
                    accumulate(&mut grads, *a, d);
                }
                Op::Sigmoid(a) => {
                    let d = g.zip_map(&node.value, |gv, y| gv * y * (1.0 - y))?;
                    accumulate(&mut grads, *a, d);
                }
                Op::Softplus(a) => {
                    let d = g.zip_map(self.value(*a), |gv, x| gv * sigmoid(x))?;
                    accumulate(&mut grads, *a, d);
                }
                Op::RowL2Norm(a) => {
                    let x = self.value(*a);
                    let mut d = Matrix::zeros(x.rows(), x.cols());
                    for r in 0..x.rows() {
                        let norm = node.value.get(r, 0);
                        if norm > 0.0 {
                            let coef = g.get(r, 0) / norm;
                            for (o, &xv) in d.row_mut(r).iter_mut().zip(x.row(r)) {
                                *o = coef * xv;
                            }
                        }
                    }
                    accumulate(&mut grads, *a, d);
                }
                Op::RowSum(a) => {
                    let x = self.value(*a);
                    let mut d = Matrix::zeros(x.rows(), x.cols());
                    for r in 0..x.rows() {
                        d.row_mut(r).fill(g.get(r, 0));
                    }
                    accumulate(&mut grads, *a, d);
                }
                Op::GatherRows(a, indices) => {
                    let x = self.value(*a);
                    let mut d = Matrix::zeros(x.rows(), x.cols());
                    for (src, &dst) in indices.iter().enumerate() {
                        for (o, &gv) in d.row_mut(dst).iter_mut().zip(g.row(src)) {
                            *o += gv;
                        }
                    }
                    accumulate(&mut grads, *a, d);
                }
                Op::FrobeniusSq(a) => {
                    let scale = 2.0 * g.as_slice()[0];
                    accumulate(&mut grads, *a, self.value(*a).map(|x| scale * x));
                }
                Op::Sum(a) => {
                    let x = self.value(*a);
                    accumulate(&mut grads, *a, Matrix::filled(x.rows(), x.cols(), g.as_slice()[0]));
                }
                Op::Mean(a) => {
                    let x = self.value(*a);
                    let v = g.as_slice()[0] / x.len().max(1) as f64;
                    accumulate(&mut grads, *a, Matrix::filled(x.rows(), x.cols(), v));
                }
            }
        }

        // Interior gradients were consumed; what remains belongs to leaves.
        Ok(Gradients { grads })
    }
}

fn accumulate(grads: &mut [Option<Matrix>], v: Var, g: Matrix) {
    match &mut grads[v.0] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => *slot = Some(g),
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

pub(crate) fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Leaf gradients produced by [`Tape::backward`].
pub struct Gradients {
    grads: Vec<Option<Matrix>>,
}

impl Gradients {
    /// Gradient of a trainable leaf; `None` when the loss does not depend on it.
    pub fn get(&self, v: Var) -> Option<&Matrix> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, v: Var) -> Option<Matrix> {
        self.grads.get_mut(v.0).and_then(Option::take)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: &[Vec<f64>]) -> Matrix {
        Matrix::from_rows(rows).unwrap()
    }

    #[test]
    fn forward_values() {
        let mut t = Tape::new();
        let a = t.constant(m(&[vec![-1.0, 2.0]]));
        let r = t.relu(a);
        assert_eq!(t.value(r).as_slice(), &[0.0, 2.0]);

        let z = t.constant(Matrix::scalar(0.0));
        let s = t.sigmoid(z);
        assert_eq!(t.value(s).item(), Some(0.5));

        let b = t.constant(m(&[vec![1.0, 2.0], vec![3.0, 4.0]]));
        let f = t.frobenius_sq(b);
        assert_eq!(t.value(f).item(), Some(30.0));
    }

    #[test]
    fn square_gradient() {
        let mut t = Tape::new();
        let w = t.leaf(Matrix::scalar(3.0));
        let loss = t.frobenius_sq(w);
        let g = t.backward(loss).unwrap();
        assert_eq!(g.get(w).unwrap().item(), Some(6.0));
    }

    #[test]
    fn sigmoid_mean_gradient() {
        let mut t = Tape::new();
        let w = t.leaf(Matrix::scalar(0.0));
        let s = t.sigmoid(w);
        let loss = t.mean(s);
        let g = t.backward(loss).unwrap();
        assert_eq!(g.get(w).unwrap().item(), Some(0.25));
    }

    #[test]
    fn backward_rejects_non_scalar() {
        let mut t = Tape::new();
        let w = t.leaf(Matrix::zeros(2, 1));
        assert!(matches!(t.backward(w), Err(Error::Contract(_))));
    }

    #[test]
    fn shared_subexpression_accumulates() {
        // loss = sum(w * w) -> 2w
        let mut t = Tape::new();
        let w = t.leaf(m(&[vec![1.5, -2.0]]));
        let sq = t.mul(w, w).unwrap();
        let loss = t.sum(sq);
        let g = t.backward(loss).unwrap();
        assert_eq!(g.get(w).unwrap().as_slice(), &[3.0, -4.0]);
    }

    #[test]
    fn constants_get_no_gradient() {
        let mut t = Tape::new();
        let x = t.constant(m(&[vec![1.0, 2.0]]));
        let w = t.leaf(m(&[vec![0.5], vec![0.25]]));
        let y = t.matmul(x, w).unwrap();
        let loss = t.sum(y);
        let g = t.backward(loss).unwrap();
        assert!(g.get(x).is_none());
        assert_eq!(g.get(w).unwrap().as_slice(), &[1.0, 2.0]);
    }

    #[test]
    fn softplus_is_stable() {
        assert!((softplus(1000.0) - 1000.0).abs() < 1e-9);
        assert!(softplus(-1000.0) >= 0.0 && softplus(-1000.0) < 1e-300);
        assert!((softplus(0.0) - 2f64.ln()).abs() < 1e-15);
    }
}
