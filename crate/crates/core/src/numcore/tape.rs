use std::collections::BTreeMap;

use super::matrix::{check_temperature, softmax_in_place, Matrix};
use super::params::ParameterStore;
use crate::error::{MeraError, Result};

/// Handle to a node recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op {
    Constant,
    Param,
    MatMul(Var, Var),
    /// `a · bᵀ`
    MatMulT(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddBias(Var, Var),
    /// `a[r, c] * g[r, 0]`
    MulCol(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Relu(Var),
    Sigmoid(Var),
    Exp(Var),
    Ln(Var),
    Clamp(Var, f64, f64),
    SoftmaxRows(Var, f64),
    /// Softmax across `groups` column blocks, independently per in-block offset.
    GroupSoftmax(Var, usize),
    SliceCols(Var, usize),
    ConcatCols(Vec<Var>),
    MaxOthers(Var),
    RowSum(Var),
    Sum(Var),
}

#[derive(Debug, Clone)]
struct Node {
    value: Matrix,
    op: Op,
}

/// Ordered record of a forward pass.
///
/// Each primitive appends a node holding its value; [`Tape::gradients`]
/// walks the record backwards. The tape is never mutated by the reverse
/// sweep, so replaying it gives identical results.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    params: BTreeMap<String, Var>,
    relu_inputs: Vec<Var>,
}

/// Result of one reverse sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    per_node: Vec<Option<Matrix>>,
    per_param: BTreeMap<String, Matrix>,
}

impl Gradients {
    pub fn of(&self, v: Var) -> Option<&Matrix> {
        self.per_node.get(v.0).and_then(|g| g.as_ref())
    }

    pub fn param(&self, name: &str) -> Option<&Matrix> {
        self.per_param.get(name)
    }

    pub fn params(&self) -> impl Iterator<Item = (&str, &Matrix)> {
        self.per_param.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn write_into(&self, store: &mut ParameterStore) -> Result<()> {
        for (name, g) in &self.per_param {
            store.accumulate_grad(name, g)?;
        }
        Ok(())
    }
}

fn shape_err(what: &str, a: &Matrix, b: &Matrix) -> MeraError {
    MeraError::Dimension(format!(
        "{what}: {}x{} and {}x{}",
        a.rows(),
        a.cols(),
        b.rows(),
        b.cols()
    ))
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

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> Option<f64> {
        self.value(v).as_scalar()
    }

    fn push(&mut self, value: Matrix, op: Op) -> Result<Var> {
        if let Some(bad) = value.data().iter().find(|x| !x.is_finite()) {
            return Err(MeraError::Evaluation(format!(
                "non-finite value {bad} produced by {:?}",
                std::mem::discriminant(&op)
            )));
        }
        self.nodes.push(Node { value, op });
        Ok(Var(self.nodes.len() - 1))
    }

    pub fn constant(&mut self, value: Matrix) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Constant,
        });
        Var(self.nodes.len() - 1)
    }

    /// Leaf bound to a named parameter; repeated lookups share one node.
    pub fn param(&mut self, store: &ParameterStore, name: &str) -> Result<Var> {
        if let Some(&v) = self.params.get(name) {
            return Ok(v);
        }
        let value = store.value(name)?.clone();
        self.nodes.push(Node {
            value,
            op: Op::Param,
        });
        let v = Var(self.nodes.len() - 1);
        self.params.insert(name.to_string(), v);
        Ok(v)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul(self.value(b))?;
        self.push(value, Op::MatMul(a, b))
    }

    pub fn matmul_transposed(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul_transposed(self.value(b))?;
        self.push(value, Op::MatMulT(a, b))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let value = self.value(a).transpose();
        self.push(value, Op::Transpose(a))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).add(self.value(b))?;
        self.push(value, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).sub(self.value(b))?;
        self.push(value, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).hadamard(self.value(b))?;
        self.push(value, Op::Mul(a, b))
    }

    pub fn add_bias(&mut self, a: Var, bias: Var) -> Result<Var> {
        let value = self.value(a).add_row_broadcast(self.value(bias))?;
        self.push(value, Op::AddBias(a, bias))
    }

    /// Multiplies every row of `a` by the matching entry of column `g`.
    pub fn mul_col(&mut self, a: Var, g: Var) -> Result<Var> {
        let (av, gv) = (self.value(a), self.value(g));
        if gv.cols() != 1 || gv.rows() != av.rows() {
            return Err(shape_err("column broadcast", av, gv));
        }
        let mut out = av.clone();
        for r in 0..av.rows() {
            let k = gv.get(r, 0);
            for c in 0..av.cols() {
                out.set(r, c, av.get(r, c) * k);
            }
        }
        self.push(out, Op::MulCol(a, g))
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Result<Var> {
        let value = self.value(a).scale(k);
        self.push(value, Op::Scale(a, k))
    }

    pub fn add_scalar(&mut self, a: Var, k: f64) -> Result<Var> {
        let value = self.value(a).map(|v| v + k);
        self.push(value, Op::AddScalar(a))
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        self.relu_inputs.push(a);
        let value = self.value(a).map(|v| if v > 0.0 { v } else { 0.0 });
        self.push(value, Op::Relu(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        let value = self.value(a).map(super::matrix::sigmoid);
        self.push(value, Op::Sigmoid(a))
    }

    pub fn exp(&mut self, a: Var) -> Result<Var> {
        let value = self.value(a).map(f64::exp);
        self.push(value, Op::Exp(a))
    }

    pub fn ln(&mut self, a: Var) -> Result<Var> {
        if let Some(bad) = self.value(a).data().iter().find(|&&v| v <= 0.0) {
            return Err(MeraError::Evaluation(format!(
                "logarithm of non-positive value {bad}"
            )));
        }
        let value = self.value(a).map(f64::ln);
        self.push(value, Op::Ln(a))
    }

    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Result<Var> {
        let value = self.value(a).map(|v| v.clamp(lo, hi));
        self.push(value, Op::Clamp(a, lo, hi))
    }

    pub fn softmax_rows(&mut self, a: Var, temperature: f64) -> Result<Var> {
        let value = self.value(a).softmax_rows(temperature)?;
        self.push(value, Op::SoftmaxRows(a, temperature))
    }

    /// Splits each row into `groups` equal blocks and applies a softmax over
    /// the blocks independently at every in-block offset.
    pub fn group_softmax(&mut self, a: Var, groups: usize) -> Result<Var> {
        let av = self.value(a);
        if groups == 0 || !av.cols().is_multiple_of(groups) {
            return Err(MeraError::Dimension(format!(
                "{} columns cannot split into {groups} groups",
                av.cols()
            )));
        }
        let width = av.cols() / groups;
        let mut out = av.clone();
        let mut buf = vec![0.0; groups];
        for r in 0..av.rows() {
            for d in 0..width {
                for (e, b) in buf.iter_mut().enumerate() {
                    *b = av.get(r, e * width + d);
                }
                softmax_in_place(&mut buf, 1.0);
                for (e, b) in buf.iter().enumerate() {
                    out.set(r, e * width + d, *b);
                }
            }
        }
        self.push(out, Op::GroupSoftmax(a, groups))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let value = self.value(a).slice_cols(start, len)?;
        self.push(value, Op::SliceCols(a, start))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let mats: Vec<&Matrix> = parts.iter().map(|&v| self.value(v)).collect();
        let value = Matrix::concat_cols(&mats)?;
        self.push(value, Op::ConcatCols(parts.to_vec()))
    }

    /// For each entry, the maximum of the other entries in its row.
    pub fn max_others(&mut self, a: Var) -> Result<Var> {
        let av = self.value(a);
        if av.cols() < 2 {
            return Err(MeraError::Dimension(format!(
                "max over other columns needs at least 2 columns, got {}",
                av.cols()
            )));
        }
        let mut out = av.clone();
        for r in 0..av.rows() {
            let row = av.row(r);
            for c in 0..row.len() {
                let (_, m) = argmax_excluding(row, c);
                out.set(r, c, m);
            }
        }
        self.push(out, Op::MaxOthers(a))
    }

    pub fn row_sum(&mut self, a: Var) -> Result<Var> {
        let av = self.value(a);
        let sums: Vec<f64> = av.iter_rows().map(|r| r.iter().sum()).collect();
        let value = Matrix::from_raw(av.rows(), 1, sums);
        self.push(value, Op::RowSum(a))
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let value = Matrix::scalar(self.value(a).sum());
        self.push(value, Op::Sum(a))
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let n = self.value(a).len();
        if n == 0 {
            return Err(MeraError::EmptyInput("mean of an empty matrix".into()));
        }
        let s = self.sum(a)?;
        self.scale(s, 1.0 / n as f64)
    }

    /// Flattened ReLU pre-activations in recording order.
    pub fn relu_preactivations(&self) -> Vec<f64> {
        self.relu_inputs
            .iter()
            .flat_map(|&v| self.value(v).data().iter().copied())
            .collect()
    }

    /// Reverse accumulation from a scalar node.
    pub fn gradients(&self, loss: Var) -> Result<Gradients> {
        let lv = self.value(loss);
        if lv.shape() != (1, 1) {
            return Err(MeraError::Contract(format!(
                "backward needs a scalar loss, got {}x{}",
                lv.rows(),
                lv.cols()
            )));
        }
        let mut grads: Vec<Option<Matrix>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Matrix::scalar(1.0));

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            self.propagate(node, &g, &mut grads)?;
            grads[idx] = Some(g);
        }

        let mut per_param = BTreeMap::new();
        for (name, v) in &self.params {
            let g = match grads.get(v.0).and_then(|g| g.clone()) {
                Some(g) => g,
                None => {
                    let (r, c) = self.value(*v).shape();
                    Matrix::zeros(r, c)
                }
            };
            per_param.insert(name.clone(), g);
        }
        Ok(Gradients {
            per_node: grads,
            per_param,
        })
    }

    /// Reverse sweep that adds parameter gradients into `store`.
    pub fn backward(&self, loss: Var, store: &mut ParameterStore) -> Result<Gradients> {
        let grads = self.gradients(loss)?;
        grads.write_into(store)?;
        Ok(grads)
    }

    fn propagate(&self, node: &Node, g: &Matrix, grads: &mut [Option<Matrix>]) -> Result<()> {
        let val = |v: Var| &self.nodes[v.0].value;
        match &node.op {
            Op::Constant | Op::Param => {}
            Op::MatMul(a, b) => {
                let da = g.matmul_transposed(val(*b))?;
                let db = val(*a).transpose().matmul(g)?;
                acc(grads, *a, da);
                acc(grads, *b, db);
            }
            Op::MatMulT(a, b) => {
                let da = g.matmul(val(*b))?;
                let db = g.transpose().matmul(val(*a))?;
                acc(grads, *a, da);
                acc(grads, *b, db);
            }
            Op::Transpose(a) => acc(grads, *a, g.transpose()),
            Op::Add(a, b) => {
                acc(grads, *a, g.clone());
                acc(grads, *b, g.clone());
            }
            Op::Sub(a, b) => {
                acc(grads, *a, g.clone());
                acc(grads, *b, g.scale(-1.0));
            }
            Op::Mul(a, b) => {
                acc(grads, *a, g.hadamard(val(*b))?);
                acc(grads, *b, g.hadamard(val(*a))?);
            }
            Op::AddBias(a, bias) => {
                acc(grads, *a, g.clone());
                let ones = Matrix::filled(1, g.rows().max(1), 1.0);
                let db = if g.rows() == 0 {
                    Matrix::zeros(1, g.cols())
                } else {
                    ones.matmul(g)?
                };
                acc(grads, *bias, db);
            }
            Op::MulCol(a, col) => {
                let (av, cv) = (val(*a), val(*col));
                let mut da = g.clone();
                let mut dc = Matrix::zeros(cv.rows(), 1);
                for r in 0..av.rows() {
                    let k = cv.get(r, 0);
                    let mut s = 0.0;
                    for c in 0..av.cols() {
                        da.set(r, c, g.get(r, c) * k);
                        s += g.get(r, c) * av.get(r, c);
                    }
                    dc.set(r, 0, s);
                }
                acc(grads, *a, da);
                acc(grads, *col, dc);
            }
            Op::Scale(a, k) => acc(grads, *a, g.scale(*k)),
            Op::AddScalar(a) => acc(grads, *a, g.clone()),
            Op::Relu(a) => {
                // Subgradient at exactly zero is zero.
                let d = g.zip_map(val(*a), |gi, x| if x > 0.0 { gi } else { 0.0 });
                acc(grads, *a, d);
            }
            Op::Sigmoid(a) => {
                let d = g.zip_map(&node.value, |gi, s| gi * s * (1.0 - s));
                acc(grads, *a, d);
            }
            Op::Exp(a) => acc(grads, *a, g.hadamard(&node.value)?),
            Op::Ln(a) => acc(grads, *a, g.zip_map(val(*a), |gi, x| gi / x)),
            Op::Clamp(a, lo, hi) => {
                let d = g.zip_map(val(*a), |gi, x| if x >= *lo && x <= *hi { gi } else { 0.0 });
                acc(grads, *a, d);
            }
            Op::SoftmaxRows(a, t) => {
                check_temperature(*t)?;
                let y = &node.value;
                let mut d = g.clone();
                for r in 0..y.rows() {
                    let s: f64 = (0..y.cols()).map(|c| g.get(r, c) * y.get(r, c)).sum();
                    for c in 0..y.cols() {
                        d.set(r, c, y.get(r, c) * (g.get(r, c) - s) / t);
                    }
                }
                acc(grads, *a, d);
            }
            Op::GroupSoftmax(a, groups) => {
                let y = &node.value;
                let width = y.cols() / groups;
                let mut d = g.clone();
                for r in 0..y.rows() {
                    for off in 0..width {
                        let s: f64 = (0..*groups)
                            .map(|e| g.get(r, e * width + off) * y.get(r, e * width + off))
                            .sum();
                        for e in 0..*groups {
                            let c = e * width + off;
                            d.set(r, c, y.get(r, c) * (g.get(r, c) - s));
                        }
                    }
                }
                acc(grads, *a, d);
            }
            Op::SliceCols(a, start) => {
                let av = val(*a);
                let mut d = Matrix::zeros(av.rows(), av.cols());
                for r in 0..g.rows() {
                    for c in 0..g.cols() {
                        d.set(r, start + c, g.get(r, c));
                    }
                }
                acc(grads, *a, d);
            }
            Op::ConcatCols(parts) => {
                let mut offset = 0;
                for p in parts {
                    let w = val(*p).cols();
                    acc(grads, *p, g.slice_cols(offset, w)?);
                    offset += w;
                }
            }
            Op::MaxOthers(a) => {
                let av = val(*a);
                let mut d = Matrix::zeros(av.rows(), av.cols());
                for r in 0..av.rows() {
                    let row = av.row(r);
                    for c in 0..row.len() {
                        let (arg, _) = argmax_excluding(row, c);
                        d.set(r, arg, d.get(r, arg) + g.get(r, c));
                    }
                }
                acc(grads, *a, d);
            }
            Op::RowSum(a) => {
                let av = val(*a);
                let mut d = Matrix::zeros(av.rows(), av.cols());
                for r in 0..av.rows() {
                    for c in 0..av.cols() {
                        d.set(r, c, g.get(r, 0));
                    }
                }
                acc(grads, *a, d);
            }
            Op::Sum(a) => {
                let (r, c) = val(*a).shape();
                acc(grads, *a, Matrix::filled(r, c, g.get(0, 0)));
            }
        }
        Ok(())
    }
}

/// Index and value of the row maximum over all columns except `skip`;
/// ties resolve to the lowest index.
fn argmax_excluding(row: &[f64], skip: usize) -> (usize, f64) {
    let mut best = (usize::MAX, f64::NEG_INFINITY);
    for (i, &v) in row.iter().enumerate() {
        if i != skip && (best.0 == usize::MAX || v > best.1) {
            best = (i, v);
        }
    }
    best
}

fn acc(grads: &mut [Option<Matrix>], v: Var, d: Matrix) {
    match &mut grads[v.0] {
        Some(existing) => {
            for (e, x) in existing.data_mut().iter_mut().zip(d.data()) {
                *e += x;
            }
        }
        slot @ None => *slot = Some(d),
    }
}
