//! Reverse-mode differentiation over matrix-valued nodes.
//!
//! Every operation is evaluated eagerly and appended to a [`Tape`]. The
//! backward sweep in [`Tape::grad`] expresses each vector-Jacobian product
//! with the same tape operations, so the gradients it returns are ordinary
//! recorded nodes. Differentiating a gradient (for example the parameter
//! gradient of an input-gradient norm) is just a second call to `grad`.
//!
//! Every backward rule is written with ops that have backward rules of their
//! own. Piecewise-linear units record their derivative as a constant mask,
//! whose own derivative is zero almost everywhere.

use std::cell::RefCell;
use std::ops::{Add, Mul, Neg, Sub};
use std::sync::Arc;

use super::Matrix;
use crate::error::{Error, Result};

type Id = usize;

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    MatMul { a: Id, b: Id, ta: bool, tb: bool },
    Add(Id, Id),
    Sub(Id, Id),
    Mul(Id, Id),
    /// Elementwise division with `x / 0 = 0`.
    Div(Id, Id),
    Scale(Id, f64),
    Offset(Id, f64),
    AddRowBias(Id, Id),
    ColSum(Id),
    RowSum(Id),
    SumAll(Id),
    BroadcastRows(Id, usize),
    BroadcastCols(Id, usize),
    BroadcastScalar(Id, usize, usize),
    LeakyRelu(Id, f64),
    Abs(Id),
    Sqrt(Id),
    MulConst(Id, Arc<Matrix>),
    ConcatCols(Id, Id),
    SliceCols(Id, usize, usize),
    PadCols(Id, usize, usize),
}

impl Op {
    fn inputs(&self) -> [Option<Id>; 2] {
        use Op::*;
        match *self {
            Leaf => [None, None],
            MatMul { a, b, .. } | Add(a, b) | Sub(a, b) | Mul(a, b) | Div(a, b) => {
                [Some(a), Some(b)]
            }
            AddRowBias(a, b) | ConcatCols(a, b) => [Some(a), Some(b)],
            Scale(a, _)
            | Offset(a, _)
            | ColSum(a)
            | RowSum(a)
            | SumAll(a)
            | BroadcastRows(a, _)
            | BroadcastCols(a, _)
            | BroadcastScalar(a, _, _)
            | LeakyRelu(a, _)
            | Abs(a)
            | Sqrt(a)
            | MulConst(a, _)
            | SliceCols(a, _, _)
            | PadCols(a, _, _) => [Some(a), None],
        }
    }
}

fn safe_div(a: f64, b: f64) -> f64 {
    if b == 0.0 {
        0.0
    } else {
        a / b
    }
}

fn leaky(v: f64, slope: f64) -> f64 {
    if v > 0.0 {
        v
    } else {
        slope * v
    }
}

/// Evaluates one op from its operand values.
fn compute<'a>(op: &Op, val: impl Fn(Id) -> &'a Matrix) -> Matrix {
    use Op::*;
    match op {
        Leaf => unreachable!("leaves carry their own value"),
        &MatMul { a, b, ta, tb } => Matrix::matmul_t(val(a), ta, val(b), tb),
        &Add(a, b) => val(a).zip_map(val(b), |x, y| x + y),
        &Sub(a, b) => val(a).zip_map(val(b), |x, y| x - y),
        &Mul(a, b) => val(a).zip_map(val(b), |x, y| x * y),
        &Div(a, b) => val(a).zip_map(val(b), safe_div),
        &Scale(a, f) => val(a).map(|x| x * f),
        &Offset(a, f) => val(a).map(|x| x + f),
        &AddRowBias(a, b) => {
            let (x, bias) = (val(a), val(b));
            let mut out = x.clone();
            for r in 0..out.rows() {
                for (o, bv) in out.row_mut(r).iter_mut().zip(bias.as_slice()) {
                    *o += bv;
                }
            }
            out
        }
        &ColSum(a) => val(a).col_sum(),
        &RowSum(a) => val(a).row_sum(),
        &SumAll(a) => Matrix::scalar(val(a).sum()),
        &BroadcastRows(a, n) => val(a).broadcast_rows(n),
        &BroadcastCols(a, n) => val(a).broadcast_cols(n),
        &BroadcastScalar(a, r, c) => Matrix::filled(r, c, val(a).item()),
        &LeakyRelu(a, s) => val(a).map(|x| leaky(x, s)),
        &Abs(a) => val(a).map(f64::abs),
        &Sqrt(a) => val(a).map(f64::sqrt),
        MulConst(a, m) => val(*a).zip_map(m, |x, y| x * y),
        &ConcatCols(a, b) => val(a)
            .concat_cols(val(b))
            .expect("concat shapes validated at record time"),
        &SliceCols(a, s, e) => val(a).slice_cols(s, e),
        &PadCols(a, s, t) => val(a).pad_cols(s, t),
    }
}

struct Node {
    op: Op,
    value: Arc<Matrix>,
}

/// Append-only record of evaluated operations.
#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
}

/// Handle to a node recorded on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    id: Id,
}

impl std::fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let (r, c) = self.shape();
        write!(f, "Var#{}({r}x{c})", self.id)
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Records an input or parameter.
    pub fn leaf(&self, value: Matrix) -> Var<'_> {
        self.push(Op::Leaf, value)
    }

    fn push(&self, op: Op, value: Matrix) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            op,
            value: Arc::new(value),
        });
        Var {
            tape: self,
            id: nodes.len() - 1,
        }
    }

    fn record(&self, op: Op) -> Var<'_> {
        let value = {
            let nodes = self.nodes.borrow();
            compute(&op, |i| &nodes[i].value)
        };
        self.push(op, value)
    }

    fn value(&self, id: Id) -> Arc<Matrix> {
        Arc::clone(&self.nodes.borrow()[id].value)
    }

    fn shape_of(&self, id: Id) -> (usize, usize) {
        self.nodes.borrow()[id].value.shape()
    }

    fn owns(&self, v: &Var<'_>) -> bool {
        std::ptr::eq(self, v.tape) && v.id < self.len()
    }

    /// Gradients of the sum of `output`'s entries with respect to each of `wrt`.
    ///
    /// The returned gradients are recorded nodes, so they can be fed back
    /// into further computation and differentiated again. Nodes that do not
    /// influence `output` get a zero gradient.
    pub fn grad<'t>(&'t self, output: Var<'t>, wrt: &[Var<'t>]) -> Result<Vec<Var<'t>>> {
        if !self.owns(&output) || wrt.iter().any(|w| !self.owns(w)) {
            return Err(Error::UnrecordedLeaf);
        }
        let Some(lowest) = wrt.iter().map(|w| w.id).min() else {
            return Ok(Vec::new());
        };
        let top = output.id;

        // needs[i]: node `lowest + i` depends on some requested node
        let mut needs = vec![false; top.saturating_sub(lowest) + 1];
        for w in wrt {
            if w.id <= top {
                needs[w.id - lowest] = true;
            }
        }
        {
            let nodes = self.nodes.borrow();
            for id in lowest..=top {
                if needs[id - lowest] {
                    continue;
                }
                needs[id - lowest] = nodes[id]
                    .op
                    .inputs()
                    .iter()
                    .flatten()
                    .any(|&src| src >= lowest && needs[src - lowest]);
            }
        }
        let needed = |src: Id| src >= lowest && needs[src - lowest];

        let mut adjoint: Vec<Option<Var<'t>>> = vec![None; top - lowest + 1];
        if needed(top) {
            let (r, c) = output.shape();
            adjoint[top - lowest] = Some(self.leaf(Matrix::filled(r, c, 1.0)));
        }
        for id in (lowest..=top).rev() {
            let Some(g) = adjoint[id - lowest] else {
                continue;
            };
            let op = self.nodes.borrow()[id].op.clone();
            for (src, contrib) in self.vjp(id, &op, g, &needed) {
                let slot = &mut adjoint[src - lowest];
                *slot = Some(match *slot {
                    Some(prev) => prev + contrib,
                    None => contrib,
                });
            }
        }

        Ok(wrt
            .iter()
            .map(|w| {
                let slot = if w.id <= top { adjoint[w.id - lowest] } else { None };
                slot.unwrap_or_else(|| {
                    let (r, c) = w.shape();
                    self.leaf(Matrix::zeros(r, c))
                })
            })
            .collect())
    }

    /// Gradient values of `output` with respect to `wrt`, detached from the tape.
    pub fn gradients<'t>(&'t self, output: Var<'t>, wrt: &[Var<'t>]) -> Result<Vec<Matrix>> {
        Ok(self
            .grad(output, wrt)?
            .into_iter()
            .map(|g| g.value().as_ref().clone())
            .collect())
    }

    /// Gradient of a per-row network output with respect to its input rows.
    ///
    /// Rows of a batched network are independent, so the gradient of the sum
    /// of the outputs holds each row's own input gradient. The result stays
    /// on the tape for further differentiation.
    pub fn input_gradient<'t>(&'t self, output: Var<'t>, input: Var<'t>) -> Result<Var<'t>> {
        Ok(self.grad(output, &[input])?.remove(0))
    }

    /// Re-evaluates every recorded op from the leaf values.
    pub fn replay(&self) -> Vec<Matrix> {
        let nodes = self.nodes.borrow();
        let mut values: Vec<Matrix> = Vec::with_capacity(nodes.len());
        for node in nodes.iter() {
            let v = match node.op {
                Op::Leaf => node.value.as_ref().clone(),
                ref op => compute(op, |i| &values[i]),
            };
            values.push(v);
        }
        values
    }

    /// Recorded values in node order.
    pub fn recorded_values(&self) -> Vec<Matrix> {
        self.nodes
            .borrow()
            .iter()
            .map(|n| n.value.as_ref().clone())
            .collect()
    }

    fn vjp<'t>(
        &'t self,
        id: Id,
        op: &Op,
        g: Var<'t>,
        needed: &dyn Fn(Id) -> bool,
    ) -> Vec<(Id, Var<'t>)> {
        use Op::*;
        let var = |i: Id| Var { tape: self, id: i };
        let mut out = Vec::with_capacity(2);
        let mut emit = |src: Id, f: &dyn Fn() -> Var<'t>| {
            if needed(src) {
                out.push((src, f()));
            }
        };
        match *op {
            Leaf => {}
            MatMul { a, b, ta, tb } => {
                // C = op(A) op(B)
                emit(a, &|| {
                    if ta {
                        var(b).matmul_t(tb, g, true)
                    } else {
                        g.matmul_t(false, var(b), !tb)
                    }
                });
                emit(b, &|| {
                    if tb {
                        g.matmul_t(true, var(a), ta)
                    } else {
                        var(a).matmul_t(!ta, g, false)
                    }
                });
            }
            Add(a, b) => {
                emit(a, &|| g);
                emit(b, &|| g);
            }
            Sub(a, b) => {
                emit(a, &|| g);
                emit(b, &|| -g);
            }
            Mul(a, b) => {
                emit(a, &|| g * var(b));
                emit(b, &|| g * var(a));
            }
            Div(a, b) => {
                emit(a, &|| g.div(var(b)));
                // d(a/b)/db = -(a/b)/b
                emit(b, &|| -(g.div(var(b)) * var(id)));
            }
            Scale(a, f) => emit(a, &|| g.scale(f)),
            Offset(a, _) => emit(a, &|| g),
            AddRowBias(a, b) => {
                emit(a, &|| g);
                emit(b, &|| g.col_sum());
            }
            ColSum(a) => emit(a, &|| g.broadcast_rows(self.shape_of(a).0)),
            RowSum(a) => emit(a, &|| g.broadcast_cols(self.shape_of(a).1)),
            SumAll(a) => emit(a, &|| {
                let (r, c) = self.shape_of(a);
                g.broadcast_scalar(r, c)
            }),
            BroadcastRows(a, _) => emit(a, &|| g.col_sum()),
            BroadcastCols(a, _) => emit(a, &|| g.row_sum()),
            BroadcastScalar(a, _, _) => emit(a, &|| g.sum()),
            LeakyRelu(a, s) => emit(a, &|| {
                let mask = self.value(a).map(|x| if x > 0.0 { 1.0 } else { s });
                g.mul_const(Arc::new(mask))
            }),
            Abs(a) => emit(a, &|| {
                let sign = self.value(a).map(|x| {
                    if x > 0.0 {
                        1.0
                    } else if x < 0.0 {
                        -1.0
                    } else {
                        0.0
                    }
                });
                g.mul_const(Arc::new(sign))
            }),
            Sqrt(a) => emit(a, &|| g.div(var(id).scale(2.0))),
            MulConst(a, ref m) => emit(a, &|| g.mul_const(Arc::clone(m))),
            ConcatCols(a, b) => {
                let ca = self.shape_of(a).1;
                let cb = self.shape_of(b).1;
                emit(a, &|| g.slice_cols(0, ca));
                emit(b, &|| g.slice_cols(ca, ca + cb));
            }
            SliceCols(a, s, _) => emit(a, &|| g.pad_cols(s, self.shape_of(a).1)),
            PadCols(a, s, _) => emit(a, &|| {
                let width = self.shape_of(a).1;
                g.slice_cols(s, s + width)
            }),
        }
        out
    }
}

impl<'t> Var<'t> {
    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    pub fn value(&self) -> Arc<Matrix> {
        self.tape.value(self.id)
    }

    pub fn shape(&self) -> (usize, usize) {
        self.tape.shape_of(self.id)
    }

    /// The scalar held by a 1x1 node.
    pub fn item(&self) -> f64 {
        self.value().item()
    }

    fn same_tape(&self, other: &Var<'t>) {
        assert!(
            std::ptr::eq(self.tape, other.tape),
            "operands recorded on different tapes"
        );
    }

    fn binary(self, other: Var<'t>, op: Op, name: &str) -> Var<'t> {
        self.same_tape(&other);
        assert_eq!(
            self.shape(),
            other.shape(),
            "{name}: operand shapes disagree"
        );
        self.tape.record(op)
    }

    pub fn matmul(self, other: Var<'t>) -> Var<'t> {
        self.matmul_t(false, other, false)
    }

    /// `op(self) · op(other)` where `op` optionally transposes.
    pub fn matmul_t(self, trans_self: bool, other: Var<'t>, trans_other: bool) -> Var<'t> {
        self.same_tape(&other);
        let (_, k_a) = flip(self.shape(), trans_self);
        let (k_b, _) = flip(other.shape(), trans_other);
        assert_eq!(k_a, k_b, "matmul: inner dimensions disagree");
        self.tape.record(Op::MatMul {
            a: self.id,
            b: other.id,
            ta: trans_self,
            tb: trans_other,
        })
    }

    /// Elementwise division; entries divided by zero become zero.
    pub fn div(self, other: Var<'t>) -> Var<'t> {
        self.binary(other, Op::Div(self.id, other.id), "div")
    }

    pub fn scale(self, factor: f64) -> Var<'t> {
        self.tape.record(Op::Scale(self.id, factor))
    }

    pub fn offset(self, shift: f64) -> Var<'t> {
        self.tape.record(Op::Offset(self.id, shift))
    }

    /// Adds a `1 x cols` bias to every row.
    pub fn add_row_bias(self, bias: Var<'t>) -> Var<'t> {
        self.same_tape(&bias);
        assert_eq!(bias.shape(), (1, self.shape().1), "bias width mismatch");
        self.tape.record(Op::AddRowBias(self.id, bias.id))
    }

    pub fn col_sum(self) -> Var<'t> {
        self.tape.record(Op::ColSum(self.id))
    }

    pub fn row_sum(self) -> Var<'t> {
        self.tape.record(Op::RowSum(self.id))
    }

    pub fn sum(self) -> Var<'t> {
        self.tape.record(Op::SumAll(self.id))
    }

    /// Mean over all entries, as a 1x1 node.
    pub fn mean(self) -> Var<'t> {
        let (r, c) = self.shape();
        self.sum().scale(1.0 / (r * c) as f64)
    }

    pub fn broadcast_rows(self, rows: usize) -> Var<'t> {
        assert_eq!(self.shape().0, 1, "broadcast_rows needs a row vector");
        self.tape.record(Op::BroadcastRows(self.id, rows))
    }

    pub fn broadcast_cols(self, cols: usize) -> Var<'t> {
        assert_eq!(self.shape().1, 1, "broadcast_cols needs a column vector");
        self.tape.record(Op::BroadcastCols(self.id, cols))
    }

    pub fn broadcast_scalar(self, rows: usize, cols: usize) -> Var<'t> {
        assert_eq!(self.shape(), (1, 1), "broadcast_scalar needs a 1x1 node");
        self.tape.record(Op::BroadcastScalar(self.id, rows, cols))
    }

    pub fn leaky_relu(self, slope: f64) -> Var<'t> {
        self.tape.record(Op::LeakyRelu(self.id, slope))
    }

    pub fn relu(self) -> Var<'t> {
        self.leaky_relu(0.0)
    }

    pub fn abs(self) -> Var<'t> {
        self.tape.record(Op::Abs(self.id))
    }

    pub fn sqrt(self) -> Var<'t> {
        self.tape.record(Op::Sqrt(self.id))
    }

    pub fn square(self) -> Var<'t> {
        self * self
    }

    /// Elementwise product with an unrecorded constant.
    pub fn mul_const(self, mask: Arc<Matrix>) -> Var<'t> {
        assert_eq!(self.shape(), mask.shape(), "mul_const shape mismatch");
        self.tape.record(Op::MulConst(self.id, mask))
    }

    pub fn concat_cols(self, other: Var<'t>) -> Var<'t> {
        self.same_tape(&other);
        assert_eq!(self.shape().0, other.shape().0, "concat_cols row mismatch");
        self.tape.record(Op::ConcatCols(self.id, other.id))
    }

    pub fn slice_cols(self, start: usize, end: usize) -> Var<'t> {
        assert!(start <= end && end <= self.shape().1, "slice out of range");
        self.tape.record(Op::SliceCols(self.id, start, end))
    }

    pub fn pad_cols(self, start: usize, total: usize) -> Var<'t> {
        assert!(start + self.shape().1 <= total, "pad too narrow");
        self.tape.record(Op::PadCols(self.id, start, total))
    }

    /// Per-row Euclidean norm as a `rows x 1` node.
    pub fn row_norms(self) -> Var<'t> {
        self.square().row_sum().sqrt()
    }

    /// A fresh leaf holding this node's value; gradients do not flow through it.
    pub fn detach(self) -> Var<'t> {
        self.tape.leaf(self.value().as_ref().clone())
    }
}

fn flip((r, c): (usize, usize), t: bool) -> (usize, usize) {
    if t {
        (c, r)
    } else {
        (r, c)
    }
}

impl<'t> Add for Var<'t> {
    type Output = Var<'t>;

    fn add(self, rhs: Var<'t>) -> Var<'t> {
        self.binary(rhs, Op::Add(self.id, rhs.id), "add")
    }
}

impl<'t> Sub for Var<'t> {
    type Output = Var<'t>;

    fn sub(self, rhs: Var<'t>) -> Var<'t> {
        self.binary(rhs, Op::Sub(self.id, rhs.id), "sub")
    }
}

impl<'t> Mul for Var<'t> {
    type Output = Var<'t>;

    fn mul(self, rhs: Var<'t>) -> Var<'t> {
        self.binary(rhs, Op::Mul(self.id, rhs.id), "mul")
    }
}

impl<'t> Neg for Var<'t> {
    type Output = Var<'t>;

    fn neg(self) -> Var<'t> {
        self.scale(-1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ndcore::rng::{sample_gaussian, SeededRng};

    fn random(rows: usize, cols: usize, seed: u64) -> Matrix {
        sample_gaussian(rows, cols, &mut SeededRng::new(seed)).unwrap()
    }

    fn max_rel_err(a: &Matrix, b: &Matrix) -> f64 {
        let diff = a.zip_map(b, |x, y| x - y).frobenius_norm();
        diff / a.frobenius_norm().max(b.frobenius_norm()).max(1e-12)
    }

    /// Central differences of `f` at `x`.
    fn finite_diff(x: &Matrix, f: &dyn Fn(&Matrix) -> f64) -> Matrix {
        let h = 1e-5;
        let mut g = Matrix::zeros(x.rows(), x.cols());
        for i in 0..x.len() {
            let mut up = x.clone();
            up.as_mut_slice()[i] += h;
            let mut down = x.clone();
            down.as_mut_slice()[i] -= h;
            g.as_mut_slice()[i] = (f(&up) - f(&down)) / (2.0 * h);
        }
        g
    }

    #[test]
    fn sum_of_squares_gradient_is_twice_the_leaf() {
        let tape = Tape::new();
        let v = tape.leaf(random(3, 2, 1));
        let s = v.square().sum();
        let g = tape.gradients(s, &[v]).unwrap().remove(0);
        assert_eq!(g, v.value().map(|x| 2.0 * x));
    }

    #[test]
    fn independent_leaf_gets_zero_gradient() {
        let tape = Tape::new();
        let u = tape.leaf(random(2, 2, 2));
        let v = tape.leaf(random(2, 2, 3));
        let s = v.square().sum();
        let g = tape.gradients(s, &[u]).unwrap().remove(0);
        assert_eq!(g, Matrix::zeros(2, 2));
    }

    #[test]
    fn foreign_leaf_is_rejected() {
        let a = Tape::new();
        let b = Tape::new();
        let x = a.leaf(Matrix::scalar(1.0));
        let y = b.leaf(Matrix::scalar(2.0));
        let s = y.square().sum();
        assert!(matches!(b.grad(s, &[x]), Err(Error::UnrecordedLeaf)));
    }

    /// Two-layer critic used by the second-order checks: w2ᵀ leaky(W1ᵀ x + b1) + b2.
    fn critic<'t>(x: Var<'t>, p: &[Var<'t>]) -> Var<'t> {
        x.matmul(p[0])
            .add_row_bias(p[1])
            .leaky_relu(0.2)
            .matmul(p[2])
            .add_row_bias(p[3])
    }

    fn critic_params(seed: u64) -> Vec<Matrix> {
        vec![
            random(5, 7, seed),
            random(1, 7, seed + 1),
            random(7, 1, seed + 2),
            random(1, 1, seed + 3),
        ]
    }

    fn penalty(params: &[Matrix], x: &Matrix) -> f64 {
        let tape = Tape::new();
        let p: Vec<_> = params.iter().map(|m| tape.leaf(m.clone())).collect();
        let xv = tape.leaf(x.clone());
        let out = critic(xv, &p);
        let gx = tape.input_gradient(out, xv).unwrap();
        gx.row_norms().offset(-1.0).square().mean().item()
    }

    #[test]
    fn input_gradient_matches_finite_differences() {
        let params = critic_params(10);
        let x = random(4, 5, 20);
        let tape = Tape::new();
        let p: Vec<_> = params.iter().map(|m| tape.leaf(m.clone())).collect();
        let xv = tape.leaf(x.clone());
        let gx = tape.input_gradient(critic(xv, &p), xv).unwrap();

        let fd = finite_diff(&x, &|xx| {
            let t = Tape::new();
            let p: Vec<_> = params.iter().map(|m| t.leaf(m.clone())).collect();
            critic(t.leaf(xx.clone()), &p).sum().item()
        });
        assert!(max_rel_err(&gx.value(), &fd) < 1e-4);
    }

    #[test]
    fn penalty_parameter_gradients_match_finite_differences() {
        let params = critic_params(30);
        let x = random(4, 5, 40);
        let tape = Tape::new();
        let p: Vec<_> = params.iter().map(|m| tape.leaf(m.clone())).collect();
        let xv = tape.leaf(x.clone());
        let gx = tape.input_gradient(critic(xv, &p), xv).unwrap();
        let gp = gx.row_norms().offset(-1.0).square().mean();
        let analytic = tape.gradients(gp, &p).unwrap();

        for (i, g) in analytic.iter().enumerate() {
            let fd = finite_diff(&params[i], &|m| {
                let mut ps = params.clone();
                ps[i] = m.clone();
                penalty(&ps, &x)
            });
            let err = max_rel_err(g, &fd);
            if fd.frobenius_norm() == 0.0 {
                // the output bias never reaches an input gradient
                assert_eq!(g.frobenius_norm(), 0.0);
            } else {
                assert!(err < 1e-4, "param {i}: rel err {err}");
            }
        }
    }

    #[test]
    fn constant_and_unit_linear_penalties() {
        let tape = Tape::new();
        let x = tape.leaf(random(3, 4, 5));
        let w = tape.leaf(Matrix::zeros(4, 1));
        let out = x.matmul(w).offset(2.5);
        let gp = tape
            .input_gradient(out, x)
            .unwrap()
            .row_norms()
            .offset(-1.0)
            .square()
            .mean();
        assert_eq!(gp.item(), 1.0);

        let tape = Tape::new();
        let x = tape.leaf(random(3, 4, 6));
        let w = tape.leaf(Matrix::from_vec(4, 1, vec![0.6, 0.0, 0.8, 0.0]).unwrap());
        let out = x.matmul(w);
        let gx = tape.input_gradient(out, x).unwrap();
        let norms = gx.row_norms().value();
        assert!(norms.as_slice().iter().all(|&n| (n - 1.0).abs() < 1e-15));
    }

    #[test]
    fn replay_is_bit_identical() {
        let params = critic_params(50);
        let tape = Tape::new();
        let p: Vec<_> = params.iter().map(|m| tape.leaf(m.clone())).collect();
        let xv = tape.leaf(random(4, 5, 60));
        let a = tape.leaf(random(4, 2, 61));
        let joined = xv.concat_cols(a).slice_cols(0, 5);
        let gx = tape.input_gradient(critic(joined, &p), xv).unwrap();
        let gp = gx.row_norms().offset(-1.0).square().mean();
        tape.grad(gp, &p).unwrap();
        assert_eq!(tape.replay(), tape.recorded_values());
    }

    #[test]
    fn division_by_zero_is_zero() {
        let tape = Tape::new();
        let a = tape.leaf(Matrix::from_vec(1, 2, vec![1.0, 2.0]).unwrap());
        let b = tape.leaf(Matrix::from_vec(1, 2, vec![0.0, 4.0]).unwrap());
        assert_eq!(a.div(b).value().as_slice(), &[0.0, 0.5]);
    }
}
