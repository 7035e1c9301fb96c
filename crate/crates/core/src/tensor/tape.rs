//! Reverse-mode differentiation over matrix-valued operations.
//!
//! Every operation appended to a [`Tape`] is stored as a [`VjpRecord`]:
//! the op identifier plus shared handles to its forward inputs. Replaying
//! a record reproduces the forward value bit-for-bit, and [`vjp`] maps an
//! output cotangent to one cotangent per input.

use std::sync::Arc;

use super::ops::{self, Binary, GridShape, Unary};
use super::Matrix;
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Op {
    MatMul,
    Transpose,
    Binary(Binary),
    Unary(Unary),
    /// Max over rows, `N × C → 1 × C`.
    PoolOverPositions,
    /// Max over columns, `N × C → N × 1`.
    PoolOverChannels,
    SumAll,
    Resample {
        from: GridShape,
        to: GridShape,
    },
    SpaceToDepth {
        grid: GridShape,
    },
    /// `(A + I)·x` for the 4-neighbour grid adjacency `A`.
    GridPropagate {
        grid: GridShape,
    },
}

impl Op {
    pub fn name(&self) -> &'static str {
        match self {
            Op::MatMul => "matmul",
            Op::Transpose => "transpose",
            Op::Binary(b) => b.name(),
            Op::Unary(u) => u.name(),
            Op::PoolOverPositions => "pool_over_positions",
            Op::PoolOverChannels => "pool_over_channels",
            Op::SumAll => "sum",
            Op::Resample { .. } => "bilinear_resample",
            Op::SpaceToDepth { .. } => "space_to_depth",
            Op::GridPropagate { .. } => "grid_propagate",
        }
    }

    fn arity(&self) -> usize {
        match self {
            Op::MatMul | Op::Binary(_) => 2,
            _ => 1,
        }
    }
}

/// An operation together with the forward inputs its backward pass needs.
#[derive(Clone, Debug)]
pub struct VjpRecord {
    pub op: Op,
    pub inputs: Vec<Arc<Matrix>>,
    pub output_shape: (usize, usize),
}

impl VjpRecord {
    /// Runs the forward computation and captures the record.
    pub fn capture(op: Op, inputs: Vec<Arc<Matrix>>) -> Result<(Self, Matrix)> {
        if inputs.len() != op.arity() {
            return Err(Error::Invalid(format!(
                "{} expects {} inputs, got {}",
                op.name(),
                op.arity(),
                inputs.len()
            )));
        }
        let out = forward(&op, &inputs)?;
        let record = VjpRecord {
            op,
            inputs,
            output_shape: out.shape(),
        };
        Ok((record, out))
    }

    /// Recomputes the forward value from the saved inputs.
    pub fn replay(&self) -> Result<Matrix> {
        forward(&self.op, &self.inputs)
    }
}

fn forward(op: &Op, inputs: &[Arc<Matrix>]) -> Result<Matrix> {
    let a = &inputs[0];
    match op {
        Op::MatMul => ops::matmul(a, &inputs[1]),
        Op::Transpose => Ok(a.transpose()),
        Op::Binary(kind) => ops::binary(*kind, a, &inputs[1]),
        Op::Unary(kind) => ops::unary(*kind, a),
        Op::PoolOverPositions => ops::pool_over_positions(a),
        Op::PoolOverChannels => ops::pool_over_channels(a),
        Op::SumAll => Ok(Matrix::scalar(a.sum())),
        Op::Resample { from, to } => ops::bilinear_resample(a, *from, *to),
        Op::SpaceToDepth { grid } => ops::space_to_depth(a, *grid),
        Op::GridPropagate { grid } => ops::grid_propagate(a, *grid),
    }
}

/// Vector-Jacobian product: returns `∂⟨cotangent, output⟩ / ∂input` for
/// each input of `record`, in input order.
pub fn vjp(record: &VjpRecord, cotangent: &Matrix) -> Result<Vec<Matrix>> {
    if cotangent.shape() != record.output_shape {
        return Err(Error::shape("vjp", record.output_shape, cotangent.shape()));
    }
    let g = cotangent;
    let a = &record.inputs[0];
    let grads = match &record.op {
        Op::MatMul => {
            let b = &record.inputs[1];
            vec![
                ops::matmul(g, &b.transpose())?,
                ops::matmul(&a.transpose(), g)?,
            ]
        }
        Op::Transpose => vec![g.transpose()],
        Op::Binary(kind) => {
            let b = &record.inputs[1];
            match kind {
                Binary::Add => vec![ops::reduce_to(g, a.shape()), ops::reduce_to(g, b.shape())],
                Binary::Sub => vec![
                    ops::reduce_to(g, a.shape()),
                    ops::reduce_to(&g.map(|v| -v), b.shape()),
                ],
                Binary::Hadamard => vec![
                    ops::reduce_to(&ops::binary(Binary::Hadamard, g, b)?, a.shape()),
                    ops::reduce_to(&ops::binary(Binary::Hadamard, g, a)?, b.shape()),
                ],
            }
        }
        Op::Unary(kind) => {
            let d = a.zip_map(g, |x, gv| {
                gv * match *kind {
                    Unary::Relu => {
                        if x > 0.0 {
                            1.0
                        } else {
                            0.0
                        }
                    }
                    Unary::Sigmoid => {
                        let s = ops::sigmoid(x);
                        s * (1.0 - s)
                    }
                    Unary::Tanh => {
                        let t = x.tanh();
                        1.0 - t * t
                    }
                    Unary::Sqrt => 0.5 / x.sqrt(),
                    Unary::RecipSqrt => -0.5 / (x * x.sqrt()),
                    Unary::Recip => -1.0 / (x * x),
                    Unary::Scale(k) => k,
                    Unary::Shift(_) => 1.0,
                    Unary::ClampMin(lo) => {
                        if x < lo {
                            0.0
                        } else {
                            1.0
                        }
                    }
                }
            })?;
            vec![d]
        }
        Op::PoolOverPositions => {
            let idx = ops::argmax_over_rows(a)?;
            let mut d = Matrix::zeros(a.rows(), a.cols());
            for (c, &r) in idx.iter().enumerate() {
                d.set(r, c, g.get(0, c));
            }
            vec![d]
        }
        Op::PoolOverChannels => {
            let idx = ops::argmax_over_cols(a)?;
            let mut d = Matrix::zeros(a.rows(), a.cols());
            for (r, &c) in idx.iter().enumerate() {
                d.set(r, c, g.get(r, 0));
            }
            vec![d]
        }
        Op::SumAll => vec![Matrix::filled(a.rows(), a.cols(), g.get(0, 0))],
        Op::Resample { from, to } => vec![ops::bilinear_resample_transpose(g, *from, *to)?],
        Op::SpaceToDepth { grid } => vec![ops::depth_to_space(g, *grid)?],
        Op::GridPropagate { grid } => vec![ops::grid_propagate(g, *grid)?],
    };
    Ok(grads)
}

struct Node {
    value: Arc<Matrix>,
    record: Option<VjpRecord>,
    parents: Vec<usize>,
    requires_grad: bool,
    label: Option<String>,
}

/// Append-only record of a forward computation.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
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

    fn push_leaf(&mut self, value: Matrix, requires_grad: bool, label: Option<String>) -> Var {
        self.nodes.push(Node {
            value: Arc::new(value),
            record: None,
            parents: Vec::new(),
            requires_grad,
            label,
        });
        Var(self.nodes.len() - 1)
    }

    /// A differentiable input.
    pub fn leaf(&mut self, value: Matrix) -> Var {
        self.push_leaf(value, true, None)
    }

    pub fn named_leaf(&mut self, name: impl Into<String>, value: Matrix) -> Var {
        self.push_leaf(value, true, Some(name.into()))
    }

    /// An input that never receives a gradient.
    pub fn constant(&mut self, value: Matrix) -> Var {
        self.push_leaf(value, false, None)
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.shape()
    }

    pub fn record(&self, v: Var) -> Option<&VjpRecord> {
        self.nodes[v.0].record.as_ref()
    }

    /// Attaches a human-readable name used in diagnostics.
    pub fn label(&mut self, v: Var, name: impl Into<String>) -> Var {
        self.nodes[v.0].label = Some(name.into());
        v
    }

    pub fn apply(&mut self, op: Op, inputs: &[Var]) -> Result<Var> {
        let values = inputs
            .iter()
            .map(|v| Arc::clone(&self.nodes[v.0].value))
            .collect();
        let (record, out) = VjpRecord::capture(op, values)?;
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node {
            value: Arc::new(out),
            record: Some(record),
            parents: inputs.iter().map(|v| v.0).collect(),
            requires_grad,
            label: None,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.apply(Op::MatMul, &[a, b])
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        self.apply(Op::Transpose, &[a])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.apply(Op::Binary(Binary::Add), &[a, b])
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.apply(Op::Binary(Binary::Sub), &[a, b])
    }

    /// Hadamard product with broadcasting.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.apply(Op::Binary(Binary::Hadamard), &[a, b])
    }

    pub fn unary(&mut self, kind: Unary, a: Var) -> Result<Var> {
        self.apply(Op::Unary(kind), &[a])
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        self.unary(Unary::Relu, a)
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        self.unary(Unary::Sigmoid, a)
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        self.unary(Unary::Tanh, a)
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Result<Var> {
        self.unary(Unary::Scale(k), a)
    }

    pub fn shift(&mut self, a: Var, k: f64) -> Result<Var> {
        self.unary(Unary::Shift(k), a)
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        self.apply(Op::SumAll, &[a])
    }

    /// `x · w + bias`, the 1×1 convolution.
    pub fn linear_map(&mut self, x: Var, w: Var, bias: Var) -> Result<Var> {
        if self.shape(bias) != (1, self.shape(w).1) {
            return Err(Error::shape(
                "linear_map",
                (1, self.shape(w).1),
                self.shape(bias),
            ));
        }
        let xw = self.matmul(x, w)?;
        self.add(xw, bias)
    }

    pub fn pool_over_positions(&mut self, x: Var) -> Result<Var> {
        self.apply(Op::PoolOverPositions, &[x])
    }

    pub fn pool_over_channels(&mut self, x: Var) -> Result<Var> {
        self.apply(Op::PoolOverChannels, &[x])
    }

    pub fn resample(&mut self, x: Var, from: GridShape, to: GridShape) -> Result<Var> {
        self.apply(Op::Resample { from, to }, &[x])
    }

    pub fn space_to_depth(&mut self, x: Var, grid: GridShape) -> Result<Var> {
        self.apply(Op::SpaceToDepth { grid }, &[x])
    }

    pub fn grid_propagate(&mut self, x: Var, grid: GridShape) -> Result<Var> {
        self.apply(Op::GridPropagate { grid }, &[x])
    }

    /// Describes the first recorded value containing NaN or ±∞.
    pub fn first_non_finite(&self) -> Option<String> {
        self.nodes.iter().enumerate().find_map(|(i, n)| {
            if n.value.is_finite() {
                return None;
            }
            let op = n.record.as_ref().map_or("input", |r| r.op.name());
            Some(match &n.label {
                Some(l) => format!("{l} (node {i}, {op})"),
                None => format!("node {i} ({op})"),
            })
        })
    }

    /// Gradients of a scalar (`1 × 1`) output.
    pub fn backward(&self, output: Var) -> Result<Gradients> {
        if self.shape(output) != (1, 1) {
            return Err(Error::shape("backward", (1, 1), self.shape(output)));
        }
        self.backward_with(output, Matrix::scalar(1.0))
    }

    /// Propagates `cotangent` from `output` to every differentiable node.
    pub fn backward_with(&self, output: Var, cotangent: Matrix) -> Result<Gradients> {
        if cotangent.shape() != self.shape(output) {
            return Err(Error::shape(
                "backward",
                self.shape(output),
                cotangent.shape(),
            ));
        }
        let mut grads: Vec<Option<Matrix>> = vec![None; output.0 + 1];
        grads[output.0] = Some(cotangent);
        for i in (0..=output.0).rev() {
            let node = &self.nodes[i];
            let Some(record) = node.record.as_ref() else {
                continue;
            };
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[i].take() else {
                continue;
            };
            let parent_grads = vjp(record, &g)?;
            for (&p, pg) in node.parents.iter().zip(parent_grads) {
                if !self.nodes[p].requires_grad {
                    continue;
                }
                match &mut grads[p] {
                    Some(acc) => acc.add_assign(&pg),
                    slot @ None => *slot = Some(pg),
                }
            }
        }
        Ok(Gradients { grads })
    }
}

/// Gradients indexed by [`Var`]. Interior nodes are consumed during the
/// sweep; leaves keep theirs.
pub struct Gradients {
    grads: Vec<Option<Matrix>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Matrix> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    /// Gradient of `v`, or zeros of the given shape when `v` did not
    /// influence the output.
    pub fn get_or_zeros(&self, v: Var, shape: (usize, usize)) -> Matrix {
        self.get(v)
            .cloned()
            .unwrap_or_else(|| Matrix::zeros(shape.0, shape.1))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Matrix {
        Matrix::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0))
    }

    /// Central-difference check of `vjp` for a single-output op.
    fn check_op(op: Op, inputs: Vec<Matrix>, rng: &mut ChaCha8Rng) {
        let arcs: Vec<_> = inputs.iter().cloned().map(Arc::new).collect();
        let (record, out) = VjpRecord::capture(op.clone(), arcs).unwrap();
        let cot = random(rng, out.rows(), out.cols());
        let grads = vjp(&record, &cot).unwrap();
        let h = 1e-5;
        for (k, input) in inputs.iter().enumerate() {
            for idx in 0..input.len() {
                let eval = |delta: f64| {
                    let mut perturbed = inputs.clone();
                    perturbed[k].data_mut()[idx] += delta;
                    let arcs = perturbed.into_iter().map(Arc::new).collect();
                    let (_, o) = VjpRecord::capture(op.clone(), arcs).unwrap();
                    o.data()
                        .iter()
                        .zip(cot.data())
                        .map(|(a, b)| a * b)
                        .sum::<f64>()
                };
                let fd = (eval(h) - eval(-h)) / (2.0 * h);
                let an = grads[k].data()[idx];
                let rel = (fd - an).abs() / fd.abs().max(an.abs()).max(1e-8);
                assert!(rel < 1e-4, "{op:?} input {k}[{idx}]: fd {fd} vs vjp {an}");
            }
        }
    }

    #[test]
    fn every_op_matches_finite_differences() {
        let g = GridShape::new(3, 4);
        for seed in 0..20u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let pos = |rng: &mut ChaCha8Rng, r, c| {
                Matrix::from_fn(r, c, |_, _| rng.random_range(0.2..1.0))
            };
            let cases: Vec<(Op, Vec<Matrix>)> = vec![
                (
                    Op::MatMul,
                    vec![random(&mut rng, 3, 4), random(&mut rng, 4, 2)],
                ),
                (Op::Transpose, vec![random(&mut rng, 3, 2)]),
                (
                    Op::Binary(Binary::Add),
                    vec![random(&mut rng, 3, 2), random(&mut rng, 1, 2)],
                ),
                (
                    Op::Binary(Binary::Sub),
                    vec![random(&mut rng, 3, 2), random(&mut rng, 3, 1)],
                ),
                (
                    Op::Binary(Binary::Hadamard),
                    vec![random(&mut rng, 3, 2), random(&mut rng, 3, 1)],
                ),
                (
                    Op::Binary(Binary::Hadamard),
                    vec![random(&mut rng, 1, 1), random(&mut rng, 2, 3)],
                ),
                (Op::Unary(Unary::Sigmoid), vec![random(&mut rng, 2, 3)]),
                (Op::Unary(Unary::Tanh), vec![random(&mut rng, 2, 3)]),
                (Op::Unary(Unary::Sqrt), vec![pos(&mut rng, 2, 3)]),
                (Op::Unary(Unary::RecipSqrt), vec![pos(&mut rng, 2, 3)]),
                (Op::Unary(Unary::Recip), vec![pos(&mut rng, 2, 3)]),
                (Op::Unary(Unary::Scale(-1.7)), vec![random(&mut rng, 2, 3)]),
                (Op::Unary(Unary::Shift(0.3)), vec![random(&mut rng, 2, 3)]),
                (Op::PoolOverPositions, vec![random(&mut rng, 5, 3)]),
                (Op::PoolOverChannels, vec![random(&mut rng, 5, 3)]),
                (Op::SumAll, vec![random(&mut rng, 2, 3)]),
                (
                    Op::Resample {
                        from: g,
                        to: GridShape::new(5, 2),
                    },
                    vec![random(&mut rng, 12, 2)],
                ),
                (
                    Op::SpaceToDepth {
                        grid: GridShape::new(2, 4),
                    },
                    vec![random(&mut rng, 8, 2)],
                ),
                (Op::GridPropagate { grid: g }, vec![random(&mut rng, 12, 2)]),
            ];
            for (op, inputs) in cases {
                check_op(op, inputs, &mut rng);
            }
            // relu and clamp away from their kinks
            let away = Matrix::from_fn(2, 3, |_, _| {
                let v: f64 = rng.random_range(0.1..1.0);
                if rng.random_bool(0.5) {
                    v
                } else {
                    -v
                }
            });
            check_op(Op::Unary(Unary::Relu), vec![away.clone()], &mut rng);
            check_op(Op::Unary(Unary::ClampMin(0.0)), vec![away], &mut rng);
        }
    }

    #[test]
    fn matmul_vjp_three_by_three() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        check_op(
            Op::MatMul,
            vec![random(&mut rng, 3, 3), random(&mut rng, 3, 3)],
            &mut rng,
        );
    }

    #[test]
    fn identity_linear_map_passes_cotangent_through() {
        let mut t = Tape::new();
        let x = t.leaf(Matrix::from_rows(&[[1.0, 2.0], [3.0, 4.0]]));
        let w = t.constant(Matrix::identity(2));
        let b = t.constant(Matrix::zeros(1, 2));
        let y = t.linear_map(x, w, b).unwrap();
        let g = Matrix::from_rows(&[[0.5, -1.0], [2.0, 0.25]]);
        let grads = t.backward_with(y, g.clone()).unwrap();
        assert_eq!(grads.get(x).unwrap(), &g);
        assert!(grads.get(w).is_none());
    }

    #[test]
    fn relu_gate() {
        let x = Arc::new(Matrix::from_rows(&[[-1.0, 2.0]]));
        let (rec, _) = VjpRecord::capture(Op::Unary(Unary::Relu), vec![x]).unwrap();
        let g = vjp(&rec, &Matrix::from_rows(&[[1.0, 1.0]])).unwrap();
        assert_eq!(g[0], Matrix::from_rows(&[[0.0, 1.0]]));
    }

    #[test]
    fn max_pool_routes_to_first_tie() {
        let x = Arc::new(Matrix::from_rows(&[[2.0, 1.0], [2.0, 3.0]]));
        let (rec, _) = VjpRecord::capture(Op::PoolOverPositions, vec![x]).unwrap();
        let g = vjp(&rec, &Matrix::row(vec![1.0, 1.0])).unwrap();
        assert_eq!(g[0], Matrix::from_rows(&[[1.0, 0.0], [0.0, 1.0]]));
    }

    #[test]
    fn vjp_rejects_bad_cotangent_shape() {
        let x = Arc::new(Matrix::zeros(2, 2));
        let (rec, _) = VjpRecord::capture(Op::Transpose, vec![x]).unwrap();
        assert!(vjp(&rec, &Matrix::zeros(3, 2)).is_err());
    }

    #[test]
    fn replay_is_bit_identical() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut t = Tape::new();
        let a = t.leaf(random(&mut rng, 4, 3));
        let b = t.leaf(random(&mut rng, 3, 2));
        let c = t.matmul(a, b).unwrap();
        let d = t.sigmoid(c).unwrap();
        let e = t.pool_over_channels(d).unwrap();
        for v in [c, d, e] {
            assert_eq!(&t.record(v).unwrap().replay().unwrap(), t.value(v));
        }
    }

    #[test]
    fn shared_inputs_accumulate() {
        let mut t = Tape::new();
        let x = t.leaf(Matrix::row(vec![3.0]));
        let y = t.mul(x, x).unwrap();
        let s = t.sum(y).unwrap();
        let g = t.backward(s).unwrap();
        assert_eq!(g.get(x).unwrap().get(0, 0), 6.0);
    }

    #[test]
    fn non_finite_diagnostic_names_the_tensor() {
        let mut t = Tape::new();
        let x = t.named_leaf("weights", Matrix::row(vec![f64::NAN]));
        let _ = t.scale(x, 2.0).unwrap();
        assert!(t.first_non_finite().unwrap().starts_with("weights"));
    }
}
