//! Pure forward kernels. Every function here allocates its result and
//! leaves its inputs untouched.

use serde::{Deserialize, Serialize};

use super::Matrix;
use crate::error::{Error, Result};

/// Height and width of a spatial grid stored as an `N × C` matrix.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GridShape {
    pub height: usize,
    pub width: usize,
}

impl GridShape {
    pub const fn new(height: usize, width: usize) -> Self {
        Self { height, width }
    }

    pub const fn square(side: usize) -> Self {
        Self::new(side, side)
    }

    pub const fn len(&self) -> usize {
        self.height * self.width
    }

    pub const fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn halved(&self) -> Self {
        Self::new(self.height / 2, self.width / 2)
    }
}

/// Matrix product with a fixed i-k-j summation order.
pub fn matmul(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.cols() != b.rows() {
        return Err(Error::shape("matmul", a.shape(), b.shape()));
    }
    let (m, k, n) = (a.rows(), a.cols(), b.cols());
    let mut out = vec![0.0; m * n];
    let (ad, bd) = (a.data(), b.data());
    for i in 0..m {
        let orow = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let aip = ad[i * k + p];
            let brow = &bd[p * n..(p + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += aip * bv;
            }
        }
    }
    Matrix::new(m, n, out)
}

/// Entrywise maps.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Unary {
    Relu,
    Sigmoid,
    Tanh,
    Sqrt,
    RecipSqrt,
    Recip,
    Scale(f64),
    Shift(f64),
    ClampMin(f64),
}

impl Unary {
    pub fn name(&self) -> &'static str {
        match self {
            Unary::Relu => "relu",
            Unary::Sigmoid => "sigmoid",
            Unary::Tanh => "tanh",
            Unary::Sqrt => "sqrt",
            Unary::RecipSqrt => "recip_sqrt",
            Unary::Recip => "recip",
            Unary::Scale(_) => "scale",
            Unary::Shift(_) => "shift",
            Unary::ClampMin(_) => "clamp_min",
        }
    }

    #[inline]
    pub(crate) fn eval(&self, x: f64) -> f64 {
        match *self {
            Unary::Relu => {
                if x > 0.0 {
                    x
                } else {
                    0.0
                }
            }
            Unary::Sigmoid => sigmoid(x),
            Unary::Tanh => x.tanh(),
            Unary::Sqrt => x.sqrt(),
            Unary::RecipSqrt => 1.0 / x.sqrt(),
            Unary::Recip => 1.0 / x,
            Unary::Scale(k) => k * x,
            Unary::Shift(k) => x + k,
            Unary::ClampMin(lo) => {
                if x < lo {
                    lo
                } else {
                    x
                }
            }
        }
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn unary(kind: Unary, x: &Matrix) -> Result<Matrix> {
    let op = kind.name();
    match kind {
        Unary::RecipSqrt => {
            if let Some(v) = x.data().iter().find(|&&v| v.is_nan() || v <= 0.0) {
                return Err(Error::Domain {
                    op,
                    detail: format!("requires strictly positive input, got {v}"),
                });
            }
        }
        Unary::Sqrt => {
            if let Some(v) = x.data().iter().find(|&&v| v.is_nan() || v < 0.0) {
                return Err(Error::Domain {
                    op,
                    detail: format!("requires non-negative input, got {v}"),
                });
            }
        }
        Unary::Recip if x.data().contains(&0.0) => {
            return Err(Error::Domain {
                op,
                detail: "division by zero".into(),
            });
        }
        _ => {}
    }
    Ok(x.map(|v| kind.eval(v)))
}

/// Binary entrywise operations with 2-D broadcasting: along each axis the
/// extents must agree or one of them must be 1.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Binary {
    Add,
    Sub,
    Hadamard,
}

impl Binary {
    pub fn name(&self) -> &'static str {
        match self {
            Binary::Add => "add",
            Binary::Sub => "sub",
            Binary::Hadamard => "hadamard",
        }
    }

    #[inline]
    fn eval(&self, a: f64, b: f64) -> f64 {
        match self {
            Binary::Add => a + b,
            Binary::Sub => a - b,
            Binary::Hadamard => a * b,
        }
    }
}

pub fn broadcast_shape(
    op: &'static str,
    a: (usize, usize),
    b: (usize, usize),
) -> Result<(usize, usize)> {
    let axis = |x: usize, y: usize| {
        if x == y || y == 1 {
            Some(x)
        } else if x == 1 {
            Some(y)
        } else {
            None
        }
    };
    match (axis(a.0, b.0), axis(a.1, b.1)) {
        (Some(r), Some(c)) => Ok((r, c)),
        _ => Err(Error::shape(op, a, b)),
    }
}

pub fn binary(kind: Binary, a: &Matrix, b: &Matrix) -> Result<Matrix> {
    let (rows, cols) = broadcast_shape(kind.name(), a.shape(), b.shape())?;
    if a.shape() == b.shape() {
        return a.zip_map(b, |x, y| kind.eval(x, y));
    }
    let (ar, ac) = (a.rows() > 1, a.cols() > 1);
    let (br, bc) = (b.rows() > 1, b.cols() > 1);
    Ok(Matrix::from_fn(rows, cols, |i, j| {
        let x = a.get(if ar { i } else { 0 }, if ac { j } else { 0 });
        let y = b.get(if br { i } else { 0 }, if bc { j } else { 0 });
        kind.eval(x, y)
    }))
}

/// Sums `g` down to `shape`, undoing a broadcast.
pub fn reduce_to(g: &Matrix, shape: (usize, usize)) -> Matrix {
    if g.shape() == shape {
        return g.clone();
    }
    let mut out = Matrix::zeros(shape.0, shape.1);
    for i in 0..g.rows() {
        let oi = if shape.0 == 1 { 0 } else { i };
        for j in 0..g.cols() {
            let oj = if shape.1 == 1 { 0 } else { j };
            let v = out.get(oi, oj) + g.get(i, j);
            out.set(oi, oj, v);
        }
    }
    out
}

/// Per-position linear map (a 1×1 convolution): `x · w + bias`.
pub fn linear_map(x: &Matrix, w: &Matrix, bias: &Matrix) -> Result<Matrix> {
    if bias.shape() != (1, w.cols()) {
        return Err(Error::shape("linear_map", (1, w.cols()), bias.shape()));
    }
    binary(Binary::Add, &matmul(x, w)?, bias)
}

/// Index of the first maximal row for every column.
pub fn argmax_over_rows(x: &Matrix) -> Result<Vec<usize>> {
    if x.rows() == 0 || x.cols() == 0 {
        return Err(Error::Empty {
            op: "pool_over_positions",
        });
    }
    let mut idx = vec![0usize; x.cols()];
    for c in 0..x.cols() {
        let mut best = x.get(0, c);
        for r in 1..x.rows() {
            let v = x.get(r, c);
            if v > best {
                best = v;
                idx[c] = r;
            }
        }
    }
    Ok(idx)
}

/// Index of the first maximal column for every row.
pub fn argmax_over_cols(x: &Matrix) -> Result<Vec<usize>> {
    if x.rows() == 0 || x.cols() == 0 {
        return Err(Error::Empty {
            op: "pool_over_channels",
        });
    }
    Ok((0..x.rows())
        .map(|r| {
            let row = x.row_slice(r);
            let mut best = 0;
            for (c, &v) in row.iter().enumerate().skip(1) {
                if v > row[best] {
                    best = c;
                }
            }
            best
        })
        .collect())
}

/// Channel-wise max over all positions: `N × C → 1 × C`.
pub fn pool_over_positions(x: &Matrix) -> Result<Matrix> {
    let idx = argmax_over_rows(x)?;
    Ok(Matrix::row(
        idx.iter().enumerate().map(|(c, &r)| x.get(r, c)).collect(),
    ))
}

/// Position-wise max over channels: `N × C → N × 1`.
pub fn pool_over_channels(x: &Matrix) -> Result<Matrix> {
    let idx = argmax_over_cols(x)?;
    Ok(Matrix::column(
        idx.iter().enumerate().map(|(r, &c)| x.get(r, c)).collect(),
    ))
}

/// Source sample positions along one axis for half-pixel-centred
/// bilinear interpolation: `(lower index, upper index, upper weight)`.
fn axis_taps(src: usize, dst: usize) -> Vec<(usize, usize, f64)> {
    let scale = src as f64 / dst as f64;
    (0..dst)
        .map(|d| {
            let pos = ((d as f64 + 0.5) * scale - 0.5).max(0.0);
            let lo = (pos.floor() as usize).min(src - 1);
            let hi = (lo + 1).min(src - 1);
            let frac = if hi == lo { 0.0 } else { pos - lo as f64 };
            (lo, hi, frac)
        })
        .collect()
}

fn check_resample(x: &Matrix, from: GridShape, to: GridShape) -> Result<()> {
    if from.is_empty() || to.is_empty() {
        return Err(Error::Invalid(format!(
            "bilinear_resample: zero-sized grid {from:?} -> {to:?}"
        )));
    }
    if x.rows() != from.len() {
        return Err(Error::shape(
            "bilinear_resample",
            x.shape(),
            (from.len(), x.cols()),
        ));
    }
    Ok(())
}

/// Bilinear interpolation with half-pixel centres (no corner alignment).
/// Each output is `top + fy·(bottom − top)` with `top`/`bottom` formed the
/// same way along x, so constant inputs are reproduced exactly.
pub fn bilinear_resample(x: &Matrix, from: GridShape, to: GridShape) -> Result<Matrix> {
    check_resample(x, from, to)?;
    if from == to {
        return Ok(x.clone());
    }
    let ys = axis_taps(from.height, to.height);
    let xs = axis_taps(from.width, to.width);
    let c = x.cols();
    let mut out = Matrix::zeros(to.len(), c);
    for (oy, &(y0, y1, fy)) in ys.iter().enumerate() {
        for (ox, &(x0, x1, fx)) in xs.iter().enumerate() {
            let o = oy * to.width + ox;
            for ch in 0..c {
                let a = x.get(y0 * from.width + x0, ch);
                let b = x.get(y0 * from.width + x1, ch);
                let cc = x.get(y1 * from.width + x0, ch);
                let d = x.get(y1 * from.width + x1, ch);
                let top = a + fx * (b - a);
                let bottom = cc + fx * (d - cc);
                out.set(o, ch, top + fy * (bottom - top));
            }
        }
    }
    Ok(out)
}

/// Transpose of [`bilinear_resample`]: scatters a cotangent on the target
/// grid back onto the source grid.
pub fn bilinear_resample_transpose(g: &Matrix, from: GridShape, to: GridShape) -> Result<Matrix> {
    if g.rows() != to.len() {
        return Err(Error::shape(
            "bilinear_resample_vjp",
            g.shape(),
            (to.len(), g.cols()),
        ));
    }
    if from == to {
        return Ok(g.clone());
    }
    let ys = axis_taps(from.height, to.height);
    let xs = axis_taps(from.width, to.width);
    let c = g.cols();
    let mut out = Matrix::zeros(from.len(), c);
    for (oy, &(y0, y1, fy)) in ys.iter().enumerate() {
        for (ox, &(x0, x1, fx)) in xs.iter().enumerate() {
            let o = oy * to.width + ox;
            let taps = [
                (y0 * from.width + x0, (1.0 - fy) * (1.0 - fx)),
                (y0 * from.width + x1, (1.0 - fy) * fx),
                (y1 * from.width + x0, fy * (1.0 - fx)),
                (y1 * from.width + x1, fy * fx),
            ];
            for ch in 0..c {
                let gv = g.get(o, ch);
                for &(src, w) in &taps {
                    let v = out.get(src, ch) + w * gv;
                    out.set(src, ch, v);
                }
            }
        }
    }
    Ok(out)
}

/// Gathers each 2×2 patch into one row: `H×W×C → (H/2)×(W/2)×4C`.
/// Column `k·C + c` holds channel `c` of patch offset `k = 2·dy + dx`.
pub fn space_to_depth(x: &Matrix, grid: GridShape) -> Result<Matrix> {
    if x.rows() != grid.len() || !grid.height.is_multiple_of(2) || !grid.width.is_multiple_of(2) {
        return Err(Error::shape(
            "space_to_depth",
            x.shape(),
            (grid.height, grid.width),
        ));
    }
    let c = x.cols();
    let out_grid = grid.halved();
    let mut out = Matrix::zeros(out_grid.len(), 4 * c);
    for oy in 0..out_grid.height {
        for ox in 0..out_grid.width {
            let o = oy * out_grid.width + ox;
            for k in 0..4 {
                let src = (2 * oy + k / 2) * grid.width + 2 * ox + k % 2;
                for ch in 0..c {
                    out.set(o, k * c + ch, x.get(src, ch));
                }
            }
        }
    }
    Ok(out)
}

/// Inverse of [`space_to_depth`]; `grid` is the fine (input) grid.
pub fn depth_to_space(x: &Matrix, grid: GridShape) -> Result<Matrix> {
    let out_grid = grid.halved();
    if x.rows() != out_grid.len() || !x.cols().is_multiple_of(4) {
        return Err(Error::shape(
            "depth_to_space",
            x.shape(),
            (out_grid.len(), x.cols()),
        ));
    }
    let c = x.cols() / 4;
    let mut out = Matrix::zeros(grid.len(), c);
    for oy in 0..out_grid.height {
        for ox in 0..out_grid.width {
            let o = oy * out_grid.width + ox;
            for k in 0..4 {
                let dst = (2 * oy + k / 2) * grid.width + 2 * ox + k % 2;
                for ch in 0..c {
                    out.set(dst, ch, x.get(o, k * c + ch));
                }
            }
        }
    }
    Ok(out)
}

/// Max over non-overlapping `factor × factor` blocks.
pub fn block_max_pool(x: &Matrix, grid: GridShape, factor: usize) -> Result<Matrix> {
    if factor == 0
        || x.rows() != grid.len()
        || !grid.height.is_multiple_of(factor)
        || !grid.width.is_multiple_of(factor)
    {
        return Err(Error::shape(
            "block_max_pool",
            x.shape(),
            (grid.height, grid.width),
        ));
    }
    let out_grid = GridShape::new(grid.height / factor, grid.width / factor);
    let mut out = Matrix::filled(out_grid.len(), x.cols(), f64::NEG_INFINITY);
    for y in 0..grid.height {
        for xx in 0..grid.width {
            let o = (y / factor) * out_grid.width + xx / factor;
            for ch in 0..x.cols() {
                let v = x.get(y * grid.width + xx, ch);
                if v > out.get(o, ch) {
                    out.set(o, ch, v);
                }
            }
        }
    }
    Ok(out)
}

/// Number of in-frame 4-neighbours of every position, plus one for the
/// self loop: the row sums of `A + I` for the grid adjacency `A`.
pub fn grid_degree(grid: GridShape) -> Vec<f64> {
    let mut d = Vec::with_capacity(grid.len());
    for y in 0..grid.height {
        for x in 0..grid.width {
            let n = usize::from(y > 0)
                + usize::from(y + 1 < grid.height)
                + usize::from(x > 0)
                + usize::from(x + 1 < grid.width);
            d.push((n + 1) as f64);
        }
    }
    d
}

/// `(A + I)·x` where `A` links each grid position to its 4-neighbours.
pub fn grid_propagate(x: &Matrix, grid: GridShape) -> Result<Matrix> {
    if x.rows() != grid.len() {
        return Err(Error::shape(
            "grid_propagate",
            x.shape(),
            (grid.len(), x.cols()),
        ));
    }
    let (h, w, c) = (grid.height, grid.width, x.cols());
    let mut out = x.clone();
    for y in 0..h {
        for xx in 0..w {
            let p = y * w + xx;
            let add = |q: usize, out: &mut Matrix| {
                for ch in 0..c {
                    let v = out.get(p, ch) + x.get(q, ch);
                    out.set(p, ch, v);
                }
            };
            if y > 0 {
                add(p - w, &mut out);
            }
            if y + 1 < h {
                add(p + w, &mut out);
            }
            if xx > 0 {
                add(p - 1, &mut out);
            }
            if xx + 1 < w {
                add(p + 1, &mut out);
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_examples() {
        let a = Matrix::from_rows(&[[1.0, 2.0], [3.0, 4.0]]);
        assert_eq!(matmul(&Matrix::identity(2), &a).unwrap(), a);
        let z = matmul(&Matrix::from_rows(&[[1.0, 2.0]]), &Matrix::zeros(2, 1)).unwrap();
        assert_eq!(z, Matrix::zeros(1, 1));
        let v = matmul(&a, &Matrix::column(vec![5.0, 6.0])).unwrap();
        assert_eq!(v, Matrix::column(vec![17.0, 39.0]));
    }

    #[test]
    fn matmul_shape_error_names_both_shapes() {
        let err = matmul(&Matrix::zeros(2, 3), &Matrix::zeros(2, 3)).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("(2, 3)") && msg.contains("matmul"), "{msg}");
    }

    #[test]
    fn elementwise_examples() {
        let h = binary(
            Binary::Hadamard,
            &Matrix::from_rows(&[[1.0, 2.0]]),
            &Matrix::from_rows(&[[3.0, 4.0]]),
        )
        .unwrap();
        assert_eq!(h, Matrix::from_rows(&[[3.0, 8.0]]));
        let r = unary(Unary::Relu, &Matrix::from_rows(&[[-1.0, 2.0]])).unwrap();
        assert_eq!(r, Matrix::from_rows(&[[0.0, 2.0]]));
        let b = binary(
            Binary::Hadamard,
            &Matrix::column(vec![2.0, 3.0]),
            &Matrix::ones(2, 2),
        )
        .unwrap();
        assert_eq!(b, Matrix::from_rows(&[[2.0, 2.0], [3.0, 3.0]]));
    }

    #[test]
    fn recip_sqrt_domain() {
        assert!(matches!(
            unary(Unary::RecipSqrt, &Matrix::row(vec![1.0, 0.0])),
            Err(Error::Domain { .. })
        ));
        assert!(unary(Unary::RecipSqrt, &Matrix::row(vec![-2.0])).is_err());
        let ok = unary(Unary::RecipSqrt, &Matrix::row(vec![4.0])).unwrap();
        assert_eq!(ok.get(0, 0), 0.5);
    }

    #[test]
    fn broadcast_mismatch_rejected() {
        assert!(binary(Binary::Add, &Matrix::zeros(2, 3), &Matrix::zeros(3, 1)).is_err());
    }

    #[test]
    fn linear_map_examples() {
        let x = Matrix::from_rows(&[[1.0, -2.0], [0.5, 3.0]]);
        let id = linear_map(&x, &Matrix::identity(2), &Matrix::zeros(1, 2)).unwrap();
        assert_eq!(id, x);
        let w = Matrix::from_rows(&[[0.3, 1.0], [2.0, -1.0]]);
        let zero = linear_map(&Matrix::zeros(3, 2), &w, &Matrix::row(vec![4.0, 5.0])).unwrap();
        for r in 0..3 {
            assert_eq!(zero.row_slice(r), &[4.0, 5.0]);
        }
        let v = linear_map(
            &Matrix::from_rows(&[[1.0, 1.0]]),
            &Matrix::column(vec![1.0, 2.0]),
            &Matrix::row(vec![1.0]),
        )
        .unwrap();
        assert_eq!(v.get(0, 0), 4.0);
    }

    #[test]
    fn pooling_examples() {
        let x = Matrix::from_rows(&[[1.0, 2.0], [3.0, 0.0]]);
        assert_eq!(
            pool_over_positions(&x).unwrap(),
            Matrix::row(vec![3.0, 2.0])
        );
        assert_eq!(
            pool_over_channels(&x).unwrap(),
            Matrix::column(vec![2.0, 3.0])
        );
        assert_eq!(
            pool_over_positions(&Matrix::zeros(3, 2)).unwrap(),
            Matrix::zeros(1, 2)
        );
        let single = Matrix::row(vec![4.0, -1.0]);
        assert_eq!(pool_over_positions(&single).unwrap(), single);
        let col = Matrix::column(vec![1.0, -5.0]);
        assert_eq!(pool_over_channels(&col).unwrap(), col);
        let neg = Matrix::from_rows(&[[-3.0, -1.0]]);
        assert_eq!(pool_over_channels(&neg).unwrap().get(0, 0), -1.0);
        assert!(pool_over_positions(&Matrix::zeros(0, 2)).is_err());
        assert!(pool_over_channels(&Matrix::zeros(2, 0)).is_err());
    }

    #[test]
    fn argmax_prefers_first_tie() {
        let x = Matrix::from_rows(&[[1.0, 5.0], [1.0, 5.0]]);
        assert_eq!(argmax_over_rows(&x).unwrap(), vec![0, 0]);
        assert_eq!(
            argmax_over_cols(&Matrix::row(vec![2.0, 2.0])).unwrap(),
            vec![0]
        );
    }

    #[test]
    fn bilinear_examples() {
        let g = GridShape::new(2, 2);
        let x = Matrix::column(vec![0.0, 1.0, 2.0, 3.0]);
        assert_eq!(bilinear_resample(&x, g, g).unwrap(), x);
        let one = bilinear_resample(&x, g, GridShape::new(1, 1)).unwrap();
        assert_eq!(one.get(0, 0), 1.5);
        let c = Matrix::filled(6, 2, 0.37);
        let up = bilinear_resample(&c, GridShape::new(2, 3), GridShape::new(7, 5)).unwrap();
        assert!(up.data().iter().all(|&v| v == 0.37));
        assert!(bilinear_resample(&x, g, GridShape::new(0, 3)).is_err());
    }

    #[test]
    fn bilinear_transpose_is_adjoint() {
        let from = GridShape::new(3, 4);
        let to = GridShape::new(5, 2);
        let x = Matrix::from_fn(12, 2, |i, j| ((i * 7 + j * 3) % 5) as f64 - 1.3);
        let g = Matrix::from_fn(10, 2, |i, j| ((i * 3 + j) % 4) as f64 * 0.5 - 0.7);
        let fx = bilinear_resample(&x, from, to).unwrap();
        let gt = bilinear_resample_transpose(&g, from, to).unwrap();
        let lhs: f64 = fx.data().iter().zip(g.data()).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.data().iter().zip(gt.data()).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn space_to_depth_round_trip() {
        let g = GridShape::new(4, 6);
        let x = Matrix::from_fn(24, 3, |i, j| (i * 3 + j) as f64);
        let s = space_to_depth(&x, g).unwrap();
        assert_eq!(s.shape(), (6, 12));
        assert_eq!(depth_to_space(&s, g).unwrap(), x);
        // patch (0,0): rows 0, 1, 6, 7 of the fine grid
        assert_eq!(s.get(0, 0), x.get(0, 0));
        assert_eq!(s.get(0, 3), x.get(1, 0));
        assert_eq!(s.get(0, 6), x.get(6, 0));
        assert_eq!(s.get(0, 9), x.get(7, 0));
    }

    #[test]
    fn block_max_pool_marks_any_positive() {
        let g = GridShape::new(2, 4);
        let x = Matrix::column(vec![0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0]);
        let p = block_max_pool(&x, g, 2).unwrap();
        assert_eq!(p, Matrix::column(vec![0.0, 1.0]));
    }
}
