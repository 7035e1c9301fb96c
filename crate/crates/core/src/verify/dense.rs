//! Materialised adjacency, degree and Laplacian.

use super::reference;
use crate::error::{Error, Result};
use crate::graph::{AdjacencyFactors, BiGConvParams, BoundaryMap, Variant, VertexEmbeddings};
use crate::tensor::{GridShape, Matrix};

/// Largest vertex count the dense oracle accepts.
pub const DENSE_LIMIT: usize = 8192;

fn guard(n: usize) -> Result<()> {
    if n > DENSE_LIMIT {
        return Err(Error::Guard {
            n,
            limit: DENSE_LIMIT,
        });
    }
    Ok(())
}

/// 4-neighbour grid adjacency with self loops, entry by entry.
pub fn dense_grid_adjacency(grid: GridShape) -> Result<Matrix> {
    let n = grid.len();
    guard(n)?;
    let mut a = Matrix::zeros(n, n);
    for i in 0..n {
        let (yi, xi) = (i / grid.width, i % grid.width);
        for j in 0..n {
            let (yj, xj) = (j / grid.width, j % grid.width);
            let manhattan = yi.abs_diff(yj) + xi.abs_diff(xj);
            if manhattan <= 1 {
                a.set(i, j, 1.0);
            }
        }
    }
    Ok(a)
}

/// The adjacency for `variant`, built term by term:
/// `Ã[i][j] = Σc ψ[i][c]·λ[c]·ψ[j][c] + (Σc E[i][c]·E[j][c])·u[i]·v[j]`.
pub fn dense_adjacency(
    r: &VertexEmbeddings,
    boundary: Option<&BoundaryMap>,
    p: &BiGConvParams,
    variant: Variant,
) -> Result<Matrix> {
    let n = r.vertices();
    guard(n)?;
    if variant == Variant::Classic {
        return dense_grid_adjacency(r.grid());
    }
    if variant == Variant::Boundary && boundary.is_none() {
        return Err(Error::MissingBoundary);
    }
    let (psi, e, lambda, u, v) = reference::factors(r, boundary, p, variant);
    let c = r.channels();
    let mut a = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let mut channel = 0.0;
            for k in 0..c {
                channel += psi[i][k] * lambda[k] * psi[j][k];
            }
            let mut ee = 0.0;
            for k in 0..c {
                ee += e[i][k] * e[j][k];
            }
            a.set(i, j, channel + ee * (u[i] * v[j]));
        }
    }
    Ok(a)
}

/// Materialises already-computed factors with explicit loops.
pub fn dense_from_factors(f: &AdjacencyFactors) -> Result<Matrix> {
    let (n, c) = f.psi.shape();
    guard(n)?;
    let mut a = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let mut channel = 0.0;
            for k in 0..c {
                channel += f.psi.get(i, k) * f.lambda_c.get(0, k) * f.psi.get(j, k);
            }
            let mut ee = 0.0;
            for k in 0..f.second_embed.cols() {
                ee += f.second_embed.get(i, k) * f.second_embed.get(j, k);
            }
            a.set(
                i,
                j,
                channel + ee * (f.s_left.get(i, 0) * f.s_right.get(j, 0)),
            );
        }
    }
    Ok(a)
}

/// A materialised graph: adjacency, clamped degrees and `I − D^{-1/2}ÃD^{-1/2}`.
#[derive(Clone, Debug)]
pub struct DenseGraph {
    pub adjacency: Matrix,
    /// Row sums before clamping.
    pub raw_degree: Vec<f64>,
    pub degree: Vec<f64>,
    pub clamp_count: usize,
    pub laplacian: Matrix,
}

/// Row sums in column order, clamped from below at `epsilon`.
pub fn dense_degree_laplacian(adj: &Matrix, epsilon: f64) -> Result<DenseGraph> {
    if adj.rows() != adj.cols() {
        return Err(Error::shape(
            "dense_degree_laplacian",
            adj.shape(),
            (adj.rows(), adj.rows()),
        ));
    }
    let n = adj.rows();
    let raw_degree: Vec<f64> = (0..n)
        .map(|i| {
            let mut s = 0.0;
            for j in 0..n {
                s += adj.get(i, j);
            }
            s
        })
        .collect();
    let degree: Vec<f64> = raw_degree
        .iter()
        .map(|&d| if d < epsilon { epsilon } else { d })
        .collect();
    let clamp_count = raw_degree.iter().filter(|&&d| d < epsilon).count();
    let inv: Vec<f64> = degree.iter().map(|d| 1.0 / d.sqrt()).collect();
    let mut laplacian = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let id = if i == j { 1.0 } else { 0.0 };
            laplacian.set(i, j, id - inv[i] * adj.get(i, j) * inv[j]);
        }
    }
    Ok(DenseGraph {
        adjacency: adj.clone(),
        raw_degree,
        degree,
        clamp_count,
        laplacian,
    })
}

/// Dense `a · b` with a plain triple loop.
pub fn dense_product(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.cols() != b.rows() {
        return Err(Error::shape("dense_product", a.shape(), b.shape()));
    }
    let mut out = Matrix::zeros(a.rows(), b.cols());
    for i in 0..a.rows() {
        for k in 0..a.cols() {
            let aik = a.get(i, k);
            for j in 0..b.cols() {
                let v = out.get(i, j) + aik * b.get(k, j);
                out.set(i, j, v);
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_adjacency_has_zero_laplacian() {
        let g = dense_degree_laplacian(&Matrix::identity(3), 1e-4).unwrap();
        assert_eq!(g.degree, vec![1.0; 3]);
        assert_eq!(g.laplacian, Matrix::zeros(3, 3));
        assert_eq!(g.clamp_count, 0);
    }

    #[test]
    fn all_ones_two_by_two() {
        let g = dense_degree_laplacian(&Matrix::ones(2, 2), 1e-4).unwrap();
        assert_eq!(g.degree, vec![2.0, 2.0]);
        let want = Matrix::from_rows(&[[0.5, -0.5], [-0.5, 0.5]]);
        assert!(g.laplacian.max_abs_diff(&want).unwrap() < 1e-15);
    }

    #[test]
    fn negative_rows_are_clamped() {
        let adj = Matrix::from_rows(&[[-1.0, 0.5], [0.5, 1.0]]);
        let g = dense_degree_laplacian(&adj, 1e-4).unwrap();
        assert_eq!(g.clamp_count, 1);
        assert_eq!(g.degree, vec![1e-4, 1.5]);
        assert_eq!(g.raw_degree, vec![-0.5, 1.5]);
    }

    #[test]
    fn non_square_rejected() {
        assert!(dense_degree_laplacian(&Matrix::zeros(2, 3), 1e-4).is_err());
    }

    #[test]
    fn guard_refuses_large_graphs() {
        let r = VertexEmbeddings::new(Matrix::zeros(8200, 1), GridShape::new(82, 100)).unwrap();
        let p = BiGConvParams::zeros(1);
        assert!(matches!(
            dense_adjacency(&r, None, &p, Variant::Channel),
            Err(Error::Guard { .. })
        ));
    }

    #[test]
    fn zero_embeddings_zero_matrix() {
        let r = VertexEmbeddings::new(Matrix::zeros(4, 2), GridShape::new(2, 2)).unwrap();
        let p = BiGConvParams::zeros(2);
        for v in [Variant::Channel, Variant::Spatial, Variant::ChannelSpatial] {
            assert_eq!(
                dense_adjacency(&r, None, &p, v).unwrap(),
                Matrix::zeros(4, 4)
            );
        }
    }

    #[test]
    fn hand_instance_two_vertices() {
        let f = AdjacencyFactors {
            variant: Variant::ChannelSpatial,
            psi: Matrix::identity(2),
            second_embed: Matrix::identity(2),
            lambda_c: Matrix::row(vec![0.5, 0.5]),
            s_left: Matrix::ones(2, 1),
            s_right: Matrix::ones(2, 1),
            degree_epsilon: 1e-4,
        };
        let a = dense_from_factors(&f).unwrap();
        assert_eq!(a, Matrix::from_rows(&[[1.5, 0.0], [0.0, 1.5]]));
    }

    #[test]
    fn grid_adjacency_counts() {
        let a = dense_grid_adjacency(GridShape::new(1, 2)).unwrap();
        assert_eq!(a, Matrix::ones(2, 2));
        let a = dense_grid_adjacency(GridShape::new(3, 3)).unwrap();
        // centre vertex: itself plus four neighbours
        assert_eq!((0..9).map(|j| a.get(4, j)).sum::<f64>(), 5.0);
        assert_eq!((0..9).map(|j| a.get(0, j)).sum::<f64>(), 3.0);
    }
}
