//! Factored-versus-dense comparison.

use serde::Serialize;

use super::dense::{dense_adjacency, dense_degree_laplacian, dense_product};
use crate::error::Result;
use crate::graph::{self, BiGConvParams, BoundaryMap, Variant, VertexEmbeddings};
use crate::tensor::Matrix;

pub const EQUIVALENCE_TOLERANCE: f64 = 1e-8;

/// Normwise relative error `‖a − b‖∞ / max(‖b‖∞, 1e-8)`.
pub fn relative_error(actual: &Matrix, expected: &Matrix) -> f64 {
    match actual.max_abs_diff(expected) {
        Ok(d) => d / expected.max_abs().max(1e-8),
        Err(_) => f64::INFINITY,
    }
}

/// `Ã·z`, raw degrees and `L̃·z` from one evaluation path.
#[derive(Clone, Debug)]
pub struct Quantities {
    pub adjacency: Matrix,
    pub degree: Matrix,
    pub laplacian: Matrix,
    pub clamp_count: usize,
}

pub fn factored_quantities(
    r: &VertexEmbeddings,
    b: Option<&BoundaryMap>,
    p: &BiGConvParams,
    variant: Variant,
    z: &Matrix,
) -> Result<Quantities> {
    let adj = graph::build_adjacency_factors(r, b, p, variant)?;
    let d = graph::degree(&adj)?;
    Ok(Quantities {
        adjacency: graph::adjacency_apply(&adj, z)?,
        degree: d.raw,
        laplacian: graph::laplacian_apply(&adj, z)?,
        clamp_count: d.clamp_count,
    })
}

pub fn dense_quantities(
    r: &VertexEmbeddings,
    b: Option<&BoundaryMap>,
    p: &BiGConvParams,
    variant: Variant,
    z: &Matrix,
) -> Result<Quantities> {
    let a = dense_adjacency(r, b, p, variant)?;
    let eps = if variant == Variant::Classic {
        0.0
    } else {
        p.degree_epsilon
    };
    let g = dense_degree_laplacian(&a, eps)?;
    Ok(Quantities {
        adjacency: dense_product(&a, z)?,
        degree: Matrix::column(g.raw_degree.clone()),
        laplacian: dense_product(&g.laplacian, z)?,
        clamp_count: g.clamp_count,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct EquivalenceReport {
    pub variant: Variant,
    pub vertices: usize,
    pub adjacency_error: f64,
    pub degree_error: f64,
    pub laplacian_error: f64,
    pub clamp_count: usize,
    pub pass: bool,
}

impl EquivalenceReport {
    pub fn max_error(&self) -> f64 {
        self.adjacency_error
            .max(self.degree_error)
            .max(self.laplacian_error)
    }
}

pub fn compare(variant: Variant, factored: &Quantities, dense: &Quantities) -> EquivalenceReport {
    let adjacency_error = relative_error(&factored.adjacency, &dense.adjacency);
    let degree_error = relative_error(&factored.degree, &dense.degree);
    let laplacian_error = relative_error(&factored.laplacian, &dense.laplacian);
    let pass = [adjacency_error, degree_error, laplacian_error]
        .iter()
        .all(|&e| e <= EQUIVALENCE_TOLERANCE)
        && factored.clamp_count == dense.clamp_count;
    EquivalenceReport {
        variant,
        vertices: factored.adjacency.rows(),
        adjacency_error,
        degree_error,
        laplacian_error,
        clamp_count: dense.clamp_count,
        pass,
    }
}

/// Compares the factored fast path against the dense oracle.
pub fn equivalence_check(
    r: &VertexEmbeddings,
    b: Option<&BoundaryMap>,
    p: &BiGConvParams,
    variant: Variant,
    z: &Matrix,
) -> Result<EquivalenceReport> {
    let fast = factored_quantities(r, b, p, variant, z)?;
    let slow = dense_quantities(r, b, p, variant, z)?;
    Ok(compare(variant, &fast, &slow))
}
