//! Brute-force oracles and checkers for the factored graph path.

pub mod bench;
pub mod checks;
pub mod dense;
pub mod equivalence;
pub mod gradcheck;
pub mod nullspace;
pub mod reference;

use crate::error::Result;
use crate::graph::{BiGConvParams, BoundaryMap, Variant, VertexEmbeddings};
use crate::rng;
use crate::tensor::{GridShape, Matrix};

pub use bench::{scaling_bench, BenchReport, BenchRow};
pub use checks::{grm_grad_check, grm_instance, layer_grad_check, pipeline_grad_check};
pub use dense::{dense_adjacency, dense_degree_laplacian, DenseGraph, DENSE_LIMIT};
pub use equivalence::{equivalence_check, EquivalenceReport, EQUIVALENCE_TOLERANCE};
pub use gradcheck::{grad_check, GradCheckOptions, GradCheckReport, ScalarFunction, TapeFunction};
pub use nullspace::{null_space_check, NullSpaceReport, NULL_SPACE_TOLERANCE};

/// Draws the embedding weights non-negative and the biases positive, so
/// positive features give a non-negative adjacency.
pub fn make_positive(p: &mut BiGConvParams, g: &mut rng::SeededRng) {
    let c = p.w_psi.rows();
    p.w_psi = rng::uniform(g, c, c, 0.0, 1.0);
    p.b_psi = rng::uniform(g, 1, c, 0.1, 1.0);
    p.w_second = rng::uniform(g, c, c, 0.0, 1.0);
    p.b_second = rng::uniform(g, 1, c, 0.1, 1.0);
}

/// A random graph input: features, boundary map, parameters and a probe `z`.
#[derive(Clone, Debug)]
pub struct Instance {
    pub r: VertexEmbeddings,
    pub boundary: BoundaryMap,
    pub params: BiGConvParams,
    pub z: Matrix,
}

impl Instance {
    /// Features, parameters and probe uniform in `[-1, 1]`, boundary in `[0, 1]`.
    pub fn random(seed: u64, grid: GridShape, channels: usize) -> Self {
        let mut g = rng::seeded(seed);
        let n = grid.len();
        let r = rng::uniform(&mut g, n, channels, -1.0, 1.0);
        let boundary = rng::uniform(&mut g, n, 1, 0.0, 1.0);
        let params = BiGConvParams::random(channels, &mut g);
        let z = rng::uniform(&mut g, n, channels, -1.0, 1.0);
        Self {
            r: VertexEmbeddings::new(r, grid).expect("finite features"),
            boundary: BoundaryMap::new(boundary).expect("boundary in range"),
            params,
            z,
        }
    }

    /// An instance whose adjacency is entrywise non-negative with a
    /// positive diagonal: features, embedding weights and biases are drawn
    /// non-negative, and the attention weights are sigmoids.
    pub fn positive(seed: u64, grid: GridShape, channels: usize) -> Self {
        let mut inst = Self::random(seed, grid, channels);
        let mut g = rng::seeded(seed ^ 0x9051_71FE);
        let c = channels;
        let n = grid.len();
        inst.r = VertexEmbeddings::new(rng::uniform(&mut g, n, c, 0.1, 1.0), grid)
            .expect("finite features");
        make_positive(&mut inst.params, &mut g);
        inst
    }

    pub fn null_space(&self, variant: Variant) -> Result<NullSpaceReport> {
        null_space_check(&self.r, Some(&self.boundary), &self.params, variant)
    }

    pub fn factored(&self, variant: Variant) -> Result<equivalence::Quantities> {
        equivalence::factored_quantities(
            &self.r,
            Some(&self.boundary),
            &self.params,
            variant,
            &self.z,
        )
    }

    pub fn dense(&self, variant: Variant) -> Result<equivalence::Quantities> {
        equivalence::dense_quantities(
            &self.r,
            Some(&self.boundary),
            &self.params,
            variant,
            &self.z,
        )
    }

    pub fn equivalence(&self, variant: Variant) -> Result<EquivalenceReport> {
        equivalence_check(
            &self.r,
            Some(&self.boundary),
            &self.params,
            variant,
            &self.z,
        )
    }
}
