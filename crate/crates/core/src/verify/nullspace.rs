//! `L̃·d^{1/2} = 0` when the degrees are exact row sums.

use serde::Serialize;

use crate::error::Result;
use crate::graph::{self, BiGConvParams, BoundaryMap, Variant, VertexEmbeddings};
use crate::tensor::Matrix;

pub const NULL_SPACE_TOLERANCE: f64 = 1e-8;

#[derive(Clone, Debug, Serialize)]
pub struct NullSpaceReport {
    pub variant: Variant,
    /// `‖L̃·d^{1/2}‖∞ / ‖d^{1/2}‖∞`, each column of the probe being `d^{1/2}`.
    pub ratio: f64,
    pub clamp_count: usize,
}

impl NullSpaceReport {
    /// Only meaningful on clamp-free graphs.
    pub fn applicable(&self) -> bool {
        self.clamp_count == 0
    }

    pub fn pass(&self) -> bool {
        self.applicable() && self.ratio <= NULL_SPACE_TOLERANCE
    }
}

pub fn null_space_check(
    r: &VertexEmbeddings,
    b: Option<&BoundaryMap>,
    p: &BiGConvParams,
    variant: Variant,
) -> Result<NullSpaceReport> {
    let adj = graph::build_adjacency_factors(r, b, p, variant)?;
    let d = graph::degree(&adj)?;
    let root = d.values.map(f64::sqrt);
    let probe = Matrix::from_fn(r.vertices(), r.channels(), |i, _| root.get(i, 0));
    let out = graph::laplacian_apply(&adj, &probe)?;
    Ok(NullSpaceReport {
        variant,
        ratio: out.max_abs() / root.max_abs().max(f64::MIN_POSITIVE),
        clamp_count: d.clamp_count,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::verify::Instance;
    use crate::GridShape;

    #[test]
    fn positive_instances_are_clamp_free_and_in_the_null_space() {
        for v in Variant::ALL {
            let inst = Instance::positive(4, GridShape::new(4, 4), 3);
            let rep = inst.null_space(v).unwrap();
            assert!(rep.applicable(), "{v}");
            assert!(rep.pass(), "{v}: {rep:?}");
        }
    }

    #[test]
    fn zero_features_are_not_applicable() {
        let grid = GridShape::new(2, 2);
        let r = VertexEmbeddings::new(Matrix::zeros(4, 2), grid).unwrap();
        let rep = null_space_check(&r, None, &BiGConvParams::zeros(2), Variant::Channel).unwrap();
        assert_eq!(rep.clamp_count, 4);
        assert!(!rep.pass());
    }
}
