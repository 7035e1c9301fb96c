use super::params::BiGConvParams;
use super::traced::{self, Adjacency};
use super::types::{BoundaryMap, Variant, VertexEmbeddings};
use crate::error::{Error, Result};
use crate::params::bind_constant;
use crate::tensor::{GridShape, Matrix, Tape, Var};

fn bind(t: &mut Tape, p: &BiGConvParams) -> BiGConvParams<Var> {
    p.map(&mut bind_constant(t))
}

fn check_pair(r: &VertexEmbeddings, b: &BoundaryMap) -> Result<()> {
    if r.vertices() != b.vertices() {
        return Err(Error::shape(
            "boundary pairing",
            r.map().shape(),
            b.map().shape(),
        ));
    }
    Ok(())
}

/// Diagonal of the channel attention as a `1 × C` row.
pub fn channel_attention(r: &VertexEmbeddings, p: &BiGConvParams) -> Result<Matrix> {
    let mut t = Tape::new();
    let rv = t.constant(r.map().clone());
    let pv = bind(&mut t, p);
    let out = traced::channel_attention(&mut t, rv, &pv)?;
    Ok(t.value(out).clone())
}

/// Diagonal of the spatial attention as a `N × 1` column.
pub fn spatial_attention(r: &VertexEmbeddings, p: &BiGConvParams) -> Result<Matrix> {
    let mut t = Tape::new();
    let rv = t.constant(r.map().clone());
    let pv = bind(&mut t, p);
    let out = traced::spatial_attention(&mut t, rv, &pv)?;
    Ok(t.value(out).clone())
}

/// Boundary-aware spatial factors `(u, v)`, each `N × 1`.
pub fn boundary_spatial_factors(
    r: &VertexEmbeddings,
    b: &BoundaryMap,
    p: &BiGConvParams,
) -> Result<(Matrix, Matrix)> {
    check_pair(r, b)?;
    let mut t = Tape::new();
    let rv = t.constant(r.map().clone());
    let bv = t.constant(b.map().clone());
    let pv = bind(&mut t, p);
    let (u, v) = traced::boundary_spatial_factors(&mut t, rv, bv, &pv)?;
    Ok((t.value(u).clone(), t.value(v).clone()))
}

pub fn build_adjacency_factors(
    r: &VertexEmbeddings,
    b: Option<&BoundaryMap>,
    p: &BiGConvParams,
    variant: Variant,
) -> Result<Adjacency> {
    if let Some(b) = b {
        check_pair(r, b)?;
    }
    let mut t = Tape::new();
    let rv = t.constant(r.map().clone());
    let bv = b.map(|b| t.constant(b.map().clone()));
    let pv = bind(&mut t, p);
    let adj = traced::build_adjacency_factors(&mut t, rv, r.grid(), bv, &pv, variant)?;
    Ok(adj.map(&mut |v| t.value(*v).clone()))
}

fn bind_adjacency(t: &mut Tape, adj: &Adjacency) -> Adjacency<Var> {
    adj.map(&mut |m| t.constant(m.clone()))
}

/// `Ã·z` through the factors.
pub fn adjacency_apply(adj: &Adjacency, z: &Matrix) -> Result<Matrix> {
    let mut t = Tape::new();
    let a = bind_adjacency(&mut t, adj);
    let zv = t.constant(z.clone());
    let out = traced::adjacency_apply(&mut t, &a, zv)?;
    Ok(t.value(out).clone())
}

/// Vertex degrees with the clamp applied, plus the raw row sums.
#[derive(Clone, Debug, PartialEq)]
pub struct Degree {
    pub values: Matrix,
    pub raw: Matrix,
    pub clamp_count: usize,
}

pub fn degree(adj: &Adjacency) -> Result<Degree> {
    let mut t = Tape::new();
    let a = bind_adjacency(&mut t, adj);
    let d = traced::degree(&mut t, &a)?;
    Ok(Degree {
        values: t.value(d.clamped).clone(),
        raw: t.value(d.raw).clone(),
        clamp_count: d.clamp_count,
    })
}

/// `L̃·x` with `L̃ = I − D^{-1/2}·Ã·D^{-1/2}` and clamped degrees.
pub fn laplacian_apply(adj: &Adjacency, x: &Matrix) -> Result<Matrix> {
    let mut t = Tape::new();
    let a = bind_adjacency(&mut t, adj);
    let d = traced::degree(&mut t, &a)?;
    let xv = t.constant(x.clone());
    let out = traced::laplacian_apply(&mut t, &a, d.clamped, xv)?;
    Ok(t.value(out).clone())
}

pub fn bigconv_layer(
    r: &VertexEmbeddings,
    b: Option<&BoundaryMap>,
    p: &BiGConvParams,
    variant: Variant,
) -> Result<VertexEmbeddings> {
    if let Some(b) = b {
        check_pair(r, b)?;
    }
    let mut t = Tape::new();
    let rv = t.constant(r.map().clone());
    let bv = b.map(|b| t.constant(b.map().clone()));
    let pv = bind(&mut t, p);
    let out = traced::bigconv_layer(&mut t, rv, r.grid(), bv, &pv, variant)?;
    VertexEmbeddings::new(t.value(out).clone(), r.grid())
}

pub fn classic_gcn_layer(x: &Matrix, theta: &Matrix, grid: GridShape) -> Result<Matrix> {
    let mut t = Tape::new();
    let xv = t.constant(x.clone());
    let th = t.constant(theta.clone());
    let out = traced::classic_gcn_layer(&mut t, xv, th, grid)?;
    Ok(t.value(out).clone())
}
