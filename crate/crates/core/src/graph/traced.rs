//! Differentiable graph operations recorded on a [`Tape`].

use super::params::BiGConvParams;
use super::types::Variant;
use crate::error::{Error, Result};
use crate::tensor::ops;
use crate::tensor::{GridShape, Matrix, Tape, Unary, Var};

/// Factored adjacency `Ã = ψ·diag(λc)·ψᵀ + (E·Eᵀ) ⊙ (u·vᵀ)`.
#[derive(Clone, Debug, PartialEq)]
pub struct AdjacencyFactors<T = Matrix> {
    pub variant: Variant,
    /// `N × C` first embedding ψ.
    pub psi: T,
    /// `N × C` second embedding `E` (φ, or ζ for the boundary variant).
    pub second_embed: T,
    /// `1 × C` diagonal of the channel attention.
    pub lambda_c: T,
    /// `N × 1` left spatial factor `u`.
    pub s_left: T,
    /// `N × 1` right spatial factor `v`.
    pub s_right: T,
    pub degree_epsilon: f64,
}

impl<T> AdjacencyFactors<T> {
    pub fn map<U>(&self, f: &mut dyn FnMut(&T) -> U) -> AdjacencyFactors<U> {
        AdjacencyFactors {
            variant: self.variant,
            psi: f(&self.psi),
            second_embed: f(&self.second_embed),
            lambda_c: f(&self.lambda_c),
            s_left: f(&self.s_left),
            s_right: f(&self.s_right),
            degree_epsilon: self.degree_epsilon,
        }
    }
}

/// The adjacency a layer propagates over.
#[derive(Clone, Debug, PartialEq)]
pub enum Adjacency<T = Matrix> {
    /// Hand-crafted 4-neighbour grid adjacency plus self loops.
    Grid(GridShape),
    /// Input-dependent factored adjacency.
    Factored(AdjacencyFactors<T>),
}

impl<T> Adjacency<T> {
    pub fn map<U>(&self, f: &mut dyn FnMut(&T) -> U) -> Adjacency<U> {
        match self {
            Adjacency::Grid(g) => Adjacency::Grid(*g),
            Adjacency::Factored(fac) => Adjacency::Factored(fac.map(f)),
        }
    }

    pub fn variant(&self) -> Variant {
        match self {
            Adjacency::Grid(_) => Variant::Classic,
            Adjacency::Factored(f) => f.variant,
        }
    }

    pub fn degree_epsilon(&self) -> f64 {
        match self {
            Adjacency::Grid(_) => 0.0,
            Adjacency::Factored(f) => f.degree_epsilon,
        }
    }
}

/// `sigmoid(MLP(max over positions of r))`, a `1 × C` row.
pub fn channel_attention(t: &mut Tape, r: Var, p: &BiGConvParams<Var>) -> Result<Var> {
    let pooled = t.pool_over_positions(r)?;
    let hidden = t.linear_map(pooled, p.mlp_w1, p.mlp_b1)?;
    let hidden = t.relu(hidden)?;
    let out = t.linear_map(hidden, p.mlp_w2, p.mlp_b2)?;
    t.sigmoid(out)
}

/// `sigmoid(w · pooled + b)` for a `N × 1` pooled map and 1×1 scalars.
fn scalar_conv_sigmoid(t: &mut Tape, pooled: Var, weight: Var, bias: Var) -> Result<Var> {
    let scaled = t.mul(pooled, weight)?;
    let pre = t.add(scaled, bias)?;
    t.sigmoid(pre)
}

/// `sigmoid(conv_s(max over channels of r))`, a `N × 1` column.
pub fn spatial_attention(t: &mut Tape, r: Var, p: &BiGConvParams<Var>) -> Result<Var> {
    let pooled = t.pool_over_channels(r)?;
    scalar_conv_sigmoid(t, pooled, p.conv_s_weight, p.conv_s_bias)
}

/// Boundary-aware spatial factors `(u, v)` with `u·vᵀ` the fused spatial
/// weighting; `v` pools the features masked by the boundary map.
pub fn boundary_spatial_factors(
    t: &mut Tape,
    r: Var,
    boundary: Var,
    p: &BiGConvParams<Var>,
) -> Result<(Var, Var)> {
    let (n, _) = t.shape(r);
    if t.shape(boundary) != (n, 1) {
        return Err(Error::shape(
            "boundary_spatial_factors",
            t.shape(r),
            t.shape(boundary),
        ));
    }
    let pooled = t.pool_over_channels(r)?;
    let u = scalar_conv_sigmoid(t, pooled, p.conv_u_weight, p.conv_u_bias)?;
    let masked = t.mul(r, boundary)?;
    let pooled_masked = t.pool_over_channels(masked)?;
    let v = scalar_conv_sigmoid(t, pooled_masked, p.conv_v_weight, p.conv_v_bias)?;
    Ok((u, v))
}

/// Builds the adjacency for `variant`. `boundary` is required for
/// [`Variant::Boundary`] and ignored otherwise.
pub fn build_adjacency_factors(
    t: &mut Tape,
    r: Var,
    grid: GridShape,
    boundary: Option<Var>,
    p: &BiGConvParams<Var>,
    variant: Variant,
) -> Result<Adjacency<Var>> {
    let (n, c) = t.shape(r);
    if n != grid.len() {
        return Err(Error::shape(
            "build_adjacency_factors",
            (n, c),
            (grid.len(), c),
        ));
    }
    if variant == Variant::Classic {
        return Ok(Adjacency::Grid(grid));
    }
    let psi = t.linear_map(r, p.w_psi, p.b_psi)?;
    let second_embed = t.linear_map(r, p.w_second, p.b_second)?;
    let lambda_c = if variant.uses_channel_attention() {
        channel_attention(t, r, p)?
    } else {
        t.constant(Matrix::ones(1, c))
    };
    let (s_left, s_right) = if variant == Variant::Boundary {
        let b = boundary.ok_or(Error::MissingBoundary)?;
        boundary_spatial_factors(t, r, b, p)?
    } else if variant.uses_spatial_attention() {
        let s = spatial_attention(t, r, p)?;
        (s, s)
    } else {
        let ones = t.constant(Matrix::ones(n, 1));
        (ones, ones)
    };
    Ok(Adjacency::Factored(AdjacencyFactors {
        variant,
        psi,
        second_embed,
        lambda_c,
        s_left,
        s_right,
        degree_epsilon: p.degree_epsilon,
    }))
}

/// `Ã·z` without materialising `Ã`.
pub fn adjacency_apply(t: &mut Tape, adj: &Adjacency<Var>, z: Var) -> Result<Var> {
    match adj {
        Adjacency::Grid(grid) => t.grid_propagate(z, *grid),
        Adjacency::Factored(f) => {
            let (n, _) = t.shape(f.psi);
            if t.shape(z).0 != n {
                return Err(Error::shape("adjacency_apply", t.shape(f.psi), t.shape(z)));
            }
            // ψ·(diag(λc)·(ψᵀ·z))
            let psi_t = t.transpose(f.psi)?;
            let proj = t.matmul(psi_t, z)?;
            let lambda = t.transpose(f.lambda_c)?;
            let weighted = t.mul(lambda, proj)?;
            let channel_term = t.matmul(f.psi, weighted)?;
            // u ⊙ (E·(Eᵀ·(v ⊙ z)))
            let vz = t.mul(f.s_right, z)?;
            let e_t = t.transpose(f.second_embed)?;
            let proj = t.matmul(e_t, vz)?;
            let back = t.matmul(f.second_embed, proj)?;
            let spatial_term = t.mul(f.s_left, back)?;
            t.add(channel_term, spatial_term)
        }
    }
}

/// Vertex degrees before and after clamping.
#[derive(Clone, Copy, Debug)]
pub struct TracedDegree {
    pub raw: Var,
    pub clamped: Var,
    pub clamp_count: usize,
}

/// Row sums of `Ã`, evaluated as `Ã·1`, clamped from below at the
/// adjacency's degree epsilon.
pub fn degree(t: &mut Tape, adj: &Adjacency<Var>) -> Result<TracedDegree> {
    let raw = match adj {
        Adjacency::Grid(grid) => t.constant(Matrix::column(ops::grid_degree(*grid))),
        Adjacency::Factored(f) => {
            let n = t.shape(f.psi).0;
            let ones = t.constant(Matrix::ones(n, 1));
            adjacency_apply(t, adj, ones)?
        }
    };
    let eps = adj.degree_epsilon();
    let clamp_count = t.value(raw).data().iter().filter(|&&d| d < eps).count();
    let clamped = if matches!(adj, Adjacency::Grid(_)) {
        raw
    } else {
        t.unary(Unary::ClampMin(eps), raw)?
    };
    Ok(TracedDegree {
        raw,
        clamped,
        clamp_count,
    })
}

/// `x − D^{-1/2}·Ã·D^{-1/2}·x` for a clamped degree column.
pub fn laplacian_apply(t: &mut Tape, adj: &Adjacency<Var>, degree: Var, x: Var) -> Result<Var> {
    let inv_sqrt = t.unary(Unary::RecipSqrt, degree)?;
    let scaled = t.mul(inv_sqrt, x)?;
    let propagated = adjacency_apply(t, adj, scaled)?;
    let normalised = t.mul(inv_sqrt, propagated)?;
    t.sub(x, normalised)
}

/// `D̂^{-1/2}·(A + I)·D̂^{-1/2}·x·θ` on the 4-neighbour grid.
pub fn classic_gcn_layer(t: &mut Tape, x: Var, theta: Var, grid: GridShape) -> Result<Var> {
    if t.shape(x).0 != grid.len() {
        return Err(Error::shape(
            "classic_gcn_layer",
            t.shape(x),
            (grid.len(), t.shape(x).1),
        ));
    }
    let inv_sqrt = t.constant(Matrix::column(
        ops::grid_degree(grid)
            .into_iter()
            .map(|d| 1.0 / d.sqrt())
            .collect(),
    ));
    let scaled = t.mul(inv_sqrt, x)?;
    let propagated = t.grid_propagate(scaled, grid)?;
    let normalised = t.mul(inv_sqrt, propagated)?;
    t.matmul(normalised, theta)
}

/// One graph layer: `relu(L̃·r·W_G) + r`. The classic variant propagates
/// with the normalised grid adjacency instead of the Laplacian.
pub fn bigconv_layer(
    t: &mut Tape,
    r: Var,
    grid: GridShape,
    boundary: Option<Var>,
    p: &BiGConvParams<Var>,
    variant: Variant,
) -> Result<Var> {
    let (_, c) = t.shape(r);
    if t.shape(p.w_g) != (c, c) {
        return Err(Error::shape("bigconv_layer", t.shape(r), t.shape(p.w_g)));
    }
    let conv = if variant == Variant::Classic {
        classic_gcn_layer(t, r, p.w_g, grid)?
    } else {
        let adj = build_adjacency_factors(t, r, grid, boundary, p, variant)?;
        let deg = degree(t, &adj)?;
        let rw = t.matmul(r, p.w_g)?;
        laplacian_apply(t, &adj, deg.clamped, rw)?
    };
    let act = t.relu(conv)?;
    t.add(act, r)
}
