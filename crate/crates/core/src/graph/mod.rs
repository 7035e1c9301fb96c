//! Input-dependent, boundary-aware graph convolution.
//!
//! The adjacency over the `N` positions of a feature map is never built
//! densely. It is kept as factors
//!
//! ```text
//! Ã = ψ·diag(λc)·ψᵀ + (E·Eᵀ) ⊙ (u·vᵀ)
//! ```
//!
//! where `ψ` and `E` are per-position linear embeddings of the features,
//! `λc` is a channel attention vector and `u`, `v` are spatial weights
//! (`u = v` unless a boundary map is fused in). Products with `Ã`, its row
//! sums and the normalised Laplacian `I − D^{-1/2}·Ã·D^{-1/2}` then cost
//! `O(N·C²)`.
//!
//! [`traced`] holds the differentiable implementations; the functions
//! re-exported here evaluate them on plain values.

mod adjacency;
mod params;
pub mod traced;
mod types;

pub use adjacency::{
    adjacency_apply, bigconv_layer, boundary_spatial_factors, build_adjacency_factors,
    channel_attention, classic_gcn_layer, degree, laplacian_apply, spatial_attention, Degree,
};
pub use params::{hidden_width, BiGConvParams, DEFAULT_DEGREE_EPSILON};
pub use traced::{Adjacency, AdjacencyFactors};
pub use types::{BoundaryMap, Variant, VertexEmbeddings};
