//! Boundary-aware, input-dependent graph convolution for segmentation.
//!
//! The crate is organised bottom-up:
//!
//! - [`tensor`]: dense matrices, forward kernels and a reverse-mode tape.
//! - [`graph`]: attention diagonals, factored adjacency, degree and
//!   Laplacian application, the graph convolution layer and the classic
//!   grid baseline.
//! - [`grm`]: chains of graph layers joined by residual or GRU links.
//! - [`pipeline`]: toy encoder, feature aggregation, heads, losses, Adam
//!   training, metrics and checkpoints.
//! - [`synth`]: deterministic synthetic scenes, PGM and manifest I/O.
//! - [`verify`]: dense oracles, equivalence and gradient checkers, and the
//!   scaling benchmark.

pub mod error;
pub mod graph;
pub mod grm;
pub mod mask;
pub mod params;
pub mod pipeline;
pub mod rng;
pub mod synth;
pub mod tensor;
pub mod verify;

pub use error::{Error, Result};
pub use tensor::{GridShape, Matrix};
