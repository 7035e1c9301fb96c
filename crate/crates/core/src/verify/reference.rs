//! Straight-line re-evaluations of the attention and embedding formulas.
//!
//! Written with explicit index loops over `Vec<f64>` so they share nothing
//! with the tape kernels they are compared against.

use crate::graph::{BiGConvParams, BoundaryMap, Variant, VertexEmbeddings};

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn rows_of(r: &VertexEmbeddings) -> Vec<Vec<f64>> {
    let m = r.map();
    (0..m.rows()).map(|i| m.row_slice(i).to_vec()).collect()
}

/// `x·w + b` row by row.
pub fn embed(r: &VertexEmbeddings, w: &crate::Matrix, b: &crate::Matrix) -> Vec<Vec<f64>> {
    let x = rows_of(r);
    x.iter()
        .map(|row| {
            (0..w.cols())
                .map(|j| {
                    let mut s = b.get(0, j);
                    for (k, &xv) in row.iter().enumerate() {
                        s += xv * w.get(k, j);
                    }
                    s
                })
                .collect()
        })
        .collect()
}

pub fn channel_attention(r: &VertexEmbeddings, p: &BiGConvParams) -> Vec<f64> {
    let x = rows_of(r);
    let c = r.channels();
    let mut pooled = vec![f64::NEG_INFINITY; c];
    for row in &x {
        for k in 0..c {
            if row[k] > pooled[k] {
                pooled[k] = row[k];
            }
        }
    }
    let h = p.mlp_w1.cols();
    let mut hidden = vec![0.0; h];
    for j in 0..h {
        let mut s = p.mlp_b1.get(0, j);
        for k in 0..c {
            s += pooled[k] * p.mlp_w1.get(k, j);
        }
        hidden[j] = s.max(0.0);
    }
    (0..c)
        .map(|k| {
            let mut s = p.mlp_b2.get(0, k);
            for j in 0..h {
                s += hidden[j] * p.mlp_w2.get(j, k);
            }
            logistic(s)
        })
        .collect()
}

fn channel_max(row: &[f64]) -> f64 {
    row.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
}

pub fn spatial_attention(r: &VertexEmbeddings, p: &BiGConvParams) -> Vec<f64> {
    let w = p.conv_s_weight.get(0, 0);
    let b = p.conv_s_bias.get(0, 0);
    rows_of(r)
        .iter()
        .map(|row| logistic(w * channel_max(row) + b))
        .collect()
}

pub fn boundary_factors(
    r: &VertexEmbeddings,
    boundary: &BoundaryMap,
    p: &BiGConvParams,
) -> (Vec<f64>, Vec<f64>) {
    let (wu, bu) = (p.conv_u_weight.get(0, 0), p.conv_u_bias.get(0, 0));
    let (wv, bv) = (p.conv_v_weight.get(0, 0), p.conv_v_bias.get(0, 0));
    let x = rows_of(r);
    let mut u = Vec::with_capacity(x.len());
    let mut v = Vec::with_capacity(x.len());
    for (i, row) in x.iter().enumerate() {
        u.push(logistic(wu * channel_max(row) + bu));
        let bi = boundary.map().get(i, 0);
        let masked: Vec<f64> = row.iter().map(|&a| a * bi).collect();
        v.push(logistic(wv * channel_max(&masked) + bv));
    }
    (u, v)
}

/// All adjacency ingredients for `variant`: `(ψ, E, λc, u, v)`.
#[allow(clippy::type_complexity)]
pub fn factors(
    r: &VertexEmbeddings,
    boundary: Option<&BoundaryMap>,
    p: &BiGConvParams,
    variant: Variant,
) -> (Vec<Vec<f64>>, Vec<Vec<f64>>, Vec<f64>, Vec<f64>, Vec<f64>) {
    let n = r.vertices();
    let psi = embed(r, &p.w_psi, &p.b_psi);
    let e = embed(r, &p.w_second, &p.b_second);
    let lambda = if variant.uses_channel_attention() {
        channel_attention(r, p)
    } else {
        vec![1.0; r.channels()]
    };
    let (u, v) = match variant {
        Variant::Boundary => boundary_factors(
            r,
            boundary.expect("boundary variant needs a boundary map"),
            p,
        ),
        _ if variant.uses_spatial_attention() => {
            let s = spatial_attention(r, p);
            (s.clone(), s)
        }
        _ => (vec![1.0; n], vec![1.0; n]),
    };
    (psi, e, lambda, u, v)
}
