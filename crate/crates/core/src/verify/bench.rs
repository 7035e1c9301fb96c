//! Wall-time scaling of factored versus dense Laplacian application.

use std::fmt::Write as _;
use std::time::Instant;

use serde::Serialize;

use super::dense::{dense_adjacency, dense_degree_laplacian, dense_product};
use super::Instance;
use crate::error::{Error, Result};
use crate::graph::{self, Variant};
use crate::tensor::GridShape;

#[derive(Clone, Debug, Serialize)]
pub struct BenchRow {
    pub method: String,
    pub n: usize,
    pub c: usize,
    pub median_seconds: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
    pub factored_slope: f64,
    pub dense_slope: f64,
}

impl BenchReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("method,N,C,median_seconds\n");
        for r in &self.rows {
            let _ = writeln!(s, "{},{},{},{:e}", r.method, r.n, r.c, r.median_seconds);
        }
        s
    }
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let m = xs.len() / 2;
    if xs.len() % 2 == 1 {
        xs[m]
    } else {
        0.5 * (xs[m - 1] + xs[m])
    }
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn log_log_slope(points: &[(f64, f64)]) -> f64 {
    if points.len() < 2 {
        return f64::NAN;
    }
    let n = points.len() as f64;
    let lx: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ly: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    for (x, y) in lx.iter().zip(&ly) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
    }
    sxy / sxx
}

/// A grid holding `n` vertices, as square as possible.
fn grid_for(n: usize) -> GridShape {
    let mut h = (n as f64).sqrt() as usize;
    while h > 1 && !n.is_multiple_of(h) {
        h -= 1;
    }
    GridShape::new(h.max(1), n / h.max(1))
}

fn time<F: FnMut() -> Result<()>>(repeats: usize, mut f: F) -> Result<f64> {
    let mut samples = Vec::with_capacity(repeats);
    for _ in 0..repeats {
        let start = Instant::now();
        f()?;
        samples.push(start.elapsed().as_secs_f64());
    }
    Ok(median(samples))
}

/// Times both paths (building the graph from features, then `L̃·x`) on the
/// calling thread for each vertex count in `sizes`.
pub fn scaling_bench(
    sizes: &[usize],
    repeats: usize,
    channels: usize,
    seed: u64,
) -> Result<BenchReport> {
    if sizes.is_empty() || repeats == 0 || channels == 0 {
        return Err(Error::Invalid(
            "bench needs at least one size, one repeat and one channel".into(),
        ));
    }
    if sizes.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Invalid(
            "bench sizes must be strictly ascending".into(),
        ));
    }
    let variant = Variant::Boundary;
    let mut rows = Vec::new();
    let mut fact_pts = Vec::new();
    let mut dense_pts = Vec::new();
    for &n in sizes {
        let inst = Instance::random(seed, grid_for(n), channels);
        let b = Some(&inst.boundary);
        let factored = time(repeats, || {
            let adj = graph::build_adjacency_factors(&inst.r, b, &inst.params, variant)?;
            std::hint::black_box(graph::laplacian_apply(&adj, &inst.z)?);
            Ok(())
        })?;
        let dense = time(repeats, || {
            let a = dense_adjacency(&inst.r, b, &inst.params, variant)?;
            let g = dense_degree_laplacian(&a, inst.params.degree_epsilon)?;
            std::hint::black_box(dense_product(&g.laplacian, &inst.z)?);
            Ok(())
        })?;
        for (method, t, pts) in [
            ("factored", factored, &mut fact_pts),
            ("dense", dense, &mut dense_pts),
        ] {
            rows.push(BenchRow {
                method: method.into(),
                n,
                c: channels,
                median_seconds: t,
            });
            pts.push((n as f64, t.max(1e-12)));
        }
    }
    Ok(BenchReport {
        rows,
        factored_slope: log_log_slope(&fact_pts),
        dense_slope: log_log_slope(&dense_pts),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slope_of_power_law() {
        let pts: Vec<(f64, f64)> = [2.0f64, 4.0, 8.0]
            .iter()
            .map(|&x| (x, 3.0 * x * x))
            .collect();
        assert!((log_log_slope(&pts) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn median_even_and_odd() {
        assert_eq!(median(vec![3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(vec![4.0, 1.0, 2.0, 3.0]), 2.5);
    }

    #[test]
    fn grid_shapes() {
        assert_eq!(grid_for(256), GridShape::new(16, 16));
        assert_eq!(grid_for(12), GridShape::new(3, 4));
        assert_eq!(grid_for(7), GridShape::new(1, 7));
    }

    #[test]
    fn single_repeat_report_is_well_formed() {
        let rep = scaling_bench(&[4, 16], 1, 2, 0).unwrap();
        assert_eq!(rep.rows.len(), 4);
        let csv = rep.to_csv();
        assert!(csv.starts_with("method,N,C,median_seconds\n"));
        assert_eq!(csv.lines().count(), 5);
        assert!(rep.factored_slope.is_finite() && rep.dense_slope.is_finite());
    }

    #[test]
    fn rejects_unsorted_sizes() {
        assert!(scaling_bench(&[16, 4], 1, 2, 0).is_err());
    }
}
