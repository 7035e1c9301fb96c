use bigconv_core::graph::{self, Adjacency, BiGConvParams, BoundaryMap, Variant, VertexEmbeddings};
use bigconv_core::verify::{self, dense, reference, GradCheckOptions, Instance};
use bigconv_core::{GridShape, Matrix};

fn factors(inst: &Instance, v: Variant) -> graph::AdjacencyFactors {
    match graph::build_adjacency_factors(&inst.r, Some(&inst.boundary), &inst.params, v).unwrap() {
        Adjacency::Factored(f) => f,
        Adjacency::Grid(_) => panic!("{v} has no factors"),
    }
}

fn max_diff(m: &Matrix, rows: &[Vec<f64>]) -> f64 {
    let mut d: f64 = 0.0;
    for (i, row) in rows.iter().enumerate() {
        for (j, &x) in row.iter().enumerate() {
            d = d.max((m.get(i, j) - x).abs());
        }
    }
    d
}

fn column(v: &[f64]) -> Vec<Vec<f64>> {
    v.iter().map(|&x| vec![x]).collect()
}

#[test]
fn factors_match_straight_line_formulas() {
    for seed in 0..10 {
        let inst = Instance::random(seed, GridShape::new(3, 5), 4);
        for v in &Variant::ALL[1..] {
            let f = factors(&inst, *v);
            let (psi, e, lambda, u, s) =
                reference::factors(&inst.r, Some(&inst.boundary), &inst.params, *v);
            assert!(max_diff(&f.psi, &psi) < 1e-12, "{v} psi");
            assert!(max_diff(&f.second_embed, &e) < 1e-12, "{v} second");
            assert!(
                max_diff(&f.lambda_c, std::slice::from_ref(&lambda)) < 1e-12,
                "{v} lambda"
            );
            assert!(max_diff(&f.s_left, &column(&u)) < 1e-12, "{v} u");
            assert!(max_diff(&f.s_right, &column(&s)) < 1e-12, "{v} v");
        }
    }
}

#[test]
fn all_ones_boundary_reduces_to_channel_spatial() {
    for seed in 0..5 {
        let mut inst = Instance::random(seed, GridShape::new(4, 4), 3);
        inst.boundary = BoundaryMap::new(Matrix::ones(16, 1)).unwrap();
        inst.params.conv_u_weight = inst.params.conv_s_weight.clone();
        inst.params.conv_u_bias = inst.params.conv_s_bias.clone();
        inst.params.conv_v_weight = inst.params.conv_s_weight.clone();
        inst.params.conv_v_bias = inst.params.conv_s_bias.clone();
        let b = factors(&inst, Variant::Boundary);
        let cs = factors(&inst, Variant::ChannelSpatial);
        assert_eq!(b.psi, cs.psi);
        assert_eq!(b.second_embed, cs.second_embed);
        assert_eq!(b.lambda_c, cs.lambda_c);
        assert_eq!(b.s_left, cs.s_left);
        assert_eq!(b.s_right, cs.s_right);
        let z = &inst.z;
        assert_eq!(
            graph::laplacian_apply(&Adjacency::Factored(b), z).unwrap(),
            graph::laplacian_apply(&Adjacency::Factored(cs), z).unwrap()
        );
    }
}

#[test]
fn classic_one_by_two_hand_example() {
    let out = graph::classic_gcn_layer(
        &Matrix::column(vec![1.0, 0.0]),
        &Matrix::scalar(1.0),
        GridShape::new(1, 2),
    )
    .unwrap();
    assert!(out.max_abs_diff(&Matrix::column(vec![0.5, 0.5])).unwrap() < 1e-15);
}

#[test]
fn classic_matches_dense_normalised_grid() {
    let grid = GridShape::new(3, 3);
    let x = Matrix::from_fn(9, 2, |i, j| (i * 2 + j) as f64 * 0.1 - 0.4);
    let theta = Matrix::from_rows(&[[0.3, -0.2], [0.5, 0.7]]);
    let a = dense::dense_grid_adjacency(grid).unwrap();
    let g = dense_degree_laplacian_without_clamp(&a);
    let want = dense::dense_product(&dense::dense_product(&g, &x).unwrap(), &theta).unwrap();
    let got = graph::classic_gcn_layer(&x, &theta, grid).unwrap();
    assert!(got.max_abs_diff(&want).unwrap() < 1e-14);
}

/// `D^{-1/2}·A·D^{-1/2}` entry by entry.
fn dense_degree_laplacian_without_clamp(a: &Matrix) -> Matrix {
    let n = a.rows();
    let d: Vec<f64> = (0..n).map(|i| (0..n).map(|j| a.get(i, j)).sum()).collect();
    Matrix::from_fn(n, n, |i, j| a.get(i, j) / (d[i] * d[j]).sqrt())
}

#[test]
fn residual_layer_with_zero_conv_weights_is_identity() {
    for v in Variant::ALL {
        let mut inst = Instance::random(9, GridShape::new(4, 4), 4);
        inst.params.w_g = Matrix::zeros(4, 4);
        let out = graph::bigconv_layer(&inst.r, Some(&inst.boundary), &inst.params, v).unwrap();
        assert_eq!(out.map(), inst.r.map(), "{v}");
    }
}

#[test]
fn layer_gradients_match_finite_differences() {
    let opts = GradCheckOptions::default();
    for v in Variant::ALL {
        for seed in 0..10 {
            let inst = Instance::random(seed, GridShape::new(4, 4), 4);
            let rep = verify::layer_grad_check(&inst, v, opts).unwrap();
            assert!(rep.pass(), "{v} seed {seed}: {:?}", rep.failures);
            assert!(rep.checked > 0);
        }
    }
}

/// The golden instance: N = 3 on a 1 × 3 grid, two channels, boundary variant.
fn golden_instance() -> Instance {
    Instance::random(2024, GridShape::new(1, 3), 2)
}

fn rows(m: &Matrix) -> Vec<Vec<f64>> {
    (0..m.rows()).map(|i| m.row_slice(i).to_vec()).collect()
}

#[test]
fn golden_dense_instance_is_stable() {
    let inst = golden_instance();
    let a = dense::dense_adjacency(
        &inst.r,
        Some(&inst.boundary),
        &inst.params,
        Variant::Boundary,
    )
    .unwrap();
    let g = dense::dense_degree_laplacian(&a, inst.params.degree_epsilon).unwrap();
    let doc = vec![
        rows(&g.adjacency),
        column(&g.raw_degree),
        rows(&g.laplacian),
    ];
    let text = serde_json::to_string_pretty(&doc).unwrap() + "\n";
    let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden/dense_n3.json");
    if std::env::var_os("BIGC_BLESS").is_some() {
        std::fs::write(&path, &text).unwrap();
    }
    let stored = std::fs::read_to_string(&path).expect("golden file; regenerate with BIGC_BLESS=1");
    assert_eq!(stored, text);
    // the factored path reproduces the frozen numbers
    let frozen: Vec<Vec<Vec<f64>>> = serde_json::from_str(&stored).unwrap();
    let fac = inst.factored(Variant::Boundary).unwrap();
    assert!(max_diff(&fac.degree, &frozen[1]) < 1e-12);
}

#[test]
fn zero_features_degenerate_to_clamped_identity() {
    let grid = GridShape::new(2, 2);
    let r = VertexEmbeddings::new(Matrix::zeros(4, 3), grid).unwrap();
    let p = BiGConvParams::zeros(3);
    let adj = graph::build_adjacency_factors(&r, None, &p, Variant::ChannelSpatial).unwrap();
    let d = graph::degree(&adj).unwrap();
    assert_eq!(d.clamp_count, 4);
    let x = Matrix::from_fn(4, 3, |i, j| (i + j) as f64);
    assert_eq!(graph::laplacian_apply(&adj, &x).unwrap(), x);
}
