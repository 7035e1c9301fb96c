//! Graph reasoning module: a chain of graph layers joined by residual or
//! GRU links.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{self, traced, BiGConvParams, BoundaryMap, Variant, VertexEmbeddings};
use crate::params::{bind_constant, param_struct, Parameters};
use crate::rng::{self, SeededRng};
use crate::tensor::{GridShape, Matrix, Tape, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Connection {
    Residual,
    Gru,
}

impl Connection {
    pub fn as_str(self) -> &'static str {
        match self {
            Connection::Residual => "residual",
            Connection::Gru => "gru",
        }
    }
}

impl fmt::Display for Connection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Connection {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "residual" => Ok(Connection::Residual),
            "gru" => Ok(Connection::Gru),
            other => Err(Error::Invalid(format!(
                "unknown connection {other:?} (expected residual or gru)"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GrmConfig {
    pub n_layers: usize,
    pub connection: Connection,
    pub variant: Variant,
}

impl Default for GrmConfig {
    fn default() -> Self {
        Self {
            n_layers: 3,
            connection: Connection::Gru,
            variant: Variant::Boundary,
        }
    }
}

impl GrmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_layers == 0 {
            return Err(Error::Invalid("GRM needs at least one layer".into()));
        }
        Ok(())
    }

    pub fn init(&self, channels: usize, rng: &mut SeededRng) -> Result<GrmParams> {
        self.validate()?;
        let layers = (0..self.n_layers)
            .map(|_| BiGConvParams::init(channels, rng))
            .collect();
        let gru = match self.connection {
            Connection::Gru => Some(GruParams::init(channels, rng)),
            Connection::Residual => None,
        };
        Ok(GrmParams { layers, gru })
    }
}

param_struct! {
    /// Gate weights of the GRU link, shared by every step of the chain.
    pub struct GruParams {
        wz, uz, bz,
        ws, us, bs,
        wh, uh, bh,
    }
}

impl GruParams {
    pub fn init(c: usize, rng: &mut SeededRng) -> Self {
        Self {
            wz: rng::fan_in(rng, c, c),
            uz: rng::fan_in(rng, c, c),
            bz: Matrix::zeros(1, c),
            ws: rng::fan_in(rng, c, c),
            us: rng::fan_in(rng, c, c),
            bs: Matrix::zeros(1, c),
            wh: rng::fan_in(rng, c, c),
            uh: rng::fan_in(rng, c, c),
            bh: Matrix::zeros(1, c),
        }
    }

    pub fn random(c: usize, rng: &mut SeededRng) -> Self {
        let mut u = |r, cc| rng::uniform(rng, r, cc, -1.0, 1.0);
        Self {
            wz: u(c, c),
            uz: u(c, c),
            bz: u(1, c),
            ws: u(c, c),
            us: u(c, c),
            bs: u(1, c),
            wh: u(c, c),
            uh: u(c, c),
            bh: u(1, c),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GrmParams<T = Matrix> {
    pub layers: Vec<BiGConvParams<T>>,
    /// Present exactly when the chain uses GRU links.
    pub gru: Option<GruParams<T>>,
}

impl<T> GrmParams<T> {
    pub fn map<U>(&self, f: &mut dyn FnMut(&T) -> U) -> GrmParams<U> {
        GrmParams {
            layers: self.layers.iter().map(|l| l.map(f)).collect(),
            gru: self.gru.as_ref().map(|g| g.map(f)),
        }
    }

    pub fn connection(&self) -> Connection {
        if self.gru.is_some() {
            Connection::Gru
        } else {
            Connection::Residual
        }
    }
}

impl<T> Parameters<T> for GrmParams<T> {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a T)) {
        self.layers.visit(&format!("{prefix}layers."), f);
        self.gru.visit(&format!("{prefix}gru."), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut T)) {
        self.layers.visit_mut(&format!("{prefix}layers."), f);
        self.gru.visit_mut(&format!("{prefix}gru."), f);
    }
}

impl GrmParams {
    pub fn channels(&self) -> usize {
        self.layers.first().map_or(0, |l| l.channels())
    }

    /// Every layer and gate shaped for the same channel count.
    pub fn validate(&self) -> Result<()> {
        let c = self.channels();
        if self.layers.is_empty() {
            return Err(Error::Invalid("GRM needs at least one layer".into()));
        }
        for (i, l) in self.layers.iter().enumerate() {
            if l.channels() != c || l.w_g.shape() != (c, c) {
                return Err(Error::Invalid(format!(
                    "GRM layer {i} has {} channels, layer 0 has {c}",
                    l.channels()
                )));
            }
        }
        if let Some(g) = &self.gru {
            let mut bad = None;
            g.visit("", &mut |name, m| {
                let want = if name.starts_with('b') {
                    (1, c)
                } else {
                    (c, c)
                };
                if m.shape() != want && bad.is_none() {
                    bad = Some(name);
                }
            });
            if let Some(name) = bad {
                return Err(Error::Invalid(format!(
                    "GRU gate {name} is not sized for {c} channels"
                )));
            }
        }
        Ok(())
    }
}

/// `(1 − z)⊙h + z⊙ĥ` with update gate `z`, reset gate `s` and candidate
/// `ĥ = tanh(x·Wh + (s⊙h)·Uh + bh)`, applied per vertex.
pub fn traced_gru_cell(t: &mut Tape, h: Var, x: Var, g: &GruParams<Var>) -> Result<Var> {
    if t.shape(h) != t.shape(x) {
        return Err(Error::shape("gru_cell", t.shape(h), t.shape(x)));
    }
    let gate = |t: &mut Tape, w: Var, u: Var, b: Var, hh: Var| -> Result<Var> {
        let xw = t.linear_map(x, w, b)?;
        let hu = t.matmul(hh, u)?;
        t.add(xw, hu)
    };
    let zp = gate(t, g.wz, g.uz, g.bz, h)?;
    let z = t.sigmoid(zp)?;
    let sp = gate(t, g.ws, g.us, g.bs, h)?;
    let s = t.sigmoid(sp)?;
    let sh = t.mul(s, h)?;
    let cp = gate(t, g.wh, g.uh, g.bh, sh)?;
    let cand = t.tanh(cp)?;
    // h + z⊙(ĥ − h)
    let diff = t.sub(cand, h)?;
    let step = t.mul(z, diff)?;
    t.add(h, step)
}

pub fn traced_grm_forward(
    t: &mut Tape,
    r: Var,
    grid: GridShape,
    boundary: Option<Var>,
    p: &GrmParams<Var>,
    variant: Variant,
) -> Result<Var> {
    if p.layers.is_empty() {
        return Err(Error::Invalid("GRM needs at least one layer".into()));
    }
    let mut h = r;
    for layer in &p.layers {
        let x = traced::bigconv_layer(t, h, grid, boundary, layer, variant)?;
        h = match &p.gru {
            Some(g) => traced_gru_cell(t, h, x, g)?,
            None => x,
        };
    }
    Ok(h)
}

pub fn gru_cell(h: &Matrix, x: &Matrix, gates: &GruParams) -> Result<Matrix> {
    let mut t = Tape::new();
    let hv = t.constant(h.clone());
    let xv = t.constant(x.clone());
    let g = gates.map(&mut bind_constant(&mut t));
    let out = traced_gru_cell(&mut t, hv, xv, &g)?;
    Ok(t.value(out).clone())
}

pub fn grm_forward(
    r: &VertexEmbeddings,
    b: Option<&BoundaryMap>,
    p: &GrmParams,
    variant: Variant,
) -> Result<VertexEmbeddings> {
    p.validate()?;
    if let Some(b) = b {
        if b.vertices() != r.vertices() {
            return Err(Error::shape(
                "grm_forward",
                r.map().shape(),
                b.map().shape(),
            ));
        }
    }
    let mut t = Tape::new();
    let rv = t.constant(r.map().clone());
    let bv = b.map(|b| t.constant(b.map().clone()));
    let pv = p.map(&mut bind_constant(&mut t));
    let out = traced_grm_forward(&mut t, rv, r.grid(), bv, &pv, variant)?;
    VertexEmbeddings::new(t.value(out).clone(), r.grid())
}

/// One chain step without the tape, for tests that unroll the chain by hand.
pub fn grm_step(
    h: &VertexEmbeddings,
    b: Option<&BoundaryMap>,
    layer: &BiGConvParams,
    gru: Option<&GruParams>,
    variant: Variant,
) -> Result<VertexEmbeddings> {
    let x = graph::bigconv_layer(h, b, layer, variant)?;
    match gru {
        Some(g) => VertexEmbeddings::new(gru_cell(h.map(), x.map(), g)?, h.grid()),
        None => Ok(x),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn logistic(x: f64) -> f64 {
        1.0 / (1.0 + (-x).exp())
    }

    /// Per-vertex GRU written with scalar loops.
    fn gru_reference(h: &Matrix, x: &Matrix, g: &GruParams) -> Matrix {
        let (n, c) = h.shape();
        let lin = |w: &Matrix, u: &Matrix, b: &Matrix, xi: &[f64], hi: &[f64], j: usize| {
            let mut s = b.get(0, j);
            for k in 0..c {
                s += xi[k] * w.get(k, j) + hi[k] * u.get(k, j);
            }
            s
        };
        let mut out = Matrix::zeros(n, c);
        for i in 0..n {
            let xi = x.row_slice(i);
            let hi = h.row_slice(i);
            let s: Vec<f64> = (0..c)
                .map(|j| logistic(lin(&g.ws, &g.us, &g.bs, xi, hi, j)))
                .collect();
            let sh: Vec<f64> = (0..c).map(|k| s[k] * hi[k]).collect();
            for j in 0..c {
                let z = logistic(lin(&g.wz, &g.uz, &g.bz, xi, hi, j));
                let cand = lin(&g.wh, &g.uh, &g.bh, xi, &sh, j).tanh();
                out.set(i, j, (1.0 - z) * hi[j] + z * cand);
            }
        }
        out
    }

    fn embeddings(seed: u64, grid: GridShape, c: usize) -> (VertexEmbeddings, BoundaryMap) {
        let mut g = rng::seeded(seed);
        let r = rng::uniform(&mut g, grid.len(), c, -1.0, 1.0);
        let b = rng::uniform(&mut g, grid.len(), 1, 0.0, 1.0);
        (
            VertexEmbeddings::new(r, grid).unwrap(),
            BoundaryMap::new(b).unwrap(),
        )
    }

    #[test]
    fn gru_matches_scalar_loops() {
        let mut g = rng::seeded(11);
        let gates = GruParams::random(3, &mut g);
        let h = rng::uniform(&mut g, 5, 3, -1.0, 1.0);
        let x = rng::uniform(&mut g, 5, 3, -1.0, 1.0);
        let got = gru_cell(&h, &x, &gates).unwrap();
        assert!(got.max_abs_diff(&gru_reference(&h, &x, &gates)).unwrap() <= 1e-12);
    }

    #[test]
    fn gate_limits() {
        let mut g = rng::seeded(2);
        let mut gates = GruParams::random(2, &mut g);
        let h = rng::uniform(&mut g, 4, 2, -1.0, 1.0);
        let x = rng::uniform(&mut g, 4, 2, -1.0, 1.0);
        gates.bz = Matrix::filled(1, 2, -60.0);
        let out = gru_cell(&h, &x, &gates).unwrap();
        assert!(out.max_abs_diff(&h).unwrap() < 1e-20);
        gates.bz = Matrix::filled(1, 2, 60.0);
        let out = gru_cell(&h, &x, &gates).unwrap();
        let mut cand_gates = gates.clone();
        // z = 1 exactly reduces the reference to ĥ
        cand_gates.bz = Matrix::filled(1, 2, 1e6);
        let cand = gru_reference(&h, &x, &cand_gates);
        assert!(out.max_abs_diff(&cand).unwrap() < 1e-15);
    }

    #[test]
    fn gru_rejects_mismatched_shapes() {
        let gates = GruParams::init(2, &mut rng::seeded(0));
        assert!(gru_cell(&Matrix::zeros(3, 2), &Matrix::zeros(4, 2), &gates).is_err());
    }

    #[test]
    fn single_residual_layer_is_one_call() {
        let grid = GridShape::new(3, 3);
        let (r, b) = embeddings(4, grid, 3);
        let cfg = GrmConfig {
            n_layers: 1,
            connection: Connection::Residual,
            variant: Variant::Boundary,
        };
        let mut g = rng::seeded(5);
        let mut p = cfg.init(3, &mut g).unwrap();
        p.layers[0] = BiGConvParams::random(3, &mut g);
        let chain = grm_forward(&r, Some(&b), &p, cfg.variant).unwrap();
        let once = graph::bigconv_layer(&r, Some(&b), &p.layers[0], cfg.variant).unwrap();
        assert_eq!(chain, once);
    }

    #[test]
    fn three_step_gru_matches_unrolled() {
        let grid = GridShape::new(4, 4);
        let (r, b) = embeddings(7, grid, 4);
        let mut g = rng::seeded(7);
        let p = GrmParams {
            layers: (0..3).map(|_| BiGConvParams::random(4, &mut g)).collect(),
            gru: Some(GruParams::random(4, &mut g)),
        };
        for v in Variant::ALL {
            let chain = grm_forward(&r, Some(&b), &p, v).unwrap();
            let gates = p.gru.as_ref().unwrap();
            let h1 = grm_step(&r, Some(&b), &p.layers[0], Some(gates), v).unwrap();
            let h2 = grm_step(&h1, Some(&b), &p.layers[1], Some(gates), v).unwrap();
            let h3 = grm_step(&h2, Some(&b), &p.layers[2], Some(gates), v).unwrap();
            assert_eq!(chain, h3, "{v}");
        }
    }

    #[test]
    fn zero_output_weights_residual_chain_is_identity() {
        let grid = GridShape::new(3, 4);
        let (r, b) = embeddings(9, grid, 2);
        let mut g = rng::seeded(9);
        for n_layers in [1, 2, 5] {
            let mut p = GrmParams {
                layers: (0..n_layers)
                    .map(|_| BiGConvParams::random(2, &mut g))
                    .collect(),
                gru: None,
            };
            for l in &mut p.layers {
                l.w_g = Matrix::zeros(2, 2);
            }
            for v in Variant::ALL {
                let out = grm_forward(&r, Some(&b), &p, v).unwrap();
                assert_eq!(out.map(), r.map());
            }
        }
    }

    #[test]
    fn channel_mismatch_rejected() {
        let mut g = rng::seeded(1);
        let p = GrmParams {
            layers: vec![
                BiGConvParams::init(2, &mut g),
                BiGConvParams::init(3, &mut g),
            ],
            gru: None,
        };
        assert!(p.validate().is_err());
        let p = GrmParams {
            layers: vec![BiGConvParams::init(2, &mut g)],
            gru: Some(GruParams::init(3, &mut g)),
        };
        assert!(p.validate().is_err());
    }

    #[test]
    fn parameter_names_are_ordered() {
        let cfg = GrmConfig {
            n_layers: 2,
            ..Default::default()
        };
        let p = cfg.init(2, &mut rng::seeded(0)).unwrap();
        let names: Vec<String> = p.named().into_iter().map(|(n, _)| n).collect();
        assert_eq!(names[0], "layers.0.w_psi");
        assert_eq!(names[15], "layers.1.w_psi");
        assert_eq!(names.last().unwrap(), "gru.bh");
        assert_eq!(p.count(), 2 * 15 + 9);
    }

    #[test]
    fn connection_parses() {
        assert_eq!("gru".parse::<Connection>().unwrap(), Connection::Gru);
        assert!("lstm".parse::<Connection>().is_err());
        assert!(GrmConfig {
            n_layers: 0,
            ..Default::default()
        }
        .validate()
        .is_err());
    }
}
