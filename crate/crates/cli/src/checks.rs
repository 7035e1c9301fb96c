use std::time::Instant;

use anyhow::Result;
use bigconv_core::graph::{self, Variant};
use bigconv_core::grm::{grm_forward, Connection, GrmConfig};
use bigconv_core::pipeline::{Example, ModelParams, PipelineConfig};
use bigconv_core::synth::{generate_split, Difficulty};
use bigconv_core::verify::{
    self, GradCheckOptions, GradCheckReport, Instance, EQUIVALENCE_TOLERANCE, NULL_SPACE_TOLERANCE,
};
use bigconv_core::{rng, GridShape, Matrix};
use serde::Serialize;

#[derive(Clone, Copy, Debug, Serialize)]
pub struct VerifyOptions {
    pub equivalence: bool,
    pub null_space: bool,
    pub gradients: bool,
    pub residual: bool,
    pub seeds: u64,
    /// Overrides the per-suite gradient tolerance when set.
    pub grad_tolerance: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct SuiteResult {
    pub name: &'static str,
    pub pass: bool,
    pub cases: usize,
    pub max_error: f64,
    pub tolerance: f64,
    pub detail: String,
    pub seconds: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct VerifyReport {
    pub pass: bool,
    pub options: VerifyOptions,
    pub suites: Vec<SuiteResult>,
}

fn square(n: usize) -> GridShape {
    let side = (n as f64).sqrt() as usize;
    GridShape::new(side, n / side)
}

fn equivalence(seeds: u64) -> Result<SuiteResult> {
    let (mut cases, mut failing, mut worst) = (0, 0, 0.0f64);
    for n in [4, 16, 64] {
        for seed in 0..seeds {
            let inst = Instance::random(seed, square(n), 4);
            for v in Variant::ALL {
                let rep = inst.equivalence(v)?;
                worst = worst.max(rep.max_error());
                failing += usize::from(!rep.pass);
                cases += 1;
            }
        }
    }
    Ok(SuiteResult {
        name: "equivalence",
        pass: failing == 0,
        cases,
        max_error: worst,
        tolerance: EQUIVALENCE_TOLERANCE,
        detail: format!("factored vs dense, N in {{4, 16, 64}}, {failing} failing"),
        seconds: 0.0,
    })
}

fn null_space(seeds: u64) -> Result<SuiteResult> {
    let (mut cases, mut pass, mut worst) = (0, true, 0.0f64);
    for seed in 0..seeds {
        let inst = Instance::positive(seed, GridShape::new(8, 8), 4);
        for v in Variant::ALL {
            let rep = inst.null_space(v)?;
            pass &= rep.pass();
            worst = worst.max(rep.ratio);
            cases += 1;
        }
    }
    Ok(SuiteResult {
        name: "null_space",
        pass,
        cases,
        max_error: worst,
        tolerance: NULL_SPACE_TOLERANCE,
        detail: "clamp-free instances, L·d^(1/2) relative to d^(1/2)".into(),
        seconds: 0.0,
    })
}

#[derive(Default)]
struct GradTally {
    cases: usize,
    checked: usize,
    kinks: usize,
    failures: usize,
    worst: f64,
}

impl GradTally {
    fn add(&mut self, rep: &GradCheckReport) {
        self.cases += 1;
        self.checked += rep.checked;
        self.kinks += rep.kinks.len();
        self.failures += rep.failures.len();
        self.worst = self.worst.max(rep.max_relative_error);
    }

    fn finish(self, name: &'static str, tolerance: f64) -> SuiteResult {
        // Too many skipped coordinates would leave the check toothless.
        let pass = self.failures == 0 && self.kinks * 10 <= self.checked + self.kinks;
        SuiteResult {
            name,
            pass,
            cases: self.cases,
            max_error: self.worst,
            tolerance,
            detail: format!(
                "{} coordinates checked, {} kinks skipped, {} failing",
                self.checked, self.kinks, self.failures
            ),
            seconds: 0.0,
        }
    }
}

fn layer_gradients(seeds: u64, tolerance: f64) -> Result<SuiteResult> {
    let opts = GradCheckOptions {
        tolerance,
        ..Default::default()
    };
    let mut tally = GradTally::default();
    for seed in 0..seeds {
        let inst = Instance::random(seed, GridShape::new(4, 4), 4);
        for v in Variant::ALL {
            tally.add(&verify::layer_grad_check(&inst, v, opts)?);
        }
    }
    Ok(tally.finish("layer_gradients", tolerance))
}

fn grm_tally(
    seed: u64,
    cfg: GrmConfig,
    positive: bool,
    opts: GradCheckOptions,
    t: &mut GradTally,
) -> Result<()> {
    let (inst, params) = verify::grm_instance(seed, GridShape::new(4, 4), 4, cfg, positive)?;
    t.add(&verify::grm_grad_check(&inst, &params, cfg.variant, opts)?);
    Ok(())
}

fn grm_gradients(seeds: u64, tolerance: f64) -> Result<SuiteResult> {
    let opts = GradCheckOptions {
        tolerance,
        ..Default::default()
    };
    let gru = GrmConfig {
        n_layers: 2,
        connection: Connection::Gru,
        variant: Variant::Boundary,
    };
    let mut tally = GradTally::default();
    for seed in 0..seeds {
        grm_tally(seed, gru, false, opts, &mut tally)?;
    }
    Ok(tally.finish("grm_gradients", tolerance))
}

/// Residual chains on clamp-free instances, every variant.
fn residual_chain_gradients(seeds: u64, tolerance: f64) -> Result<SuiteResult> {
    let opts = GradCheckOptions {
        tolerance,
        ..Default::default()
    };
    let mut tally = GradTally::default();
    for seed in 0..seeds {
        for variant in Variant::ALL {
            let cfg = GrmConfig {
                n_layers: 2,
                connection: Connection::Residual,
                variant,
            };
            grm_tally(seed, cfg, true, opts, &mut tally)?;
        }
    }
    Ok(tally.finish("residual_chain_gradients", tolerance))
}

fn pipeline_gradients(seeds: u64, tolerance: f64) -> Result<SuiteResult> {
    let cfg = PipelineConfig::tiny();
    let opts = GradCheckOptions {
        tolerance,
        ..Default::default()
    };
    let mut tally = GradTally::default();
    for seed in 0..seeds {
        let params = ModelParams::init(&cfg, seed)?;
        let data = generate_split(seed, 4, cfg.image_size, Difficulty::Easy)?;
        let batch = vec![Example::from_scene(&cfg, &data.train[0])?];
        tally.add(&verify::pipeline_grad_check(&cfg, &params, &batch, opts)?);
    }
    Ok(tally.finish("pipeline_gradients", tolerance))
}

/// `W_G = 0` must turn a layer, and a residual chain, into the identity.
fn residual_identity(seeds: u64) -> Result<SuiteResult> {
    let (mut cases, mut pass) = (0, true);
    for seed in 0..seeds {
        for v in Variant::ALL {
            let mut inst = Instance::random(seed, GridShape::new(4, 4), 4);
            inst.params.w_g = Matrix::zeros(4, 4);
            let out = graph::bigconv_layer(&inst.r, Some(&inst.boundary), &inst.params, v)?;
            pass &= out.map() == inst.r.map();
            let grm = GrmConfig {
                n_layers: 3,
                connection: Connection::Residual,
                variant: v,
            };
            let mut p = grm.init(4, &mut rng::seeded(seed + 1))?;
            for layer in &mut p.layers {
                layer.w_g = Matrix::zeros(4, 4);
            }
            let out = grm_forward(&inst.r, Some(&inst.boundary), &p, v)?;
            pass &= out.map() == inst.r.map();
            cases += 2;
        }
    }
    Ok(SuiteResult {
        name: "residual_identity",
        pass,
        cases,
        max_error: 0.0,
        tolerance: 0.0,
        detail: "layer and 3-layer residual chain, bitwise".into(),
        seconds: 0.0,
    })
}

fn timed(f: impl FnOnce() -> Result<SuiteResult>) -> Result<SuiteResult> {
    let start = Instant::now();
    let mut r = f()?;
    r.seconds = start.elapsed().as_secs_f64();
    Ok(r)
}

pub fn run_verify(opts: VerifyOptions) -> Result<VerifyReport> {
    let seeds = opts.seeds;
    let mut suites = Vec::new();
    if opts.equivalence {
        suites.push(timed(|| equivalence(seeds))?);
    }
    if opts.null_space {
        suites.push(timed(|| null_space(seeds))?);
    }
    if opts.gradients {
        let tol = |default: f64| opts.grad_tolerance.unwrap_or(default);
        suites.push(timed(|| layer_gradients(seeds, tol(1e-4)))?);
        suites.push(timed(|| grm_gradients(seeds, tol(1e-4)))?);
        suites.push(timed(|| residual_chain_gradients(seeds, tol(1e-4)))?);
        suites.push(timed(|| pipeline_gradients(seeds, tol(1e-3)))?);
    }
    if opts.residual {
        suites.push(timed(|| residual_identity(seeds))?);
    }
    Ok(VerifyReport {
        pass: suites.iter().all(|s| s.pass),
        options: opts,
        suites,
    })
}
