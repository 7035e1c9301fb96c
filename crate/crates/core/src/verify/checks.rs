//! Gradient checks of the graph layer, the GRM and the whole pipeline.

use super::gradcheck::{
    grad_check, GradCheckOptions, GradCheckReport, ScalarFunction, TapeFunction,
};
use super::{make_positive, Instance};
use crate::error::Result;
use crate::graph::{traced, BiGConvParams, Variant};
use crate::grm::{traced_grm_forward, GrmConfig, GrmParams};
use crate::params::{flatten, rebuild};
use crate::pipeline::{loss_and_gradient, Example, ModelParams, PipelineConfig};
use crate::rng;
use crate::tensor::{GridShape, Matrix, Tape, Var};

/// `Σ out ⊙ probe`, so every output entry gets its own weight.
fn probe_sum(t: &mut Tape, out: Var, probe: &Matrix) -> Result<Var> {
    let p = t.constant(probe.clone());
    let weighted = t.mul(out, p)?;
    t.sum(weighted)
}

/// Checks the layer gradient with respect to the features and every layer
/// parameter on `inst`.
pub fn layer_grad_check(
    inst: &Instance,
    variant: Variant,
    opts: GradCheckOptions,
) -> Result<GradCheckReport> {
    let grid = inst.r.grid();
    let template = inst.params.clone();
    let boundary = inst.boundary.map().clone();
    let z = inst.z.clone();
    let mut f = TapeFunction(move |t: &mut Tape, v: &[Var]| {
        let mut it = v[1..].iter();
        let p: BiGConvParams<Var> = template.map(&mut |_| *it.next().expect("one var per leaf"));
        let b = t.constant(boundary.clone());
        let out = traced::bigconv_layer(t, v[0], grid, Some(b), &p, variant)?;
        probe_sum(t, out, &z)
    });
    let mut inputs = vec![inst.r.map().clone()];
    inputs.extend(flatten(&inst.params));
    grad_check(&mut f, &inputs, opts)
}

/// An instance plus GRM parameters drawn with `seed + 1`. With `positive`
/// the features and every layer's embeddings are made non-negative;
/// residual links then keep each layer's input positive and no degree is
/// clamped.
pub fn grm_instance(
    seed: u64,
    grid: GridShape,
    channels: usize,
    cfg: GrmConfig,
    positive: bool,
) -> Result<(Instance, GrmParams)> {
    let inst = if positive {
        Instance::positive(seed, grid, channels)
    } else {
        Instance::random(seed, grid, channels)
    };
    let mut g = rng::seeded(seed.wrapping_add(1));
    let mut params = cfg.init(channels, &mut g)?;
    if positive {
        for layer in &mut params.layers {
            make_positive(layer, &mut g);
        }
    }
    Ok((inst, params))
}

/// Checks a GRM chain end to end with respect to the features and every
/// parameter in `template`.
pub fn grm_grad_check(
    inst: &Instance,
    template: &GrmParams,
    variant: Variant,
    opts: GradCheckOptions,
) -> Result<GradCheckReport> {
    let grid = inst.r.grid();
    let boundary = inst.boundary.map().clone();
    let z = inst.z.clone();
    let tmpl = template.clone();
    let mut f = TapeFunction(move |t: &mut Tape, v: &[Var]| {
        let mut it = v[1..].iter();
        let p: GrmParams<Var> = tmpl.map(&mut |_| *it.next().expect("one var per leaf"));
        let b = t.constant(boundary.clone());
        let out = traced_grm_forward(t, v[0], grid, Some(b), &p, variant)?;
        probe_sum(t, out, &z)
    });
    let mut inputs = vec![inst.r.map().clone()];
    inputs.extend(flatten(template));
    grad_check(&mut f, &inputs, opts)
}

struct PipelineLoss<'a> {
    cfg: &'a PipelineConfig,
    template: &'a ModelParams,
    batch: &'a [Example],
}

impl ScalarFunction for PipelineLoss<'_> {
    fn value(&mut self, x: &[Matrix]) -> Result<f64> {
        let p = rebuild(self.template, x);
        Ok(loss_and_gradient(self.cfg, &p, self.batch)?.0.total)
    }

    fn gradient(&mut self, x: &[Matrix]) -> Result<Vec<Matrix>> {
        let p = rebuild(self.template, x);
        Ok(loss_and_gradient(self.cfg, &p, self.batch)?.1)
    }
}

/// Checks the gradient of the batch loss with respect to every model
/// parameter.
pub fn pipeline_grad_check(
    cfg: &PipelineConfig,
    params: &ModelParams,
    batch: &[Example],
    opts: GradCheckOptions,
) -> Result<GradCheckReport> {
    let mut f = PipelineLoss {
        cfg,
        template: params,
        batch,
    };
    grad_check(&mut f, &flatten(params), opts)
}
