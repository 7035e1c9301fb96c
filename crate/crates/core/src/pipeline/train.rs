use rand::seq::SliceRandom;
use serde::Serialize;

use super::config::PipelineConfig;
use super::loss::{traced_total_loss, LossVars};
use super::model::{image_column, traced_forward, ModelParams};
use crate::error::{Error, Result};
use crate::params::{bind_leaf, Parameters};
use crate::rng;
use crate::synth::SceneSample;
use crate::tensor::{ops, Matrix, Tape, Var};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPSILON: f64 = 1e-8;

/// One training image with its targets in the layouts the loss expects.
#[derive(Clone, Debug, PartialEq)]
pub struct Example {
    /// `N × 1` pixels at image resolution.
    pub image: Matrix,
    /// `N × 1` foreground indicator at image resolution.
    pub region: Matrix,
    /// Boundary indicator max-pooled onto the boundary grid.
    pub boundary: Matrix,
}

impl Example {
    pub fn from_scene(cfg: &PipelineConfig, s: &SceneSample) -> Result<Self> {
        let grid = cfg.image_grid();
        if s.grid() != grid || s.image.shape() != (grid.height, grid.width) {
            return Err(Error::Invalid(format!(
                "scene is {}x{}, configuration expects {}x{}",
                s.image.rows(),
                s.image.cols(),
                grid.height,
                grid.width
            )));
        }
        let factor = cfg.image_size / cfg.boundary_grid;
        Ok(Self {
            image: image_column(&s.image),
            region: s.region.to_column(),
            boundary: ops::block_max_pool(&s.boundary.to_column(), grid, factor)?,
        })
    }
}

/// Parameters, Adam moments and the step counter.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelState {
    pub params: ModelParams,
    pub first_moment: ModelParams,
    pub second_moment: ModelParams,
    pub iteration: usize,
}

impl ModelState {
    pub fn new(params: ModelParams) -> Self {
        let zero = params.map(&mut |m: &Matrix| Matrix::zeros(m.rows(), m.cols()));
        Self {
            first_moment: zero.clone(),
            second_moment: zero,
            params,
            iteration: 0,
        }
    }

    pub fn init(cfg: &PipelineConfig) -> Result<Self> {
        Ok(Self::new(ModelParams::init(cfg, cfg.seed)?))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct StepLoss {
    pub total: f64,
    pub region: f64,
    pub boundary: f64,
}

/// Mean loss over `batch`, recorded on `t`.
pub fn traced_batch_loss(
    t: &mut Tape,
    cfg: &PipelineConfig,
    p: &ModelParams<Var>,
    batch: &[Example],
) -> Result<LossVars> {
    if batch.is_empty() {
        return Err(Error::Empty { op: "batch_loss" });
    }
    let mut acc: Option<LossVars> = None;
    for ex in batch {
        let x = t.constant(ex.image.clone());
        let f = traced_forward(t, cfg, p, x)?;
        let up = t.resample(f.logits, cfg.region_shape(), cfg.image_grid())?;
        let l = traced_total_loss(t, up, &ex.region, f.boundary, &ex.boundary, cfg.alpha)?;
        acc = Some(match acc {
            None => l,
            Some(a) => LossVars {
                total: t.add(a.total, l.total)?,
                region: t.add(a.region, l.region)?,
                boundary: t.add(a.boundary, l.boundary)?,
            },
        });
    }
    let a = acc.expect("non-empty batch");
    let k = 1.0 / batch.len() as f64;
    let total = t.scale(a.total, k)?;
    Ok(LossVars {
        total: t.label(total, "total loss"),
        region: t.scale(a.region, k)?,
        boundary: t.scale(a.boundary, k)?,
    })
}

/// Loss and gradient (in parameter visiting order) for `batch`.
pub fn loss_and_gradient(
    cfg: &PipelineConfig,
    params: &ModelParams,
    batch: &[Example],
) -> Result<(StepLoss, Vec<Matrix>)> {
    let mut t = Tape::new();
    let pv = params.map(&mut bind_leaf(&mut t));
    let l = traced_batch_loss(&mut t, cfg, &pv, batch)?;
    let loss = StepLoss {
        total: t.value(l.total).get(0, 0),
        region: t.value(l.region).get(0, 0),
        boundary: t.value(l.boundary).get(0, 0),
    };
    if !loss.total.is_finite() {
        return Err(Error::NonFinite {
            tensor: t.first_non_finite().unwrap_or_else(|| "total loss".into()),
        });
    }
    let grads = t.backward(l.total)?;
    let mut out = Vec::new();
    pv.visit("", &mut |_, v| {
        out.push(grads.get_or_zeros(*v, t.shape(*v)))
    });
    Ok((loss, out))
}

/// One forward/backward pass and Adam update.
pub fn train_step(
    state: &mut ModelState,
    cfg: &PipelineConfig,
    batch: &[Example],
) -> Result<StepLoss> {
    let (loss, grads) = loss_and_gradient(cfg, &state.params, batch)?;
    let lr = cfg.learning_rate_at(state.iteration);
    let step = (state.iteration + 1) as i32;
    let c1 = 1.0 - ADAM_BETA1.powi(step);
    let c2 = 1.0 - ADAM_BETA2.powi(step);
    let mut m = Vec::new();
    state
        .first_moment
        .visit_mut("", &mut |_, x| m.push(std::mem::take(x)));
    let mut v = Vec::new();
    state
        .second_moment
        .visit_mut("", &mut |_, x| v.push(std::mem::take(x)));
    let mut k = 0;
    state.params.visit_mut("", &mut |_, p| {
        let g = grads[k].data();
        let (mk, vk) = (m[k].data_mut(), v[k].data_mut());
        for (i, w) in p.data_mut().iter_mut().enumerate() {
            mk[i] = ADAM_BETA1 * mk[i] + (1.0 - ADAM_BETA1) * g[i];
            vk[i] = ADAM_BETA2 * vk[i] + (1.0 - ADAM_BETA2) * g[i] * g[i];
            let mhat = mk[i] / c1;
            let vhat = vk[i] / c2;
            *w -= lr * mhat / (vhat.sqrt() + ADAM_EPSILON);
        }
        k += 1;
    });
    let mut m = m.into_iter();
    state
        .first_moment
        .visit_mut("", &mut |_, x| *x = m.next().expect("moment count"));
    let mut v = v.into_iter();
    state
        .second_moment
        .visit_mut("", &mut |_, x| *x = v.next().expect("moment count"));
    state.iteration += 1;
    Ok(loss)
}

/// Deterministic mini-batch order: each pass visits every example once in
/// a freshly shuffled order.
pub struct BatchSchedule {
    order: Vec<usize>,
    cursor: usize,
    rng: rng::SeededRng,
}

impl BatchSchedule {
    pub fn new(len: usize, seed: u64) -> Self {
        let mut s = Self {
            order: (0..len).collect(),
            cursor: 0,
            rng: rng::seeded(seed.wrapping_add(0xBA7C4)),
        };
        s.order.shuffle(&mut s.rng);
        s
    }

    pub fn next_batch(&mut self, size: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(size);
        while out.len() < size.min(self.order.len()) {
            if self.cursor == self.order.len() {
                self.order.shuffle(&mut self.rng);
                self.cursor = 0;
            }
            out.push(self.order[self.cursor]);
            self.cursor += 1;
        }
        out
    }
}

/// Runs `cfg.iterations` steps from `state`, reporting each step's loss.
pub fn train(
    state: &mut ModelState,
    cfg: &PipelineConfig,
    examples: &[Example],
    mut on_step: impl FnMut(usize, StepLoss),
) -> Result<()> {
    if examples.is_empty() {
        return Err(Error::Empty { op: "train" });
    }
    let mut schedule = BatchSchedule::new(examples.len(), cfg.seed);
    while state.iteration < cfg.iterations {
        let idx = schedule.next_batch(cfg.batch_size);
        let batch: Vec<Example> = idx.iter().map(|&i| examples[i].clone()).collect();
        let it = state.iteration;
        let loss = train_step(state, cfg, &batch)?;
        on_step(it, loss);
    }
    Ok(())
}
