use super::config::{PipelineConfig, ENCODER_LEVELS};
use crate::error::{Error, Result};
use crate::grm::{traced_grm_forward, GrmParams};
use crate::params::{bind_constant, param_struct, Parameters};
use crate::rng::{self, SeededRng};
use crate::tensor::{GridShape, Matrix, Tape, Var};

param_struct! {
    /// A 1×1 convolution: `x·weight + bias`.
    pub struct Linear {
        weight,
        bias,
    }
}

impl Linear {
    pub fn init(fan_in: usize, fan_out: usize, rng: &mut SeededRng) -> Self {
        Self {
            weight: rng::normal(rng, fan_in, fan_out, (2.0 / fan_in as f64).sqrt()),
            bias: Matrix::zeros(1, fan_out),
        }
    }

    pub fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Self {
            weight: Matrix::zeros(fan_in, fan_out),
            bias: Matrix::zeros(1, fan_out),
        }
    }
}

param_struct! {
    /// One fusion step: 1×1 maps on a coarse and a fine grid, the coarse
    /// result resampled onto the fine grid, summed and rectified.
    pub struct AggregationBlock {
        coarse_weight,
        coarse_bias,
        fine_weight,
        fine_bias,
    }
}

impl AggregationBlock {
    pub fn init(coarse: usize, fine: usize, out: usize, rng: &mut SeededRng) -> Self {
        let c = Linear::init(coarse, out, rng);
        let f = Linear::init(fine, out, rng);
        Self {
            coarse_weight: c.weight,
            coarse_bias: c.bias,
            fine_weight: f.weight,
            fine_bias: f.bias,
        }
    }
}

/// Which aggregation chain to run.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Aggregation {
    /// Fuses the shallow levels and stops at the boundary grid.
    ShallowForBoundary,
    /// Fuses the deep levels and stops at the region grid.
    DeepForRegion,
}

impl Aggregation {
    /// `(coarsest, finest)` encoder levels the chain spans.
    pub fn span(self, cfg: &PipelineConfig) -> (usize, usize) {
        match self {
            Aggregation::ShallowForBoundary => (cfg.boundary_level() + 1, cfg.boundary_level()),
            Aggregation::DeepForRegion => (ENCODER_LEVELS - 1, cfg.region_level()),
        }
    }
}

/// Every trainable weight of the segmentation model.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams<T = Matrix> {
    pub encoder: Vec<Linear<T>>,
    pub boundary_aggregation: Vec<AggregationBlock<T>>,
    pub region_aggregation: Vec<AggregationBlock<T>>,
    pub boundary_head: Linear<T>,
    pub region_head: Linear<T>,
    pub grm: GrmParams<T>,
}

impl<T> ModelParams<T> {
    pub fn map<U>(&self, f: &mut dyn FnMut(&T) -> U) -> ModelParams<U> {
        ModelParams {
            encoder: self.encoder.iter().map(|l| l.map(f)).collect(),
            boundary_aggregation: self.boundary_aggregation.iter().map(|b| b.map(f)).collect(),
            region_aggregation: self.region_aggregation.iter().map(|b| b.map(f)).collect(),
            boundary_head: self.boundary_head.map(f),
            region_head: self.region_head.map(f),
            grm: self.grm.map(f),
        }
    }
}

impl<T> Parameters<T> for ModelParams<T> {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a T)) {
        self.encoder.visit(&format!("{prefix}encoder."), f);
        self.boundary_aggregation
            .visit(&format!("{prefix}boundary_aggregation."), f);
        self.region_aggregation
            .visit(&format!("{prefix}region_aggregation."), f);
        self.boundary_head
            .visit(&format!("{prefix}boundary_head."), f);
        self.region_head.visit(&format!("{prefix}region_head."), f);
        self.grm.visit(&format!("{prefix}grm."), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut T)) {
        self.encoder.visit_mut(&format!("{prefix}encoder."), f);
        self.boundary_aggregation
            .visit_mut(&format!("{prefix}boundary_aggregation."), f);
        self.region_aggregation
            .visit_mut(&format!("{prefix}region_aggregation."), f);
        self.boundary_head
            .visit_mut(&format!("{prefix}boundary_head."), f);
        self.region_head
            .visit_mut(&format!("{prefix}region_head."), f);
        self.grm.visit_mut(&format!("{prefix}grm."), f);
    }
}

fn chain_blocks(
    cfg: &PipelineConfig,
    which: Aggregation,
    rng: &mut SeededRng,
) -> Vec<AggregationBlock> {
    let (top, bottom) = which.span(cfg);
    let a = cfg.aggregation_channels;
    let mut coarse = cfg.encoder_widths[top];
    (bottom..top)
        .rev()
        .map(|lvl| {
            let b = AggregationBlock::init(coarse, cfg.encoder_widths[lvl], a, rng);
            coarse = a;
            b
        })
        .collect()
}

impl ModelParams {
    /// Seeded initialisation for a validated configuration.
    pub fn init(cfg: &PipelineConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut g = rng::seeded(seed);
        let mut fan = 1;
        let encoder = cfg
            .encoder_widths
            .iter()
            .map(|&w| {
                let l = Linear::init(4 * fan, w, &mut g);
                fan = w;
                l
            })
            .collect();
        let boundary_aggregation = chain_blocks(cfg, Aggregation::ShallowForBoundary, &mut g);
        let region_aggregation = chain_blocks(cfg, Aggregation::DeepForRegion, &mut g);
        let a = cfg.aggregation_channels;
        let boundary_head = Linear::init(a, 1, &mut g);
        let region_head = Linear::init(a, cfg.region_channels, &mut g);
        let mut grm = cfg.grm.init(cfg.region_channels, &mut g)?;
        for l in &mut grm.layers {
            l.degree_epsilon = cfg.degree_epsilon;
        }
        Ok(Self {
            encoder,
            boundary_aggregation,
            region_aggregation,
            boundary_head,
            region_head,
            grm,
        })
    }

    pub fn is_finite(&self) -> bool {
        let mut ok = true;
        self.visit("", &mut |_, m| ok &= m.is_finite());
        ok
    }
}

/// Tape handles for one image's forward pass.
#[derive(Clone, Debug)]
pub struct Forward {
    pub levels: Vec<Var>,
    /// Head logits on the region grid, before the GRM.
    pub region_logits: Var,
    /// Sigmoid boundary map on the boundary grid.
    pub boundary: Var,
    /// The boundary map resampled onto the region grid.
    pub boundary_down: Var,
    /// GRM output: final class logits on the region grid.
    pub logits: Var,
}

pub fn traced_encoder(
    t: &mut Tape,
    cfg: &PipelineConfig,
    encoder: &[Linear<Var>],
    image: Var,
) -> Result<Vec<Var>> {
    if t.shape(image) != (cfg.image_grid().len(), 1) {
        return Err(Error::shape(
            "encoder_forward",
            t.shape(image),
            (cfg.image_grid().len(), 1),
        ));
    }
    let mut grid = cfg.image_grid();
    let mut x = image;
    let mut levels = Vec::with_capacity(encoder.len());
    for (k, stage) in encoder.iter().enumerate() {
        let patches = t.space_to_depth(x, grid)?;
        let pre = t.linear_map(patches, stage.weight, stage.bias)?;
        x = t.relu(pre)?;
        t.label(x, format!("encoder level {k}"));
        grid = grid.halved();
        levels.push(x);
    }
    Ok(levels)
}

pub fn traced_aggregation(
    t: &mut Tape,
    cfg: &PipelineConfig,
    levels: &[Var],
    which: Aggregation,
    blocks: &[AggregationBlock<Var>],
) -> Result<Var> {
    let (top, bottom) = which.span(cfg);
    if levels.len() <= top || top <= bottom || blocks.len() != top - bottom {
        return Err(Error::Invalid(format!(
            "{which:?} needs levels {bottom}..={top} and {} blocks, got {} levels and {} blocks",
            top.saturating_sub(bottom),
            levels.len(),
            blocks.len()
        )));
    }
    let mut g = levels[top];
    let mut grid = cfg.level_grid(top);
    for (block, lvl) in blocks.iter().zip((bottom..top).rev()) {
        let fine_grid = cfg.level_grid(lvl);
        let c = t.linear_map(g, block.coarse_weight, block.coarse_bias)?;
        let up = t.resample(c, grid, fine_grid)?;
        let f = t.linear_map(levels[lvl], block.fine_weight, block.fine_bias)?;
        let sum = t.add(up, f)?;
        g = t.relu(sum)?;
        grid = fine_grid;
    }
    Ok(g)
}

/// Region logits, boundary map and its downsampled copy.
pub fn traced_heads(
    t: &mut Tape,
    cfg: &PipelineConfig,
    region_feats: Var,
    boundary_feats: Var,
    region_head: &Linear<Var>,
    boundary_head: &Linear<Var>,
) -> Result<(Var, Var, Var)> {
    let (nr, nb) = (cfg.region_shape().len(), cfg.boundary_shape().len());
    if t.shape(region_feats).0 != nr || t.shape(boundary_feats).0 != nb {
        return Err(Error::shape(
            "heads_forward",
            t.shape(region_feats),
            t.shape(boundary_feats),
        ));
    }
    let logits = t.linear_map(region_feats, region_head.weight, region_head.bias)?;
    let logits = t.label(logits, "region logits");
    let b = t.linear_map(boundary_feats, boundary_head.weight, boundary_head.bias)?;
    let b = t.sigmoid(b)?;
    let b = t.label(b, "boundary map");
    let down = t.resample(b, cfg.boundary_shape(), cfg.region_shape())?;
    Ok((logits, b, down))
}

pub fn traced_forward(
    t: &mut Tape,
    cfg: &PipelineConfig,
    p: &ModelParams<Var>,
    image: Var,
) -> Result<Forward> {
    let levels = traced_encoder(t, cfg, &p.encoder, image)?;
    let deep = traced_aggregation(
        t,
        cfg,
        &levels,
        Aggregation::DeepForRegion,
        &p.region_aggregation,
    )?;
    let shallow = traced_aggregation(
        t,
        cfg,
        &levels,
        Aggregation::ShallowForBoundary,
        &p.boundary_aggregation,
    )?;
    let (region_logits, boundary, boundary_down) =
        traced_heads(t, cfg, deep, shallow, &p.region_head, &p.boundary_head)?;
    let logits = traced_grm_forward(
        t,
        region_logits,
        cfg.region_shape(),
        Some(boundary_down),
        &p.grm,
        cfg.grm.variant,
    )?;
    let logits = t.label(logits, "GRM logits");
    Ok(Forward {
        levels,
        region_logits,
        boundary,
        boundary_down,
        logits,
    })
}

/// Plain-value outputs of [`forward`].
#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub region_logits: Matrix,
    pub boundary: Matrix,
    pub boundary_down: Matrix,
    pub logits: Matrix,
}

/// Column view of an `H × W` image, rescaled from `[0, 1]` to `[-1, 1]`.
pub fn image_column(image: &Matrix) -> Matrix {
    Matrix::column(image.data().iter().map(|v| 2.0 * v - 1.0).collect())
}

pub fn encoder_forward(
    cfg: &PipelineConfig,
    p: &ModelParams,
    image: &Matrix,
) -> Result<Vec<Matrix>> {
    let mut t = Tape::new();
    let enc: Vec<Linear<Var>> = p
        .encoder
        .iter()
        .map(|l| l.map(&mut bind_constant(&mut t)))
        .collect();
    let x = t.constant(image_column(image));
    let levels = traced_encoder(&mut t, cfg, &enc, x)?;
    Ok(levels.iter().map(|v| t.value(*v).clone()).collect())
}

pub fn feature_aggregation(
    cfg: &PipelineConfig,
    levels: &[Matrix],
    which: Aggregation,
    blocks: &[AggregationBlock],
) -> Result<Matrix> {
    let mut t = Tape::new();
    let lv: Vec<Var> = levels.iter().map(|m| t.constant(m.clone())).collect();
    let bv: Vec<AggregationBlock<Var>> = blocks
        .iter()
        .map(|b| b.map(&mut bind_constant(&mut t)))
        .collect();
    let out = traced_aggregation(&mut t, cfg, &lv, which, &bv)?;
    Ok(t.value(out).clone())
}

/// `(R_s logits, B_s, B_s on the region grid)`.
pub fn heads_forward(
    cfg: &PipelineConfig,
    region_feats: &Matrix,
    boundary_feats: &Matrix,
    region_head: &Linear,
    boundary_head: &Linear,
) -> Result<(Matrix, Matrix, Matrix)> {
    let mut t = Tape::new();
    let r = t.constant(region_feats.clone());
    let b = t.constant(boundary_feats.clone());
    let rh = region_head.map(&mut bind_constant(&mut t));
    let bh = boundary_head.map(&mut bind_constant(&mut t));
    let (l, bs, down) = traced_heads(&mut t, cfg, r, b, &rh, &bh)?;
    Ok((
        t.value(l).clone(),
        t.value(bs).clone(),
        t.value(down).clone(),
    ))
}

pub fn forward(cfg: &PipelineConfig, p: &ModelParams, image: &Matrix) -> Result<Prediction> {
    let mut t = Tape::new();
    let pv = p.map(&mut bind_constant(&mut t));
    let x = t.constant(image_column(image));
    let f = traced_forward(&mut t, cfg, &pv, x)?;
    Ok(Prediction {
        region_logits: t.value(f.region_logits).clone(),
        boundary: t.value(f.boundary).clone(),
        boundary_down: t.value(f.boundary_down).clone(),
        logits: t.value(f.logits).clone(),
    })
}

/// Checks that a parameter set matches the shapes `cfg` would create.
pub fn check_shapes(cfg: &PipelineConfig, p: &ModelParams) -> Result<()> {
    let template = ModelParams::init(cfg, 0)?;
    let want = template.named();
    let got = p.named();
    if want.len() != got.len() {
        return Err(Error::Invalid(format!(
            "parameter count {} does not match the configuration's {}",
            got.len(),
            want.len()
        )));
    }
    for ((wn, wm), (gn, gm)) in want.iter().zip(&got) {
        if wn != gn || wm.shape() != gm.shape() {
            return Err(Error::Invalid(format!(
                "parameter {gn} has shape {:?}, configuration expects {wn} with {:?}",
                gm.shape(),
                wm.shape()
            )));
        }
    }
    Ok(())
}

/// Hard foreground mask on `grid` from final region logits: logits are
/// resampled to `grid` and class 1 wins only when strictly larger.
pub fn predict_mask(
    cfg: &PipelineConfig,
    logits: &Matrix,
    grid: GridShape,
) -> Result<crate::mask::Mask> {
    let up = crate::tensor::ops::bilinear_resample(logits, cfg.region_shape(), grid)?;
    let bits = (0..up.rows())
        .map(|i| up.get(i, 1) > up.get(i, 0))
        .collect();
    crate::mask::Mask::from_bits(grid, bits)
}
