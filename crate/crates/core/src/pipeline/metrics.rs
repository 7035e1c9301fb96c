use rayon::prelude::*;
use serde::Serialize;

use super::config::PipelineConfig;
use super::model::{forward, predict_mask, ModelParams};
use crate::error::{Error, Result};
use crate::mask::Mask;
use crate::synth::SceneSample;
use crate::tensor::GridShape;

fn same_grid(p: &Mask, g: &Mask, op: &'static str) -> Result<()> {
    if p.grid() != g.grid() {
        let (a, b) = (p.grid(), g.grid());
        return Err(Error::shape(op, (a.height, a.width), (b.height, b.width)));
    }
    Ok(())
}

/// `2|P∩G| / (|P| + |G|)`, and 1 when both masks are empty.
pub fn metric_dice(pred: &Mask, gt: &Mask) -> Result<f64> {
    same_grid(pred, gt, "metric_dice")?;
    let inter = pred.and(gt)?.count();
    let total = pred.count() + gt.count();
    Ok(if total == 0 {
        1.0
    } else {
        2.0 * inter as f64 / total as f64
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BalancedAccuracy {
    pub value: f64,
    pub sensitivity: f64,
    pub specificity: f64,
    /// Set when the ground truth lacks one class; the undefined rate is
    /// then reported as 1.
    pub degenerate: bool,
}

/// Mean of sensitivity and specificity.
pub fn metric_bacc(pred: &Mask, gt: &Mask) -> Result<BalancedAccuracy> {
    same_grid(pred, gt, "metric_bacc")?;
    let (mut tp, mut fn_, mut tn, mut fp) = (0usize, 0usize, 0usize, 0usize);
    for (&p, &g) in pred.bits().iter().zip(gt.bits()) {
        match (p, g) {
            (true, true) => tp += 1,
            (false, true) => fn_ += 1,
            (false, false) => tn += 1,
            (true, false) => fp += 1,
        }
    }
    let rate = |a: usize, b: usize| {
        if a + b == 0 {
            None
        } else {
            Some(a as f64 / (a + b) as f64)
        }
    };
    let sens = rate(tp, fn_);
    let spec = rate(tn, fp);
    let degenerate = sens.is_none() || spec.is_none();
    let (sensitivity, specificity) = (sens.unwrap_or(1.0), spec.unwrap_or(1.0));
    Ok(BalancedAccuracy {
        value: 0.5 * (sensitivity + specificity),
        sensitivity,
        specificity,
        degenerate,
    })
}

/// Boundary band: the mask minus its erosion by `band` pixels.
pub fn boundary_band(mask: &Mask, band: usize) -> Result<Mask> {
    mask.minus(&mask.erode(band))
}

/// IoU of the boundary bands of both masks; 1 when both bands are empty.
pub fn metric_biou(pred: &Mask, gt: &Mask, band: usize) -> Result<f64> {
    same_grid(pred, gt, "metric_biou")?;
    if band == 0 {
        return Err(Error::Invalid("BIoU band must be at least 1 pixel".into()));
    }
    let bp = boundary_band(pred, band)?;
    let bg = boundary_band(gt, band)?;
    let union = bp.or(&bg)?.count();
    Ok(if union == 0 {
        1.0
    } else {
        bp.and(&bg)?.count() as f64 / union as f64
    })
}

/// `max(1, round(0.02 · diagonal))` pixels.
pub fn default_band(grid: GridShape) -> usize {
    let diag = ((grid.height * grid.height + grid.width * grid.width) as f64).sqrt();
    ((0.02 * diag).round() as usize).max(1)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct ClassMetrics {
    pub dice: f64,
    pub bacc: f64,
    pub biou: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SampleMetrics {
    pub index: usize,
    pub seed: u64,
    pub foreground: ClassMetrics,
    pub background: ClassMetrics,
    pub bacc_degenerate: bool,
}

/// Means over a set of scenes, foreground and background classes.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Evaluation {
    pub samples: usize,
    pub band: usize,
    pub foreground: ClassMetrics,
    pub background: ClassMetrics,
    pub bacc_degenerate: usize,
    pub per_sample: Vec<SampleMetrics>,
}

fn class_metrics(pred: &Mask, gt: &Mask, band: usize) -> Result<(ClassMetrics, bool)> {
    let b = metric_bacc(pred, gt)?;
    Ok((
        ClassMetrics {
            dice: metric_dice(pred, gt)?,
            bacc: b.value,
            biou: metric_biou(pred, gt, band)?,
        },
        b.degenerate,
    ))
}

fn mean(xs: impl Iterator<Item = ClassMetrics>, n: usize) -> ClassMetrics {
    let mut m = xs.fold(ClassMetrics::default(), |a, c| ClassMetrics {
        dice: a.dice + c.dice,
        bacc: a.bacc + c.bacc,
        biou: a.biou + c.biou,
    });
    if n > 0 {
        let k = n as f64;
        m.dice /= k;
        m.bacc /= k;
        m.biou /= k;
    }
    m
}

/// Scores hard predictions at image resolution. Per-sample work may run
/// in parallel; results are reduced in index order.
pub fn evaluate(
    cfg: &PipelineConfig,
    params: &ModelParams,
    scenes: &[SceneSample],
) -> Result<Evaluation> {
    let grid = cfg.image_grid();
    let band = default_band(grid);
    let per_sample = scenes
        .par_iter()
        .enumerate()
        .map(|(index, s)| {
            if s.grid() != grid {
                return Err(Error::Invalid(format!(
                    "scene {index} is {}x{}, configuration expects {}x{}",
                    s.grid().height,
                    s.grid().width,
                    grid.height,
                    grid.width
                )));
            }
            let pred = forward(cfg, params, &s.image)?;
            let fg = predict_mask(cfg, &pred.logits, grid)?;
            let (foreground, degenerate) = class_metrics(&fg, &s.region, band)?;
            let (background, _) = class_metrics(&fg.complement(), &s.region.complement(), band)?;
            Ok(SampleMetrics {
                index,
                seed: s.seed,
                foreground,
                background,
                bacc_degenerate: degenerate,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let n = per_sample.len();
    Ok(Evaluation {
        samples: n,
        band,
        foreground: mean(per_sample.iter().map(|s| s.foreground), n),
        background: mean(per_sample.iter().map(|s| s.background), n),
        bacc_degenerate: per_sample.iter().filter(|s| s.bacc_degenerate).count(),
        per_sample,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square(grid: GridShape, y0: usize, x0: usize, side: usize) -> Mask {
        Mask::from_fn(grid, |y, x| {
            (y0..y0 + side).contains(&y) && (x0..x0 + side).contains(&x)
        })
    }

    #[test]
    fn dice_examples() {
        let g = GridShape::square(6);
        let a = square(g, 1, 1, 2);
        assert_eq!(metric_dice(&a, &a).unwrap(), 1.0);
        assert_eq!(metric_dice(&a, &square(g, 4, 4, 2)).unwrap(), 0.0);
        assert_eq!(metric_dice(&a, &square(g, 1, 2, 2)).unwrap(), 0.5);
        assert_eq!(metric_dice(&Mask::empty(g), &Mask::empty(g)).unwrap(), 1.0);
        assert!(metric_dice(&a, &Mask::empty(GridShape::square(5))).is_err());
    }

    #[test]
    fn bacc_examples() {
        let g = GridShape::new(2, 4);
        let gt = Mask::from_fn(g, |y, _| y == 0);
        assert_eq!(metric_bacc(&gt, &gt).unwrap().value, 1.0);
        assert_eq!(metric_bacc(&Mask::full(g), &gt).unwrap().value, 0.5);
        let d = metric_bacc(&Mask::full(g), &Mask::full(g)).unwrap();
        assert!(d.degenerate);
        assert_eq!(d.value, 1.0);
    }

    #[test]
    fn biou_examples() {
        let g = GridShape::square(8);
        let a = square(g, 1, 1, 6);
        assert_eq!(metric_biou(&a, &a, 1).unwrap(), 1.0);
        let far = square(GridShape::square(8), 0, 0, 1);
        let near = square(GridShape::square(8), 7, 7, 1);
        assert_eq!(metric_biou(&far, &near, 1).unwrap(), 0.0);
        assert_eq!(
            metric_biou(&Mask::empty(g), &Mask::empty(g), 1).unwrap(),
            1.0
        );
        assert!(metric_biou(&a, &a, 0).is_err());
    }

    #[test]
    fn band_defaults() {
        assert_eq!(default_band(GridShape::square(64)), 2);
        assert_eq!(default_band(GridShape::square(16)), 1);
        assert_eq!(default_band(GridShape::square(256)), 7);
    }
}
