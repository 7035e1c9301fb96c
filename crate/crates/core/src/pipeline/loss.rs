use crate::error::{Error, Result};
use crate::tensor::{Matrix, Tape, Unary, Var};

/// Smoothing constant of the Dice loss.
pub const DICE_SMOOTH: f64 = 1.0;

/// `1 − (2·Σp·g + 1) / (Σp + Σg + 1)` on the tape; `gt` is a constant.
pub fn traced_dice_loss(t: &mut Tape, pred: Var, gt: &Matrix) -> Result<Var> {
    if t.shape(pred) != gt.shape() {
        return Err(Error::shape("dice_loss", t.shape(pred), gt.shape()));
    }
    let g = t.constant(gt.clone());
    let pg = t.mul(pred, g)?;
    let inter = t.sum(pg)?;
    let num = t.scale(inter, 2.0)?;
    let num = t.shift(num, DICE_SMOOTH)?;
    let sp = t.sum(pred)?;
    let den = t.shift(sp, gt.sum() + DICE_SMOOTH)?;
    let inv = t.unary(Unary::Recip, den)?;
    let ratio = t.mul(num, inv)?;
    let neg = t.scale(ratio, -1.0)?;
    t.shift(neg, 1.0)
}

fn check_probabilities(pred: &Matrix, gt: &Matrix) -> Result<()> {
    if pred.shape() != gt.shape() {
        return Err(Error::shape("dice_loss", pred.shape(), gt.shape()));
    }
    if let Some(v) = pred.data().iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::Domain {
            op: "dice_loss",
            detail: format!("prediction {v} outside [0, 1]"),
        });
    }
    if let Some(v) = gt.data().iter().find(|&&v| v != 0.0 && v != 1.0) {
        return Err(Error::Domain {
            op: "dice_loss",
            detail: format!("ground truth {v} is not binary"),
        });
    }
    Ok(())
}

pub fn dice_loss(pred: &Matrix, gt: &Matrix) -> Result<f64> {
    check_probabilities(pred, gt)?;
    let mut t = Tape::new();
    let p = t.constant(pred.clone());
    let l = traced_dice_loss(&mut t, p, gt)?;
    Ok(t.value(l).get(0, 0))
}

/// Two-class softmax of `N × 2` logits as `(p0, p1)` columns, with
/// `p1 = sigmoid(l1 − l0)` and `p0 = 1 − p1`.
pub fn traced_softmax2(t: &mut Tape, logits: Var) -> Result<(Var, Var)> {
    if t.shape(logits).1 != 2 {
        return Err(Error::shape(
            "softmax2",
            t.shape(logits),
            (t.shape(logits).0, 2),
        ));
    }
    let sel = t.constant(Matrix::column(vec![-1.0, 1.0]));
    let diff = t.matmul(logits, sel)?;
    let p1 = t.sigmoid(diff)?;
    let neg = t.scale(p1, -1.0)?;
    let p0 = t.shift(neg, 1.0)?;
    Ok((p0, p1))
}

/// Loss terms of one image.
#[derive(Clone, Copy, Debug)]
pub struct LossVars {
    pub total: Var,
    pub region: Var,
    pub boundary: Var,
}

/// Region Dice averaged over both softmax channels, plus `α` times the
/// boundary Dice. `region_gt` and `boundary_gt` are `N × 1` binary columns.
pub fn traced_total_loss(
    t: &mut Tape,
    region_logits: Var,
    region_gt: &Matrix,
    boundary_pred: Var,
    boundary_gt: &Matrix,
    alpha: f64,
) -> Result<LossVars> {
    if !(alpha >= 0.0) {
        return Err(Error::Invalid(format!("alpha {alpha} must be ≥ 0")));
    }
    let (p0, p1) = traced_softmax2(t, region_logits)?;
    let bg = region_gt.map(|g| 1.0 - g);
    let l0 = traced_dice_loss(t, p0, &bg)?;
    let l1 = traced_dice_loss(t, p1, region_gt)?;
    let lr = t.add(l0, l1)?;
    let region = t.scale(lr, 0.5)?;
    let boundary = traced_dice_loss(t, boundary_pred, boundary_gt)?;
    let weighted = t.scale(boundary, alpha)?;
    let total = t.add(region, weighted)?;
    Ok(LossVars {
        total,
        region,
        boundary,
    })
}

/// Value form of [`traced_total_loss`]: `(total, L_R, L_B)`.
pub fn total_loss(
    region_logits: &Matrix,
    region_gt: &Matrix,
    boundary_pred: &Matrix,
    boundary_gt: &Matrix,
    alpha: f64,
) -> Result<(f64, f64, f64)> {
    check_probabilities(boundary_pred, boundary_gt)?;
    let mut t = Tape::new();
    let l = t.constant(region_logits.clone());
    let b = t.constant(boundary_pred.clone());
    let v = traced_total_loss(&mut t, l, region_gt, b, boundary_gt, alpha)?;
    Ok((
        t.value(v.total).get(0, 0),
        t.value(v.region).get(0, 0),
        t.value(v.boundary).get(0, 0),
    ))
}
