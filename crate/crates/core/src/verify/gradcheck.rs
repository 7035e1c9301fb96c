//! Central-difference gradient checking.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::tensor::{Matrix, Tape, Var};

/// A scalar function of several matrices with an analytic gradient.
pub trait ScalarFunction {
    fn value(&mut self, inputs: &[Matrix]) -> Result<f64>;
    fn gradient(&mut self, inputs: &[Matrix]) -> Result<Vec<Matrix>>;
}

/// Adapts a tape-building closure into a [`ScalarFunction`]: the closure
/// receives one leaf per input and returns a `1 × 1` output.
pub struct TapeFunction<F>(pub F);

impl<F> ScalarFunction for TapeFunction<F>
where
    F: FnMut(&mut Tape, &[Var]) -> Result<Var>,
{
    fn value(&mut self, inputs: &[Matrix]) -> Result<f64> {
        let mut t = Tape::new();
        let vars: Vec<Var> = inputs.iter().map(|m| t.leaf(m.clone())).collect();
        let out = (self.0)(&mut t, &vars)?;
        Ok(t.value(out).get(0, 0))
    }

    fn gradient(&mut self, inputs: &[Matrix]) -> Result<Vec<Matrix>> {
        let mut t = Tape::new();
        let vars: Vec<Var> = inputs.iter().map(|m| t.leaf(m.clone())).collect();
        let out = (self.0)(&mut t, &vars)?;
        let grads = t.backward(out)?;
        Ok(vars
            .iter()
            .zip(inputs)
            .map(|(v, m)| grads.get_or_zeros(*v, m.shape()))
            .collect())
    }
}

#[derive(Clone, Copy, Debug)]
pub struct GradCheckOptions {
    /// Largest step of the ladder; each further level multiplies it by
    /// [`Self::ratio`].
    pub step: f64,
    pub ratio: f64,
    pub levels: usize,
    pub tolerance: f64,
    /// Departure from smooth second-difference scaling, relative to the
    /// gradient, above which a level is treated as straddling a kink.
    pub kink_tolerance: f64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            step: 1e-2,
            ratio: 0.1,
            levels: 5,
            tolerance: 1e-4,
            kink_tolerance: 1e-2,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Coordinate {
    pub input: usize,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub relative_error: f64,
    /// Estimated truncation plus roundoff error of `numeric`.
    pub estimate_error: f64,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct GradCheckReport {
    pub checked: usize,
    pub max_relative_error: f64,
    pub failures: Vec<Coordinate>,
    /// Coordinates skipped because the function is not smooth there.
    pub kinks: Vec<Coordinate>,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn pass(&self) -> bool {
        self.failures.is_empty()
    }
}

/// `|a − b| / max(|a|, |b|, 1e-8)`.
pub fn grad_relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

struct Estimate {
    numeric: f64,
    error: f64,
    kinked: bool,
}

/// Richardson-extrapolated central difference at step `h` (combining `h`
/// and `h / 2`), with an estimate of its truncation plus roundoff error.
fn probe(
    eval_at: &mut dyn FnMut(f64) -> Result<f64>,
    center: f64,
    analytic: f64,
    h: f64,
    opts: &GradCheckOptions,
) -> Result<Estimate> {
    let plus = eval_at(h)?;
    let minus = eval_at(-h)?;
    let plus_half = eval_at(h / 2.0)?;
    let minus_half = eval_at(-h / 2.0)?;
    let wide = (plus - minus) / (2.0 * h);
    let narrow = (plus_half - minus_half) / h;
    let numeric = (4.0 * narrow - wide) / 3.0;
    let roundoff = 10.0 * f64::EPSILON * center.abs().max(1.0) / h;
    // Second differences of a smooth function shrink fourfold when the
    // step halves; a kink inside the stencil breaks that.
    let second = plus - 2.0 * center + minus;
    let second_half = plus_half - 2.0 * center + minus_half;
    let mismatch = (second - 4.0 * second_half).abs() / h;
    let kinked =
        mismatch > opts.kink_tolerance * analytic.abs().max(numeric.abs()) + 10.0 * roundoff;
    Ok(Estimate {
        numeric,
        error: (narrow - wide).abs() / 3.0 + roundoff,
        kinked,
    })
}

/// Compares the analytic gradient of `f` at `inputs` against central
/// differences, coordinate by coordinate. Each coordinate is probed at a
/// ladder of steps and the level with the smallest error estimate is kept;
/// coordinates that straddle a kink at every level are skipped and listed.
pub fn grad_check<F: ScalarFunction + ?Sized>(
    f: &mut F,
    inputs: &[Matrix],
    opts: GradCheckOptions,
) -> Result<GradCheckReport> {
    if opts.step <= 0.0 || !(opts.ratio > 0.0 && opts.ratio < 1.0) {
        return Err(Error::Invalid(
            "grad_check needs step > 0 and 0 < ratio < 1".into(),
        ));
    }
    let analytic = f.gradient(inputs)?;
    let center = f.value(inputs)?;
    if !center.is_finite() {
        return Err(Error::NonFinite {
            tensor: "grad_check objective".into(),
        });
    }
    let mut report = GradCheckReport {
        tolerance: opts.tolerance,
        ..Default::default()
    };
    let mut work: Vec<Matrix> = inputs.to_vec();
    for k in 0..inputs.len() {
        for idx in 0..inputs[k].len() {
            let orig = inputs[k].data()[idx];
            let a = analytic[k].data()[idx];
            let mut eval_at = |delta: f64| -> Result<f64> {
                work[k].data_mut()[idx] = orig + delta;
                let v = f.value(&work);
                work[k].data_mut()[idx] = orig;
                let v = v?;
                if !v.is_finite() {
                    return Err(Error::NonFinite {
                        tensor: format!("grad_check objective at input {k}[{idx}]"),
                    });
                }
                Ok(v)
            };
            let mut best: Option<Estimate> = None;
            let mut last = None;
            let mut h = opts.step;
            for _ in 0..opts.levels.max(1) {
                let est = probe(&mut eval_at, center, a, h, &opts)?;
                h *= opts.ratio;
                if est.kinked {
                    last = Some(est);
                } else if best.as_ref().is_none_or(|b| est.error < b.error) {
                    best = Some(est);
                }
            }
            // A level that passed the kink test but still carries a large
            // error estimate has not resolved the derivative either.
            let resolved = best.as_ref().is_some_and(|b| {
                b.error <= opts.kink_tolerance * a.abs().max(b.numeric.abs()).max(1e-8)
            });
            let kinked = !resolved;
            let est = best.or(last).expect("at least one level");
            let coord = Coordinate {
                input: k,
                index: idx,
                analytic: a,
                numeric: est.numeric,
                relative_error: grad_relative_error(a, est.numeric),
                estimate_error: est.error,
            };
            if kinked {
                report.kinks.push(coord);
                continue;
            }
            report.checked += 1;
            report.max_relative_error = report.max_relative_error.max(coord.relative_error);
            if coord.relative_error > opts.tolerance {
                report.failures.push(coord);
            }
        }
    }
    Ok(report)
}
