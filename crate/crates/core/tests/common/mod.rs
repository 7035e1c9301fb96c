//! Pixel-set oracles shared by the metric tests and the acceptance run.

#![allow(dead_code)]

use std::collections::HashSet;

use bigconv_core::mask::Mask;
use bigconv_core::GridShape;

pub type Pixels = HashSet<(i64, i64)>;

pub fn pixels(m: &Mask) -> Pixels {
    let g = m.grid();
    let mut out = Pixels::new();
    for y in 0..g.height {
        for x in 0..g.width {
            if m.get(y, x) {
                out.insert((y as i64, x as i64));
            }
        }
    }
    out
}

/// Keeps a pixel when every pixel within Manhattan distance `band` is set
/// and inside the frame.
pub fn erode_by_enumeration(set: &Pixels, grid: GridShape, band: i64) -> Pixels {
    let inside =
        |y: i64, x: i64| y >= 0 && x >= 0 && y < grid.height as i64 && x < grid.width as i64;
    set.iter()
        .filter(|&&(y, x)| {
            (-band..=band).all(|dy| {
                let rest = band - dy.abs();
                (-rest..=rest).all(|dx| inside(y + dy, x + dx) && set.contains(&(y + dy, x + dx)))
            })
        })
        .copied()
        .collect()
}

/// `(|A ∩ B|, |A ∪ B|)` of the two boundary bands.
pub fn biou_counts(p: &Mask, g: &Mask, band: i64) -> (usize, usize) {
    let (sp, sg) = (pixels(p), pixels(g));
    let bp: Pixels = sp
        .difference(&erode_by_enumeration(&sp, p.grid(), band))
        .copied()
        .collect();
    let bg: Pixels = sg
        .difference(&erode_by_enumeration(&sg, g.grid(), band))
        .copied()
        .collect();
    (bp.intersection(&bg).count(), bp.union(&bg).count())
}

pub fn oracle_biou(p: &Mask, g: &Mask, band: i64) -> f64 {
    let (i, u) = biou_counts(p, g, band);
    if u == 0 {
        1.0
    } else {
        i as f64 / u as f64
    }
}

/// `(2|P ∩ G|, |P| + |G|)`.
pub fn dice_counts(p: &Mask, g: &Mask) -> (usize, usize) {
    let (sp, sg) = (pixels(p), pixels(g));
    (2 * sp.intersection(&sg).count(), sp.len() + sg.len())
}

/// `(TP, FN, TN, FP)` by visiting every pixel of the frame.
pub fn confusion(p: &Mask, g: &Mask) -> (usize, usize, usize, usize) {
    let (sp, sg) = (pixels(p), pixels(g));
    let grid = p.grid();
    let mut c = (0, 0, 0, 0);
    for y in 0..grid.height as i64 {
        for x in 0..grid.width as i64 {
            match (sp.contains(&(y, x)), sg.contains(&(y, x))) {
                (true, true) => c.0 += 1,
                (false, true) => c.1 += 1,
                (false, false) => c.2 += 1,
                (true, false) => c.3 += 1,
            }
        }
    }
    c
}

pub fn square(grid: GridShape, top: usize, left: usize, side: usize) -> Mask {
    Mask::from_fn(grid, |y, x| {
        (top..top + side).contains(&y) && (left..left + side).contains(&x)
    })
}
