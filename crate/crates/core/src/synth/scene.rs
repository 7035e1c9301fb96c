use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mask::Mask;
use crate::rng;
use crate::tensor::{GridShape, Matrix};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Difficulty {
    Easy,
    Textured,
}

impl fmt::Display for Difficulty {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Difficulty::Easy => "easy",
            Difficulty::Textured => "textured",
        })
    }
}

impl FromStr for Difficulty {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "easy" => Ok(Difficulty::Easy),
            "textured" => Ok(Difficulty::Textured),
            other => Err(Error::Invalid(format!(
                "unknown difficulty {other:?} (expected easy or textured)"
            ))),
        }
    }
}

/// One generated scene. `image` is `H × W` in `[0, 1]`, quantised to
/// multiples of 1/255.
#[derive(Clone, Debug, PartialEq)]
pub struct SceneSample {
    pub image: Matrix,
    pub region: Mask,
    pub boundary: Mask,
    pub seed: u64,
    pub blob_count: usize,
}

impl SceneSample {
    pub fn grid(&self) -> GridShape {
        self.region.grid()
    }
}

/// Boundary band width for a square image of side `size`: 2 pixels at 64.
pub fn default_thickness(size: usize) -> usize {
    ((2.0 * size as f64 / 64.0).round() as usize).max(1)
}

/// `dilate(mask) − erode(mask)` with a 4-connected diamond of radius `thickness`.
pub fn boundary_from_mask(mask: &Mask, thickness: usize) -> Result<Mask> {
    if thickness == 0 {
        return Err(Error::Invalid(
            "boundary thickness must be at least 1".into(),
        ));
    }
    mask.dilate(thickness).minus(&mask.erode(thickness))
}

struct Bump {
    cy: f64,
    cx: f64,
    sigma: f64,
    weight: f64,
}

const MIN_COVERAGE: f64 = 0.01;
const MAX_COVERAGE: f64 = 0.60;

fn blob_field(bumps: &[Bump], grid: GridShape) -> Mask {
    Mask::from_fn(grid, |y, x| {
        let mut f = 0.0;
        for b in bumps {
            let dy = y as f64 + 0.5 - b.cy;
            let dx = x as f64 + 0.5 - b.cx;
            f += b.weight * (-(dy * dy + dx * dx) / (2.0 * b.sigma * b.sigma)).exp();
        }
        f > 0.5
    })
}

fn draw_bumps(g: &mut rng::SeededRng, size: f64, blobs: usize) -> Vec<Bump> {
    let mut bumps = Vec::new();
    for _ in 0..blobs {
        let cy = g.random_range(0.2 * size..0.8 * size);
        let cx = g.random_range(0.2 * size..0.8 * size);
        let parts = g.random_range(2..=4);
        for _ in 0..parts {
            bumps.push(Bump {
                cy: cy + g.random_range(-0.08..0.08) * size,
                cx: cx + g.random_range(-0.08..0.08) * size,
                sigma: g.random_range(0.07..0.13) * size,
                weight: g.random_range(0.8..1.2),
            });
        }
    }
    bumps
}

/// A scene of 1 to 3 smooth blobs on a textured background.
///
/// The blob layout is redrawn until the region covers between 1% and 60%
/// of the frame; the redraws consume the same seeded stream, so the result
/// is still a pure function of the arguments.
pub fn generate_scene(seed: u64, size: usize, difficulty: Difficulty) -> Result<SceneSample> {
    if size < 16 {
        return Err(Error::Invalid(format!("scene size {size} is below 16")));
    }
    let grid = GridShape::square(size);
    let s = size as f64;
    let mut g = rng::seeded(seed);
    let (blob_count, region) = loop {
        let blobs = g.random_range(1..=3);
        let bumps = draw_bumps(&mut g, s, blobs);
        let m = blob_field(&bumps, grid);
        let f = m.fraction();
        if (MIN_COVERAGE..=MAX_COVERAGE).contains(&f) {
            break (blobs, m);
        }
    };
    let (fg, bg, texture, noise) = match difficulty {
        Difficulty::Easy => (0.75, 0.25, 0.05, 0.03),
        Difficulty::Textured => (0.58, 0.42, 0.12, 0.10),
    };
    let (fy, fx) = (g.random_range(1.0..4.0), g.random_range(1.0..4.0));
    let (py, px) = (
        g.random_range(0.0..std::f64::consts::TAU),
        g.random_range(0.0..std::f64::consts::TAU),
    );
    let normal = Normal::new(0.0, noise).expect("positive noise level");
    let tau = std::f64::consts::TAU;
    let image = Matrix::from_fn(size, size, |y, x| {
        let base = if region.get(y, x) { fg } else { bg };
        let wave = (tau * fy * y as f64 / s + py).sin() * (tau * fx * x as f64 / s + px).cos();
        let v: f64 = base + texture * wave + normal.sample(&mut g);
        // stored on the 8-bit PGM grid so files round-trip exactly
        (v.clamp(0.0, 1.0) * 255.0).round() / 255.0
    });
    let boundary = boundary_from_mask(&region, default_thickness(size))?;
    Ok(SceneSample {
        image,
        region,
        boundary,
        seed,
        blob_count,
    })
}
