//! Binary masks and 4-connected morphology.

use crate::error::{Error, Result};
use crate::tensor::{GridShape, Matrix};

/// A row-major `{0, 1}` image.
#[derive(Clone, PartialEq, Eq)]
pub struct Mask {
    grid: GridShape,
    bits: Vec<bool>,
}

impl std::fmt::Debug for Mask {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "Mask {}x{}", self.grid.height, self.grid.width)?;
        for y in 0..self.grid.height {
            let row: String = (0..self.grid.width)
                .map(|x| if self.get(y, x) { '#' } else { '.' })
                .collect();
            writeln!(f, "{row}")?;
        }
        Ok(())
    }
}

impl Mask {
    pub fn empty(grid: GridShape) -> Self {
        Self {
            grid,
            bits: vec![false; grid.len()],
        }
    }

    pub fn full(grid: GridShape) -> Self {
        Self {
            grid,
            bits: vec![true; grid.len()],
        }
    }

    pub fn from_fn(grid: GridShape, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut bits = Vec::with_capacity(grid.len());
        for y in 0..grid.height {
            for x in 0..grid.width {
                bits.push(f(y, x));
            }
        }
        Self { grid, bits }
    }

    pub fn from_bits(grid: GridShape, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != grid.len() {
            return Err(Error::Invalid(format!(
                "mask of {} pixels for a {}x{} grid",
                bits.len(),
                grid.height,
                grid.width
            )));
        }
        Ok(Self { grid, bits })
    }

    /// Accepts a matrix of exact zeros and ones, either `H × W` or `N × 1`.
    pub fn from_matrix(m: &Matrix, grid: GridShape) -> Result<Self> {
        if m.len() != grid.len() {
            return Err(Error::shape(
                "Mask::from_matrix",
                m.shape(),
                (grid.height, grid.width),
            ));
        }
        let mut bits = Vec::with_capacity(m.len());
        for (i, &v) in m.data().iter().enumerate() {
            match v {
                0.0 => bits.push(false),
                1.0 => bits.push(true),
                _ => {
                    return Err(Error::Domain {
                        op: "Mask::from_matrix",
                        detail: format!("pixel {i} is {v}, expected 0 or 1"),
                    })
                }
            }
        }
        Ok(Self { grid, bits })
    }

    /// Pixels at or above `threshold`.
    pub fn threshold(m: &Matrix, grid: GridShape, threshold: f64) -> Result<Self> {
        if m.len() != grid.len() {
            return Err(Error::shape(
                "Mask::threshold",
                m.shape(),
                (grid.height, grid.width),
            ));
        }
        Ok(Self {
            grid,
            bits: m.data().iter().map(|&v| v >= threshold).collect(),
        })
    }

    /// `N × 1` column of zeros and ones.
    pub fn to_column(&self) -> Matrix {
        Matrix::column(
            self.bits
                .iter()
                .map(|&b| if b { 1.0 } else { 0.0 })
                .collect(),
        )
    }

    /// `H × W` image of zeros and ones.
    pub fn to_image(&self) -> Matrix {
        Matrix::from_fn(self.grid.height, self.grid.width, |y, x| {
            if self.get(y, x) {
                1.0
            } else {
                0.0
            }
        })
    }

    pub fn grid(&self) -> GridShape {
        self.grid
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, y: usize, x: usize) -> bool {
        self.bits[y * self.grid.width + x]
    }

    pub fn set(&mut self, y: usize, x: usize, v: bool) {
        self.bits[y * self.grid.width + x] = v;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn fraction(&self) -> f64 {
        if self.bits.is_empty() {
            0.0
        } else {
            self.count() as f64 / self.bits.len() as f64
        }
    }

    fn check(&self, other: &Mask, op: &'static str) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::shape(
                op,
                (self.grid.height, self.grid.width),
                (other.grid.height, other.grid.width),
            ));
        }
        Ok(())
    }

    fn zip(&self, other: &Mask, op: &'static str, f: impl Fn(bool, bool) -> bool) -> Result<Mask> {
        self.check(other, op)?;
        Ok(Mask {
            grid: self.grid,
            bits: self
                .bits
                .iter()
                .zip(&other.bits)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn and(&self, other: &Mask) -> Result<Mask> {
        self.zip(other, "Mask::and", |a, b| a && b)
    }

    pub fn or(&self, other: &Mask) -> Result<Mask> {
        self.zip(other, "Mask::or", |a, b| a || b)
    }

    pub fn minus(&self, other: &Mask) -> Result<Mask> {
        self.zip(other, "Mask::minus", |a, b| a && !b)
    }

    pub fn complement(&self) -> Mask {
        Mask {
            grid: self.grid,
            bits: self.bits.iter().map(|&b| !b).collect(),
        }
    }

    /// One 4-connected step. Out-of-frame neighbours never count as set.
    fn step(&self, grow: bool) -> Mask {
        let (h, w) = (self.grid.height, self.grid.width);
        Mask::from_fn(self.grid, |y, x| {
            let neighbours = [
                (y > 0).then(|| self.get(y - 1, x)),
                (y + 1 < h).then(|| self.get(y + 1, x)),
                (x > 0).then(|| self.get(y, x - 1)),
                (x + 1 < w).then(|| self.get(y, x + 1)),
            ];
            let centre = self.get(y, x);
            if grow {
                centre || neighbours.contains(&Some(true))
            } else {
                centre && neighbours.iter().all(|n| *n == Some(true))
            }
        })
    }

    /// Dilation by a diamond of radius `radius`, clipped to the frame.
    pub fn dilate(&self, radius: usize) -> Mask {
        (0..radius).fold(self.clone(), |m, _| m.step(true))
    }

    /// Erosion by a diamond of radius `radius`; pixels outside the frame
    /// count as background.
    pub fn erode(&self, radius: usize) -> Mask {
        (0..radius).fold(self.clone(), |m, _| m.step(false))
    }
}
