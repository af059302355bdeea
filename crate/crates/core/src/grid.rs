//! Dense row-major 2D grids and rectangular pixel regions.

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Row-major 2D array; element `(ix, iy)` lives at `iy * nx + ix`.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid<T> {
    nx: usize,
    ny: usize,
    data: Vec<T>,
}

impl<T: Copy> Grid<T> {
    pub fn filled(nx: usize, ny: usize, value: T) -> Self {
        Self { nx, ny, data: vec![value; nx * ny] }
    }

    pub fn from_vec(nx: usize, ny: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != nx * ny {
            return Err(Error::DimensionMismatch(format!("{} values for a {nx}x{ny} grid", data.len())));
        }
        Ok(Self { nx, ny, data })
    }

    pub fn from_fn(nx: usize, ny: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(nx * ny);
        for iy in 0..ny {
            for ix in 0..nx {
                data.push(f(ix, iy));
            }
        }
        Self { nx, ny, data }
    }

    #[inline]
    pub fn nx(&self) -> usize {
        self.nx
    }

    #[inline]
    pub fn ny(&self) -> usize {
        self.ny
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.nx, self.ny)
    }

    #[inline]
    pub fn get(&self, ix: usize, iy: usize) -> T {
        self.data[iy * self.nx + ix]
    }

    #[inline]
    pub fn set(&mut self, ix: usize, iy: usize, value: T) {
        self.data[iy * self.nx + ix] = value;
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn row(&self, iy: usize) -> &[T] {
        &self.data[iy * self.nx..(iy + 1) * self.nx]
    }

    pub fn map<U: Copy>(&self, f: impl FnMut(T) -> U) -> Grid<U> {
        Grid { nx: self.nx, ny: self.ny, data: self.data.iter().copied().map(f).collect() }
    }

    pub fn zip_map<U: Copy, V: Copy>(&self, other: &Grid<U>, mut f: impl FnMut(T, U) -> V) -> Result<Grid<V>> {
        self.check_same_dims(other)?;
        Ok(Grid { nx: self.nx, ny: self.ny, data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect() })
    }

    pub fn check_same_dims<U>(&self, other: &Grid<U>) -> Result<()> {
        if self.dims() != (other.nx, other.ny) {
            return Err(Error::DimensionMismatch(format!("{}x{} vs {}x{}", self.nx, self.ny, other.nx, other.ny)));
        }
        Ok(())
    }

    /// Copies the sub-grid covered by `region`.
    pub fn crop(&self, region: Region) -> Result<Self> {
        region.check_within(self.nx, self.ny)?;
        Ok(Self::from_fn(region.width, region.height, |ix, iy| self.get(region.x0 + ix, region.y0 + iy)))
    }
}

impl<T: Real> Grid<T> {
    pub fn sum(&self) -> T {
        self.data.iter().copied().sum()
    }

    pub fn min_max(&self) -> (T, T) {
        self.data.iter().fold((T::infinity(), T::neg_infinity()), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }

    pub fn scale(&mut self, factor: T) {
        self.data.iter_mut().for_each(|v| *v = *v * factor);
    }
}

/// Rectangular pixel region `[x0, x0 + width) x [y0, y0 + height)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Region {
    pub x0: usize,
    pub y0: usize,
    pub width: usize,
    pub height: usize,
}

impl Region {
    pub fn new(x0: usize, y0: usize, width: usize, height: usize) -> Self {
        Self { x0, y0, width, height }
    }

    pub fn full(nx: usize, ny: usize) -> Self {
        Self { x0: 0, y0: 0, width: nx, height: ny }
    }

    /// Inclusive-exclusive bounds given as `x in [x_lo, x_hi)`, `y in [y_lo, y_hi)`.
    pub fn from_bounds(x_lo: usize, x_hi: usize, y_lo: usize, y_hi: usize) -> Self {
        Self { x0: x_lo, y0: y_lo, width: x_hi.saturating_sub(x_lo), height: y_hi.saturating_sub(y_lo) }
    }

    /// Centered region of the given size inside an `nx x ny` frame.
    pub fn centered(nx: usize, ny: usize, width: usize, height: usize) -> Self {
        Self {
            x0: nx.saturating_sub(width) / 2,
            y0: ny.saturating_sub(height) / 2,
            width: width.min(nx),
            height: height.min(ny),
        }
    }

    pub fn check_within(&self, nx: usize, ny: usize) -> Result<()> {
        if self.width == 0 || self.height == 0 || self.x0 + self.width > nx || self.y0 + self.height > ny {
            return Err(Error::DimensionMismatch(format!(
                "region {}+{} x {}+{} outside {nx}x{ny}",
                self.x0, self.width, self.y0, self.height
            )));
        }
        Ok(())
    }

    pub fn contains(&self, ix: usize, iy: usize) -> bool {
        ix >= self.x0 && ix < self.x0 + self.width && iy >= self.y0 && iy < self.y0 + self.height
    }

    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn crop_reads_the_right_window() {
        let g = Grid::from_fn(5, 4, |x, y| (10 * y + x) as f64);
        let c = g.crop(Region::new(1, 2, 3, 2)).unwrap();
        assert_eq!(c.dims(), (3, 2));
        assert_eq!(c.get(0, 0), 21.0);
        assert_eq!(c.get(2, 1), 33.0);
        assert!(g.crop(Region::new(4, 0, 2, 1)).is_err());
    }

    #[test]
    fn from_vec_rejects_wrong_length() {
        assert!(Grid::from_vec(2, 2, vec![0.0_f64; 3]).is_err());
    }
}
