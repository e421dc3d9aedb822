use rayon::prelude::*;

use super::{FourierMap, Grid};
use crate::error::{Result, WhiskerError};
use crate::linalg::Matrix;
use crate::scalar::Real;

/// Matrix-valued function sampled on a grid.
///
/// Pointwise algebra happens on samples; rotations and averages go through
/// the spectral representation.
#[derive(Clone, Debug, PartialEq)]
pub struct MatrixField<T> {
    grid: Grid,
    rows: usize,
    cols: usize,
    values: Vec<Matrix<T>>,
}

impl<T: Real> MatrixField<T> {
    pub fn new(grid: &Grid, values: Vec<Matrix<T>>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(WhiskerError::Shape(format!("field needs {} samples, got {}", grid.len(), values.len())));
        }
        let (rows, cols) = values.first().map(|m| m.shape()).unwrap_or((0, 0));
        if values.iter().any(|m| m.shape() != (rows, cols)) {
            return Err(WhiskerError::Shape("field samples of differing shape".into()));
        }
        Ok(Self { grid: grid.clone(), rows, cols, values })
    }

    pub fn constant(grid: &Grid, m: &Matrix<T>) -> Self {
        Self { grid: grid.clone(), rows: m.rows(), cols: m.cols(), values: vec![m.clone(); grid.len()] }
    }

    /// Build by evaluating `f` at each grid index, in parallel.
    pub fn from_index_fn(grid: &Grid, f: impl Fn(usize) -> Matrix<T> + Sync) -> Result<Self> {
        let values: Vec<Matrix<T>> = (0..grid.len()).into_par_iter().map(&f).collect();
        Self::new(grid, values)
    }

    pub fn try_from_index_fn(grid: &Grid, f: impl Fn(usize) -> Result<Matrix<T>> + Sync) -> Result<Self> {
        let values: Result<Vec<Matrix<T>>> = (0..grid.len()).into_par_iter().map(&f).collect();
        Self::new(grid, values?)
    }

    /// Entry `(r, c)` becomes component `r * cols + c`.
    pub fn from_fourier(f: &FourierMap<T>, rows: usize, cols: usize) -> Result<Self> {
        if f.m() != rows * cols {
            return Err(WhiskerError::Shape(format!("{} components cannot form {rows}x{cols}", f.m())));
        }
        let pts = f.to_points();
        Self::new(f.grid(), pts.into_iter().map(|p| Matrix::from_row_slice(rows, cols, &p)).collect())
    }

    pub fn to_fourier(&self) -> Result<FourierMap<T>> {
        let pts: Vec<Vec<T>> = self.values.iter().map(|m| m.as_slice().to_vec()).collect();
        FourierMap::from_points(&self.grid, self.rows * self.cols, &pts)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn values(&self) -> &[Matrix<T>] {
        &self.values
    }

    pub fn at(&self, j: usize) -> &Matrix<T> {
        &self.values[j]
    }

    /// Field `theta -> M(theta + omega)`.
    pub fn shift(&self, omega: &[f64]) -> Result<Self> {
        Self::from_fourier(&self.to_fourier()?.shift(omega), self.rows, self.cols)
    }

    pub fn average(&self) -> Matrix<T> {
        let n = T::from_usize_(self.values.len());
        let mut acc = Matrix::zeros(self.rows, self.cols);
        for m in &self.values {
            acc = &acc + m;
        }
        acc.scale(T::one() / n)
    }

    /// Pointwise map.
    pub fn map(&self, f: impl Fn(&Matrix<T>) -> Matrix<T> + Sync) -> Result<Self> {
        Self::new(&self.grid, self.values.par_iter().map(&f).collect())
    }

    pub fn try_map(&self, f: impl Fn(&Matrix<T>) -> Result<Matrix<T>> + Sync) -> Result<Self> {
        let v: Result<Vec<_>> = self.values.par_iter().map(&f).collect();
        Self::new(&self.grid, v?)
    }

    /// Pointwise combination of two fields.
    pub fn zip(&self, other: &Self, f: impl Fn(&Matrix<T>, &Matrix<T>) -> Matrix<T> + Sync) -> Result<Self> {
        if self.grid != other.grid {
            return Err(WhiskerError::Shape("fields on different grids".into()));
        }
        Self::new(&self.grid, self.values.par_iter().zip(&other.values).map(|(a, b)| f(a, b)).collect())
    }

    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.zip(other, |a, b| a * b)
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip(other, |a, b| a - b)
    }

    pub fn transpose(&self) -> Self {
        Self {
            grid: self.grid.clone(),
            rows: self.cols,
            cols: self.rows,
            values: self.values.iter().map(|m| m.transpose()).collect(),
        }
    }

    /// Grid sup of the largest absolute entry.
    pub fn sup_abs(&self) -> T {
        self.values.iter().fold(T::zero(), |s, m| s.max(m.max_abs()))
    }

    /// Grid sup of the spectral norm.
    pub fn sup_norm2(&self) -> T {
        self.values.par_iter().map(|m| m.norm2()).collect::<Vec<_>>().into_iter().fold(T::zero(), T::max)
    }

    /// Apply pointwise to a vector field given as point-major samples.
    pub fn apply(&self, v: &[Vec<T>]) -> Vec<Vec<T>> {
        self.values.iter().zip(v).map(|(m, x)| m.matvec(x)).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|m| m.is_finite())
    }
}

/// Shift a point-major vector field by `omega` through its Fourier series.
pub fn shift_points<T: Real>(grid: &Grid, pts: &[Vec<T>], omega: &[f64]) -> Result<Vec<Vec<T>>> {
    let m = pts.first().map_or(0, |p| p.len());
    Ok(FourierMap::from_points(grid, m, pts)?.shift(omega).to_points())
}

/// Average of a point-major vector field.
pub fn average_points<T: Real>(pts: &[Vec<T>]) -> Vec<T> {
    let m = pts.first().map_or(0, |p| p.len());
    let n = T::from_usize_(pts.len());
    let mut acc = vec![T::zero(); m];
    for p in pts {
        for (a, &x) in acc.iter_mut().zip(p) {
            *a += x;
        }
    }
    acc.into_iter().map(|a| a / n).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shifted_rotation_field() {
        let grid = Grid::new(&[32]).unwrap();
        let f = MatrixField::from_index_fn(&grid, |j| {
            let a = std::f64::consts::TAU * grid.theta(j)[0];
            Matrix::from_row_slice(2, 2, &[a.cos(), -a.sin(), a.sin(), a.cos()])
        })
        .unwrap();
        let s = f.shift(&[0.125]).unwrap();
        let a = std::f64::consts::TAU * 0.125;
        assert!((s.at(0)[(0, 0)] - a.cos()).abs() < 1e-14);
        assert!((s.at(0)[(1, 0)] - a.sin()).abs() < 1e-14);
        assert!(f.average().max_abs() < 1e-15);
    }
}
