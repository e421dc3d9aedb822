//! Embeddings `K(theta) = W theta + periodic(theta)` of the torus.

use crate::error::{Result, WhiskerError};
use crate::fourier::{FourierMap, Grid, MatrixField};
use crate::linalg::Matrix;
use crate::scalar::Real;

/// Torus embedding with an integer winding part.
///
/// Angle coordinates of phase space are lifted to `R`, so an embedding
/// that wraps once around an angle carries a `theta` term that is not
/// periodic. Only the periodic remainder is stored as a Fourier series.
#[derive(Clone, Debug, PartialEq)]
pub struct Embedding<T> {
    pub winding: Matrix<T>,
    pub periodic: FourierMap<T>,
}

/// Winding matrix sending torus angle `i` to phase-space coordinate `angles[i]`.
pub fn winding_for<T: Real>(dim: usize, angles: &[usize]) -> Matrix<T> {
    let mut w = Matrix::zeros(dim, angles.len());
    for (i, &a) in angles.iter().enumerate() {
        w[(a, i)] = T::one();
    }
    w
}

impl<T: Real> Embedding<T> {
    pub fn new(winding: Matrix<T>, periodic: FourierMap<T>) -> Result<Self> {
        if winding.rows() != periodic.m() || winding.cols() != periodic.grid().dim() {
            return Err(WhiskerError::Shape(format!(
                "winding {:?} incompatible with {}-dimensional torus in R^{}",
                winding.shape(),
                periodic.grid().dim(),
                periodic.m()
            )));
        }
        Ok(Self { winding, periodic })
    }

    /// Sample a full embedding `theta -> K(theta)` and strip the winding.
    pub fn from_fn(grid: &Grid, winding: Matrix<T>, f: impl Fn(&[f64]) -> Vec<T>) -> Result<Self> {
        let dim = winding.rows();
        let w = winding.clone();
        let periodic = FourierMap::from_fn(grid, dim, |t| {
            let th: Vec<T> = t.iter().map(|&x| T::lit(x)).collect();
            let lin = w.matvec(&th);
            f(t).iter().zip(lin).map(|(&a, b)| a - b).collect()
        })?;
        Self::new(winding, periodic)
    }

    pub fn grid(&self) -> &Grid {
        self.periodic.grid()
    }

    /// Phase-space dimension.
    pub fn dim(&self) -> usize {
        self.periodic.m()
    }

    pub fn torus_dim(&self) -> usize {
        self.winding.cols()
    }

    fn add_linear(&self, grid: &Grid, per: Vec<Vec<T>>, offset: &[f64]) -> Vec<Vec<T>> {
        per.into_iter()
            .enumerate()
            .map(|(j, p)| {
                let th: Vec<T> = grid.theta(j).iter().zip(offset).map(|(&a, &b)| T::lit(a + b)).collect();
                let lin = self.winding.matvec(&th);
                p.iter().zip(lin).map(|(&a, b)| a + b).collect()
            })
            .collect()
    }

    /// `K(theta_j)` at the grid points.
    pub fn points(&self) -> Vec<Vec<T>> {
        let zero = vec![0.0; self.torus_dim()];
        self.add_linear(self.grid(), self.periodic.to_points(), &zero)
    }

    /// `K` at the points of another (usually finer) grid.
    pub fn points_on(&self, grid: &Grid) -> Result<Vec<Vec<T>>> {
        let zero = vec![0.0; self.torus_dim()];
        Ok(self.add_linear(grid, self.periodic.resample(grid)?.to_points(), &zero))
    }

    /// `K(theta_j + omega)`.
    pub fn shifted_points(&self, omega: &[f64]) -> Vec<Vec<T>> {
        self.add_linear(self.grid(), self.periodic.shift(omega).to_points(), omega)
    }

    pub fn shifted_points_on(&self, grid: &Grid, omega: &[f64]) -> Result<Vec<Vec<T>>> {
        Ok(self.add_linear(grid, self.periodic.resample(grid)?.shift(omega).to_points(), omega))
    }

    /// `DK` on the grid.
    pub fn jacobian(&self) -> Result<MatrixField<T>> {
        let l = self.torus_dim();
        let parts: Vec<Vec<Vec<T>>> = (0..l).map(|a| self.periodic.derivative(a).to_points()).collect();
        let dim = self.dim();
        let values = (0..self.grid().len())
            .map(|j| {
                let mut m = self.winding.clone();
                for (a, part) in parts.iter().enumerate() {
                    for r in 0..dim {
                        m[(r, a)] += part[j][r];
                    }
                }
                m
            })
            .collect();
        MatrixField::new(self.grid(), values)
    }

    /// `K` at an arbitrary angle.
    pub fn eval(&self, theta: &[f64]) -> Vec<T> {
        let th: Vec<T> = theta.iter().map(|&x| T::lit(x)).collect();
        let lin = self.winding.matvec(&th);
        self.periodic.eval(theta).into_iter().zip(lin).map(|(a, b)| a + b).collect()
    }

    /// `K o T_tau`.
    pub fn compose_shift(&self, tau: &[f64]) -> Self {
        let mut periodic = self.periodic.shift(tau);
        let th: Vec<T> = tau.iter().map(|&x| T::lit(x)).collect();
        let offset = self.winding.matvec(&th);
        let n = self.grid().len();
        for (c, o) in offset.into_iter().enumerate() {
            periodic.coeffs_mut()[c * n].re += o;
        }
        Self { winding: self.winding.clone(), periodic }
    }

    /// Add a periodic correction.
    pub fn add(&self, delta: &FourierMap<T>) -> Result<Self> {
        Ok(Self { winding: self.winding.clone(), periodic: self.periodic.add(delta)? })
    }

    /// Grid sup distance between two embeddings with equal winding.
    pub fn distance(&self, other: &Self) -> Result<T> {
        if self.winding != other.winding {
            return Err(WhiskerError::Shape("embeddings wind differently".into()));
        }
        let grid = if self.grid().len() >= other.grid().len() { self.grid() } else { other.grid() };
        let a = self.periodic.resample(grid)?;
        let b = other.periodic.resample(grid)?;
        Ok(a.sub(&b)?.sup_grid())
    }

    pub fn resample(&self, grid: &Grid) -> Result<Self> {
        Ok(Self { winding: self.winding.clone(), periodic: self.periodic.resample(grid)? })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn winding_is_separated_from_periodic_part() {
        let grid = Grid::new(&[16]).unwrap();
        let w = winding_for::<f64>(4, &[0]);
        let k = Embedding::from_fn(&grid, w, |t| {
            vec![t[0] + 0.1 * (std::f64::consts::TAU * t[0]).sin(), 0.6, 0.0, 0.0]
        })
        .unwrap();
        assert!(k.periodic.average()[0].abs() < 1e-15);
        let p = k.eval(&[0.3]);
        assert!((p[0] - 0.3 - 0.1 * (std::f64::consts::TAU * 0.3).sin()).abs() < 1e-14);
        let dk = k.jacobian().unwrap();
        assert!((dk.at(0)[(0, 0)] - (1.0 + 0.1 * std::f64::consts::TAU)).abs() < 1e-13);
        let s = k.compose_shift(&[0.25]);
        let q = s.eval(&[0.05]);
        assert!((q[0] - k.eval(&[0.3])[0]).abs() < 1e-14);
    }
}
