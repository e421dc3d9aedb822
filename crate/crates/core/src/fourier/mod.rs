//! Truncated Fourier series on `T^l` with values in `R^m`.
//!
//! Coefficients follow `f_k = (1/N) sum_j f(theta_j) exp(-2 pi i k.theta_j)`
//! on the uniform grid `theta_j = j / N`. Storage is component-major and,
//! inside a component, row-major over axes in FFT order (`k` runs
//! `0, 1, .., N/2 - 1, -N/2, .., -1`). The mode `-N/2` is the Nyquist
//! mode; transforms keep it, operators that need a Hermitian partner
//! (shift, derivative) drop it.

mod fft;
mod field;
mod io;

pub use field::{average_points, shift_points, MatrixField};
pub use io::{read_coefficients, write_coefficients};

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{Result, WhiskerError};
use crate::scalar::{frac_dot, Real};

/// Uniform grid on `T^l`, power-of-two points per axis.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Grid {
    sizes: Vec<usize>,
}

impl Grid {
    pub fn new(sizes: &[usize]) -> Result<Self> {
        if sizes.is_empty() {
            return Err(WhiskerError::InvalidGrid("torus dimension must be at least 1".into()));
        }
        for &n in sizes {
            if n < 2 || !n.is_power_of_two() {
                return Err(WhiskerError::InvalidGrid(format!("grid size {n} is not a power of two >= 2")));
            }
        }
        Ok(Self { sizes: sizes.to_vec() })
    }

    /// Same size `n` on each of `l` axes.
    pub fn cube(l: usize, n: usize) -> Result<Self> {
        Self::new(&vec![n; l])
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    /// Torus dimension.
    pub fn dim(&self) -> usize {
        self.sizes.len()
    }

    /// Number of grid points.
    pub fn len(&self) -> usize {
        self.sizes.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Multi-index of the flat position `idx`.
    pub fn multi_index(&self, mut idx: usize) -> Vec<usize> {
        let mut out = vec![0; self.sizes.len()];
        for (a, &n) in self.sizes.iter().enumerate().rev() {
            out[a] = idx % n;
            idx /= n;
        }
        out
    }

    pub fn flat_index(&self, multi: &[usize]) -> usize {
        multi.iter().zip(&self.sizes).fold(0, |acc, (&i, &n)| acc * n + i)
    }

    /// Angle vector of grid point `idx`.
    pub fn theta(&self, idx: usize) -> Vec<f64> {
        self.multi_index(idx).iter().zip(&self.sizes).map(|(&i, &n)| i as f64 / n as f64).collect()
    }

    /// Wavenumber stored at flat position `idx`.
    pub fn wavenumber(&self, idx: usize) -> Vec<i64> {
        self.multi_index(idx)
            .iter()
            .zip(&self.sizes)
            .map(|(&i, &n)| if i < n / 2 { i as i64 } else { i as i64 - n as i64 })
            .collect()
    }

    /// Flat position of wavenumber `k`, if it lies in the box.
    pub fn mode_index(&self, k: &[i64]) -> Option<usize> {
        if k.len() != self.sizes.len() {
            return None;
        }
        let mut multi = Vec::with_capacity(k.len());
        for (&kj, &n) in k.iter().zip(&self.sizes) {
            let half = (n / 2) as i64;
            if kj < -half || kj >= half {
                return None;
            }
            multi.push(if kj >= 0 { kj as usize } else { (kj + n as i64) as usize });
        }
        Some(self.flat_index(&multi))
    }

    /// Whether position `idx` carries a Nyquist wavenumber on some axis.
    pub fn is_nyquist(&self, idx: usize) -> bool {
        self.multi_index(idx).iter().zip(&self.sizes).any(|(&i, &n)| i == n / 2)
    }

    pub fn scaled(&self, factor: usize) -> Result<Self> {
        Self::new(&self.sizes.iter().map(|&n| n * factor).collect::<Vec<_>>())
    }
}

/// Weighted norm value on a strip of half-width `rho`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StripNorm<T> {
    pub rho: T,
    pub value: T,
}

/// Vector-valued trigonometric polynomial on `T^l`.
#[derive(Clone, Debug, PartialEq)]
pub struct FourierMap<T> {
    grid: Grid,
    m: usize,
    coeffs: Vec<Complex<T>>,
}

fn czero<T: Real>() -> Complex<T> {
    Complex::new(T::zero(), T::zero())
}

/// `exp(2 pi i k.omega)` with the phase reduced in double-double first.
pub(crate) fn phase<T: Real>(k: &[i64], omega: &[f64]) -> Complex<T> {
    let r = frac_dot(k, omega);
    let a = std::f64::consts::TAU * r;
    Complex::new(T::lit(a.cos()), T::lit(a.sin()))
}

impl<T: Real> FourierMap<T> {
    pub fn zeros(grid: &Grid, m: usize) -> Self {
        Self { grid: grid.clone(), m, coeffs: vec![czero(); m * grid.len()] }
    }

    /// Constant map with value `v`.
    pub fn constant(grid: &Grid, v: &[T]) -> Self {
        let mut f = Self::zeros(grid, v.len());
        let n = grid.len();
        for (c, &x) in v.iter().enumerate() {
            f.coeffs[c * n] = Complex::new(x, T::zero());
        }
        f
    }

    /// Build from raw coefficients in storage order.
    pub fn from_coeffs(grid: &Grid, m: usize, coeffs: Vec<Complex<T>>) -> Result<Self> {
        if coeffs.len() != m * grid.len() {
            return Err(WhiskerError::Shape(format!(
                "expected {} coefficients, got {}",
                m * grid.len(),
                coeffs.len()
            )));
        }
        Ok(Self { grid: grid.clone(), m, coeffs })
    }

    /// Interpolating series from component-major grid samples.
    pub fn from_grid(grid: &Grid, m: usize, samples: &[T]) -> Result<Self> {
        let n = grid.len();
        if samples.len() != m * n {
            return Err(WhiskerError::Shape(format!("expected {} samples, got {}", m * n, samples.len())));
        }
        if let Some(pos) = samples.iter().position(|x| !x.is_finite()) {
            return Err(WhiskerError::NonFinite { index: pos % n, component: pos / n });
        }
        let scale = T::one() / T::from_usize_(n);
        let mut coeffs: Vec<Complex<T>> = samples.iter().map(|&x| Complex::new(x, T::zero())).collect();
        for c in 0..m {
            let block = &mut coeffs[c * n..(c + 1) * n];
            fft::transform(block, grid.sizes(), true);
            for z in block.iter_mut() {
                *z *= scale;
            }
        }
        let mut f = Self { grid: grid.clone(), m, coeffs };
        f.symmetrize();
        Ok(f)
    }

    /// Sample with a closure `theta -> value`.
    pub fn from_fn(grid: &Grid, m: usize, mut f: impl FnMut(&[f64]) -> Vec<T>) -> Result<Self> {
        let n = grid.len();
        let mut samples = vec![T::zero(); m * n];
        for j in 0..n {
            let v = f(&grid.theta(j));
            for c in 0..m {
                samples[c * n + j] = v[c];
            }
        }
        Self::from_grid(grid, m, &samples)
    }

    /// Enforce `f_{-k} = conj(f_k)`.
    fn symmetrize(&mut self) {
        let n = self.grid.len();
        let half = T::lit(0.5);
        for c in 0..self.m {
            for j in 0..n {
                let k: Vec<i64> = self.grid.wavenumber(j).iter().map(|&x| -x).collect();
                // -(-N/2) wraps to the Nyquist slot itself
                let jm = self.grid.mode_index(&k).unwrap_or_else(|| {
                    let multi: Vec<usize> = self
                        .grid
                        .multi_index(j)
                        .iter()
                        .zip(self.grid.sizes())
                        .map(|(&i, &nn)| (nn - i) % nn)
                        .collect();
                    self.grid.flat_index(&multi)
                });
                if jm < j {
                    continue;
                }
                let a = self.coeffs[c * n + j];
                let b = self.coeffs[c * n + jm];
                let s = (a + b.conj()) * half;
                self.coeffs[c * n + j] = s;
                self.coeffs[c * n + jm] = s.conj();
            }
        }
    }

    /// Component-major samples on the grid.
    pub fn to_grid(&self) -> Vec<T> {
        let n = self.grid.len();
        let mut out = vec![T::zero(); self.m * n];
        let mut buf = vec![czero::<T>(); n];
        for c in 0..self.m {
            buf.copy_from_slice(&self.coeffs[c * n..(c + 1) * n]);
            fft::transform(&mut buf, self.grid.sizes(), false);
            for j in 0..n {
                out[c * n + j] = buf[j].re;
            }
        }
        out
    }

    /// Point-major samples: `out[j]` is the vector value at grid point `j`.
    pub fn to_points(&self) -> Vec<Vec<T>> {
        let g = self.to_grid();
        let n = self.grid.len();
        (0..n).map(|j| (0..self.m).map(|c| g[c * n + j]).collect()).collect()
    }

    pub fn from_points(grid: &Grid, m: usize, pts: &[Vec<T>]) -> Result<Self> {
        let n = grid.len();
        if pts.len() != n {
            return Err(WhiskerError::Shape(format!("expected {n} points, got {}", pts.len())));
        }
        let mut samples = vec![T::zero(); m * n];
        for (j, p) in pts.iter().enumerate() {
            for c in 0..m {
                samples[c * n + j] = p[c];
            }
        }
        Self::from_grid(grid, m, &samples)
    }

    /// Evaluate the series at an arbitrary angle.
    pub fn eval(&self, theta: &[f64]) -> Vec<T> {
        let n = self.grid.len();
        let mut out = vec![T::zero(); self.m];
        for j in 0..n {
            let k = self.grid.wavenumber(j);
            let e = if self.grid.is_nyquist(j) {
                // real interpolant: Nyquist term contributes Re(c) cos
                let a = std::f64::consts::TAU * k.iter().zip(theta).map(|(&a, &b)| a as f64 * b).sum::<f64>();
                Complex::new(T::lit(a.cos()), T::zero())
            } else {
                phase::<T>(&k, theta)
            };
            for c in 0..self.m {
                out[c] += (self.coeffs[c * n + j] * e).re;
            }
        }
        out
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// Codomain dimension.
    pub fn m(&self) -> usize {
        self.m
    }

    pub fn coeffs(&self) -> &[Complex<T>] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [Complex<T>] {
        &mut self.coeffs
    }

    pub fn coeff(&self, c: usize, k: &[i64]) -> Complex<T> {
        match self.grid.mode_index(k) {
            Some(j) => self.coeffs[c * self.grid.len() + j],
            None => czero(),
        }
    }

    /// Set `f_k` and its Hermitian partner.
    pub fn set_mode(&mut self, c: usize, k: &[i64], v: Complex<T>) {
        let n = self.grid.len();
        if let Some(j) = self.grid.mode_index(k) {
            self.coeffs[c * n + j] = v;
        }
        let mk: Vec<i64> = k.iter().map(|&x| -x).collect();
        if let Some(j) = self.grid.mode_index(&mk) {
            self.coeffs[c * n + j] = v.conj();
        }
    }

    /// Composition with the rotation `theta -> theta + omega`.
    pub fn shift(&self, omega: &[f64]) -> Self {
        let n = self.grid.len();
        let mut out = self.clone();
        for j in 0..n {
            let factor = if self.grid.is_nyquist(j) { czero() } else { phase::<T>(&self.grid.wavenumber(j), omega) };
            for c in 0..self.m {
                out.coeffs[c * n + j] = self.coeffs[c * n + j] * factor;
            }
        }
        out
    }

    /// Partial derivative along `axis`.
    pub fn derivative(&self, axis: usize) -> Self {
        let mut w = vec![0.0; self.grid.dim()];
        w[axis] = 1.0;
        self.directional(&w)
    }

    /// Derivative in the direction `omega`: `sum_i omega_i d/dtheta_i`.
    pub fn directional(&self, omega: &[f64]) -> Self {
        let n = self.grid.len();
        let mut out = self.clone();
        for j in 0..n {
            let factor = if self.grid.is_nyquist(j) {
                czero()
            } else {
                let kw: f64 = self.grid.wavenumber(j).iter().zip(omega).map(|(&k, &w)| k as f64 * w).sum();
                Complex::new(T::zero(), T::two_pi() * T::lit(kw))
            };
            for c in 0..self.m {
                out.coeffs[c * n + j] = self.coeffs[c * n + j] * factor;
            }
        }
        out
    }

    /// Zeroth mode of every component.
    pub fn average(&self) -> Vec<T> {
        (0..self.m).map(|c| self.coeffs[c * self.grid.len()].re).collect()
    }

    /// `max_c sum_k |f_k| exp(2 pi |k|_1 rho)`.
    pub fn l1_norm(&self, rho: T) -> T {
        let n = self.grid.len();
        let weights: Vec<T> = (0..n)
            .map(|j| {
                let k1: i64 = self.grid.wavenumber(j).iter().map(|k| k.abs()).sum();
                (T::two_pi() * T::lit(k1 as f64) * rho).exp()
            })
            .collect();
        (0..self.m)
            .map(|c| (0..n).fold(T::zero(), |s, j| s + self.coeffs[c * n + j].norm() * weights[j]))
            .fold(T::zero(), T::max)
    }

    /// Norm surrogate: grid sup at `rho = 0`, weighted l1 bound otherwise.
    pub fn norm(&self, rho: T) -> StripNorm<T> {
        let value = if rho > T::zero() { self.l1_norm(rho) } else { self.sup_grid() };
        StripNorm { rho, value }
    }

    /// Largest absolute sample value over grid points and components.
    pub fn sup_grid(&self) -> T {
        self.to_grid().iter().fold(T::zero(), |m, &x| m.max(x.abs()))
    }

    /// Largest coefficient magnitude.
    pub fn max_coeff(&self) -> T {
        self.coeffs.iter().fold(T::zero(), |m, z| m.max(z.norm()))
    }

    /// Re-sample on a grid of different size, padding or truncating modes.
    ///
    /// Padding splits the Nyquist coefficient evenly between `+-N/2`;
    /// truncating folds the pair `+-M/2` back onto the Nyquist slot.
    pub fn resample(&self, target: &Grid) -> Result<Self> {
        if target.dim() != self.grid.dim() {
            return Err(WhiskerError::Shape("resample across torus dimensions".into()));
        }
        if target == &self.grid {
            return Ok(self.clone());
        }
        let n_old = self.grid.len();
        let n_new = target.len();
        let mut out = Self::zeros(target, self.m);
        let half = T::lit(0.5);
        for j in 0..n_old {
            let k = self.grid.wavenumber(j);
            // per-axis list of (target wavenumber, weight)
            let mut targets: Vec<(Vec<i64>, T)> = vec![(Vec::new(), T::one())];
            for (axis, &kj) in k.iter().enumerate() {
                let n = self.grid.sizes()[axis] as i64;
                let m = target.sizes()[axis] as i64;
                let opts: Vec<(i64, T)> = if m >= n {
                    if kj == -n / 2 && m > n {
                        vec![(-n / 2, half), (n / 2, half)]
                    } else {
                        vec![(kj, T::one())]
                    }
                } else if kj.abs() < m / 2 {
                    vec![(kj, T::one())]
                } else if kj.abs() == m / 2 {
                    vec![(-m / 2, T::one())]
                } else {
                    vec![]
                };
                let mut next = Vec::new();
                for (base, w) in &targets {
                    for &(t, tw) in &opts {
                        let mut b = base.clone();
                        b.push(t);
                        next.push((b, *w * tw));
                    }
                }
                targets = next;
            }
            for (kt, w) in targets {
                if let Some(jt) = target.mode_index(&kt) {
                    for c in 0..self.m {
                        let v = self.coeffs[c * n_old + j] * w;
                        out.coeffs[c * n_new + jt] += v;
                    }
                }
            }
        }
        Ok(out)
    }

    /// Zero-padded copy on a grid `factor` times finer.
    pub fn pad_dealias(&self, factor: usize) -> Result<Self> {
        if factor == 0 || !factor.is_power_of_two() {
            return Err(WhiskerError::InvalidGrid(format!("padding factor {factor} must be a power of two")));
        }
        self.resample(&self.grid.scaled(factor)?)
    }

    /// Zero every mode with `max_j |k_j| > kmax`; returns the discarded l1 mass.
    pub fn truncate(&self, kmax: usize) -> (Self, T) {
        let n = self.grid.len();
        let mut out = self.clone();
        let mut tails = vec![T::zero(); self.m];
        for j in 0..n {
            let kk = self.grid.wavenumber(j).iter().map(|k| k.unsigned_abs() as usize).max().unwrap_or(0);
            if kk > kmax {
                for c in 0..self.m {
                    tails[c] += self.coeffs[c * n + j].norm();
                    out.coeffs[c * n + j] = czero();
                }
            }
        }
        (out, tails.into_iter().fold(T::zero(), T::max))
    }

    /// Zero coefficients whose magnitude is below `tol`.
    pub fn filter_small(&mut self, tol: T) {
        for z in self.coeffs.iter_mut() {
            if z.norm() < tol {
                *z = czero();
            }
        }
    }

    /// Zero Nyquist coefficients.
    pub fn drop_nyquist(&mut self) {
        let n = self.grid.len();
        for j in 0..n {
            if self.grid.is_nyquist(j) {
                for c in 0..self.m {
                    self.coeffs[c * n + j] = czero();
                }
            }
        }
    }

    pub fn component(&self, c: usize) -> Self {
        let n = self.grid.len();
        Self { grid: self.grid.clone(), m: 1, coeffs: self.coeffs[c * n..(c + 1) * n].to_vec() }
    }

    pub fn stack(parts: &[Self]) -> Result<Self> {
        let grid = parts.first().map(|p| p.grid.clone()).ok_or_else(|| WhiskerError::Shape("empty stack".into()))?;
        let mut coeffs = Vec::new();
        let mut m = 0;
        for p in parts {
            if p.grid != grid {
                return Err(WhiskerError::Shape("stack across grids".into()));
            }
            coeffs.extend_from_slice(&p.coeffs);
            m += p.m;
        }
        Ok(Self { grid, m, coeffs })
    }

    pub fn scale(&self, s: T) -> Self {
        Self { grid: self.grid.clone(), m: self.m, coeffs: self.coeffs.iter().map(|&z| z * s).collect() }
    }

    fn zip_with(&self, other: &Self, f: impl Fn(Complex<T>, Complex<T>) -> Complex<T>) -> Result<Self> {
        if self.grid != other.grid || self.m != other.m {
            return Err(WhiskerError::Shape("Fourier maps on different grids or codomains".into()));
        }
        Ok(Self {
            grid: self.grid.clone(),
            m: self.m,
            coeffs: self.coeffs.iter().zip(&other.coeffs).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a - b)
    }

    /// `self + s * other`.
    pub fn axpy(&self, s: T, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a + b * s)
    }

    pub fn is_finite(&self) -> bool {
        self.coeffs.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    /// Convert the scalar type.
    pub fn cast<U: Real>(&self) -> FourierMap<U> {
        FourierMap {
            grid: self.grid.clone(),
            m: self.m,
            coeffs: self.coeffs.iter().map(|z| Complex::new(U::lit(z.re.to_f64_()), U::lit(z.im.to_f64_()))).collect(),
        }
    }
}
