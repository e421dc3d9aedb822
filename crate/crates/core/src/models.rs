//! Concrete exact symplectic systems with known limits.
//!
//! Maps on `T x R x R^2` use coordinates `(x, y, u, v)` with
//! `Omega = dx^dy + du^dv`; `x` is the lift of the angle.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::cohomology::golden_mean;
use crate::error::{Result, WhiskerError};
use crate::flow::{FlowFamily, Integrator, Time1Map, VectorField};
use crate::fourier::Grid;
use crate::geometry::{DomainBox, SymplecticSystem};
use crate::linalg::Matrix;
use crate::scalar::Real;
use crate::torus::{winding_for, Embedding};

fn box_around(y0: f64) -> DomainBox {
    DomainBox { bounds: vec![None, Some((y0 - 0.5, y0 + 0.5)), Some((-0.5, 0.5)), Some((-0.5, 0.5))] }
}

/// Flat torus `theta -> (theta, y0, 0, 0)`.
pub fn flat_torus<T: Real>(grid: &Grid, y0: f64) -> Result<Embedding<T>> {
    Embedding::from_fn(grid, winding_for(4, &[0]), |t| vec![T::lit(t[0]), T::lit(y0), T::zero(), T::zero()])
}

/// Exact flow of `tau y^2/2 + lambda_h u v` for time `t`.
fn drift_flow<T: Real>(shear: f64, lambda_h: f64, t: T, z: &[T]) -> (Vec<T>, Matrix<T>) {
    let tau = T::lit(shear) * t;
    let e = (T::lit(lambda_h) * t).exp();
    let out = vec![z[0] + tau * z[1], z[1], e * z[2], z[3] / e];
    let mut d = Matrix::identity(4);
    d[(0, 1)] = tau;
    d[(2, 2)] = e;
    d[(3, 3)] = T::one() / e;
    (out, d)
}

/// Exact flow of `eps cos(2 pi x)(1 + u)` for time `t`.
fn kick_flow<T: Real>(eps: f64, t: T, z: &[T]) -> (Vec<T>, Matrix<T>) {
    let tp = T::two_pi();
    let a = tp * z[0];
    let (s, c) = (a.sin(), a.cos());
    let e = T::lit(eps) * t;
    let w = T::one() + z[2];
    let out = vec![z[0], z[1] + tp * e * s * w, z[2], z[3] - e * c];
    let mut d = Matrix::identity(4);
    d[(1, 0)] = tp * tp * e * c * w;
    d[(1, 2)] = tp * e * s;
    d[(3, 0)] = tp * e * s;
    (out, d)
}

/// `F(x, y, u, v) = (x + y, y + drift, mu u, v / mu)`.
///
/// With `drift != 0` the map is symplectic but not exact and has no
/// invariant torus.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelT {
    pub mu: f64,
    pub omega0: f64,
    pub drift: f64,
}

impl ModelT {
    pub fn new(mu: f64, omega0: f64) -> Self {
        Self { mu, omega0, drift: 0.0 }
    }

    pub fn exact_torus<T: Real>(&self, grid: &Grid) -> Result<Embedding<T>> {
        flat_torus(grid, self.omega0)
    }
}

impl<T: Real> SymplecticSystem<T> for ModelT {
    fn dim(&self) -> usize {
        4
    }
    fn angles(&self) -> Vec<usize> {
        vec![0]
    }
    fn map(&self, z: &[T]) -> Result<Vec<T>> {
        let mu = T::lit(self.mu);
        Ok(vec![z[0] + z[1], z[1] + T::lit(self.drift), mu * z[2], z[3] / mu])
    }
    fn jacobian(&self, _z: &[T]) -> Result<Matrix<T>> {
        let mut d = Matrix::identity(4);
        d[(0, 1)] = T::one();
        d[(2, 2)] = T::lit(self.mu);
        d[(3, 3)] = T::lit(1.0 / self.mu);
        Ok(d)
    }
    fn exact(&self) -> bool {
        self.drift == 0.0
    }
    fn domain(&self) -> DomainBox {
        box_around(self.omega0)
    }
}

/// Kicked map `Phi_{H2/2} o Phi_{H1} o Phi_{H2/2}` with
/// `H1 = shear y^2/2 + lambda_h u v` and `H2 = eps cos(2 pi x)(1 + u)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelA {
    pub eps: f64,
    pub lambda_h: f64,
    pub shear: f64,
    pub omega0: f64,
}

impl ModelA {
    pub fn new(eps: f64, lambda_h: f64) -> Self {
        Self { eps, lambda_h, shear: 1.0, omega0: golden_mean() }
    }

    /// Height of the unperturbed torus with frequency `omega0`.
    pub fn y0(&self) -> f64 {
        self.omega0 / self.shear
    }

    /// The torus of the `eps = 0` map.
    pub fn seed<T: Real>(&self, grid: &Grid) -> Result<Embedding<T>> {
        flat_torus(grid, self.y0())
    }
}

impl<T: Real> SymplecticSystem<T> for ModelA {
    fn dim(&self) -> usize {
        4
    }
    fn angles(&self) -> Vec<usize> {
        vec![0]
    }
    fn map(&self, z: &[T]) -> Result<Vec<T>> {
        Ok(self.map_and_jacobian(z)?.0)
    }
    fn jacobian(&self, z: &[T]) -> Result<Matrix<T>> {
        Ok(self.map_and_jacobian(z)?.1)
    }
    fn map_and_jacobian(&self, z: &[T]) -> Result<(Vec<T>, Matrix<T>)> {
        let half = T::lit(0.5);
        let (z1, d1) = kick_flow(self.eps, half, z);
        let (z2, d2) = drift_flow(self.shear, self.lambda_h, T::one(), &z1);
        let (z3, d3) = kick_flow(self.eps, half, &z2);
        Ok((z3, &(&d3 * &d2) * &d1))
    }
    fn domain(&self) -> DomainBox {
        box_around(self.y0())
    }
}

/// Flow of `H = shear y^2/2 + lambda_h u v + eps cos(2 pi x)(1 + u)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelB {
    pub eps: f64,
    pub lambda_h: f64,
    pub shear: f64,
    pub omega0: f64,
}

impl ModelB {
    pub fn new(eps: f64, lambda_h: f64) -> Self {
        Self { eps, lambda_h, shear: 1.0, omega0: golden_mean() }
    }

    pub fn y0(&self) -> f64 {
        self.omega0 / self.shear
    }

    pub fn seed<T: Real>(&self, grid: &Grid) -> Result<Embedding<T>> {
        flat_torus(grid, self.y0())
    }

    pub fn time1(self, integrator: Integrator) -> Time1Map<Self> {
        Time1Map::new(self, integrator)
    }
}

impl<T: Real> VectorField<T> for ModelB {
    fn dim(&self) -> usize {
        4
    }
    fn angles(&self) -> Vec<usize> {
        vec![0]
    }
    fn field(&self, z: &[T]) -> Vec<T> {
        let tp = T::two_pi();
        let (s, c) = ((tp * z[0]).sin(), (tp * z[0]).cos());
        let eps = T::lit(self.eps);
        let lam = T::lit(self.lambda_h);
        vec![T::lit(self.shear) * z[1], tp * eps * s * (T::one() + z[2]), lam * z[2], -lam * z[3] - eps * c]
    }
    fn field_jacobian(&self, z: &[T]) -> Matrix<T> {
        let tp = T::two_pi();
        let (s, c) = ((tp * z[0]).sin(), (tp * z[0]).cos());
        let eps = T::lit(self.eps);
        let lam = T::lit(self.lambda_h);
        let mut d = Matrix::zeros(4, 4);
        d[(0, 1)] = T::lit(self.shear);
        d[(1, 0)] = tp * tp * eps * c * (T::one() + z[2]);
        d[(1, 2)] = tp * eps * s;
        d[(2, 2)] = lam;
        d[(3, 0)] = tp * eps * s;
        d[(3, 3)] = -lam;
        d
    }
    fn domain(&self) -> DomainBox {
        box_around(self.y0())
    }
    fn hamiltonian(&self, z: &[T]) -> Option<T> {
        let half = T::lit(0.5);
        Some(
            half * T::lit(self.shear) * z[1] * z[1]
                + T::lit(self.lambda_h) * z[2] * z[3]
                + T::lit(self.eps) * (T::two_pi() * z[0]).cos() * (T::one() + z[2]),
        )
    }
    fn pieces(&self) -> usize {
        2
    }
    fn piece_flow(&self, p: usize, t: T, z: &[T]) -> (Vec<T>, Matrix<T>) {
        match p {
            0 => drift_flow(self.shear, self.lambda_h, t, z),
            _ => kick_flow(self.eps, t, z),
        }
    }
}

/// `X_lambda = X + lambda e_y` for Model B, scaled by `strength`.
pub struct ModelBFamily {
    pub model: ModelB,
    pub strength: f64,
}

impl<T: Real> FlowFamily<T> for ModelBFamily {
    fn field(&self) -> &dyn VectorField<T> {
        &self.model
    }
    fn params(&self) -> usize {
        1
    }
    fn deformation(&self, _z: &[T]) -> Matrix<T> {
        Matrix::column_vector(&[T::zero(), T::lit(self.strength), T::zero(), T::zero()])
    }
}

/// `A_theta`, `A_theta'` and `A_theta''` as functions of the angle.
pub type CocycleFn = Arc<dyn Fn(f64) -> [Matrix<f64>; 3] + Send + Sync>;

/// Hyperbolic block of the skew product.
#[derive(Clone)]
pub enum SkewCocycle {
    Diagonal(Vec<f64>),
    /// `R(theta) diag R(theta)^T` with `R` a rotation by `2 pi winding theta`
    /// in the first coordinate plane.
    Rotated { diag: Vec<f64>, winding: i32 },
    Custom { n: usize, f: CocycleFn },
}

impl std::fmt::Debug for SkewCocycle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Diagonal(d) => f.debug_tuple("Diagonal").field(d).finish(),
            Self::Rotated { diag, winding } => {
                f.debug_struct("Rotated").field("diag", diag).field("winding", winding).finish()
            }
            Self::Custom { n, .. } => f.debug_struct("Custom").field("n", n).finish_non_exhaustive(),
        }
    }
}

impl SkewCocycle {
    pub fn n(&self) -> usize {
        match self {
            Self::Diagonal(d) | Self::Rotated { diag: d, .. } => d.len(),
            Self::Custom { n, .. } => *n,
        }
    }

    /// `[A, A', A'']` at `theta`.
    pub fn eval(&self, theta: f64) -> [Matrix<f64>; 3] {
        match self {
            Self::Diagonal(d) => {
                let z = Matrix::zeros(d.len(), d.len());
                [Matrix::diag(d), z.clone(), z]
            }
            Self::Rotated { diag, winding } => {
                let n = diag.len();
                let w = std::f64::consts::TAU * *winding as f64;
                let rot = |order: usize| {
                    // d^k/dtheta^k of the rotation by w theta
                    let a = w * theta + order as f64 * std::f64::consts::FRAC_PI_2;
                    let s = w.powi(order as i32);
                    let mut r = if order == 0 { Matrix::identity(n) } else { Matrix::zeros(n, n) };
                    if n >= 2 {
                        r[(0, 0)] = s * a.cos();
                        r[(0, 1)] = -s * a.sin();
                        r[(1, 0)] = s * a.sin();
                        r[(1, 1)] = s * a.cos();
                    }
                    r
                };
                let d = Matrix::diag(diag);
                let (r0, r1, r2) = (rot(0), rot(1), rot(2));
                let prod = |a: &Matrix<f64>, b: &Matrix<f64>| &(a * &d) * &b.transpose();
                let a0 = prod(&r0, &r0);
                let a1 = &prod(&r1, &r0) + &prod(&r0, &r1);
                let a2 = &(&prod(&r2, &r0) + &prod(&r1, &r1).scale(2.0)) + &prod(&r0, &r2);
                [a0, a1, a2]
            }
            Self::Custom { f, .. } => f(theta),
        }
    }
}

/// Skew product `(s, u, c, theta) -> (A s, A^-T u, c + phi, theta + omega0 + shear c')`
/// on `R^n x R^n x R x T` with `Omega = sum ds^du + dtheta^dc`.
///
/// `phi = -s^T A'^T A^-T u` makes the map symplectic for angle-dependent `A`.
#[derive(Clone, Debug)]
pub struct Skew {
    pub cocycle: SkewCocycle,
    pub omega0: f64,
    pub shear: f64,
}

impl Skew {
    pub fn new(cocycle: SkewCocycle, omega0: f64) -> Self {
        Self { cocycle, omega0, shear: 1.0 }
    }

    pub fn n(&self) -> usize {
        self.cocycle.n()
    }

    /// `theta -> (0, 0, 0, theta)`.
    pub fn exact_torus<T: Real>(&self, grid: &Grid) -> Result<Embedding<T>> {
        let dim = 2 * self.n() + 2;
        Embedding::from_fn(grid, winding_for(dim, &[dim - 1]), |t| {
            let mut z = vec![T::zero(); dim];
            z[dim - 1] = T::lit(t[0]);
            z
        })
    }

    fn eval_t<T: Real>(&self, theta: T) -> [Matrix<T>; 3] {
        let cast = |m: &Matrix<f64>| Matrix::from_fn(m.rows(), m.cols(), |i, j| T::lit(m[(i, j)]));
        let [a, b, c] = self.cocycle.eval(theta.to_f64_());
        [cast(&a), cast(&b), cast(&c)]
    }
}

impl<T: Real> SymplecticSystem<T> for Skew {
    fn dim(&self) -> usize {
        2 * self.n() + 2
    }
    fn angles(&self) -> Vec<usize> {
        vec![2 * self.n() + 1]
    }
    fn map(&self, z: &[T]) -> Result<Vec<T>> {
        Ok(self.map_and_jacobian(z)?.0)
    }
    fn jacobian(&self, z: &[T]) -> Result<Matrix<T>> {
        Ok(self.map_and_jacobian(z)?.1)
    }
    fn map_and_jacobian(&self, z: &[T]) -> Result<(Vec<T>, Matrix<T>)> {
        let n = self.n();
        let (ci, ti) = (2 * n, 2 * n + 1);
        let s = &z[..n];
        let u = &z[n..2 * n];
        let [a, a1, a2] = self.eval_t(z[ti]);
        let b = a.inverse().map_err(|e| WhiskerError::Singular(format!("skew cocycle: {e}")))?.transpose();
        // B' = -B A'^T B
        let b1 = (&(&b * &a1.transpose()) * &b).scale(-T::one());
        // phi = -s^T M u with M = A'^T B, M' = A''^T B + A'^T B'
        let m = &a1.transpose() * &b;
        let m1 = &(&a2.transpose() * &b) + &(&a1.transpose() * &b1);
        let mu = m.matvec(u);
        let mts = m.transpose().matvec(s);
        let phi = -crate::linalg::dot(s, &mu);
        let dphi_t = -crate::linalg::dot(s, &m1.matvec(u));
        let shear = T::lit(self.shear);

        let mut out = vec![T::zero(); 2 * n + 2];
        out[..n].copy_from_slice(&a.matvec(s));
        out[n..2 * n].copy_from_slice(&b.matvec(u));
        let c_new = z[ci] + phi;
        out[ci] = c_new;
        out[ti] = z[ti] + T::lit(self.omega0) + shear * c_new;

        let mut d = Matrix::zeros(2 * n + 2, 2 * n + 2);
        d.set_block(0, 0, &a);
        d.set_block(n, n, &b);
        let a1s = a1.matvec(s);
        let b1u = b1.matvec(u);
        for i in 0..n {
            d[(i, ti)] = a1s[i];
            d[(n + i, ti)] = b1u[i];
            d[(ci, i)] = -mu[i];
            d[(ci, n + i)] = -mts[i];
        }
        d[(ci, ci)] = T::one();
        d[(ci, ti)] = dphi_t;
        for col in 0..2 * n + 2 {
            d[(ti, col)] = shear * d[(ci, col)];
        }
        d[(ti, ti)] += T::one();
        Ok((out, d))
    }
    fn j(&self, _z: &[T]) -> Matrix<T> {
        let n = self.n();
        let mut j = Matrix::zeros(2 * n + 2, 2 * n + 2);
        for i in 0..n {
            j[(i, n + i)] = T::one();
            j[(n + i, i)] = -T::one();
        }
        j[(2 * n + 1, 2 * n)] = T::one();
        j[(2 * n, 2 * n + 1)] = -T::one();
        j
    }
}

/// Model families selectable by name.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Family {
    T,
    A,
    B,
    Skew,
}

impl std::str::FromStr for Family {
    type Err = WhiskerError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "T" => Ok(Self::T),
            "A" => Ok(Self::A),
            "B" => Ok(Self::B),
            "SKEW" => Ok(Self::Skew),
            other => Err(WhiskerError::Shape(format!("unknown model family {other:?} (expected T, A, B or SKEW)"))),
        }
    }
}

/// Parameters of a bundled model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSpec {
    pub family: Family,
    pub eps: f64,
    pub lambda_h: f64,
    /// Overrides `exp(lambda_h)` for model T.
    pub mu: Option<f64>,
    pub omega0: f64,
    pub shear: f64,
    pub drift: f64,
    /// Diagonal of the skew-product cocycle.
    pub skew_diag: Vec<f64>,
    pub skew_winding: i32,
}

impl Default for ModelSpec {
    fn default() -> Self {
        Self {
            family: Family::A,
            eps: 0.0,
            lambda_h: std::f64::consts::LN_2,
            mu: None,
            omega0: golden_mean(),
            shear: 1.0,
            drift: 0.0,
            skew_diag: vec![0.5],
            skew_winding: 0,
        }
    }
}

impl ModelSpec {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("eps", self.eps), ("lambda_h", self.lambda_h), ("omega0", self.omega0), ("drift", self.drift)] {
            if !v.is_finite() {
                return Err(WhiskerError::Shape(format!("model.{name} must be finite")));
            }
        }
        if !(self.shear.is_finite() && self.shear != 0.0) {
            return Err(WhiskerError::Shape("model.shear must be finite and non-zero".into()));
        }
        if let Some(mu) = self.mu {
            if !(mu > 0.0 && mu.is_finite()) {
                return Err(WhiskerError::Shape("model.mu must be positive".into()));
            }
        }
        if self.family == Family::Skew && (self.skew_diag.is_empty() || self.skew_diag.iter().any(|d| *d == 0.0 || !d.is_finite())) {
            return Err(WhiskerError::Shape("model.skew_diag must be non-empty with non-zero finite entries".into()));
        }
        Ok(())
    }

    pub fn model_t(&self) -> ModelT {
        ModelT { mu: self.mu.unwrap_or(self.lambda_h.exp()), omega0: self.omega0, drift: self.drift }
    }

    pub fn model_a(&self) -> ModelA {
        ModelA { eps: self.eps, lambda_h: self.lambda_h, shear: self.shear, omega0: self.omega0 }
    }

    pub fn model_b(&self) -> ModelB {
        ModelB { eps: self.eps, lambda_h: self.lambda_h, shear: self.shear, omega0: self.omega0 }
    }

    pub fn skew(&self) -> Skew {
        let cocycle = if self.skew_winding == 0 {
            SkewCocycle::Diagonal(self.skew_diag.clone())
        } else {
            SkewCocycle::Rotated { diag: self.skew_diag.clone(), winding: self.skew_winding }
        };
        Skew { cocycle, omega0: self.omega0, shear: self.shear }
    }

    /// The system as a map; flows are reduced to their time-1 map.
    pub fn system(&self, integrator: Integrator) -> Result<Box<dyn SymplecticSystem<f64>>> {
        self.validate()?;
        Ok(match self.family {
            Family::T => Box::new(self.model_t()),
            Family::A => Box::new(self.model_a()),
            Family::B => Box::new(self.model_b().time1(integrator)),
            Family::Skew => Box::new(self.skew()),
        })
    }

    /// The unperturbed torus, used as the default seed.
    pub fn seed(&self, grid: &Grid) -> Result<Embedding<f64>> {
        match self.family {
            Family::T => flat_torus(grid, self.omega0),
            Family::A | Family::B => flat_torus(grid, self.omega0 / self.shear),
            Family::Skew => self.skew().exact_torus(grid),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cohomology::Frequency;
    use crate::flow::{flow_to, Scheme};
    use crate::geometry::symplecticity_defect;
    use crate::newton::{solve, NewtonConfig, TorusSolution};

    const PTS: [[f64; 4]; 3] = [[0.1, 0.6, 0.05, -0.1], [0.73, 0.4, -0.2, 0.3], [0.37, 0.9, 0.1, 0.2]];

    #[test]
    fn maps_are_symplectic() {
        let a = ModelA::new(0.05, 0.7);
        let t = ModelT::new(2.0, golden_mean());
        let b = ModelB::new(0.05, 0.7).time1(Integrator::default());
        for z in PTS {
            assert!(symplecticity_defect(&a, &z).unwrap() < 1e-12);
            assert!(symplecticity_defect(&t, &z).unwrap() < 1e-14);
            assert!(symplecticity_defect(&b, &z).unwrap() < 1e-10);
        }
    }

    #[test]
    fn skew_with_rotating_cocycle_is_symplectic() {
        let sk = Skew::new(SkewCocycle::Rotated { diag: vec![0.5, 0.25], winding: 1 }, golden_mean());
        let z: [f64; 6] = [0.1, -0.2, 0.3, 0.05, 0.02, 0.4];
        assert!(symplecticity_defect(&sk, &z).unwrap() < 1e-12);
        // finite-difference check of the Jacobian
        let d = SymplecticSystem::<f64>::jacobian(&sk, &z).unwrap();
        let h = 1e-6;
        for c in 0..6 {
            let (mut zp, mut zm) = (z, z);
            zp[c] += h;
            zm[c] -= h;
            let (fp, fm) = (sk.map(&zp).unwrap(), sk.map(&zm).unwrap());
            for r in 0..6 {
                let fd = (fp[r] - fm[r]) / (2.0 * h);
                assert!((fd - d[(r, c)]).abs() < 1e-6, "entry ({r},{c}): {fd} vs {}", d[(r, c)]);
            }
        }
    }

    #[test]
    fn model_a_jacobian_matches_differences() {
        let a = ModelA::new(0.05, 0.7);
        let z = PTS[1];
        let d = SymplecticSystem::<f64>::jacobian(&a, &z).unwrap();
        let h = 1e-6;
        for c in 0..4 {
            let (mut zp, mut zm) = (z, z);
            zp[c] += h;
            zm[c] -= h;
            let (fp, fm) = (a.map(&zp).unwrap(), a.map(&zm).unwrap());
            for r in 0..4 {
                assert!(((fp[r] - fm[r]) / (2.0 * h) - d[(r, c)]).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn unperturbed_flow_is_the_product_map() {
        let b = ModelB::new(0.0, std::f64::consts::LN_2);
        let t = ModelT::new(2.0, golden_mean());
        for scheme in [Scheme::Strang, Scheme::Yoshida6, Scheme::Rk4] {
            let integ = Integrator { scheme, step: 1.0 / 16.0 };
            let (z1, _) = flow_to(&b, &integ, 1.0, &PTS[0]).unwrap();
            let z2 = t.map(&PTS[0]).unwrap();
            let tol = if scheme == Scheme::Rk4 { 1e-7 } else { 1e-13 };
            for (p, q) in z1.iter().zip(&z2) {
                assert!((p - q).abs() < tol, "{scheme:?}");
            }
        }
    }

    #[test]
    fn sixth_order_conserves_energy() {
        let b = ModelB::new(0.05, 0.5);
        let z = PTS[0];
        let h0 = VectorField::<f64>::hamiltonian(&b, &z).unwrap();
        let (z1, _) = flow_to(&b, &Integrator::default(), 1.0, &z).unwrap();
        let h1 = b.hamiltonian(&z1).unwrap();
        assert!((h1 - h0).abs() < 1e-10, "{}", (h1 - h0).abs());
    }

    #[test]
    fn exact_torus_of_model_t_is_a_fixed_point_of_newton() {
        let g = Grid::new(&[32]).unwrap();
        let t = ModelT::new(2.0, golden_mean());
        let seed = TorusSolution::<f64>::seed(t.exact_torus(&g).unwrap(), Frequency::map(&[golden_mean()]), &t).unwrap();
        let sol = solve(seed, &t, &NewtonConfig::default()).unwrap();
        assert!(sol.converged);
        assert!(sol.residual < 1e-13);
        assert_eq!(sol.report.len(), 1);
    }

    #[test]
    fn model_a_small_eps_converges() {
        let g = Grid::new(&[64]).unwrap();
        let a = ModelA::new(0.005, 0.7);
        let seed = TorusSolution::<f64>::seed(a.seed(&g).unwrap(), Frequency::map(&[golden_mean()]), &a).unwrap();
        let sol = solve(seed, &a, &NewtonConfig::default()).unwrap();
        for r in &sol.report {
            eprintln!("{}", r.to_json());
        }
        assert!(sol.converged);
        assert!(sol.residual < 1e-10);
        assert!(sol.lambda_norm() < 1e-9);
    }

    #[test]
    fn skew_exact_torus_converges_immediately() {
        let g = Grid::new(&[32]).unwrap();
        let sk = Skew::new(SkewCocycle::Rotated { diag: vec![0.5, 0.25], winding: 1 }, golden_mean());
        let seed = TorusSolution::<f64>::seed(sk.exact_torus(&g).unwrap(), Frequency::map(&[golden_mean()]), &sk).unwrap();
        let sol = solve(seed, &sk, &NewtonConfig::default()).unwrap();
        assert!(sol.converged);
        let r = sol.rates.as_ref().unwrap();
        assert!(r.mu1 < 0.6 && r.mu2 < 0.6, "{r:?}");
    }
}
