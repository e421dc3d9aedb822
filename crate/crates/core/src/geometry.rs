//! Symplectic structure and the geometric frames of the Newton step.

use serde::{Deserialize, Serialize};

use crate::error::{Result, WhiskerError};
use crate::fourier::MatrixField;
use crate::linalg::Matrix;
use crate::scalar::Real;
use crate::torus::Embedding;

/// Axis-aligned bounds on the non-angle coordinates of phase space.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DomainBox {
    /// `None` leaves a coordinate unbounded (angles, for instance).
    pub bounds: Vec<Option<(f64, f64)>>,
}

impl DomainBox {
    pub fn unbounded(dim: usize) -> Self {
        Self { bounds: vec![None; dim] }
    }

    /// First coordinate outside its bounds.
    pub fn violation<T: Real>(&self, z: &[T]) -> Option<(usize, f64)> {
        for (i, (b, &x)) in self.bounds.iter().zip(z).enumerate() {
            let x = x.to_f64_();
            if !x.is_finite() {
                return Some((i, x));
            }
            if let Some((lo, hi)) = *b {
                if x < lo || x > hi {
                    return Some((i, x));
                }
            }
        }
        None
    }

    pub fn check<T: Real>(&self, index: usize, z: &[T]) -> Result<()> {
        match self.violation(z) {
            Some((coord, value)) => Err(WhiskerError::DomainEscape { index, coord, value }),
            None => Ok(()),
        }
    }
}

/// `J` for `Omega = dx^dy + du^dv + ..` in `(x, y, u, v, ..)` order.
pub fn standard_j<T: Real>(dim: usize) -> Matrix<T> {
    let mut j = Matrix::zeros(dim, dim);
    for p in 0..dim / 2 {
        j[(2 * p, 2 * p + 1)] = T::one();
        j[(2 * p + 1, 2 * p)] = -T::one();
    }
    j
}

/// Symplectic map `F` on `R^{2d}` with `Omega(xi, eta) = <xi, J(z) eta>`.
pub trait SymplecticSystem<T: Real>: Send + Sync {
    /// Phase-space dimension `2d`.
    fn dim(&self) -> usize;

    /// Coordinates that are lifts of angles, one per torus angle.
    fn angles(&self) -> Vec<usize>;

    fn map(&self, z: &[T]) -> Result<Vec<T>>;

    fn jacobian(&self, z: &[T]) -> Result<Matrix<T>>;

    fn map_and_jacobian(&self, z: &[T]) -> Result<(Vec<T>, Matrix<T>)> {
        Ok((self.map(z)?, self.jacobian(z)?))
    }

    fn j(&self, _z: &[T]) -> Matrix<T> {
        standard_j(self.dim())
    }

    /// Declared exactness of the symplectic map.
    fn exact(&self) -> bool {
        true
    }

    fn domain(&self) -> DomainBox {
        DomainBox::unbounded(self.dim())
    }
}

macro_rules! forward_system {
    ($($ptr:ty),*) => {$(
        impl<T: Real, S: SymplecticSystem<T> + ?Sized> SymplecticSystem<T> for $ptr {
            fn dim(&self) -> usize {
                (**self).dim()
            }
            fn angles(&self) -> Vec<usize> {
                (**self).angles()
            }
            fn map(&self, z: &[T]) -> Result<Vec<T>> {
                (**self).map(z)
            }
            fn jacobian(&self, z: &[T]) -> Result<Matrix<T>> {
                (**self).jacobian(z)
            }
            fn map_and_jacobian(&self, z: &[T]) -> Result<(Vec<T>, Matrix<T>)> {
                (**self).map_and_jacobian(z)
            }
            fn j(&self, z: &[T]) -> Matrix<T> {
                (**self).j(z)
            }
            fn exact(&self) -> bool {
                (**self).exact()
            }
            fn domain(&self) -> DomainBox {
                (**self).domain()
            }
        }
    )*};
}

forward_system!(&S, Box<S>);

/// `|DF(z)^T J(F(z)) DF(z) - J(z)|_max`.
pub fn symplecticity_defect<T: Real, S: SymplecticSystem<T> + ?Sized>(sys: &S, z: &[T]) -> Result<T> {
    let (fz, df) = sys.map_and_jacobian(z)?;
    let lhs = &(&df.transpose() * &sys.j(&fz)) * &df;
    Ok((&lhs - &sys.j(z)).max_abs())
}

/// Pointwise frames of an embedding.
#[derive(Clone, Debug)]
pub struct Frames<T> {
    pub dk: MatrixField<T>,
    /// `(DK^T DK)^-1`
    pub n: MatrixField<T>,
    /// `DK N`
    pub p: MatrixField<T>,
    /// `DK^T J DK`, zero on isotropic tori
    pub l: MatrixField<T>,
    /// `[DK, J^-1 DK N]`
    pub mtilde: MatrixField<T>,
    pub j: MatrixField<T>,
    pub jinv: MatrixField<T>,
}

impl<T: Real> Frames<T> {
    /// Frames at the points `pts` given the tangent field `dk` there.
    pub fn build<S: SymplecticSystem<T> + ?Sized>(pts: &[Vec<T>], dk: MatrixField<T>, sys: &S) -> Result<Self> {
        let grid = dk.grid().clone();
        let n = MatrixField::try_from_index_fn(&grid, |i| {
            let d = dk.at(i);
            (&d.transpose() * d).inverse().map_err(|_| WhiskerError::EmbeddingDegenerate { index: i })
        })?;
        let j = MatrixField::from_index_fn(&grid, |i| sys.j(&pts[i]))?;
        let jinv = j.try_map(|m| m.inverse())?;
        let p = dk.mul(&n)?;
        let l = MatrixField::from_index_fn(&grid, |i| {
            let d = dk.at(i);
            &(&d.transpose() * j.at(i)) * d
        })?;
        let mtilde = MatrixField::from_index_fn(&grid, |i| {
            let second = jinv.at(i) * p.at(i);
            Matrix::hstack(&[dk.at(i), &second])
        })?;
        Ok(Self { dk, n, p, l, mtilde, j, jinv })
    }

    /// Frames on the grid of `k`.
    pub fn of<S: SymplecticSystem<T> + ?Sized>(k: &Embedding<T>, sys: &S) -> Result<Self> {
        Self::build(&k.points(), k.jacobian()?, sys)
    }

    /// Frames at `theta + omega`.
    pub fn shifted<S: SymplecticSystem<T> + ?Sized>(k: &Embedding<T>, sys: &S, omega: &[f64]) -> Result<Self> {
        let dk = k.jacobian()?.shift(omega)?;
        Self::build(&k.shifted_points(omega), dk, sys)
    }

    pub fn torus_dim(&self) -> usize {
        self.dk.shape().1
    }

    /// Grid sup of `|L|`.
    pub fn isotropy_defect(&self) -> T {
        self.l.sup_abs()
    }

    /// `M~^T J M~` pointwise.
    pub fn gram(&self) -> Result<MatrixField<T>> {
        MatrixField::from_index_fn(self.dk.grid(), |i| {
            let m = self.mtilde.at(i);
            &(&m.transpose() * self.j.at(i)) * m
        })
    }
}

/// A matrix field with its average and the average's condition number.
#[derive(Clone, Debug)]
pub struct TwistData<T> {
    pub field: MatrixField<T>,
    pub avg: Matrix<T>,
    pub cond: T,
}

impl<T: Real> TwistData<T> {
    /// `cond` measures `avg^-1` against the size of the field itself, so a
    /// scalar average that cancels almost to zero is also caught.
    fn from_field(field: MatrixField<T>) -> Self {
        let avg = field.average();
        let size = field.values().iter().fold(avg.norm_one(), |m, a| m.max(a.norm_one()));
        let cond = match avg.inverse() {
            Ok(inv) if size > T::zero() => size * inv.norm_one(),
            _ => T::infinity(),
        };
        Self { field, avg, cond }
    }

    pub fn check(&self, which: &'static str, cond_max: f64) -> Result<()> {
        let c = self.cond.to_f64_();
        if !(c <= cond_max) {
            return Err(WhiskerError::TwistDegenerate { which, cond: c });
        }
        Ok(())
    }

    /// `|avg^-1|_2`, infinite when singular.
    pub fn inverse_norm(&self) -> T {
        self.avg.inverse().map(|m| m.norm2()).unwrap_or(T::infinity())
    }
}

/// `Q(theta) = DK^T(theta + omega) J(K(theta + omega)) G(theta)`.
pub fn twist_q<T: Real>(shifted: &Frames<T>, g: &MatrixField<T>) -> Result<TwistData<T>> {
    let field = MatrixField::from_index_fn(g.grid(), |i| &(&shifted.dk.at(i).transpose() * shifted.j.at(i)) * g.at(i))?;
    Ok(TwistData::from_field(field))
}

/// `A(theta) = P^T(theta + omega) [DF(K) J^-1 P (theta) - J^-1 P (theta + omega)]`.
pub fn twist_a<T: Real>(frames: &Frames<T>, shifted: &Frames<T>, df: &MatrixField<T>) -> Result<TwistData<T>> {
    let field = MatrixField::from_index_fn(df.grid(), |i| {
        let here = &(df.at(i) * frames.jinv.at(i)) * frames.p.at(i);
        let there = shifted.jinv.at(i) * shifted.p.at(i);
        &shifted.p.at(i).transpose() * &(&here - &there)
    })?;
    Ok(TwistData::from_field(field))
}

/// `A` in the center frame `[DK, Pi^c J^-1 DK N]`:
/// `P^T(theta + omega) Pi^c(theta + omega) [DF(K) J^-1 P (theta) - J^-1 P (theta + omega)]`.
pub fn twist_a_center<T: Real>(
    frames: &Frames<T>,
    shifted: &Frames<T>,
    df: &MatrixField<T>,
    proj_c_shifted: &MatrixField<T>,
) -> Result<TwistData<T>> {
    let field = MatrixField::from_index_fn(df.grid(), |i| {
        let here = &(df.at(i) * frames.jinv.at(i)) * frames.p.at(i);
        let there = shifted.jinv.at(i) * shifted.p.at(i);
        &(&shifted.p.at(i).transpose() * proj_c_shifted.at(i)) * &(&here - &there)
    })?;
    Ok(TwistData::from_field(field))
}

/// `S = N DK^T [d_omega(J^-1 DK N) - A_lambda J^-1 DK N]` with `A_lambda = DX(K)`.
pub fn flow_twist_s<T: Real>(frames: &Frames<T>, dx: &MatrixField<T>, omega: &[f64]) -> Result<TwistData<T>> {
    let grid = frames.dk.grid();
    let y = MatrixField::from_index_fn(grid, |i| frames.jinv.at(i) * frames.p.at(i))?;
    let (r, c) = y.shape();
    let dy = MatrixField::from_fourier(&y.to_fourier()?.directional(omega), r, c)?;
    let field = MatrixField::from_index_fn(grid, |i| {
        let inner = dy.at(i) - &(dx.at(i) * y.at(i));
        &(frames.n.at(i) * &frames.dk.at(i).transpose()) * &inner
    })?;
    Ok(TwistData::from_field(field))
}

/// Pointwise inverse of `M~^T J M~` through the Neumann series around `V`.
#[derive(Clone, Debug)]
pub struct GramInverse<T> {
    pub inverse: MatrixField<T>,
    /// `V^-1` alone.
    pub v_inverse: MatrixField<T>,
    /// Grid sup of the correction `(inverse - V^-1)`.
    pub correction: T,
    /// Largest number of series terms used at a grid point.
    pub terms: usize,
}

const NEUMANN_TOL: f64 = 1e-15;
const NEUMANN_MAX: usize = 60;

/// `(V + R)^-1 = sum_k (-V^-1 R)^k V^-1` with `V = [[0, I], [-I, X']]`, `R = [[L, 0], [0, 0]]`.
pub fn gram_inverse<T: Real>(frames: &Frames<T>) -> Result<GramInverse<T>> {
    let l = frames.torus_dim();
    let grid = frames.dk.grid().clone();
    let id = Matrix::<T>::identity(l);
    let per_point: Result<Vec<(Matrix<T>, Matrix<T>, usize)>> = (0..grid.len())
        .map(|i| {
            let dk = frames.dk.at(i);
            let n = frames.n.at(i);
            let jinv_t = frames.jinv.at(i).transpose();
            let xp = &(&(n * &dk.transpose()) * &jinv_t) * &(dk * n);
            let mut vinv = Matrix::zeros(2 * l, 2 * l);
            vinv.set_block(0, 0, &xp);
            vinv.set_block(0, l, &id.scale(-T::one()));
            vinv.set_block(l, 0, &id);
            let mut r = Matrix::zeros(2 * l, 2 * l);
            r.set_block(0, 0, frames.l.at(i));
            let step = (&vinv * &r).scale(-T::one());
            let scale = vinv.max_abs().max(T::one());
            let mut term = vinv.clone();
            let mut sum = vinv.clone();
            let mut used = 1;
            loop {
                if term.max_abs() <= T::lit(NEUMANN_TOL) * scale {
                    break;
                }
                if used >= NEUMANN_MAX {
                    return Err(WhiskerError::GeometryDegenerate(format!(
                        "no convergence after {NEUMANN_MAX} terms at grid point {i}"
                    )));
                }
                term = &step * &term;
                if !term.is_finite() || term.max_abs() > T::lit(1e12) * scale {
                    return Err(WhiskerError::GeometryDegenerate(format!("terms grow at grid point {i}")));
                }
                sum = &sum + &term;
                used += 1;
            }
            Ok((sum, vinv, used))
        })
        .collect();
    let per_point = per_point?;
    let terms = per_point.iter().map(|p| p.2).max().unwrap_or(0);
    let correction = per_point.iter().fold(T::zero(), |m, p| m.max((&p.0 - &p.1).max_abs()));
    let (inv, vinv): (Vec<_>, Vec<_>) = per_point.into_iter().map(|(a, b, _)| (a, b)).unzip();
    Ok(GramInverse {
        inverse: MatrixField::new(&grid, inv)?,
        v_inverse: MatrixField::new(&grid, vinv)?,
        correction,
        terms,
    })
}

/// Outcome of the vanishing-lemma monitor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VanishingCheck {
    pub pass: bool,
    /// `|lambda| / |E|`, infinite when `E = 0` and `lambda != 0`.
    pub ratio: f64,
    pub message: Option<String>,
}

/// `|lambda| <= c_van |E|` during the iteration, `|lambda| <= lambda_tol` on converged tori.
pub fn vanishing_check(
    lambda: &[f64],
    e_norm: f64,
    c_van: f64,
    lambda_tol: Option<f64>,
    exact: bool,
) -> VanishingCheck {
    let lam = lambda.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let ratio = if lam == 0.0 { 0.0 } else if e_norm == 0.0 { f64::INFINITY } else { lam / e_norm };
    if !exact {
        return VanishingCheck { pass: true, ratio, message: Some("system not declared exact; check skipped".into()) };
    }
    // converged tori are judged on the absolute bound alone
    let pass = match lambda_tol {
        Some(tol) => lam <= tol,
        None => lam <= c_van * e_norm || lam == 0.0,
    };
    let message = (!pass).then(|| {
        format!("|lambda| = {lam:e} exceeds the bound; the map may not be exact or the frame G degenerated")
    });
    VanishingCheck { pass, ratio, message }
}
