//! Invariant splittings of the cocycle `DF(K(theta))` over `T_omega`.
//!
//! A cocycle is a matrix field `C(theta)` mapping the fibre over `theta`
//! to the fibre over `theta + omega`. Vector fields over the torus are
//! represented as single-column matrix fields.

use serde::{Deserialize, Serialize};

use crate::error::{Result, WhiskerError};
use crate::fourier::MatrixField;
use crate::linalg::{subspace_distance, Matrix};
use crate::scalar::Real;

/// Settings for graph-transform refinement and rate windows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BundleConfig {
    pub tol: f64,
    pub max_iter: usize,
    pub n_window: usize,
    /// Subspace iterations used to seed stable and unstable directions.
    pub seed_iter: usize,
    pub series_tol: f64,
    pub series_max: usize,
}

impl Default for BundleConfig {
    fn default() -> Self {
        Self { tol: 1e-12, max_iter: 200, n_window: 16, seed_iter: 80, series_tol: 1e-17, series_max: 10_000 }
    }
}

/// Column bases of the three bundles at each grid point.
#[derive(Clone, Debug)]
pub struct SplitBases<T> {
    pub stable: MatrixField<T>,
    pub center: MatrixField<T>,
    pub unstable: MatrixField<T>,
}

/// Projections onto the stable, center and unstable bundles.
#[derive(Clone, Debug)]
pub struct Splitting<T> {
    pub proj_s: MatrixField<T>,
    pub proj_c: MatrixField<T>,
    pub proj_u: MatrixField<T>,
    pub dims: (usize, usize, usize),
    pub bases: SplitBases<T>,
}

/// `X -> (C X) o T_{-omega}`: transport one step forward along the orbit.
pub fn push_forward<T: Real>(cocycle: &MatrixField<T>, x: &MatrixField<T>, omega: &[f64]) -> Result<MatrixField<T>> {
    let neg: Vec<f64> = omega.iter().map(|w| -w).collect();
    cocycle.mul(x)?.shift(&neg)
}

/// `X -> C^-1 (X o T_omega)`: transport one step backward.
pub fn pull_back<T: Real>(cocycle_inv: &MatrixField<T>, x: &MatrixField<T>, omega: &[f64]) -> Result<MatrixField<T>> {
    cocycle_inv.mul(&x.shift(omega)?)
}

fn orthonormal<T: Real>(x: &MatrixField<T>) -> Result<MatrixField<T>> {
    x.try_map(|m| if m.cols() == 0 { Ok(m.clone()) } else { m.orthonormalize_columns() })
}

/// Re-orient the frame at each grid point towards its predecessor along
/// the grid, so a bundle that turns with `theta` gets a continuous basis.
/// Subspace iteration from a constant frame leaves sign flips wherever the
/// seed is orthogonal to the limit.
fn align_frames<T: Real>(x: &MatrixField<T>) -> Result<MatrixField<T>> {
    let grid = x.grid().clone();
    let mut out: Vec<Matrix<T>> = x.values().to_vec();
    if x.shape().1 == 0 {
        return MatrixField::new(&grid, out);
    }
    for i in 1..grid.len() {
        let mut m = grid.multi_index(i);
        let Some(a) = (0..m.len()).rev().find(|&a| m[a] > 0) else { continue };
        m[a] -= 1;
        let prev = &out[grid.flat_index(&m)];
        let cur = &out[i];
        let turned = cur * &(&cur.transpose() * prev);
        out[i] = turned.orthonormalize_columns()?;
    }
    MatrixField::new(&grid, out)
}

/// Fixed generic starting frame with `cols` columns in `R^dim`.
fn generic_frame<T: Real>(dim: usize, cols: usize) -> Matrix<T> {
    Matrix::from_fn(dim, cols, |i, j| T::lit((1.0 + i as f64 + 7.0 * j as f64).sin() + 0.1 * (i + 1) as f64))
}

/// Seed bases by subspace iteration: forward for the unstable bundle,
/// backward for the stable one. The center seed is supplied.
pub fn seed_bases<T: Real>(
    cocycle: &MatrixField<T>,
    center: &MatrixField<T>,
    d_s: usize,
    d_u: usize,
    omega: &[f64],
    cfg: &BundleConfig,
) -> Result<SplitBases<T>> {
    let grid = cocycle.grid().clone();
    let dim = cocycle.shape().0;
    let inv = cocycle.try_map(|m| m.inverse())?;
    let mut u = MatrixField::constant(&grid, &generic_frame(dim, d_u));
    let mut s = MatrixField::constant(&grid, &generic_frame::<T>(dim, d_s).scale(-T::one()));
    if d_u > 0 {
        u = orthonormal(&u)?;
        for _ in 0..cfg.seed_iter {
            u = align_frames(&orthonormal(&push_forward(cocycle, &u, omega)?)?)?;
        }
    }
    if d_s > 0 {
        s = orthonormal(&s)?;
        for _ in 0..cfg.seed_iter {
            s = align_frames(&orthonormal(&pull_back(&inv, &s, omega)?)?)?;
        }
    }
    Ok(SplitBases { stable: s, center: center.clone(), unstable: u })
}

fn hcat<T: Real>(a: &MatrixField<T>, b: &MatrixField<T>) -> Result<MatrixField<T>> {
    a.zip(b, |x, y| Matrix::hstack(&[x, y]))
}

/// Refine the splitting `E1 + E2` spanned by `b1`, `b2` into an invariant one.
///
/// In the coordinates of `[b1, b2]` the cocycle has blocks
/// `[[a11, a12], [a21, a22]]`; `E1` is sought as the graph of `u: E1 -> E2`
/// and `E2` as the graph of `v: E2 -> E1`, both by Picard iteration.
pub fn graph_transform<T: Real>(
    cocycle: &MatrixField<T>,
    b1: &MatrixField<T>,
    b2: &MatrixField<T>,
    omega: &[f64],
    cfg: &BundleConfig,
) -> Result<(MatrixField<T>, MatrixField<T>)> {
    let d1 = b1.shape().1;
    let d2 = b2.shape().1;
    if d1 == 0 || d2 == 0 {
        return Ok((b1.clone(), b2.clone()));
    }
    let grid = cocycle.grid().clone();
    let basis = hcat(b1, b2)?;
    let basis_next = basis.shift(omega)?;
    let coords = MatrixField::try_from_index_fn(&grid, |i| {
        let inv = basis_next.at(i).inverse()?;
        Ok(&(&inv * cocycle.at(i)) * basis.at(i))
    })
    .map_err(|e| WhiskerError::SplittingDiverged(format!("approximate bundles not transversal: {e}")))?;
    let a11 = coords.map(|c| c.block(0, 0, d1, d1))?;
    let a12 = coords.map(|c| c.block(0, d1, d1, d2))?;
    let a21 = coords.map(|c| c.block(d1, 0, d2, d1))?;
    let a22 = coords.map(|c| c.block(d1, d1, d2, d2))?;
    let a22_inv = a22.try_map(|m| m.inverse())?;
    let neg: Vec<f64> = omega.iter().map(|w| -w).collect();

    // u(theta) = a22^-1 (u(theta + omega) (a11 + a12 u) - a21)
    let mut u = MatrixField::constant(&grid, &Matrix::zeros(d2, d1));
    picard(cfg, "first-bundle graph", |_| {
        let us = u.shift(omega)?;
        let next = MatrixField::from_index_fn(&grid, |i| {
            let inner = a11.at(i) + &(a12.at(i) * u.at(i));
            a22_inv.at(i) * &(&(us.at(i) * &inner) - a21.at(i))
        })?;
        let diff = next.sub(&u)?.sup_abs().to_f64_();
        u = next;
        Ok(diff)
    })?;

    // v(theta) = [(a11 v + a12)(a22 + a21 v)^-1](theta - omega)
    let mut v = MatrixField::constant(&grid, &Matrix::zeros(d1, d2));
    picard(cfg, "second-bundle graph", |_| {
        let pre = MatrixField::try_from_index_fn(&grid, |i| {
            let num = &(a11.at(i) * v.at(i)) + a12.at(i);
            let den = a22.at(i) + &(a21.at(i) * v.at(i));
            let den_inv = den.inverse()?;
            Ok(&num * &den_inv)
        })?;
        let next = pre.shift(&neg)?;
        let diff = next.sub(&v)?.sup_abs().to_f64_();
        v = next;
        Ok(diff)
    })?;

    let e1 = MatrixField::from_index_fn(&grid, |i| b1.at(i) + &(b2.at(i) * u.at(i)))?;
    let e2 = MatrixField::from_index_fn(&grid, |i| b2.at(i) + &(b1.at(i) * v.at(i)))?;
    Ok((e1, e2))
}

fn picard(cfg: &BundleConfig, what: &str, mut step: impl FnMut(usize) -> Result<f64>) -> Result<()> {
    let mut first = None;
    let mut last = f64::INFINITY;
    for it in 0..cfg.max_iter {
        let d = step(it).map_err(|e| WhiskerError::SplittingDiverged(format!("{what}: {e}")))?;
        if !d.is_finite() || d > 1e6 {
            return Err(WhiskerError::SplittingDiverged(format!("{what}: update {d:e} at iteration {it}")));
        }
        first.get_or_insert(d);
        last = d;
        if d <= cfg.tol {
            return Ok(());
        }
    }
    let f = first.unwrap_or(last);
    let rate = if f > 0.0 { (last / f).powf(1.0 / cfg.max_iter as f64) } else { 0.0 };
    Err(WhiskerError::SplittingDiverged(format!(
        "{what}: no contraction below {:e} after {} iterations (last update {last:e}, mean rate {rate:.3})",
        cfg.tol, cfg.max_iter
    )))
}

/// `[B] diag(mask) [B]^-1` pointwise.
fn projection<T: Real>(basis: &MatrixField<T>, keep: std::ops::Range<usize>) -> Result<MatrixField<T>> {
    basis.try_map(|b| {
        let inv = b.inverse()?;
        let mut d = Matrix::zeros(b.cols(), b.cols());
        for i in keep.clone() {
            d[(i, i)] = T::one();
        }
        Ok(&(b * &d) * &inv)
    })
}

impl<T: Real> Splitting<T> {
    /// Projections along a direct sum given by bases.
    pub fn from_bases(bases: SplitBases<T>) -> Result<Self> {
        let ds = bases.stable.shape().1;
        let dc = bases.center.shape().1;
        let du = bases.unstable.shape().1;
        let full = hcat(&hcat(&bases.stable, &bases.center)?, &bases.unstable)?;
        let proj_s = projection(&full, 0..ds)?;
        let proj_c = projection(&full, ds..ds + dc)?;
        let proj_u = projection(&full, ds + dc..ds + dc + du)?;
        Ok(Self { proj_s, proj_c, proj_u, dims: (ds, dc, du), bases })
    }

    /// `|Pi^s(theta + omega) C - C Pi^s(theta)|` and friends, grid sup over all three.
    pub fn invariance_residual(&self, cocycle: &MatrixField<T>, omega: &[f64]) -> Result<T> {
        let mut worst = T::zero();
        for p in [&self.proj_s, &self.proj_c, &self.proj_u] {
            let ps = p.shift(omega)?;
            let r = MatrixField::from_index_fn(cocycle.grid(), |i| {
                &(ps.at(i) * cocycle.at(i)) - &(cocycle.at(i) * p.at(i))
            })?;
            worst = worst.max(r.sup_abs());
        }
        Ok(worst)
    }

    /// Worst deviation from `sum = I` and `Pi_a Pi_b = delta_ab Pi_a`.
    pub fn projection_defect(&self) -> T {
        let ps = [&self.proj_s, &self.proj_c, &self.proj_u];
        let n = self.proj_s.values().len();
        let dim = self.proj_s.shape().0;
        let id = Matrix::<T>::identity(dim);
        let mut worst = T::zero();
        for i in 0..n {
            let sum = &(ps[0].at(i) + ps[1].at(i)) + ps[2].at(i);
            worst = worst.max((&sum - &id).max_abs());
            for a in 0..3 {
                for b in 0..3 {
                    let prod = ps[a].at(i) * ps[b].at(i);
                    let target = if a == b { ps[a].at(i).clone() } else { Matrix::zeros(dim, dim) };
                    worst = worst.max((&prod - &target).max_abs());
                }
            }
        }
        worst
    }

    /// Numerical ranks of the three projections, if constant over the grid.
    pub fn ranks(&self) -> Option<(usize, usize, usize)> {
        let r = |p: &MatrixField<T>| -> Option<usize> {
            let ranks: Vec<usize> = p.values().iter().map(|m| m.rank(T::lit(1e-8))).collect();
            let first = *ranks.first()?;
            ranks.iter().all(|&x| x == first).then_some(first)
        };
        Some((r(&self.proj_s)?, r(&self.proj_c)?, r(&self.proj_u)?))
    }

    /// Grid sup of the principal-angle distance between `span(frame)` and the center bundle.
    pub fn center_distance(&self, frame: &MatrixField<T>) -> Result<T> {
        let mut worst = T::zero();
        for i in 0..frame.values().len() {
            let ec = self.proj_c.at(i) * frame.at(i);
            worst = worst.max(subspace_distance(frame.at(i), &ec)?);
        }
        Ok(worst)
    }

    /// Grid sup of spectral norms of the three projections.
    pub fn norms(&self) -> (T, T, T) {
        (self.proj_s.sup_norm2(), self.proj_c.sup_norm2(), self.proj_u.sup_norm2())
    }
}

/// Refine an approximate splitting to an invariant one in two passes:
/// stable against center-unstable, then center-stable against unstable.
pub fn refine_splitting<T: Real>(
    cocycle: &MatrixField<T>,
    seed: &SplitBases<T>,
    omega: &[f64],
    cfg: &BundleConfig,
) -> Result<Splitting<T>> {
    let ds = seed.stable.shape().1;
    let dc = seed.center.shape().1;
    let du = seed.unstable.shape().1;
    let dim = cocycle.shape().0;
    if ds + dc + du != dim {
        return Err(WhiskerError::Shape(format!("bundle dimensions {ds}+{dc}+{du} != {dim}")));
    }
    let cu = hcat(&seed.center, &seed.unstable)?;
    let sc = hcat(&seed.stable, &seed.center)?;
    let (es, ecu) = graph_transform(cocycle, &seed.stable, &cu, omega, cfg)?;
    let (esc, eu) = graph_transform(cocycle, &sc, &seed.unstable, omega, cfg)?;
    let pi_cu = projection(&hcat(&es, &ecu)?, ds..dim)?;
    let pi_sc = projection(&hcat(&esc, &eu)?, 0..ds + dc)?;
    let id = Matrix::<T>::identity(dim);
    let proj_c = pi_cu.mul(&pi_sc)?;
    let proj_s = pi_cu.map(|p| &id - p)?;
    let proj_u = pi_sc.map(|p| &id - p)?;
    let center = proj_c.mul(&seed.center)?;
    Ok(Splitting {
        proj_s,
        proj_c,
        proj_u,
        dims: (ds, dc, du),
        bases: SplitBases { stable: es, center, unstable: eu },
    })
}

/// Growth rates fitted over a window of `n_window` cocycle steps.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateEstimates {
    pub mu1: f64,
    pub mu2: f64,
    pub mu3: f64,
    pub c_h: f64,
    pub n_window: usize,
}

impl RateEstimates {
    /// Violated inequalities among `mu1, mu2 < 1`, `mu3 >= 1`, `mu1 mu3, mu2 mu3 < 1`.
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if !(self.mu1 < 1.0) {
            v.push(format!("mu1 = {} >= 1", self.mu1));
        }
        if !(self.mu2 < 1.0) {
            v.push(format!("mu2 = {} >= 1", self.mu2));
        }
        if !(self.mu1 * self.mu3 < 1.0) {
            v.push(format!("mu1 mu3 = {} >= 1", self.mu1 * self.mu3));
        }
        if !(self.mu2 * self.mu3 < 1.0) {
            v.push(format!("mu2 mu3 = {} >= 1", self.mu2 * self.mu3));
        }
        v
    }

    pub fn check(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(WhiskerError::HyperbolicityViolated(v.join(", ")))
        }
    }
}

fn growth<T: Real>(
    start: &MatrixField<T>,
    n: usize,
    mut step: impl FnMut(&MatrixField<T>) -> Result<MatrixField<T>>,
) -> Result<Vec<f64>> {
    let mut x = orthonormal(start)?;
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        x = step(&x)?;
        out.push(x.sup_norm2().to_f64_());
    }
    Ok(out)
}

/// Fit `(mu, C_h)` to products of the cocycle restricted to each bundle.
pub fn estimate_rates<T: Real>(
    cocycle: &MatrixField<T>,
    split: &Splitting<T>,
    omega: &[f64],
    n_window: usize,
) -> Result<RateEstimates> {
    let n = n_window.max(1);
    let inv = cocycle.try_map(|m| m.inverse())?;
    let (ds, dc, du) = split.dims;
    let fwd = |x: &MatrixField<T>| push_forward(cocycle, x, omega);
    let bwd = |x: &MatrixField<T>| pull_back(&inv, x, omega);
    let gs = if ds > 0 { growth(&split.bases.stable, n, fwd)? } else { vec![0.0; n] };
    let gu = if du > 0 { growth(&split.bases.unstable, n, bwd)? } else { vec![0.0; n] };
    let gc = if dc > 0 {
        let f = growth(&split.bases.center, n, fwd)?;
        let b = growth(&split.bases.center, n, bwd)?;
        f.iter().zip(&b).map(|(a, b)| a.max(*b)).collect()
    } else {
        vec![1.0; n]
    };
    let rate = |g: &[f64]| g[n - 1].powf(1.0 / n as f64);
    let (mu1, mu2, mu3) = (rate(&gs), rate(&gu), rate(&gc).max(1.0));
    let mut c_h = 1.0f64;
    for (g, mu) in [(&gs, mu1), (&gu, mu2), (&gc, mu3)] {
        if mu > 0.0 {
            for (k, &v) in g.iter().enumerate() {
                c_h = c_h.max(v / mu.powi(k as i32 + 1));
            }
        }
    }
    Ok(RateEstimates { mu1, mu2, mu3, c_h, n_window: n })
}

fn series<T: Real>(
    first: MatrixField<T>,
    proj: Option<&MatrixField<T>>,
    cfg: &BundleConfig,
    k_max: usize,
    mut next: impl FnMut(&MatrixField<T>) -> Result<MatrixField<T>>,
) -> Result<MatrixField<T>> {
    let reproject = |x: MatrixField<T>| -> Result<MatrixField<T>> {
        match proj {
            Some(p) => p.mul(&x),
            None => Ok(x),
        }
    };
    let mut term = reproject(first)?;
    let scale = term.sup_abs().max(T::min_positive_value());
    let mut sum = term.clone();
    for _ in 0..k_max {
        term = reproject(next(&term)?)?;
        sum = sum.add(&term)?;
        let t = term.sup_abs();
        if !t.is_finite() {
            return Err(WhiskerError::HyperbolicityViolated("hyperbolic series overflowed".into()));
        }
        if t <= T::lit(cfg.series_tol) * scale {
            break;
        }
    }
    Ok(sum)
}

fn series_terms(mu: f64, c_h: f64, cfg: &BundleConfig) -> Result<usize> {
    if !(mu < 1.0) {
        return Err(WhiskerError::HyperbolicityViolated(format!("rate {mu} is not contracting")));
    }
    if mu <= 0.0 {
        return Ok(1);
    }
    let k = (cfg.series_tol / c_h.max(1.0)).ln() / mu.ln();
    Ok((k.ceil().max(1.0) as usize).min(cfg.series_max))
}

/// Solve `C(phi - omega) D(phi - omega) - D(phi) = -E(phi)` on the stable bundle.
///
/// `D = sum_k T^k E` with `T X = (C X) o T_{-omega}`; each term is
/// re-projected by `proj` to keep roundoff out of the other bundles.
pub fn solve_stable<T: Real>(
    cocycle: &MatrixField<T>,
    proj: Option<&MatrixField<T>>,
    etilde: &MatrixField<T>,
    omega: &[f64],
    rates: (f64, f64),
    cfg: &BundleConfig,
) -> Result<MatrixField<T>> {
    let k_max = series_terms(rates.0, rates.1, cfg)?;
    series(etilde.clone(), proj, cfg, k_max, |x| push_forward(cocycle, x, omega))
}

/// Same equation on the unstable bundle: `D = -sum_{k>=1} U^k E` with
/// `U X = C^-1 (X o T_omega)`.
pub fn solve_unstable<T: Real>(
    cocycle: &MatrixField<T>,
    proj: Option<&MatrixField<T>>,
    etilde: &MatrixField<T>,
    omega: &[f64],
    rates: (f64, f64),
    cfg: &BundleConfig,
) -> Result<MatrixField<T>> {
    let k_max = series_terms(rates.0, rates.1, cfg)?;
    let inv = cocycle.try_map(|m| m.inverse())?;
    let first = pull_back(&inv, etilde, omega)?;
    let s = series(first, proj, cfg, k_max, |x| pull_back(&inv, x, omega))?;
    s.map(|m| m.scale(-T::one()))
}

/// Grid sup of `(C D) o T_{-omega} - D + E`.
pub fn hyperbolic_residual<T: Real>(
    cocycle: &MatrixField<T>,
    delta: &MatrixField<T>,
    etilde: &MatrixField<T>,
    omega: &[f64],
) -> Result<T> {
    Ok(push_forward(cocycle, delta, omega)?.sub(delta)?.add(etilde)?.sup_abs())
}
