//! Quasi-Newton iteration for `F(K) + G lambda = K o T_omega`.
//!
//! Each step solves the linearized equation approximately on the center
//! bundle, in the frame `M~ = [DK, J^-1 DK N]`, and exactly on the stable
//! and unstable bundles by the hyperbolic series.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bundles::{
    estimate_rates, refine_splitting, seed_bases, solve_stable, solve_unstable, BundleConfig, RateEstimates,
    SplitBases, Splitting,
};
use crate::cohomology::{solve_map, Frequency, SmallDivisorConfig};
use crate::error::{Result, WhiskerError};
use crate::fourier::{FourierMap, MatrixField};
use crate::geometry::{
    gram_inverse, twist_a_center, twist_q, vanishing_check, Frames, GramInverse, SymplecticSystem, TwistData,
    VanishingCheck,
};
use crate::linalg::Matrix;
use crate::scalar::Real;
use crate::torus::Embedding;

/// Tolerances and limits of a Newton run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NewtonConfig {
    /// Grid sup of the residual accepted as converged.
    pub solve_tol: f64,
    pub lambda_tol: f64,
    pub uniq_tol: f64,
    pub max_iter: usize,
    /// A step that shrinks the residual by less than this counts as slow.
    pub stagnation_ratio: f64,
    pub stagnation_steps: usize,
    /// Coefficients of the correction below `tail0 2^(-m (nu + 1))` are dropped at step `m`.
    pub tail0: f64,
    pub cond_max: f64,
    pub isotropy_tol: f64,
    pub split_tol: f64,
    /// Padding factor for evaluating `F o K`.
    pub dealias: usize,
    /// Bound on `|lambda| / |E|` monitored during the iteration.
    pub c_van: f64,
    /// Recompute `G` from the current torus at every step.
    pub refresh_g: bool,
    pub bundle: BundleConfig,
    pub divisor: SmallDivisorConfig,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        Self {
            solve_tol: 1e-10,
            lambda_tol: 1e-9,
            uniq_tol: 1e-8,
            max_iter: 30,
            stagnation_ratio: 0.5,
            stagnation_steps: 3,
            tail0: 1e-14,
            cond_max: 1e8,
            isotropy_tol: 1e-8,
            split_tol: 1e-10,
            dealias: 2,
            c_van: 1e3,
            refresh_g: false,
            bundle: BundleConfig::default(),
            divisor: SmallDivisorConfig::default(),
        }
    }
}

impl NewtonConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("solve_tol", self.solve_tol),
            ("lambda_tol", self.lambda_tol),
            ("uniq_tol", self.uniq_tol),
            ("stagnation_ratio", self.stagnation_ratio),
            ("tail0", self.tail0),
            ("cond_max", self.cond_max),
            ("isotropy_tol", self.isotropy_tol),
            ("split_tol", self.split_tol),
            ("c_van", self.c_van),
            ("bundle.tol", self.bundle.tol),
            ("bundle.series_tol", self.bundle.series_tol),
            ("divisor.avg_tol", self.divisor.avg_tol),
            ("divisor.floor_scale", self.divisor.floor_scale),
            ("divisor.kappa", self.divisor.kappa),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(WhiskerError::Shape(format!("{name} must be positive and finite, got {v}")));
            }
        }
        if self.dealias == 0 || !self.dealias.is_power_of_two() {
            return Err(WhiskerError::InvalidGrid(format!("dealias factor {} must be a power of two", self.dealias)));
        }
        Ok(())
    }
}

/// One line of the iteration log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NewtonRecord {
    pub iter: usize,
    pub residual: f64,
    pub lambda_norm: f64,
    /// `|Lambda|` of the step that produced this iterate.
    #[serde(rename = "Lambda_norm")]
    pub step_lambda_norm: f64,
    pub delta_norm: f64,
    #[serde(rename = "avgA_cond")]
    pub avg_a_cond: f64,
    #[serde(rename = "avgQ_cond")]
    pub avg_q_cond: f64,
    #[serde(rename = "avgA_inv")]
    pub avg_a_inv: f64,
    pub mu1: f64,
    pub mu2: f64,
    pub mu3: f64,
    pub c_h: f64,
    pub isotropy: f64,
    pub center_dist: f64,
    pub split_residual: f64,
    pub tail: f64,
    pub vanishing_ratio: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub flow_defect_t: Option<BTreeMap<String, f64>>,
}

impl NewtonRecord {
    fn bare(iter: usize, residual: f64, lambda_norm: f64) -> Self {
        Self {
            iter,
            residual,
            lambda_norm,
            step_lambda_norm: 0.0,
            delta_norm: 0.0,
            avg_a_cond: f64::NAN,
            avg_q_cond: f64::NAN,
            avg_a_inv: f64::NAN,
            mu1: f64::NAN,
            mu2: f64::NAN,
            mu3: f64::NAN,
            c_h: f64::NAN,
            isotropy: f64::NAN,
            center_dist: f64::NAN,
            split_residual: f64::NAN,
            tail: f64::NAN,
            vanishing_ratio: f64::NAN,
            flow_defect_t: None,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("records serialize")
    }
}

/// A candidate or converged torus with its frozen frame `G`.
#[derive(Clone, Debug)]
pub struct TorusSolution<T> {
    pub k: Embedding<T>,
    pub lambda: Vec<T>,
    pub omega: Frequency,
    /// `[J(K0)^-1 DK0] o T_omega`, fixed for the whole run.
    pub g: MatrixField<T>,
    pub splitting: Option<Splitting<T>>,
    pub rates: Option<RateEstimates>,
    pub report: Vec<NewtonRecord>,
    pub residual: f64,
    pub converged: bool,
    pub vanishing: Option<VanishingCheck>,
    /// Observed `|K_inf - K0| / |E0|`.
    pub c_dist: Option<f64>,
}

/// `G = [J(K)^-1 DK] o T_omega` on the grid of `k`.
pub fn frozen_frame<T: Real, S: SymplecticSystem<T> + ?Sized>(
    k: &Embedding<T>,
    sys: &S,
    omega: &[f64],
) -> Result<MatrixField<T>> {
    let shifted = Frames::shifted(k, sys, omega)?;
    shifted.jinv.mul(&shifted.dk)
}

impl<T: Real> TorusSolution<T> {
    /// Initial guess with `lambda = 0` and `G` built from `k0`.
    pub fn seed<S: SymplecticSystem<T> + ?Sized>(k0: Embedding<T>, omega: Frequency, sys: &S) -> Result<Self> {
        if omega.omega.len() != k0.torus_dim() {
            return Err(WhiskerError::Shape("frequency length differs from torus dimension".into()));
        }
        if k0.dim() != sys.dim() {
            return Err(WhiskerError::Shape(format!("embedding in R^{} for a system on R^{}", k0.dim(), sys.dim())));
        }
        let g = frozen_frame(&k0, sys, &omega.omega)?;
        let l = k0.torus_dim();
        Ok(Self {
            k: k0,
            lambda: vec![T::zero(); l],
            omega,
            g,
            splitting: None,
            rates: None,
            report: Vec::new(),
            residual: f64::NAN,
            converged: false,
            vanishing: None,
            c_dist: None,
        })
    }

    pub fn lambda_norm(&self) -> f64 {
        self.lambda.iter().fold(0.0f64, |m, x| m.max(x.to_f64_().abs()))
    }
}

/// `E = F o K + G lambda - K o T_omega` with its size.
#[derive(Clone, Debug)]
pub struct Residual<T> {
    /// Modes of `E` on the grid of `K`.
    pub e: FourierMap<T>,
    /// Grid sup over the padded grid.
    pub norm: f64,
    /// l1 mass of the padded-grid modes outside the base grid.
    pub tail: f64,
}

/// Evaluate the translated invariance equation on a grid `dealias` times finer.
pub fn residual<T: Real, S: SymplecticSystem<T> + ?Sized>(
    sol: &TorusSolution<T>,
    sys: &S,
    dealias: usize,
) -> Result<Residual<T>> {
    let k = &sol.k;
    let grid = k.grid().clone();
    let fine = grid.scaled(dealias)?;
    let omega = &sol.omega.omega;
    let pts = k.points_on(&fine)?;
    let domain = sys.domain();
    for (j, p) in pts.iter().enumerate() {
        domain.check(j, p)?;
    }
    let (rows, cols) = sol.g.shape();
    let g = MatrixField::from_fourier(&sol.g.to_fourier()?.resample(&fine)?, rows, cols)?;
    let shifted = k.shifted_points_on(&fine, omega)?;
    let images: Result<Vec<Vec<T>>> = pts.par_iter().map(|p| sys.map(p)).collect();
    let images = images?;
    let e: Vec<Vec<T>> = images
        .iter()
        .enumerate()
        .map(|(j, fz)| {
            let gl = g.at(j).matvec(&sol.lambda);
            fz.iter().zip(&gl).zip(&shifted[j]).map(|((&a, &b), &c)| a + b - c).collect()
        })
        .collect();
    let norm = e.iter().flatten().fold(0.0f64, |m, x| m.max(x.to_f64_().abs()));
    let e_fine = FourierMap::from_points(&fine, k.dim(), &e)?;
    let kmax = grid.sizes().iter().min().copied().unwrap_or(2) / 2 - 1;
    let tail = if dealias > 1 { e_fine.truncate(kmax).1.to_f64_() } else { 0.0 };
    Ok(Residual { e: e_fine.resample(&grid)?, norm: if norm.is_nan() { f64::INFINITY } else { norm }, tail })
}

/// Everything the step needs from the linearization at the current torus.
#[derive(Clone, Debug)]
pub struct Linearization<T> {
    /// `DF(K(theta))`
    pub cocycle: MatrixField<T>,
    pub frames: Frames<T>,
    /// Frames at `theta + omega`.
    pub shifted: Frames<T>,
    /// Inverse of `M~^T J M~` at `theta + omega`.
    pub gram: GramInverse<T>,
    pub twist_a: TwistData<T>,
    pub twist_q: TwistData<T>,
    pub splitting: Splitting<T>,
    pub rates: RateEstimates,
    pub isotropy: f64,
    pub center_dist: f64,
    pub split_residual: f64,
}

/// Linearize at `sol.k`, refining the splitting seeded from `prev` when given.
pub fn linearize<T: Real, S: SymplecticSystem<T> + ?Sized>(
    sol: &TorusSolution<T>,
    sys: &S,
    prev: Option<&Splitting<T>>,
    cfg: &NewtonConfig,
) -> Result<Linearization<T>> {
    let k = &sol.k;
    let omega = &sol.omega.omega;
    let grid = k.grid().clone();
    let pts = k.points();
    let cocycle = MatrixField::try_from_index_fn(&grid, |i| sys.jacobian(&pts[i]))?;
    let frames = Frames::build(&pts, k.jacobian()?, sys)?;
    let shifted = Frames::shifted(k, sys, omega)?;
    let gram = gram_inverse(&shifted)?;
    let tq = twist_q(&shifted, &sol.g)?;

    let dim = k.dim();
    let l = k.torus_dim();
    if dim < 2 * l || !(dim - 2 * l).is_multiple_of(2) {
        return Err(WhiskerError::Shape(format!("no symmetric hyperbolic split of R^{dim} around a {l}-torus")));
    }
    let dh = (dim - 2 * l) / 2;
    let seed = match prev {
        Some(p) if p.bases.stable.grid() == &grid => {
            SplitBases { stable: p.bases.stable.clone(), center: frames.mtilde.clone(), unstable: p.bases.unstable.clone() }
        }
        _ => seed_bases(&cocycle, &frames.mtilde, dh, dh, omega, &cfg.bundle)?,
    };
    let splitting = refine_splitting(&cocycle, &seed, omega, &cfg.bundle)?;
    let ta = twist_a_center(&frames, &shifted, &cocycle, &splitting.proj_c.shift(omega)?)?;
    let rates = estimate_rates(&cocycle, &splitting, omega, cfg.bundle.n_window)?;
    let split_residual = splitting.invariance_residual(&cocycle, omega)?.to_f64_();
    let center_dist = splitting.center_distance(&frames.mtilde)?.to_f64_();
    let isotropy = frames.isotropy_defect().to_f64_();
    Ok(Linearization {
        cocycle,
        frames,
        shifted,
        gram,
        twist_a: ta,
        twist_q: tq,
        splitting,
        rates,
        isotropy,
        center_dist,
        split_residual,
    })
}

/// Solution of the center equation.
#[derive(Clone, Debug)]
pub struct CenterSolution<T> {
    /// Coordinates `(W1, W2)` in the frame `M~`.
    pub w: FourierMap<T>,
    pub lambda: Vec<T>,
    /// `M~ W` as a column field.
    pub delta: MatrixField<T>,
}

fn column_field<T: Real>(f: &FourierMap<T>) -> Result<MatrixField<T>> {
    MatrixField::from_fourier(f, f.m(), 1)
}

fn rows_of<T: Real>(x: &Matrix<T>, start: usize, count: usize) -> Matrix<T> {
    x.block(start, 0, count, x.cols())
}

/// Solve `DF(K) M~ W - (M~ W) o T_omega = -Pi^c (E + G Lambda)` up to the
/// terms that vanish on invariant tori.
///
/// `e` is the residual as a column field at `theta`; the center projection
/// is taken in the fibre over `theta + omega`.
pub fn center_solve<T: Real>(
    e: &MatrixField<T>,
    lin: &Linearization<T>,
    g: &MatrixField<T>,
    omega: &[f64],
    divisor: &SmallDivisorConfig,
) -> Result<CenterSolution<T>> {
    let grid = e.grid().clone();
    let l = lin.frames.torus_dim();
    let pc = lin.splitting.proj_c.shift(omega)?;
    // H = -(M~^T J M~)^-1 M~^T J at theta + omega
    let h = MatrixField::from_index_fn(&grid, |i| {
        let s = &lin.shifted;
        (&(lin.gram.inverse.at(i) * &s.mtilde.at(i).transpose()) * s.j.at(i)).scale(-T::one())
    })?;
    let p0 = MatrixField::from_index_fn(&grid, |i| &(h.at(i) * pc.at(i)) * e.at(i))?;
    let q = MatrixField::from_index_fn(&grid, |i| &(h.at(i) * pc.at(i)) * g.at(i))?;

    // avg of the second block of p0 + q Lambda must vanish
    let q2 = rows_of(&q.average(), l, l);
    let p02 = rows_of(&p0.average(), l, l);
    let cond = q2.condition();
    let q2_inv = q2.inverse().map_err(|_| WhiskerError::TwistDegenerate { which: "Q", cond: cond.to_f64_() })?;
    let lam_m = (&q2_inv * &p02).scale(-T::one());
    let lambda = lam_m.column(0);
    let p = MatrixField::from_index_fn(&grid, |i| p0.at(i) + &(q.at(i) * &lam_m))?;
    let pf = p.to_fourier()?;
    let p1 = FourierMap::stack(&(0..l).map(|c| pf.component(c)).collect::<Vec<_>>())?;
    let p2 = FourierMap::stack(&(l..2 * l).map(|c| pf.component(c)).collect::<Vec<_>>())?;

    // W2 o T - W2 = -p2, then fix avg(W2) so that A W2 - p1 has zero average
    let w2_perp = solve_map(&p2.scale(-T::one()), omega, divisor)?;
    let w2_pts = w2_perp.to_points();
    let a = &lin.twist_a;
    let aw: Vec<Vec<T>> = a.field.apply(&w2_pts);
    let avg_aw = crate::fourier::average_points(&aw);
    let avg_p1 = p1.average();
    let rhs: Vec<T> = avg_p1.iter().zip(&avg_aw).map(|(&x, &y)| x - y).collect();
    let a_inv = a.avg.inverse().map_err(|_| WhiskerError::TwistDegenerate { which: "A", cond: a.cond.to_f64_() })?;
    let c2 = a_inv.matvec(&rhs);
    let mut w2 = w2_perp;
    let n = grid.len();
    for (c, v) in c2.iter().enumerate() {
        w2.coeffs_mut()[c * n].re += *v;
    }

    // W1 o T - W1 = A W2 - p1, zero average
    let w2_pts = w2.to_points();
    let p1_pts = p1.to_points();
    let rhs1: Vec<Vec<T>> = a
        .field
        .apply(&w2_pts)
        .into_iter()
        .zip(&p1_pts)
        .map(|(x, y)| x.iter().zip(y).map(|(&u, &v)| u - v).collect())
        .collect();
    let rhs1 = FourierMap::from_points(&grid, l, &rhs1)?;
    let w1 = solve_map(&rhs1, omega, divisor)?;
    let w = FourierMap::stack(&[w1, w2])?;
    let wc = column_field(&w)?;
    // range(M~) is only close to the center bundle to first order in the
    // hyperbolic tilt, so project what M~ W puts into the other bundles
    let delta = lin.splitting.proj_c.mul(&lin.frames.mtilde.mul(&wc)?)?;
    Ok(CenterSolution { w, lambda, delta })
}

/// Correction `(Delta, Lambda)` of one step.
#[derive(Clone, Debug)]
pub struct Step<T> {
    pub delta: FourierMap<T>,
    pub lambda: Vec<T>,
    pub center: CenterSolution<T>,
}

fn step_from<T: Real>(
    sol: &TorusSolution<T>,
    lin: &Linearization<T>,
    e: &FourierMap<T>,
    tail: f64,
    cfg: &NewtonConfig,
) -> Result<Step<T>> {
    let omega = &sol.omega.omega;
    let ef = column_field(e)?;
    let center = center_solve(&ef, lin, &sol.g, omega, &cfg.divisor)?;
    let lam_m = Matrix::column_vector(&center.lambda);
    let forcing = MatrixField::from_index_fn(ef.grid(), |i| ef.at(i) + &(sol.g.at(i) * &lam_m))?;
    let back: Vec<f64> = omega.iter().map(|w| -w).collect();
    let forcing_back = forcing.shift(&back)?;
    let split = &lin.splitting;
    let mut total = center.delta.clone();
    let (ds, _, du) = split.dims;
    if ds > 0 {
        let es = split.proj_s.mul(&forcing_back)?;
        let d = solve_stable(&lin.cocycle, Some(&split.proj_s), &es, omega, (lin.rates.mu1, lin.rates.c_h), &cfg.bundle)?;
        total = total.add(&d)?;
    }
    if du > 0 {
        let eu = split.proj_u.mul(&forcing_back)?;
        let d =
            solve_unstable(&lin.cocycle, Some(&split.proj_u), &eu, omega, (lin.rates.mu2, lin.rates.c_h), &cfg.bundle)?;
        total = total.add(&d)?;
    }
    let mut delta = total.to_fourier()?;
    delta.drop_nyquist();
    delta.filter_small(T::lit(tail));
    if !delta.is_finite() {
        return Err(WhiskerError::Diverged { residual: f64::INFINITY });
    }
    Ok(Step { delta, lambda: center.lambda.clone(), center })
}

fn tail_threshold(cfg: &NewtonConfig, m: usize) -> f64 {
    cfg.tail0 * 2f64.powf(-(m as f64) * (cfg.divisor.nu + 1.0))
}

fn check_nondegenerate<T: Real>(lin: &Linearization<T>, cfg: &NewtonConfig) -> Result<()> {
    lin.twist_a.check("A", cfg.cond_max)?;
    lin.twist_q.check("Q", cfg.cond_max)?;
    lin.rates.check()
}

fn apply_step<T: Real, S: SymplecticSystem<T> + ?Sized>(
    sol: &TorusSolution<T>,
    step: &Step<T>,
    sys: &S,
    cfg: &NewtonConfig,
) -> Result<TorusSolution<T>> {
    let mut next = sol.clone();
    next.k = sol.k.add(&step.delta)?;
    next.lambda = sol.lambda.iter().zip(&step.lambda).map(|(&a, &b)| a + b).collect();
    if cfg.refresh_g {
        next.g = frozen_frame(&next.k, sys, &sol.omega.omega)?;
    }
    Ok(next)
}

/// Outcome of a single step taken in isolation.
#[derive(Clone, Debug)]
pub struct StepReport {
    pub residual_before: f64,
    pub residual_after: f64,
    pub delta_norm: f64,
    pub step_lambda_norm: f64,
}

/// One Newton step from `sol`; `sol` is left untouched on error.
pub fn newton_step<T: Real, S: SymplecticSystem<T> + ?Sized>(
    sol: &TorusSolution<T>,
    sys: &S,
    cfg: &NewtonConfig,
) -> Result<(TorusSolution<T>, StepReport)> {
    cfg.validate()?;
    let res = residual(sol, sys, cfg.dealias)?;
    let lin = linearize(sol, sys, sol.splitting.as_ref(), cfg)?;
    check_nondegenerate(&lin, cfg)?;
    let step = step_from(sol, &lin, &res.e, tail_threshold(cfg, sol.report.len()), cfg)?;
    let mut next = apply_step(sol, &step, sys, cfg)?;
    next.splitting = Some(lin.splitting);
    let after = residual(&next, sys, cfg.dealias)?;
    next.residual = after.norm;
    let report = StepReport {
        residual_before: res.norm,
        residual_after: after.norm,
        delta_norm: step.delta.sup_grid().to_f64_(),
        step_lambda_norm: step.lambda.iter().fold(0.0f64, |m, x| m.max(x.to_f64_().abs())),
    };
    Ok((next, report))
}

/// A failed run with everything computed up to the failure.
#[derive(Debug, thiserror::Error)]
#[error("{error}")]
pub struct SolveFailure<T: std::fmt::Debug> {
    pub error: WhiskerError,
    pub partial: Box<TorusSolution<T>>,
}

/// Run the iteration to convergence.
pub fn solve<T: Real, S: SymplecticSystem<T> + ?Sized>(
    seed: TorusSolution<T>,
    sys: &S,
    cfg: &NewtonConfig,
) -> std::result::Result<TorusSolution<T>, SolveFailure<T>> {
    solve_observed(seed, sys, cfg, |_| {})
}

/// [`solve`] with a callback receiving each record as it is produced.
pub fn solve_observed<T: Real, S: SymplecticSystem<T> + ?Sized>(
    seed: TorusSolution<T>,
    sys: &S,
    cfg: &NewtonConfig,
    mut observe: impl FnMut(&NewtonRecord),
) -> std::result::Result<TorusSolution<T>, SolveFailure<T>> {
    let mut sol = seed;
    macro_rules! tri {
        ($e:expr) => {
            match $e {
                Ok(v) => v,
                Err(error) => return Err(SolveFailure { error, partial: Box::new(sol) }),
            }
        };
    }
    tri!(cfg.validate());
    let mut res = tri!(residual(&sol, sys, cfg.dealias));
    let e0 = res.norm;
    let k0 = sol.k.clone();
    let mut prev = sol.splitting.take();
    let mut slow = 0usize;
    let mut delta_norm = 0.0;
    let mut step_lambda = 0.0;
    let start = sol.report.len();
    for m in 0..=cfg.max_iter {
        sol.residual = res.norm;
        let lin = match linearize(&sol, sys, prev.as_ref(), cfg) {
            Ok(lin) => lin,
            Err(error) => {
                let rec = NewtonRecord::bare(start + m, res.norm, sol.lambda_norm());
                observe(&rec);
                sol.report.push(rec);
                return Err(SolveFailure { error, partial: Box::new(sol) });
            }
        };
        let lambda_f: Vec<f64> = sol.lambda.iter().map(|x| x.to_f64_()).collect();
        let van = vanishing_check(&lambda_f, res.norm, cfg.c_van, None, sys.exact());
        let record = NewtonRecord {
            iter: start + m,
            residual: res.norm,
            lambda_norm: sol.lambda_norm(),
            step_lambda_norm: step_lambda,
            delta_norm,
            avg_a_cond: lin.twist_a.cond.to_f64_(),
            avg_q_cond: lin.twist_q.cond.to_f64_(),
            avg_a_inv: lin.twist_a.inverse_norm().to_f64_(),
            mu1: lin.rates.mu1,
            mu2: lin.rates.mu2,
            mu3: lin.rates.mu3,
            c_h: lin.rates.c_h,
            isotropy: lin.isotropy,
            center_dist: lin.center_dist,
            split_residual: lin.split_residual,
            tail: res.tail,
            vanishing_ratio: van.ratio,
            flow_defect_t: None,
        };
        observe(&record);
        sol.report.push(record);
        sol.rates = Some(lin.rates.clone());
        sol.splitting = Some(lin.splitting.clone());
        if res.norm < cfg.solve_tol {
            sol.converged = true;
            sol.vanishing = Some(vanishing_check(&lambda_f, res.norm, cfg.c_van, Some(cfg.lambda_tol), sys.exact()));
            let moved = tri!(sol.k.distance(&k0)).to_f64_();
            sol.c_dist = (e0 > 0.0).then(|| moved / e0);
            return Ok(sol);
        }
        if m == cfg.max_iter {
            break;
        }
        tri!(check_nondegenerate(&lin, cfg));
        let step = tri!(step_from(&sol, &lin, &res.e, tail_threshold(cfg, m), cfg));
        let next = tri!(apply_step(&sol, &step, sys, cfg));
        let next_res = match residual(&next, sys, cfg.dealias) {
            Ok(r) => r,
            Err(error) => return Err(SolveFailure { error, partial: Box::new(sol) }),
        };
        delta_norm = step.delta.sup_grid().to_f64_();
        step_lambda = step.lambda.iter().fold(0.0f64, |a, x| a.max(x.to_f64_().abs()));
        let ratio = next_res.norm / res.norm;
        let old = res.norm;
        sol = next;
        res = next_res;
        prev = Some(lin.splitting);
        if !res.norm.is_finite() || res.norm > 1e6 * old.max(e0) {
            sol.residual = res.norm;
            let rec = NewtonRecord::bare(start + m + 1, res.norm, sol.lambda_norm());
            observe(&rec);
            sol.report.push(rec);
            tri!(Err(WhiskerError::Diverged { residual: res.norm }));
        }
        if ratio > cfg.stagnation_ratio {
            slow += 1;
            if slow >= cfg.stagnation_steps {
                sol.residual = res.norm;
                let mut rec = NewtonRecord::bare(start + m + 1, res.norm, sol.lambda_norm());
                rec.delta_norm = delta_norm;
                rec.step_lambda_norm = step_lambda;
                observe(&rec);
                sol.report.push(rec);
                tri!(Err(WhiskerError::Stagnation {
                    ratio: cfg.stagnation_ratio,
                    steps: cfg.stagnation_steps,
                    residual: res.norm
                }));
            }
        } else {
            slow = 0;
        }
    }
    let residual = res.norm;
    Err(SolveFailure { error: WhiskerError::MaxIterations { iterations: cfg.max_iter, residual }, partial: Box::new(sol) })
}

/// Phase `tau` with `K1 o T_tau ~ K2`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseLock {
    pub tau: Vec<f64>,
    pub mismatch: f64,
}

fn tangential_defect<T: Real>(k1: &Embedding<T>, k2: &Embedding<T>, n2dk2t: &MatrixField<T>, tau: &[f64]) -> Result<(Vec<T>, Matrix<T>)> {
    let shifted = k1.compose_shift(tau);
    let diff = shifted.periodic.sub(&k2.periodic)?.to_points();
    let dk1 = shifted.jacobian()?;
    let l = k1.torus_dim();
    let n = diff.len();
    let mut f = vec![T::zero(); l];
    let mut jac = Matrix::zeros(l, l);
    for i in 0..n {
        let a = n2dk2t.at(i);
        let fi = a.matvec(&diff[i]);
        for (c, v) in fi.into_iter().enumerate() {
            f[c] += v;
        }
        jac = &jac + &(a * dk1.at(i));
    }
    let s = T::one() / T::from_usize_(n);
    Ok((f.into_iter().map(|x| x * s).collect(), jac.scale(s)))
}

/// Lock the phase of `k1` onto `k2`: coarse scan, then Newton on the
/// averaged tangential component of `K1 o T_tau - K2`.
pub fn phase_lock<T: Real>(
    k1: &Embedding<T>,
    k2: &Embedding<T>,
    omega1: &Frequency,
    omega2: &Frequency,
    uniq_tol: f64,
) -> Result<PhaseLock> {
    let same = omega1.omega.len() == omega2.omega.len()
        && omega1.omega.iter().zip(&omega2.omega).all(|(a, b)| (a - b).abs() <= 1e-14 * (1.0 + a.abs()));
    if !same {
        return Err(WhiskerError::FrequencyMismatch(omega1.omega.clone(), omega2.omega.clone()));
    }
    if k1.winding != k2.winding {
        return Err(WhiskerError::Shape("embeddings wind differently".into()));
    }
    let k2 = &k2.resample(k1.grid())?;
    let l = k1.torus_dim();
    let per_axis: usize = if l == 1 { 128 } else { 32 };
    let total = per_axis.pow(l as u32);
    let candidates: Vec<Vec<f64>> = (0..total)
        .map(|mut idx| {
            (0..l)
                .map(|_| {
                    let i = idx % per_axis;
                    idx /= per_axis;
                    -1.0 + 2.0 * i as f64 / per_axis as f64
                })
                .collect()
        })
        .collect();
    let dists: Result<Vec<f64>> =
        candidates.par_iter().map(|t| Ok(k1.compose_shift(t).distance(k2)?.to_f64_())).collect();
    let dists = dists?;
    let best = dists.iter().enumerate().fold(0, |b, (i, &d)| if d < dists[b] { i } else { b });
    let mut tau = candidates[best].clone();

    let dk2 = k2.jacobian()?;
    let n2dk2t = dk2.try_map(|d| Ok(&(&d.transpose() * d).inverse()? * &d.transpose()))?;
    for _ in 0..60 {
        let (f, jac) = tangential_defect(k1, k2, &n2dk2t, &tau)?;
        let step = jac.lu()?.solve_vec(&f);
        let mut size = 0.0f64;
        for (t, s) in tau.iter_mut().zip(&step) {
            *t -= s.to_f64_();
            size = size.max(s.to_f64_().abs());
        }
        if size < 1e-15 {
            break;
        }
    }
    let mismatch = k1.compose_shift(&tau).distance(k2)?.to_f64_();
    if !(mismatch <= uniq_tol) {
        return Err(WhiskerError::DistinctTori { mismatch });
    }
    Ok(PhaseLock { tau, mismatch })
}

/// How each continuation step is predicted from the previous ones.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Predictor {
    Trivial,
    #[default]
    Secant,
}

#[derive(Clone, Debug)]
pub struct ContinuationStep<T> {
    pub param: f64,
    pub solution: TorusSolution<T>,
    /// `|K_p - K_p'| / |p - p'|` against the previous step.
    pub lipschitz: Option<f64>,
}

/// Where and why a branch stopped.
#[derive(Clone, Debug)]
pub struct ContinuationFailure<T> {
    pub param: f64,
    pub error: WhiskerError,
    pub partial: Option<Box<TorusSolution<T>>>,
}

#[derive(Clone, Debug)]
pub struct Continuation<T> {
    pub steps: Vec<ContinuationStep<T>>,
    pub failure: Option<ContinuationFailure<T>>,
}

/// Follow a family of tori over `params`, solving each member from the
/// prediction of the previous ones. `build` supplies the system and the
/// frequency for a parameter value.
pub fn continue_family<T, S, B>(
    k0: &Embedding<T>,
    params: &[f64],
    mut build: B,
    predictor: Predictor,
    cfg: &NewtonConfig,
) -> Continuation<T>
where
    T: Real,
    S: SymplecticSystem<T>,
    B: FnMut(f64) -> Result<(S, Frequency)>,
{
    let mut steps: Vec<ContinuationStep<T>> = Vec::new();
    for &p in params {
        let guess = match (predictor, steps.len()) {
            (Predictor::Secant, n) if n >= 2 => {
                let a = &steps[n - 2];
                let b = &steps[n - 1];
                let s = (p - b.param) / (b.param - a.param);
                match b.solution.k.periodic.sub(&a.solution.k.periodic) {
                    Ok(d) => b.solution.k.periodic.axpy(T::lit(s), &d).ok().map(|per| Embedding { winding: k0.winding.clone(), periodic: per }),
                    Err(_) => None,
                }
                .unwrap_or_else(|| b.solution.k.clone())
            }
            (_, 0) => k0.clone(),
            (_, n) => steps[n - 1].solution.k.clone(),
        };
        let (sys, omega) = match build(p) {
            Ok(v) => v,
            Err(error) => return Continuation { steps, failure: Some(ContinuationFailure { param: p, error, partial: None }) },
        };
        let seed = match TorusSolution::seed(guess, omega, &sys) {
            Ok(s) => s,
            Err(error) => return Continuation { steps, failure: Some(ContinuationFailure { param: p, error, partial: None }) },
        };
        match solve(seed, &sys, cfg) {
            Ok(sol) => {
                let lipschitz = steps.last().and_then(|prev| {
                    let d = sol.k.distance(&prev.solution.k).ok()?.to_f64_();
                    let dp = (p - prev.param).abs();
                    (dp > 0.0).then(|| d / dp)
                });
                steps.push(ContinuationStep { param: p, solution: sol, lipschitz });
            }
            Err(f) => {
                let failure = ContinuationFailure { param: p, error: f.error, partial: Some(f.partial) };
                return Continuation { steps, failure: Some(failure) };
            }
        }
    }
    Continuation { steps, failure: None }
}

/// Composite small-twist and small-hyperbolicity constants.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub pi_s: f64,
    pub pi_c: f64,
    pub pi_u: f64,
    pub dk: f64,
    pub n: f64,
    pub g: f64,
    pub avg_a_inv: f64,
    pub avg_q_inv: f64,
    pub c_h: f64,
    pub mu1: f64,
    pub mu2: f64,
    pub alpha: f64,
    pub beta: f64,
    /// Center constant.
    pub c_center: f64,
    /// Hyperbolic constant.
    pub c_hyperbolic: f64,
    /// Constant of the quadratic estimate.
    pub c_total: f64,
    pub flags: Vec<String>,
}

/// Thresholds above which the center, hyperbolic and total constants are flagged.
pub const CENTER_FLAG: f64 = 1e2;
pub const HYPERBOLIC_FLAG: f64 = 1e3;
pub const CONDITION_FLAG: f64 = 1e6;

/// Evaluate the composite constants from a linearization.
pub fn condition_constants<T: Real>(lin: &Linearization<T>, g: &MatrixField<T>, alpha: f64, beta: f64) -> ConditionReport {
    let (ps, pc, pu) = lin.splitting.norms();
    let (pi_s, pi_c, pi_u) = (ps.to_f64_(), pc.to_f64_(), pu.to_f64_());
    let dk = lin.frames.dk.sup_norm2().to_f64_();
    let n = lin.frames.n.sup_norm2().to_f64_();
    let avg_a_inv = lin.twist_a.inverse_norm().to_f64_();
    let avg_q_inv = lin.twist_q.inverse_norm().to_f64_();
    let r = &lin.rates;
    let geo = |mu: f64| if mu < 1.0 { 1.0 / (1.0 - mu) } else { f64::INFINITY };
    let hyp = (pi_s * geo(r.mu1)).max(pi_u * geo(r.mu2));
    let frame = dk.max(1.0).powf(alpha) * n.max(1.0).powf(beta);
    let twist = avg_a_inv + avg_q_inv;
    let c_center = pi_c * frame * twist;
    let c_hyperbolic = r.c_h * (1.0 + c_center) * hyp;
    let c_total = r.c_h * r.c_h * hyp * hyp + pi_c * pi_c * frame * twist * twist;
    let mut flags = Vec::new();
    for (name, v, bound) in [
        ("C^c", c_center, CENTER_FLAG),
        ("C^h", c_hyperbolic, HYPERBOLIC_FLAG),
        ("C", c_total, CONDITION_FLAG),
    ] {
        if !(v <= bound) {
            flags.push(format!("{name} = {v:e}"));
        }
    }
    ConditionReport {
        pi_s,
        pi_c,
        pi_u,
        dk,
        n,
        g: g.sup_norm2().to_f64_(),
        avg_a_inv,
        avg_q_inv,
        c_h: r.c_h,
        mu1: r.mu1,
        mu2: r.mu2,
        alpha,
        beta,
        c_center,
        c_hyperbolic,
        c_total,
        flags,
    }
}

/// Composite constants at `sol` with exponents `alpha = 4`, `beta = 2`.
pub fn condition_report<T: Real, S: SymplecticSystem<T> + ?Sized>(
    sol: &TorusSolution<T>,
    sys: &S,
    cfg: &NewtonConfig,
) -> Result<ConditionReport> {
    let lin = linearize(sol, sys, sol.splitting.as_ref(), cfg)?;
    Ok(condition_constants(&lin, &sol.g, 4.0, 2.0))
}
