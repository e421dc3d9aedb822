//! Hamiltonian and exact symplectic vector fields, reduced to maps through
//! their time-1 flow.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cohomology::{solve_flow, Frequency, SmallDivisorConfig};
use crate::error::{Result, WhiskerError};
use crate::fourier::{average_points, FourierMap, MatrixField};
use crate::geometry::{flow_twist_s, gram_inverse, standard_j, DomainBox, Frames, SymplecticSystem, TwistData};
use crate::linalg::Matrix;
use crate::newton::{solve, NewtonConfig, SolveFailure, TorusSolution};
use crate::scalar::Real;
use crate::torus::Embedding;

/// Autonomous vector field `X` with its derivative.
pub trait VectorField<T: Real>: Send + Sync {
    fn dim(&self) -> usize;

    fn angles(&self) -> Vec<usize>;

    fn field(&self, z: &[T]) -> Vec<T>;

    /// `DX(z)`.
    fn field_jacobian(&self, z: &[T]) -> Matrix<T>;

    fn j(&self, _z: &[T]) -> Matrix<T> {
        standard_j(self.dim())
    }

    fn exact(&self) -> bool {
        true
    }

    fn domain(&self) -> DomainBox {
        DomainBox::unbounded(self.dim())
    }

    fn hamiltonian(&self, _z: &[T]) -> Option<T> {
        None
    }

    /// Number of pieces in a splitting `X = X_1 + .. + X_p` into exactly
    /// integrable fields; zero when no splitting is known.
    fn pieces(&self) -> usize {
        0
    }

    /// Time-`t` flow of piece `p` and its derivative.
    fn piece_flow(&self, _p: usize, _t: T, _z: &[T]) -> (Vec<T>, Matrix<T>) {
        unreachable!("no splitting declared")
    }
}

/// Integration scheme for the time-`t` map.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    /// Second-order symmetric composition of the exact piece flows.
    Strang,
    Yoshida4,
    #[default]
    Yoshida6,
    /// Classical Runge-Kutta on the field and its variational equation.
    Rk4,
}

impl Scheme {
    pub fn order(self) -> usize {
        match self {
            Scheme::Strang => 2,
            Scheme::Yoshida4 | Scheme::Rk4 => 4,
            Scheme::Yoshida6 => 6,
        }
    }
}

/// Integrator choice with its nominal step.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Integrator {
    pub scheme: Scheme,
    pub step: f64,
}

impl Default for Integrator {
    fn default() -> Self {
        Self { scheme: Scheme::Yoshida6, step: 1.0 / 64.0 }
    }
}

/// Sub-step weights of a symmetric composition of Strang steps.
fn composition_weights(scheme: Scheme) -> Vec<f64> {
    let triple = |inner: &[f64], order: f64| -> Vec<f64> {
        let c = 2f64.powf(1.0 / (order + 1.0));
        let w1 = 1.0 / (2.0 - c);
        let w0 = -c * w1;
        let mut out = Vec::new();
        for w in [w1, w0, w1] {
            out.extend(inner.iter().map(|x| x * w));
        }
        out
    };
    match scheme {
        Scheme::Strang | Scheme::Rk4 => vec![1.0],
        Scheme::Yoshida4 => triple(&[1.0], 2.0),
        Scheme::Yoshida6 => triple(&triple(&[1.0], 2.0), 4.0),
    }
}

fn strang<T: Real, X: VectorField<T> + ?Sized>(x: &X, h: T, z: &mut Vec<T>, d: &mut Matrix<T>) {
    let p = x.pieces();
    let half = h * T::lit(0.5);
    let apply = |piece: usize, t: T, z: &mut Vec<T>, d: &mut Matrix<T>| {
        let (nz, nd) = x.piece_flow(piece, t, z);
        *z = nz;
        *d = &nd * d;
    };
    // X_p/2 .. X_2/2  X_1  X_2/2 .. X_p/2
    for piece in (1..p).rev() {
        apply(piece, half, z, d);
    }
    apply(0, h, z, d);
    for piece in 1..p {
        apply(piece, half, z, d);
    }
}

fn rk4<T: Real, X: VectorField<T> + ?Sized>(x: &X, h: T, z: &mut [T], d: &mut Matrix<T>) {
    let n = z.len();
    let eval = |zz: &[T], dd: &Matrix<T>| (x.field(zz), &x.field_jacobian(zz) * dd);
    let axpy = |a: &[T], s: T, b: &[T]| -> Vec<T> { a.iter().zip(b).map(|(&p, &q)| p + s * q).collect() };
    let half = h * T::lit(0.5);
    let d0: &Matrix<T> = d;
    let (k1, m1) = eval(z, d0);
    let (k2, m2) = eval(&axpy(z, half, &k1), &(d0 + &m1.scale(half)));
    let (k3, m3) = eval(&axpy(z, half, &k2), &(d0 + &m2.scale(half)));
    let (k4, m4) = eval(&axpy(z, h, &k3), &(d0 + &m3.scale(h)));
    let sixth = h / T::lit(6.0);
    let two = T::lit(2.0);
    for i in 0..n {
        z[i] += sixth * (k1[i] + two * k2[i] + two * k3[i] + k4[i]);
    }
    let inc = &(&(&m1 + &m2.scale(two)) + &m3.scale(two)) + &m4;
    *d = &*d + &inc.scale(sixth);
}

/// `S_t(z)` and `DS_t(z)` with steps of size at most `integrator.step`.
pub fn flow_to<T: Real, X: VectorField<T> + ?Sized>(
    x: &X,
    integrator: &Integrator,
    t: f64,
    z: &[T],
) -> Result<(Vec<T>, Matrix<T>)> {
    if !(integrator.step > 0.0) || !t.is_finite() {
        return Err(WhiskerError::Integration(format!("invalid step {} or time {t}", integrator.step)));
    }
    let scheme = if x.pieces() == 0 { Scheme::Rk4 } else { integrator.scheme };
    let steps = ((t.abs() / integrator.step).ceil() as usize).max(1);
    let h = t / steps as f64;
    let weights = composition_weights(scheme);
    let domain = x.domain();
    let mut zz = z.to_vec();
    let mut d = Matrix::identity(z.len());
    if t == 0.0 {
        return Ok((zz, d));
    }
    for _ in 0..steps {
        for &w in &weights {
            let hw = T::lit(h * w);
            match scheme {
                Scheme::Rk4 => rk4(x, hw, &mut zz, &mut d),
                _ => strang(x, hw, &mut zz, &mut d),
            }
        }
        if let Some((coord, value)) = domain.violation(&zz) {
            return Err(WhiskerError::Integration(format!(
                "trajectory left the domain: coordinate {coord} = {value}"
            )));
        }
    }
    Ok((zz, d))
}

/// The time-1 map of a vector field as a symplectic map.
pub struct Time1Map<X> {
    pub field: X,
    pub integrator: Integrator,
}

impl<X> Time1Map<X> {
    pub fn new(field: X, integrator: Integrator) -> Self {
        Self { field, integrator }
    }
}

impl<T: Real, X: VectorField<T>> SymplecticSystem<T> for Time1Map<X> {
    fn dim(&self) -> usize {
        self.field.dim()
    }
    fn angles(&self) -> Vec<usize> {
        self.field.angles()
    }
    fn map(&self, z: &[T]) -> Result<Vec<T>> {
        Ok(flow_to(&self.field, &self.integrator, 1.0, z)?.0)
    }
    fn jacobian(&self, z: &[T]) -> Result<Matrix<T>> {
        Ok(flow_to(&self.field, &self.integrator, 1.0, z)?.1)
    }
    fn map_and_jacobian(&self, z: &[T]) -> Result<(Vec<T>, Matrix<T>)> {
        flow_to(&self.field, &self.integrator, 1.0, z)
    }
    fn j(&self, z: &[T]) -> Matrix<T> {
        self.field.j(z)
    }
    fn exact(&self) -> bool {
        self.field.exact()
    }
    fn domain(&self) -> DomainBox {
        self.field.domain()
    }
}

/// Settings for flow tori.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlowConfig {
    pub integrator: Integrator,
    pub verify_times: Vec<f64>,
    /// Flow-invariance defect above which the torus is flagged.
    pub flow_tol: f64,
}

impl Default for FlowConfig {
    fn default() -> Self {
        Self { integrator: Integrator::default(), verify_times: vec![0.25, 0.5, 1.0, 2.0], flow_tol: 1e-8 }
    }
}

/// Grid sup of `S_t o K - K o T_{omega t}` for each `t`.
pub fn flow_defects<T: Real, X: VectorField<T> + ?Sized>(
    x: &X,
    k: &Embedding<T>,
    omega: &[f64],
    integrator: &Integrator,
    times: &[f64],
) -> Result<BTreeMap<String, f64>> {
    let pts = k.points();
    let mut out = BTreeMap::new();
    for &t in times {
        let shift: Vec<f64> = omega.iter().map(|w| w * t).collect();
        let target = k.shifted_points(&shift);
        let moved: Result<Vec<Vec<T>>> = pts.par_iter().map(|p| Ok(flow_to(x, integrator, t, p)?.0)).collect();
        let d = moved?
            .iter()
            .zip(&target)
            .flat_map(|(a, b)| a.iter().zip(b).map(|(&p, &q)| (p - q).to_f64_().abs()))
            .fold(0.0f64, f64::max);
        out.insert(format!("{t}"), d);
    }
    Ok(out)
}

/// Spread `max - min` of `H o K` on the grid.
pub fn energy_spread<T: Real, X: VectorField<T> + ?Sized>(x: &X, k: &Embedding<T>) -> Option<f64> {
    let hs: Option<Vec<f64>> = k.points().iter().map(|p| x.hamiltonian(p).map(|h| h.to_f64_())).collect();
    let hs = hs?;
    let lo = hs.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = hs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Some(hi - lo)
}

/// A flow torus with its invariance checks at intermediate times.
#[derive(Clone, Debug)]
pub struct FlowSolution<T> {
    pub solution: TorusSolution<T>,
    pub defects: BTreeMap<String, f64>,
    pub energy_spread: Option<f64>,
    /// Largest defect exceeded `flow_tol`.
    pub flagged: bool,
}

/// Solve for the torus of the time-1 map, then check `S_t o K = K o T_{omega t}`.
pub fn solve_flow_torus<T: Real, X: VectorField<T>>(
    map: &Time1Map<X>,
    k0: Embedding<T>,
    omega: &Frequency,
    newton: &NewtonConfig,
    cfg: &FlowConfig,
) -> std::result::Result<FlowSolution<T>, SolveFailure<T>> {
    let map_freq = Frequency::map(&omega.omega);
    let seed = match TorusSolution::seed(k0.clone(), map_freq, map) {
        Ok(s) => s,
        Err(error) => {
            let partial = TorusSolution {
                k: k0.clone(),
                lambda: vec![T::zero(); k0.torus_dim()],
                omega: omega.clone(),
                g: MatrixField::constant(k0.grid(), &Matrix::zeros(k0.dim(), k0.torus_dim())),
                splitting: None,
                rates: None,
                report: Vec::new(),
                residual: f64::NAN,
                converged: false,
                vanishing: None,
                c_dist: None,
            };
            return Err(SolveFailure { error, partial: Box::new(partial) });
        }
    };
    let mut sol = solve(seed, map, newton)?;
    let defects = match flow_defects(&map.field, &sol.k, &omega.omega, &cfg.integrator, &cfg.verify_times) {
        Ok(d) => d,
        Err(error) => return Err(SolveFailure { error, partial: Box::new(sol) }),
    };
    if let Some(last) = sol.report.last_mut() {
        last.flow_defect_t = Some(defects.clone());
    }
    let worst = defects.values().cloned().fold(0.0f64, f64::max);
    let energy_spread = energy_spread(&map.field, &sol.k);
    Ok(FlowSolution { solution: sol, defects, energy_spread, flagged: !(worst <= cfg.flow_tol) })
}

/// Deformation `X_lambda = X + sum_i lambda_i Y_i` of a vector field.
pub trait FlowFamily<T: Real>: Send + Sync {
    fn field(&self) -> &dyn VectorField<T>;

    fn params(&self) -> usize;

    /// Columns `Y_i(z)`.
    fn deformation(&self, z: &[T]) -> Matrix<T>;

    /// `d/dz` of `sum_i lambda_i Y_i`.
    fn deformation_jacobian(&self, _lambda: &[T], _z: &[T]) -> Matrix<T> {
        let n = self.field().dim();
        Matrix::zeros(n, n)
    }
}

/// Residual of `d_omega K = X_lambda o K` and the center data of the flow.
#[derive(Clone, Debug)]
pub struct DirectCenter<T> {
    pub residual: FourierMap<T>,
    pub residual_norm: f64,
    /// `S_lambda`.
    pub twist: TwistData<T>,
    /// `avg(Omega(Y_i, d_j K))`; invertible when the family spans the cohomology.
    pub spanning: Matrix<T>,
    pub spanning_cond: f64,
}

fn add_cols<T: Real>(a: &[T], m: &Matrix<T>, lam: &[T]) -> Vec<T> {
    let y = m.matvec(lam);
    a.iter().zip(y).map(|(&p, q)| p + q).collect()
}

/// Evaluate the direct flow residual, the twist `S_lambda` and the spanning matrix.
pub fn direct_center_residual<T: Real, F: FlowFamily<T> + ?Sized>(
    k: &Embedding<T>,
    lambda: &[T],
    family: &F,
    omega: &[f64],
    cond_max: f64,
) -> Result<DirectCenter<T>> {
    let x = family.field();
    let grid = k.grid().clone();
    let pts = k.points();
    let dk_omega = {
        let per = k.periodic.directional(omega).to_points();
        let om: Vec<T> = omega.iter().map(|&w| T::lit(w)).collect();
        let lin = k.winding.matvec(&om);
        per.into_iter().map(|p| p.iter().zip(&lin).map(|(&a, &b)| a + b).collect::<Vec<T>>()).collect::<Vec<_>>()
    };
    let res: Vec<Vec<T>> = pts
        .iter()
        .zip(&dk_omega)
        .map(|(p, d)| {
            let xl = add_cols(&x.field(p), &family.deformation(p), lambda);
            d.iter().zip(xl).map(|(&a, b)| a - b).collect()
        })
        .collect();
    let residual_norm = res.iter().flatten().fold(0.0f64, |m, v| m.max(v.to_f64_().abs()));
    let residual = FourierMap::from_points(&grid, k.dim(), &res)?;

    let dk = k.jacobian()?;
    let frames = Frames::build(&pts, dk.clone(), &FieldGeometry(x))?;
    let dx = MatrixField::from_index_fn(&grid, |i| &x.field_jacobian(&pts[i]) + &family.deformation_jacobian(lambda, &pts[i]))?;
    let twist = flow_twist_s(&frames, &dx, omega)?;

    let ys = MatrixField::from_index_fn(&grid, |i| family.deformation(&pts[i]))?;
    let spanning = MatrixField::from_index_fn(&grid, |i| &(&ys.at(i).transpose() * frames.j.at(i)) * dk.at(i))?.average();
    let spanning_cond = spanning.condition().to_f64_();
    if !(spanning_cond <= cond_max) {
        return Err(WhiskerError::CohomologyDegenerate { cond: spanning_cond });
    }
    Ok(DirectCenter { residual, residual_norm, twist, spanning, spanning_cond })
}

/// Geometry-only view of a vector field (no map is ever evaluated).
struct FieldGeometry<'a, T: Real>(&'a dyn VectorField<T>);

impl<T: Real> SymplecticSystem<T> for FieldGeometry<'_, T> {
    fn dim(&self) -> usize {
        self.0.dim()
    }
    fn angles(&self) -> Vec<usize> {
        self.0.angles()
    }
    fn map(&self, _z: &[T]) -> Result<Vec<T>> {
        Err(WhiskerError::Integration("vector field used as a map".into()))
    }
    fn jacobian(&self, _z: &[T]) -> Result<Matrix<T>> {
        Err(WhiskerError::Integration("vector field used as a map".into()))
    }
    fn j(&self, z: &[T]) -> Matrix<T> {
        self.0.j(z)
    }
}

/// Center correction of the direct flow equation
/// `d_omega Delta - DX_lambda(K) Delta - Y Lambda = -R`.
#[derive(Clone, Debug)]
pub struct DirectCenterStep<T> {
    pub w: FourierMap<T>,
    pub lambda: Vec<T>,
    pub delta: MatrixField<T>,
}

/// Solve the two triangular center equations with `d_omega` divisors:
/// `d_omega W2 = p2` fixes `Lambda`, then `d_omega W1 = p1 - S W2` with
/// `avg(W2)` chosen to remove the average and `avg(W1) = 0`.
pub fn direct_center_solve<T: Real, F: FlowFamily<T> + ?Sized>(
    k: &Embedding<T>,
    lambda: &[T],
    family: &F,
    omega: &[f64],
    divisor: &SmallDivisorConfig,
    cond_max: f64,
) -> Result<DirectCenterStep<T>> {
    let dc = direct_center_residual(k, lambda, family, omega, cond_max)?;
    let x = family.field();
    let grid = k.grid().clone();
    let l = k.torus_dim();
    let pts = k.points();
    let frames = Frames::build(&pts, k.jacobian()?, &FieldGeometry(x))?;
    let gram = gram_inverse(&frames)?;
    // p = Ginv M~^T J (Y Lambda - R)
    let h = MatrixField::from_index_fn(&grid, |i| &(gram.inverse.at(i) * &frames.mtilde.at(i).transpose()) * frames.j.at(i))?;
    let r = MatrixField::from_fourier(&dc.residual, k.dim(), 1)?;
    let ys = MatrixField::from_index_fn(&grid, |i| family.deformation(&pts[i]))?;
    let p0 = MatrixField::from_index_fn(&grid, |i| (h.at(i) * r.at(i)).scale(-T::one()))?;
    let q = MatrixField::from_index_fn(&grid, |i| h.at(i) * ys.at(i))?;
    let q2 = q.average().block(l, 0, l, q.shape().1);
    let p02 = p0.average().block(l, 0, l, 1);
    if q2.rows() != q2.cols() {
        return Err(WhiskerError::Shape("family size differs from torus dimension".into()));
    }
    let cond = q2.condition().to_f64_();
    let q2_inv = q2.inverse().map_err(|_| WhiskerError::CohomologyDegenerate { cond })?;
    let lam = (&q2_inv * &p02).scale(-T::one());
    let p = MatrixField::from_index_fn(&grid, |i| p0.at(i) + &(q.at(i) * &lam))?;
    let pf = p.to_fourier()?;
    let p1 = FourierMap::stack(&(0..l).map(|c| pf.component(c)).collect::<Vec<_>>())?;
    let p2 = FourierMap::stack(&(l..2 * l).map(|c| pf.component(c)).collect::<Vec<_>>())?;
    let w2_perp = solve_flow(&p2, omega, divisor)?;
    let s = &dc.twist;
    let sw = average_points(&s.field.apply(&w2_perp.to_points()));
    let rhs: Vec<T> = p1.average().iter().zip(&sw).map(|(&a, &b)| a - b).collect();
    let s_inv = s.avg.inverse().map_err(|_| WhiskerError::TwistDegenerate { which: "S", cond: s.cond.to_f64_() })?;
    let c2 = s_inv.matvec(&rhs);
    let mut w2 = w2_perp;
    let n = grid.len();
    for (c, v) in c2.iter().enumerate() {
        w2.coeffs_mut()[c * n].re += *v;
    }
    let sw2 = s.field.apply(&w2.to_points());
    let rhs1: Vec<Vec<T>> =
        p1.to_points().iter().zip(&sw2).map(|(a, b)| a.iter().zip(b).map(|(&u, &v)| u - v).collect()).collect();
    let w1 = solve_flow(&FourierMap::from_points(&grid, l, &rhs1)?, omega, divisor)?;
    let w = FourierMap::stack(&[w1, w2])?;
    let delta = frames.mtilde.mul(&MatrixField::from_fourier(&w, 2 * l, 1)?)?;
    Ok(DirectCenterStep { w, lambda: lam.column(0), delta })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cohomology::golden_mean;
    use crate::fourier::Grid;
    use crate::geometry::symplecticity_defect;
    use crate::models::{ModelB, ModelBFamily};

    /// `H = w y + lam u v`, integrated by Runge-Kutta since no splitting is declared.
    struct Linear {
        w: f64,
        lam: f64,
    }

    impl VectorField<f64> for Linear {
        fn dim(&self) -> usize {
            4
        }
        fn angles(&self) -> Vec<usize> {
            vec![0]
        }
        fn field(&self, z: &[f64]) -> Vec<f64> {
            vec![self.w, 0.0, self.lam * z[2], -self.lam * z[3]]
        }
        fn field_jacobian(&self, _z: &[f64]) -> Matrix<f64> {
            Matrix::diag(&[0.0, 0.0, self.lam, -self.lam])
        }
    }

    const Z: [f64; 4] = [0.3, 0.62, 0.1, -0.2];

    #[test]
    fn linear_field_matches_its_exact_flow() {
        let x = Linear { w: golden_mean(), lam: 0.7 };
        let (z1, d) = flow_to(&x, &Integrator::default(), 1.0, &Z).unwrap();
        let e = 0.7f64.exp();
        let exact = [Z[0] + golden_mean(), Z[1], e * Z[2], Z[3] / e];
        for (a, b) in z1.iter().zip(exact) {
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
        assert!((d[(2, 2)] - e).abs() < 1e-9 && (d[(3, 3)] - 1.0 / e).abs() < 1e-9);
        assert!((d[(0, 0)] - 1.0).abs() < 1e-15);
    }

    fn endpoint(scheme: Scheme, step: f64) -> Vec<f64> {
        let b = ModelB::new(0.05, 0.5);
        flow_to(&b, &Integrator { scheme, step }, 1.0, &Z).unwrap().0
    }

    fn dist(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).fold(0.0, |m, (p, q)| m.max((p - q).abs()))
    }

    #[test]
    fn compositions_reach_their_order() {
        let reference = endpoint(Scheme::Yoshida6, 1.0 / 512.0);
        for (scheme, h) in [(Scheme::Strang, 1.0 / 16.0), (Scheme::Yoshida4, 1.0 / 8.0), (Scheme::Yoshida6, 1.0 / 4.0)] {
            let e1 = dist(&endpoint(scheme, h), &reference);
            let e2 = dist(&endpoint(scheme, h / 2.0), &reference);
            let observed = (e1 / e2).log2();
            let p = scheme.order() as f64;
            assert!((observed - p).abs() < 0.5, "{scheme:?}: observed order {observed}");
        }
    }

    #[test]
    fn splitting_steps_are_symplectic() {
        for h in [0.5, 0.125] {
            let map = ModelB::new(0.1, 0.5).time1(Integrator { scheme: Scheme::Strang, step: h });
            let defect = symplecticity_defect(&map, &Z).unwrap();
            assert!(defect < 10.0 * h * h && defect < 1e-12, "h = {h}: {defect:e}");
        }
    }

    #[test]
    fn leaving_the_domain_stops_the_integration() {
        let b = ModelB::new(0.0, 0.5);
        let far = [0.0, b.y0(), 0.4, 0.0];
        let err = flow_to(&b, &Integrator::default(), 1.0, &far).unwrap_err();
        assert!(matches!(err, WhiskerError::Integration(_)));
    }

    #[test]
    fn direct_residual_vanishes_on_the_unperturbed_torus() {
        let g = Grid::new(&[32]).unwrap();
        let b = ModelB::new(0.0, 0.5);
        let k = b.seed::<f64>(&g).unwrap();
        let fam = ModelBFamily { model: b.clone(), strength: 1.0 };
        let dc = direct_center_residual(&k, &[0.0], &fam, &[b.omega0], 1e8).unwrap();
        assert!(dc.residual_norm < 1e-15);
        assert!(dc.spanning_cond.is_finite());
        assert!((dc.twist.avg[(0, 0)].abs() - 1.0).abs() < 1e-12, "{:?}", dc.twist.avg);
        let defects = flow_defects(&b, &k, &[b.omega0], &Integrator::default(), &[0.5, 1.0]).unwrap();
        assert!(defects.values().all(|&d| d < 1e-13), "{defects:?}");
        assert!(energy_spread(&b, &k).unwrap() < 1e-15);
    }

    #[test]
    fn vanishing_deformation_is_degenerate() {
        let g = Grid::new(&[16]).unwrap();
        let b = ModelB::new(0.01, 0.5);
        let k = b.seed::<f64>(&g).unwrap();
        let fam = ModelBFamily { model: b.clone(), strength: 0.0 };
        let err = direct_center_residual(&k, &[0.0], &fam, &[b.omega0], 1e8).unwrap_err();
        assert!(matches!(err, WhiskerError::CohomologyDegenerate { .. }), "{err}");
    }

    #[test]
    fn perturbed_flow_torus_is_flow_invariant() {
        let g = Grid::new(&[32]).unwrap();
        let b = ModelB::new(0.005, 0.7);
        let k0 = b.seed::<f64>(&g).unwrap();
        let map = b.time1(Integrator { scheme: Scheme::Yoshida6, step: 1.0 / 32.0 });
        let cfg = FlowConfig { integrator: map.integrator, ..FlowConfig::default() };
        let out = solve_flow_torus(&map, k0, &Frequency::flow(&[golden_mean()]), &NewtonConfig::default(), &cfg).unwrap();
        assert!(out.solution.converged);
        assert!(!out.flagged, "{:?}", out.defects);
        assert!(out.energy_spread.unwrap() < 1e-9, "{:?}", out.energy_spread);
        assert!(out.solution.report.last().unwrap().flow_defect_t.is_some());
    }
}
