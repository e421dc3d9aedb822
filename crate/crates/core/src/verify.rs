//! A-posteriori checks on a stored torus.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::fourier::MatrixField;
use crate::geometry::{twist_a, Frames, SymplecticSystem};
use crate::linalg::Matrix;
use crate::newton::{linearize, residual, Linearization, NewtonConfig, TorusSolution};
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CheckKind {
    Residual,
    Isotropy,
    Reducibility,
    Splitting,
    Vanishing,
    Shadowing,
}

impl CheckKind {
    pub const ALL: [CheckKind; 6] = [
        CheckKind::Residual,
        CheckKind::Isotropy,
        CheckKind::Reducibility,
        CheckKind::Splitting,
        CheckKind::Vanishing,
        CheckKind::Shadowing,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CheckKind::Residual => "residual",
            CheckKind::Isotropy => "isotropy",
            CheckKind::Reducibility => "reducibility",
            CheckKind::Splitting => "splitting",
            CheckKind::Vanishing => "vanishing",
            CheckKind::Shadowing => "shadowing",
        }
    }
}

/// Which checks to run and their bounds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifyConfig {
    pub checks: Vec<CheckKind>,
    pub residual_tol: f64,
    pub isotropy_tol: f64,
    pub reducibility_tol: f64,
    pub split_tol: f64,
    pub projection_tol: f64,
    pub lambda_tol: f64,
    pub shadow_points: usize,
    pub shadow_iters: usize,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            checks: CheckKind::ALL.to_vec(),
            residual_tol: 1e-10,
            isotropy_tol: 1e-9,
            reducibility_tol: 1e-8,
            split_tol: 1e-9,
            projection_tol: 1e-10,
            lambda_tol: 1e-9,
            shadow_points: 16,
            shadow_iters: 1000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub kind: CheckKind,
    pub value: f64,
    pub bound: f64,
    pub pass: bool,
    pub note: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub checks: Vec<Check>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn get(&self, kind: CheckKind) -> Option<&Check> {
        self.checks.iter().find(|c| c.kind == kind)
    }

    /// Fixed-width pass/fail table.
    pub fn table(&self) -> String {
        let mut s = format!("{:<14} {:>12} {:>12}  {:<6} note\n", "check", "value", "bound", "result");
        for c in &self.checks {
            let _ = writeln!(
                s,
                "{:<14} {:>12.3e} {:>12.3e}  {:<6} {}",
                c.kind.name(),
                c.value,
                c.bound,
                if c.pass { "PASS" } else { "FAIL" },
                c.note
            );
        }
        s
    }
}

/// Reducibility defects `|DF(K) M - M o T_omega S|` with `S = [[I, A], [0, I]]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Reducibility {
    /// In the frame `M~ = [DK, J^-1 DK N]`.
    pub frame: f64,
    /// In the frame `Pi^c M~` used by the solver.
    pub center_frame: f64,
}

fn unit_upper<T: Real>(a: &Matrix<T>) -> Matrix<T> {
    let l = a.rows();
    let mut s = Matrix::identity(2 * l);
    s.set_block(0, l, a);
    s
}

pub fn reducibility<T: Real>(lin: &Linearization<T>, omega: &[f64]) -> Result<Reducibility> {
    let grid = lin.cocycle.grid().clone();
    let raw_a = twist_a(&lin.frames, &lin.shifted, &lin.cocycle)?;
    let raw = MatrixField::from_index_fn(&grid, |i| {
        let lhs = lin.cocycle.at(i) * lin.frames.mtilde.at(i);
        &lhs - &(lin.shifted.mtilde.at(i) * &unit_upper(raw_a.field.at(i)))
    })?
    .sup_abs();
    let pc = &lin.splitting.proj_c;
    let pcs = pc.shift(omega)?;
    let center = MatrixField::from_index_fn(&grid, |i| {
        let here = pc.at(i) * lin.frames.mtilde.at(i);
        let there = pcs.at(i) * lin.shifted.mtilde.at(i);
        &(lin.cocycle.at(i) * &here) - &(&there * &unit_upper(lin.twist_a.field.at(i)))
    })?
    .sup_abs();
    Ok(Reducibility { frame: raw.to_f64_(), center_frame: center.to_f64_() })
}

/// Defects of orbits started on the torus against `K(theta + n omega)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Shadowing {
    /// Worst defect over the starting points after each iterate.
    pub defects: Vec<f64>,
    /// `max_n defect_n / n`.
    pub slope: f64,
}

/// Iterate `F` from `points` grid points of `K`. After every iterate the
/// unstable part of the deviation is removed so that only the neutral and
/// contracting drift is measured.
pub fn shadowing<T: Real, S: SymplecticSystem<T> + ?Sized>(
    sol: &TorusSolution<T>,
    sys: &S,
    proj_u: &MatrixField<T>,
    points: usize,
    iters: usize,
) -> Result<Shadowing> {
    let k = &sol.k;
    let grid = k.grid();
    let n = grid.len();
    let p = points.clamp(1, n);
    let dim = k.dim();
    let pu = proj_u.to_fourier()?;
    let omega = &sol.omega.omega;
    let runs: Result<Vec<Vec<f64>>> = (0..p)
        .into_par_iter()
        .map(|j| {
            let theta0 = grid.theta(j * n / p);
            let mut z = k.eval(&theta0);
            let mut out = Vec::with_capacity(iters);
            for step in 1..=iters {
                z = sys.map(&z)?;
                let th: Vec<f64> = theta0.iter().zip(omega).map(|(a, w)| a + step as f64 * w).collect();
                let target = k.eval(&th);
                let d: Vec<T> = z.iter().zip(&target).map(|(&a, &b)| a - b).collect();
                let proj = Matrix::from_row_slice(dim, dim, &pu.eval(&th));
                let du = proj.matvec(&d);
                let kept: Vec<T> = d.iter().zip(&du).map(|(&a, &b)| a - b).collect();
                out.push(kept.iter().fold(0.0f64, |m, x| m.max(x.to_f64_().abs())));
                z = target.iter().zip(&kept).map(|(&a, &b)| a + b).collect();
            }
            Ok(out)
        })
        .collect();
    let runs = runs?;
    let defects: Vec<f64> = (0..iters).map(|s| runs.iter().fold(0.0f64, |m, r| m.max(r[s]))).collect();
    let slope = defects.iter().enumerate().fold(0.0f64, |m, (s, d)| m.max(d / (s + 1) as f64));
    let slope = if slope.is_nan() { f64::INFINITY } else { slope };
    Ok(Shadowing { defects, slope })
}

fn failed(kind: CheckKind, bound: f64, note: String) -> Check {
    Check { kind, value: f64::INFINITY, bound, pass: false, note }
}

/// Run the selected checks. The shadowing slope is compared with the
/// residual recorded in `sol`, not a recomputed one.
pub fn verify<T: Real, S: SymplecticSystem<T> + ?Sized>(
    sol: &TorusSolution<T>,
    sys: &S,
    newton: &NewtonConfig,
    cfg: &VerifyConfig,
) -> Result<VerifyReport> {
    let omega = &sol.omega.omega;
    let needs_lin = cfg.checks.iter().any(|c| matches!(c, CheckKind::Reducibility | CheckKind::Splitting | CheckKind::Shadowing));
    let lin = if needs_lin { Some(linearize(sol, sys, None, newton)) } else { None };
    let lin_err = |kind: CheckKind, bound: f64| -> Option<Check> {
        match &lin {
            Some(Err(e)) => Some(failed(kind, bound, format!("linearization failed: {e}"))),
            _ => None,
        }
    };
    let mut checks = Vec::new();
    for &kind in &cfg.checks {
        let check = match kind {
            CheckKind::Residual => match residual(sol, sys, newton.dealias) {
                Ok(r) => Check {
                    kind,
                    value: r.norm,
                    bound: cfg.residual_tol,
                    pass: r.norm <= cfg.residual_tol,
                    note: format!("tail {:.1e}", r.tail),
                },
                Err(e) => failed(kind, cfg.residual_tol, e.to_string()),
            },
            CheckKind::Isotropy => match Frames::of(&sol.k, sys) {
                Ok(f) => {
                    let v = f.isotropy_defect().to_f64_();
                    Check { kind, value: v, bound: cfg.isotropy_tol, pass: v <= cfg.isotropy_tol, note: String::new() }
                }
                Err(e) => failed(kind, cfg.isotropy_tol, e.to_string()),
            },
            CheckKind::Reducibility => match lin_err(kind, cfg.reducibility_tol) {
                Some(c) => c,
                None => {
                    let l = lin.as_ref().and_then(|r| r.as_ref().ok()).expect("linearized");
                    match reducibility(l, omega) {
                        Ok(r) => Check {
                            kind,
                            value: r.center_frame,
                            bound: cfg.reducibility_tol,
                            pass: r.center_frame <= cfg.reducibility_tol,
                            note: format!("unprojected frame {:.3e}", r.frame),
                        },
                        Err(e) => failed(kind, cfg.reducibility_tol, e.to_string()),
                    }
                }
            },
            CheckKind::Splitting => match lin_err(kind, cfg.split_tol) {
                Some(c) => c,
                None => {
                    let l = lin.as_ref().and_then(|r| r.as_ref().ok()).expect("linearized");
                    let proj = l.splitting.projection_defect().to_f64_();
                    let rank = l.splitting.ranks().map(|r| r.1);
                    let want = 2 * sol.k.torus_dim();
                    let rates = l.rates.violations();
                    let mut notes = vec![format!(
                        "projection {proj:.1e}, center rank {rank:?}, mu1 {:.3} mu2 {:.3} mu3 {:.3}",
                        l.rates.mu1, l.rates.mu2, l.rates.mu3
                    )];
                    notes.extend(rates.iter().cloned());
                    let v = l.split_residual;
                    Check {
                        kind,
                        value: v,
                        bound: cfg.split_tol,
                        pass: v <= cfg.split_tol && proj <= cfg.projection_tol && rank == Some(want) && rates.is_empty(),
                        note: notes.join("; "),
                    }
                }
            },
            CheckKind::Vanishing => {
                let lam = sol.lambda_norm();
                if sys.exact() {
                    Check { kind, value: lam, bound: cfg.lambda_tol, pass: lam <= cfg.lambda_tol, note: String::new() }
                } else {
                    Check { kind, value: lam, bound: f64::INFINITY, pass: true, note: "system not exact".into() }
                }
            }
            CheckKind::Shadowing => {
                let claimed = if sol.residual.is_finite() { sol.residual } else { f64::INFINITY };
                let bound = 10.0 * claimed + 1e3 * T::epsilon().to_f64_() / 2.0;
                match lin_err(kind, bound) {
                    Some(c) => c,
                    None => {
                        let l = lin.as_ref().and_then(|r| r.as_ref().ok()).expect("linearized");
                        match shadowing(sol, sys, &l.splitting.proj_u, cfg.shadow_points, cfg.shadow_iters) {
                            Ok(s) => Check {
                                kind,
                                value: s.slope,
                                bound,
                                pass: s.slope <= bound,
                                note: format!(
                                    "{} points x {} iterates, final defect {:.1e}",
                                    cfg.shadow_points.min(sol.k.grid().len()),
                                    cfg.shadow_iters,
                                    s.defects.last().copied().unwrap_or(0.0)
                                ),
                            },
                            Err(e) => failed(kind, bound, e.to_string()),
                        }
                    }
                }
            }
        };
        checks.push(check);
    }
    Ok(VerifyReport { checks })
}
