//! Small-divisor equations `v(theta + omega) - v(theta) = h` and
//! `d_omega v = h`, and Diophantine certificates over a finite mode range.

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{Result, WhiskerError};
use crate::fourier::FourierMap;
use crate::scalar::{exact_dot, frac_dot, Real};

/// Whether the frequency rotates a map or drives a flow.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FrequencyKind {
    Map,
    Flow,
}

/// Rotation vector in torus cycles.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Frequency {
    pub omega: Vec<f64>,
    pub kind: FrequencyKind,
}

impl Frequency {
    pub fn map(omega: &[f64]) -> Self {
        Self { omega: omega.to_vec(), kind: FrequencyKind::Map }
    }

    pub fn flow(omega: &[f64]) -> Self {
        Self { omega: omega.to_vec(), kind: FrequencyKind::Flow }
    }

    /// Components reduced to `[0, 1)`.
    pub fn reduced(&self) -> Vec<f64> {
        self.omega.iter().map(|w| w.rem_euclid(1.0)).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.omega.iter().all(|w| w.is_finite())
    }
}

/// Inverse golden mean `(sqrt 5 - 1) / 2`.
pub fn golden_mean() -> f64 {
    (5f64.sqrt() - 1.0) / 2.0
}

/// Smallest `kappa` with `dist(k)^-1 <= kappa |k|_1^nu` for `0 < |k|_1 <= k_max`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiophantineCertificate {
    pub kappa: f64,
    pub nu: f64,
    pub k_max: usize,
    pub worst_k: Vec<i64>,
    pub kind: FrequencyKind,
}

/// Every `k` with `0 < |k|_1 <= k_max`, one representative per `+-k` pair.
fn half_lattice(l: usize, k_max: usize) -> Vec<Vec<i64>> {
    fn rec(prefix: &mut Vec<i64>, remaining: usize, budget: i64, out: &mut Vec<Vec<i64>>) {
        if remaining == 0 {
            out.push(prefix.clone());
            return;
        }
        for v in -budget..=budget {
            prefix.push(v);
            rec(prefix, remaining - 1, budget - v.abs(), out);
            prefix.pop();
        }
    }
    let mut all = Vec::new();
    rec(&mut Vec::new(), l, k_max as i64, &mut all);
    all.into_iter()
        .filter(|k| {
            // first non-zero entry positive
            k.iter().find(|&&x| x != 0).is_some_and(|&x| x > 0)
        })
        .collect()
}

fn resonance_tol(k: &[i64], omega: &[f64]) -> f64 {
    let scale: f64 = k.iter().zip(omega).map(|(&a, &b)| (a as f64 * b).abs()).sum();
    64.0 * f64::EPSILON * (1.0 + scale)
}

/// Scan the mode box and return the minimal valid `kappa`.
pub fn certify(freq: &Frequency, nu: f64, k_max: usize) -> Result<DiophantineCertificate> {
    if k_max == 0 {
        return Err(WhiskerError::InvalidGrid("k_max must be at least 1".into()));
    }
    if !freq.is_finite() || freq.omega.is_empty() {
        return Err(WhiskerError::Shape("frequency must be a finite non-empty vector".into()));
    }
    let mut kappa = 0.0f64;
    let mut worst = Vec::new();
    for k in half_lattice(freq.omega.len(), k_max) {
        let dist = match freq.kind {
            FrequencyKind::Map => frac_dot(&k, &freq.omega).abs(),
            FrequencyKind::Flow => exact_dot(&k, &freq.omega).abs(),
        };
        if dist <= resonance_tol(&k, &freq.omega) {
            return Err(WhiskerError::Resonance { k, distance: dist });
        }
        let k1: i64 = k.iter().map(|x| x.abs()).sum();
        let c = (k1 as f64).powf(-nu) / dist;
        if c > kappa {
            kappa = c;
            worst = k;
        }
    }
    Ok(DiophantineCertificate { kappa, nu, k_max, worst_k: worst, kind: freq.kind })
}

/// Tolerances separating genuine resonance and non-solvability from roundoff.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SmallDivisorConfig {
    /// Admissible `|avg(h)|`, relative to `max(1, max |h_k|)`.
    pub avg_tol: f64,
    /// Divisors below `floor_scale * kappa * |k|_1^nu` are rejected.
    pub floor_scale: f64,
    pub kappa: f64,
    pub nu: f64,
}

impl Default for SmallDivisorConfig {
    fn default() -> Self {
        Self { avg_tol: 1e-10, floor_scale: 1e-14, kappa: 1.0, nu: 0.0 }
    }
}

impl SmallDivisorConfig {
    /// Use the constants of a certificate for the divisor floor.
    pub fn from_certificate(cert: &DiophantineCertificate) -> Self {
        Self { kappa: cert.kappa, nu: cert.nu, ..Self::default() }
    }

    fn floor(&self, k: &[i64]) -> f64 {
        let k1: i64 = k.iter().map(|x| x.abs()).sum();
        self.floor_scale * self.kappa * (k1 as f64).powf(self.nu)
    }
}

fn check_average<T: Real>(h: &FourierMap<T>, cfg: &SmallDivisorConfig) -> Result<()> {
    let scale = h.max_coeff().to_f64_().max(1.0);
    for a in h.average() {
        let a = a.to_f64_();
        if a.abs() > cfg.avg_tol * scale {
            return Err(WhiskerError::NonZeroAverage { average: a, tol: cfg.avg_tol * scale });
        }
    }
    Ok(())
}

fn solve_with<T: Real>(
    h: &FourierMap<T>,
    omega: &[f64],
    cfg: &SmallDivisorConfig,
    divisor: impl Fn(&[i64]) -> (f64, f64),
) -> Result<FourierMap<T>> {
    if omega.len() != h.grid().dim() {
        return Err(WhiskerError::Shape("frequency length differs from torus dimension".into()));
    }
    check_average(h, cfg)?;
    let grid = h.grid().clone();
    let n = grid.len();
    let m = h.m();
    let mut v = FourierMap::zeros(&grid, m);
    let zero = Complex::new(T::zero(), T::zero());
    for j in 0..n {
        let k = grid.wavenumber(j);
        if k.iter().all(|&x| x == 0) || grid.is_nyquist(j) {
            continue;
        }
        if (0..m).all(|c| h.coeffs()[c * n + j] == zero) {
            continue;
        }
        let (re, im) = divisor(&k);
        let mag = re.hypot(im);
        let floor = cfg.floor(&k);
        if mag == 0.0 {
            return Err(WhiskerError::Resonance { k, distance: 0.0 });
        }
        if mag < floor {
            return Err(WhiskerError::NearResonance { k, divisor: mag, floor });
        }
        let d = Complex::new(T::lit(re), T::lit(im));
        for c in 0..m {
            v.coeffs_mut()[c * n + j] = h.coeffs()[c * n + j] / d;
        }
    }
    Ok(v)
}

/// Zero-average `v` with `v(theta + omega) - v(theta) = h(theta)`.
pub fn solve_map<T: Real>(h: &FourierMap<T>, omega: &[f64], cfg: &SmallDivisorConfig) -> Result<FourierMap<T>> {
    solve_with(h, omega, cfg, |k| {
        // exp(2 pi i r) - 1 = -2 sin^2(pi r) + i sin(2 pi r)
        let r = frac_dot(k, omega);
        let s = (std::f64::consts::PI * r).sin();
        (-2.0 * s * s, (std::f64::consts::TAU * r).sin())
    })
}

/// Zero-average `v` with `d_omega v = h`.
pub fn solve_flow<T: Real>(h: &FourierMap<T>, omega: &[f64], cfg: &SmallDivisorConfig) -> Result<FourierMap<T>> {
    solve_with(h, omega, cfg, |k| (0.0, std::f64::consts::TAU * exact_dot(k, omega)))
}

/// Grid sup of `v(theta + omega) - v(theta) - h(theta)`.
pub fn map_residual<T: Real>(v: &FourierMap<T>, h: &FourierMap<T>, omega: &[f64]) -> Result<T> {
    Ok(v.shift(omega).sub(v)?.sub(h)?.sup_grid())
}

/// Grid sup of `d_omega v - h`.
pub fn flow_residual<T: Real>(v: &FourierMap<T>, h: &FourierMap<T>, omega: &[f64]) -> Result<T> {
    Ok(v.directional(omega).sub(h)?.sup_grid())
}

/// Observed constant `C` in `|v|_{rho - sigma} <= C kappa sigma^-nu |h|_rho`.
pub fn observed_constant<T: Real>(
    v: &FourierMap<T>,
    h: &FourierMap<T>,
    rho: T,
    sigma: T,
    cert: &DiophantineCertificate,
) -> T {
    let hn = h.l1_norm(rho);
    if hn == T::zero() {
        return T::zero();
    }
    let vn = v.l1_norm(rho - sigma);
    vn / (T::lit(cert.kappa) * sigma.powf(-T::lit(cert.nu)) * hn)
}
