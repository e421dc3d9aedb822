//! Acceptance criteria A1-A12. Each criterion prints one PASS/FAIL line to
//! stderr (uncaptured), then the test asserts that every line passed.
//! Properties the solver is known not to reach are separate tests below.

use std::f64::consts::{LN_2, TAU};
use std::io::Write;
use std::sync::OnceLock;
use std::time::Instant;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use whisker_core::bundles::{graph_transform, seed_bases, solve_stable, BundleConfig};
use whisker_core::cohomology::{certify, golden_mean, solve_flow, solve_map, Frequency, SmallDivisorConfig};
use whisker_core::flow::{solve_flow_torus, FlowConfig, Integrator, Scheme};
use whisker_core::fourier::{write_coefficients, FourierMap, Grid, MatrixField};
use whisker_core::linalg::{subspace_distance, Matrix};
use whisker_core::models::{ModelA, ModelB, ModelT};
use whisker_core::newton::{
    continue_family, linearize, newton_step, phase_lock, solve, NewtonConfig, Predictor, SolveFailure, TorusSolution,
};
use whisker_core::verify::reducibility;
use whisker_core::WhiskerError;

type Run = Result<TorusSolution<f64>, SolveFailure<f64>>;

const N_MAP: usize = 128;
/// Coupling named by the quadratic-convergence criterion.
const EPS_A2: f64 = 0.05;
/// Smaller coupling at which the same checks are also reported.
const EPS_SMALL: f64 = 0.01;

fn model_a(eps: f64) -> ModelA {
    ModelA::new(eps, LN_2)
}

fn run_a(eps: f64, shift: f64) -> Run {
    let g = Grid::new(&[N_MAP]).unwrap();
    let a = model_a(eps);
    let k0 = a.seed::<f64>(&g).unwrap().compose_shift(&[shift]);
    let seed = TorusSolution::seed(k0, Frequency::map(&[golden_mean()]), &a).unwrap();
    solve(seed, &a, &NewtonConfig::default())
}

fn a2_run() -> &'static Run {
    static R: OnceLock<Run> = OnceLock::new();
    R.get_or_init(|| run_a(EPS_A2, 0.0))
}

fn small_run() -> &'static Run {
    static R: OnceLock<Run> = OnceLock::new();
    R.get_or_init(|| run_a(EPS_SMALL, 0.0))
}

/// The torus carried by a run, converged or not.
fn torus(r: &Run) -> &TorusSolution<f64> {
    match r {
        Ok(s) => s,
        Err(f) => &f.partial,
    }
}

fn why(r: &Run) -> String {
    match r {
        Ok(_) => String::new(),
        Err(f) => format!("run failed: {}", f.error),
    }
}

struct Line {
    id: &'static str,
    pass: bool,
    detail: String,
}

fn line(id: &'static str, pass: bool, detail: impl Into<String>) -> Line {
    Line { id, pass, detail: detail.into() }
}

fn emit(l: &Line) {
    let tag = if l.pass { "PASS" } else { "FAIL" };
    let mut err = std::io::stderr().lock();
    let _ = writeln!(err, "{} {tag} {}", l.id, l.detail);
}

fn note(text: String) {
    let _ = writeln!(std::io::stderr().lock(), "    {text}");
}

fn residuals(sol: &TorusSolution<f64>) -> Vec<f64> {
    sol.report.iter().map(|r| r.residual).collect()
}

fn quadratic(sol: &TorusSolution<f64>) -> (bool, String) {
    let res = residuals(sol);
    let steps = res.len().saturating_sub(1);
    let lr: Vec<f64> = res.windows(2).map(|w| w[1].ln() / w[0].ln()).collect();
    let two = lr.windows(2).any(|w| w[0] >= 1.7 && w[1] >= 1.7);
    let ok = sol.converged && sol.residual < 1e-10 && steps <= 10 && two;
    (ok, format!("steps {steps}, final residual {:.2e}, log ratios {lr:.2?}", sol.residual))
}

// ---- A1 ------------------------------------------------------------------

fn a1() -> Line {
    let g = Grid::new(&[64]).unwrap();
    let t = ModelT::new(2.0, golden_mean());
    let seed = TorusSolution::seed(t.exact_torus::<f64>(&g).unwrap(), Frequency::map(&[golden_mean()]), &t).unwrap();
    let cfg = NewtonConfig::default();
    let (after, step) = match newton_step(&seed, &t, &cfg) {
        Ok(x) => x,
        Err(e) => return line("A1", false, format!("step failed: {e}")),
    };
    let solved = solve(seed, &t, &cfg);
    let steps = solved.as_ref().map(|s| s.report.len() - 1).unwrap_or(usize::MAX);
    let pass = step.residual_after < 1e-12 && step.delta_norm < 1e-12 && after.residual < 1e-12 && steps <= 1;
    line(
        "A1",
        pass,
        format!("residual {:.2e}, |Delta| {:.2e}, Newton steps {steps}", step.residual_after, step.delta_norm),
    )
}

// ---- A2-A6 ---------------------------------------------------------------

fn a2() -> Line {
    let r = a2_run();
    let sol = torus(r);
    let (ok, detail) = quadratic(sol);
    line("A2", ok && r.is_ok(), format!("eps {EPS_A2}: {detail} {}", why(r)))
}

fn a3(r: &Run, eps: f64) -> Line {
    let sol = torus(r);
    let pass = r.is_ok() && sol.lambda_norm() < 1e-9;
    line("A3", pass, format!("eps {eps}: |lambda| {:.2e} {}", sol.lambda_norm(), why(r)))
}

fn a4(r: &Run, eps: f64) -> Line {
    let sol = torus(r);
    if r.is_err() {
        return line("A4", false, format!("eps {eps}: {}", why(r)));
    }
    let lin = match linearize(sol, &model_a(eps), None, &NewtonConfig::default()) {
        Ok(l) => l,
        Err(e) => return line("A4", false, format!("eps {eps}: linearization failed: {e}")),
    };
    let red = reducibility(&lin, &sol.omega.omega).unwrap();
    let pass = lin.isotropy < 1e-9 && red.center_frame < 1e-8;
    line(
        "A4",
        pass,
        format!(
            "eps {eps}: isotropy {:.2e}, reducibility {:.2e} (unprojected frame {:.2e})",
            lin.isotropy, red.center_frame, red.frame
        ),
    )
}

fn a5(r: &Run, eps: f64) -> Line {
    let sol = torus(r);
    if r.is_err() {
        return line("A5", false, format!("eps {eps}: {}", why(r)));
    }
    let lin = match linearize(sol, &model_a(eps), None, &NewtonConfig::default()) {
        Ok(l) => l,
        Err(e) => return line("A5", false, format!("eps {eps}: linearization failed: {e}")),
    };
    let rank = lin.splitting.ranks().map(|r| r.1);
    let q = &lin.rates;
    let rates_ok = q.mu1 < 0.6 && q.mu2 < 0.6 && q.mu1 * q.mu3 < 1.0 && q.mu2 * q.mu3 < 1.0;
    let pass = lin.split_residual < 1e-9 && rank == Some(2) && rates_ok;
    line(
        "A5",
        pass,
        format!(
            "eps {eps}: invariance {:.2e}, center rank {rank:?}, mu = ({:.3}, {:.3}, {:.3})",
            lin.split_residual, q.mu1, q.mu2, q.mu3
        ),
    )
}

fn a6(r: &Run, eps: f64) -> Line {
    let other = run_a(eps, 0.3);
    match (r, &other) {
        (Ok(a), Ok(b)) => match phase_lock(&a.k, &b.k, &a.omega, &b.omega, 1e-8) {
            Ok(l) => line("A6", l.mismatch < 1e-8, format!("eps {eps}: tau {:.6}, mismatch {:.2e}", l.tau[0], l.mismatch)),
            Err(e) => line("A6", false, format!("eps {eps}: {e}")),
        },
        _ => line("A6", false, format!("eps {eps}: {} {}", why(r), why(&other))),
    }
}

// ---- A7 ------------------------------------------------------------------

/// Direct summation of the Fourier series and its `theta`-derivative.
fn eval_with_derivative(f: &FourierMap<f64>, theta: f64) -> (f64, f64) {
    let g = f.grid();
    let (mut v, mut dv) = (0.0, 0.0);
    for (j, c) in f.coeffs().iter().enumerate().take(g.len()) {
        let k = g.wavenumber(j)[0] as f64;
        let (s, co) = (TAU * k * theta).sin_cos();
        v += c.re * co - c.im * s;
        dv += TAU * k * (-c.re * s - c.im * co);
    }
    (v, dv)
}

fn random_band_limited(rng: &mut ChaCha8Rng, grid: &Grid, modes: usize, mean: f64) -> FourierMap<f64> {
    let ab: Vec<(f64, f64)> = (0..modes).map(|_| (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect();
    FourierMap::from_fn(grid, 1, |t| {
        let mut s = mean;
        for (k, (a, b)) in ab.iter().enumerate() {
            let x = TAU * (k + 1) as f64 * t[0];
            s += a * x.cos() + b * x.sin();
        }
        vec![s]
    })
    .unwrap()
}

fn a7() -> Line {
    let g = Grid::new(&[64]).unwrap();
    let w = golden_mean();
    let cfg = SmallDivisorConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (mut worst_map, mut worst_flow) = (0.0f64, 0.0f64);
    let mut rejected = true;
    for _ in 0..20 {
        let h = random_band_limited(&mut rng, &g, 20, 0.0);
        let vm = solve_map(&h, &[w], &cfg).unwrap();
        let vf = solve_flow(&h, &[w], &cfg).unwrap();
        for _ in 0..50 {
            let t: f64 = rng.random_range(0.0..1.0);
            let (hv, _) = eval_with_derivative(&h, t);
            let (a, _) = eval_with_derivative(&vm, t + w);
            let (b, _) = eval_with_derivative(&vm, t);
            worst_map = worst_map.max((a - b - hv).abs());
            let (_, d) = eval_with_derivative(&vf, t);
            worst_flow = worst_flow.max((w * d - hv).abs());
        }
        let biased = random_band_limited(&mut rng, &g, 20, 1e-3);
        rejected &= matches!(solve_map(&biased, &[w], &cfg), Err(WhiskerError::NonZeroAverage { .. }));
        rejected &= matches!(solve_flow(&biased, &[w], &cfg), Err(WhiskerError::NonZeroAverage { .. }));
    }
    let pass = worst_map < 1e-12 && worst_flow < 1e-12 && rejected;
    line("A7", pass, format!("map {worst_map:.2e}, flow {worst_flow:.2e}, non-zero averages rejected: {rejected}"))
}

// ---- A8 ------------------------------------------------------------------

/// Grid matrix of `f -> f(. - omega)` on trigonometric polynomials with
/// `|k| < n/2`, summed from its Fourier definition.
fn dense_shift(n: usize, omega: f64) -> DMatrix<f64> {
    DMatrix::from_fn(n, n, |i, j| {
        let d = (i as f64 - j as f64) / n as f64 - omega;
        let mut s = 1.0;
        for k in 1..n / 2 {
            s += 2.0 * (TAU * k as f64 * d).cos();
        }
        s / n as f64
    })
}

fn scalar_field(g: &Grid, f: impl Fn(f64) -> f64 + Sync) -> MatrixField<f64> {
    MatrixField::from_index_fn(g, |i| Matrix::from_row_slice(1, 1, &[f(g.theta(i)[0])])).unwrap()
}

fn a8() -> Line {
    let n = 256;
    let g = Grid::new(&[n]).unwrap();
    let w = golden_mean();
    let bc = BundleConfig::default();
    let coef = |t: f64| 0.5 + 0.2 * (TAU * t).cos();
    let c = scalar_field(&g, coef);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let e_map = random_band_limited(&mut rng, &g, 30, 0.4);
    let e_vals = e_map.to_grid();
    let e = MatrixField::from_index_fn(&g, |i| Matrix::from_row_slice(1, 1, &[e_vals[i]])).unwrap();
    let d = solve_stable(&c, None, &e, &[w], (0.7, 1.0), &bc).unwrap();

    // (I - S diag(c)) D = E
    let s = dense_shift(n, w);
    let diag = DMatrix::from_diagonal(&nalgebra::DVector::from_fn(n, |i, _| coef(g.theta(i)[0])));
    let a = DMatrix::identity(n, n) - &s * diag;
    let rhs = nalgebra::DVector::from_column_slice(&e_vals);
    let oracle = a.lu().solve(&rhs).unwrap();
    let diff = (0..n).map(|i| (d.at(i)[(0, 0)] - oracle[i]).abs()).fold(0.0f64, f64::max);

    let mu = 0.5;
    let ec = 1.3;
    let dc = solve_stable(
        &MatrixField::constant(&g, &Matrix::from_row_slice(1, 1, &[mu])),
        None,
        &MatrixField::constant(&g, &Matrix::from_row_slice(1, 1, &[ec])),
        &[w],
        (mu, 1.0),
        &bc,
    )
    .unwrap();
    let exact = ec / (1.0 - mu);
    let cdiff = dc.values().iter().map(|m| (m[(0, 0)] - exact).abs()).fold(0.0f64, f64::max);
    let pass = diff < 1e-11 && cdiff <= 8.0 * f64::EPSILON * exact;
    line("A8", pass, format!("{n} modes: oracle difference {diff:.2e}; constant case {cdiff:.2e}"))
}

// ---- A9 ------------------------------------------------------------------

fn a9() -> Line {
    let g = Grid::new(&[N_MAP]).unwrap();
    let omegas: Vec<f64> = (-2..=2).map(|j| golden_mean() + j as f64 * 1e-3).collect();
    for &w in &omegas {
        if let Err(e) = certify(&Frequency::map(&[w]), 1.0, 100) {
            return line("A9", false, format!("omega {w} not certified: {e}"));
        }
    }
    let base = model_a(EPS_SMALL);
    let k0 = ModelA { omega0: omegas[0], ..base.clone() }.seed::<f64>(&g).unwrap();
    let out = continue_family(
        &k0,
        &omegas,
        |w| Ok((ModelA { omega0: w, ..base.clone() }, Frequency::map(&[w]))),
        Predictor::Trivial,
        &NewtonConfig::default(),
    );
    if let Some(f) = &out.failure {
        return line("A9", false, format!("continuation failed: {}", f.error));
    }
    let mut ratios: Vec<f64> = out.steps.iter().filter_map(|s| s.lipschitz).collect();
    let shown = ratios.clone();
    ratios.sort_by(f64::total_cmp);
    let mid = ratios.len() / 2;
    let median = if ratios.len().is_multiple_of(2) { (ratios[mid - 1] + ratios[mid]) / 2.0 } else { ratios[mid] };
    let pass = ratios.len() == 4 && ratios.iter().all(|r| r / median < 5.0 && median / r < 5.0);
    line("A9", pass, format!("eps {EPS_SMALL}: ratios {shown:.4?}, median {median:.4}"))
}

// ---- A10 -----------------------------------------------------------------

fn a10() -> Line {
    let start = Instant::now();
    let g = Grid::new(&[64]).unwrap();
    let b = ModelB::new(0.02, LN_2);
    let k0 = b.seed::<f64>(&g).unwrap();
    let map = b.time1(Integrator { scheme: Scheme::Yoshida6, step: 1.0 / 64.0 });
    let cfg = FlowConfig { integrator: map.integrator, verify_times: vec![0.25, 0.5, 2.0], ..FlowConfig::default() };
    let out = match solve_flow_torus(&map, k0, &Frequency::flow(&[golden_mean()]), &NewtonConfig::default(), &cfg) {
        Ok(o) => o,
        Err(f) => return line("A10", false, format!("solve failed: {}", f.error)),
    };
    let secs = start.elapsed().as_secs_f64();
    let worst = out.defects.values().cloned().fold(0.0f64, f64::max);
    let spread = out.energy_spread.unwrap_or(f64::INFINITY);
    let pass = out.solution.converged && out.defects.len() == 3 && worst < 1e-8 && spread < 1e-8 && secs < 300.0;
    line("A10", pass, format!("defects {:?}, H spread {spread:.2e}, {secs:.1} s", out.defects))
}

// ---- A11 -----------------------------------------------------------------

fn rotation(t: f64) -> Matrix<f64> {
    let (s, c) = (TAU * t).sin_cos();
    Matrix::from_row_slice(2, 2, &[c, -s, s, c])
}

fn a11() -> Line {
    let g = Grid::new(&[32]).unwrap();
    let w = golden_mean();
    let bc = BundleConfig::default();
    let col = |v: [f64; 2]| MatrixField::constant(&g, &Matrix::column_vector(&v));

    let eps = 0.3;
    let c = MatrixField::constant(&g, &Matrix::from_row_slice(2, 2, &[0.5, 0.0, eps, 2.0]));
    let (es, _) = graph_transform(&c, &col([1.0, 0.0]), &col([0.0, 1.0]), &[w], &bc).unwrap();
    let expected = eps / (0.5 - 2.0);
    let slope = es.values().iter().map(|m| (m[(1, 0)] / m[(0, 0)] - expected).abs()).fold(0.0f64, f64::max);

    // C(theta) = R(theta + omega) diag(1/2, 2) R(theta)^-1 has stable bundle R(theta) e1
    let d = Matrix::diag(&[0.5, 2.0]);
    let cc = MatrixField::from_index_fn(&g, |i| {
        let t = g.theta(i)[0];
        &(&rotation(t + w) * &d) * &rotation(t).transpose()
    })
    .unwrap();
    let empty = MatrixField::constant(&g, &Matrix::zeros(2, 0));
    let seed = seed_bases(&cc, &empty, 1, 1, &[w], &bc).unwrap();
    let (s, u) = graph_transform(&cc, &seed.stable, &seed.unstable, &[w], &bc).unwrap();
    let mut angle = 0.0f64;
    for i in 0..g.len() {
        let r = rotation(g.theta(i)[0]);
        angle = angle.max(subspace_distance(s.at(i), &r.columns(0, 1)).unwrap());
        angle = angle.max(subspace_distance(u.at(i), &r.columns(1, 1)).unwrap());
    }
    let pass = slope < 1e-12 && angle < 1e-9;
    line("A11", pass, format!("slope error {slope:.2e}; conjugated bundles principal angle {angle:.2e}"))
}

// ---- A12 -----------------------------------------------------------------

fn artifact(r: &Run) -> Vec<u8> {
    let sol = torus(r);
    let mut buf = Vec::new();
    write_coefficients(&sol.k.periodic, &mut buf).unwrap();
    for rec in &sol.report {
        buf.extend(rec.to_json().bytes());
        buf.push(b'\n');
    }
    buf
}

fn a12(first: &Run, eps: f64) -> Line {
    let again = run_a(eps, 0.0);
    let (a, b) = (artifact(first), artifact(&again));
    line("A12", a == b, format!("eps {eps}: {} bytes, identical: {}", a.len(), a == b))
}

// ---- driver --------------------------------------------------------------

#[test]
fn acceptance() {
    let mut lines = vec![a1(), a2()];
    let r2 = a2_run();
    let rs = small_run();
    let (ok, detail) = quadratic(torus(rs));
    let small_ok = ok && rs.is_ok();
    note(format!("same run at eps {EPS_SMALL}: {} {detail}", if small_ok { "converges" } else { "fails" }));
    for f in [a3 as fn(&Run, f64) -> Line, a4, a5, a6] {
        lines.push(f(r2, EPS_A2));
        let c = f(rs, EPS_SMALL);
        note(format!("at eps {EPS_SMALL}: {} {}", if c.pass { "pass" } else { "fail" }, c.detail));
    }
    lines.extend([a7(), a8(), a9(), a10(), a11()]);
    lines.push(a12(r2, EPS_A2));
    let c = a12(rs, EPS_SMALL);
    note(format!("at eps {EPS_SMALL}: {} {}", if c.pass { "pass" } else { "fail" }, c.detail));

    lines.sort_by_key(|l| l.id[1..].parse::<u32>().unwrap());
    for l in &lines {
        emit(l);
    }
    let failed: Vec<&str> = lines.iter().filter(|l| !l.pass).map(|l| l.id).collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}

// ---- properties the method is expected to show ---------------------------

#[test]
fn first_step_drops_the_residual_hundredfold() {
    let res = residuals(torus(a2_run()));
    assert!(res.len() >= 2, "{res:?}");
    assert!(res[1] <= res[0] / 1e2, "eps {EPS_A2}: {:.3e} -> {:.3e}", res[0], res[1]);
}

#[test]
fn center_distance_decays_with_the_residual() {
    let sol = torus(small_run());
    let pairs: Vec<(f64, f64)> = sol.report.iter().map(|r| (r.residual, r.center_dist)).filter(|p| p.1.is_finite()).collect();
    assert!(pairs.windows(2).all(|w| w[1].1 <= w[0].1), "{pairs:?}");
    let ratios: Vec<f64> = pairs.iter().map(|(e, d)| d / e).collect();
    let (lo, hi) = ratios.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &r| (a.min(r), b.max(r)));
    assert!(hi / lo <= 10.0, "center_dist / residual {ratios:?}");
}

#[test]
fn coupling_continuation_reaches_a2_strength() {
    let g = Grid::new(&[N_MAP]).unwrap();
    let k0 = model_a(0.0).seed::<f64>(&g).unwrap();
    let params: Vec<f64> = (1..=5).map(|j| EPS_A2 * j as f64 / 5.0).collect();
    let out = continue_family(
        &k0,
        &params,
        |eps| Ok((model_a(eps), Frequency::map(&[golden_mean()]))),
        Predictor::Secant,
        &NewtonConfig::default(),
    );
    let reached: Vec<f64> = out.steps.iter().map(|s| s.param).collect();
    assert!(out.failure.is_none(), "reached {reached:?}: {:?}", out.failure.map(|f| f.error));
    assert_eq!(out.steps.len(), 5);
}

#[test]
fn strong_coupling_aborts_on_stagnation() {
    let err = run_a(0.5, 0.0).unwrap_err();
    assert!(!err.partial.report.is_empty());
    assert!(matches!(err.error, WhiskerError::Stagnation { .. }), "{}", err.error);
}
