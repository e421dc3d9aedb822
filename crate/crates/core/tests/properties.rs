//! Randomized invariants of the Fourier layer, the cohomological solvers
//! and the model maps.

use proptest::prelude::*;
use proptest::strategy::ValueTree;
use std::f64::consts::TAU;

use whisker_core::cohomology::{golden_mean, solve_flow, solve_map, SmallDivisorConfig};
use whisker_core::flow::Integrator;
use whisker_core::fourier::{FourierMap, Grid};
use whisker_core::geometry::{symplecticity_defect, SymplecticSystem};
use whisker_core::models::{ModelA, ModelB, ModelT, Skew, SkewCocycle};

/// Real trigonometric polynomial `a0 + sum_k (a_k cos + b_k sin)(2 pi k theta)`.
fn band_limited(grid: &Grid, a0: f64, ab: &[(f64, f64)]) -> FourierMap<f64> {
    FourierMap::from_fn(grid, 1, |t| {
        let mut s = a0;
        for (k, (a, b)) in ab.iter().enumerate() {
            let x = TAU * (k + 1) as f64 * t[0];
            s += a * x.cos() + b * x.sin();
        }
        vec![s]
    })
    .unwrap()
}

fn coeffs(max: usize) -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64), 1..max)
}

fn sup_diff(a: &FourierMap<f64>, b: &FourierMap<f64>) -> f64 {
    a.sub(b).unwrap().sup_grid()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn grid_roundtrip(ab in coeffs(31), a0 in -2.0..2.0f64) {
        let g = Grid::new(&[64]).unwrap();
        let f = band_limited(&g, a0, &ab);
        let back = FourierMap::from_grid(&g, 1, &f.to_grid()).unwrap();
        let scale = f.max_coeff().max(1.0);
        for (x, y) in f.coeffs().iter().zip(back.coeffs()) {
            prop_assert!((x - y).norm() <= 1e-13 * scale);
        }
    }

    #[test]
    fn parseval(ab in coeffs(31), a0 in -2.0..2.0f64) {
        let g = Grid::new(&[64]).unwrap();
        let f = band_limited(&g, a0, &ab);
        let mean_sq = f.to_grid().iter().map(|x| x * x).sum::<f64>() / 64.0;
        let modes: f64 = f.coeffs().iter().map(|z| z.norm_sqr()).sum();
        prop_assert!((mean_sq - modes).abs() <= 1e-12 * modes.max(1e-300));
    }

    #[test]
    fn shift_is_a_group_and_an_isometry(ab in coeffs(31), w in -1.0..1.0f64, rho in 0.0..0.05f64) {
        let g = Grid::new(&[64]).unwrap();
        // the Nyquist mode has no partner and is dropped by the shift
        let mut f = band_limited(&g, 0.3, &ab);
        f.drop_nyquist();
        let s = f.shift(&[w]);
        prop_assert!(sup_diff(&s.shift(&[-w]), &f) < 1e-14 * f.max_coeff().max(1.0) * 64.0);
        let (a, b) = (f.l1_norm(rho), s.l1_norm(rho));
        prop_assert!((a - b).abs() <= 1e-13 * a);
    }

    #[test]
    fn derivative_commutes_with_shift(ab in coeffs(31), w in -1.0..1.0f64) {
        let g = Grid::new(&[64]).unwrap();
        let f = band_limited(&g, 0.0, &ab);
        let lhs = f.shift(&[w]).derivative(0);
        let rhs = f.derivative(0).shift(&[w]);
        for (x, y) in lhs.coeffs().iter().zip(rhs.coeffs()) {
            prop_assert!((x - y).norm() <= 1e-12);
        }
        let d = f.directional(&[w]);
        let scaled = f.derivative(0).scale(w);
        prop_assert!(sup_diff(&d, &scaled) < 1e-11);
    }

    #[test]
    fn cohomology_is_linear(
        a in coeffs(20),
        b in coeffs(20),
        (p, q) in (-3.0..3.0f64, -3.0..3.0f64),
    ) {
        let g = Grid::new(&[64]).unwrap();
        let (h1, h2) = (band_limited(&g, 0.0, &a), band_limited(&g, 0.0, &b));
        let cfg = SmallDivisorConfig::default();
        let w = [golden_mean()];
        let mix = h1.scale(p).add(&h2.scale(q)).unwrap();
        for solver in [solve_map::<f64>, solve_flow::<f64>] {
            let lhs = solver(&mix, &w, &cfg).unwrap();
            let rhs = solver(&h1, &w, &cfg).unwrap().scale(p).add(&solver(&h2, &w, &cfg).unwrap().scale(q)).unwrap();
            let scale = lhs.sup_grid().max(1.0);
            prop_assert!(sup_diff(&lhs, &rhs) <= 1e-12 * scale);
            prop_assert!(lhs.average()[0] == 0.0);
        }
    }

    #[test]
    fn nonzero_average_is_always_rejected(ab in coeffs(10), a0 in prop_oneof![-1.0..-1e-6f64, 1e-6..1.0f64]) {
        let g = Grid::new(&[32]).unwrap();
        let h = band_limited(&g, a0, &ab);
        let cfg = SmallDivisorConfig::default();
        prop_assert!(solve_map(&h, &[golden_mean()], &cfg).is_err());
        prop_assert!(solve_flow(&h, &[golden_mean()], &cfg).is_err());
    }
}

/// 200 points from a fixed-seed generator, with hyperbolic coordinates
/// small enough that the time-1 flow stays in the domain.
fn sample_points(dim: usize, y0: f64, seed: u64) -> Vec<Vec<f64>> {
    use proptest::test_runner::{Config, RngAlgorithm, TestRng, TestRunner};
    let mut runner =
        TestRunner::new_with_rng(Config::default(), TestRng::from_seed(RngAlgorithm::ChaCha, &[seed as u8; 32]));
    let strat = prop::collection::vec(-0.45..0.45f64, dim);
    (0..200)
        .map(|_| {
            let mut z = strat.new_tree(&mut runner).unwrap().current();
            z[0] += 0.5;
            if dim == 4 {
                z[1] = y0 + 0.4 * z[1];
                z[2] *= 0.4;
                z[3] *= 0.4;
            }
            z
        })
        .collect()
}

fn worst_defect<S: SymplecticSystem<f64>>(sys: &S, pts: &[Vec<f64>]) -> f64 {
    pts.iter().map(|z| symplecticity_defect(sys, z).unwrap()).fold(0.0, f64::max)
}

#[test]
fn every_model_is_symplectic_on_200_points() {
    let ln2 = std::f64::consts::LN_2;
    let a = ModelA::new(0.05, ln2);
    let t = ModelT::new(2.0, golden_mean());
    let b = ModelB::new(0.05, ln2).time1(Integrator::default());
    let sk = Skew::new(SkewCocycle::Rotated { diag: vec![0.5, 0.25], winding: 1 }, golden_mean());
    let pts4 = sample_points(4, golden_mean(), 7);
    for (name, d) in [("T", worst_defect(&t, &pts4)), ("A", worst_defect(&a, &pts4)), ("B", worst_defect(&b, &pts4))] {
        assert!(d < 1e-10, "model {name}: {d:e}");
    }
    let pts6 = sample_points(6, 0.0, 11);
    let d = worst_defect(&sk, &pts6);
    assert!(d < 1e-10, "skew: {d:e}");
}

#[test]
fn kicked_map_reduces_to_the_product_map() {
    let pts = sample_points(4, golden_mean(), 3);
    let a = ModelA::new(0.0, std::f64::consts::LN_2);
    let t = ModelT::new(2.0, golden_mean());
    for z in &pts {
        let (p, q) = (a.map(z).unwrap(), t.map(z).unwrap());
        for (x, y) in p.iter().zip(&q) {
            assert!((x - y).abs() < 1e-14);
        }
    }
}
