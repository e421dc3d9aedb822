//! Flow tori through the time-1 reduction.

use std::f64::consts::LN_2;

use whisker_core::cohomology::{golden_mean, Frequency};
use whisker_core::flow::{solve_flow_torus, FlowConfig, Integrator, Scheme};
use whisker_core::fourier::Grid;
use whisker_core::models::ModelB;
use whisker_core::newton::NewtonConfig;

fn setup() -> (Grid, ModelB, FlowConfig) {
    let g = Grid::new(&[32]).unwrap();
    let b = ModelB::new(0.02, LN_2);
    let cfg = FlowConfig {
        integrator: Integrator { scheme: Scheme::Yoshida6, step: 1.0 / 32.0 },
        ..FlowConfig::default()
    };
    (g, b, cfg)
}

/// A frequency away from the seed's mean action is not a fixed point of the
/// iteration: the twist carries the torus to the action level of the new
/// frequency, or the run stops with a report.
#[test]
fn mismatched_frequency_moves_the_torus_or_is_reported() {
    let (g, b, cfg) = setup();
    let map = b.clone().time1(cfg.integrator);
    let k0 = b.seed::<f64>(&g).unwrap();
    let y_seed = k0.periodic.average()[1];
    for w in [2f64.sqrt() - 1.0, golden_mean() + 0.05] {
        assert!((y_seed - w).abs() > 0.04);
        match solve_flow_torus(&map, k0.clone(), &Frequency::flow(&[w]), &NewtonConfig::default(), &cfg) {
            Ok(s) => {
                let y = s.solution.k.periodic.average()[1];
                assert!((y - w).abs() < 1e-2, "omega {w}: mean action {y}");
                assert!(s.solution.report.len() > 2);
            }
            Err(f) => {
                assert!(!f.partial.converged);
                assert!(!f.partial.report.is_empty());
            }
        }
    }
}

#[test]
fn flow_torus_records_its_defects() {
    let (g, b, cfg) = setup();
    let map = b.clone().time1(cfg.integrator);
    let out = solve_flow_torus(&map, b.seed::<f64>(&g).unwrap(), &Frequency::flow(&[golden_mean()]), &NewtonConfig::default(), &cfg)
        .unwrap();
    assert_eq!(out.defects.len(), 4);
    assert!(!out.flagged, "{:?}", out.defects);
    let last = out.solution.report.last().unwrap();
    let t = last.flow_defect_t.as_ref().unwrap();
    assert!(t.values().all(|d| *d < 1e-8), "{t:?}");
}
