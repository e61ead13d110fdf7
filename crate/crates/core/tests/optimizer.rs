use fairthresh_core::cohort::generate_cohort;
use fairthresh_core::optimizer::{grid_minimize, tpe_minimize};
use fairthresh_core::{CostModel, DiBounds, Objective, Scales, SyntheticSpec, TpeConfig, Weights};

#[test]
fn min_spd_weights_reach_near_parity() {
    let cohort = generate_cohort(&SyntheticSpec::default()).unwrap();
    let costs = CostModel::default();
    let weights = Weights { utility: 0.09, spd: 0.82, waod: 0.09 };
    let objective = Objective::new(weights, Scales::default(), DiBounds::default()).unwrap();
    let tpe = tpe_minimize(&cohort, &costs, &objective, &TpeConfig { seed: 11, ..TpeConfig::default() }).unwrap();
    let grid = grid_minimize(&cohort, &costs, &objective, 0.005).unwrap();
    let (t, g) = (tpe.best.unwrap().point, grid.best.unwrap().point);
    assert!(g.spd.abs() <= 0.02, "grid |spd| {}", g.spd);
    assert!(t.spd.abs() <= 0.02, "tpe |spd| {}", t.spd);
    assert!(t.feasible && g.feasible);
}
