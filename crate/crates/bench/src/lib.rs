//! Criterion benchmarks for the metric kernel, cloud sampling, AHP and the
//! optimizers. Run with `cargo bench -p fairthresh-bench`.

use fairthresh_core::ahp::weigh;
use fairthresh_core::cohort::generate_cohort;
use fairthresh_core::{AhpRatings, Cohort, DiBounds, Objective, Scales, SyntheticSpec};

pub fn default_cohort() -> Cohort {
    generate_cohort(&SyntheticSpec::default()).expect("default spec is valid")
}

pub fn balanced_objective() -> Objective {
    let ratings = AhpRatings::new(1.0, 2.0, 2.0).expect("on scale");
    Objective::new(weigh(&ratings).weights, Scales::default(), DiBounds::default()).expect("valid objective")
}
