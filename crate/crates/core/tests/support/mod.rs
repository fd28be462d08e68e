//! Scenario builders shared by the integration tests.
#![allow(dead_code)]

pub mod oracle;

use phenolag::rng::derive_seed;
use phenolag::{Family, FixationModel, MutationMeasure, Scenario, SpeedModel, TruncationPolicy};

/// Exponential effects of mean one proposed at rate `m`, so the limit jump speed is `m`.
pub fn exponential(m: f64) -> MutationMeasure {
    MutationMeasure::positive(Family::Exponential {
        rate_scale: m,
        mean_effect: 1.0,
    })
    .unwrap()
}

pub fn scenario(
    measure: MutationMeasure,
    model: FixationModel,
    speed: SpeedModel,
    x0: f64,
    horizon: f64,
    grid_step: f64,
) -> Scenario {
    Scenario::new(
        measure,
        TruncationPolicy::none(),
        model,
        speed,
        x0,
        horizon,
        grid_step,
    )
    .unwrap()
}

pub fn kimura() -> FixationModel {
    FixationModel::kimura(1.0).unwrap()
}

pub fn seeds(master: u64, n: usize) -> Vec<u64> {
    (0..n as u64).map(|i| derive_seed(master, i)).collect()
}
