//! Exact simulation and regime analysis of the phenotypic lag of a population
//! chasing a moving optimum.
//!
//! The lag `X_t` drifts away at the speed of the optimum and jumps back when a
//! proposed mutation fixes. Proposals arrive as a Poisson process with
//! intensity `nu` and fix with probability `g(x, a)`; the long-run regime is
//! governed by the mean jump speed `m` against the optimum speed `vbar`.
//!
//! * [`measures`] — mutation intensity families, moments, sampling, truncation.
//! * [`fixation`] — fixation probabilities and the moment functionals `m(x)`, `V(x)`.
//! * [`simulator`] — event-driven exact paths, ensembles and pathwise diagnostics.
//! * [`analysis`] — regime classification and ensemble estimators.

pub mod analysis;
pub mod fixation;
pub mod measures;
pub mod quad;
pub mod rng;
pub mod simulator;

pub use analysis::{classify, ConditionVerdict, RegimeReport, Satisfied, Verdict};
pub use fixation::{FixationKind, FixationModel, FixationProbability, MomentFunctionals};
pub use measures::{Atom, Family, MutationMeasure, PowerTail, SupportSign, TruncationPolicy};
pub use simulator::{
    run_ensemble, simulate, RateProfile, Scenario, SimError, SimOptions, SpeedModel, Trajectory,
};
