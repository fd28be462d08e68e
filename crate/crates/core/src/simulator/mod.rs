//! Exact event-driven simulation of the lag process.
//!
//! Proposals arrive as a Poisson process with rate `nu(|a| >= eps)`; each
//! carries an effect `A` drawn from the normalised measure and a uniform mark
//! `Xi` on `(0, 1]`. The proposal fixes iff `Xi <= g(X_{T-}, A)`. Between
//! arrivals the lag moves deterministically (plus, optionally, a Brownian
//! perturbation sampled at the event and output times and interpolated
//! linearly in between), so no time discretisation of the jump mechanism is
//! involved.
//!
//! Random draws come from two streams keyed by the seed. The jump stream is
//! consumed per proposal as: exponential inter-arrival, effect (see
//! [`MutationMeasure::sample_effect`]), mark. The noise stream supplies one
//! standard normal per noise interval.

pub mod diagnostics;
pub mod speed;
pub mod trajectory;

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::fixation::{FixationModel, FixationProbability};
use crate::measures::{MeasureError, MutationMeasure, TruncationPolicy};
use crate::rng::{exponential, stream, uniform_open_closed, JUMP_STREAM, NOISE_STREAM};

pub use speed::{DriftPiece, RateProfile, SpeedError, SpeedModel};
pub use trajectory::{Event, EventKind, RunStatus, Segment, Trajectory, Transition};

/// Default cap on proposals per trajectory.
pub const DEFAULT_EVENT_CAP: u64 = 100_000_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error(transparent)]
    Measure(#[from] MeasureError),
    #[error(transparent)]
    Speed(#[from] SpeedError),
    #[error("event cap of {cap} proposals exceeded at t = {}", partial.end_time)]
    BudgetExceeded { cap: u64, partial: Box<Trajectory> },
}

/// Everything needed to simulate one path, except the seed.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Scenario {
    pub measure: MutationMeasure,
    pub trunc: TruncationPolicy,
    pub model: FixationModel,
    pub speed: SpeedModel,
    pub x0: f64,
    pub horizon: f64,
    pub grid_step: f64,
}

impl Scenario {
    pub fn new(
        measure: MutationMeasure,
        trunc: TruncationPolicy,
        model: FixationModel,
        speed: SpeedModel,
        x0: f64,
        horizon: f64,
        grid_step: f64,
    ) -> Result<Self, SimError> {
        let sc = Scenario {
            measure,
            trunc,
            model,
            speed,
            x0,
            horizon,
            grid_step,
        };
        sc.validate()?;
        Ok(sc)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.horizon > 0.0) || !self.horizon.is_finite() {
            return Err(SimError::InvalidScenario(format!(
                "horizon must be finite and positive, got {}",
                self.horizon
            )));
        }
        if !(self.grid_step > 0.0) || !self.grid_step.is_finite() {
            return Err(SimError::InvalidScenario(format!(
                "grid step must be finite and positive, got {}",
                self.grid_step
            )));
        }
        if !self.x0.is_finite() {
            return Err(SimError::InvalidScenario(format!(
                "x0 must be finite, got {}",
                self.x0
            )));
        }
        self.speed.validate()?;
        self.measure.total_rate(&self.trunc)?;
        Ok(())
    }

    /// The measure actually simulated (effects below the cutoff removed).
    pub fn simulated_measure(&self) -> MutationMeasure {
        self.measure.restricted(self.trunc.epsilon)
    }

    /// Hex SHA-256 of the scenario's canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("scenario serialises");
        hex::encode(Sha256::digest(&json))
    }

    /// Output grid `0, step, 2 step, ...` up to and including the horizon.
    pub fn grid(&self) -> Vec<f64> {
        let n = (self.horizon / self.grid_step).floor() as u64;
        let mut g: Vec<f64> = (0..=n).map(|k| k as f64 * self.grid_step).collect();
        g.retain(|&t| t <= self.horizon);
        if g.last().is_none_or(|&t| t < self.horizon) {
            g.push(self.horizon);
        }
        g
    }
}

/// Run-time limits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimOptions {
    pub event_cap: u64,
    /// Keep rejected proposals in the event log.
    pub record_rejected: bool,
}

impl Default for SimOptions {
    fn default() -> Self {
        SimOptions {
            event_cap: DEFAULT_EVENT_CAP,
            record_rejected: true,
        }
    }
}

/// Simulates one path of the scenario with its own fixation model.
pub fn simulate(sc: &Scenario, seed: u64) -> Result<Trajectory, SimError> {
    simulate_with(sc, &sc.model, seed, SimOptions::default())
}

pub fn simulate_opts(sc: &Scenario, seed: u64, opts: SimOptions) -> Result<Trajectory, SimError> {
    simulate_with(sc, &sc.model, seed, opts)
}

struct PathBuilder {
    segments: Vec<Segment>,
    /// The last segment may still be extended in time.
    open: bool,
}

impl PathBuilder {
    fn push_piece(&mut self, x: f64, p: &DriftPiece) {
        if self.open {
            if let Some(last) = self.segments.last_mut() {
                if last.t1 == p.t0
                    && last.rate == p.rate
                    && last.amp == p.amp
                    && last.omega == p.omega
                    && last.phase == p.phase
                {
                    last.t1 = p.t1;
                    return;
                }
            }
        }
        self.segments.push(Segment {
            t0: p.t0,
            t1: p.t1,
            x0: x,
            rate: p.rate,
            amp: p.amp,
            omega: p.omega,
            phase: p.phase,
        });
        self.open = true;
    }

    fn current(&self, x0: f64) -> f64 {
        self.segments.last().map_or(x0, Segment::x1)
    }
}

/// Simulates one path using `fix` in place of the scenario's model.
pub fn simulate_with<G: FixationProbability + ?Sized>(
    sc: &Scenario,
    fix: &G,
    seed: u64,
    opts: SimOptions,
) -> Result<Trajectory, SimError> {
    sc.validate()?;
    let lambda = sc.measure.total_rate(&sc.trunc)?;
    let profile = sc.speed.profile();
    let noise = sc.speed.noise_scale();
    let mut jump_rng = stream(seed, JUMP_STREAM);
    let mut noise_rng = stream(seed, NOISE_STREAM);
    let grid = sc.grid();

    let mut path = PathBuilder {
        segments: Vec::new(),
        open: false,
    };
    let mut events = Vec::new();
    let mut t = 0.0_f64;
    let mut x = sc.x0;
    let mut proposals: u64 = 0;
    let mut next_prop = if lambda > 0.0 {
        exponential(&mut jump_rng, lambda)
    } else {
        f64::INFINITY
    };
    let mut grid_idx = 1;
    let mut status = RunStatus::Complete;

    while t < sc.horizon {
        let next_grid = if noise > 0.0 {
            grid.get(grid_idx).copied().unwrap_or(f64::INFINITY)
        } else {
            f64::INFINITY
        };
        let end = next_prop.min(next_grid).min(sc.horizon);
        let slope = if noise > 0.0 && end > t {
            let z: f64 = StandardNormal.sample(&mut noise_rng);
            noise * z / (end - t).sqrt()
        } else {
            0.0
        };
        let pieces = if end > t {
            profile.pieces(t, end)
        } else {
            Vec::new()
        };
        for mut piece in pieces {
            piece.rate += slope;
            let start = path.current(sc.x0);
            path.push_piece(if path.open { start } else { x }, &piece);
            x = path.current(sc.x0);
        }
        t = end;
        if noise > 0.0 && t == next_grid {
            grid_idx += 1;
            path.open = false;
        }
        if t == next_prop && t < sc.horizon {
            proposals += 1;
            if proposals > opts.event_cap {
                status = RunStatus::BudgetExceeded;
                break;
            }
            let alpha = sc.measure.sample_effect(&sc.trunc, &mut jump_rng);
            let mark = uniform_open_closed(&mut jump_rng);
            let g = fix.prob(x, alpha);
            let fixed = mark <= g;
            let x_before = x;
            if fixed {
                x = x_before + alpha;
                path.open = false;
            }
            if noise > 0.0 {
                path.open = false;
            }
            if fixed || opts.record_rejected {
                events.push(Event {
                    t,
                    kind: if fixed {
                        EventKind::Fixed
                    } else {
                        EventKind::ProposedRejected
                    },
                    alpha,
                    x_before,
                    x_after: x,
                });
            }
            next_prop = t + exponential(&mut jump_rng, lambda);
        }
    }

    let end_time = t.min(sc.horizon);
    let mut traj = Trajectory {
        x0: sc.x0,
        horizon: sc.horizon,
        end_time,
        seed,
        scenario_hash: sc.hash(),
        status,
        segments: path.segments,
        events,
        samples: Vec::new(),
    };
    traj.samples = grid
        .iter()
        .filter(|&&s| s <= end_time)
        .map(|&s| (s, traj.value_at(s)))
        .collect();
    if status == RunStatus::BudgetExceeded {
        return Err(SimError::BudgetExceeded {
            cap: opts.event_cap,
            partial: Box::new(traj),
        });
    }
    Ok(traj)
}

/// [`simulate`] with an internal check that every fixed jump respects the
/// envelope `x a < 0, |a| <= 2|x|` of the shipped models.
pub fn simulate_checked(
    sc: &Scenario,
    seed: u64,
    opts: SimOptions,
) -> Result<Trajectory, SimError> {
    let traj = simulate_with(sc, &sc.model as &FixationModel, seed, opts)?;
    for e in traj.fixed_events() {
        assert!(
            e.x_before * e.alpha < 0.0 && e.alpha.abs() <= 2.0 * e.x_before.abs(),
            "fixed jump outside the fixation envelope: {e:?}"
        );
    }
    Ok(traj)
}

/// Simulates one path per seed on a pool of `workers` threads. Results come
/// back in seed order regardless of completion order.
pub fn run_ensemble(
    sc: &Scenario,
    seeds: &[u64],
    workers: usize,
    opts: SimOptions,
) -> Vec<Result<Trajectory, SimError>> {
    let run = || {
        seeds
            .par_iter()
            .map(|&seed| simulate_opts(sc, seed, opts))
            .collect::<Vec<_>>()
    };
    match rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
    {
        Ok(pool) => pool.install(run),
        Err(_) => run(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::Family;

    fn scenario(
        measure: MutationMeasure,
        model: FixationModel,
        v: f64,
        x0: f64,
        horizon: f64,
    ) -> Scenario {
        Scenario::new(
            measure,
            TruncationPolicy::none(),
            model,
            SpeedModel::constant(v),
            x0,
            horizon,
            0.5,
        )
        .unwrap()
    }

    #[test]
    fn null_measure_moves_deterministically() {
        let sc = scenario(
            MutationMeasure::null(),
            FixationModel::step(),
            1.0,
            3.0,
            5.0,
        );
        let tr = simulate(&sc, 1).unwrap();
        assert!(tr.events.is_empty());
        for &(t, x) in &tr.samples {
            assert_eq!(x, 3.0 - t);
        }
        let first_below = tr.level_transitions(0.0);
        assert_eq!(first_below.len(), 1);
        assert_eq!(first_below[0].t, 3.0);
    }

    #[test]
    fn envelope_rejects_overshooting_atom() {
        let sc = scenario(
            MutationMeasure::atom(1.0, 1e3).unwrap(),
            FixationModel::step(),
            0.0,
            -0.4,
            1.0,
        );
        let tr = simulate(&sc, 2).unwrap();
        assert!(!tr.events.is_empty());
        assert!(tr
            .events
            .iter()
            .all(|e| e.kind == EventKind::ProposedRejected));
        assert_eq!(tr.terminal(), -0.4);
    }

    #[test]
    fn jumps_are_exact_and_times_increase() {
        let measure = MutationMeasure::positive(Family::Exponential {
            rate_scale: 2.0,
            mean_effect: 1.0,
        })
        .unwrap();
        let sc = scenario(
            measure,
            FixationModel::kimura(1.0).unwrap(),
            1.0,
            -3.0,
            200.0,
        );
        let tr = simulate_checked(&sc, 7, SimOptions::default()).unwrap();
        for w in tr.events.windows(2) {
            assert!(w[1].t > w[0].t);
        }
        for e in &tr.events {
            match e.kind {
                EventKind::Fixed => assert_eq!(e.x_after, e.x_before + e.alpha),
                EventKind::ProposedRejected => assert_eq!(e.x_after, e.x_before),
            }
            assert!((tr.value_at(e.t) - e.x_after).abs() < 1e-9);
        }
    }

    #[test]
    fn seed_determinism() {
        let sc = scenario(
            MutationMeasure::atom(1.0, 0.7).unwrap(),
            FixationModel::kimura(1.0).unwrap(),
            0.7,
            -10.0,
            500.0,
        );
        assert_eq!(simulate(&sc, 99).unwrap(), simulate(&sc, 99).unwrap());
        assert_ne!(simulate(&sc, 99).unwrap(), simulate(&sc, 100).unwrap());
    }

    #[test]
    fn budget_cap_returns_partial() {
        let sc = scenario(
            MutationMeasure::atom(1.0, 10.0).unwrap(),
            FixationModel::step(),
            1.0,
            -1.0,
            100.0,
        );
        let opts = SimOptions {
            event_cap: 50,
            record_rejected: true,
        };
        match simulate_opts(&sc, 3, opts) {
            Err(SimError::BudgetExceeded { partial, .. }) => {
                assert_eq!(partial.events.len(), 50);
                assert!(partial.end_time < 100.0);
                assert_eq!(partial.status, RunStatus::BudgetExceeded);
            }
            other => panic!("expected budget error, got {other:?}"),
        }
    }

    #[test]
    fn grid_includes_horizon() {
        let mut sc = scenario(
            MutationMeasure::null(),
            FixationModel::step(),
            1.0,
            0.0,
            1.25,
        );
        assert_eq!(sc.grid(), vec![0.0, 0.5, 1.0, 1.25]);
        sc.horizon = 1.0;
        assert_eq!(sc.grid(), vec![0.0, 0.5, 1.0]);
    }

    #[test]
    fn infinite_rate_is_rejected() {
        let measure = MutationMeasure::positive(Family::SmallJumpPowerLaw {
            delta: 0.5,
            rate_scale: 1.0,
            tail: None,
        })
        .unwrap();
        let r = Scenario::new(
            measure,
            TruncationPolicy::none(),
            FixationModel::step(),
            SpeedModel::constant(1.0),
            0.0,
            1.0,
            0.1,
        );
        assert!(matches!(
            r,
            Err(SimError::Measure(MeasureError::InfiniteRate))
        ));
    }

    #[test]
    fn noise_path_is_continuous_between_jumps() {
        let sc = Scenario::new(
            MutationMeasure::atom(0.5, 1.0).unwrap(),
            TruncationPolicy::none(),
            FixationModel::kimura(1.0).unwrap(),
            SpeedModel::WithBrownianNoise {
                base: RateProfile::Sinusoidal {
                    mean: 1.0,
                    amplitude: 0.5,
                    period: 3.0,
                    phase: 0.0,
                },
                noise_scale: 0.3,
            },
            -2.0,
            50.0,
            0.25,
        )
        .unwrap();
        let tr = simulate(&sc, 5).unwrap();
        let fixed_times: Vec<f64> = tr.fixed_events().map(|e| e.t).collect();
        for w in tr.segments.windows(2) {
            assert_eq!(w[0].t1, w[1].t0);
            if !fixed_times.contains(&w[1].t0) {
                assert!((w[0].x1() - w[1].x0).abs() < 1e-9);
            }
        }
    }
}
