//! Ensemble estimators computed exactly from path segments.

use serde::Serialize;
use thiserror::Error;

use crate::simulator::Trajectory;

use super::serde_inf;

#[derive(Debug, Error, PartialEq)]
pub enum AnalysisError {
    #[error("at least {needed} trajectories are required, got {got}")]
    TooFewPaths { needed: usize, got: usize },
    #[error("ensemble mixes scenarios or horizons: {0}")]
    MixedEnsemble(String),
    #[error("no path crosses below level {level}")]
    NoCrossings { level: f64 },
}

/// Sum in ascending order, so that the result does not depend on the order
/// in which paths were supplied.
fn ordered_sum(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    values.iter().sum()
}

fn check_common(ensemble: &[Trajectory]) -> Result<(), AnalysisError> {
    let first = &ensemble[0];
    for tr in ensemble {
        if tr.scenario_hash != first.scenario_hash {
            return Err(AnalysisError::MixedEnsemble(
                "scenario hashes differ".into(),
            ));
        }
        if tr.end_time != first.end_time {
            return Err(AnalysisError::MixedEnsemble(format!(
                "path lengths {} and {}",
                first.end_time, tr.end_time
            )));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpeedEstimate {
    pub n: usize,
    pub horizon: f64,
    /// Ensemble mean of `X_T / T`.
    pub mean: f64,
    pub sd: f64,
    /// 95% normal-approximation interval for the mean.
    pub ci: (f64, f64),
    pub slopes: Vec<f64>,
}

/// Mean terminal slope `X_T / T` with a normal-approximation interval.
pub fn estimate_speed(ensemble: &[Trajectory]) -> Result<SpeedEstimate, AnalysisError> {
    if ensemble.len() < 2 {
        return Err(AnalysisError::TooFewPaths {
            needed: 2,
            got: ensemble.len(),
        });
    }
    check_common(ensemble)?;
    let horizon = ensemble[0].end_time;
    let slopes: Vec<f64> = ensemble.iter().map(|tr| tr.terminal() / horizon).collect();
    let n = slopes.len() as f64;
    let mean = ordered_sum(&mut slopes.clone()) / n;
    let mut sq: Vec<f64> = slopes.iter().map(|s| (s - mean) * (s - mean)).collect();
    let sd = (ordered_sum(&mut sq) / (n - 1.0)).sqrt();
    let half = 1.96 * sd / n.sqrt();
    Ok(SpeedEstimate {
        n: slopes.len(),
        horizon,
        mean,
        sd,
        ci: (mean - half, mean + half),
        slopes,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReturnTimeStats {
    pub level: f64,
    /// Excursions below `level` that started with a downcrossing and ended.
    pub completed: usize,
    /// Excursions still below `level` when the path ends.
    pub censored: usize,
    /// Completed excursion lengths, ascending.
    pub durations: Vec<f64>,
    #[serde(serialize_with = "serde_inf::scalar")]
    pub mean: f64,
    #[serde(serialize_with = "serde_inf::scalar")]
    pub median: f64,
    /// Upcrossings of `level` per path (including a first return from a
    /// start below the level).
    pub returns_per_path: Vec<usize>,
    pub mean_returns: f64,
    /// Empirical survival `(d, P(D > d))` of completed durations.
    pub tail: Vec<(f64, f64)>,
}

/// Excursions below `level`: each starts when a path drops strictly below the
/// level and ends when it comes back. A stretch below the level at time 0 is
/// counted as a return but not as an excursion, because its start is unknown.
pub fn return_time_stats(
    ensemble: &[Trajectory],
    level: f64,
) -> Result<ReturnTimeStats, AnalysisError> {
    let mut durations = Vec::new();
    let mut censored = 0;
    let mut downs = 0;
    let mut returns_per_path = Vec::with_capacity(ensemble.len());
    for tr in ensemble {
        let mut start: Option<f64> = None;
        let mut returns = 0;
        for tr in tr.level_transitions(level) {
            if tr.below {
                downs += 1;
                start = Some(tr.t);
            } else {
                returns += 1;
                if let Some(s) = start.take() {
                    durations.push(tr.t - s);
                }
            }
        }
        if start.is_some() {
            censored += 1;
        }
        returns_per_path.push(returns);
    }
    if downs == 0 {
        return Err(AnalysisError::NoCrossings { level });
    }
    durations.sort_by(f64::total_cmp);
    let completed = durations.len();
    let mean = if completed == 0 {
        f64::NAN
    } else {
        durations.iter().sum::<f64>() / completed as f64
    };
    let median = match completed {
        0 => f64::NAN,
        n if n % 2 == 1 => durations[n / 2],
        n => 0.5 * (durations[n / 2 - 1] + durations[n / 2]),
    };
    let tail = durations
        .iter()
        .enumerate()
        .map(|(i, &d)| (d, (completed - i - 1) as f64 / completed as f64))
        .collect();
    let mean_returns = if ensemble.is_empty() {
        0.0
    } else {
        returns_per_path.iter().sum::<usize>() as f64 / ensemble.len() as f64
    };
    Ok(ReturnTimeStats {
        level,
        completed,
        censored,
        durations,
        mean,
        median,
        returns_per_path,
        mean_returns,
        tail,
    })
}

/// Fraction of `[0, T]` during which `lo < X_t < hi`, from the exact segments.
pub fn occupation_fraction(traj: &Trajectory, lo: f64, hi: f64) -> f64 {
    if traj.end_time <= 0.0 {
        return f64::from(u8::from(lo < traj.x0 && traj.x0 < hi));
    }
    let mut parts: Vec<f64> = traj
        .segments
        .iter()
        .map(|s| s.time_inside(lo, hi))
        .collect();
    (ordered_sum(&mut parts) / traj.end_time).clamp(0.0, 1.0)
}
