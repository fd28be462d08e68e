//! Speed of the moving optimum.
//!
//! The optimum moves by `v(t) = int_0^t v1(s) ds + R_t` where `v1` is a
//! bounded deterministic rate and `R` an optional Brownian perturbation
//! `noise_scale * B_t`.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpeedError {
    #[error("invalid speed parameter: {0}")]
    InvalidParameter(String),
}

/// Deterministic rate `v1(t)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "profile", rename_all = "snake_case", deny_unknown_fields)]
pub enum RateProfile {
    Constant {
        v: f64,
    },
    /// Periodic step function: `rates[i]` held for `durations[i]`, cycling.
    PiecewiseConstant {
        durations: Vec<f64>,
        rates: Vec<f64>,
    },
    /// `mean + amplitude * sin(2 pi t / period + phase)`.
    Sinusoidal {
        mean: f64,
        amplitude: f64,
        period: f64,
        phase: f64,
    },
}

/// A stretch of time over which `v1(t) = rate + amp sin(omega t + phase)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriftPiece {
    pub t0: f64,
    pub t1: f64,
    pub rate: f64,
    pub amp: f64,
    pub omega: f64,
    pub phase: f64,
}

impl RateProfile {
    pub fn validate(&self) -> Result<(), SpeedError> {
        let bad = |msg: String| Err(SpeedError::InvalidParameter(msg));
        match self {
            RateProfile::Constant { v } => {
                if !(*v >= 0.0) || !v.is_finite() {
                    return bad(format!("constant speed must be finite and >= 0, got {v}"));
                }
            }
            RateProfile::PiecewiseConstant { durations, rates } => {
                if durations.is_empty() || durations.len() != rates.len() {
                    return bad("durations and rates must be non-empty and of equal length".into());
                }
                if durations.iter().any(|d| !(*d > 0.0) || !d.is_finite()) {
                    return bad("durations must be finite and positive".into());
                }
                if rates.iter().any(|r| !r.is_finite()) {
                    return bad("rates must be finite".into());
                }
            }
            RateProfile::Sinusoidal {
                mean,
                amplitude,
                period,
                phase,
            } => {
                if !mean.is_finite() || !phase.is_finite() {
                    return bad("mean and phase must be finite".into());
                }
                if !(*amplitude >= 0.0) || !amplitude.is_finite() {
                    return bad(format!(
                        "amplitude must be finite and >= 0, got {amplitude}"
                    ));
                }
                if !(*period > 0.0) || !period.is_finite() {
                    return bad(format!("period must be finite and positive, got {period}"));
                }
            }
        }
        Ok(())
    }

    /// Long-run mean rate.
    pub fn vbar(&self) -> f64 {
        match self {
            RateProfile::Constant { v } => *v,
            RateProfile::PiecewiseConstant { durations, rates } => {
                let cycle: f64 = durations.iter().sum();
                durations.iter().zip(rates).map(|(d, r)| d * r).sum::<f64>() / cycle
            }
            RateProfile::Sinusoidal { mean, .. } => *mean,
        }
    }

    pub fn sup(&self) -> f64 {
        match self {
            RateProfile::Constant { v } => *v,
            RateProfile::PiecewiseConstant { rates, .. } => {
                rates.iter().copied().fold(f64::MIN, f64::max)
            }
            RateProfile::Sinusoidal {
                mean, amplitude, ..
            } => mean + amplitude,
        }
    }

    pub fn inf(&self) -> f64 {
        match self {
            RateProfile::Constant { v } => *v,
            RateProfile::PiecewiseConstant { rates, .. } => {
                rates.iter().copied().fold(f64::MAX, f64::min)
            }
            RateProfile::Sinusoidal {
                mean, amplitude, ..
            } => mean - amplitude,
        }
    }

    pub fn is_constant(&self) -> bool {
        self.sup() == self.inf()
    }

    /// `int_{t0}^{t1} v1(s) ds`.
    pub fn integral(&self, t0: f64, t1: f64) -> f64 {
        self.pieces(t0, t1)
            .iter()
            .map(|p| {
                let mut total = p.rate * (p.t1 - p.t0);
                if p.amp != 0.0 {
                    total += p.amp / p.omega
                        * ((p.omega * p.t0 + p.phase).cos() - (p.omega * p.t1 + p.phase).cos());
                }
                total
            })
            .sum()
    }

    /// Splits `[t0, t1]` at the change points of the profile.
    pub fn pieces(&self, t0: f64, t1: f64) -> Vec<DriftPiece> {
        let flat = |t0, t1, rate| DriftPiece {
            t0,
            t1,
            rate,
            amp: 0.0,
            omega: 0.0,
            phase: 0.0,
        };
        match self {
            RateProfile::Constant { v } => vec![flat(t0, t1, *v)],
            RateProfile::Sinusoidal {
                mean,
                amplitude,
                period,
                phase,
            } => vec![DriftPiece {
                t0,
                t1,
                rate: *mean,
                amp: *amplitude,
                omega: TAU / period,
                phase: *phase,
            }],
            RateProfile::PiecewiseConstant { durations, rates } => {
                let cycle: f64 = durations.iter().sum();
                let k = (t0 / cycle).floor();
                let mut start = k * cycle;
                let mut out = Vec::new();
                let mut t = t0;
                'outer: loop {
                    for (d, r) in durations.iter().zip(rates) {
                        let end = start + d;
                        if end > t {
                            let stop = end.min(t1);
                            if stop > t {
                                out.push(flat(t, stop, *r));
                            }
                            t = stop;
                            if t >= t1 {
                                break 'outer;
                            }
                        }
                        start = end;
                    }
                }
                if out.is_empty() {
                    out.push(flat(t0, t1, self.rate_at(t0)));
                }
                out
            }
        }
    }

    pub fn rate_at(&self, t: f64) -> f64 {
        match self {
            RateProfile::Constant { v } => *v,
            RateProfile::Sinusoidal {
                mean,
                amplitude,
                period,
                phase,
            } => mean + amplitude * (TAU * t / period + phase).sin(),
            RateProfile::PiecewiseConstant { durations, rates } => {
                let cycle: f64 = durations.iter().sum();
                let mut r = t.rem_euclid(cycle);
                for (d, rate) in durations.iter().zip(rates) {
                    if r < *d {
                        return *rate;
                    }
                    r -= d;
                }
                *rates.last().expect("validated non-empty")
            }
        }
    }
}

/// Speed model of the optimum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SpeedModel {
    Constant { v: f64 },
    DeterministicRate { rate: RateProfile },
    WithBrownianNoise { base: RateProfile, noise_scale: f64 },
}

impl SpeedModel {
    pub fn constant(v: f64) -> Self {
        SpeedModel::Constant { v }
    }

    pub fn validate(&self) -> Result<(), SpeedError> {
        match self {
            SpeedModel::Constant { v } => RateProfile::Constant { v: *v }.validate(),
            SpeedModel::DeterministicRate { rate } => rate.validate(),
            SpeedModel::WithBrownianNoise { base, noise_scale } => {
                base.validate()?;
                if !(*noise_scale >= 0.0) || !noise_scale.is_finite() {
                    return Err(SpeedError::InvalidParameter(format!(
                        "noise_scale must be finite and >= 0, got {noise_scale}"
                    )));
                }
                Ok(())
            }
        }
    }

    /// The deterministic rate profile `v1`.
    pub fn profile(&self) -> RateProfile {
        match self {
            SpeedModel::Constant { v } => RateProfile::Constant { v: *v },
            SpeedModel::DeterministicRate { rate } => rate.clone(),
            SpeedModel::WithBrownianNoise { base, .. } => base.clone(),
        }
    }

    pub fn noise_scale(&self) -> f64 {
        match self {
            SpeedModel::WithBrownianNoise { noise_scale, .. } => *noise_scale,
            _ => 0.0,
        }
    }

    pub fn has_noise(&self) -> bool {
        self.noise_scale() > 0.0
    }

    /// Cesàro mean of `v1`, the speed that governs the long-run regime.
    pub fn vbar(&self) -> f64 {
        self.profile().vbar()
    }

    pub fn v_sup(&self) -> f64 {
        self.profile().sup()
    }

    pub fn v_inf(&self) -> f64 {
        self.profile().inf()
    }

    /// True when `v(t) = v t` exactly.
    pub fn is_constant(&self) -> bool {
        !self.has_noise() && self.profile().is_constant()
    }

    /// Same model with every rate multiplied by `c` (time rescaling).
    pub fn scaled(&self, c: f64) -> Self {
        let scale = |p: &RateProfile| match p {
            RateProfile::Constant { v } => RateProfile::Constant { v: v * c },
            RateProfile::PiecewiseConstant { durations, rates } => RateProfile::PiecewiseConstant {
                durations: durations.iter().map(|d| d / c).collect(),
                rates: rates.iter().map(|r| r * c).collect(),
            },
            RateProfile::Sinusoidal {
                mean,
                amplitude,
                period,
                phase,
            } => RateProfile::Sinusoidal {
                mean: mean * c,
                amplitude: amplitude * c,
                period: period / c,
                phase: *phase,
            },
        };
        match self {
            SpeedModel::Constant { v } => SpeedModel::Constant { v: v * c },
            SpeedModel::DeterministicRate { rate } => {
                SpeedModel::DeterministicRate { rate: scale(rate) }
            }
            SpeedModel::WithBrownianNoise { base, noise_scale } => SpeedModel::WithBrownianNoise {
                base: scale(base),
                noise_scale: noise_scale * c.sqrt(),
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn constant_integral_is_linear() {
        let p = RateProfile::Constant { v: 1.5 };
        assert_eq!(p.integral(0.0, 4.0), 6.0);
    }

    #[test]
    fn piecewise_mean_and_integral() {
        let p = RateProfile::PiecewiseConstant {
            durations: vec![1.0, 3.0],
            rates: vec![4.0, 0.0],
        };
        assert_eq!(p.vbar(), 1.0);
        assert_relative_eq!(p.integral(0.0, 400.0), 400.0, max_relative = 1e-12);
        assert_relative_eq!(p.integral(0.5, 1.5), 2.0, max_relative = 1e-12);
        let pieces = p.pieces(0.5, 4.5);
        assert_eq!(pieces.len(), 3);
        assert_eq!(pieces[1].rate, 0.0);
        assert_eq!(p.rate_at(4.2), 4.0);
    }

    #[test]
    fn sinusoid_cesaro_mean() {
        let p = RateProfile::Sinusoidal {
            mean: 2.0,
            amplitude: 0.5,
            period: 7.0,
            phase: 0.3,
        };
        let t = 7.0 * 1000.0 + 2.1;
        assert!((p.integral(0.0, t) / t - 2.0).abs() < 1e-3);
        assert_eq!(p.sup(), 2.5);
        assert_eq!(p.inf(), 1.5);
    }

    #[test]
    fn validation() {
        assert!(SpeedModel::constant(-1.0).validate().is_err());
        assert!(RateProfile::PiecewiseConstant {
            durations: vec![1.0],
            rates: vec![]
        }
        .validate()
        .is_err());
        assert!(SpeedModel::WithBrownianNoise {
            base: RateProfile::Constant { v: 1.0 },
            noise_scale: -0.1
        }
        .validate()
        .is_err());
    }
}
