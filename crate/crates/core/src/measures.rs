//! Mutation intensity measures.
//!
//! A [`MutationMeasure`] gives the rate per unit time at which mutations of a
//! given effect size are proposed. Every shipped family decomposes into a few
//! elementary pieces (point masses, power-law, exponential and half-Gaussian
//! densities) whose masses and first two moments are known in closed form, so
//! rates, biases and limit moments never depend on quadrature. Quadrature is
//! only used for integrands that involve the fixation probability.

use rand::RngCore;
use serde::{Deserialize, Serialize};
use statrs::function::erf::{erfc, erfc_inv};
use thiserror::Error;

use crate::quad::{self, QuadError, Tolerance};
use crate::rng::uniform;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeasureError {
    #[error("invalid measure parameter: {0}")]
    InvalidParameter(String),
    #[error("total rate is infinite; a positive truncation cutoff is required")]
    InfiniteRate,
    #[error("quadrature did not converge (value {value:e}, error estimate {error:e})")]
    NonConvergent { value: f64, error: f64 },
    #[error("integrand is not integrable against the measure on this domain")]
    Divergent,
}

impl From<QuadError> for MeasureError {
    fn from(e: QuadError) -> Self {
        match e {
            QuadError::NonConvergent { value, error } => {
                MeasureError::NonConvergent { value, error }
            }
            QuadError::Divergent => MeasureError::Divergent,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Atom {
    /// Effect size (nonzero, may be negative).
    pub location: f64,
    /// Proposal rate per unit time.
    pub weight: f64,
}

/// Tail density `coefficient * a^-exponent` on `a > 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PowerTail {
    pub coefficient: f64,
    pub exponent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum Family {
    /// Finitely many point masses.
    DiscreteAtoms { atoms: Vec<Atom> },
    /// `rate_scale / mean_effect * exp(-a / mean_effect)` on `a > 0`.
    Exponential { rate_scale: f64, mean_effect: f64 },
    /// `rate_scale * sqrt(2/pi) / scale * exp(-a^2 / (2 scale^2))` on `a > 0`.
    HalfGaussian { rate_scale: f64, scale: f64 },
    /// `rate_scale * a^-(2 + delta)` on `a >= lower_cut`.
    PowerLawTail {
        delta: f64,
        lower_cut: f64,
        rate_scale: f64,
    },
    /// `rate_scale * a^-(1 + delta)` on `0 < a < 1`, plus an optional tail on `a > 1`.
    SmallJumpPowerLaw {
        delta: f64,
        rate_scale: f64,
        tail: Option<PowerTail>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SupportSign {
    #[default]
    PositiveOnly,
    /// The family is mirrored onto negative effects with the same rates.
    TwoSided,
}

/// Elementary building block living on effect magnitudes `u = |a| > 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Shape {
    Atom {
        at: f64,
        weight: f64,
    },
    /// `coef * u^gamma` on `[lo, hi)`.
    Power {
        coef: f64,
        gamma: f64,
        lo: f64,
        hi: f64,
    },
    Exponential {
        rate: f64,
        mean: f64,
    },
    HalfGaussian {
        rate: f64,
        scale: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Piece {
    sign: f64,
    shape: Shape,
}

/// `int_a^b u^p du` for `0 <= a <= b <= inf`, infinite where it diverges.
fn power_integral(p: f64, a: f64, b: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    let q = p + 1.0;
    if q == 0.0 {
        if a == 0.0 || b.is_infinite() {
            return f64::INFINITY;
        }
        return (b / a).ln();
    }
    if (b.is_infinite() && q > 0.0) || (a == 0.0 && q < 0.0) {
        return f64::INFINITY;
    }
    let bq = if b.is_infinite() { 0.0 } else { b.powf(q) };
    let aq = if a == 0.0 { 0.0 } else { a.powf(q) };
    (bq - aq) / q
}

fn exp_term(k: u32, x: f64, mean: f64) -> f64 {
    if x.is_infinite() {
        return 0.0;
    }
    let e = (-x / mean).exp();
    match k {
        0 => e,
        1 => (x + mean) * e,
        _ => (x * x + 2.0 * x * mean + 2.0 * mean * mean) * e,
    }
}

fn gauss_term(k: u32, z: f64) -> f64 {
    // Antiderivative pieces for u^k * sqrt(2/pi) e^{-u^2/2} evaluated so that
    // F(a) - F(b) gives the integral over [a, b] in standardized units.
    if z.is_infinite() {
        return 0.0;
    }
    let c = (2.0 / std::f64::consts::PI).sqrt();
    let g = (-0.5 * z * z).exp();
    match k {
        0 => erfc(z / std::f64::consts::SQRT_2),
        1 => c * g,
        _ => erfc(z / std::f64::consts::SQRT_2) + c * z * g,
    }
}

impl Shape {
    /// Smallest and largest magnitudes carrying mass.
    fn support(&self) -> (f64, f64) {
        match *self {
            Shape::Atom { at, .. } => (at, at),
            Shape::Power { lo, hi, .. } => (lo, hi),
            _ => (0.0, f64::INFINITY),
        }
    }

    /// `int_{[a, b)} u^k nu(du)` for `0 <= a <= b <= inf`.
    fn moment(&self, k: u32, a: f64, b: f64) -> f64 {
        if b <= a {
            return 0.0;
        }
        match *self {
            Shape::Atom { at, weight } => {
                if at >= a && at < b {
                    weight * at.powi(k as i32)
                } else {
                    0.0
                }
            }
            Shape::Power {
                coef,
                gamma,
                lo,
                hi,
            } => {
                let (a, b) = (a.max(lo), b.min(hi));
                coef * power_integral(gamma + k as f64, a, b)
            }
            Shape::Exponential { rate, mean } => {
                rate * (exp_term(k, a, mean) - exp_term(k, b, mean))
            }
            Shape::HalfGaussian { rate, scale } => {
                let s = scale.powi(k as i32);
                rate * s * (gauss_term(k, a / scale) - gauss_term(k, b / scale))
            }
        }
    }

    fn density(&self, u: f64) -> f64 {
        match *self {
            Shape::Atom { .. } => 0.0,
            Shape::Power {
                coef,
                gamma,
                lo,
                hi,
            } => {
                if u >= lo && u < hi {
                    coef * u.powf(gamma)
                } else {
                    0.0
                }
            }
            Shape::Exponential { rate, mean } => rate / mean * (-u / mean).exp(),
            Shape::HalfGaussian { rate, scale } => {
                let z = u / scale;
                rate * (2.0 / std::f64::consts::PI).sqrt() / scale * (-0.5 * z * z).exp()
            }
        }
    }

    /// Magnitude drawn from the shape restricted to `[floor, inf)` by inversion.
    fn inverse_cdf(&self, floor: f64, u: f64) -> f64 {
        let w = 1.0 - u; // in (0, 1]
        match *self {
            Shape::Atom { at, .. } => at,
            Shape::Power { gamma, lo, hi, .. } => {
                let a = floor.max(lo);
                let p = gamma + 1.0;
                if p == 0.0 {
                    return a * (hi / a).powf(u);
                }
                let ap = a.powf(p);
                let bp = if hi.is_infinite() { 0.0 } else { hi.powf(p) };
                let x = (bp + w * (ap - bp)).powf(1.0 / p);
                x.clamp(a, hi)
            }
            Shape::Exponential { mean, .. } => floor - mean * w.ln(),
            Shape::HalfGaussian { scale, .. } => {
                let s2 = scale * std::f64::consts::SQRT_2;
                let tail = erfc(floor / s2);
                (s2 * erfc_inv(w * tail)).max(floor)
            }
        }
    }

    fn natural_breaks(&self, out: &mut Vec<f64>) {
        match *self {
            Shape::Atom { .. } => {}
            Shape::Power { lo, hi, .. } => {
                if lo > 0.0 {
                    out.push(lo);
                }
                if hi.is_finite() {
                    out.push(hi);
                }
            }
            Shape::Exponential { mean, .. } => out.push(mean),
            Shape::HalfGaussian { scale, .. } => out.push(scale),
        }
    }
}

fn positive(name: &str, x: f64) -> Result<(), MeasureError> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(MeasureError::InvalidParameter(format!(
            "{name} must be finite and strictly positive, got {x}"
        )))
    }
}

/// Intensity measure of proposed mutations.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MutationMeasure {
    family: Family,
    support: SupportSign,
    /// Magnitudes below this are removed (a truncated copy of the measure).
    cutoff: f64,
    #[serde(skip)]
    pieces: Vec<Piece>,
}

impl MutationMeasure {
    /// Validates the parameters, rejecting anything that violates
    /// `int (|a| ^ 1) nu(da) < inf` or has non-positive rates.
    pub fn new(family: Family, support: SupportSign) -> Result<Self, MeasureError> {
        let mut base = Vec::new();
        match &family {
            Family::DiscreteAtoms { atoms } => {
                for a in atoms {
                    positive("atom weight", a.weight)?;
                    if a.location == 0.0 || !a.location.is_finite() {
                        return Err(MeasureError::InvalidParameter(format!(
                            "atom location must be finite and nonzero, got {}",
                            a.location
                        )));
                    }
                    base.push(Piece {
                        sign: a.location.signum(),
                        shape: Shape::Atom {
                            at: a.location.abs(),
                            weight: a.weight,
                        },
                    });
                }
            }
            &Family::Exponential {
                rate_scale,
                mean_effect,
            } => {
                positive("rate_scale", rate_scale)?;
                positive("mean_effect", mean_effect)?;
                base.push(Piece {
                    sign: 1.0,
                    shape: Shape::Exponential {
                        rate: rate_scale,
                        mean: mean_effect,
                    },
                });
            }
            &Family::HalfGaussian { rate_scale, scale } => {
                positive("rate_scale", rate_scale)?;
                positive("scale", scale)?;
                base.push(Piece {
                    sign: 1.0,
                    shape: Shape::HalfGaussian {
                        rate: rate_scale,
                        scale,
                    },
                });
            }
            &Family::PowerLawTail {
                delta,
                lower_cut,
                rate_scale,
            } => {
                positive("rate_scale", rate_scale)?;
                positive("lower_cut", lower_cut)?;
                if !(delta > -1.0) || !delta.is_finite() {
                    return Err(MeasureError::InvalidParameter(format!(
                        "power-law tail needs delta > -1 for integrability, got {delta}"
                    )));
                }
                base.push(Piece {
                    sign: 1.0,
                    shape: Shape::Power {
                        coef: rate_scale,
                        gamma: -(2.0 + delta),
                        lo: lower_cut,
                        hi: f64::INFINITY,
                    },
                });
            }
            &Family::SmallJumpPowerLaw {
                delta,
                rate_scale,
                tail,
            } => {
                positive("rate_scale", rate_scale)?;
                if !(delta < 1.0) || !delta.is_finite() {
                    return Err(MeasureError::InvalidParameter(format!(
                        "small-jump exponent needs delta < 1 for integrability, got {delta}"
                    )));
                }
                base.push(Piece {
                    sign: 1.0,
                    shape: Shape::Power {
                        coef: rate_scale,
                        gamma: -(1.0 + delta),
                        lo: 0.0,
                        hi: 1.0,
                    },
                });
                if let Some(t) = tail {
                    positive("tail coefficient", t.coefficient)?;
                    if !(t.exponent > 1.0) || !t.exponent.is_finite() {
                        return Err(MeasureError::InvalidParameter(format!(
                            "tail exponent must exceed 1, got {}",
                            t.exponent
                        )));
                    }
                    base.push(Piece {
                        sign: 1.0,
                        shape: Shape::Power {
                            coef: t.coefficient,
                            gamma: -t.exponent,
                            lo: 1.0,
                            hi: f64::INFINITY,
                        },
                    });
                }
            }
        }
        let mut pieces = base.clone();
        if support == SupportSign::TwoSided {
            pieces.extend(base.iter().map(|p| Piece {
                sign: -p.sign,
                shape: p.shape,
            }));
        }
        Ok(MutationMeasure {
            family,
            support,
            cutoff: 0.0,
            pieces,
        })
    }

    pub fn positive(family: Family) -> Result<Self, MeasureError> {
        Self::new(family, SupportSign::PositiveOnly)
    }

    /// Single atom of `weight` at `location`.
    pub fn atom(location: f64, weight: f64) -> Result<Self, MeasureError> {
        Self::positive(Family::DiscreteAtoms {
            atoms: vec![Atom { location, weight }],
        })
    }

    pub fn null() -> Self {
        Self::positive(Family::DiscreteAtoms { atoms: Vec::new() })
            .expect("empty atom list is valid")
    }

    pub fn family(&self) -> &Family {
        &self.family
    }

    pub fn support(&self) -> SupportSign {
        self.support
    }

    pub fn cutoff(&self) -> f64 {
        self.cutoff
    }

    /// Copy of the measure with all effects of magnitude below `epsilon` removed.
    pub fn restricted(&self, epsilon: f64) -> Self {
        MutationMeasure {
            cutoff: self.cutoff.max(epsilon),
            ..self.clone()
        }
    }

    fn lower(&self, a: f64) -> f64 {
        a.max(self.cutoff)
    }

    /// `int_{lo <= |a| < hi, sign(a) = sign} |a|^k nu(da)`; `sign = 0` sums both sides.
    pub fn abs_moment(&self, k: u32, lo: f64, hi: f64, sign: f64) -> f64 {
        let lo = self.lower(lo.max(0.0));
        self.pieces
            .iter()
            .filter(|p| sign == 0.0 || p.sign == sign)
            .map(|p| p.shape.moment(k, lo, hi))
            .sum()
    }

    /// As [`abs_moment`](Self::abs_moment) over the open range `|a| > lo`.
    pub fn abs_moment_above(&self, k: u32, lo: f64, sign: f64) -> f64 {
        self.abs_moment(k, lo.next_up(), f64::INFINITY, sign)
    }

    /// Total mass, possibly infinite.
    pub fn total_mass(&self) -> f64 {
        self.abs_moment(0, 0.0, f64::INFINITY, 0.0)
    }

    pub fn has_finite_mass(&self) -> bool {
        self.total_mass().is_finite()
    }

    /// `m = int_{a > 0} a nu(da)` and `V = int_{a > 0} a^2 nu(da)`, either possibly infinite.
    pub fn positive_moments(&self) -> (f64, f64) {
        (
            self.abs_moment(1, 0.0, f64::INFINITY, 1.0),
            self.abs_moment(2, 0.0, f64::INFINITY, 1.0),
        )
    }

    /// Thinning base rate `nu({|a| >= epsilon})`.
    pub fn total_rate(&self, trunc: &TruncationPolicy) -> Result<f64, MeasureError> {
        let rate = self.abs_moment(0, trunc.epsilon, f64::INFINITY, 0.0);
        if rate.is_finite() {
            Ok(rate)
        } else {
            Err(MeasureError::InfiniteRate)
        }
    }

    /// Drift dropped by removing effects with `|a| < epsilon`: `int_{|a| < eps} |a| nu(da)`.
    pub fn truncation_bias(&self, epsilon: f64) -> f64 {
        if epsilon <= self.cutoff {
            return 0.0;
        }
        self.abs_moment(1, 0.0, epsilon.max(0.0), 0.0)
    }

    /// Draw one effect from `nu` restricted to `{|a| >= epsilon}` and normalised.
    ///
    /// Draw protocol (relied on by replay oracles): one uniform selects the
    /// piece by its share of the restricted mass; continuous pieces then take
    /// one more uniform for inversion, point masses take none. The measure
    /// must have positive finite restricted mass.
    pub fn sample_effect<R: RngCore + ?Sized>(&self, trunc: &TruncationPolicy, rng: &mut R) -> f64 {
        let floor = self.lower(trunc.epsilon);
        let masses: Vec<f64> = self
            .pieces
            .iter()
            .map(|p| p.shape.moment(0, floor, f64::INFINITY))
            .collect();
        let total: f64 = masses.iter().sum();
        let pick = uniform(rng) * total;
        let mut acc = 0.0;
        let mut chosen = self.pieces.len() - 1;
        for (i, m) in masses.iter().enumerate() {
            acc += m;
            if pick < acc {
                chosen = i;
                break;
            }
        }
        while masses[chosen] == 0.0 && chosen > 0 {
            chosen -= 1;
        }
        let piece = self.pieces[chosen];
        let magnitude = match piece.shape {
            Shape::Atom { at, .. } => at,
            shape => shape.inverse_cdf(floor, uniform(rng)),
        };
        piece.sign * magnitude
    }

    /// Feature locations of the densities (cut points, scales).
    pub fn natural_breaks(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for p in &self.pieces {
            let mut local = Vec::new();
            p.shape.natural_breaks(&mut local);
            out.extend(local.into_iter().map(|u| p.sign * u));
        }
        if self.cutoff > 0.0 {
            out.push(self.cutoff);
            out.push(-self.cutoff);
        }
        out
    }

    /// `int_{domain} f(a) nu(da)`.
    ///
    /// Point masses are summed exactly (closed domain). Densities use adaptive
    /// quadrature; a power-law density singular at zero is mapped through
    /// `a = b t^(1/(gamma+2))`, which turns `f(a) a^gamma da` into a bounded
    /// multiple of `f(a)/a dt` whenever `f` vanishes linearly at zero.
    pub fn integrate_against<F: Fn(f64) -> f64>(
        &self,
        f: F,
        domain: &Domain,
        tol: Tolerance,
    ) -> Result<f64, MeasureError> {
        let mut total = 0.0;
        let mut unconverged: Option<f64> = None;
        for piece in &self.pieces {
            let s = piece.sign;
            // Magnitude range of this side intersected with the domain.
            let (dlo, dhi) = if s > 0.0 {
                (domain.lo.max(0.0), domain.hi)
            } else {
                ((-domain.hi).max(0.0), -domain.lo)
            };
            if dhi < dlo || dhi <= 0.0 {
                continue;
            }
            let (slo, shi) = piece.shape.support();
            let a = dlo.max(slo).max(self.cutoff);
            let b = dhi.min(shi);
            if let Shape::Atom { at, weight } = piece.shape {
                if at >= dlo && at <= dhi && at >= self.cutoff {
                    total += weight * f(s * at);
                }
                continue;
            }
            if b <= a {
                continue;
            }
            let mut breaks: Vec<f64> = domain
                .breaks
                .iter()
                .filter(|&&x| x * s > 0.0)
                .map(|x| x.abs())
                .collect();
            piece.shape.natural_breaks(&mut breaks);
            breaks.retain(|&u| u > a && u < b);

            let shape = piece.shape;
            let h = |u: f64| f(s * u) * shape.density(u);
            let estimate = match shape {
                Shape::Power { coef, gamma, .. } if a == 0.0 && gamma < 0.0 => {
                    // b is finite here: an infinite power piece never starts at 0.
                    let q = gamma + 2.0;
                    let scale = coef * b.powf(q) / q;
                    let tbreaks: Vec<f64> = breaks.iter().map(|u| (u / b).powf(q)).collect();
                    let g = |t: f64| {
                        let u = b * t.powf(1.0 / q);
                        if u <= 0.0 {
                            return 0.0;
                        }
                        f(s * u) / u
                    };
                    quad::integrate_from_zero(g, 1.0, &tbreaks, tol)
                        .map(|e| (scale * e.value, scale * e.error))
                }
                _ if b.is_infinite() => {
                    quad::integrate_to_infinity(h, a, &breaks, tol).map(|e| (e.value, e.error))
                }
                _ => quad::integrate(h, a, b, &breaks, tol).map(|e| (e.value, e.error)),
            };
            match estimate {
                Ok((value, _)) => total += value,
                // Keep going so that the caller sees the whole integral.
                Err(QuadError::NonConvergent { value, error }) => {
                    total += value;
                    unconverged = Some(unconverged.unwrap_or(0.0) + error.abs());
                }
                Err(e) => return Err(e.into()),
            }
        }
        match unconverged {
            Some(error) => Err(MeasureError::NonConvergent {
                value: total,
                error,
            }),
            None => Ok(total),
        }
    }
}

/// Integration domain for [`MutationMeasure::integrate_against`].
#[derive(Debug, Clone, PartialEq)]
pub struct Domain {
    pub lo: f64,
    pub hi: f64,
    /// Interior points where the integrand has layers or kinks.
    pub breaks: Vec<f64>,
}

impl Domain {
    pub fn new(lo: f64, hi: f64) -> Self {
        Domain {
            lo,
            hi,
            breaks: Vec::new(),
        }
    }

    pub fn with_breaks(mut self, breaks: Vec<f64>) -> Self {
        self.breaks = breaks;
        self
    }

    pub fn positive() -> Self {
        Domain::new(0.0, f64::INFINITY)
    }

    pub fn whole_line() -> Self {
        Domain::new(f64::NEG_INFINITY, f64::INFINITY)
    }
}

/// Small-jump cutoff for simulation, with the drift it discards.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruncationPolicy {
    pub epsilon: f64,
    pub bias_bound: f64,
}

impl TruncationPolicy {
    pub fn none() -> Self {
        TruncationPolicy {
            epsilon: 0.0,
            bias_bound: 0.0,
        }
    }

    pub fn new(measure: &MutationMeasure, epsilon: f64) -> Result<Self, MeasureError> {
        if !(epsilon >= 0.0) || !epsilon.is_finite() {
            return Err(MeasureError::InvalidParameter(format!(
                "cutoff must be finite and non-negative, got {epsilon}"
            )));
        }
        Ok(TruncationPolicy {
            epsilon,
            bias_bound: measure.truncation_bias(epsilon),
        })
    }

    /// Largest cutoff whose bias stays within `threshold` (zero for finite measures).
    pub fn auto(measure: &MutationMeasure, threshold: f64) -> Result<Self, MeasureError> {
        if measure.has_finite_mass() {
            return Self::new(measure, 0.0);
        }
        if !(threshold > 0.0) {
            return Err(MeasureError::InvalidParameter(format!(
                "bias threshold must be positive, got {threshold}"
            )));
        }
        let mut hi = 1.0_f64;
        while measure.truncation_bias(hi) > threshold {
            hi *= 0.5;
            if hi < 1e-300 {
                return Err(MeasureError::InfiniteRate);
            }
        }
        // bias(hi) <= threshold; grow toward the largest admissible cutoff.
        let mut lo = hi;
        let mut up = 2.0 * hi;
        if measure.truncation_bias(up) <= threshold {
            return Self::new(measure, hi);
        }
        for _ in 0..60 {
            let mid = 0.5 * (lo + up);
            if measure.truncation_bias(mid) <= threshold {
                lo = mid;
            } else {
                up = mid;
            }
        }
        Self::new(measure, lo)
    }

    /// Bias threshold used for automatic cutoffs: `1e-3 |m - v|`, or `1e-4`
    /// when the drift gap vanishes.
    pub fn auto_threshold(m: f64, vbar: f64, boundary_tol: f64) -> f64 {
        if m.is_infinite() {
            return 1e-3 * vbar.max(1.0);
        }
        if (m - vbar).abs() <= boundary_tol * m.max(vbar) {
            1e-4
        } else {
            1e-3 * (m - vbar).abs()
        }
    }
}
