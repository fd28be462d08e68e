//! Fixation probabilities and the moment functionals built from them.
//!
//! A proposed mutation of effect `a` arising at lag `x` fixes with
//! probability `g(x, a)`. All shipped models vanish unless the mutation points
//! toward the optimum (`x a < 0`) and overshoots by no more than the current
//! lag (`|a| <= 2|x|`), and all are symmetric: `g(x, a) = g(-x, -a)`.

use rand::RngCore;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::measures::{Domain, MeasureError, MutationMeasure};
use crate::quad::{layer_breaks, Tolerance};
use crate::rng::uniform;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FixationError {
    #[error("selection strength must be finite and positive, got {0}")]
    InvalidSigma(f64),
    #[error("the integrated Lipschitz bound is only established for the Kimura model")]
    UnsupportedModel,
    #[error("empty or invalid compact set [{0}, {1}]")]
    InvalidCompact(f64, f64),
    #[error(transparent)]
    Measure(#[from] MeasureError),
}

/// Selection coefficient `s = sigma [|a| (2|x| - |a|)]^+` for mutations pointing
/// toward the optimum, zero otherwise. Nonnegative for beneficial mutations.
pub fn selection_coefficient(x: f64, alpha: f64, sigma: f64) -> f64 {
    if x * alpha >= 0.0 {
        return 0.0;
    }
    let a = alpha.abs();
    sigma * (a * (2.0 * x.abs() - a)).max(0.0)
}

/// Anything usable as a fixation probability by the simulator.
pub trait FixationProbability: Sync {
    /// Probability in `[0, 1]` that a mutation of effect `alpha` fixes at lag `x`.
    fn prob(&self, x: f64, alpha: f64) -> f64;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FixationKind {
    /// `1 - exp(-2 s)`.
    KimuraExp,
    /// `min(2 s, 1)`.
    HaldaneLinear,
    /// Every beneficial mutation with `|a| <= 2|x|` fixes.
    StepLimit,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixationModel {
    pub kind: FixationKind,
    pub sigma: f64,
}

impl FixationModel {
    pub fn new(kind: FixationKind, sigma: f64) -> Result<Self, FixationError> {
        if !(sigma > 0.0) || !sigma.is_finite() {
            return Err(FixationError::InvalidSigma(sigma));
        }
        Ok(FixationModel { kind, sigma })
    }

    pub fn kimura(sigma: f64) -> Result<Self, FixationError> {
        Self::new(FixationKind::KimuraExp, sigma)
    }

    pub fn step() -> Self {
        FixationModel {
            kind: FixationKind::StepLimit,
            sigma: 1.0,
        }
    }

    pub fn selection_coefficient(&self, x: f64, alpha: f64) -> f64 {
        selection_coefficient(x, alpha, self.sigma)
    }

    pub fn fixation_prob(&self, x: f64, alpha: f64) -> f64 {
        match self.kind {
            FixationKind::KimuraExp => {
                let s = self.selection_coefficient(x, alpha);
                if s > 0.0 {
                    -(-2.0 * s).exp_m1()
                } else {
                    0.0
                }
            }
            FixationKind::HaldaneLinear => (2.0 * self.selection_coefficient(x, alpha)).min(1.0),
            FixationKind::StepLimit => {
                if x * alpha < 0.0 && alpha.abs() <= 2.0 * x.abs() {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// `1 - g(x, a)`, computed without cancellation when `g` is close to one.
    pub fn loss_prob(&self, x: f64, alpha: f64) -> f64 {
        match self.kind {
            FixationKind::KimuraExp => (-2.0 * self.selection_coefficient(x, alpha)).exp(),
            FixationKind::HaldaneLinear => {
                (1.0 - 2.0 * self.selection_coefficient(x, alpha)).max(0.0)
            }
            FixationKind::StepLimit => 1.0 - self.fixation_prob(x, alpha),
        }
    }

    /// Points in `(0, 2u)` where `a -> g(-u, a)` has kinks or boundary layers.
    fn magnitude_breaks(&self, u: f64) -> Vec<f64> {
        let mut out = Vec::new();
        let top = 2.0 * u;
        match self.kind {
            FixationKind::KimuraExp => {
                // g rises from 0 over a layer of width ~1/(4 sigma u) at both ends.
                let h = 1.0 / (4.0 * self.sigma * u);
                layer_breaks(0.0, h, 1.0, 0.0, top, &mut out);
                layer_breaks(top, h, -1.0, 0.0, top, &mut out);
                out.push(u);
            }
            FixationKind::HaldaneLinear => {
                // 2 sigma a (2u - a) = 1 at a = u -+ sqrt(u^2 - 1/(2 sigma)).
                let disc = u * u - 0.5 / self.sigma;
                if disc >= 0.0 {
                    let r = disc.sqrt();
                    out.push(u - r);
                    out.push(u + r);
                }
                out.push(u);
            }
            FixationKind::StepLimit => {}
        }
        out.retain(|&a| a > 0.0 && a < top);
        out
    }

    /// `G(a; lo, hi) = int_lo^hi g(y, a) dy` in closed form.
    pub fn integrated_prob(&self, alpha: f64, lo: f64, hi: f64) -> f64 {
        if alpha == 0.0 || hi <= lo {
            return 0.0;
        }
        if alpha > 0.0 {
            // Only y < 0 contributes; substitute u = -y.
            if lo >= 0.0 {
                return 0.0;
            }
            self.integrated_positive(alpha, (-hi).max(0.0), -lo)
        } else {
            if hi <= 0.0 {
                return 0.0;
            }
            self.integrated_positive(-alpha, lo.max(0.0), hi)
        }
    }

    /// `int_{ua}^{ub} g(-u, a) du` for `a > 0`, `0 <= ua <= ub`.
    fn integrated_positive(&self, a: f64, ua: f64, ub: f64) -> f64 {
        let start = ua.max(0.5 * a);
        if ub <= start {
            return 0.0;
        }
        let span = ub - start;
        let c = 4.0 * self.sigma * a;
        match self.kind {
            FixationKind::StepLimit => span,
            FixationKind::KimuraExp => {
                // g = 1 - exp(-w) with w = c (u - a/2); int (1 - e^-w) dw = phi(w).
                let w0 = c * (start - 0.5 * a);
                let w1 = c * (ub - 0.5 * a);
                (excess(w1) - excess(w0)) / c
            }
            FixationKind::HaldaneLinear => {
                // g = min(c (u - a/2), 1), saturating at u* = a/2 + 1/c.
                let sat = 0.5 * a + 1.0 / c;
                let lin_end = ub.min(sat);
                let mut total = 0.0;
                if lin_end > start {
                    let p = lin_end - 0.5 * a;
                    let q = start - 0.5 * a;
                    total += 0.5 * c * (p * p - q * q);
                }
                total + (ub - start.max(sat)).max(0.0)
            }
        }
    }
}

/// `phi(w) = w - 1 + e^-w`, accurate for small `w` where it behaves like `w^2/2`.
fn excess(w: f64) -> f64 {
    if w < 0.1 {
        // Alternating series w^2/2! - w^3/3! + ...; 12 terms reach full precision.
        let mut term = w * w / 2.0;
        let mut sum = 0.0;
        for k in 3..15 {
            sum += term;
            term *= -w / k as f64;
        }
        sum
    } else {
        w + (-w).exp_m1()
    }
}

impl FixationProbability for FixationModel {
    fn prob(&self, x: f64, alpha: f64) -> f64 {
        self.fixation_prob(x, alpha)
    }
}

/// Result of [`MomentFunctionals::lipschitz_check`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LipschitzReport {
    pub max_ratio: f64,
    pub c_k: f64,
    pub pairs_evaluated: usize,
    pub pass: bool,
}

/// Relative error at which a non-converged moment integral is still accepted.
pub const ACCEPT_REL: f64 = 1e-6;

/// `m(x)`, `V(x)`, `psi(x)` and their limits for a measure/model pair.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentFunctionals {
    measure: MutationMeasure,
    model: FixationModel,
    m_limit: f64,
    v_limit: f64,
    tol: Tolerance,
}

impl MomentFunctionals {
    pub fn new(measure: MutationMeasure, model: FixationModel) -> Self {
        let (m_limit, v_limit) = measure.positive_moments();
        MomentFunctionals {
            measure,
            model,
            m_limit,
            v_limit,
            tol: Tolerance::RELATIVE,
        }
    }

    pub fn with_tolerance(mut self, tol: Tolerance) -> Self {
        self.tol = tol;
        self
    }

    pub fn measure(&self) -> &MutationMeasure {
        &self.measure
    }

    pub fn model(&self) -> &FixationModel {
        &self.model
    }

    /// `(m, V)`, the moments of all beneficial mutations; either may be infinite.
    pub fn limits(&self) -> (f64, f64) {
        (self.m_limit, self.v_limit)
    }

    /// Integrates against the measure at the configured tolerance. Very deep
    /// lags put boundary layers only a few hundred ulps wide next to `2|x|`,
    /// where the requested relative accuracy may be out of reach; estimates
    /// whose error is still below [`ACCEPT_REL`] of the value are kept.
    fn integrate<F: Fn(f64) -> f64>(&self, f: F, domain: &Domain) -> Result<f64, MeasureError> {
        match self.measure.integrate_against(f, domain, self.tol) {
            Err(MeasureError::NonConvergent { value, error })
                if error <= ACCEPT_REL * value.abs() =>
            {
                Ok(value)
            }
            other => other,
        }
    }

    /// Side of the measure whose mutations can fix at lag `x`, and `|x|`.
    fn side(x: f64) -> (f64, f64) {
        (-x.signum(), x.abs())
    }

    fn domain(&self, sign: f64, lo: f64, hi: f64, u: f64) -> Domain {
        let breaks = self
            .model
            .magnitude_breaks(u)
            .into_iter()
            .map(|a| sign * a)
            .collect();
        if sign > 0.0 {
            Domain::new(lo, hi).with_breaks(breaks)
        } else {
            Domain::new(-hi, -lo).with_breaks(breaks)
        }
    }

    /// `int_{|a| in (0, 2|x|]} |a|^k g(x, a) nu(da)` on the fixing side.
    fn direct(&self, k: i32, x: f64) -> Result<f64, MeasureError> {
        let (sign, u) = Self::side(x);
        let domain = self.domain(sign, 0.0, 2.0 * u, u);
        let model = self.model;
        self.integrate(|a| a.abs().powi(k) * model.fixation_prob(x, a), &domain)
    }

    /// `int |a|^k (1 - g(x, a)) nu(da)` over the fixing side: the part of the
    /// limit moment not yet realised at lag `x`.
    pub fn deficit(&self, k: i32, x: f64) -> Result<f64, MeasureError> {
        let (sign, u) = Self::side(x);
        let top = 2.0 * u;
        let tail = self.measure.abs_moment_above(k as u32, top, sign);
        if u == 0.0 {
            return Ok(tail + self.measure.abs_moment(k as u32, 0.0, top.next_up(), sign));
        }
        let domain = self.domain(sign, 0.0, top, u);
        let model = self.model;
        let body = self.integrate(|a| a.abs().powi(k) * model.loss_prob(x, a), &domain)?;
        Ok(body + tail)
    }

    fn side_limit(&self, k: i32, sign: f64) -> f64 {
        self.measure.abs_moment(k as u32, 0.0, f64::INFINITY, sign)
    }

    /// `int |a|^k g(x, a) nu(da)` with the sign of `a^k` restored.
    fn moment(&self, k: i32, x: f64) -> Result<f64, MeasureError> {
        if x == 0.0 {
            return Ok(0.0);
        }
        let (sign, _) = Self::side(x);
        let limit = self.side_limit(k, sign);
        let magnitude = if limit.is_finite() {
            (limit - self.deficit(k, x)?).max(0.0)
        } else {
            self.direct(k, x)?
        };
        Ok(if k % 2 == 1 {
            sign * magnitude
        } else {
            magnitude
        })
    }

    /// Mean fixed-jump drift `m(x) = int a g(x, a) nu(da)`.
    pub fn m_of_x(&self, x: f64) -> Result<f64, MeasureError> {
        self.moment(1, x)
    }

    /// Jump variance rate `V(x) = int a^2 g(x, a) nu(da)`.
    pub fn v_of_x(&self, x: f64) -> Result<f64, MeasureError> {
        self.moment(2, x)
    }

    /// Net drift `psi(x) = m(x) - v`. For `x < 0` with finite `m` this is
    /// evaluated as `(m - v) - deficit`, exact in the gap even where `m(x)`
    /// and `v` agree to many digits.
    pub fn psi(&self, v: f64, x: f64) -> Result<f64, MeasureError> {
        if x < 0.0 && self.m_limit.is_finite() {
            return Ok((self.m_limit - v) - self.deficit(1, x)?);
        }
        Ok(self.m_of_x(x)? - v)
    }

    /// First lag `x = -2^k`, `k = 0..=max_k`, at which `m` has settled:
    /// `|m(x) - m(2x)| <= 1e-6 max(1, m(x))`.
    pub fn convergence_lag(&self, max_k: i32) -> Result<Option<f64>, MeasureError> {
        let mut x = -1.0;
        let mut mx = self.m_of_x(x)?;
        for _ in 0..=max_k {
            let m2 = self.m_of_x(2.0 * x)?;
            if (mx - m2).abs() <= 1e-6 * mx.abs().max(1.0) {
                return Ok(Some(x));
            }
            x *= 2.0;
            mx = m2;
        }
        Ok(None)
    }

    /// `int_lo^hi m(y) dy`, evaluated as `int a G(a; lo, hi) nu(da)` with the
    /// closed-form `G` of [`FixationModel::integrated_prob`].
    pub fn integrated_m(&self, lo: f64, hi: f64) -> Result<f64, MeasureError> {
        if hi < lo {
            return Ok(-self.integrated_m(hi, lo)?);
        }
        let reach_pos = 2.0 * (-lo).max(0.0);
        let reach_neg = 2.0 * hi.max(0.0);
        if reach_pos == 0.0 && reach_neg == 0.0 {
            return Ok(0.0);
        }
        let mut breaks = Vec::new();
        for y in [lo, hi] {
            let r = 2.0 * y.abs();
            if r > 0.0 {
                breaks.push(r);
                breaks.push(-r);
            }
        }
        let domain = Domain::new(-reach_neg, reach_pos).with_breaks(breaks);
        let model = self.model;
        self.integrate(|a| a * model.integrated_prob(a, lo, hi), &domain)
    }

    /// `int_{beta |x| <= |a| <= 2|x|} a^2 g(x, a) nu(da)` on the fixing side.
    pub fn upper_second_moment(&self, x: f64, beta: f64) -> Result<f64, MeasureError> {
        let (sign, u) = Self::side(x);
        let lo = beta * u;
        if x == 0.0 || lo >= 2.0 * u {
            return Ok(0.0);
        }
        let domain = self.domain(sign, lo, 2.0 * u, u);
        let model = self.model;
        self.integrate(|a| a * a * model.fixation_prob(x, a), &domain)
    }

    /// `int_K |a| |g(u, a) - g(w, a)| nu(da)`.
    fn lipschitz_numerator(&self, k: (f64, f64), u: f64, w: f64) -> Result<f64, MeasureError> {
        let mut breaks = Vec::new();
        for y in [u, w] {
            if y != 0.0 {
                let sign = -y.signum();
                breaks.extend(
                    self.model
                        .magnitude_breaks(y.abs())
                        .into_iter()
                        .map(|a| sign * a),
                );
                breaks.push(sign * 2.0 * y.abs());
            }
        }
        let domain = Domain::new(k.0, k.1).with_breaks(breaks);
        let model = self.model;
        self.measure.integrate_against(
            |a| a.abs() * (model.loss_prob(w, a) - model.loss_prob(u, a)).abs(),
            &domain,
            Tolerance::DEFAULT,
        )
    }

    /// Searches for the worst integrated Lipschitz ratio over lags in
    /// `[-R, R]`, `R = max |K|`, and compares it with `c_K = 4 sigma int_K a^2 nu`.
    ///
    /// Half of the pairs are drawn uniformly; the other half are close pairs
    /// with log-uniform separation, where difference quotients approach the
    /// local derivative.
    pub fn lipschitz_check<R: RngCore + ?Sized>(
        &self,
        k: (f64, f64),
        n_pairs: usize,
        rng: &mut R,
    ) -> Result<LipschitzReport, FixationError> {
        if self.model.kind != FixationKind::KimuraExp {
            return Err(FixationError::UnsupportedModel);
        }
        if !(k.0 < k.1) || !k.0.is_finite() || !k.1.is_finite() {
            return Err(FixationError::InvalidCompact(k.0, k.1));
        }
        let c_k = 4.0
            * self.model.sigma
            * self.measure.integrate_against(
                |a| a * a,
                &Domain::new(k.0, k.1),
                Tolerance::DEFAULT,
            )?;
        let radius = k.0.abs().max(k.1.abs());
        let mut max_ratio: f64 = 0.0;
        let mut evaluated = 0;
        for i in 0..n_pairs {
            let u = radius * (2.0 * uniform(rng) - 1.0);
            let w = if i % 2 == 0 {
                radius * (2.0 * uniform(rng) - 1.0)
            } else {
                let offset = radius * 10f64.powf(-6.0 * uniform(rng));
                let dir = if uniform(rng) < 0.5 { -1.0 } else { 1.0 };
                (u + dir * offset).clamp(-radius, radius)
            };
            if u == w {
                continue;
            }
            let ratio = self.lipschitz_numerator(k, u, w)? / (u - w).abs();
            max_ratio = max_ratio.max(ratio);
            evaluated += 1;
        }
        Ok(LipschitzReport {
            max_ratio,
            c_k,
            pairs_evaluated: evaluated,
            pass: max_ratio <= c_k * (1.0 + 1e-6),
        })
    }
}
