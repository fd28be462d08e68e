//! Pathwise functionals that confront a simulated path with exact identities.

use serde::Serialize;
use thiserror::Error;

use crate::fixation::MomentFunctionals;
use crate::measures::MeasureError;
use crate::quad::{self, Tolerance};

use super::{Event, EventKind, Scenario, Segment, Trajectory};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiagnosticError {
    #[error("path leaves the negative half-line at t = {0}")]
    WindowViolation(f64),
    #[error(transparent)]
    Measure(#[from] MeasureError),
}

/// `int_a^b m(X_s) ds` along one segment.
fn segment_drift(
    funcs: &MomentFunctionals,
    seg: &Segment,
    a: f64,
    b: f64,
) -> Result<f64, MeasureError> {
    if b <= a {
        return Ok(0.0);
    }
    let (xa, xb) = (seg.value(a), seg.value(b));
    if seg.is_linear() {
        if seg.rate == 0.0 || (xa - xb).abs() <= 1e-12 * xa.abs().max(1.0) {
            return Ok(funcs.m_of_x(0.5 * (xa + xb))? * (b - a));
        }
        // x(s) = xa - rate (s - a), so ds = -dy / rate.
        return Ok(funcs.integrated_m(xb, xa)? / seg.rate);
    }
    let breaks: Vec<f64> = seg
        .monotone_parts()
        .into_iter()
        .map(|(p, _)| p)
        .filter(|&p| p > a && p < b)
        .collect();
    let err = std::cell::Cell::new(None);
    let est = quad::integrate(
        |s| match funcs.m_of_x(seg.value(s)) {
            Ok(v) => v,
            Err(e) => {
                err.set(Some(e));
                f64::NAN
            }
        },
        a,
        b,
        &breaks,
        Tolerance::DEFAULT,
    );
    if let Some(e) = err.into_inner() {
        return Err(e);
    }
    Ok(est?.value)
}

fn functionals(sc: &Scenario) -> MomentFunctionals {
    MomentFunctionals::new(sc.simulated_measure(), sc.model)
}

/// `M_t = X_t - X_0 + v(t) - int_0^t m(X_s) ds` on the output grid.
///
/// Since `X_t - X_0 + v(t)` is exactly the sum of the fixed jumps, the
/// residual is computed as that sum minus the compensator, with `m` taken
/// for the simulated (truncated) measure.
pub fn martingale_residual(
    traj: &Trajectory,
    sc: &Scenario,
) -> Result<Vec<(f64, f64)>, MeasureError> {
    let funcs = functionals(sc);
    let fixed: Vec<&Event> = traj.fixed_events().collect();
    let mut out = Vec::with_capacity(traj.samples.len());
    let mut seg_idx = 0;
    let mut compensator_done = 0.0;
    let mut jump_idx = 0;
    let mut jumps = 0.0;
    for &(t, _) in &traj.samples {
        while seg_idx < traj.segments.len() && traj.segments[seg_idx].t1 <= t {
            let seg = &traj.segments[seg_idx];
            compensator_done += segment_drift(&funcs, seg, seg.t0, seg.t1)?;
            seg_idx += 1;
        }
        let partial = match traj.segments.get(seg_idx) {
            Some(seg) if seg.t0 < t => segment_drift(&funcs, seg, seg.t0, t)?,
            _ => 0.0,
        };
        while jump_idx < fixed.len() && fixed[jump_idx].t <= t {
            jumps += fixed[jump_idx].alpha;
            jump_idx += 1;
        }
        out.push((t, jumps - (compensator_done + partial)));
    }
    Ok(out)
}

/// Terminal value `M_T` of [`martingale_residual`], without the grid.
pub fn martingale_terminal(traj: &Trajectory, sc: &Scenario) -> Result<f64, MeasureError> {
    let funcs = functionals(sc);
    let mut compensator = 0.0;
    for seg in &traj.segments {
        compensator += segment_drift(&funcs, seg, seg.t0, seg.t1)?;
    }
    let jumps: f64 = traj.fixed_events().map(|e| e.alpha).sum();
    Ok(jumps - compensator)
}

/// Largest discrepancy on the output grid in
/// `X_t^2 = X_0^2 + 2 int X_{s-} dX_s + sum (dX_s)^2`.
///
/// The continuous part of `2 int X dX` is evaluated segment by segment as
/// `x(t1)^2 - x(t0)^2`; the jump part as `2 X_{s-} dX_s` from the event log.
pub fn quadratic_variation_check(traj: &Trajectory) -> f64 {
    let fixed: Vec<&Event> = traj.fixed_events().collect();
    let mut rhs_done = traj.x0 * traj.x0;
    let mut seg_idx = 0;
    let mut jump_idx = 0;
    let mut worst: f64 = 0.0;
    for &(t, x) in &traj.samples {
        while seg_idx < traj.segments.len() && traj.segments[seg_idx].t1 <= t {
            let seg = &traj.segments[seg_idx];
            let (a, b) = (seg.x0, seg.x1());
            rhs_done += b * b - a * a;
            seg_idx += 1;
        }
        while jump_idx < fixed.len() && fixed[jump_idx].t <= t {
            let e = fixed[jump_idx];
            rhs_done += 2.0 * e.x_before * e.alpha + e.alpha * e.alpha;
            jump_idx += 1;
        }
        let partial = match traj.segments.get(seg_idx) {
            Some(seg) if seg.t0 < t => {
                let b = seg.value(t);
                b * b - seg.x0 * seg.x0
            }
            _ => 0.0,
        };
        worst = worst.max((x * x - (rhs_done + partial)).abs());
    }
    worst
}

/// Tolerance for [`quadratic_variation_check`]: `1e-9 max(1, X_max^2)`.
pub fn quadratic_variation_tolerance(traj: &Trajectory) -> f64 {
    let (lo, hi) = traj.x_range();
    let xmax = lo.abs().max(hi.abs());
    1e-9 * (xmax * xmax).max(1.0)
}

/// Test functions for the pathwise Itô inequality.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "phi", rename_all = "snake_case")]
pub enum Lyapunov {
    /// `log|x|` on `x < 0`; its second derivative `-1/x^2` is decreasing.
    LogAbs,
    /// `|x|^-p` for `x <= -1`, continued as the quadratic with matching value
    /// and first two derivatives for `x >= -1`; its second derivative is increasing.
    Power { p: f64 },
}

impl Lyapunov {
    fn value(&self, x: f64) -> f64 {
        match *self {
            Lyapunov::LogAbs => x.abs().ln(),
            Lyapunov::Power { p } => {
                if x <= -1.0 {
                    (-x).powf(-p)
                } else {
                    let y = x + 1.0;
                    1.0 + p * y + 0.5 * p * (p + 1.0) * y * y
                }
            }
        }
    }

    fn d1(&self, x: f64) -> f64 {
        match *self {
            Lyapunov::LogAbs => 1.0 / x,
            Lyapunov::Power { p } => {
                if x <= -1.0 {
                    p * (-x).powf(-p - 1.0)
                } else {
                    p + p * (p + 1.0) * (x + 1.0)
                }
            }
        }
    }

    fn d2(&self, x: f64) -> f64 {
        match *self {
            Lyapunov::LogAbs => -1.0 / (x * x),
            Lyapunov::Power { p } => {
                if x <= -1.0 {
                    p * (p + 1.0) * (-x).powf(-p - 2.0)
                } else {
                    p * (p + 1.0)
                }
            }
        }
    }

    fn second_derivative_increasing(&self) -> bool {
        matches!(self, Lyapunov::Power { .. })
    }
}

/// Outcome of [`ito_inequality_check`].
///
/// With `L_t = Phi(X_t) - Phi(X_0) - int Phi'(X_{s-}) dX_s`, positive jumps and
/// `Phi''` monotone, Taylor's formula sandwiches `L_t` between
/// `1/2 sum Phi''(X_{s-}) dX^2` and `1/2 sum Phi''(X_s) dX^2`; which bound is
/// the upper one depends on the direction of monotonicity. Both bounds are
/// checked after every jump.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ItoReport {
    pub lhs: f64,
    /// `1/2 sum Phi''(X_{s-}) (dX_s)^2`.
    pub pre_jump_sum: f64,
    /// `1/2 sum Phi''(X_s) (dX_s)^2`.
    pub post_jump_sum: f64,
    /// Most negative slack over all checkpoints (0 when never violated).
    pub worst_slack: f64,
    pub jumps: usize,
    pub holds: bool,
}

/// Checks the pathwise Itô inequality for `phi` along `traj`.
pub fn ito_inequality_check(
    traj: &Trajectory,
    phi: Lyapunov,
) -> Result<ItoReport, DiagnosticError> {
    if phi == Lyapunov::LogAbs {
        let (_, hi) = traj.x_range();
        if hi >= 0.0 {
            let t = traj.level_transitions(0.0).first().map_or(0.0, |tr| tr.t);
            return Err(DiagnosticError::WindowViolation(t));
        }
    }
    let increasing = phi.second_derivative_increasing();
    let mut cont = 0.0; // int Phi'(X) dX over continuous parts = sum of Phi increments
    let mut jump_lin = 0.0;
    let mut pre = 0.0;
    let mut post = 0.0;
    let mut scale = phi.value(traj.x0).abs();
    let mut worst: f64 = 0.0;
    let mut jumps = 0;
    let fixed: Vec<&Event> = traj
        .events
        .iter()
        .filter(|e| e.kind == EventKind::Fixed)
        .collect();
    let mut jump_idx = 0;

    let check = |x_now: f64, cont: f64, jump_lin: f64, pre: f64, post: f64, scale: f64| {
        let lhs = phi.value(x_now) - phi.value(traj.x0) - cont - jump_lin;
        let (low, high) = if increasing { (pre, post) } else { (post, pre) };
        let tol = 1e-9 * (1.0 + scale);
        let slack = (high - lhs).min(lhs - low) + tol;
        (lhs, slack.min(0.0))
    };

    let mut lhs = 0.0;
    for seg in &traj.segments {
        while jump_idx < fixed.len() && fixed[jump_idx].t <= seg.t0 {
            let e = fixed[jump_idx];
            let d = e.alpha;
            jump_lin += phi.d1(e.x_before) * d;
            pre += 0.5 * phi.d2(e.x_before) * d * d;
            post += 0.5 * phi.d2(e.x_after) * d * d;
            scale += (phi.d1(e.x_before) * d).abs()
                + (phi.value(e.x_after) - phi.value(e.x_before)).abs();
            jumps += 1;
            jump_idx += 1;
            let (l, s) = check(e.x_after, cont, jump_lin, pre, post, scale);
            lhs = l;
            worst = worst.min(s);
        }
        let (a, b) = (phi.value(seg.x0), phi.value(seg.x1()));
        cont += b - a;
        scale += (b - a).abs();
    }
    // Jumps after the last segment start (none for complete paths) and the end point.
    while jump_idx < fixed.len() {
        let e = fixed[jump_idx];
        let d = e.alpha;
        jump_lin += phi.d1(e.x_before) * d;
        pre += 0.5 * phi.d2(e.x_before) * d * d;
        post += 0.5 * phi.d2(e.x_after) * d * d;
        jumps += 1;
        jump_idx += 1;
    }
    let (l, s) = check(traj.terminal(), cont, jump_lin, pre, post, scale);
    lhs = if traj.segments.is_empty() { lhs } else { l };
    worst = worst.min(s);
    Ok(ItoReport {
        lhs,
        pre_jump_sum: pre,
        post_jump_sum: post,
        worst_slack: worst,
        jumps,
        holds: worst == 0.0,
    })
}

/// The initial part of `traj` on which it stays strictly negative, or `None`
/// if it starts at or above zero.
pub fn negative_window(traj: &Trajectory) -> Option<Trajectory> {
    if traj.x0 >= 0.0 {
        return None;
    }
    match traj.level_transitions(0.0).first() {
        None => Some(traj.clone()),
        Some(tr) => Some(truncated(traj, tr.t)),
    }
}

/// `traj` restricted to `[0, t_end)`; a jump exactly at `t_end` is excluded.
pub fn truncated(traj: &Trajectory, t_end: f64) -> Trajectory {
    let mut segments: Vec<Segment> = traj
        .segments
        .iter()
        .filter(|s| s.t0 < t_end)
        .copied()
        .collect();
    if let Some(last) = segments.last_mut() {
        last.t1 = last.t1.min(t_end);
    }
    let events = traj
        .events
        .iter()
        .filter(|e| e.t < t_end)
        .copied()
        .collect();
    let samples = traj
        .samples
        .iter()
        .filter(|(t, _)| *t < t_end)
        .copied()
        .collect();
    Trajectory {
        end_time: t_end.min(traj.end_time),
        segments,
        events,
        samples,
        ..traj.clone()
    }
}
