//! Numerical evidence for the asymptotic conditions that decide the boundary
//! case `m = vbar`.
//!
//! Every condition is a statement about a limit as `x -> -inf`. It is judged
//! on the geometric grid `x = -2^k` from the trend of a margin over the last
//! few grid points: monotone margins of one sign decide the condition,
//! anything else is reported as inconclusive rather than guessed.

use serde::Serialize;

use crate::fixation::MomentFunctionals;
use crate::measures::MeasureError;

use super::serde_inf;

/// Points at the far end of the grid on which trends are judged.
pub const TREND_WINDOW: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ConditionId {
    Cond1,
    Cond2,
    Prop6,
    LemTo0,
    #[serde(rename = "assumptionA")]
    AssumptionA,
    #[serde(rename = "assumptionB")]
    AssumptionB,
}

impl ConditionId {
    /// The serialised name.
    pub fn as_str(self) -> &'static str {
        match self {
            ConditionId::Cond1 => "cond1",
            ConditionId::Cond2 => "cond2",
            ConditionId::Prop6 => "prop6",
            ConditionId::LemTo0 => "lem_to0",
            ConditionId::AssumptionA => "assumptionA",
            ConditionId::AssumptionB => "assumptionB",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Satisfied {
    Yes,
    No,
    Inconclusive,
}

impl Satisfied {
    pub fn as_str(self) -> &'static str {
        match self {
            Satisfied::Yes => "yes",
            Satisfied::No => "no",
            Satisfied::Inconclusive => "inconclusive",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Trend {
    Increasing,
    Decreasing,
    Flat,
    NonMonotone,
}

/// Evaluation of one condition on the grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionVerdict {
    pub id: ConditionId,
    /// Lags, strictly decreasing.
    pub grid: Vec<f64>,
    /// Left-hand quantity of the condition at each lag.
    pub lhs: Vec<f64>,
    /// Right-hand quantity at each lag.
    #[serde(serialize_with = "serde_inf::vec")]
    pub rhs: Vec<f64>,
    /// Margin by which the condition holds (positive) or fails (negative).
    #[serde(serialize_with = "serde_inf::vec")]
    pub values: Vec<f64>,
    #[serde(serialize_with = "serde_inf::scalar")]
    pub limit_estimate: f64,
    pub trend: Trend,
    #[serde(serialize_with = "serde_inf::scalar")]
    pub margin: f64,
    pub satisfied: Satisfied,
    pub note: Option<String>,
}

impl ConditionVerdict {
    /// Evidence as CSV rows `condition,x,lhs,rhs,value` (no header).
    pub fn write_csv_rows<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        let id = self.id.as_str();
        for i in 0..self.grid.len() {
            writeln!(
                w,
                "{id},{},{},{},{}",
                self.grid[i], self.lhs[i], self.rhs[i], self.values[i]
            )?;
        }
        Ok(())
    }
}

/// `x = -2^k` for `k = 3..=24`.
pub fn default_grid() -> Vec<f64> {
    (3..=24).map(|k| -(2f64.powi(k))).collect()
}

/// Direction of the last [`TREND_WINDOW`] values, up to relative noise `1e-9`.
pub fn trend(values: &[f64]) -> Trend {
    let tail = &values[values.len().saturating_sub(TREND_WINDOW)..];
    if tail.iter().any(|v| !v.is_finite()) {
        return Trend::NonMonotone;
    }
    let scale = tail.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    let noise = 1e-9 * scale;
    let diffs: Vec<f64> = tail.windows(2).map(|w| w[1] - w[0]).collect();
    let up = diffs.iter().all(|&d| d >= -noise);
    let down = diffs.iter().all(|&d| d <= noise);
    match (up, down) {
        (true, true) => Trend::Flat,
        (true, false) => Trend::Increasing,
        (false, true) => Trend::Decreasing,
        (false, false) => Trend::NonMonotone,
    }
}

/// Limit of a monotone sequence: Aitken's extrapolation when increments
/// shrink, otherwise divergence in the direction of the trend.
pub fn limit_estimate(values: &[f64]) -> f64 {
    let n = values.len();
    if n == 0 {
        return f64::NAN;
    }
    if n < 3 {
        return values[n - 1];
    }
    let (a, b, c) = (values[n - 3], values[n - 2], values[n - 1]);
    let (d1, d2) = (b - a, c - b);
    if d2 == 0.0 {
        return c;
    }
    if d2.abs() >= d1.abs() {
        return if d2 > 0.0 {
            f64::INFINITY
        } else {
            f64::NEG_INFINITY
        };
    }
    let denom = d2 - d1;
    c - d2 * d2 / denom
}

/// Decides a margin series: it must be monotone on the window, of one sign
/// there, and extrapolate to the same sign.
fn judge(values: &[f64]) -> (Trend, f64, Satisfied) {
    let tr = trend(values);
    let limit = limit_estimate(values);
    let tail = &values[values.len().saturating_sub(TREND_WINDOW)..];
    let sat = if tr == Trend::NonMonotone {
        Satisfied::Inconclusive
    } else if tail.iter().all(|&v| v > 0.0) && limit > 0.0 {
        Satisfied::Yes
    } else if tail.iter().all(|&v| v < 0.0) && limit < 0.0 {
        Satisfied::No
    } else {
        Satisfied::Inconclusive
    };
    (tr, limit, sat)
}

fn verdict(
    id: ConditionId,
    grid: &[f64],
    lhs: Vec<f64>,
    rhs: Vec<f64>,
    values: Vec<f64>,
    note: Option<String>,
) -> ConditionVerdict {
    let (trend, limit_estimate, satisfied) = judge(&values);
    ConditionVerdict {
        id,
        grid: grid.to_vec(),
        lhs,
        rhs,
        margin: values.last().copied().unwrap_or(f64::NAN),
        values,
        limit_estimate,
        trend,
        satisfied,
        note,
    }
}

/// `|x| psi(x)` (signed) and `V(x)` on the grid for drift `v`.
fn scaled_drift(
    funcs: &MomentFunctionals,
    v: f64,
    grid: &[f64],
) -> Result<(Vec<f64>, Vec<f64>), MeasureError> {
    let mut xpsi = Vec::with_capacity(grid.len());
    let mut var = Vec::with_capacity(grid.len());
    for &x in grid {
        xpsi.push(x.abs() * funcs.psi(v, x)?);
        var.push(funcs.v_of_x(x)?);
    }
    Ok((xpsi, var))
}

/// `limsup |x psi(x)| < V/2`, judged with `V(x)` in place of `V` so that an
/// infinite `V` does not make the condition vacuous: the margin is
/// `V(x)/2 - |x psi(x)|`.
pub fn check_cond1(
    funcs: &MomentFunctionals,
    v: f64,
    grid: &[f64],
) -> Result<ConditionVerdict, MeasureError> {
    let (xpsi, var) = scaled_drift(funcs, v, grid)?;
    let lhs: Vec<f64> = xpsi.iter().map(|a| a.abs()).collect();
    let rhs: Vec<f64> = var.iter().map(|w| 0.5 * w).collect();
    let values = rhs.iter().zip(&lhs).map(|(r, l)| r - l).collect();
    let note = funcs
        .limits()
        .1
        .is_infinite()
        .then(|| "V is infinite; compared against V(x)/2 along the grid".to_string());
    Ok(verdict(ConditionId::Cond1, grid, lhs, rhs, values, note))
}

/// `liminf |x psi(x)| > V/2`; requires `V < inf`.
pub fn check_cond2(
    funcs: &MomentFunctionals,
    v: f64,
    grid: &[f64],
) -> Result<ConditionVerdict, MeasureError> {
    let (xpsi, var) = scaled_drift(funcs, v, grid)?;
    let lhs: Vec<f64> = xpsi.iter().map(|a| a.abs()).collect();
    let rhs: Vec<f64> = var.iter().map(|w| 0.5 * w).collect();
    let values: Vec<f64> = lhs.iter().zip(&rhs).map(|(l, r)| l - r).collect();
    let mut out = verdict(ConditionId::Cond2, grid, lhs, rhs, values, None);
    if funcs.limits().1.is_infinite() {
        out.satisfied = Satisfied::No;
        out.note = Some("V is infinite, which the condition excludes".into());
    }
    Ok(out)
}

/// Evidence that a sequence tends to zero: identically zero on the window,
/// or positive with log-log slope below `-0.05`.
fn tends_to_zero(grid: &[f64], q: &[f64]) -> (bool, f64) {
    let start = q.len().saturating_sub(TREND_WINDOW);
    let (gx, gq) = (&grid[start..], &q[start..]);
    if gq.iter().all(|&v| v == 0.0) {
        return (true, f64::NEG_INFINITY);
    }
    if gq.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
        return (false, f64::NAN);
    }
    let xs: Vec<f64> = gx.iter().map(|x| x.abs().ln()).collect();
    let ys: Vec<f64> = gq.iter().map(|v| v.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let slope = sxy / sxx;
    (slope < -0.05, slope)
}

/// Search grid for the exponent in the Lyapunov argument.
pub const P_GRID: [f64; 9] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9];

/// Evidence for the transient boundary case.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Cond2Prop6 {
    pub cond2: ConditionVerdict,
    /// `|x|^(p+2) int_{beta|x|}^{2|x|} a^2 g(x, a) nu(da)` for the first
    /// exponent that works (or the largest tried).
    pub prop6: ConditionVerdict,
    /// Smallest `p <= p0` on the search grid for which both the strengthened
    /// drift bound `|x psi| > (2p + 1) V(x)/2` and the tail decay hold.
    pub p: Option<f64>,
    pub betas: [f64; 2],
    pub satisfied: Satisfied,
}

/// Checks `liminf |x psi| > V/2` together with the tail condition at
/// `beta in {beta0/2, beta0/4}`, searching `p` upward over [`P_GRID`] capped at `p0`.
pub fn check_cond2_prop6(
    funcs: &MomentFunctionals,
    v: f64,
    grid: &[f64],
    p0: f64,
    beta0: f64,
) -> Result<Cond2Prop6, MeasureError> {
    let cond2 = check_cond2(funcs, v, grid)?;
    let betas = [0.5 * beta0, 0.25 * beta0];
    let mut tails: Vec<Vec<f64>> = Vec::new();
    for &beta in &betas {
        let mut t = Vec::with_capacity(grid.len());
        for &x in grid {
            t.push(funcs.upper_second_moment(x, beta)?);
        }
        tails.push(t);
    }
    let (xpsi, var) = scaled_drift(funcs, v, grid)?;
    let ps: Vec<f64> = P_GRID.iter().copied().filter(|&p| p <= p0).collect();
    let ps = if ps.is_empty() { vec![p0] } else { ps };
    let mut chosen = None;
    let mut last = None;
    for &p in &ps {
        let sup_margin: Vec<f64> = xpsi
            .iter()
            .zip(&var)
            .map(|(a, w)| a.abs() - (2.0 * p + 1.0) * 0.5 * w)
            .collect();
        let sup_ok = judge(&sup_margin).2 == Satisfied::Yes;
        let mut decay_ok = true;
        let mut slopes = Vec::new();
        let mut q_first = Vec::new();
        for (i, tail) in tails.iter().enumerate() {
            let q: Vec<f64> = grid
                .iter()
                .zip(tail)
                .map(|(x, s)| x.abs().powf(p + 2.0) * s)
                .collect();
            let (ok, slope) = tends_to_zero(grid, &q);
            decay_ok &= ok;
            slopes.push(slope);
            if i == 0 {
                q_first = q;
            }
        }
        let verdict_p = ConditionVerdict {
            id: ConditionId::Prop6,
            grid: grid.to_vec(),
            lhs: q_first.clone(),
            rhs: vec![0.0; grid.len()],
            limit_estimate: if decay_ok {
                0.0
            } else {
                limit_estimate(&q_first)
            },
            trend: trend(&q_first),
            margin: -slopes[0],
            values: q_first,
            satisfied: if decay_ok {
                Satisfied::Yes
            } else {
                Satisfied::No
            },
            note: Some(format!(
                "p = {p}; log-log slopes at beta = {:?}: {:?}; drift bound (2p+1)V(x)/2 {}",
                betas,
                slopes,
                if sup_ok { "holds" } else { "fails" }
            )),
        };
        if sup_ok && decay_ok {
            chosen = Some((p, verdict_p));
            break;
        }
        last = Some(verdict_p);
    }
    let (p, prop6) = match chosen {
        Some((p, v)) => (Some(p), v),
        None => (None, last.expect("at least one exponent tried")),
    };
    let satisfied = match (cond2.satisfied, p) {
        (Satisfied::Yes, Some(_)) => Satisfied::Yes,
        (Satisfied::No, _) => Satisfied::No,
        _ => Satisfied::Inconclusive,
    };
    Ok(Cond2Prop6 {
        cond2,
        prop6,
        p,
        betas,
        satisfied,
    })
}

/// `V(x)/|x| -> 0`: decreasing on the window with negative log-log slope.
pub fn check_lem_to0(
    funcs: &MomentFunctionals,
    grid: &[f64],
) -> Result<ConditionVerdict, MeasureError> {
    let mut ratio = Vec::with_capacity(grid.len());
    for &x in grid {
        ratio.push(funcs.v_of_x(x)? / x.abs());
    }
    let (to_zero, slope) = tends_to_zero(grid, &ratio);
    let tr = trend(&ratio);
    let satisfied = if to_zero && matches!(tr, Trend::Decreasing | Trend::Flat) {
        Satisfied::Yes
    } else if tr == Trend::NonMonotone {
        Satisfied::Inconclusive
    } else {
        Satisfied::No
    };
    Ok(ConditionVerdict {
        id: ConditionId::LemTo0,
        grid: grid.to_vec(),
        lhs: ratio.clone(),
        rhs: vec![0.0; grid.len()],
        limit_estimate: if to_zero { 0.0 } else { limit_estimate(&ratio) },
        trend: tr,
        margin: -slope,
        values: ratio,
        satisfied,
        note: None,
    })
}

/// Assumption A: `liminf |x| psi_sup(x) > -V/2` with `psi_sup = m(x) - v_sup`.
/// Margin `|x| psi_sup(x) + V(x)/2`.
pub fn check_assumption_a(
    funcs: &MomentFunctionals,
    v_sup: f64,
    grid: &[f64],
) -> Result<ConditionVerdict, MeasureError> {
    let (xpsi, var) = scaled_drift(funcs, v_sup, grid)?;
    let rhs: Vec<f64> = var.iter().map(|w| -0.5 * w).collect();
    let values = xpsi.iter().zip(&rhs).map(|(l, r)| l - r).collect();
    Ok(verdict(
        ConditionId::AssumptionA,
        grid,
        xpsi,
        rhs,
        values,
        None,
    ))
}

/// Assumption B: `limsup |x| psi_inf(x) < -V/2` with `psi_inf = m(x) - v_inf`.
/// Margin `-V(x)/2 - |x| psi_inf(x)`.
pub fn check_assumption_b(
    funcs: &MomentFunctionals,
    v_inf: f64,
    grid: &[f64],
) -> Result<ConditionVerdict, MeasureError> {
    let (xpsi, var) = scaled_drift(funcs, v_inf, grid)?;
    let rhs: Vec<f64> = var.iter().map(|w| -0.5 * w).collect();
    let values = xpsi.iter().zip(&rhs).map(|(l, r)| r - l).collect();
    let mut out = verdict(ConditionId::AssumptionB, grid, xpsi, rhs, values, None);
    if funcs.limits().1.is_infinite() {
        out.satisfied = Satisfied::No;
        out.note = Some("V is infinite, which the condition excludes".into());
    }
    Ok(out)
}
